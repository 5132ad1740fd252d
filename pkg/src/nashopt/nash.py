"""Bargaining-based gradient aggregation.

Given a d x K gradient matrix G, find strictly positive task weights alpha
with  (G^T G) alpha = 1/alpha  (element-wise reciprocal) and return the
joint update direction G alpha. The weights are computed on the
column-normalized Gram matrix (the fixed point transforms as alpha_i ->
alpha_i / ||g_i|| under column scaling), which makes the solver exactly
invariant to per-task gradient rescaling.

Pipeline: feasibility initialization, a convex surrogate program
(minimize sum_i beta_i subject to alpha_i * beta_i >= 1), and a
concave-convex refinement loop, each solved by a log-barrier interior
method with damped Newton steps. A final Newton polish on the fixed-point
equations tightens the residual to near machine precision.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .errors import ContractError, DegeneracyError, SolverFailure
from .linalg import as_matrix, as_vector, gram, smallest_singular_value

__all__ = [
    "NashConfig",
    "NashSolution",
    "SolveStatus",
    "solve",
    "solve_convex_surrogate",
    "ccp_refine",
    "feasibility_init",
    "fixed_point_residual",
]


class SolveStatus(enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class NashConfig:
    """Tolerances and iteration budgets for the weight solver."""

    ccp_max_iters: int = 20
    residual_tol: float = 1e-6
    subproblem_tol: float = 1e-8
    barrier_mu_init: float = 1.0
    barrier_shrink: float = 0.1
    alpha_floor: float = 1e-12
    sigma_k_threshold: float = 1e-10

    def __post_init__(self):
        if self.ccp_max_iters < 0:
            raise ContractError("ccp_max_iters must be >= 0")
        for name in ("residual_tol", "subproblem_tol", "barrier_mu_init",
                     "alpha_floor", "sigma_k_threshold"):
            if getattr(self, name) <= 0.0:
                raise ContractError(f"{name} must be strictly positive")
        if not 0.0 < self.barrier_shrink < 1.0:
            raise ContractError("barrier_shrink must be in (0, 1)")


@dataclass(frozen=True)
class NashSolution:
    """Solved task weights plus diagnostics.

    ``alpha`` is all-zero and ``phi_value`` NaN when status is DEGENERATE;
    the direction then falls back to the min-norm convex combination.
    """

    alpha: np.ndarray
    direction: np.ndarray
    residual_inf: float
    phi_value: float
    ccp_iters_used: int
    status: SolveStatus


def fixed_point_residual(M, alpha):
    """max_i | alpha_i * (M alpha)_i - 1 |."""
    return float(np.max(np.abs(alpha * (M @ alpha) - 1.0)))


def _phi(M, alpha):
    """phi(alpha) = sum_i log alpha_i + log beta_i, beta = M alpha."""
    return float(np.sum(np.log(alpha)) + np.sum(np.log(M @ alpha)))


def _barrier_minimize(M, c, alpha, cfg, newton_cap=40, ls_cap=45):
    """Minimize c^T a - mu * sum_i(log phi_i(a) + log a_i) over the
    strictly feasible region, following the central path down to
    mu <= cfg.subproblem_tol.

    ``alpha`` must be strictly feasible (a > 0, beta > 0, phi > 0).
    """
    a = alpha.copy()
    mu = cfg.barrier_mu_init
    floor = cfg.alpha_floor
    idx = np.arange(len(a))
    while True:
        final_stage = mu <= cfg.subproblem_tol
        # intermediate stages only need rough centering; the last one is tight
        decrement_tol = 1e-11 if final_stage else 1e-6
        for _ in range(newton_cap):
            b = M @ a
            la = np.log(np.maximum(a, floor))
            phi = la + np.log(np.maximum(b, floor))
            s = 1.0 / phi
            inv_a = 1.0 / a
            W = M / b[None, :]
            V = W.copy()
            V[idx, idx] += inv_a
            g = c - mu * (s * inv_a + M @ (s / b)) - mu * inv_a
            H = (V * (s * s)) @ V.T + (W * s) @ W.T
            H[idx, idx] += (s + 1.0) * inv_a * inv_a
            H *= mu
            try:
                p = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                p = -g
            lam2 = -float(g @ p)
            if lam2 <= decrement_tol * max(1.0, abs(float(c @ a))):
                break
            f0 = float(c @ a) - mu * (float(np.sum(np.log(phi))) + float(la.sum()))
            t = 1.0
            accepted = False
            for _ in range(ls_cap):
                an = a + t * p
                if an.min() > floor:
                    bn = M @ an
                    if bn.min() > floor:
                        phin = np.log(an) + np.log(bn)
                        if phin.min() > 0.0:
                            fn = float(c @ an) - mu * (
                                float(np.sum(np.log(phin))) + float(np.sum(np.log(an)))
                            )
                            if fn <= f0 - 1e-4 * t * lam2:
                                accepted = True
                                break
                t *= 0.5
            if not accepted:
                break
            a = an
        if final_stage:
            return a
        mu *= cfg.barrier_shrink


def _newton_polish(M, alpha, max_iters=10, target=1e-14):
    """Damped Newton on a .* (M a) - 1 = 0; only accepts residual decreases."""
    a = alpha.copy()
    for _ in range(max_iters):
        b = M @ a
        r = a * b - 1.0
        rinf = np.max(np.abs(r))
        if rinf < target:
            break
        J = np.diag(b) + a[:, None] * M
        try:
            d = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        moved = False
        for _ in range(40):
            an = a + t * d
            if an.min() > 0.0 and fixed_point_residual(M, an) < rinf:
                a, moved = an, True
                break
            t *= 0.5
        if not moved:
            break
    return a


def _center_start(M, alpha, target=0.5):
    """Scale a feasible alpha up so min_i phi_i >= target.

    phi_i(c * a) = 2 log c + phi_i(a), so one global factor recenters the
    start without losing feasibility.
    """
    phi_min = float(np.min(np.log(alpha) + np.log(M @ alpha)))
    if phi_min < target:
        alpha = alpha * np.exp((target - phi_min) / 2.0)
    return alpha


def feasibility_init(M):
    """A strictly feasible starting point: alpha > 0 with alpha_i*beta_i >= 1.

    Starts from alpha_i = 1/sqrt(M_ii) (exact for orthogonal gradients).
    If some beta_i <= 0, a smoothed max-min ascent (log-sum-exp with
    temperature 1e-3) pushes all beta_i positive; a single global rescale
    then forces phi_i >= 0 for every i.

    Raises DegeneracyError when no alpha > 0 achieves beta > 0.
    """
    M = as_matrix(M, "gram")
    K = M.shape[0]
    diag = np.diag(M)
    if np.any(diag <= 0.0):
        raise DegeneracyError("gram matrix has a non-positive diagonal entry")
    n = np.sqrt(diag)
    Mn = M / np.outer(n, n)
    a = np.ones(K)
    b = Mn @ a
    if b.min() <= 0.0:
        a = _phase0_positive_beta(Mn, a)
        if a is None:
            raise DegeneracyError("no common descent direction in the gradient cone")
        b = Mn @ a
        if b.min() <= 0.0:
            raise DegeneracyError("no common descent direction in the gradient cone")
    # rescale until phi >= 0 holds in float arithmetic as well; beta is a
    # near-cancelling sum for strongly conflicting gradients, so a single
    # pass with a fixed margin can land a hair below zero on re-evaluation
    margin = 1e-9
    for _ in range(8):
        phi_min = float(np.min(np.log(a) + np.log(b)))
        if phi_min >= 0.0:
            break
        a = a * np.exp(-phi_min / 2.0 + margin)
        b = Mn @ a
        margin *= 100.0
    return a / n


def _phase0_positive_beta(Mn, a, target=1e-3):
    """Maximize the smoothed minimum of beta = Mn a over a > 0.

    Damped Newton on the log-sum-exp relaxation, annealing the temperature
    down to 1e-3, with a weak log-barrier keeping a strictly positive.
    """
    K = Mn.shape[0]
    idx = np.arange(K)
    for T in (1.0, 0.1, 0.01, 1e-3):
        mu = 1e-6
        for _ in range(60):
            b = Mn @ a
            if b.min() > target:
                return a
            z = -b / T
            zm = z.max()
            e = np.exp(z - zm)
            w = e / e.sum()
            g = -(Mn @ w) - mu / a
            Mw = Mn @ w
            H = (Mn * w) @ Mn.T / T - np.outer(Mw, Mw) / T
            H[idx, idx] += mu / a**2 + 1e-12
            try:
                p = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                p = -g
            lam2 = -float(g @ p)
            if lam2 < 1e-16:
                break
            f0 = T * (np.log(e.sum()) + zm) - mu * float(np.sum(np.log(a)))
            t = 1.0
            ok = False
            for _ in range(50):
                an = a + t * p
                if an.min() > 0.0:
                    zn = -(Mn @ an) / T
                    znm = zn.max()
                    fn = T * (np.log(np.sum(np.exp(zn - znm))) + znm) - mu * float(
                        np.sum(np.log(an))
                    )
                    if fn <= f0 - 1e-4 * t * lam2:
                        ok = True
                        break
                t *= 0.5
            if not ok:
                break
            a = an
            nrm = float(np.linalg.norm(a))
            if nrm > 1e6:
                a *= 1e6 / nrm
    return a if (Mn @ a).min() > 0.0 else None


def solve_convex_surrogate(M, alpha0, cfg=None):
    """KKT point of  min sum_i beta_i  s.t.  phi_i(alpha) >= 0, alpha > 0.

    ``alpha0`` must be strictly feasible; run feasibility_init first.
    """
    cfg = cfg or NashConfig()
    M = as_matrix(M, "gram")
    a0 = as_vector(alpha0, "alpha0")
    if a0.min() <= 0.0:
        raise ContractError("alpha0 must be strictly positive")
    b0 = M @ a0
    if b0.min() <= 0.0 or np.min(np.log(a0) + np.log(b0)) < -1e-12:
        raise ContractError("alpha0 is not feasible (alpha_i * beta_i >= 1 required)")
    a = _center_start(M, a0)
    c = M @ np.ones(M.shape[0])
    return _barrier_minimize(M, c, a, cfg)


def ccp_refine(M, alpha, cfg=None):
    """Concave-convex refinement of the surrogate solution.

    Each iteration linearizes phi around the current iterate, adds the
    linear term to the surrogate objective, and re-solves with the same
    barrier machinery. Stops at the first iterate whose fixed-point
    residual meets cfg.residual_tol; the combined objective
    sum_i beta_i + phi is kept non-increasing (iterates that would raise
    it are rejected, which only happens at the numerical floor).
    """
    cfg = cfg or NashConfig()
    a, _ = _ccp_refine_counted(M, alpha, cfg)
    return a


def _ccp_refine_counted(M, alpha, cfg):
    M = as_matrix(M, "gram")
    a = as_vector(alpha, "alpha").copy()
    if a.min() <= 0.0:
        raise ContractError("alpha must be strictly positive")
    b = M @ a
    if b.min() <= 0.0 or np.min(np.log(a) + np.log(b)) < -1e-12:
        raise ContractError("alpha is not feasible for the refinement constraints")
    ones = np.ones(M.shape[0])
    iters = 0
    for _ in range(cfg.ccp_max_iters):
        if fixed_point_residual(M, a) <= cfg.residual_tol:
            return a, iters
        b = M @ a
        grad_phi = 1.0 / a + M @ (1.0 / b)
        c = M @ ones + grad_phi
        cand = _barrier_minimize(M, c, _center_start(M, a), cfg)
        obj_old = float(np.sum(M @ a)) + _phi(M, a)
        obj_new = float(np.sum(M @ cand)) + _phi(M, cand)
        iters += 1
        if obj_new > obj_old:
            break
        a = cand
    return a, iters


def _degenerate_solution(G, M0, K):
    w, direction = baselines.mgda(G, gram_matrix=M0)
    return NashSolution(
        alpha=np.zeros(K),
        direction=direction,
        residual_inf=float("inf"),
        phi_value=float("nan"),
        ccp_iters_used=0,
        status=SolveStatus.DEGENERATE,
    )


def solve(G, cfg=None, warm_start=None, gram_matrix=None):
    """Task weights and joint direction for the gradient matrix ``G``.

    Near-degenerate instances short-circuit to the min-norm convex
    combination with status DEGENERATE and all-zero weights. The test is
    on the column-normalized Gram (smallest singular value at most
    cfg.sigma_k_threshold times trace/K, which is 1 after normalization),
    keeping the decision invariant to per-task gradient rescaling like
    the rest of the solver.

    ``warm_start`` may carry the weights from a previous, nearby solve;
    when a quick Newton polish from there already meets residual_tol the
    full pipeline (including the degeneracy eigencheck) is skipped.
    ``gram_matrix`` accepts a precomputed G^T G.
    """
    cfg = cfg or NashConfig()
    G = as_matrix(G, "G")
    K = G.shape[1]
    M0 = gram(G) if gram_matrix is None else gram_matrix
    diag = np.diag(M0)
    if np.any(diag <= 0.0):
        return _degenerate_solution(G, M0, K)
    n = np.sqrt(diag)
    Mn = M0 / np.outer(n, n)

    a = None
    if warm_start is not None:
        w = np.asarray(warm_start, dtype=np.float64)
        if w.shape == (K,) and w.min() > 0.0 and np.all(np.isfinite(w)):
            cand = _newton_polish(Mn, w * n)
            if fixed_point_residual(Mn, cand) <= cfg.residual_tol:
                a = cand
    ccp_used = 0
    if a is None:
        if smallest_singular_value(Mn) <= cfg.sigma_k_threshold:
            return _degenerate_solution(G, M0, K)
        try:
            a0 = feasibility_init(Mn)
        except DegeneracyError:
            w, direction = baselines.mgda(G)
            return NashSolution(
                alpha=np.zeros(K),
                direction=direction,
                residual_inf=float("inf"),
                phi_value=float("nan"),
                ccp_iters_used=0,
                status=SolveStatus.DEGENERATE,
            )
        a = solve_convex_surrogate(Mn, a0, cfg)
        if fixed_point_residual(Mn, a) > cfg.residual_tol:
            a_ref, ccp_used = _ccp_refine_counted(Mn, a, cfg)
            if fixed_point_residual(Mn, a_ref) <= fixed_point_residual(Mn, a):
                a = a_ref
        a = _newton_polish(Mn, a)
    if not np.all(np.isfinite(a)) or a.min() <= 0.0:
        raise SolverFailure("weight solver produced an invalid iterate", last_iterate=a)

    alpha = a / n
    # the residual is evaluated through float dot products; below a few
    # machine epsilons it cannot be certified, so never report less
    residual = max(fixed_point_residual(M0, alpha), 8.0 * np.finfo(np.float64).eps)
    status = SolveStatus.EXACT if residual <= cfg.residual_tol else SolveStatus.APPROXIMATE
    return NashSolution(
        alpha=alpha,
        direction=G @ alpha,
        residual_inf=residual,
        phi_value=_phi(M0, alpha),
        ccp_iters_used=ccp_used,
        status=status,
    )
