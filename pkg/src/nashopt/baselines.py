"""Reference gradient/loss aggregators used for head-to-head comparisons.

Every aggregator reduces to a coefficient vector w over the task columns,
with joint direction G w. Returning the coefficients (not just the
direction) lets the optimizer reuse stale weights against fresh gradients
when weight updates run at reduced frequency.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DegeneracyError
from .linalg import as_matrix, as_vector, gram

log = logging.getLogger(__name__)

__all__ = [
    "AggregatorTag",
    "AggregatorKind",
    "AggregatorState",
    "aggregate",
    "aggregate_with_weights",
    "mgda",
    "pcgrad",
    "cagrad",
    "imtl_g",
    "rlw_weights",
    "dwa_weights",
]


class AggregatorTag(enum.Enum):
    LS = "ls"
    SI = "si"
    RLW = "rlw"
    DWA = "dwa"
    MGDA = "mgda"
    PCGRAD = "pcgrad"
    CAGRAD = "cagrad"
    IMTLG = "imtlg"
    NASH = "nash"


@dataclass(frozen=True)
class AggregatorKind:
    """An aggregation method plus its scalar hyperparameters."""

    tag: AggregatorTag
    cagrad_c: float = 0.4
    dwa_temperature: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.cagrad_c < 1.0:
            raise ConfigError("cagrad_c must be in [0, 1)")
        if self.dwa_temperature <= 0.0:
            raise ConfigError("dwa_temperature must be positive")


@dataclass
class AggregatorState:
    """Mutable per-run state: loss history, RNG stream, step counter."""

    rng: np.random.Generator
    loss_history: list = field(default_factory=list)
    step_counter: int = 0

    @classmethod
    def from_seed(cls, seed):
        return cls(rng=np.random.default_rng(seed))

    def push_losses(self, losses):
        self.loss_history.append(np.array(losses, dtype=np.float64))
        del self.loss_history[:-2]


def mgda(G, gap_tol=1e-8, max_iters=20000, gram_matrix=None):
    """Min-norm convex combination of the gradient columns.

    Frank-Wolfe on min_{w in simplex} ||G w||^2 with away steps: the
    linear oracle picks the column of minimal correlation with the
    current combination, the away oracle drops the worst supported
    column, and every move uses an exact line search (the objective is
    quadratic along any segment). Away steps restore linear convergence
    when the optimum sits on a simplex face, where plain steps zig-zag.
    Runs to duality gap <= gap_tol. A precomputed ``gram_matrix``
    (G^T G) is reused when given.
    """
    G = as_matrix(G, "G")
    K = G.shape[1]
    if K == 1:
        return np.ones(1), G[:, 0].copy()
    M = gram(G) if gram_matrix is None else gram_matrix
    if K == 2:
        # closed form: min over t of ||(1-t) g_1 + t g_2||^2
        denom = M[0, 0] - 2.0 * M[0, 1] + M[1, 1]
        t = 0.5 if denom <= 0.0 else min(1.0, max(0.0, (M[0, 0] - M[0, 1]) / denom))
        w = np.array([1.0 - t, t])
        return w, G @ w
    w = np.full(K, 1.0 / K)
    for _ in range(max_iters):
        Mw = M @ w
        f = float(w @ Mw)
        j = int(np.argmin(Mw))
        gap_fw = f - float(Mw[j])
        if 2.0 * gap_fw <= gap_tol:
            break
        support = np.flatnonzero(w > 0.0)
        v = int(support[np.argmax(Mw[support])])
        gap_away = float(Mw[v]) - f
        if gap_fw >= gap_away:
            d = -w.copy()
            d[j] += 1.0
            t_max = 1.0
        else:
            d = w.copy()
            d[v] -= 1.0
            t_max = w[v] / (1.0 - w[v]) if w[v] < 1.0 else 1.0
        # quadratic along the segment: minimizer at -d.Mw / d.Md
        dMw = float(d @ Mw)
        dMd = float(d @ M @ d)
        t = t_max if dMd <= 0.0 else min(t_max, max(0.0, -dMw / dMd))
        if t <= 0.0:
            break
        w = w + t * d
        np.clip(w, 0.0, None, out=w)
        w /= w.sum()
    return w, G @ w


def pcgrad(G, state):
    """Gradient surgery: project each task gradient away from the tasks it
    conflicts with, in a seeded random order, then sum.

    Operates in coefficient space (each surgically altered gradient is a
    linear combination of the original columns), so inner products come
    from the Gram matrix.
    """
    G = as_matrix(G, "G")
    K = G.shape[1]
    M = gram(G)
    C = np.eye(K)
    for i in range(K):
        if K > 1:
            others = np.array([j for j in range(K) if j != i])
            order = state.rng.permutation(others)
        else:
            order = []
        for j in order:
            if M[j, j] <= 1e-24:
                log.info("pcgrad: skipping zero gradient column %d", j)
                continue
            dot = float(C[i] @ M[:, j])
            if dot < 0.0:
                C[i, j] -= dot / M[j, j]
    w = C.sum(axis=0)
    return w, G @ w


def cagrad(G, c):
    """Conflict-averse direction: descend the average loss while bounding
    the worst per-task decrease through the ball-radius parameter ``c``.

    The inner min over the simplex runs projected gradient descent with a
    fixed step (500 iterations, early exit on a 1e-8 stall).
    """
    G = as_matrix(G, "G")
    if not 0.0 <= c < 1.0:
        raise ContractError("cagrad c must be in [0, 1)")
    K = G.shape[1]
    M = gram(G)
    mean_coef = np.full(K, 1.0 / K)
    g0_sq = float(mean_coef @ M @ mean_coef)
    phi = c * c * g0_sq
    if phi <= 0.0 or K == 1:
        return mean_coef, G @ mean_coef
    sq_phi = np.sqrt(phi)
    Mg0 = M @ mean_coef
    lam_max = float(np.linalg.norm(M, 2))
    lip = lam_max * (1.0 + sq_phi / max(np.sqrt(g0_sq), 1e-12))
    step = 1.0 / (2.0 * max(lip, 1e-12))

    def objective(w):
        gw_sq = float(w @ M @ w)
        return float(w @ Mg0) + sq_phi * np.sqrt(max(gw_sq, 0.0))

    w = mean_coef.copy()
    best_w, best_f = w.copy(), objective(w)
    prev_f = best_f
    for _ in range(500):
        Mw = M @ w
        gw_norm = np.sqrt(max(float(w @ Mw), 0.0))
        grad = Mg0 + (sq_phi / gw_norm) * Mw if gw_norm > 1e-12 else Mg0
        w = _project_simplex(w - step * grad)
        f = objective(w)
        if f < best_f:
            best_f, best_w = f, w.copy()
        if abs(prev_f - f) <= 1e-8 * max(1.0, abs(f)):
            break
        prev_f = f
    w = best_w
    gw_norm = np.sqrt(max(float(w @ M @ w), 0.0))
    if gw_norm < 1e-12:
        return mean_coef, G @ mean_coef
    total = mean_coef + (sq_phi / gw_norm) * w
    return total, G @ total


def _project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(v) + 1)
    cond = u - css / ind > 0.0
    rho = ind[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def imtl_g(G):
    """Direction with equal projections onto all unit task gradients.

    Solves the (K-1)-dimensional linear system from the pairwise
    equal-projection conditions with the weights summing to one.
    """
    G = as_matrix(G, "G")
    K = G.shape[1]
    M = gram(G)
    norms = np.sqrt(np.diag(M))
    if np.any(norms <= 1e-12):
        raise ContractError("imtl_g requires non-degenerate gradient norms")
    if K == 1:
        return np.ones(1), G[:, 0].copy()
    # v_i = G^T (u_0 - u_i); alpha = e_0 + B e with alpha^T v_i = 0
    V = M[:, :1] / norms[0] - M[:, 1:] / norms[1:]
    A = (V[1:, :] - V[0, :]).T  # (K-1) x (K-1), rows index conditions
    rhs = -V[0, :]
    try:
        e = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise DegeneracyError("imtl_g: equal-projection system is singular") from None
    alpha = np.empty(K)
    alpha[0] = 1.0 - e.sum()
    alpha[1:] = e
    return alpha, G @ alpha


def rlw_weights(K, state):
    """Random task weights: softmax of K i.i.d. standard normal draws."""
    if K < 1:
        raise ContractError("K must be >= 1")
    z = state.rng.standard_normal(K)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def dwa_weights(loss_hist, temperature):
    """Weights from the rates of loss change across the last two steps.

    r_k = l_k(t-1) / l_k(t-2); weights are K * softmax(r / temperature).
    Falls back to unit weights on non-positive historical losses.
    """
    if temperature <= 0.0:
        raise ContractError("temperature must be positive")
    prev2, prev1 = (np.asarray(v, dtype=np.float64) for v in loss_hist)
    K = prev1.shape[0]
    if np.any(prev1 <= 0.0) or np.any(prev2 <= 0.0):
        log.info("dwa: non-positive loss in history, using unit weights")
        return np.ones(K)
    r = prev1 / prev2
    z = r / temperature
    z -= z.max()
    w = np.exp(z)
    return K * w / w.sum()


def aggregate_with_weights(kind, G, losses, state):
    """Dispatch to the method behind ``kind``; returns (weights, direction)
    with direction == G @ weights, and updates ``state``."""
    G = as_matrix(G, "G")
    K = G.shape[1]
    tag = kind.tag
    if tag is AggregatorTag.LS:
        w = np.ones(K)
        out = w, G @ w
    elif tag is AggregatorTag.SI:
        l = as_vector(losses, "losses")
        w = 1.0 / np.maximum(np.abs(l), 1e-8)
        out = w, G @ w
    elif tag is AggregatorTag.RLW:
        w = rlw_weights(K, state)
        out = w, G @ w
    elif tag is AggregatorTag.DWA:
        l = as_vector(losses, "losses")
        if len(state.loss_history) < 2:
            w = np.ones(K)
        else:
            w = dwa_weights(state.loss_history, kind.dwa_temperature)
        out = w, G @ w
    elif tag is AggregatorTag.MGDA:
        out = mgda(G)
    elif tag is AggregatorTag.PCGRAD:
        out = pcgrad(G, state)
    elif tag is AggregatorTag.CAGRAD:
        out = cagrad(G, kind.cagrad_c)
    elif tag is AggregatorTag.IMTLG:
        out = imtl_g(G)
    elif tag is AggregatorTag.NASH:
        from . import nash

        sol = nash.solve(G)
        out = sol.alpha, sol.direction
    else:
        raise ConfigError(f"unknown aggregator kind: {tag!r}")
    if losses is not None:
        state.push_losses(losses)
    state.step_counter += 1
    return out


def aggregate(kind, G, losses, state):
    """Joint update direction for the chosen aggregation method."""
    _, direction = aggregate_with_weights(kind, G, losses, state)
    return direction
