"""Differentiable multi-loss problem instances.

Provides the 2-D two-task benchmark with exact loss formulas and analytic
gradients, randomly generated convex quadratic suites, and a
finite-difference gradient checker.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .linalg import as_vector

__all__ = [
    "ProblemInstance",
    "ToyLossParams",
    "toy_losses",
    "toy_gradients",
    "toy_inits",
    "toy_problem",
    "toy_away_from_kinks",
    "random_quadratics",
    "finite_diff_check",
    "FiniteDiffReport",
    "estimate_smoothness",
]


@dataclass(frozen=True)
class ProblemInstance:
    """A K-task differentiable problem over R^d with analytic gradients.

    ``losses`` maps theta -> (K,) loss vector; ``grads`` maps theta ->
    (d, K) matrix with one task gradient per column. ``domain`` is a
    (d, 2) array of box bounds used for smoothness estimation and
    plotting. ``smoothness`` carries the exact gradient-Lipschitz constant
    when known (quadratics), else None.
    """

    name: str
    dim: int
    num_tasks: int
    losses: Callable[[np.ndarray], np.ndarray]
    grads: Callable[[np.ndarray], np.ndarray]
    domain: np.ndarray
    smoothness: Optional[float] = None


@dataclass(frozen=True)
class ToyLossParams:
    """Constants of the 2-D benchmark losses (defaults match the canonical
    construction bit-for-bit)."""

    scale_l1: float = 0.1
    clamp_floor: float = 5e-6


def _toy_pieces(theta, p):
    t1, t2 = float(theta[0]), float(theta[1])
    u1 = 0.5 * (-t1 - 7.0) - np.tanh(-t2)
    u2 = 0.5 * (-t1 + 3.0) - np.tanh(-t2) + 2.0
    f1 = np.log(max(abs(u1), p.clamp_floor)) + 6.0
    f2 = np.log(max(abs(u2), p.clamp_floor)) + 6.0
    g1 = ((-t1 + 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    g2 = ((-t1 - 7.0) ** 2 + 0.1 * (-t2 - 8.0) ** 2) / 10.0 - 20.0
    c1 = max(np.tanh(0.5 * t2), 0.0)
    c2 = max(np.tanh(-0.5 * t2), 0.0)
    return t1, t2, u1, u2, f1, f2, g1, g2, c1, c2


def toy_losses(theta, params=None):
    """The two benchmark losses at theta in R^2."""
    p = params or ToyLossParams()
    _, _, _, _, f1, f2, g1, g2, c1, c2 = _toy_pieces(theta, p)
    l1 = p.scale_l1 * (c1 * f1 + c2 * g1)
    l2 = c1 * f2 + c2 * g2
    return np.array([l1, l2])


def toy_gradients(theta, params=None):
    """Analytic 2x2 gradient matrix of toy_losses (columns per task).

    At non-differentiable points (clamp boundary, |.| at zero, max ties)
    the derivative of the branch active on the positive side of the kink
    argument is used; the convention only matters on a measure-zero set.
    """
    p = params or ToyLossParams()
    t1, t2, u1, u2, f1, f2, g1, g2, c1, c2 = _toy_pieces(theta, p)
    sech2 = 1.0 - np.tanh(t2) ** 2

    # du/dtheta for the clamp arguments (same for u1 and u2)
    du_dt1 = -0.5
    du_dt2 = sech2

    if abs(u1) >= p.clamp_floor:
        df1_dt1, df1_dt2 = du_dt1 / u1, du_dt2 / u1
    else:
        df1_dt1 = df1_dt2 = 0.0
    if abs(u2) >= p.clamp_floor:
        df2_dt1, df2_dt2 = du_dt1 / u2, du_dt2 / u2
    else:
        df2_dt1 = df2_dt2 = 0.0

    dg1_dt1 = -(-t1 + 7.0) / 5.0
    dg2_dt1 = -(-t1 - 7.0) / 5.0
    dg_dt2 = -(-t2 - 8.0) / 50.0  # shared by g1 and g2

    half_sech2 = 0.5 * (1.0 - np.tanh(0.5 * t2) ** 2)
    dc1_dt2 = half_sech2 if np.tanh(0.5 * t2) >= 0.0 else 0.0
    dc2_dt2 = -half_sech2 if np.tanh(-0.5 * t2) >= 0.0 else 0.0

    dl1_dt1 = p.scale_l1 * (c1 * df1_dt1 + c2 * dg1_dt1)
    dl1_dt2 = p.scale_l1 * (dc1_dt2 * f1 + c1 * df1_dt2 + dc2_dt2 * g1 + c2 * dg_dt2)
    dl2_dt1 = c1 * df2_dt1 + c2 * dg2_dt1
    dl2_dt2 = dc1_dt2 * f2 + c1 * df2_dt2 + dc2_dt2 * g2 + c2 * dg_dt2
    return np.array([[dl1_dt1, dl2_dt1], [dl1_dt2, dl2_dt2]])


def toy_inits():
    """The five canonical benchmark initialization points, in order."""
    return [
        np.array([-8.5, 7.5]),
        np.array([0.0, 0.0]),
        np.array([9.0, 9.0]),
        np.array([-7.5, -0.5]),
        np.array([9.0, -1.0]),
    ]


def toy_away_from_kinks(theta, margin=1e-3, params=None):
    """True when theta is at least ``margin`` away from every
    non-smooth locus of the benchmark losses."""
    p = params or ToyLossParams()
    _, t2, u1, u2, *_ = _toy_pieces(theta, p)
    return abs(u1) > margin and abs(u2) > margin and abs(t2) > margin


def toy_problem(params=None):
    p = params or ToyLossParams()
    return ProblemInstance(
        name="toy2d",
        dim=2,
        num_tasks=2,
        losses=lambda th: toy_losses(th, p),
        grads=lambda th: toy_gradients(th, p),
        domain=np.array([[-10.0, 10.0], [-10.0, 10.0]]),
    )


def random_quadratics(K, d, cond_max, seed):
    """A suite of K convex quadratics over R^d with SPD Hessians of
    condition number <= cond_max, distinct minima, and exact gradients.

    The exact gradient-Lipschitz constant max_i lambda_max(A_i) is exposed
    as ``smoothness``.
    """
    if K < 1 or d < K or cond_max < 1.0:
        raise ConfigError("random_quadratics requires K >= 1, d >= K, cond_max >= 1")
    rng = np.random.default_rng(seed)
    As, ms, bs = [], [], []
    for _ in range(K):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = np.empty(d)
        eigs[0], eigs[-1] = 1.0, cond_max
        if d > 2:
            eigs[1:-1] = 1.0 + (cond_max - 1.0) * rng.random(d - 2)
        As.append((Q * eigs) @ Q.T)
        ms.append(8.0 * rng.standard_normal(d))
        bs.append(float(rng.random()))
    As, ms, bs = np.array(As), np.array(ms), np.array(bs)
    L = float(cond_max)

    def losses(theta):
        dx = theta[None, :] - ms
        return 0.5 * np.einsum("kd,kde,ke->k", dx, As, dx) + bs

    def grads(theta):
        dx = theta[None, :] - ms
        return np.einsum("kde,ke->dk", As, dx)

    lo = ms.min(axis=0) - 5.0
    hi = ms.max(axis=0) + 5.0
    return ProblemInstance(
        name=f"quadratics_k{K}_d{d}",
        dim=d,
        num_tasks=K,
        losses=losses,
        grads=grads,
        domain=np.stack([lo, hi], axis=1),
        smoothness=L,
    )


@dataclass(frozen=True)
class FiniteDiffReport:
    max_error: float
    worst_point: np.ndarray
    samples_used: int


def finite_diff_check(problem, samples, seed, h=1e-6, accept=None):
    """Compare analytic gradients against central finite differences at
    random points in the problem domain.

    The error at a point is max|analytic - fd| relative to the largest
    gradient magnitude there, falling back to the absolute error near
    zero-gradient points. ``accept`` optionally filters sample points
    (e.g. to avoid kink neighborhoods).
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.domain[:, 0], problem.domain[:, 1]
    worst, worst_pt, used = 0.0, None, 0
    while used < samples:
        theta = lo + (hi - lo) * rng.random(problem.dim)
        if accept is not None and not accept(theta):
            continue
        used += 1
        A = problem.grads(theta)
        FD = np.empty_like(A)
        for j in range(problem.dim):
            e = np.zeros(problem.dim)
            e[j] = h
            FD[j, :] = (problem.losses(theta + e) - problem.losses(theta - e)) / (2 * h)
        mag = max(float(np.max(np.abs(A))), float(np.max(np.abs(FD))))
        e_max = float(np.max(np.abs(A - FD)))
        if mag > 1e-6:
            e_max /= mag
        if e_max > worst:
            worst, worst_pt = e_max, theta
    return FiniteDiffReport(max_error=worst, worst_point=worst_pt, samples_used=used)


def estimate_smoothness(problem, samples=2000, seed=0, safety=1.5, quantile=95.0):
    """Gradient-Lipschitz estimate by sampling gradient-difference ratios
    over the domain box.

    Uses the exact constant when the instance exposes one. Otherwise
    returns a high quantile of the sampled ratios, inflated by a safety
    factor: the sample maximum is unbounded for objectives with isolated
    steep ridges, so a quantile reflects the curvature of the bulk of the
    domain rather than a measure-zero neighborhood.
    """
    if problem.smoothness is not None:
        return problem.smoothness
    rng = np.random.default_rng(seed)
    lo, hi = problem.domain[:, 0], problem.domain[:, 1]
    ratios = []
    for _ in range(samples):
        x = lo + (hi - lo) * rng.random(problem.dim)
        y = x + (hi - lo) * 0.05 * rng.standard_normal(problem.dim)
        y = np.clip(y, lo, hi)
        dist = float(np.linalg.norm(y - x))
        if dist < 1e-9:
            continue
        Gx, Gy = problem.grads(x), problem.grads(y)
        for k in range(problem.num_tasks):
            ratios.append(float(np.linalg.norm(Gy[:, k] - Gx[:, k])) / dist)
    if not ratios:
        raise ConfigError("degenerate domain: no usable sample pairs")
    return safety * float(np.percentile(ratios, quantile))
