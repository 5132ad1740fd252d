"""Outer optimization loop: per-step gradient collection, aggregation,
step-size selection, reduced-frequency weight updates, and termination."""

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from . import baselines, nash
from .baselines import AggregatorKind, AggregatorState, AggregatorTag
from .errors import ConfigError, ContractError, SolverFailure
from .linalg import as_vector, gram, smallest_singular_value
from .problems import ProblemInstance

__all__ = [
    "TheoremSchedule",
    "FixedRate",
    "Adam",
    "OptimizerConfig",
    "AdamState",
    "adam_step",
    "theorem_step_size",
    "pareto_stationarity",
    "Termination",
    "TrajectoryRecord",
    "RunResult",
    "run",
]


@dataclass(frozen=True)
class TheoremSchedule:
    """Step size min_i 1/(L K alpha_i); valid for the bargaining
    aggregator only (it needs the weights alpha)."""

    smoothness: float

    def __post_init__(self):
        if self.smoothness <= 0.0:
            raise ConfigError("smoothness L must be positive")


@dataclass(frozen=True)
class FixedRate:
    rate: float

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ConfigError("learning rate must be positive")


@dataclass(frozen=True)
class Adam:
    rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.rate <= 0.0:
            raise ConfigError("learning rate must be positive")


StepRule = Union[TheoremSchedule, FixedRate, Adam]


@dataclass(frozen=True)
class OptimizerConfig:
    step_rule: StepRule
    max_steps: int
    weight_update_every: int = 1
    stationarity_tol: float = 1e-8
    seed: int = 0
    nash_config: nash.NashConfig = field(default_factory=nash.NashConfig)

    def __post_init__(self):
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.weight_update_every < 1:
            raise ConfigError("weight_update_every must be >= 1")
        if self.stationarity_tol <= 0.0:
            raise ConfigError("stationarity_tol must be positive")


class Termination(enum.Enum):
    MAX_STEPS = "max_steps"
    STATIONARY = "stationary"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    theta: np.ndarray
    losses: np.ndarray
    alpha: np.ndarray  # zeros when weights are stale or unavailable
    step_size: float
    stationarity: float
    sigma_k: float


@dataclass(frozen=True)
class RunResult:
    trajectory: List[TrajectoryRecord]
    final_theta: np.ndarray
    final_losses: np.ndarray
    termination: Termination
    solver_calls: int = 0


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, d):
        return cls(m=np.zeros(d), v=np.zeros(d), t=0)


def adam_step(state, direction, eta, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on the aggregated pseudo-gradient.

    Returns (update, new_state); the caller subtracts the update.
    """
    g = np.asarray(direction, dtype=np.float64)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    update = eta * m_hat / (np.sqrt(v_hat) + eps)
    return update, AdamState(m=m, v=v, t=t)


def theorem_step_size(alpha, L):
    """min_i 1/(L K alpha_i) for strictly positive weights."""
    a = as_vector(alpha, "alpha")
    if a.min() <= 0.0:
        raise ContractError("alpha must be strictly positive")
    if L <= 0.0:
        raise ContractError("L must be positive")
    return float(np.min(1.0 / (L * len(a) * a)))


def pareto_stationarity(G, gram_matrix=None):
    """Norm of the min-norm convex combination of the gradient columns;
    (numerically) zero certifies Pareto stationarity."""
    _, direction = baselines.mgda(G, gram_matrix=gram_matrix)
    return float(np.linalg.norm(direction))


def run(problem: ProblemInstance, aggregator: AggregatorKind, cfg: OptimizerConfig,
        theta0, stationarity_check_every=1):
    """Iterate theta <- theta - step * direction from ``theta0``.

    Weights are recomputed every cfg.weight_update_every steps; in between
    the stale coefficients are applied to fresh gradients. Stops early
    when the min-norm stationarity measure (checked every
    ``stationarity_check_every`` steps) falls below cfg.stationarity_tol,
    or when the bargaining solver reports degeneracy at such a point.
    """
    is_nash = aggregator.tag is AggregatorTag.NASH
    if isinstance(cfg.step_rule, TheoremSchedule) and not is_nash:
        raise ConfigError(
            "the theorem step schedule needs bargaining weights; "
            "use FixedRate or Adam for other aggregators"
        )
    theta = as_vector(theta0, "theta0").copy()
    if theta.shape[0] != problem.dim:
        raise ConfigError(f"theta0 has dim {theta.shape[0]}, problem needs {problem.dim}")

    agg_state = AggregatorState.from_seed(cfg.seed)
    adam_state = AdamState.zeros(problem.dim)
    trajectory: List[TrajectoryRecord] = []
    solver_calls = 0
    weights = None
    prev_alpha = None
    last_mu = None
    termination = Termination.MAX_STEPS
    K = problem.num_tasks

    t = 0
    while True:
        losses = problem.losses(theta)
        G = problem.grads(theta)
        if not (np.all(np.isfinite(losses)) and np.all(np.isfinite(G))):
            raise SolverFailure(
                f"non-finite loss or gradient at step {t}, theta={theta.tolist()}"
            )
        M = gram(G)
        sigma_k = smallest_singular_value(M)
        stationarity = pareto_stationarity(G, gram_matrix=M)

        final_step = t >= cfg.max_steps
        check_now = final_step or (t % stationarity_check_every == 0)
        degenerate_now = False

        fresh = None
        if not final_step:
            if t % cfg.weight_update_every == 0 or weights is None:
                if is_nash:
                    sol = nash.solve(G, cfg.nash_config, warm_start=prev_alpha,
                                     gram_matrix=M)
                    solver_calls += 1
                    if sol.status is nash.SolveStatus.DEGENERATE:
                        degenerate_now = True
                        fresh = np.zeros(K)
                        # keep the fallback's min-norm coefficients for the
                        # stale steps until the next scheduled update
                        weights, _ = baselines.mgda(G, gram_matrix=M)
                        direction = sol.direction
                    else:
                        fresh = sol.alpha
                        weights = sol.alpha
                        prev_alpha = sol.alpha
                        direction = sol.direction
                else:
                    w, direction = baselines.aggregate_with_weights(
                        aggregator, G, losses, agg_state
                    )
                    solver_calls += 1
                    fresh = w
                    weights = w
            else:
                direction = G @ weights

        if check_now and stationarity <= cfg.stationarity_tol:
            termination = Termination.STATIONARY
            final_step = True
        elif degenerate_now and stationarity <= cfg.stationarity_tol:
            termination = Termination.DEGENERATE
            final_step = True

        if final_step:
            trajectory.append(
                TrajectoryRecord(
                    step=t, theta=theta.copy(), losses=losses,
                    alpha=np.zeros(K), step_size=0.0,
                    stationarity=stationarity, sigma_k=sigma_k,
                )
            )
            break

        theta_before = theta.copy()
        rule = cfg.step_rule
        if isinstance(rule, TheoremSchedule):
            alpha_for_rule = weights if weights is not None else prev_alpha
            if alpha_for_rule is not None and np.all(alpha_for_rule > 0.0):
                mu = theorem_step_size(alpha_for_rule, rule.smoothness)
                last_mu = mu
            else:
                mu = last_mu if last_mu is not None else 1.0 / rule.smoothness
            theta = theta - mu * direction
            step_size = mu
        elif isinstance(rule, FixedRate):
            theta = theta - rule.rate * direction
            step_size = rule.rate
        else:
            update, adam_state = adam_step(
                adam_state, direction, rule.rate, rule.beta1, rule.beta2, rule.eps
            )
            theta = theta - update
            step_size = rule.rate

        trajectory.append(
            TrajectoryRecord(
                step=t, theta=theta_before, losses=losses,
                alpha=fresh if fresh is not None else np.zeros(K),
                step_size=step_size, stationarity=stationarity, sigma_k=sigma_k,
            )
        )
        t += 1

    final = trajectory[-1]
    return RunResult(
        trajectory=trajectory,
        final_theta=final.theta,
        final_losses=final.losses,
        termination=termination,
        solver_calls=solver_calls,
    )
