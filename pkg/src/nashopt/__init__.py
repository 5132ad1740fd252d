"""Bargaining-based gradient aggregation for multi-objective optimization.

The core entry points:

    nash.solve          task weights with alpha * (G^T G alpha) = 1
    baselines.aggregate classic multi-task aggregation baselines
    optim.run           the outer descent loop with step-size schedules
    problems            benchmark problem instances and gradient checks
    metrics             relative-drop / rank / Pareto-front metrics
    cli                 config-driven experiment runner
"""

from . import baselines, config, linalg, metrics, nash, optim, problems, svg
from .baselines import AggregatorKind, AggregatorState, AggregatorTag
from .errors import (
    ConfigError,
    ContractError,
    DegeneracyError,
    NashoptError,
    ShapeError,
    SingularityError,
    SolverFailure,
)
from .nash import NashConfig, NashSolution, SolveStatus
from .optim import (
    Adam,
    FixedRate,
    OptimizerConfig,
    RunResult,
    Termination,
    TheoremSchedule,
    TrajectoryRecord,
)
from .problems import ProblemInstance

__version__ = "0.1.0"

__all__ = [
    "baselines", "config", "linalg", "metrics", "nash", "optim", "problems", "svg",
    "AggregatorKind", "AggregatorState", "AggregatorTag",
    "NashConfig", "NashSolution", "SolveStatus",
    "Adam", "FixedRate", "OptimizerConfig", "RunResult", "Termination",
    "TheoremSchedule", "TrajectoryRecord", "ProblemInstance",
    "NashoptError", "ShapeError", "ContractError", "SingularityError",
    "DegeneracyError", "SolverFailure", "ConfigError",
    "__version__",
]
