"""Geometry of achievable classifier performance and cherry-picking in fair decisions."""

__version__ = "0.1.0"

from .problem import (  # noqa: E402
    AtomDecision,
    GroupedProblem,
    GroupEntry,
    ProblemError,
    ScoreDistribution,
    Slicing,
    base_rates,
    confusion_matrix,
    lift_to_slicing,
    operating_point,
    pushforward_from_dataset,
    slicing_operating_point,
)
from .ips import (  # noqa: E402
    IpsGeometry,
    InfeasiblePoint,
    area,
    contains,
    frontier_distance,
    frontier_to_distribution,
    frontier_to_roc,
    ips_from_distribution,
    symmetric_difference_area,
    threshold_operating_point,
)
from .metrics import GroupStats, check_first_quadrant_condition, eval_metric, fairness_measure  # noqa: E402
from .solver import (  # noqa: E402
    FairnessProblemSpec,
    SolveResult,
    brute_force_oracle,
    solve_grid,
    solve_thresholds,
)
from .cherrypick import detect, theorem6_replication, theorem8_search, tradeoff_sweep  # noqa: E402
from .generators import GeneratorConfig, generate, verify_adversarial  # noqa: E402
from .multilabel import (  # noqa: E402
    ConfusionMatrix,
    LimitRatioMatrix,
    error_compare,
    pareto_compare,
    weller_limit_partition,
    weller_partition,
)
from .estimator import FairThresholdPostProcessor  # noqa: E402
