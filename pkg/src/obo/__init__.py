"""Online bilevel optimization: single-loop window-averaged updates,
multi-evaluation and plain-descent baselines, oracle problem streams, and a
bilevel-local-regret metrics engine."""

from .core import (
    CallbackOracle,
    ConsistencyReport,
    Domain,
    OptimizerConfig,
    RegularityConstants,
    RoundOracle,
    ValidationResult,
    check_oracle,
    validate_config,
)
from .errors import (
    ArgumentError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    DomainError,
    EmptyLogError,
    EmptyWindowError,
    IoError,
    NumericalError,
    OboError,
    OracleCapabilityError,
    SolverBreakdown,
)
from .hypergrad import (
    HypergradRecord,
    aid_gradient_at,
    estimate_hypergrad,
    exact_hypergrad,
    fd_hypergrad,
    inner_solve,
)
from .linear_solver import LinearMap, QSchedule, q_at, solve_cg, solve_fixed_step
from .metrics import (
    RunLog,
    VariationStats,
    blr_series,
    blr_static_series,
    hypergrad_error_series,
    running_sum,
    variation_stats,
)
from .optimizers import (
    IterateState,
    OracleWindow,
    StepLog,
    WindowBuffer,
    initial_state,
    oagd_step,
    ogd_step,
    project,
    sobow_step,
    window_average,
    window_weight_sum,
)
from .problems import (
    Drift,
    HyperOptParams,
    HyperRepParams,
    QuadraticParams,
    Stream,
    StreamConfig,
    make_ho_stream,
    make_hr_stream,
    make_quadratic_stream,
    make_stream,
)
from .runner import (
    ArtifactSet,
    ExperimentConfig,
    MetricsFlags,
    load_experiment_config,
    run_compare,
    run_experiment,
    run_sweep,
)

__version__ = "0.1.0"
