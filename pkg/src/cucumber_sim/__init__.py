"""Renewable-aware admission control and power capping for a single node.

Delay-tolerant jobs are admitted only when the forecast free, renewable-
excess-powered capacity covers every queued deadline; accepted jobs run
power-capped to the measured surplus, with forecast-driven uncapping when a
running job is projected late.  A deterministic discrete-event simulator and
scenario generators reproduce the evaluation protocol at desk scale.
"""

from .admission import (
    AdmissionDecision,
    AdmissionPolicy,
    DeadlineGroup,
    JobState,
    QueuedJob,
    WorkloadRequest,
    admit,
    admit_grouped,
    capacity_integral,
    edf_insert,
    feasible_schedule,
    group_by_deadline,
)
from .errors import (
    ConfigError,
    CucumberSimError,
    DataError,
    GridMismatch,
    InvalidAlpha,
    InvalidProfile,
    InvalidUtilization,
    InvariantViolation,
    ManifestError,
    ParseError,
    QuantileUnavailable,
    RepresentationMismatch,
    UnitMismatch,
)
from .forecast import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    Ensemble,
    Point,
    PointSeries,
    ProbabilisticSeries,
    Quantiles,
    TimeGrid,
    fuse_ree_fallback,
    fuse_ree_joint,
    ingest_forecast_csv,
    ingest_point_csv,
    quantile,
    write_forecast_csv,
    write_point_csv,
)
from .freep import FreepForecast, compute_freep, reduce_load_forecast
from .governor import GovernorState, MitigationDecision, evaluate_mitigation, runtime_cap
from .power import PowerModel, consumption_forecast, load_to_power, power_to_load
from .scenario import (
    SITE_PROFILES,
    Scenario,
    SiteProfile,
    build_scenario,
    load_scenario,
    save_scenario,
    synthesize_baseload,
    synthesize_solar,
    synthesize_workloads,
)
from .simulator import (
    MatrixCellResult,
    RunMetrics,
    SimulationConfig,
    energy_split,
    run,
    run_matrix,
)

__version__ = "0.1.0"
