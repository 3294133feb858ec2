"""Dynamic panel threshold regression: first-differenced GMM and bootstrap inference.

Estimation profiles the GMM criterion over a grid of candidate thresholds;
inference inverts null-imposed bootstrap tests (grid bootstrap for the
threshold location, adaptive residual bootstrap for the coefficients, and
dedicated bootstraps for the continuity and linearity hypotheses).
"""

__version__ = "0.1.0"

from .bootstrap import (
    BootstrapConfig,
    BootstrapRun,
    BootstrapWorld,
    bootstrap_criterion,
    compute_c_hat,
    continuity_bootstrap_test,
    grid_bootstrap_ci,
    grid_bootstrap_test_at,
    linearity_bootstrap_test,
    make_world,
    nonparametric_bootstrap_ci,
    residual_bootstrap_ci,
)
from .dgp import DgpConfig, simulate_panel
from .errors import (
    BootstrapError,
    DimensionError,
    DptrError,
    EstimationError,
    InstrumentSpecError,
    InternalConsistencyError,
    PanelFormatError,
    RankDeficientError,
    SingularMomentError,
)
from .gmm import (
    GammaGrid,
    GmmConfig,
    GmmFit,
    fit_continuity_restricted,
    fit_gamma_restricted,
    fit_linear_null,
    fit_unrestricted,
    profiled_alpha,
    weight_matrix,
)
from .instruments import InstrumentSet, InstrumentSpec, LagRule, build_instruments
from .mc import McConfig, McResult, McTargets, run_mc
from .moments import MomentEvaluation, MomentSystem, moment_eval
from .panel import (
    DiffPanel,
    PanelDataset,
    PanelSchema,
    first_difference,
    load_panel,
    write_panel_csv,
)
from .params import KinkParams, ThresholdParams
from .stattests import (
    ContinuityLimitPlugins,
    TestStat,
    continuity_stat,
    distance_stat,
    simulate_continuity_limit,
    sup_wald,
)

__all__ = [
    "BootstrapConfig",
    "BootstrapError",
    "BootstrapRun",
    "BootstrapWorld",
    "ContinuityLimitPlugins",
    "DgpConfig",
    "DiffPanel",
    "DimensionError",
    "DptrError",
    "EstimationError",
    "GammaGrid",
    "GmmConfig",
    "GmmFit",
    "InstrumentSet",
    "InstrumentSpec",
    "InstrumentSpecError",
    "InternalConsistencyError",
    "KinkParams",
    "LagRule",
    "McConfig",
    "McResult",
    "McTargets",
    "MomentEvaluation",
    "MomentSystem",
    "PanelDataset",
    "PanelFormatError",
    "PanelSchema",
    "RankDeficientError",
    "SingularMomentError",
    "TestStat",
    "ThresholdParams",
    "bootstrap_criterion",
    "build_instruments",
    "compute_c_hat",
    "continuity_bootstrap_test",
    "continuity_stat",
    "distance_stat",
    "first_difference",
    "fit_continuity_restricted",
    "fit_gamma_restricted",
    "fit_linear_null",
    "fit_unrestricted",
    "grid_bootstrap_ci",
    "grid_bootstrap_test_at",
    "linearity_bootstrap_test",
    "load_panel",
    "make_world",
    "moment_eval",
    "nonparametric_bootstrap_ci",
    "profiled_alpha",
    "residual_bootstrap_ci",
    "run_mc",
    "simulate_continuity_limit",
    "simulate_panel",
    "sup_wald",
    "weight_matrix",
    "write_panel_csv",
]
