"""Robust feasible GLS for heterogeneous linear panels with latent factor structure.

Per-unit linear panel estimation where the errors, and possibly the
regressors, share unobserved cross-sectionally dependent components.
The weighting averages residual second moments across units, so no
factor count, factor path, or loading is ever estimated.
"""

from .cli import RunConfig, main, run_cli
from .estimators import (
    CrossSectionGLS,
    EstimateSet,
    FeasibleGLS,
    JointGLS,
    OracleGLS,
    PanelOLS,
    alpha_two_step,
    cross_sectional_fgls,
    fgls,
    iterated_fgls,
    joint_breve,
    joint_moore_penrose,
    ols,
    ols_bias_diagnostic,
    sample_weight,
    ugls,
)
from .exceptions import (
    BandwidthError,
    CommonRegressorMismatchError,
    DimensionError,
    PanelError,
    PanelIOError,
    ParseError,
    RankDeficientError,
    SingularError,
    SingularWeightError,
    UnbalancedPanelError,
)
from .inference import (
    HacSpec,
    InferenceSet,
    WaldSet,
    default_bandwidth,
    hac_cov_breve,
    hac_cov_fgls,
    wald_tests,
)
from .io import (
    dgp_from_config,
    dgp_to_config,
    load_config,
    load_panel_csv,
    parse_config,
    read_csv_columns,
    write_estimates_csv,
    write_mc_csv,
    write_panel_csv,
    write_truth_csv,
)
from .linalg import OrthoComplement, ortho_complement, pinv_sandwich, woodbury_inverse
from .panel import (
    Ar1CovarianceSet,
    DenseCovarianceSet,
    LatentStructure,
    PanelData,
    TransformedPanel,
    WeightMatrix,
    dual_panel,
    oracle_weight,
    transform,
)
from .simulation import (
    MC_ESTIMATORS,
    MC_GROUPS,
    DgpSpec,
    McSummary,
    Truth,
    run_mc,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # model containers and transforms
    "PanelData",
    "TransformedPanel",
    "LatentStructure",
    "WeightMatrix",
    "Ar1CovarianceSet",
    "DenseCovarianceSet",
    "OrthoComplement",
    "transform",
    "dual_panel",
    "oracle_weight",
    "ortho_complement",
    "pinv_sandwich",
    "woodbury_inverse",
    # estimators
    "EstimateSet",
    "ols",
    "ugls",
    "fgls",
    "iterated_fgls",
    "sample_weight",
    "joint_breve",
    "joint_moore_penrose",
    "alpha_two_step",
    "cross_sectional_fgls",
    "ols_bias_diagnostic",
    "PanelOLS",
    "OracleGLS",
    "FeasibleGLS",
    "JointGLS",
    "CrossSectionGLS",
    # inference
    "HacSpec",
    "InferenceSet",
    "WaldSet",
    "default_bandwidth",
    "hac_cov_fgls",
    "hac_cov_breve",
    "wald_tests",
    # simulation
    "DgpSpec",
    "Truth",
    "McSummary",
    "simulate",
    "run_mc",
    "MC_ESTIMATORS",
    "MC_GROUPS",
    # files and configs
    "load_panel_csv",
    "write_panel_csv",
    "write_truth_csv",
    "write_estimates_csv",
    "write_mc_csv",
    "read_csv_columns",
    "parse_config",
    "load_config",
    "dgp_to_config",
    "dgp_from_config",
    # command line
    "RunConfig",
    "run_cli",
    "main",
    # errors
    "PanelError",
    "DimensionError",
    "RankDeficientError",
    "SingularError",
    "SingularWeightError",
    "BandwidthError",
    "ParseError",
    "UnbalancedPanelError",
    "CommonRegressorMismatchError",
    "PanelIOError",
]
