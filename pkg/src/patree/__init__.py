"""Simulation and statistical inference for preferential attachment trees."""

from .errors import (
    AbsorbingStateError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    InsufficientDataError,
    IntegrityError,
    NumericError,
    PatreeError,
    ProcedureError,
    TruncationError,
    UndefinedRatioError,
)
from .families import (
    Affine,
    EventuallyConstant,
    LogPower,
    ParamBox,
    PowerOffset,
    family_from_config,
    family_to_config,
    make_family,
)
from .limits import LimitLaw, degree_probs, limit_law, malthusian, rho
from .simulate import (
    DegreeSnapshot,
    GrowthHistory,
    grow,
    sample_attachment_degrees,
    snapshot_of,
    total_preference_trace,
)
from .estimators import (
    FitResult,
    empirical_fit,
    empirical_rk,
    fit_mle,
    fit_pmle,
    hessian,
    hybrid_select,
    loglik,
    pseudo_hessian,
    pseudo_loglik,
    pseudo_score,
    score,
)
from .asymptotics import (
    AsymptoticInfo,
    BootstrapVariance,
    WaldReport,
    boundary_limit_sample,
    bootstrap_variance,
    bootstrap_wald,
    fisher_V0,
    limit_score,
    wald_affinity,
)
from .urns import (
    UrnSystem,
    affine_pk,
    affine_tail_identity,
    build_affine_urn,
    build_cutoff_urn,
    eigen_condition,
    limit_covariance,
    urn_simulate,
)
from .montecarlo import (
    MCReport,
    emit_qq,
    run_bootstrap_coverage,
    run_mc,
    run_projected_bootstrap_qq,
    run_wald_experiment,
)
from .rng import as_generator, as_seed_sequence, digest, substream

__version__ = "0.1.0"
