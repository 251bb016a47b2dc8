"""sparsenorm: sparse probability normalizers with closed-form gradients,
an independent evidential-fusion oracle, and a desk-scale generative
benchmark comparing them."""

__version__ = "0.1.0"

from .backend import ACTIVE as BACKEND
from .errors import (
    BoundaryError,
    ConfigError,
    DivergenceError,
    ShapeError,
    SparsenormError,
    SubsetError,
    TotalConflictError,
)
from .evidential import (
    EvidentialWeights,
    LinearLayer,
    MassFunction,
    combine_simple,
    dempster_combine,
    evidential_weights,
    posthoc_filter,
    simple_mass_functions,
    singleton_masses,
    subset_mass,
)
from .normalize import (
    BOUNDARY_MARGIN,
    DEFAULT_EPS,
    Distribution,
    center,
    entmax15,
    ev_softmax,
    ev_softmax_strict,
    ev_softmax_train,
    grad_log_ev_softmax_train,
    grad_loss_entmax15,
    grad_loss_sparsemax,
    jacobian_entmax15,
    jacobian_ev_softmax,
    jacobian_softmax,
    jacobian_sparsemax,
    softmax,
    sparsemax,
)
from .numerics import (
    DistanceReport,
    RngStream,
    distance_report,
    eps_kl,
    finite_diff_jacobian,
    kl_divergence,
    lipschitz_probe,
    tv_distance,
    w1_line,
)

__all__ = [
    "BACKEND",
    "BOUNDARY_MARGIN",
    "DEFAULT_EPS",
    "BoundaryError",
    "ConfigError",
    "DistanceReport",
    "Distribution",
    "DivergenceError",
    "EvidentialWeights",
    "LinearLayer",
    "MassFunction",
    "RngStream",
    "ShapeError",
    "SparsenormError",
    "SubsetError",
    "TotalConflictError",
    "center",
    "combine_simple",
    "dempster_combine",
    "distance_report",
    "entmax15",
    "eps_kl",
    "ev_softmax",
    "ev_softmax_strict",
    "ev_softmax_train",
    "evidential_weights",
    "finite_diff_jacobian",
    "grad_log_ev_softmax_train",
    "grad_loss_entmax15",
    "grad_loss_sparsemax",
    "jacobian_entmax15",
    "jacobian_ev_softmax",
    "jacobian_softmax",
    "jacobian_sparsemax",
    "kl_divergence",
    "lipschitz_probe",
    "posthoc_filter",
    "simple_mass_functions",
    "singleton_masses",
    "softmax",
    "sparsemax",
    "subset_mass",
    "tv_distance",
    "w1_line",
]
