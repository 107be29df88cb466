"""Transport-inspired distances between rational (all-pole) spectra."""

from .interpolation import (
    BarycenterResult,
    BarycentricCoordinates,
    InterpolationPath,
    barycenter_ot,
    barycenter_rd,
    barycentric_coordinates,
    coordinates_rd_leastsquares,
    interpolate_rd,
    interpolate_w2,
    root_vector,
)
from .learning import (
    ClusterAssignment,
    ClusterConfig,
    EmbeddingIndex,
    RootEmbedding,
    kbarycenter_cluster,
    knn_classify,
    pca_embed,
)
from .metrics import (
    DistanceResult,
    MetricConfig,
    distance,
    optimal_assignment,
    otrd,
    pole_measure,
    rd,
    sort_poles,
    w_closed,
    w_discrete,
    welch_periodogram,
    wrd,
)
from .model import (
    CumulativeSpectrum,
    DiscreteSpectrum,
    FitError,
    RationalModel,
    RepeatedPoleError,
    ResidueWeights,
    Signal,
    UnstableModelError,
    cumulative_spectrum,
    evaluate_spectrum,
    fit_ar,
    inverse_cumulative,
    normalize_energy,
    polynomial_roots,
    residues,
    scale_poles,
    spectral_energy,
)
from .transport import (
    ConvergenceError,
    DiscreteMeasure,
    TransportConfig,
    TransportPlan,
    cost_matrix,
    exact_ot,
    sinkhorn,
    unbalanced_sinkhorn,
)

__version__ = "0.1.0"

__all__ = [
    "BarycenterResult",
    "BarycentricCoordinates",
    "ClusterAssignment",
    "ClusterConfig",
    "ConvergenceError",
    "CumulativeSpectrum",
    "DiscreteMeasure",
    "DiscreteSpectrum",
    "DistanceResult",
    "EmbeddingIndex",
    "FitError",
    "InterpolationPath",
    "MetricConfig",
    "RationalModel",
    "RepeatedPoleError",
    "ResidueWeights",
    "RootEmbedding",
    "Signal",
    "TransportConfig",
    "TransportPlan",
    "UnstableModelError",
    "barycenter_ot",
    "barycenter_rd",
    "barycentric_coordinates",
    "coordinates_rd_leastsquares",
    "cost_matrix",
    "cumulative_spectrum",
    "distance",
    "evaluate_spectrum",
    "exact_ot",
    "fit_ar",
    "interpolate_rd",
    "interpolate_w2",
    "inverse_cumulative",
    "kbarycenter_cluster",
    "knn_classify",
    "normalize_energy",
    "optimal_assignment",
    "otrd",
    "pca_embed",
    "pole_measure",
    "polynomial_roots",
    "rd",
    "residues",
    "root_vector",
    "scale_poles",
    "sinkhorn",
    "sort_poles",
    "spectral_energy",
    "unbalanced_sinkhorn",
    "w_closed",
    "w_discrete",
    "welch_periodogram",
    "wrd",
]
