"""Memory-efficient Jaccard similarity sketches for streaming sets."""

from .analysis import ALPHA, AccuracyModel, alpha_n, alpha_n_closed_form, approx_variance, required_k
from .baselines import HllSketch, MinHashSketch
from .errors import (
    ConfigurationError,
    DomainError,
    EmptySketchError,
    IncompatibleSketchError,
    InsufficientDataError,
    ParseError,
    SketchError,
)
from .oph import OphSketch
from .sketch import JaccardEstimate, MaxLogSketch, estimate_jaccard
from .stream import SetPairSpec, SketchStore, generate_pair

__all__ = [
    "ALPHA",
    "AccuracyModel",
    "ConfigurationError",
    "DomainError",
    "EmptySketchError",
    "HllSketch",
    "IncompatibleSketchError",
    "InsufficientDataError",
    "JaccardEstimate",
    "MaxLogSketch",
    "MinHashSketch",
    "OphSketch",
    "ParseError",
    "SetPairSpec",
    "SketchError",
    "SketchStore",
    "alpha_n",
    "alpha_n_closed_form",
    "approx_variance",
    "estimate_jaccard",
    "generate_pair",
    "required_k",
]

__version__ = "0.1.0"
