"""Two-sided nearest neighbor matrix completion."""
from .config import SCHEMA_VERSION
from .core import GroundTruth, LatentModel, Mechanism, ObservedMatrix, Radii
from .estimators import (CompletionResult, allcol_complete, allrow_complete, colnn_complete, complete,
                         drnn_complete, rownn_complete, tsnn_complete)

__version__ = "0.1.0"

__all__ = [
    "SCHEMA_VERSION", "GroundTruth", "LatentModel", "Mechanism", "ObservedMatrix", "Radii",
    "CompletionResult", "allcol_complete", "allrow_complete", "colnn_complete", "complete",
    "drnn_complete", "rownn_complete", "tsnn_complete", "__version__",
]
