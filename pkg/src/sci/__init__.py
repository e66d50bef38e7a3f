"""Symmetric dual-tower alignment and consistency-oriented IVF indexing."""

from . import (clustering, core, data_io, diagnostics, encoder, evaluation,
               ivf, quantization, training)
from .errors import SciError

__all__ = ["clustering", "core", "data_io", "diagnostics", "encoder",
           "evaluation", "ivf", "quantization", "training", "SciError"]

__version__ = "0.1.0"
