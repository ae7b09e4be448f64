"""Dual-view FTIR fingerprint reader software stack.

Covers reader geometry checks, a synthetic dual-view image generator,
checkerboard perspective calibration, raw-to-matchable FTIR processing,
color local binary pattern features, linear SVM spoof classification with
fusion, and known/cross-material evaluation protocols.
"""

__version__ = "0.1.0"

from .geometry import GeometrySpec, critical_angle, validate_geometry
from .imageops import Image

__all__ = [
    "GeometrySpec",
    "critical_angle",
    "validate_geometry",
    "Image",
    "__version__",
]
