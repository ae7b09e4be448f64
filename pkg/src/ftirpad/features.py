"""Multi-scale rotation-invariant uniform LBP and cross-channel color LBP.

The grayscale descriptor concatenates riu2 histograms at scales
(8,1), (16,2), (24,3) into 54 values. The color descriptor runs the same
operator over every ordered (center channel, neighbor channel) pair of a
3-channel image, 9 x 54 = 486 values, after box-downsampling and HSV
conversion. Conventions pinned here:

  * neighbors sampled at angles 2*pi*k/P on the radius-R circle with
    bilinear interpolation (offsets snapped at 1e-8 to kill FP jitter)
  * tie rule: neighbor >= center encodes 1
  * pixels closer than R to the border are excluded, not padded
  * each histogram is individually L1-normalized
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .imageops import GRAY, HSV, Image, ImageError, downsample_box, rgb_to_hsv, to_grayscale

FEATURE_FORMAT_VERSION = 1
FEATURE_MAGIC = b"FPFV"

DEFAULT_SCALES: tuple[tuple[int, int], ...] = ((8, 1), (16, 2), (24, 3))

# width x height the color descriptor downsamples each view to
CLBP_INPUT_DIMS = {"ftir": (145, 108), "direct": (145, 96)}

LBP_KIND = "LBP"
CLBP_KIND = "CLBP"
FUSED_KIND = "FUSED"


class FeatureError(ValueError):
    """Raised for inputs violating a descriptor contract."""


@dataclass(frozen=True)
class LbpConfig:
    scales: tuple[tuple[int, int], ...] = DEFAULT_SCALES

    def __post_init__(self):
        if not self.scales:
            raise FeatureError("at least one (P, R) scale required")
        for p, r in self.scales:
            if p < 4 or r < 1:
                raise FeatureError(f"invalid scale (P={p}, R={r})")

    @property
    def dim(self) -> int:
        return sum(p + 2 for p, _ in self.scales)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    kind: str
    empty_blocks: tuple[int, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise FeatureError(f"feature vector must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise FeatureError("non-finite feature values")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def riu2_code(bits: np.ndarray) -> np.ndarray:
    """Map stacked neighbor bits (P, ...) to riu2 bins.

    Patterns with <= 2 circular 0/1 transitions map to their popcount
    (0..P); all others map to the non-uniform bin P+1.
    """
    p = bits.shape[0]
    transitions = np.sum(bits != np.roll(bits, -1, axis=0), axis=0)
    counts = np.sum(bits, axis=0)
    return np.where(transitions <= 2, counts, p + 1)


def _neighbor_offsets(p: int, r: int) -> np.ndarray:
    k = np.arange(p, dtype=np.float64)
    angles = 2.0 * np.pi * k / p
    dx = r * np.cos(angles)
    dy = r * np.sin(angles)
    return np.round(np.stack([dy, dx], axis=1), 8)


def _shifted_bilinear(arr: np.ndarray, dy: float, dx: float, margin: int) -> np.ndarray:
    """Sample ``arr`` at (y + dy, x + dx) for every interior pixel.

    The offset is constant, so bilinear interpolation reduces to a weighted
    sum of four integer-shifted slices.
    """
    h, w = arr.shape
    y0 = int(np.floor(dy))
    x0 = int(np.floor(dx))
    fy = dy - y0
    fx = dx - x0
    # integral offsets need no second slice (and must not overrun the margin)
    y1 = y0 + 1 if fy > 0 else y0
    x1 = x0 + 1 if fx > 0 else x0

    def sl(oy, ox):
        return arr[margin + oy: h - margin + oy, margin + ox: w - margin + ox]

    return (
        sl(y0, x0) * (1 - fy) * (1 - fx)
        + sl(y0, x1) * (1 - fy) * fx
        + sl(y1, x0) * fy * (1 - fx)
        + sl(y1, x1) * fy * fx
    )


def lbp_hist(
    center_ch: np.ndarray, neighbor_ch: np.ndarray, p: int, r: int
) -> np.ndarray:
    """L1-normalized riu2 histogram (P+2 bins) thresholding ``neighbor_ch``
    circle samples against ``center_ch`` pixels."""
    center = np.asarray(center_ch, dtype=np.float64)
    neighbor = np.asarray(neighbor_ch, dtype=np.float64)
    if center.shape != neighbor.shape or center.ndim != 2:
        raise FeatureError(
            f"channel shape mismatch: {center.shape} vs {neighbor.shape}"
        )
    h, w = center.shape
    if h <= 2 * r or w <= 2 * r:
        raise FeatureError(f"image {w}x{h} too small for radius {r}")

    margin = int(r)
    interior = center[margin: h - margin, margin: w - margin]
    bits = np.empty((p,) + interior.shape, dtype=bool)
    for k, (dy, dx) in enumerate(_neighbor_offsets(p, r)):
        bits[k] = _shifted_bilinear(neighbor, dy, dx, margin) >= interior

    codes = riu2_code(bits)
    hist = np.bincount(codes.ravel(), minlength=p + 2).astype(np.float64)
    total = hist.sum()
    if total == 0:
        return hist
    return hist / total


def lbp_descriptor(img: Image, cfg: LbpConfig = LbpConfig()) -> FeatureVector:
    """Concatenated riu2 histograms of a grayscale image over all scales."""
    if img.color_space != GRAY:
        raise ImageError(f"lbp_descriptor needs GRAY input, got {img.color_space}")
    parts = [lbp_hist(img.data, img.data, p, r) for p, r in cfg.scales]
    return FeatureVector(np.concatenate(parts), LBP_KIND)


def prepare_clbp_input(img: Image, view: str) -> Image:
    """Downsample a raw RGB view to its descriptor size and convert to HSV."""
    if view not in CLBP_INPUT_DIMS:
        raise FeatureError(f"unknown view {view!r}; expected one of {sorted(CLBP_INPUT_DIMS)}")
    if img.color_space != "RGB":
        raise ImageError(f"prepare_clbp_input needs RGB input, got {img.color_space}")
    w, h = CLBP_INPUT_DIMS[view]
    return rgb_to_hsv(downsample_box(img, w, h))


def clbp_descriptor(img: Image, cfg: LbpConfig = LbpConfig()) -> FeatureVector:
    """Cross-channel LBP over all ordered channel pairs of a 3-channel image.

    Outer loop over the center channel i, inner over the neighbor channel j,
    appending the per-scale histograms for each (i, j) in turn.
    """
    if img.channels != 3:
        raise FeatureError(f"clbp_descriptor needs a 3-channel image, got {img.channels}")
    chans = [img.data[:, :, k].astype(np.float64) for k in range(3)]
    parts = []
    for center in chans:
        for neigh in chans:
            for p, r in cfg.scales:
                parts.append(lbp_hist(center, neigh, p, r))
    return FeatureVector(np.concatenate(parts), CLBP_KIND)


def grayscale_lbp_from_view(img: Image, view: str, cfg: LbpConfig = LbpConfig()) -> FeatureVector:
    """Grayscale LBP descriptor of a raw view at the color descriptor's size."""
    w, h = CLBP_INPUT_DIMS.get(view, CLBP_INPUT_DIMS["ftir"])
    return lbp_descriptor(to_grayscale(downsample_box(img, w, h)), cfg)


def fuse_features(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Feature-level fusion: concatenation in argument order."""
    return FeatureVector(
        np.concatenate([a.values, b.values]),
        FUSED_KIND,
        empty_blocks=a.empty_blocks + tuple(i + a.dim for i in b.empty_blocks),
    )


def save_features(path, matrix: np.ndarray, kind: str, index: list | None = None) -> None:
    """Binary feature container: magic, JSON header, then little-endian
    float64 rows. A sidecar ``<path>.index.json`` maps rows to sample ids."""
    matrix = np.ascontiguousarray(np.atleast_2d(matrix), dtype="<f8")
    header = {
        "format_version": FEATURE_FORMAT_VERSION,
        "descriptor_kind": kind,
        "dim": int(matrix.shape[1]),
        "count": int(matrix.shape[0]),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(matrix.tobytes())
    if index is not None:
        with open(str(path) + ".index.json", "w", encoding="utf-8") as fh:
            json.dump(index, fh, indent=2)


def load_features(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FEATURE_MAGIC:
            raise FeatureError(f"not a feature file: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    matrix = data.reshape(header["count"], header["dim"])
    return matrix, header
