"""Raster image type and the raw-to-matchable processing operations.

A raw FTIR frame becomes a 500 ppi match-ready grayscale fingerprint via
grayscale conversion, histogram equalization, negation, perspective
frontalization, and box downsampling. The HSV conversion and box
downsampling here are also the preprocessing used by the color-LBP
feature extractor.

Conventions pinned for bit-exact reproducibility:
  * grayscale uses BT.601 luma weights (0.299, 0.587, 0.114)
  * scalar rounding is half-away-from-zero on non-negative values
  * histogram equalization maps a constant image to itself
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAY = "GRAY"
RGB = "RGB"
HSV = "HSV"


class ImageError(ValueError):
    """Raised for images violating the type contract of an operation."""


def _round_u8(x: np.ndarray) -> np.ndarray:
    """Round non-negative floats half-up, clip to [0, 255], cast to uint8."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Image:
    """8-bit raster with a color-space tag.

    ``data`` is row-major, shape (H, W) for GRAY or (H, W, 3) for RGB/HSV.
    """

    data: np.ndarray
    color_space: str = RGB
    ppi: tuple[float, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8:
            raise ImageError(f"image data must be uint8, got {d.dtype}")
        if self.color_space == GRAY:
            if d.ndim != 2:
                raise ImageError(f"GRAY image must be 2-D, got shape {d.shape}")
        elif self.color_space in (RGB, HSV):
            if d.ndim != 3 or d.shape[2] != 3:
                raise ImageError(
                    f"{self.color_space} image must be (H, W, 3), got shape {d.shape}"
                )
        else:
            raise ImageError(f"unknown color space {self.color_space!r}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ImageError(f"zero-area image: shape {d.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def to_grayscale(img: Image) -> Image:
    """BT.601 luma: gray = round(0.299 R + 0.587 G + 0.114 B)."""
    if img.color_space != RGB:
        raise ImageError(f"to_grayscale needs RGB input, got {img.color_space}")
    rgb = img.data.astype(np.float64)
    gray = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return Image(_round_u8(gray), GRAY, ppi=img.ppi)


def hist_equalize(img: Image) -> Image:
    """Global CDF-remap equalization; a constant image maps to itself."""
    if img.color_space != GRAY:
        raise ImageError(f"hist_equalize needs GRAY input, got {img.color_space}")
    flat = img.data.ravel()
    hist = np.bincount(flat, minlength=256)
    cdf = np.cumsum(hist)
    n = flat.size
    nonzero = cdf[hist > 0]
    cdf_min = int(nonzero[0])
    if cdf_min == n:
        # single gray level: the textbook formula divides by zero here
        return Image(img.data.copy(), GRAY, ppi=img.ppi)
    lut = _round_u8(255.0 * (cdf - cdf_min) / (n - cdf_min))
    return Image(lut[img.data], GRAY, ppi=img.ppi)


def negate(img: Image) -> Image:
    """out = 255 - in; makes ridges dark on a white background."""
    if img.color_space != GRAY:
        raise ImageError(f"negate needs GRAY input, got {img.color_space}")
    return Image((255 - img.data.astype(np.int16)).astype(np.uint8), GRAY, ppi=img.ppi)


def _box_axis_starts(src: int, dst: int) -> np.ndarray:
    """Start indices partitioning ``src`` samples into ``dst`` footprints.

    Source index c belongs to output cell floor(c * dst / src), so cell j
    starts at ceil(j * src / dst).
    """
    j = np.arange(dst, dtype=np.int64)
    return -(-(j * src) // dst)  # ceil division


def downsample_box(img: Image, target_w: int, target_h: int) -> Image:
    """Area-mapped box downsampling: each output pixel is the unweighted mean
    (rounded to nearest) of its source-pixel footprint; channels independent."""
    h, w = img.height, img.width
    if target_w > w or target_h > h or target_w < 1 or target_h < 1:
        raise ImageError(
            f"downsample target {target_w}x{target_h} invalid for source {w}x{h}"
        )
    data = img.data.astype(np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    col_starts = _box_axis_starts(w, target_w)
    row_starts = _box_axis_starts(h, target_h)
    col_counts = np.diff(np.append(col_starts, w))
    row_counts = np.diff(np.append(row_starts, h))
    summed = np.add.reduceat(data, col_starts, axis=1)
    summed = np.add.reduceat(summed, row_starts, axis=0)
    mean = summed / (row_counts[:, None, None] * col_counts[None, :, None])
    out = _round_u8(mean)
    if img.channels == 1:
        out = out[:, :, 0]
    return Image(out, img.color_space)


def rgb_to_hsv(img: Image) -> Image:
    """Hexcone RGB->HSV with all channels scaled to [0, 255].

    H maps [0, 360) degrees to round(H / 360 * 255); achromatic pixels get
    H = 0 by convention.
    """
    if img.color_space != RGB:
        raise ImageError(f"rgb_to_hsv needs RGB input, got {img.color_space}")
    rgb = img.data.astype(np.float64)
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    maxc = np.max(rgb, axis=2)
    minc = np.min(rgb, axis=2)
    delta = maxc - minc
    v = maxc

    s = np.zeros_like(maxc)
    np.divide(delta * 255.0, maxc, out=s, where=maxc > 0)

    h_deg = np.zeros_like(maxc)
    chromatic = delta > 0
    safe = np.where(chromatic, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h6 = np.zeros_like(maxc)
    is_r = chromatic & (maxc == r)
    is_g = chromatic & ~is_r & (maxc == g)
    is_b = chromatic & ~is_r & ~is_g
    h6[is_r] = bc[is_r] - gc[is_r]
    h6[is_g] = 2.0 + rc[is_g] - bc[is_g]
    h6[is_b] = 4.0 + gc[is_b] - rc[is_b]
    h_deg = np.mod(h6 * 60.0, 360.0)
    h = h_deg / 360.0 * 255.0

    out = np.stack([_round_u8(h), _round_u8(s), _round_u8(v)], axis=2)
    return Image(out, HSV)


def hsv_to_rgb(img: Image) -> Image:
    """Inverse hexcone conversion for the [0, 255]-scaled HSV encoding."""
    if img.color_space != HSV:
        raise ImageError(f"hsv_to_rgb needs HSV input, got {img.color_space}")
    hsv = img.data.astype(np.float64)
    h6 = hsv[:, :, 0] / 255.0 * 6.0
    s = hsv[:, :, 1] / 255.0
    v = hsv[:, :, 2]
    i = np.floor(h6) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [v, q, p, p, t, v])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, v, v, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, v, v, q])
    return Image(np.stack([_round_u8(r), _round_u8(g), _round_u8(b)], axis=2), RGB)


def process_ftir(raw: Image, transform, native_ppi: tuple[float, float]) -> Image:
    """Raw FTIR RGB frame -> 500 ppi match-ready grayscale.

    Composition: grayscale -> equalize -> negate -> frontalize with
    ``transform`` -> box-downsample by (500 / ppi_x, 500 / ppi_y).
    Equalization precedes the warp so interpolation does not alter the
    histogram the equalizer sees.
    """
    from .calibration import apply_perspective

    ppi_x, ppi_y = native_ppi
    if ppi_x <= 0 or ppi_y <= 0:
        raise ImageError(f"native ppi must be positive, got {native_ppi}")
    img = negate(hist_equalize(to_grayscale(raw)))
    img = apply_perspective(transform, img, (img.width, img.height))
    target_w = max(1, int(np.floor(img.width * 500.0 / ppi_x + 0.5)))
    target_h = max(1, int(np.floor(img.height * 500.0 / ppi_y + 0.5)))
    out = downsample_box(img, target_w, target_h)
    return Image(out.data, GRAY, ppi=(500.0, 500.0))
