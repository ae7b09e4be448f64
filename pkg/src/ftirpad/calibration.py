"""Perspective calibration from checkerboard correspondences.

Estimates the 8-parameter plane projective map

    [x', y', 1]^T = (1 / lambda) [[a, b, c], [d, e, f], [g, h, 1]] [x, y, 1]^T
    lambda = g x + h y + 1

by normalized linear least squares, applies it to images with bilinear
resampling, and derives the native resolution map (ppi per grid cell) from
corner spacings of a board with known physical pitch.

Corner detection is out of scope: correspondences come from the simulator's
ground truth or an external JSON file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .imageops import GRAY, Image, ImageError, _round_u8

TRANSFORM_FORMAT_VERSION = 1


class CalibrationError(ValueError):
    """Raised for degenerate, underdetermined, or malformed calibration input."""


@dataclass(frozen=True)
class PerspectiveTransform:
    """The 8 projective parameters (a, b, c, d, e, f, g, h)."""

    params: tuple[float, float, float, float, float, float, float, float]

    def __post_init__(self):
        if len(self.params) != 8:
            raise CalibrationError(f"need 8 parameters, got {len(self.params)}")
        if not np.all(np.isfinite(self.params)):
            raise CalibrationError("non-finite transform parameters")

    @property
    def matrix(self) -> np.ndarray:
        a, b, c, d, e, f, g, h = self.params
        return np.array([[a, b, c], [d, e, f], [g, h, 1.0]], dtype=np.float64)

    def is_invertible(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        norm = np.linalg.norm(m, axis=1, keepdims=True)
        return abs(np.linalg.det(m / norm)) > tol

    def map_points(self, pts: np.ndarray) -> np.ndarray:
        """Forward-map (N, 2) source points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        hom = np.hstack([pts, np.ones((pts.shape[0], 1))])
        mapped = hom @ self.matrix.T
        lam = mapped[:, 2:3]
        if np.any(np.abs(lam) < 1e-15):
            raise CalibrationError("point maps to infinity (lambda ~ 0)")
        return mapped[:, :2] / lam

    def inverse(self) -> "PerspectiveTransform":
        if not self.is_invertible():
            raise CalibrationError("transform is not invertible")
        inv = np.linalg.inv(self.matrix)
        inv = inv / inv[2, 2]
        return PerspectiveTransform(tuple(inv.ravel()[:8]))

    @staticmethod
    def identity() -> "PerspectiveTransform":
        return PerspectiveTransform((1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "PerspectiveTransform":
        m = np.asarray(m, dtype=np.float64)
        if abs(m[2, 2]) < 1e-15:
            raise CalibrationError("matrix has vanishing normalization entry")
        m = m / m[2, 2]
        return PerspectiveTransform(tuple(m.ravel()[:8]))


@dataclass(frozen=True)
class Correspondences:
    """Paired (source pixel, destination pixel) coordinates."""

    src: np.ndarray  # (N, 2)
    dst: np.ndarray  # (N, 2)

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.float64)
        dst = np.asarray(self.dst, dtype=np.float64)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
            raise CalibrationError(f"bad correspondence shapes {src.shape} / {dst.shape}")
        if src.shape[0] < 4:
            raise CalibrationError(f"need >= 4 pairs, got {src.shape[0]}")
        if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
            raise CalibrationError("non-finite coordinates")

    def __len__(self) -> int:
        return self.src.shape[0]

    @staticmethod
    def from_json(path) -> "Correspondences":
        with open(path, "r", encoding="utf-8") as fh:
            pairs = json.load(fh)
        src = np.array([p["src"] for p in pairs], dtype=np.float64)
        dst = np.array([p["dst"] for p in pairs], dtype=np.float64)
        return Correspondences(src, dst)

    def to_json(self, path) -> None:
        pairs = [
            {"src": [float(s[0]), float(s[1])], "dst": [float(d[0]), float(d[1])]}
            for s, d in zip(self.src, self.dst)
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(pairs, fh, indent=2)


@dataclass(frozen=True)
class ResidualReport:
    rms_px: float
    max_px: float


def _normalizing_similarity(pts: np.ndarray) -> np.ndarray:
    """Translate centroid to origin and scale RMS distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    if rms < 1e-12:
        raise CalibrationError("degenerate correspondences: coincident points")
    s = np.sqrt(2.0) / rms
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def estimate_perspective(
    c: Correspondences,
) -> tuple[PerspectiveTransform, ResidualReport]:
    """Least-squares fit of the projective parameters.

    Each pair contributes two linear equations in the 8 unknowns. Source and
    destination coordinates are similarity-normalized first (unnormalized
    8-point systems are ill-conditioned at pixel scales), then the solution
    is de-normalized. Residuals are reprojection errors in destination pixels.
    """
    t_src = _normalizing_similarity(c.src)
    t_dst = _normalizing_similarity(c.dst)
    src_h = np.hstack([c.src, np.ones((len(c), 1))]) @ t_src.T
    dst_h = np.hstack([c.dst, np.ones((len(c), 1))]) @ t_dst.T
    sx, sy = src_h[:, 0], src_h[:, 1]
    dx, dy = dst_h[:, 0], dst_h[:, 1]

    n = len(c)
    a_mat = np.zeros((2 * n, 8))
    rhs = np.zeros(2 * n)
    a_mat[0::2, 0] = sx
    a_mat[0::2, 1] = sy
    a_mat[0::2, 2] = 1.0
    a_mat[0::2, 6] = -sx * dx
    a_mat[0::2, 7] = -sy * dx
    rhs[0::2] = dx
    a_mat[1::2, 3] = sx
    a_mat[1::2, 4] = sy
    a_mat[1::2, 5] = 1.0
    a_mat[1::2, 6] = -sx * dy
    a_mat[1::2, 7] = -sy * dy
    rhs[1::2] = dy

    rank = np.linalg.matrix_rank(a_mat, tol=1e-9 * max(1.0, np.linalg.norm(a_mat)))
    if rank < 8:
        raise CalibrationError(
            f"degenerate correspondence geometry: system rank {rank} < 8 "
            "(collinear or coincident points)"
        )
    params, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)
    h_norm = np.array(
        [
            [params[0], params[1], params[2]],
            [params[3], params[4], params[5]],
            [params[6], params[7], 1.0],
        ]
    )
    h_full = np.linalg.inv(t_dst) @ h_norm @ t_src
    transform = PerspectiveTransform.from_matrix(h_full)

    errs = np.linalg.norm(transform.map_points(c.src) - c.dst, axis=1)
    report = ResidualReport(
        rms_px=float(np.sqrt(np.mean(errs**2))), max_px=float(np.max(errs))
    )
    return transform, report


def apply_perspective(
    t: PerspectiveTransform, img: Image, out_dims: tuple[int, int]
) -> Image:
    """Warp ``img`` by ``t``: out(x', y') samples in at t^-1(x', y').

    Bilinear interpolation; samples outside the source fill with white (255),
    matching the fingerprint convention of white valleys/background.
    """
    out_w, out_h = out_dims
    if out_w < 1 or out_h < 1:
        raise ImageError(f"zero-area output dims {out_dims}")
    inv = t.inverse().matrix

    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    lam = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    lam = np.where(np.abs(lam) < 1e-15, np.nan, lam)
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / lam
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / lam

    data = img.data
    if data.ndim == 2:
        data = data[:, :, None]
    h, w = img.height, img.width
    # pad with white so border samples interpolate toward the fill value
    padded = np.full((h + 2, w + 2, data.shape[2]), 255.0)
    padded[1:-1, 1:-1] = data

    px = sx + 1.0
    py = sy + 1.0
    valid = np.isfinite(px) & np.isfinite(py) & (px >= 0) & (py >= 0) \
        & (px <= w + 1) & (py <= h + 1)
    px = np.where(valid, px, 0.0)
    py = np.where(valid, py, 0.0)
    x0 = np.clip(np.floor(px).astype(np.int64), 0, w)
    y0 = np.clip(np.floor(py).astype(np.int64), 0, h)
    fx = (px - x0)[:, :, None]
    fy = (py - y0)[:, :, None]
    tl = padded[y0, x0]
    tr = padded[y0, x0 + 1]
    bl = padded[y0 + 1, x0]
    br = padded[y0 + 1, x0 + 1]
    interp = (
        tl * (1 - fx) * (1 - fy)
        + tr * fx * (1 - fy)
        + bl * (1 - fx) * fy
        + br * fx * fy
    )
    interp = np.where(valid[:, :, None], interp, 255.0)
    out = _round_u8(interp)
    if img.channels == 1:
        out = out[:, :, 0]
    return Image(out, img.color_space)


@dataclass(frozen=True)
class ResolutionMap:
    """Per-cell native resolution samples over the image."""

    ppi_x: np.ndarray  # (rows, cols - 1)
    ppi_y: np.ndarray  # (rows - 1, cols)

    def __post_init__(self):
        if np.any(self.ppi_x <= 0) or np.any(self.ppi_y <= 0):
            raise CalibrationError("non-positive ppi in resolution map")

    @property
    def x_range(self) -> tuple[float, float]:
        return float(self.ppi_x.min()), float(self.ppi_x.max())

    @property
    def y_range(self) -> tuple[float, float]:
        return float(self.ppi_y.min()), float(self.ppi_y.max())


def _grid_indices(coords: np.ndarray, tol: float) -> np.ndarray:
    order = np.argsort(coords)
    idx = np.empty(coords.shape[0], dtype=np.int64)
    current = 0
    idx[order[0]] = 0
    for prev, nxt in zip(order[:-1], order[1:]):
        if coords[nxt] - coords[prev] > tol:
            current += 1
        idx[nxt] = current
    return idx


def estimate_resolution(c: Correspondences, square_size_mm: float) -> ResolutionMap:
    """Native resolution from checkerboard corner spacings.

    Destination coordinates must form a regular grid (the ideal frontal
    board); per cell, ppi = 25.4 * source-pixel span between adjacent
    corners / physical pitch in mm.
    """
    if square_size_mm <= 0:
        raise CalibrationError(f"square size must be positive, got {square_size_mm}")
    span = max(np.ptp(c.dst[:, 0]), np.ptp(c.dst[:, 1]))
    tol = 1e-6 * max(span, 1.0)
    col = _grid_indices(c.dst[:, 0], tol)
    row = _grid_indices(c.dst[:, 1], tol)
    n_cols = int(col.max()) + 1
    n_rows = int(row.max()) + 1
    if n_rows < 2 or n_cols < 2 or len(c) != n_rows * n_cols:
        raise CalibrationError(
            f"correspondences do not form a full grid: {len(c)} points "
            f"for {n_rows}x{n_cols} lattice"
        )
    grid_src = np.full((n_rows, n_cols, 2), np.nan)
    grid_src[row, col] = c.src
    if np.any(np.isnan(grid_src)):
        raise CalibrationError("duplicate or missing grid positions in correspondences")

    dx = np.linalg.norm(np.diff(grid_src, axis=1), axis=2)
    dy = np.linalg.norm(np.diff(grid_src, axis=0), axis=2)
    return ResolutionMap(ppi_x=25.4 * dx / square_size_mm,
                         ppi_y=25.4 * dy / square_size_mm)


def synth_checkerboard(
    rows: int,
    cols: int,
    square_px: int,
    transform: PerspectiveTransform,
    out_dims: tuple[int, int] | None = None,
) -> tuple[Image, np.ndarray]:
    """Render an ideal checkerboard, warp it, and return ground-truth corners.

    Returns the warped image and the forward-mapped interior corner lattice
    as an (n, 2) array ordered row-major over the ideal grid.
    """
    if rows < 3 or cols < 3:
        raise CalibrationError(f"need rows, cols >= 3, got {rows}x{cols}")
    h, w = rows * square_px, cols * square_px
    rr, cc = np.meshgrid(np.arange(h) // square_px, np.arange(w) // square_px,
                         indexing="ij")
    board = np.where((rr + cc) % 2 == 0, 255, 0).astype(np.uint8)
    ideal = Image(board, GRAY)

    gx, gy = np.meshgrid(np.arange(1, cols) * float(square_px),
                         np.arange(1, rows) * float(square_px))
    ideal_corners = np.column_stack([gx.ravel(), gy.ravel()])
    warped_corners = transform.map_points(ideal_corners)
    dims = out_dims if out_dims is not None else (w, h)
    warped = apply_perspective(transform, ideal, dims)
    return warped, warped_corners


def save_transform(path, t: PerspectiveTransform, residual_rms_px: float) -> None:
    doc = {
        "format_version": TRANSFORM_FORMAT_VERSION,
        "params": [float(p) for p in t.params],
        "residual_rms_px": float(residual_rms_px),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def load_transform(path) -> tuple[PerspectiveTransform, float]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return PerspectiveTransform(tuple(doc["params"])), float(doc["residual_rms_px"])
