"""Reader geometry: critical angle and camera placement validation.

An FTIR camera must sit above the glass/air critical angle (it images the
total-internal-reflection pattern frustrated by ridge contact); a direct-view
camera must sit below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class GeometryError(ValueError):
    """Raised for physically impossible refractive-index or angle inputs."""


def critical_angle(n_glass: float, n_air: float) -> float:
    """Critical angle in degrees for light passing from glass into air.

    arcsin(n_air / n_glass); requires n_glass >= n_air > 0, otherwise no
    total-internal-reflection regime exists.
    """
    if not (n_air > 0.0 and n_glass > 0.0):
        raise GeometryError(f"refractive indices must be positive, got {n_glass}, {n_air}")
    if n_air > n_glass:
        raise GeometryError(
            f"no total internal reflection for n_air={n_air} > n_glass={n_glass}"
        )
    return math.degrees(math.asin(n_air / n_glass))


@dataclass(frozen=True)
class GeometrySpec:
    """Refractive indices and camera mounting angles of a dual-camera reader."""

    n_glass: float
    n_air: float
    theta_direct_deg: float
    theta_ftir_deg: float
    camera_distance_mm: float = 23.0

    def __post_init__(self):
        if not (self.n_glass > self.n_air > 0.0):
            raise GeometryError(
                f"need n_glass > n_air > 0, got n_glass={self.n_glass}, n_air={self.n_air}"
            )
        if not (0.0 <= self.theta_direct_deg < 90.0):
            raise GeometryError(f"direct angle out of range: {self.theta_direct_deg}")
        if not (0.0 < self.theta_ftir_deg < 90.0):
            raise GeometryError(f"FTIR angle out of range: {self.theta_ftir_deg}")


@dataclass(frozen=True)
class PlacementReport:
    critical_angle_deg: float
    direct_ok: bool
    ftir_ok: bool

    @property
    def ok(self) -> bool:
        return self.direct_ok and self.ftir_ok

    def describe(self) -> str:
        lines = [
            f"critical angle: {self.critical_angle_deg:.2f} deg",
            f"direct camera below critical angle: {'ok' if self.direct_ok else 'VIOLATION'}",
            f"FTIR camera above critical angle:   {'ok' if self.ftir_ok else 'VIOLATION'}",
        ]
        return "\n".join(lines)


def validate_geometry(spec: GeometrySpec) -> PlacementReport:
    """Check that the direct camera sits strictly below and the FTIR camera
    strictly above the critical angle."""
    theta_c = critical_angle(spec.n_glass, spec.n_air)
    return PlacementReport(
        critical_angle_deg=theta_c,
        direct_ok=spec.theta_direct_deg < theta_c,
        ftir_ok=spec.theta_ftir_deg > theta_c,
    )
