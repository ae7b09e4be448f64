"""Synthetic dual-view (FTIR + direct) fingerprint capture.

Stands in for the physical reader: renders deterministic live and spoof
impressions of a seeded ridge pattern, applies the failure-to-capture gate,
and writes reproducible datasets with a JSON manifest.

Rendering model: an oriented sinusoidal ridge field (seeded smooth warp of a
parallel-ridge pattern) is thresholded to a contact mask inside an elliptical
finger footprint. The FTIR view shows ridge-contact pixels bright against a
dark background, scaled by material albedo and lightly tinted; the direct
view shows the whole finger surface in skin/material color with low ridge
contrast. Spoof transparency blends material color toward skin color in the
direct view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from .imageops import GRAY, HSV, RGB, Image, _round_u8, hsv_to_rgb, to_grayscale
from .rng import PRNG_NAME, substream

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

FTIR_BACKGROUND = 8.0
FTIR_VALLEY = 12.0
FTIR_RIDGE_PEAK = 235.0
DIRECT_BACKGROUND = 30.0
# the FTIR return is LED glow, not surface color: a fixed warm tint that the
# material can shift in hue but whose saturation stays low and constant
FTIR_TINT_HUE = 20
FTIR_TINT_SAT = 18.0
LIVE_NOISE_SIGMA = 2.0

# canonical material ids, in the order spoof data was tabulated
MATERIAL_ORDER = (
    "ecoflex",
    "wood_glue",
    "monster_liquid_latex",
    "liquid_latex_body_paint",
    "gelatin",
    "silver_coated_ecoflex",
    "crayola_model_magic",
)


class SimulationError(ValueError):
    """Raised for invalid simulator configuration or output collisions."""


@dataclass(frozen=True)
class FingerSpec:
    """A synthetic finger identity; (subject_id, finger_id, seed) fully
    determines the base ridge pattern."""

    subject_id: str
    finger_id: str
    ridge_frequency: float = 14.0
    ridge_orientation_field_seed: int = 0
    skin_hue: int = 14
    skin_saturation: int = 110

    def __post_init__(self):
        if not (0 <= self.skin_hue <= 255 and 0 <= self.skin_saturation <= 255):
            raise SimulationError("skin hue/saturation must be in [0, 255]")
        if self.ridge_frequency <= 0:
            raise SimulationError("ridge frequency must be positive")


@dataclass(frozen=True)
class MaterialSpec:
    """Optical behavior of a spoof material.

    albedo 0 models a fully absorptive (black) spoof; transparency 1 models
    a fully transparent overlay that passes the skin color through in the
    direct view.
    """

    name: str
    hue_shift: int = 0
    saturation_scale: float = 1.0
    texture_noise_sigma: float = 4.0
    transparency: float = 0.0
    albedo: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.transparency <= 1.0):
            raise SimulationError(f"transparency out of [0,1]: {self.transparency}")
        if not (0.0 <= self.albedo <= 1.0):
            raise SimulationError(f"albedo out of [0,1]: {self.albedo}")


STOCK_MATERIALS: dict[str, MaterialSpec] = {
    "ecoflex": MaterialSpec("ecoflex", hue_shift=10, saturation_scale=0.6,
                            texture_noise_sigma=4.0, transparency=0.9, albedo=0.9),
    "wood_glue": MaterialSpec("wood_glue", hue_shift=26, saturation_scale=0.8,
                              texture_noise_sigma=6.0, transparency=0.3, albedo=0.85),
    "monster_liquid_latex": MaterialSpec("monster_liquid_latex", hue_shift=40,
                                         saturation_scale=1.1, texture_noise_sigma=5.0,
                                         transparency=0.2, albedo=0.8),
    "liquid_latex_body_paint": MaterialSpec("liquid_latex_body_paint", hue_shift=-32,
                                            saturation_scale=1.2, texture_noise_sigma=7.0,
                                            transparency=0.1, albedo=0.75),
    "gelatin": MaterialSpec("gelatin", hue_shift=16, saturation_scale=0.7,
                            texture_noise_sigma=3.0, transparency=0.7, albedo=0.95),
    "silver_coated_ecoflex": MaterialSpec("silver_coated_ecoflex", hue_shift=-60,
                                          saturation_scale=0.3, texture_noise_sigma=9.0,
                                          transparency=0.0, albedo=0.6),
    "crayola_model_magic": MaterialSpec("crayola_model_magic", hue_shift=70,
                                        saturation_scale=1.4, texture_noise_sigma=8.0,
                                        transparency=0.0, albedo=0.9),
}


@dataclass(frozen=True)
class Pose:
    """Placement of a finger on the platen for one impression."""

    dx_frac: float = 0.0  # translation as a fraction of frame size
    dy_frac: float = 0.0
    rot_deg: float = 0.0
    pressure: float = 1.0

    def __post_init__(self):
        if abs(self.dx_frac) > 0.25 or abs(self.dy_frac) > 0.25:
            raise SimulationError("pose translation pushes the pattern out of frame")
        if not (0.25 <= self.pressure <= 2.0):
            raise SimulationError(f"pressure out of range: {self.pressure}")


def random_pose(rng: np.random.Generator) -> Pose:
    """Uniform translation within +/-10% of frame, rotation within +/-30 deg,
    pressure within [0.8, 1.25]."""
    return Pose(
        dx_frac=float(rng.uniform(-0.10, 0.10)),
        dy_frac=float(rng.uniform(-0.10, 0.10)),
        rot_deg=float(rng.uniform(-30.0, 30.0)),
        pressure=float(rng.uniform(0.8, 1.25)),
    )


def _ridge_field(finger: FingerSpec, pose: Pose, dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Oriented sinusoidal ridge field and elliptical finger mask.

    Returns (ridge, mask): ridge in [-1, 1], mask boolean.
    """
    w, h = dims
    rng = substream(
        finger.ridge_orientation_field_seed,
        "ridge-field", finger.subject_id, finger.finger_id,
    )
    base_angle = float(rng.uniform(0.0, math.pi))
    n_warps = 3
    warp_amp = rng.uniform(0.02, 0.06, size=n_warps)
    warp_fx = rng.uniform(0.5, 2.0, size=n_warps)
    warp_fy = rng.uniform(0.5, 2.0, size=n_warps)
    warp_ph = rng.uniform(0.0, 2.0 * math.pi, size=n_warps)

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # normalized, pose-adjusted coordinates (rotation about frame center)
    cx = 0.5 + pose.dx_frac
    cy = 0.5 + pose.dy_frac
    u = xs / w - cx
    v = ys / h - cy
    th = math.radians(pose.rot_deg)
    ur = u * math.cos(th) - v * math.sin(th)
    vr = u * math.sin(th) + v * math.cos(th)

    phase = ur * math.cos(base_angle) + vr * math.sin(base_angle)
    for m in range(n_warps):
        phase = phase + warp_amp[m] * np.sin(
            2.0 * math.pi * (warp_fx[m] * ur + warp_fy[m] * vr) + warp_ph[m]
        )
    ridge = np.cos(2.0 * math.pi * finger.ridge_frequency * phase)

    mask = (ur / 0.40) ** 2 + (vr / 0.46) ** 2 <= 1.0
    return ridge, mask


def render_views(
    finger: FingerSpec,
    material: MaterialSpec | None,
    pose: Pose,
    dims: tuple[int, int] = (256, 192),
    noise_seed: int = 0,
) -> tuple[Image, Image]:
    """Render (ftir_image, direct_image) for one impression.

    ``material`` None means a live finger. Both views derive from the same
    ridge pattern under the same pose; the render is a pure function of its
    arguments.
    """
    w, h = dims
    if w < 8 or h < 8:
        raise SimulationError(f"zero-area or degenerate dims {dims}")
    ridge, mask = _ridge_field(finger, pose, dims)

    # higher pressure flattens more ridge area onto the platen
    contact_thr = 0.30 - 0.35 * (pose.pressure - 1.0)
    contact = mask & (ridge > contact_thr)

    if material is None:
        hue_shift = 0
        sat = float(finger.skin_saturation)
        albedo = 1.0
        transparency = 0.0
        noise_sigma = LIVE_NOISE_SIGMA
    else:
        hue_shift = material.hue_shift
        sat = float(np.clip(finger.skin_saturation * material.saturation_scale, 0, 255))
        albedo = material.albedo
        transparency = material.transparency
        noise_sigma = material.texture_noise_sigma

    noise_rng = substream(noise_seed, "render-noise", finger.subject_id,
                          finger.finger_id, "" if material is None else material.name)
    ridge_strength = np.clip((ridge - contact_thr) / (1.0 - contact_thr), 0.0, 1.0)

    # FTIR view: only frustrated-TIR (contact) pixels return light
    ftir_v = np.full((h, w), FTIR_BACKGROUND)
    ftir_v[mask] = FTIR_VALLEY
    ftir_contact = FTIR_BACKGROUND + albedo * (
        (FTIR_RIDGE_PEAK - FTIR_BACKGROUND) * (0.75 + 0.25 * ridge_strength[contact])
    )
    ftir_v[contact] = ftir_contact
    ftir_noise = noise_rng.normal(0.0, noise_sigma, size=(h, w))
    ftir_v = np.where(contact, ftir_v + ftir_noise * albedo, ftir_v)
    ftir_hsv = np.stack(
        [
            np.full((h, w), float((FTIR_TINT_HUE + hue_shift) % 256)),
            np.where(contact, FTIR_TINT_SAT, 0.0),
            np.clip(ftir_v, 0.0, 255.0),
        ],
        axis=2,
    )
    ftir = hsv_to_rgb(Image(_round_u8(ftir_hsv), HSV))

    # direct view: whole finger surface, low ridge contrast; transparency
    # lets the skin color and texture show through the overlay
    surf_hue = (finger.skin_hue * transparency
                + ((finger.skin_hue + hue_shift) % 256) * (1.0 - transparency)) % 256
    surf_sat = finger.skin_saturation * transparency + sat * (1.0 - transparency)
    direct_noise_sigma = LIVE_NOISE_SIGMA + (noise_sigma - LIVE_NOISE_SIGMA) * (1.0 - transparency)
    direct_v = np.full((h, w), DIRECT_BACKGROUND)
    direct_v[mask] = 175.0 + 12.0 * ridge[mask]
    direct_noise = noise_rng.normal(0.0, direct_noise_sigma, size=(h, w))
    direct_v = np.where(mask, direct_v + direct_noise, direct_v)
    direct_hsv = np.stack(
        [
            np.where(mask, surf_hue, 0.0),
            np.where(mask, surf_sat, 0.0),
            np.clip(direct_v, 0.0, 255.0),
        ],
        axis=2,
    )
    direct = hsv_to_rgb(Image(_round_u8(direct_hsv), HSV))
    return ftir, direct


def contact_mask(finger: FingerSpec, pose: Pose, dims: tuple[int, int] = (256, 192)) -> np.ndarray:
    """Ground-truth ridge-contact mask for a render (testing aid)."""
    ridge, mask = _ridge_field(finger, pose, dims)
    contact_thr = 0.30 - 0.35 * (pose.pressure - 1.0)
    return mask & (ridge > contact_thr)


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    statistic: float
    threshold: float
    reason: str | None = None


def capture_gate(ftir_image: Image, threshold: float = 40.0) -> GateResult:
    """Failure-to-capture check on an FTIR view.

    Rejects when the mean intensity of the brightest decile of pixels falls
    below ``threshold``; absorptive (low-albedo) spoofs return no usable
    FTIR signal. Top-decile mean rather than global mean, so a small dark
    spoof cannot hide behind a bright background.
    """
    gray = ftir_image.data if ftir_image.color_space == GRAY else to_grayscale(ftir_image).data
    flat = np.sort(gray, axis=None)
    n_top = max(1, flat.size // 10)
    stat = float(np.mean(flat[-n_top:].astype(np.float64)))
    if stat < threshold:
        return GateResult(
            accepted=False,
            statistic=stat,
            threshold=threshold,
            reason=f"top_decile_mean={stat:.2f} < {threshold:.2f}",
        )
    return GateResult(accepted=True, statistic=stat, threshold=threshold)


@dataclass(frozen=True)
class MaterialCount:
    material: MaterialSpec
    n_spoofs: int = 10
    n_impressions: int = 10


@dataclass(frozen=True)
class DatasetConfig:
    n_subjects: int
    n_fingers: int
    n_live_impressions: int
    materials: tuple[MaterialCount, ...]
    dims: tuple[int, int] = (256, 192)

    def __post_init__(self):
        if min(self.n_subjects, self.n_fingers, self.n_live_impressions) < 1:
            raise SimulationError("counts must be >= 1")
        for mc in self.materials:
            if mc.n_spoofs < 1 or mc.n_impressions < 1:
                raise SimulationError("material counts must be >= 1")

    @property
    def n_live_pairs(self) -> int:
        return self.n_subjects * self.n_fingers * self.n_live_impressions

    @property
    def n_spoof_pairs(self) -> int:
        return sum(mc.n_spoofs * mc.n_impressions for mc in self.materials)

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "n_fingers": self.n_fingers,
            "n_live_impressions": self.n_live_impressions,
            "dims": list(self.dims),
            "materials": [
                {
                    "material": asdict(mc.material),
                    "n_spoofs": mc.n_spoofs,
                    "n_impressions": mc.n_impressions,
                }
                for mc in self.materials
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "DatasetConfig":
        materials = tuple(
            MaterialCount(
                material=MaterialSpec(**m["material"]),
                n_spoofs=m["n_spoofs"],
                n_impressions=m["n_impressions"],
            )
            for m in doc["materials"]
        )
        return DatasetConfig(
            n_subjects=doc["n_subjects"],
            n_fingers=doc["n_fingers"],
            n_live_impressions=doc["n_live_impressions"],
            materials=materials,
            dims=tuple(doc.get("dims", (256, 192))),
        )


def full_scale_config(dims: tuple[int, int] = (256, 192)) -> DatasetConfig:
    """Full collection scale: 15 subjects x 10 fingers x 5 impressions live;
    66 spoofs x 10 impressions across the seven materials."""
    materials = tuple(
        MaterialCount(STOCK_MATERIALS[name],
                      n_spoofs=6 if name == "crayola_model_magic" else 10,
                      n_impressions=10)
        for name in MATERIAL_ORDER
    )
    return DatasetConfig(15, 10, 5, materials, dims=dims)


def desk_scale_config(
    dims: tuple[int, int] = (256, 192),
    materials: dict[str, MaterialSpec] | None = None,
    n_spoofs: int = 2,
    n_impressions: int = 3,
) -> DatasetConfig:
    """Small CI-friendly scale: 4 subjects x 2 fingers x 3 impressions live."""
    mats = materials if materials is not None else STOCK_MATERIALS
    counts = tuple(
        MaterialCount(mats[name], n_spoofs=n_spoofs, n_impressions=n_impressions)
        for name in sorted(mats, key=_material_sort_key)
    )
    return DatasetConfig(4, 2, 3, counts, dims=dims)


def _material_sort_key(name: str):
    try:
        return (0, MATERIAL_ORDER.index(name))
    except ValueError:
        return (1, name)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    view: str  # "ftir" | "direct"
    label: str  # "live" | "spoof"
    impression: int
    material: str | None = None
    subject: str | None = None
    finger: str | None = None
    spoof_instance: int | None = None

    @property
    def sample_id(self) -> str:
        """Impression-level id shared by the two views of one presentation."""
        return self.id.rsplit("/", 1)[0]


@dataclass(frozen=True)
class DatasetManifest:
    seed: int
    prng_name: str
    config: dict
    entries: tuple[ManifestEntry, ...]
    root: Path | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "header": {
                "format_version": MANIFEST_FORMAT_VERSION,
                "seed": self.seed,
                "prng_name": self.prng_name,
                "config": self.config,
            },
            "entries": [
                {k: v for k, v in asdict(e).items() if v is not None}
                for e in self.entries
            ],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @staticmethod
    def load(path) -> "DatasetManifest":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        header = doc["header"]
        entries = tuple(
            ManifestEntry(
                id=e["id"], path=e["path"], view=e["view"], label=e["label"],
                impression=e["impression"], material=e.get("material"),
                subject=e.get("subject"), finger=e.get("finger"),
                spoof_instance=e.get("spoof_instance"),
            )
            for e in doc["entries"]
        )
        return DatasetManifest(
            seed=header["seed"], prng_name=header["prng_name"],
            config=header["config"], entries=entries, root=path.parent,
        )

    def resolve(self, entry: ManifestEntry) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / entry.path

    def load_image(self, entry: ManifestEntry) -> Image:
        pil = PilImage.open(self.resolve(entry)).convert("RGB")
        return Image(np.asarray(pil, dtype=np.uint8), RGB)

    def samples(self) -> dict[str, dict]:
        """Group entries by presentation: sample_id -> {label, material,
        subject, views: {view: entry}}."""
        out: dict[str, dict] = {}
        for e in self.entries:
            rec = out.setdefault(
                e.sample_id,
                {"label": e.label, "material": e.material, "subject": e.subject,
                 "finger": e.finger, "impression": e.impression, "views": {}},
            )
            rec["views"][e.view] = e
        return out


def _write_png(img: Image, path: Path, ppi: float | None = None) -> None:
    pil = PilImage.fromarray(img.data, mode="RGB" if img.channels == 3 else "L")
    kwargs = {}
    if ppi is not None:
        kwargs["dpi"] = (ppi, ppi)
    pil.save(path, format="PNG", **kwargs)


def write_png(img: Image, path, ppi: float | None = None) -> None:
    """Write an image as 8-bit PNG, optionally tagging pixel density."""
    _write_png(img, Path(path), ppi=ppi)


def generate_dataset(
    config: DatasetConfig,
    seed: int,
    out_dir,
    force: bool = False,
) -> DatasetManifest:
    """Render and write the full dual-view dataset plus its manifest.

    Pure function of (config, seed): identical inputs give byte-identical
    manifests and image files. Refuses to overwrite an existing manifest
    unless ``force`` is set.
    """
    out = Path(out_dir)
    manifest_path = out / MANIFEST_NAME
    if manifest_path.exists() and not force:
        raise SimulationError(
            f"manifest already exists at {manifest_path}; pass force=True to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)
    (out / "live").mkdir(exist_ok=True)
    (out / "spoof").mkdir(exist_ok=True)

    entries: list[ManifestEntry] = []

    for s in range(config.n_subjects):
        subject = f"s{s:03d}"
        hue_rng = substream(seed, "skin", subject)
        skin_hue = int(hue_rng.integers(8, 24))
        skin_sat = int(hue_rng.integers(90, 150))
        for f in range(config.n_fingers):
            finger_id = f"f{f:02d}"
            finger = FingerSpec(
                subject_id=subject,
                finger_id=finger_id,
                ridge_frequency=float(substream(seed, "freq", subject, finger_id).uniform(11.0, 17.0)),
                ridge_orientation_field_seed=seed,
                skin_hue=skin_hue,
                skin_saturation=skin_sat,
            )
            for i in range(config.n_live_impressions):
                pose = random_pose(substream(seed, "pose", "live", subject, finger_id, i))
                ftir, direct = render_views(
                    finger, None, pose, config.dims,
                    noise_seed=_impression_seed(seed, "live", subject, finger_id, i),
                )
                sample = f"live/{subject}_{finger_id}_i{i:02d}"
                for view, img in (("ftir", ftir), ("direct", direct)):
                    rel = f"live/{subject}_{finger_id}_i{i:02d}_{view}.png"
                    _write_png(img, out / rel)
                    entries.append(ManifestEntry(
                        id=f"{sample}/{view}", path=rel, view=view, label="live",
                        impression=i, subject=subject, finger=finger_id,
                    ))

    for mc in config.materials:
        mat = mc.material
        for k in range(mc.n_spoofs):
            # every spoof carries its own unique ridge pattern
            pat_rng = substream(seed, "spoof-pattern", mat.name, k)
            finger = FingerSpec(
                subject_id=f"spoof-{mat.name}",
                finger_id=f"x{k:02d}",
                ridge_frequency=float(pat_rng.uniform(11.0, 17.0)),
                ridge_orientation_field_seed=seed + 104729 + k * 7919 + _name_salt(mat.name),
                skin_hue=int(pat_rng.integers(8, 24)),
                skin_saturation=int(pat_rng.integers(90, 150)),
            )
            for i in range(mc.n_impressions):
                pose = random_pose(substream(seed, "pose", "spoof", mat.name, k, i))
                ftir, direct = render_views(
                    finger, mat, pose, config.dims,
                    noise_seed=_impression_seed(seed, "spoof", mat.name, k, i),
                )
                sample = f"spoof/{mat.name}_x{k:02d}_i{i:02d}"
                for view, img in (("ftir", ftir), ("direct", direct)):
                    rel = f"spoof/{mat.name}_x{k:02d}_i{i:02d}_{view}.png"
                    _write_png(img, out / rel)
                    entries.append(ManifestEntry(
                        id=f"{sample}/{view}", path=rel, view=view, label="spoof",
                        impression=i, material=mat.name, spoof_instance=k,
                    ))

    manifest = DatasetManifest(
        seed=seed, prng_name=PRNG_NAME, config=config.to_dict(),
        entries=tuple(entries), root=out,
    )
    manifest.save(manifest_path)
    return manifest


def _name_salt(name: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")


def _impression_seed(seed: int, *tags) -> int:
    return int(substream(seed, "impression-noise", *tags).integers(0, 2**63 - 1))
