"""Command-line entry point and reproducible experiment orchestration.

Subcommands: geometry, simulate, calibrate, resolution, process, extract,
train, eval, run. All randomness flows from --seed through named substreams,
so stages can be rerun in isolation.

Exit codes: 0 success, 2 config error, 3 data error, 4 convergence warning
under --strict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PilImage

from . import __version__
from . import features as feat
from . import svm as svm_mod
from .calibration import (
    Correspondences,
    estimate_perspective,
    estimate_resolution,
    load_transform,
    save_transform,
)
from .evaluation import EvaluationError, MethodSpec, run_protocol
from .geometry import GeometryError, GeometrySpec, validate_geometry
from .imageops import RGB, Image, ImageError, process_ftir
from .simulate import (
    DatasetConfig,
    DatasetManifest,
    MANIFEST_NAME,
    SimulationError,
    desk_scale_config,
    generate_dataset,
    full_scale_config,
    write_png,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

RUN_SUMMARY_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class TimingProbe:
    """Wall-clock per-sample timing for one pipeline stage."""

    stage: str
    samples_ms: list[float] = field(default_factory=list)

    def record(self, ms: float) -> None:
        self.samples_ms.append(float(ms))

    def time_call(self, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.record((time.perf_counter() - t0) * 1000.0)
        return out

    def stats(self) -> dict:
        if not self.samples_ms:
            return {"stage": self.stage, "n": 0, "mean_ms": 0.0, "p95_ms": 0.0}
        arr = np.array(self.samples_ms)
        return {
            "stage": self.stage,
            "n": int(arr.size),
            "mean_ms": float(arr.mean()),
            "p95_ms": float(np.percentile(arr, 95)),
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully serializable description of one end-to-end run."""

    seed: int
    out_dir: str
    manifest: str | None = None
    dataset: dict | None = None  # DatasetConfig dict or {"preset": "desk"|"full"}
    method: dict = field(default_factory=lambda: MethodSpec().to_dict())
    protocol: str = "known"
    performance_log: bool = True

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "manifest": self.manifest,
            "dataset": self.dataset,
            "method": self.method,
            "protocol": self.protocol,
            "performance_log": self.performance_log,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        try:
            return ExperimentConfig(
                seed=int(doc["seed"]),
                out_dir=doc["out_dir"],
                manifest=doc.get("manifest"),
                dataset=doc.get("dataset"),
                method=doc.get("method", MethodSpec().to_dict()),
                protocol=doc.get("protocol", "known"),
                performance_log=bool(doc.get("performance_log", True)),
            )
        except KeyError as exc:
            raise ConfigError(f"experiment config missing key: {exc}") from exc


def _dataset_config(doc: dict) -> DatasetConfig:
    if "preset" in doc:
        if doc["preset"] == "desk":
            return desk_scale_config()
        if doc["preset"] == "full":
            return full_scale_config()
        raise ConfigError(f"unknown dataset preset {doc['preset']!r}")
    return DatasetConfig.from_dict(doc)


def run_experiment(cfg: ExperimentConfig, force: bool = False) -> dict:
    """simulate (if needed) -> extract/train/eval, writing a run summary.

    The summary records input hashes, versions, and per-stage timings; the
    config it embeds reproduces the run.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = []

    if cfg.manifest is not None:
        manifest_path = Path(cfg.manifest)
        if not manifest_path.exists():
            raise FileNotFoundError(f"manifest not found: {manifest_path}")
        manifest = DatasetManifest.load(manifest_path)
    else:
        if cfg.dataset is None:
            raise ConfigError("experiment config needs either 'manifest' or 'dataset'")
        probe = TimingProbe("simulate")
        data_dir = out / "dataset"
        t0 = time.perf_counter()
        manifest = generate_dataset(_dataset_config(cfg.dataset), cfg.seed,
                                    data_dir, force=force)
        probe.record((time.perf_counter() - t0) * 1000.0 / max(1, len(manifest.entries)))
        timings.append(probe.stats())
        manifest_path = data_dir / MANIFEST_NAME

    method = MethodSpec.from_dict(cfg.method)
    eval_probe = TimingProbe("eval")
    t0 = time.perf_counter()
    report = run_protocol(manifest, method, cfg.protocol, seed=cfg.seed)
    eval_probe.record((time.perf_counter() - t0) * 1000.0)
    timings.append(eval_probe.stats())

    report_csv = out / "report.csv"
    report_txt = out / "report.txt"
    report_csv.write_text(report.to_csv(), encoding="utf-8")
    report_txt.write_text(report.to_text(), encoding="utf-8")

    summary = {
        "format_version": RUN_SUMMARY_FORMAT_VERSION,
        "config": cfg.to_dict(),
        "versions": {
            "ftirpad": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "input_hashes": {"manifest": _sha256(manifest_path)},
        "artifact_hashes": {
            "report.csv": _sha256(report_csv),
        },
        "timings": timings if cfg.performance_log else [],
    }
    with open(out / "run_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _load_rgb(path) -> Image:
    pil = PilImage.open(path).convert("RGB")
    return Image(np.asarray(pil, dtype=np.uint8), RGB)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_geometry(args) -> int:
    spec = GeometrySpec(
        n_glass=args.n_glass, n_air=args.n_air,
        theta_direct_deg=args.theta_direct, theta_ftir_deg=args.theta_ftir,
    )
    report = validate_geometry(spec)
    print(report.describe())
    return EXIT_OK if report.ok else EXIT_DATA


def _cmd_simulate(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = _dataset_config(json.load(fh))
    else:
        config = desk_scale_config() if args.preset == "desk" else full_scale_config()
    manifest = generate_dataset(config, args.seed, args.out, force=args.force)
    print(f"wrote {len(manifest.entries)} images under {args.out}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    pairs = Correspondences.from_json(args.pairs)
    transform, residuals = estimate_perspective(pairs)
    save_transform(args.out, transform, residuals.rms_px)
    print(f"params={transform.params}")
    print(f"residual rms={residuals.rms_px:.4g} px max={residuals.max_px:.4g} px")
    return EXIT_OK


def _cmd_resolution(args) -> int:
    pairs = Correspondences.from_json(args.pairs)
    res = estimate_resolution(pairs, args.pitch_mm)
    print(f"ppi_x: {res.x_range[0]:.1f} .. {res.x_range[1]:.1f}")
    print(f"ppi_y: {res.y_range[0]:.1f} .. {res.y_range[1]:.1f}")
    return EXIT_OK


def _cmd_process(args) -> int:
    transform, _ = load_transform(args.transform)
    raw = _load_rgb(args.raw)
    out = process_ftir(raw, transform, (args.ppi_x, args.ppi_y))
    write_png(out, args.out, ppi=500.0)
    print(f"wrote {out.width}x{out.height} 500 ppi image to {args.out}")
    return EXIT_OK


def _extract_one(task):
    manifest_path, sample_id, view, kind = task
    manifest = DatasetManifest.load(manifest_path)
    rec = manifest.samples()[sample_id]
    img = manifest.load_image(rec["views"][view])
    if kind == "clbp":
        vec = feat.clbp_descriptor(feat.prepare_clbp_input(img, view))
    else:
        vec = feat.grayscale_lbp_from_view(img, view)
    return sample_id, view, vec.values


def _cmd_extract(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    samples = manifest.samples()
    views = ("ftir", "direct") if args.view == "both" else (args.view,)
    tasks = [(args.manifest, sid, v, args.kind)
             for sid in sorted(samples) for v in views
             if v in samples[sid]["views"]]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, tasks))
    else:
        results = [_extract_one(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))
    matrix = np.stack([r[2] for r in results])
    index = [{"row": i, "sample_id": r[0], "view": r[1]}
             for i, r in enumerate(results)]
    feat.save_features(args.out, matrix, args.kind.upper(), index=index)
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} features to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    matrix, header = feat.load_features(args.features)
    with open(str(args.features) + ".index.json", "r", encoding="utf-8") as fh:
        index = json.load(fh)
    manifest = DatasetManifest.load(args.labels_from_manifest)
    samples = manifest.samples()
    y = np.array([
        1.0 if samples[row["sample_id"]]["label"] == "spoof" else -1.0
        for row in index
    ])
    if args.select_C:
        c, accs = svm_mod.select_C(matrix, y, seed=args.seed)
        print(f"selected C={c:g} (fold accuracies: "
              + ", ".join(f"{k:g}:{v:.3f}" for k, v in sorted(accs.items())) + ")")
    else:
        c = args.C
    model = svm_mod.train_svm(matrix, y, c, seed=args.seed,
                              feature_kind=header["descriptor_kind"])
    svm_mod.save_model(args.out, model)
    print(f"trained on {matrix.shape[0]} samples, C={c:g}, "
          f"objective={model.objective_value:.6g}, converged={model.converged}")
    if not model.converged and args.strict:
        return EXIT_CONVERGENCE
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    with open(args.method, "r", encoding="utf-8") as fh:
        method = MethodSpec.from_dict(json.load(fh))
    report = run_protocol(manifest, method, args.protocol, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    return EXIT_OK


def _cmd_run(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = ExperimentConfig.from_dict(json.load(fh))
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    if args.out is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "out_dir": args.out})
    summary = run_experiment(cfg, force=args.force)
    print(f"run complete; summary at {Path(cfg.out_dir) / 'run_summary.json'}")
    for t in summary["timings"]:
        print(f"  {t['stage']}: mean {t['mean_ms']:.1f} ms, p95 {t['p95_ms']:.1f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftirpad",
        description="Dual-view FTIR fingerprint reader stack (synthetic capture, "
                    "calibration, processing, spoof detection, evaluation)",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="validate reader camera placement")
    p.add_argument("--n-glass", type=float, default=1.5)
    p.add_argument("--n-air", type=float, default=1.0)
    p.add_argument("--theta-direct", type=float, default=10.0)
    p.add_argument("--theta-ftir", type=float, default=45.0)
    p.set_defaults(fn=_cmd_geometry)

    p = sub.add_parser("simulate", help="generate a synthetic dual-view dataset")
    p.add_argument("--config", help="dataset config JSON")
    p.add_argument("--preset", choices=("desk", "full"), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("calibrate", help="estimate a perspective transform from pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("resolution", help="estimate native ppi from checkerboard pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--pitch-mm", type=float, required=True)
    p.set_defaults(fn=_cmd_resolution)

    p = sub.add_parser("process", help="raw FTIR frame to 500 ppi grayscale")
    p.add_argument("--raw", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--ppi-x", type=float, required=True)
    p.add_argument("--ppi-y", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_process)

    p = sub.add_parser("extract", help="extract descriptors for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--view", choices=("ftir", "direct", "both"), default="ftir")
    p.add_argument("--kind", choices=("lbp", "clbp"), default="clbp")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("train", help="train a linear SVM on extracted features")
    p.add_argument("--features", required=True)
    p.add_argument("--labels-from-manifest", required=True)
    p.add_argument("--C", type=float, default=100.0)
    p.add_argument("--select-C", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="run a known/cross-material protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True, help="method spec JSON")
    p.add_argument("--protocol", choices=("known", "cross"), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("run", help="full pipeline from an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GeometryError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ImageError, SimulationError, EvaluationError, svm_mod.SvmError,
            feat.FeatureError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
