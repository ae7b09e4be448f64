"""Known-material and cross-material evaluation protocols with TDR@FDR.

A split never shares impressions or live subjects between train and test;
under the cross-material protocol the held-out material is absent from
training entirely. Capture-gate rejections never reach the classifier and
are counted as detected spoofs (for live samples, as false detects), which
is conservative in both directions.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from . import svm as svm_mod
from .rng import substream
from .simulate import DatasetManifest, capture_gate

REPORT_FORMAT_VERSION = 1

# held-out material row order for cross-material reports
CROSS_REPORT_ORDER = (
    "crayola_model_magic",
    "ecoflex",
    "silver_coated_ecoflex",
    "gelatin",
    "liquid_latex_body_paint",
    "monster_liquid_latex",
    "wood_glue",
)


class EvaluationError(ValueError):
    """Raised for infeasible splits or malformed evaluation input."""


@dataclass(frozen=True)
class ScoreSet:
    scores: np.ndarray
    is_spoof: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        y = np.asarray(self.is_spoof, dtype=bool)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "is_spoof", y)
        if s.shape != y.shape or s.ndim != 1:
            raise EvaluationError(f"shape mismatch: {s.shape} vs {y.shape}")
        if np.any(np.isnan(s)):
            raise EvaluationError("NaN scores")
        if not (np.any(y) and np.any(~y)):
            raise EvaluationError("score set must contain both classes")


def tdr_at_fdr(scores: ScoreSet, fdr_target: float = 0.01) -> tuple[float, float]:
    """Operating point: smallest threshold t with FDR(t) <= target.

    FDR(t) is the fraction of live samples scored >= t (samples at t count
    as detected). Returns (TDR at t, t). Because t is the smallest feasible
    threshold, the returned TDR is the best achievable at the constraint.
    """
    live = scores.scores[~scores.is_spoof]
    spoof = scores.scores[scores.is_spoof]
    candidates = np.unique(scores.scores)
    threshold = np.inf
    for t in candidates:  # ascending; first feasible t is the smallest
        if np.mean(live >= t) <= fdr_target:
            threshold = float(t)
            break
    if np.isinf(threshold) and np.mean(live >= np.inf) > fdr_target:
        # only possible when live scores themselves are +inf
        threshold = np.inf
    tdr = float(np.mean(spoof >= threshold))
    return tdr, threshold


@dataclass(frozen=True)
class SplitSpec:
    name: str
    protocol: str  # "known" | "cross"
    train_entries: tuple[str, ...]  # sample ids
    test_entries: tuple[str, ...]
    held_out_material: str | None = None
    fold_index: int | None = None

    def __post_init__(self):
        if set(self.train_entries) & set(self.test_entries):
            raise EvaluationError(f"split {self.name}: train/test overlap")


def _sample_table(manifest: DatasetManifest) -> dict[str, dict]:
    return manifest.samples()


def _live_subjects(samples: dict[str, dict]) -> list[str]:
    return sorted({rec["subject"] for rec in samples.values() if rec["label"] == "live"})


def _scaled_test_count(n: int, ratio: float) -> int:
    return max(1, int(np.floor(n * ratio + 0.5)))


def known_material_splits(
    manifest: DatasetManifest, folds: int = 5, seed: int = 0
) -> list[SplitSpec]:
    """Per fold: a seeded 1/folds partition of each material's spoof
    impressions goes to test (80/20 at the default 5 folds), and live
    subjects split at the tabulated 12:3 ratio scaled to the manifest."""
    samples = _sample_table(manifest)
    subjects = _live_subjects(samples)
    if len(subjects) < 2:
        raise EvaluationError("need at least 2 live subjects for known-material folds")

    by_material: dict[str, list[str]] = {}
    for sid in sorted(samples):
        rec = samples[sid]
        if rec["label"] == "spoof":
            by_material.setdefault(rec["material"], []).append(sid)
    if not by_material:
        raise EvaluationError("manifest contains no spoof samples")
    for mat, sids in by_material.items():
        if len(sids) < folds:
            raise EvaluationError(
                f"material {mat} has {len(sids)} impressions; need >= {folds}"
            )

    # seeded fold assignment per material, each impression tested exactly once
    spoof_fold: dict[str, int] = {}
    for mat in sorted(by_material):
        sids = by_material[mat]
        perm = substream(seed, "known-spoof-folds", mat).permutation(len(sids))
        for pos, idx in enumerate(perm):
            spoof_fold[sids[idx]] = pos % folds

    n_test_subjects = _scaled_test_count(len(subjects), 3.0 / 15.0)
    splits = []
    for f in range(folds):
        rng = substream(seed, "known-live-subjects", f)
        test_subjects = set(rng.choice(subjects, size=n_test_subjects, replace=False))
        train, test = [], []
        for sid in sorted(samples):
            rec = samples[sid]
            if rec["label"] == "live":
                (test if rec["subject"] in test_subjects else train).append(sid)
            else:
                (test if spoof_fold[sid] == f else train).append(sid)
        splits.append(SplitSpec(
            name=f"known-fold{f}", protocol="known",
            train_entries=tuple(train), test_entries=tuple(test), fold_index=f,
        ))
    return splits


def cross_material_splits(manifest: DatasetManifest, seed: int = 0) -> list[SplitSpec]:
    """One split per material: all of the held-out material's impressions in
    test, the other materials' in train; live subjects split at the 13:2
    ratio scaled, re-drawn per split from a split-indexed stream."""
    samples = _sample_table(manifest)
    subjects = _live_subjects(samples)
    if len(subjects) < 2:
        raise EvaluationError("need at least 2 live subjects for cross-material splits")
    materials = sorted({rec["material"] for rec in samples.values()
                        if rec["label"] == "spoof"})
    if not materials:
        raise EvaluationError("manifest contains no spoof samples")

    order = [m for m in CROSS_REPORT_ORDER if m in materials]
    order += [m for m in materials if m not in order]

    n_test_subjects = _scaled_test_count(len(subjects), 2.0 / 15.0)
    splits = []
    for idx, held in enumerate(order):
        rng = substream(seed, "cross-live-subjects", held)
        test_subjects = set(rng.choice(subjects, size=n_test_subjects, replace=False))
        train, test = [], []
        for sid in sorted(samples):
            rec = samples[sid]
            if rec["label"] == "live":
                (test if rec["subject"] in test_subjects else train).append(sid)
            elif rec["material"] == held:
                test.append(sid)
            else:
                train.append(sid)
        splits.append(SplitSpec(
            name=f"cross-{held}", protocol="cross",
            train_entries=tuple(train), test_entries=tuple(test),
            held_out_material=held, fold_index=idx,
        ))
    return splits


@dataclass(frozen=True)
class MethodSpec:
    """What to extract and how to classify.

    views: subset of ("ftir", "direct"); descriptor: "lbp" | "clbp";
    fusion: None (single view), "feature" (concatenate descriptors), or
    "score" (per-view models, standardized score fusion); C: fixed margin
    parameter, or None to cross-validate over the default grid.
    """

    views: tuple[str, ...] = ("ftir",)
    descriptor: str = "clbp"
    fusion: str | None = None
    score_fusion: str = "mean"
    C: float | None = 100.0

    def __post_init__(self):
        if not self.views or any(v not in ("ftir", "direct") for v in self.views):
            raise EvaluationError(f"bad views {self.views}")
        if self.descriptor not in ("lbp", "clbp"):
            raise EvaluationError(f"bad descriptor {self.descriptor!r}")
        if self.fusion not in (None, "feature", "score"):
            raise EvaluationError(f"bad fusion {self.fusion!r}")
        if len(self.views) > 1 and self.fusion is None:
            raise EvaluationError("multiple views require a fusion mode")

    @property
    def label(self) -> str:
        views = "+".join(self.views)
        fusion = f"/{self.fusion}" if self.fusion else ""
        return f"{views}:{self.descriptor}{fusion}"

    def to_dict(self) -> dict:
        return {
            "views": list(self.views),
            "descriptor": self.descriptor,
            "fusion": self.fusion,
            "score_fusion": self.score_fusion,
            "C": self.C,
        }

    @staticmethod
    def from_dict(doc: dict) -> "MethodSpec":
        return MethodSpec(
            views=tuple(doc.get("views", ("ftir",))),
            descriptor=doc.get("descriptor", "clbp"),
            fusion=doc.get("fusion"),
            score_fusion=doc.get("score_fusion", "mean"),
            C=doc.get("C", 100.0),
        )


@dataclass(frozen=True)
class ReportRow:
    method: str
    protocol: str
    split: str
    tdr_pct: float
    fdr_target_pct: float
    threshold: float
    n_live_test: int
    n_spoof_test: int
    n_gate_rejected_test: int
    ms_per_sample: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    protocol: str
    seed: int
    fold_mean_tdr_pct: float | None = None
    fold_std_tdr_pct: float | None = None
    header_notes: tuple[str, ...] = field(default=())

    _FIELDS = (
        "method", "protocol", "split", "tdr_pct", "fdr_target_pct", "threshold",
        "n_live_test", "n_spoof_test", "n_gate_rejected_test", "ms_per_sample",
    )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self._FIELDS)
        for r in self.rows:
            writer.writerow([getattr(r, f) for f in self._FIELDS])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"protocol={self.protocol} seed={self.seed}"]
        lines += [f"# {note}" for note in self.header_notes]
        for r in self.rows:
            lines.append(
                f"{r.method:28s} {r.split:28s} TDR={r.tdr_pct:6.2f}% "
                f"@FDR={r.fdr_target_pct:.1f}% thr={r.threshold:+.4g} "
                f"live={r.n_live_test} spoof={r.n_spoof_test} "
                f"rejected={r.n_gate_rejected_test} {r.ms_per_sample:.1f} ms/sample"
            )
        if self.fold_mean_tdr_pct is not None:
            lines.append(
                f"fold mean TDR = {self.fold_mean_tdr_pct:.2f}% "
                f"+/- {self.fold_std_tdr_pct:.2f}%"
            )
        return "\n".join(lines) + "\n"


def _extract_features(manifest, samples, method: MethodSpec, cache: dict) -> dict:
    """Per-sample, per-view feature vectors (cached across splits)."""
    out = {}
    for sid in sorted(samples):
        rec = samples[sid]
        per_view = {}
        for view in method.views:
            key = (sid, view, method.descriptor)
            if key not in cache:
                entry = rec["views"].get(view)
                if entry is None:
                    raise EvaluationError(f"sample {sid} missing view {view}")
                img = manifest.load_image(entry)
                if method.descriptor == "clbp":
                    vec = feat.clbp_descriptor(feat.prepare_clbp_input(img, view))
                else:
                    vec = feat.grayscale_lbp_from_view(img, view)
                cache[key] = vec.values
            per_view[view] = cache[key]
        out[sid] = per_view
    return out


def _gate_results(manifest, samples, cache: dict) -> dict[str, bool]:
    accepted = {}
    for sid in sorted(samples):
        if sid not in cache:
            entry = samples[sid]["views"].get("ftir")
            if entry is None:
                cache[sid] = True  # no FTIR view, nothing to gate on
            else:
                cache[sid] = capture_gate(manifest.load_image(entry)).accepted
        accepted[sid] = cache[sid]
    return accepted


def _evaluate_split(manifest, samples, split, method, seed, feature_cache, gate_cache):
    t0 = time.perf_counter()
    feats = _extract_features(
        manifest,
        {sid: samples[sid] for sid in split.train_entries + split.test_entries},
        method, feature_cache,
    )
    gate = _gate_results(
        manifest,
        {sid: samples[sid] for sid in split.train_entries + split.test_entries},
        gate_cache,
    )

    def label_of(sid):
        return 1.0 if samples[sid]["label"] == "spoof" else -1.0

    train_ids = [sid for sid in split.train_entries if gate[sid]]
    test_ids = list(split.test_entries)
    if not any(label_of(s) > 0 for s in test_ids):
        return None, 0, 0.0  # no test spoofs: reported N/A upstream

    def matrix(ids, view):
        return np.stack([feats[s][view] for s in ids])

    y_train = np.array([label_of(s) for s in train_ids])

    def fit(x):
        c = method.C
        if c is None:
            c, _ = svm_mod.select_C(x, y_train, seed=seed)
        return svm_mod.train_svm(x, y_train, c, seed=seed,
                                 feature_kind=method.descriptor)

    if method.fusion == "score" and len(method.views) > 1:
        models = {v: fit(matrix(train_ids, v)) for v in method.views}
        per_view = [svm_mod.standardized_scores(models[v], matrix(test_ids, v))
                    for v in method.views]
        raw_scores = np.array([
            svm_mod.fuse_scores([col[i] for col in per_view], method.score_fusion)
            for i in range(len(test_ids))
        ])
    else:
        if method.fusion == "feature" and len(method.views) > 1:
            def matrix_fused(ids):
                return np.hstack([matrix(ids, v) for v in method.views])
            model = fit(matrix_fused(train_ids))
            raw_scores = svm_mod.decision_scores(model, matrix_fused(test_ids))
        else:
            view = method.views[0]
            model = fit(matrix(train_ids, view))
            raw_scores = svm_mod.decision_scores(model, matrix(test_ids, view))

    # gate-rejected test samples never reach the classifier: always detected
    rejected = np.array([not gate[s] for s in test_ids])
    scores = np.where(rejected, np.inf, raw_scores)
    scoreset = ScoreSet(scores, np.array([label_of(s) > 0 for s in test_ids]))
    elapsed_ms = (time.perf_counter() - t0) * 1000.0 / max(1, len(test_ids))
    return scoreset, int(np.sum(rejected)), elapsed_ms


def run_protocol(
    manifest: DatasetManifest,
    method: MethodSpec,
    protocol: str,
    seed: int = 0,
    fdr_target: float = 0.01,
) -> EvalReport:
    """Train and score ``method`` over every split of ``protocol``.

    Known protocol adds fold mean/std of TDR; cross protocol emits one row
    per held-out material in the canonical report order.
    """
    samples = manifest.samples()
    if protocol == "known":
        splits = known_material_splits(manifest, seed=seed)
    elif protocol == "cross":
        splits = cross_material_splits(manifest, seed=seed)
    else:
        raise EvaluationError(f"unknown protocol {protocol!r}")

    feature_cache: dict = {}
    gate_cache: dict = {}
    rows = []
    tdrs = []
    for split in splits:
        result = _evaluate_split(manifest, samples, split, method, seed,
                                 feature_cache, gate_cache)
        if result[0] is None:
            rows.append(ReportRow(
                method=method.label, protocol=protocol, split=split.name,
                tdr_pct=float("nan"), fdr_target_pct=fdr_target * 100.0,
                threshold=float("nan"), n_live_test=0, n_spoof_test=0,
                n_gate_rejected_test=0, ms_per_sample=0.0,
            ))
            continue
        scoreset, n_rejected, ms = result
        tdr, threshold = tdr_at_fdr(scoreset, fdr_target)
        tdrs.append(tdr)
        rows.append(ReportRow(
            method=method.label, protocol=protocol, split=split.name,
            tdr_pct=tdr * 100.0, fdr_target_pct=fdr_target * 100.0,
            threshold=threshold,
            n_live_test=int(np.sum(~scoreset.is_spoof)),
            n_spoof_test=int(np.sum(scoreset.is_spoof)),
            n_gate_rejected_test=n_rejected,
            ms_per_sample=ms,
        ))

    mean_tdr = std_tdr = None
    if protocol == "known" and tdrs:
        mean_tdr = float(np.mean(tdrs)) * 100.0
        std_tdr = float(np.std(tdrs)) * 100.0
    notes = ("live test subjects re-drawn per split from split-indexed streams",)
    return EvalReport(
        rows=tuple(rows), protocol=protocol, seed=seed,
        fold_mean_tdr_pct=mean_tdr, fold_std_tdr_pct=std_tdr,
        header_notes=notes,
    )
