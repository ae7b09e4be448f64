import math

import numpy as np
import pytest

from reference import tdr_sweep_reference

from ftirpad.evaluation import (
    CROSS_REPORT_ORDER,
    EvalReport,
    EvaluationError,
    MethodSpec,
    ReportRow,
    ScoreSet,
    SplitSpec,
    cross_material_splits,
    known_material_splits,
    run_protocol,
    tdr_at_fdr,
)
from ftirpad.simulate import DatasetManifest, ManifestEntry


def synthetic_manifest(n_subjects=15, n_fingers=10, n_impressions=5,
                       materials=None) -> DatasetManifest:
    """Metadata-only manifest (no image files) for split-logic tests."""
    if materials is None:
        materials = {m: 6 if m == "crayola_model_magic" else 10
                     for m in CROSS_REPORT_ORDER}
    entries = []
    for s in range(n_subjects):
        for f in range(n_fingers):
            for i in range(n_impressions):
                sample = f"live/s{s:03d}_f{f:02d}_i{i:02d}"
                entries.append(ManifestEntry(
                    id=f"{sample}/ftir", path=f"{sample}_ftir.png", view="ftir",
                    label="live", impression=i, subject=f"s{s:03d}", finger=f"f{f:02d}",
                ))
    for mat, n_spoofs in materials.items():
        for k in range(n_spoofs):
            for i in range(10):
                sample = f"spoof/{mat}_x{k:02d}_i{i:02d}"
                entries.append(ManifestEntry(
                    id=f"{sample}/ftir", path=f"{sample}_ftir.png", view="ftir",
                    label="spoof", impression=i, material=mat, spoof_instance=k,
                ))
    return DatasetManifest(seed=0, prng_name="pcg64", config={}, entries=tuple(entries))


class TestScoreSet:
    def test_contracts(self):
        with pytest.raises(EvaluationError):
            ScoreSet(np.array([np.nan, 1.0]), np.array([True, False]))
        with pytest.raises(EvaluationError):
            ScoreSet(np.array([1.0, 2.0]), np.array([True, True]))
        with pytest.raises(EvaluationError):
            ScoreSet(np.array([1.0, 2.0]), np.array([True]))

    def test_inf_allowed(self):
        s = ScoreSet(np.array([np.inf, 0.0]), np.array([True, False]))
        assert np.isinf(s.scores[0])


class TestTdrAtFdr:
    def test_perfect_separation(self):
        s = ScoreSet(np.concatenate([np.full(100, 5.0), np.full(100, -5.0)]),
                     np.array([True] * 100 + [False] * 100))
        tdr, thr = tdr_at_fdr(s, 0.01)
        assert tdr == 1.0
        assert -5.0 < thr <= 5.0

    def test_identical_scores_zero_tdr(self):
        s = ScoreSet(np.zeros(40), np.array([True] * 20 + [False] * 20))
        tdr, thr = tdr_at_fdr(s, 0.01)
        assert tdr == 0.0
        assert math.isinf(thr)

    def test_inf_spoofs_always_detected(self):
        s = ScoreSet(np.array([np.inf, np.inf, -1.0, -2.0]),
                     np.array([True, True, False, False]))
        tdr, _ = tdr_at_fdr(s, 0.01)
        assert tdr == 1.0

    def test_tie_at_threshold_counts_detected(self):
        # live: one of 100 at 1.0 -> FDR exactly 1% at t=1.0
        live = np.concatenate([[1.0], np.zeros(99)])
        spoof = np.full(10, 1.0)
        s = ScoreSet(np.concatenate([spoof, live]),
                     np.array([True] * 10 + [False] * 100))
        tdr, thr = tdr_at_fdr(s, 0.01)
        assert thr == 1.0
        assert tdr == 1.0

    def test_matches_sweep_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n_live = int(rng.integers(5, 60))
            n_spoof = int(rng.integers(5, 60))
            scores = np.concatenate([rng.normal(1.0, 1.0, n_spoof),
                                     rng.normal(-1.0, 1.0, n_live)])
            is_spoof = np.array([True] * n_spoof + [False] * n_live)
            s = ScoreSet(scores, is_spoof)
            tdr, _ = tdr_at_fdr(s, 0.01)
            assert tdr == tdr_sweep_reference(scores, is_spoof, 0.01)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(0.0, 2.0, 80)
        is_spoof = rng.random(80) < 0.5
        is_spoof[:2] = [True, False]
        base, _ = tdr_at_fdr(ScoreSet(scores, is_spoof), 0.05)
        for fn in (lambda v: 3.0 * v + 7.0, np.tanh, lambda v: v ** 3):
            tdr, _ = tdr_at_fdr(ScoreSet(fn(scores), is_spoof), 0.05)
            assert tdr == base


class TestSplits:
    def test_split_overlap_rejected(self):
        with pytest.raises(EvaluationError):
            SplitSpec("s", "known", ("a", "b"), ("b", "c"))

    def test_known_full_scale_counts(self):
        manifest = synthetic_manifest()
        splits = known_material_splits(manifest, seed=0)
        assert len(splits) == 5
        samples = manifest.samples()
        for split in splits:
            train_live = [s for s in split.train_entries if samples[s]["label"] == "live"]
            test_live = [s for s in split.test_entries if samples[s]["label"] == "live"]
            # 12 train + 3 test subjects x 50 impressions each
            assert len(train_live) == 600
            assert len(test_live) == 150
            train_subj = {samples[s]["subject"] for s in train_live}
            test_subj = {samples[s]["subject"] for s in test_live}
            assert not (train_subj & test_subj)
            assert len(test_subj) == 3

    def test_known_each_spoof_tested_once(self):
        manifest = synthetic_manifest()
        splits = known_material_splits(manifest, seed=0)
        samples = manifest.samples()
        spoof_ids = [s for s, rec in samples.items() if rec["label"] == "spoof"]
        seen = []
        for split in splits:
            seen += [s for s in split.test_entries if samples[s]["label"] == "spoof"]
        assert sorted(seen) == sorted(spoof_ids)
        # 80/20 per fold: each material contributes 1/5 of its impressions
        for split in splits:
            test_per_mat = {}
            for s in split.test_entries:
                if samples[s]["label"] == "spoof":
                    mat = samples[s]["material"]
                    test_per_mat[mat] = test_per_mat.get(mat, 0) + 1
            assert test_per_mat["ecoflex"] == 20
            assert test_per_mat["crayola_model_magic"] == 12

    def test_cross_table_order_and_exclusion(self):
        manifest = synthetic_manifest()
        splits = cross_material_splits(manifest, seed=0)
        assert len(splits) == 7
        assert tuple(s.held_out_material for s in splits) == CROSS_REPORT_ORDER
        samples = manifest.samples()
        for split in splits:
            train_mats = {samples[s]["material"] for s in split.train_entries
                          if samples[s]["label"] == "spoof"}
            assert split.held_out_material not in train_mats
            test_spoofs = [s for s in split.test_entries if samples[s]["label"] == "spoof"]
            assert all(samples[s]["material"] == split.held_out_material
                       for s in test_spoofs)
            test_live = [s for s in split.test_entries if samples[s]["label"] == "live"]
            assert len(test_live) == 100  # 2 of 15 subjects x 50 impressions

    def test_cross_live_subjects_redrawn_per_split(self):
        manifest = synthetic_manifest()
        splits = cross_material_splits(manifest, seed=0)
        samples = manifest.samples()
        subject_draws = []
        for split in splits:
            subj = frozenset(samples[s]["subject"] for s in split.test_entries
                             if samples[s]["label"] == "live")
            subject_draws.append(subj)
        assert len(set(subject_draws)) > 1

    def test_needs_two_subjects(self):
        manifest = synthetic_manifest(n_subjects=1, n_fingers=2, n_impressions=3,
                                      materials={"ecoflex": 2})
        with pytest.raises(EvaluationError):
            known_material_splits(manifest, seed=0)
        with pytest.raises(EvaluationError):
            cross_material_splits(manifest, seed=0)

    def test_seeded_splits_deterministic(self):
        manifest = synthetic_manifest(n_subjects=5, n_fingers=2, n_impressions=2,
                                      materials={"ecoflex": 3, "gelatin": 3})
        a = known_material_splits(manifest, seed=4)
        b = known_material_splits(manifest, seed=4)
        assert a == b
        c = known_material_splits(manifest, seed=5)
        assert a != c


class TestMethodSpec:
    def test_label(self):
        m = MethodSpec(views=("ftir", "direct"), descriptor="clbp", fusion="feature")
        assert m.label == "ftir+direct:clbp/feature"

    def test_validation(self):
        with pytest.raises(EvaluationError):
            MethodSpec(views=("overhead",))
        with pytest.raises(EvaluationError):
            MethodSpec(descriptor="hog")
        with pytest.raises(EvaluationError):
            MethodSpec(views=("ftir", "direct"), fusion=None)
        with pytest.raises(EvaluationError):
            MethodSpec(fusion="late")

    def test_dict_round_trip(self):
        m = MethodSpec(views=("ftir", "direct"), fusion="score",
                       score_fusion="max", C=None)
        assert MethodSpec.from_dict(m.to_dict()) == m


class TestReport:
    def _report(self):
        row = ReportRow("ftir:lbp", "known", "known-fold0", 95.0, 1.0, 0.5,
                        10, 12, 1, 80.0)
        return EvalReport(rows=(row,), protocol="known", seed=0,
                          fold_mean_tdr_pct=95.0, fold_std_tdr_pct=0.0)

    def test_csv_format(self):
        csv_text = self._report().to_csv()
        lines = csv_text.strip().split("\n")
        assert lines[0].startswith("method,protocol,split,tdr_pct")
        assert "ftir:lbp" in lines[1]

    def test_text_format(self):
        text = self._report().to_text()
        assert "TDR= 95.00%" in text
        assert "fold mean TDR" in text


@pytest.fixture(scope="module")
def reports(micro_manifest):
    method = MethodSpec(views=("ftir",), descriptor="lbp", C=100.0)
    return (run_protocol(micro_manifest, method, "known", seed=0),
            run_protocol(micro_manifest, method, "cross", seed=0))


class TestRunProtocol:

    def test_known_row_count(self, reports):
        known, _ = reports
        assert len(known.rows) == 5
        assert known.fold_mean_tdr_pct is not None
        for row in known.rows:
            assert row.n_live_test > 0 and row.n_spoof_test > 0

    def test_cross_rows_in_report_order(self, reports):
        _, cross = reports
        held = [r.split.replace("cross-", "") for r in cross.rows]
        expected = [m for m in CROSS_REPORT_ORDER if m in held]
        assert held == expected

    def test_deterministic_modulo_timing(self, micro_manifest):
        method = MethodSpec(views=("ftir",), descriptor="lbp", C=100.0)
        a = run_protocol(micro_manifest, method, "known", seed=3)
        b = run_protocol(micro_manifest, method, "known", seed=3)

        def strip(report):
            return [tuple(getattr(r, f) for f in ReportRow.__dataclass_fields__
                          if f != "ms_per_sample") for r in report.rows]

        assert strip(a) == strip(b)
        assert a.fold_mean_tdr_pct == b.fold_mean_tdr_pct

    def test_unknown_protocol(self, micro_manifest):
        with pytest.raises(EvaluationError):
            run_protocol(micro_manifest, MethodSpec(), "temporal", seed=0)
