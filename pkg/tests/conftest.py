"""Shared fixtures: a small rendered dataset reused across protocol and CLI
tests (session-scoped; rendering is the slow part)."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `reference` oracles

from ftirpad.simulate import (
    DatasetConfig,
    MaterialCount,
    STOCK_MATERIALS,
    generate_dataset,
)


def micro_config() -> DatasetConfig:
    return DatasetConfig(
        n_subjects=3,
        n_fingers=1,
        n_live_impressions=3,
        materials=(
            MaterialCount(STOCK_MATERIALS["wood_glue"], n_spoofs=2, n_impressions=3),
            MaterialCount(STOCK_MATERIALS["crayola_model_magic"], n_spoofs=2, n_impressions=3),
        ),
    )


@pytest.fixture(scope="session")
def micro_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("micro-dataset")
    return generate_dataset(micro_config(), seed=7, out_dir=out)
