#!/usr/bin/env python3
"""Render example dual-view captures: one live finger plus every stock spoof
material, with the capture-gate verdict and the processed 500 ppi print.

    python3 scripts/render_sample_views.py --out /tmp/views
"""

from __future__ import annotations

import argparse
from pathlib import Path

from ftirpad.calibration import PerspectiveTransform
from ftirpad.imageops import process_ftir
from ftirpad.simulate import (
    FingerSpec,
    STOCK_MATERIALS,
    Pose,
    capture_gate,
    render_views,
    write_png,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finger = FingerSpec("s000", "f00", ridge_orientation_field_seed=args.seed)
    pose = Pose()

    cases = [("live", None)] + [(name, mat) for name, mat in STOCK_MATERIALS.items()]
    for name, material in cases:
        ftir, direct = render_views(finger, material, pose, noise_seed=args.seed)
        gate = capture_gate(ftir)
        write_png(ftir, out / f"{name}_ftir.png")
        write_png(direct, out / f"{name}_direct.png")
        processed = process_ftir(ftir, PerspectiveTransform.identity(),
                                 native_ppi=(1000.0, 1000.0))
        write_png(processed, out / f"{name}_processed.png", ppi=500.0)
        verdict = "accepted" if gate.accepted else f"REJECTED ({gate.reason})"
        print(f"{name:28s} gate statistic {gate.statistic:6.1f}  {verdict}")

    print(f"\nimages written under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
