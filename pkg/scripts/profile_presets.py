"""Profile presets with seeded random weights on seeded images and write per-module CSVs.

    python3 scripts/profile_presets.py --presets small base --images 2 --outdir reports/
"""

import argparse
import os
import time

import numpy as np

from gemst.config import preset
from gemst.model import build, calibrate, forward, init_weights
from gemst.profiler import Profiler, ProfileReport, emit_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=["small"])
    ap.add_argument("--images", type=int, default=1)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--outdir", default="reports")
    args = ap.parse_args()
    os.makedirs(args.outdir, exist_ok=True)
    for name in args.presets:
        cfg = preset(name)
        model = init_weights(build(cfg), args.seed)
        rng = np.random.default_rng(args.seed)
        calibrate(model, rng.random((1, 1, cfg.input_size, cfg.input_size, 3)))
        x = rng.random((1, args.images, cfg.input_size, cfg.input_size, 3))
        prof = Profiler()
        t0 = time.perf_counter()
        forward(model, x, profiler=prof)
        dt = time.perf_counter() - t0
        report = ProfileReport(prof.report().rows, n_samples=args.images)
        path = os.path.join(args.outdir, f"profile_{name}.csv")
        emit_report(report, path)
        per = report.per_sample()
        print(f"{name:<6} SOPs/img {per.total_sops / 1e9:6.3f} G  bound {sum(r.sop_upper_bound for r in per.rows) / 1e9:7.3f} G  "
              f"energy {per.energy_mJ:6.3f} mJ (no stem {per.energy_mJ_without_stem:6.3f})  "
              f"{dt / args.images:5.1f} s/img -> {path}")


if __name__ == "__main__":
    main()
