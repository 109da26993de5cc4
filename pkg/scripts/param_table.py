"""Parameter counts of the three presets, with the downsampler kernel as a knob.

    python3 scripts/param_table.py [--down-kernel 2]
"""

import argparse
from dataclasses import replace

from gemst.config import preset
from gemst.model import build, count_params

REFERENCE_M = {"small": 5.35, "base": 9.36, "large": 14.48}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--down-kernel", type=int, default=None, help="override the downsampler kernel")
    args = ap.parse_args()
    print(f"{'preset':<8} {'params (M)':>11} {'reference':>10} {'deviation':>10}")
    for name, ref in REFERENCE_M.items():
        cfg = preset(name)
        if args.down_kernel is not None:
            cfg = replace(cfg, down_kernel=args.down_kernel)
        total = count_params(build(cfg))["total"] / 1e6
        print(f"{name:<8} {total:>11.3f} {ref:>10.2f} {100 * (total - ref) / ref:>9.2f}%")


if __name__ == "__main__":
    main()
