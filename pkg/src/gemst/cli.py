"""``gemst`` command line: run, profile, verify, params, init.

Exit codes: 0 ok, 1 verification failed (or an output file could not be
written), 2 config error, 3 weight error, 4 input error. Output files are
written to a temporary name and renamed, so a failed command never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import io
import os
import sys
from typing import Optional

import numpy as np

from . import cifar
from .config import ModelConfig, load_config, preset
from .errors import ConfigError, InputError, ShapeError, WeightFileError
from .model import build, calibrate, count_params, forward, init_weights, load_model, save_model
from .profiler import Profiler, ProfileReport, atomic_write, report_csv

EXIT_FAILURE = EXIT_VERIFY = 1
EXIT_CONFIG, EXIT_WEIGHTS, EXIT_INPUT = 2, 3, 4
THREADS_ENV = "GEMST_THREADS"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> ModelConfig:
    try:
        if args.config:
            return load_config(args.config, args.preset)
        if args.preset:
            return preset(args.preset)
    except OSError as e:
        raise CliError(EXIT_CONFIG, f"cannot read config {args.config}: {e.strerror}") from None
    except ConfigError as e:
        raise CliError(EXIT_CONFIG, f"config error: {e}") from None
    raise CliError(EXIT_CONFIG, "give --preset and/or --config")


def _weights(cfg: ModelConfig, path):
    if not path:
        raise CliError(EXIT_WEIGHTS, "--weights is required")
    try:
        return load_model(cfg, path)
    except FileNotFoundError:
        raise CliError(EXIT_WEIGHTS, f"weights file not found: {path}") from None
    except OSError as e:
        raise CliError(EXIT_WEIGHTS, f"cannot read weights {path}: {e.strerror}") from None
    except WeightFileError as e:
        raise CliError(EXIT_WEIGHTS, f"weight error: {e}") from None


def synthetic_input(cfg: ModelConfig, seed: int, batch: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.random((1, batch, cfg.input_size, cfg.input_size, cfg.in_channels))


def _input(args, cfg: ModelConfig):
    """(images (1, B, H, W, C), labels or None)."""
    try:
        if args.cifar:
            labels, images = cifar.read_batch(args.cifar, args.limit)
            if cfg.in_channels != 3:
                raise InputError("CIFAR-10 images have 3 channels")
            return cifar.to_input(images, cfg.input_size), labels
        if args.input:
            try:
                x = np.load(args.input, allow_pickle=False)
            except (OSError, ValueError) as e:
                raise InputError(f"cannot read {args.input}: {e}") from None
            if x.ndim == 3:
                x = x[None]
            if x.ndim != 4:
                raise InputError(f"{args.input}: expected (B, H, W, C) images, got shape {x.shape}")
            return x.astype(np.float64)[None], None
        if args.fill is not None:
            shape = (1, args.batch, cfg.input_size, cfg.input_size, cfg.in_channels)
            return np.full(shape, args.fill), None
        return synthetic_input(cfg, args.input_seed, args.batch), None
    except InputError as e:
        raise CliError(EXIT_INPUT, f"input error: {e}") from None


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise CliError(EXIT_CONFIG, "thread count must be >= 1")
    return n


def _forward(args, profiler: Optional[Profiler] = None):
    cfg = _config(args)
    threads = _threads(args)
    model = _weights(cfg, args.weights)
    x, labels = _input(args, cfg)
    try:
        logits = forward(model, x, threads=threads, profiler=profiler, check_spikes=args.check_spikes)
    except ShapeError as e:
        raise CliError(EXIT_INPUT, f"input error: {e}") from None
    return cfg, logits, labels


def logits_csv(logits: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("item," + ",".join(f"class_{k}" for k in range(logits.shape[1])) + "\n")
    for i, row in enumerate(logits):
        buf.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def cmd_run(args) -> int:
    _, logits, labels = _forward(args)
    if args.out:
        atomic_write(args.out, logits_csv(logits))
    k = min(args.topk, logits.shape[1])
    for i, row in enumerate(logits):
        top = np.argsort(-row, kind="stable")[:k]
        picks = " ".join(f"{c}:{row[c]:.4f}" for c in top)
        label = f" label={labels[i]}" if labels is not None else ""
        print(f"item {i}{label} top{k} {picks}")
    return 0


def cmd_profile(args) -> int:
    prof = Profiler()
    _, logits, _ = _forward(args, prof)
    report = prof.report()
    report = ProfileReport(report.rows, n_samples=logits.shape[0])
    if args.out:
        atomic_write(args.out, report_csv(report))
    per = report.per_sample()
    print(per.summary())
    print(f"per sample: SOPs {per.total_sops / 1e9:.4f} G  energy {per.energy_mJ:.4f} mJ")
    return 0


def cmd_params(args) -> int:
    cfg = _config(args)
    counts = count_params(build(cfg))
    total = counts.pop("total")
    for name, n in counts.items():
        print(f"{name:<12} {n:>12,}")
    print(f"{'total':<12} {total:>12,}  ({total / 1e6:.3f} M)")
    return 0


def cmd_init(args) -> int:
    cfg = _config(args)
    model = init_weights(build(cfg), args.seed)
    if not args.no_calibrate:
        calibrate(model, synthetic_input(cfg, args.seed, 1))
    save_model(model, args.out)
    print(f"wrote {args.out} ({count_params(model)['total']:,} parameters, seed {args.seed})")
    return 0


def cmd_verify(args) -> int:
    from .verify import injected_fault, run_checks, select

    checks = select(args.filter)
    if not checks:
        print(f"no checks match {args.filter!r}", file=sys.stderr)
        return EXIT_VERIFY
    if args.inject_fault:
        with injected_fault():
            results = run_checks(checks)
    else:
        results = run_checks(checks)
    return 0 if all(r.ok for r in results) else EXIT_VERIFY


def _model_args(p, weights=True):
    p.add_argument("--preset", choices=("small", "base", "large"), help="named architecture")
    p.add_argument("--config", help="config file; its [stage.N] sections override the preset")
    if weights:
        p.add_argument("--weights", help="GSTW weight file")


def _forward_args(p):
    _model_args(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--cifar", help="CIFAR-10 batch file, or a directory holding test_batch.bin")
    src.add_argument("--input", help=".npy array of images (B, H, W, C) in [0, 1]")
    src.add_argument("--fill", type=float, help="constant image with this pixel value")
    src.add_argument("--input-seed", type=int, default=0, help="seed of a synthetic uniform image (default)")
    p.add_argument("--batch", type=int, default=1, help="synthetic/constant batch size")
    p.add_argument("--limit", type=int, help="read at most this many CIFAR-10 records")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--check-spikes", action="store_true", help="assert the spike amplitude invariant")
    p.add_argument("--out", help="output CSV path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gemst", description="Grouped exponential spiking transformer engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="forward pass, logits CSV and top-k")
    _forward_args(p)
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("profile", help="forward pass with SOP/energy report CSV")
    _forward_args(p)
    p.set_defaults(fn=cmd_profile)

    p = sub.add_parser("params", help="parameter counts per module")
    _model_args(p, weights=False)
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("init", help="write seeded random weights")
    _model_args(p, weights=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-calibrate", action="store_true", help="keep lambda = 1 at every site")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("verify", help="run the oracle check suite")
    p.add_argument("--filter", help="comma-separated check groups or names, e.g. exp_coding")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"gemst: {e}", file=sys.stderr)
        return e.code
    except OSError as e:
        print(f"gemst: I/O error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
