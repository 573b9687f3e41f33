"""Command-line front end: ``csdesign <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver
failure budget exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (
    DataError,
    mean_by,
    read_results,
    run_design,
    run_evaluate,
    sparsity_ratios,
    training_patches,
    write_plots,
)
from .imageio import PGMError, read_pgm, write_pgm
from .linalg import dct_dictionary, load_matrix
from .pipeline import (
    calibrate_epsilon,
    load_measurements,
    reconstruct_image,
    save_measurements,
    sense_image,
)
from .weights import compute_weights, save_weights

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

log = logging.getLogger("csdesign")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {"output_dir": Path(args.out) if args.out else None}
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    return cfg.with_overrides(**overrides)


def cmd_design(args) -> int:
    cfg = _config(args)
    paths = run_design(cfg, jobs=args.jobs)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    summary = run_evaluate(cfg, matrix_dir=args.matrices, jobs=args.jobs)
    print(f"wrote {cfg.output_dir / 'results.csv'} ({len(summary.rows)} rows)")
    for (criterion, m), v in mean_by(summary.rows, (0, 1), 4).items():
        print(f"{criterion:>14s} m={m:<3d} mean PSNR {v:7.3f}")
    if summary.nonconverged or summary.failed_images:
        print(f"solver: {summary.nonconverged}/{summary.patches} patches non-converged, "
              f"{summary.failed_images} images failed", file=sys.stderr)
    if summary.failure_rate > cfg.failure_budget or summary.failed_images:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_weights(args) -> int:
    psi = dct_dictionary(args.patch_side)
    w = compute_weights(training_patches(args.train_dir, args.patch_side), psi)
    out = Path(args.out or "weights.cswgt")
    save_weights(out, w)
    print(f"source_count {w.source_count}")
    if w.fallback:
        print("all training patches are zero; wrote uniform weights", file=sys.stderr)
    return EXIT_OK


def cmd_stats(args) -> int:
    psi = dct_dictionary(args.patch_side)
    ratios = sparsity_ratios(training_patches(args.train_dir, args.patch_side), psi)
    mean, p99 = float(ratios.mean()), float(np.percentile(ratios, 99))
    grid = np.linspace(mean, p99, 5) if p99 > mean else np.array([mean])
    print(f"patches {ratios.size}")
    print(f"mean l1/linf {mean:.4f}")
    print(f"p99 l1/linf {p99:.4f}")
    print("suggested s grid " + " ".join(f"{s:.3g}" for s in grid))
    return EXIT_OK


def cmd_sense(args) -> int:
    phi = load_matrix(args.matrix)
    p = int(round(np.sqrt(phi.cols)))
    img = read_pgm(args.image).astype(np.float64)
    ms = sense_image(img, phi, p, args.sigma2, seed=args.seed or 0)
    out = Path(args.out or Path(args.image).with_suffix(".csmeas").name)
    save_measurements(out, ms)
    print(out)
    return EXIT_OK


def cmd_recover(args) -> int:
    phi = load_matrix(args.matrix)
    ms = load_measurements(args.measurements)
    psi = dct_dictionary(int(round(np.sqrt(phi.cols))))
    if args.epsilon is not None:
        eps = args.epsilon
    else:
        cfg = _config(args)
        val = training_patches(cfg.train_dir, cfg.patch_side)[: cfg.validation_patches]
        eps = calibrate_epsilon(phi, psi, val, ms.sigma2, cfg.epsilon_grid, seed=args.seed or 0).epsilon
    rec = reconstruct_image(ms, phi, psi, eps)
    out = Path(args.out or "recovered.pgm")
    write_pgm(out, rec.image)
    print(f"{out} epsilon {eps:.6g}")
    if rec.failures:
        print(f"{len(rec.failures)} patches non-converged", file=sys.stderr)
    if args.reference:
        from .metrics import quality

        ref = read_pgm(args.reference).astype(np.float64)
        h, w = rec.image.shape
        q = quality(ref[:h, :w], rec.image)
        print(f"psnr {q.psnr_db:.4f} ssim {q.ssim:.4f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    rows = read_results(args.results)
    if not rows:
        raise DataError(f"{args.results} has no data rows")
    out_dir = Path(args.out) if args.out else Path(args.results).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    for p in write_plots(rows, out_dir):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment config")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--seed", type=int, help="single seed (overrides the config seeds)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="csdesign", description="Design and benchmark compressive sensing matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("design", parents=[common], help="optimize sensing matrices").set_defaults(func=cmd_design)

    ev = sub.add_parser("evaluate", parents=[common], help="reconstruct test images and score them")
    ev.add_argument("--matrices", help="directory holding the .csmat files (default: output dir)")
    ev.set_defaults(func=cmd_evaluate)

    for name, func, text in (("weights", cmd_weights, "learn per-frequency weights"),
                             ("stats", cmd_stats, "l1/linf sparsity statistics of training patches")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--train-dir", required=True)
        sp.add_argument("--patch-side", type=int, default=8)
        sp.set_defaults(func=func)

    se = sub.add_parser("sense", parents=[common], help="measure one image")
    se.add_argument("--matrix", required=True)
    se.add_argument("--image", required=True)
    se.add_argument("--sigma2", type=float, default=4.0)
    se.set_defaults(func=cmd_sense)

    rc = sub.add_parser("recover", parents=[common], help="reconstruct an image from measurements")
    rc.add_argument("--matrix", required=True)
    rc.add_argument("--measurements", required=True)
    rc.add_argument("--epsilon", type=float, help="noise bound (default: calibrate on training patches)")
    rc.add_argument("--reference", help="original image to score against")
    rc.set_defaults(func=cmd_recover)

    pl = sub.add_parser("plot", parents=[common], help="SVG plots from results.csv")
    pl.add_argument("--results", required=True)
    pl.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, PGMError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
