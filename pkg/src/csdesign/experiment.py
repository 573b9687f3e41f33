"""Experiment harness: matrix design over a (criterion, m, seed) grid and
paired end-to-end evaluation on test images.

Every random draw is seeded from the job key, so results do not depend on
the worker count or on the order in which jobs finish.
"""

from __future__ import annotations

import csv
import io
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bpdn import BpdnError, Status
from .config import RANDOM, ExperimentConfig
from .criteria import criterion_from_name
from .imageio import list_pgm, read_pgm
from .linalg import Dictionary, Mode, SensingMatrix, dct_dictionary, load_matrix, save_matrix
from .metrics import psnr, ssim
from .optimizer import (
    FlipOptimizerConfig,
    PgaConfig,
    flip_optimize,
    pga_optimize,
    project_feasible,
)
from .pipeline import calibrate_epsilon, reconstruct_image, sense_image
from .svgplot import write_chart
from .weights import WeightVector, compute_weights, extract_patches

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("criterion", "m", "seed", "image", "psnr", "ssim")
MATRIX_NAME = re.compile(r"^(?P<criterion>[a-z0-9]+)_m(?P<m>\d+)_s(?P<seed>\d+)\.csmat$")


class DataError(RuntimeError):
    """Missing or unreadable input data."""


def matrix_filename(criterion: str, m: int, seed: int) -> str:
    return f"{criterion}_m{m}_s{seed}.csmat"


def trace_filename(criterion: str, m: int, seed: int) -> str:
    return f"{criterion}_m{m}_s{seed}_trace.csv"


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


# stream identifiers keep the seeded draws of different purposes independent
_START, _VALIDATION, _CAL_NOISE, _TEST_NOISE = 1, 2, 3, 4


def starting_matrix(mode: Mode, m: int, d: int, seed: int) -> SensingMatrix:
    """The random matrix every criterion starts from for a given (m, seed)."""
    rng = _rng(_START, seed, m)
    if mode is Mode.BINARY:
        return SensingMatrix.random_binary(m, d, rng)
    return project_feasible(SensingMatrix.random_uniform(m, d, rng))


def load_images(directory) -> list[tuple[str, np.ndarray]]:
    try:
        files = list_pgm(directory)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    images = []
    for f in files:
        try:
            images.append((f.stem, read_pgm(f).astype(np.float64)))
        except ValueError as exc:
            log.warning("skipping %s: %s", f, exc)
    if not images:
        raise DataError(f"no readable PGM images in {directory}")
    return images


def training_patches(directory, patch_side: int) -> np.ndarray:
    chunks = [extract_patches(img, patch_side) for _, img in load_images(directory)
              if min(img.shape) >= patch_side]
    if not chunks:
        raise DataError(f"no image in {directory} holds a {patch_side}x{patch_side} patch")
    return np.vstack(chunks)


def training_weights(directory, psi: Dictionary) -> WeightVector:
    p = int(round(np.sqrt(psi.dim)))
    return compute_weights(training_patches(directory, p), psi)


def sparsity_ratios(patches, psi: Dictionary) -> np.ndarray:
    """``||theta||_1 / ||theta||_inf`` of every nonzero patch."""
    theta = np.abs(np.atleast_2d(np.asarray(patches, dtype=np.float64)) @ psi.basis)
    peak = theta.max(axis=1)
    keep = peak > 0
    if not np.any(keep):
        raise DataError("every patch is zero")
    return theta[keep].sum(axis=1) / peak[keep]


# -- design ------------------------------------------------------------------

@dataclass
class DesignJob:
    criterion: str
    m: int
    seed: int


def design_jobs(cfg: ExperimentConfig) -> list[DesignJob]:
    names = sorted(set(cfg.criteria))
    return [DesignJob(c, m, s) for c in names for m in cfg.measurement_counts for s in cfg.seeds]


def _run_design(job: DesignJob, cfg: ExperimentConfig, weights):
    psi = dct_dictionary(cfg.patch_side)
    phi0 = starting_matrix(cfg.matrix_mode, job.m, cfg.dim, job.seed)
    if job.criterion == RANDOM:
        return phi0, ["epoch,loss"] if cfg.matrix_mode is Mode.BINARY else ["iter,loss,step"]
    spec = criterion_from_name(job.criterion, weights=weights, s=cfg.s)
    spec.validate_dim(cfg.dim)
    if cfg.matrix_mode is Mode.BINARY:
        res = flip_optimize(phi0, psi, spec, FlipOptimizerConfig(delta=cfg.delta, seed=job.seed))
        lines = ["epoch,loss"] + [f"{e},{loss!r}" for e, loss in res.trace]
    else:
        res = pga_optimize(phi0, psi, spec, PgaConfig(seed=job.seed))
        lines = ["iter,loss,step"] + [f"{i},{loss!r},{step!r}" for i, loss, step in res.trace]
    return res.phi, lines


def run_design(cfg: ExperimentConfig, jobs: int = 1) -> list[Path]:
    """Write one matrix and one loss trace per (criterion, m, seed); returns the matrix paths."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    psi = dct_dictionary(cfg.patch_side)
    needs_weights = any(c.startswith("w") for c in cfg.criteria)
    weights = training_weights(cfg.train_dir, psi).values if needs_weights else None
    todo = design_jobs(cfg)
    results = _map(_run_design, todo, cfg, weights, jobs=jobs)
    written = []
    for job, (phi, lines) in zip(todo, results):
        path = cfg.output_dir / matrix_filename(job.criterion, job.m, job.seed)
        save_matrix(path, phi)
        (cfg.output_dir / trace_filename(job.criterion, job.m, job.seed)).write_text("\n".join(lines) + "\n")
        written.append(path)
    return written


def _map(fn, items, *args, jobs: int = 1):
    """Ordered map over ``items``, optionally on a bounded process pool."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item, *args) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, item, *args) for item in items]
        return [f.result() for f in futures]


# -- evaluation --------------------------------------------------------------

@dataclass
class EvalSummary:
    rows: list
    patches: int = 0
    nonconverged: int = 0
    failed_images: int = 0

    @property
    def failure_rate(self) -> float:
        return self.nonconverged / self.patches if self.patches else 0.0


def find_matrices(directory, cfg: ExperimentConfig) -> list[tuple[str, int, int, Path]]:
    """Matrices in ``directory`` matching the configured grid, sorted by key."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"matrix directory {directory} does not exist")
    wanted = set(cfg.criteria)
    found = []
    for path in directory.iterdir():
        hit = MATRIX_NAME.match(path.name)
        if not hit:
            continue
        key = (hit["criterion"], int(hit["m"]), int(hit["seed"]))
        if key[0] in wanted and key[1] in cfg.measurement_counts and key[2] in cfg.seeds:
            found.append((*key, path))
    if not found:
        raise DataError(f"no matrices for the configured grid in {directory}")
    return sorted(found)


def validation_set(cfg: ExperimentConfig) -> np.ndarray:
    patches = training_patches(cfg.train_dir, cfg.patch_side)
    n = min(cfg.validation_patches, patches.shape[0])
    idx = np.sort(_rng(_VALIDATION, cfg.patch_side).choice(patches.shape[0], n, replace=False))
    return patches[idx]


def _evaluate_matrix(item, cfg: ExperimentConfig, images, validation):
    criterion, m, seed, path = item
    phi = load_matrix(path)
    if phi.cols != cfg.dim:
        raise DataError(f"{path.name} has {phi.cols} columns, expected {cfg.dim}")
    psi = dct_dictionary(cfg.patch_side)
    cal_seed = int(np.random.SeedSequence([_CAL_NOISE, seed, m]).generate_state(1)[0])
    cal = calibrate_epsilon(phi, psi, validation, cfg.sigma2, cfg.epsilon_grid, seed=cal_seed)
    rows, patches, bad, failed = [], 0, 0, 0
    for k, (name, img) in enumerate(images):
        # the same noise for every criterion keeps the comparison paired
        noise_seed = int(np.random.SeedSequence([_TEST_NOISE, seed, m, k]).generate_state(1)[0])
        ms = sense_image(img, phi, cfg.patch_side, cfg.sigma2, seed=noise_seed)
        try:
            rec = reconstruct_image(ms, phi, psi, cal.epsilon)
        except BpdnError as exc:
            log.error("%s on %s: %s", path.name, name, exc)
            failed += 1
            continue
        patches += len(rec.infos)
        bad += sum(info.status is not Status.CONVERGED for info in rec.infos)
        h, w = rec.image.shape
        ref = img[:h, :w]
        rows.append((criterion, m, seed, name, psnr(ref, rec.image), ssim(ref, rec.image)))
    return rows, patches, bad, failed


def run_evaluate(cfg: ExperimentConfig, matrix_dir=None, jobs: int = 1) -> EvalSummary:
    """Evaluate every matrix on every test image and write ``results.csv`` and plots."""
    matrices = find_matrices(matrix_dir or cfg.output_dir, cfg)
    images = load_images(cfg.test_dir)
    validation = validation_set(cfg)
    parts = _map(_evaluate_matrix, matrices, cfg, images, validation, jobs=jobs)
    summary = EvalSummary([])
    for rows, patches, bad, failed in parts:
        summary.rows.extend(rows)
        summary.patches += patches
        summary.nonconverged += bad
        summary.failed_images += failed
    summary.rows.sort(key=lambda r: r[:4])
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "results.csv").write_text(format_results(summary.rows))
    write_plots(summary.rows, cfg.output_dir)
    return summary


def format_results(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for criterion, m, seed, image, p, s in rows:
        writer.writerow((criterion, m, seed, image, f"{p:.6f}", f"{s:.6f}"))
    return buf.getvalue()


def read_results(path) -> list[tuple]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DataError(f"{path} does not have the columns {','.join(RESULT_COLUMNS)}")
        return [(r["criterion"], int(r["m"]), int(r["seed"]), r["image"],
                 float(r["psnr"]), float(r["ssim"])) for r in reader]


def mean_by(rows, keys=(0, 1), value: int = 5) -> dict:
    """Mean of column ``value`` grouped by the columns in ``keys``."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def write_plots(rows, directory) -> list[Path]:
    """Mean SSIM and PSNR against m, one line per criterion."""
    out = []
    for metric, col, label in (("ssim", 5, "mean SSIM"), ("psnr", 4, "mean PSNR (dB)")):
        means = mean_by(rows, (0, 1), col)
        series: dict = {}
        for (criterion, m), v in means.items():
            xs, ys = series.setdefault(criterion, ([], []))
            xs.append(m)
            ys.append(v)
        if not series:
            continue
        path = Path(directory) / f"{metric}_vs_m.svg"
        write_chart(path, series, title=f"{label} against measurements",
                    xlabel="measurements m", ylabel=label)
        out.append(path)
    return out
