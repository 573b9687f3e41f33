"""Block compressive acquisition and reconstruction of grayscale images.

Each non-overlapping ``p x p`` block ``x_i`` is measured independently as
``y_i = Phi x_i + eta_i`` with i.i.d. Gaussian noise and recovered by basis
pursuit denoising in the dictionary.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bpdn import BpdnInfo, BpdnSettings, Status, solve_bpdn_batch
from .linalg import Dictionary, SensingMatrix, format_matrix
from .weights import extract_patches

DEFAULT_EPSILON_GRID = (0.6, 0.8, 1.0, 1.2, 1.5, 2.0)
#: natural patches are dominated by the DC coefficient and converge far faster
#: with a large penalty; the exact support polish only runs on stragglers
PIPELINE_SETTINGS = BpdnSettings(rho=300.0, max_iters=20000, polish=False, rescue=True)


class ReconstructionError(RuntimeError):
    def __init__(self, patch_index: int, info: BpdnInfo):
        super().__init__(f"BPDN failed on patch {patch_index}: {info}")
        self.patch_index = patch_index
        self.info = info


@dataclass
class MeasurementSet:
    measurements: np.ndarray  # (count, m)
    sigma2: float
    phi_ref: str
    patch_grid: tuple[int, int]

    def __post_init__(self):
        self.measurements = np.atleast_2d(np.asarray(self.measurements, dtype=np.float64))
        rows, cols = self.patch_grid
        if self.measurements.shape[0] != rows * cols:
            raise ValueError(f"{self.measurements.shape[0]} measurements for a {rows}x{cols} grid")

    @property
    def m(self) -> int:
        return self.measurements.shape[1]


@dataclass
class Reconstruction:
    image: np.ndarray
    infos: list = field(default_factory=list)

    @property
    def failures(self) -> list[int]:
        return [k for k, info in enumerate(self.infos) if info.status is not Status.CONVERGED]


def matrix_id(phi: SensingMatrix) -> str:
    return hashlib.sha256(format_matrix(phi).encode()).hexdigest()[:16]


def patch_grid(shape, patch_side: int) -> tuple[int, int]:
    return shape[0] // patch_side, shape[1] // patch_side


def assemble_patches(patches: np.ndarray, grid: tuple[int, int], patch_side: int) -> np.ndarray:
    """Inverse of :func:`extract_patches` for the retained blocks."""
    rows, cols = grid
    p = patch_side
    blocks = np.asarray(patches).reshape(rows, cols, p, p).swapaxes(1, 2)
    return blocks.reshape(rows * p, cols * p)


def sense(patches, phi: SensingMatrix, sigma2: float, seed: int = 0,
          grid: tuple[int, int] | None = None) -> MeasurementSet:
    x = np.atleast_2d(np.asarray(patches, dtype=np.float64))
    if x.shape[1] != phi.cols:
        raise ValueError(f"patch length {x.shape[1]} does not match {phi.cols} matrix columns")
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    rng = np.random.default_rng(seed)
    y = x @ phi.entries.T
    if sigma2 > 0:
        y = y + rng.normal(0.0, np.sqrt(sigma2), size=y.shape)
    return MeasurementSet(y, float(sigma2), matrix_id(phi), grid or (x.shape[0], 1))


def sense_image(image, phi: SensingMatrix, patch_side: int, sigma2: float, seed: int = 0) -> MeasurementSet:
    img = np.asarray(image, dtype=np.float64)
    return sense(extract_patches(img, patch_side), phi, sigma2, seed, patch_grid(img.shape, patch_side))


def recover_patches(measurements, phi: SensingMatrix, psi: Dictionary, epsilon: float,
                    settings: BpdnSettings | None = None):
    """BPDN per measurement row; returns clipped patches ``(count, d)`` and solver infos."""
    y = np.atleast_2d(np.asarray(measurements, dtype=np.float64))
    a = phi.entries @ psi.basis
    theta, infos = solve_bpdn_batch(a, y.T, epsilon, settings or PIPELINE_SETTINGS)
    patches = np.clip((psi.basis @ theta).T, 0.0, 255.0)
    return patches, infos


def reconstruct_image(ms: MeasurementSet, phi: SensingMatrix, psi: Dictionary, epsilon: float,
                      settings: BpdnSettings | None = None, strict: bool = False) -> Reconstruction:
    if ms.m != phi.rows:
        raise ValueError(f"measurements have length {ms.m}, matrix has {phi.rows} rows")
    p = int(round(np.sqrt(psi.dim)))
    patches, infos = recover_patches(ms.measurements, phi, psi, epsilon, settings)
    if strict:
        for k, info in enumerate(infos):
            if info.status is not Status.CONVERGED:
                raise ReconstructionError(k, info)
    return Reconstruction(assemble_patches(patches, ms.patch_grid, p), infos)


def patch_psnr(reference: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Per-row PSNR (capped like :func:`csdesign.metrics.psnr`)."""
    mse = np.mean((np.asarray(reference, float) - np.asarray(test, float)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        val = 10.0 * np.log10(255.0 ** 2 / mse)
    return np.minimum(val, 120.0)


@dataclass
class Calibration:
    epsilon: float
    multiplier: float
    #: (multiplier, epsilon, mean patch PSNR) per grid point
    table: list


def calibrate_epsilon(phi: SensingMatrix, psi: Dictionary, validation_patches, sigma2: float,
                      grid=DEFAULT_EPSILON_GRID, seed: int = 0,
                      settings: BpdnSettings | None = None) -> Calibration:
    """Pick ``eps = c * sigma * sqrt(m)`` maximizing mean validation-patch PSNR.

    Ties go to the smaller epsilon. With ``sigma2 == 0`` every candidate is 0
    except that the smallest multiplier is reported.
    """
    x = np.atleast_2d(np.asarray(validation_patches, dtype=np.float64))
    grid = sorted(float(c) for c in grid)
    if x.shape[0] == 0 or x.size == 0:
        raise ValueError("empty validation set")
    if not grid:
        raise ValueError("empty epsilon grid")
    ms = sense(x, phi, sigma2, seed)
    base = np.sqrt(sigma2 * phi.rows)
    table = []
    for c in grid:
        eps = c * base
        rec, _ = recover_patches(ms.measurements, phi, psi, eps, settings)
        table.append((c, eps, float(np.mean(patch_psnr(x, rec)))))
    best = max(table, key=lambda row: (row[2], -row[1]))
    return Calibration(best[1], best[0], table)


# -- persistence -------------------------------------------------------------

MEAS_MAGIC = "CSMEAS"


def format_measurements(ms: MeasurementSet) -> str:
    rows, cols = ms.patch_grid
    lines = [f"{MEAS_MAGIC} v1 {ms.m} {ms.measurements.shape[0]} {format(ms.sigma2, '.17g')}",
             f"# grid {rows} {cols} phi {ms.phi_ref}"]
    lines += [" ".join(format(float(v), ".17g") for v in row) for row in ms.measurements]
    return "\n".join(lines) + "\n"


def parse_measurements(text: str) -> MeasurementSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 5 or head[0] != MEAS_MAGIC or head[1] != "v1":
        raise ValueError("not a CSMEAS v1 file")
    m, count, sigma2 = int(head[2]), int(head[3]), float(head[4])
    grid, ref = (count, 1), ""
    body = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            parts = ln[1:].split()
            if len(parts) >= 3 and parts[0] == "grid":
                grid = (int(parts[1]), int(parts[2]))
            if "phi" in parts:
                ref = parts[parts.index("phi") + 1]
            continue
        body.append([float(v) for v in ln.split()])
    y = np.array(body, dtype=np.float64).reshape(-1, m) if body else np.empty((0, m))
    if y.shape[0] != count or any(len(r) != m for r in body):
        raise ValueError(f"expected {count} rows of {m} values")
    return MeasurementSet(y, sigma2, ref, grid)


def save_measurements(path, ms: MeasurementSet) -> None:
    Path(path).write_text(format_measurements(ms))


def load_measurements(path) -> MeasurementSet:
    return parse_measurements(Path(path).read_text())
