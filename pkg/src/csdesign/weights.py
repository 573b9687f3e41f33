"""Per-frequency importance weights learned from training patches."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import Dictionary

WEIGHT_MAGIC = "CSWGT"


@dataclass
class WeightVector:
    values: np.ndarray
    source_count: int = 0
    #: set when training data was all zero and uniform weights were substituted
    fallback: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("weights must be a vector")
        if np.any(self.values < 0) or not np.any(self.values > 0):
            raise ValueError("weights must be nonnegative with at least one positive entry")

    def __len__(self):
        return self.values.size


def extract_patches(image: np.ndarray, patch_side: int) -> np.ndarray:
    """Non-overlapping ``p x p`` blocks in row-major block order.

    Returns an ``(n_patches, p*p)`` array; each block is flattened row-major
    and trailing partial blocks are dropped.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("expected a 2D grayscale image")
    p = patch_side
    h, w = image.shape
    if h < p or w < p:
        raise ValueError(f"image {h}x{w} is smaller than one {p}x{p} patch")
    rows, cols = h // p, w // p
    blocks = image[: rows * p, : cols * p].reshape(rows, p, cols, p).swapaxes(1, 2)
    return blocks.reshape(rows * cols, p * p)


def compute_weights(patches, psi: Dictionary) -> WeightVector:
    """Mean absolute analysis coefficient per atom over the training patches."""
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] == 0:
        raise ValueError("no training patches")
    if x.shape[1] != psi.dim:
        raise ValueError(f"patch length {x.shape[1]} does not match dictionary size {psi.dim}")
    coeffs = np.abs(x @ psi.basis)
    values = coeffs.mean(axis=0)
    if not np.any(values > 0):
        return WeightVector(np.ones(psi.dim), x.shape[0], fallback=True)
    return WeightVector(values, x.shape[0])


def format_weights(w: WeightVector) -> str:
    lines = [f"{WEIGHT_MAGIC} v1 {len(w)}"]
    lines += [format(float(v), ".17g") for v in w.values]
    return "\n".join(lines) + "\n"


def parse_weights(text: str) -> WeightVector:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != WEIGHT_MAGIC or head[1] != "v1":
        raise ValueError("not a CSWGT v1 file")
    d = int(head[2])
    values = [float(v) for v in lines[1:]]
    if len(values) != d:
        raise ValueError(f"expected {d} weights, found {len(values)}")
    return WeightVector(np.array(values))


def save_weights(path, w: WeightVector) -> None:
    Path(path).write_text(format_weights(w))


def load_weights(path) -> WeightVector:
    return parse_weights(Path(path).read_text())
