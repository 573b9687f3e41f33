"""Dense-matrix primitives: sensing matrices, the 2D DCT dictionary, and the
Gram cache with incremental single-entry flip updates.

Naming: ``p`` is the patch side, ``d = p**2`` the number of columns of the
sensing matrix and ``m`` the number of measurements per block.
"""

from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: relative threshold on det(G_SS) below which the pseudo-inverse is used
SINGULAR_RTOL = 1e-10
#: squared column norm below which a column is treated as zero
ZERO_COLUMN_TOL = 1e-12


class Mode(str, enum.Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


@dataclass
class SensingMatrix:
    """An ``m x d`` measurement matrix with binary or [0, 1] entries.

    ``m == d`` is accepted so that fully determined round trips can be
    tested; experiment configs still require ``m < d``.
    """

    entries: np.ndarray
    mode: Mode = Mode.BINARY

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.entries = np.array(self.entries, dtype=np.float64)
        if self.entries.ndim != 2:
            raise ValueError("sensing matrix must be two-dimensional")
        m, d = self.entries.shape
        if m < 1 or d < 1:
            raise ValueError("sensing matrix must be non-empty")
        if m > d:
            raise ValueError(f"expected m <= d, got m={m}, d={d}")
        if self.mode is Mode.BINARY:
            if not np.all((self.entries == 0.0) | (self.entries == 1.0)):
                raise ValueError("binary sensing matrix has entries outside {0, 1}")
        elif np.any(self.entries < -1e-9) or np.any(self.entries > 1 + 1e-9):
            raise ValueError("continuous sensing matrix has entries outside [0, 1]")

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def random_binary(cls, m: int, d: int, rng: np.random.Generator) -> SensingMatrix:
        return cls(rng.integers(0, 2, size=(m, d)).astype(np.float64), Mode.BINARY)

    @classmethod
    def random_uniform(cls, m: int, d: int, rng: np.random.Generator) -> SensingMatrix:
        return cls(rng.uniform(0.0, 1.0, size=(m, d)), Mode.CONTINUOUS)

    def copy(self) -> SensingMatrix:
        return SensingMatrix(self.entries.copy(), self.mode)


@dataclass
class Dictionary:
    """Orthonormal ``d x d`` sparsifying basis; columns are atoms."""

    basis: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.ndim != 2 or self.basis.shape[0] != self.basis.shape[1]:
            raise ValueError("dictionary must be square")
        if self.check:
            err = np.abs(self.basis.T @ self.basis - np.eye(self.dim)).max()
            if err > 1e-10:
                raise ValueError(f"dictionary is not orthonormal (max error {err:.3g})")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def analyze(self, x: np.ndarray) -> np.ndarray:
        """Coefficients ``theta = Psi^T x`` (works on stacked columns)."""
        return self.basis.T @ x

    def synthesize(self, theta: np.ndarray) -> np.ndarray:
        return self.basis @ theta


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal 1D DCT-II analysis matrix; row ``k`` is frequency ``k``."""
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * t + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0, :] = np.sqrt(1.0 / n)
    return c


def dct_dictionary(patch_side: int) -> Dictionary:
    """2D DCT-II basis for ``p x p`` patches vectorized row-major.

    Column ``u * p + v`` is the atom with vertical frequency ``u`` and
    horizontal frequency ``v``.
    """
    if patch_side < 1:
        raise ValueError("patch side must be >= 1")
    c = dct_matrix(patch_side)
    # atom (u, v) at pixel (r, s) = c[u, r] * c[v, s]; vectorized pixel index r*p + s
    return Dictionary(np.kron(c, c).T)


@dataclass
class GramState:
    """Effective matrix ``A = Phi Psi`` and its Gram ``G = A^T A``."""

    effective: np.ndarray
    gram: np.ndarray
    #: dictionary the state was built with; needed for flip updates
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    def copy(self) -> GramState:
        return GramState(self.effective.copy(), self.gram.copy(), self.basis)

    def rebuild(self) -> GramState:
        """Recompute ``G`` from ``A`` to discard accumulated roundoff."""
        g = self.effective.T @ self.effective
        self.gram[...] = 0.5 * (g + g.T)
        return self


def gram_from_effective(a: np.ndarray, basis: np.ndarray | None = None) -> GramState:
    a = np.array(a, dtype=np.float64)
    g = a.T @ a
    return GramState(a, 0.5 * (g + g.T), basis)


def build_gram(phi: SensingMatrix, psi: Dictionary) -> GramState:
    if phi.cols != psi.dim:
        raise ValueError(f"dimension mismatch: phi has {phi.cols} columns, psi is {psi.dim}")
    return gram_from_effective(phi.entries @ psi.basis, psi.basis)


def flip_update(state: GramState, phi: SensingMatrix, row: int, col: int) -> GramState:
    """Flip ``phi[row, col]`` in place and apply the matching rank-2 Gram update.

    Both ``phi`` and ``state`` are mutated; ``state`` is returned.
    """
    if phi.mode is not Mode.BINARY:
        raise ValueError("flip_update requires a binary sensing matrix")
    m, d = phi.entries.shape
    if not (0 <= row < m and 0 <= col < d):
        raise IndexError(f"entry ({row}, {col}) out of range for {m}x{d} matrix")
    if state.basis is None:
        raise ValueError("GramState has no dictionary attached; build it with build_gram")
    return _flip_inplace(state, phi.entries, row, col, state.basis[col])


def _flip_inplace(state: GramState, entries: np.ndarray, row: int, col: int, u: np.ndarray) -> GramState:
    delta = 1.0 - 2.0 * entries[row, col]
    a_p = state.effective[row].copy()
    g = state.gram
    cross = np.outer(a_p, u)
    g += delta * (cross + cross.T)
    g += (delta * delta) * np.outer(u, u)
    state.effective[row] += delta * u
    entries[row, col] += delta
    return state


def _gather(gram: np.ndarray, targets: np.ndarray, subsets: np.ndarray):
    diag = gram[targets, targets]
    g = gram[subsets, targets[:, None]]  # (N, r): G_ji for j in S
    h = gram[subsets[:, :, None], subsets[:, None, :]]  # (N, r, r)
    return diag, g, h


def _quadratic_pinv(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    hp = np.linalg.pinv(h, rcond=SINGULAR_RTOL, hermitian=True)
    return np.einsum("ni,nij,nj->n", g, hp, g)


def batched_residuals(gram: np.ndarray, targets: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """``res(i, S) = G_ii - g^T G_SS^{-1} g`` for many (target, subset) pairs.

    ``subsets`` has shape ``(N, r)`` with ``r`` in {1, 2, 3}; explicit
    adjugate formulas are used, with a truncated pseudo-inverse for blocks
    whose determinant is negligible relative to their trace.
    """
    targets = np.asarray(targets)
    subsets = np.asarray(subsets)
    r = subsets.shape[1]
    if r == 1:
        j = subsets[:, 0]
        diag = gram[targets, targets]
        gj = gram[j, targets]
        hjj = gram[j, j]
        safe = hjj >= ZERO_COLUMN_TOL
        quad = np.where(safe, gj * gj / np.where(safe, hjj, 1.0), 0.0)
        return np.maximum(diag - quad, 0.0)

    diag, g, h = _gather(gram, targets, subsets)
    if r == 2:
        h00, h01, h11 = h[:, 0, 0], h[:, 0, 1], h[:, 1, 1]
        g0, g1 = g[:, 0], g[:, 1]
        det = h00 * h11 - h01 * h01
        num = h11 * g0 * g0 - 2.0 * h01 * g0 * g1 + h00 * g1 * g1
        scale = (0.5 * (h00 + h11)) ** 2
    elif r == 3:
        h00, h01, h02 = h[:, 0, 0], h[:, 0, 1], h[:, 0, 2]
        h11, h12, h22 = h[:, 1, 1], h[:, 1, 2], h[:, 2, 2]
        g0, g1, g2 = g[:, 0], g[:, 1], g[:, 2]
        c00 = h11 * h22 - h12 * h12
        c11 = h00 * h22 - h02 * h02
        c22 = h00 * h11 - h01 * h01
        c01 = h02 * h12 - h01 * h22
        c02 = h01 * h12 - h02 * h11
        c12 = h01 * h02 - h00 * h12
        det = h00 * c00 + h01 * c01 + h02 * c02
        num = (c00 * g0 * g0 + c11 * g1 * g1 + c22 * g2 * g2
               + 2.0 * (c01 * g0 * g1 + c02 * g0 * g2 + c12 * g1 * g2))
        scale = ((h00 + h11 + h22) / 3.0) ** 3
    else:
        raise ValueError(f"subset size must be 1, 2 or 3, got {r}")

    singular = np.abs(det) <= SINGULAR_RTOL * scale
    quad = num / np.where(singular, 1.0, det)
    if singular.any():
        quad[singular] = _quadratic_pinv(g[singular], h[singular])
    return np.maximum(diag - quad, 0.0)


def small_inverse_residual(state: GramState, target: int, subset) -> float:
    """Squared residual of projecting column ``target`` of ``A`` onto the span
    of the columns in ``subset`` (1 to 3 distinct indices, excluding target)."""
    subset = [int(j) for j in subset]
    d = state.dim
    if not 1 <= len(subset) <= 3:
        raise ValueError("subset must contain 1, 2 or 3 indices")
    if len(set(subset)) != len(subset):
        raise ValueError("subset indices must be distinct")
    if target in subset:
        raise ValueError("target index must not be in the subset")
    if not all(0 <= j < d for j in [target, *subset]):
        raise IndexError("index out of range")
    res = batched_residuals(state.gram, np.array([target]), np.array([subset]))
    return float(res[0])


@functools.lru_cache(maxsize=16)
def index_tuples(d: int, k: int) -> np.ndarray:
    """All increasing ``k``-tuples from ``range(d)`` as an ``(N, k)`` array."""
    if k > d:
        return np.empty((0, k), dtype=np.intp)
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(d), k)),
                       dtype=np.intp)
    out = flat.reshape(-1, k)
    out.setflags(write=False)
    return out


# -- persistence -----------------------------------------------------------

MATRIX_MAGIC = "CSMAT"


def format_matrix(phi: SensingMatrix) -> str:
    m, d = phi.entries.shape
    lines = [f"{MATRIX_MAGIC} v1 {m} {d} {phi.mode.value}"]
    if phi.mode is Mode.BINARY:
        for row in phi.entries:
            lines.append(" ".join("1" if v else "0" for v in row))
    else:
        for row in phi.entries:
            lines.append(" ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> SensingMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != MATRIX_MAGIC or head[1] != "v1":
        raise ValueError(f"not a {MATRIX_MAGIC} v1 file: {lines[0]!r}")
    m, d, mode = int(head[2]), int(head[3]), Mode(head[4])
    if len(lines) - 1 != m:
        raise ValueError(f"expected {m} rows, found {len(lines) - 1}")
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    if any(len(r) != d for r in rows):
        raise ValueError(f"every row must have {d} values")
    return SensingMatrix(np.array(rows), mode)


def save_matrix(path, phi: SensingMatrix) -> None:
    Path(path).write_text(format_matrix(phi))


def load_matrix(path) -> SensingMatrix:
    return parse_matrix(Path(path).read_text())
