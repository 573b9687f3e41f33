"""Matrix quality measures over the Gram matrix of ``A = Phi Psi``.

The generalized coherence of order ``r`` sums, over increasing index tuples
``i < j1 < ... < jr``, the squared residual of projecting column ``i`` onto
the span of columns ``j1..jr``. Order 1 is the coherence loss, order 2
bi-coherence, order 3 tri-coherence. All of them are maximized. ``mu_max``
and ``mu_avg`` are classical (minimized) coherence measures and ``omega2``
is the l1-linf recovery measure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ._kernels import ORDER_SUMS, pinned_descent
from .linalg import (
    SINGULAR_RTOL,
    ZERO_COLUMN_TOL,
    GramState,
    batched_residuals,
    index_tuples,
)

CHUNK = 1 << 17
BISECT_STEPS = 60


class Kind(str, enum.Enum):
    COHERENCE = "coherence"
    BICOHERENCE = "bicoherence"
    TRICOHERENCE = "tricoherence"
    L1LINF = "l1linf"
    MUMAX = "mumax"
    MUAVG = "muavg"


ORDER = {Kind.COHERENCE: 1, Kind.BICOHERENCE: 2, Kind.TRICOHERENCE: 3}

CRITERION_NAMES = (
    "coherence", "bicoherence", "tricoherence",
    "wcoherence", "wbicoherence", "wtricoherence",
    "l1linf", "mumax", "muavg",
)


@dataclass
class CriterionSpec:
    kind: Kind
    weighted: bool = False
    weights: np.ndarray | None = None
    s: float | None = None
    #: use every column as target against every subset of the others
    symmetric: bool = False
    #: evaluate coherence-family losses on the column-normalized Gram
    normalize: bool = True

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.weighted:
            if self.kind not in ORDER:
                raise ValueError(f"{self.kind.value} has no weighted variant")
            if self.weights is None:
                raise ValueError("weighted criterion requires weights")
            w = np.asarray(getattr(self.weights, "values", self.weights), dtype=np.float64)
            if w.ndim != 1 or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be a nonnegative vector with a positive entry")
            self.weights = w
        if self.kind is Kind.L1LINF:
            if self.s is None or not self.s > 1:
                raise ValueError("l1linf requires a sparsity parameter s > 1")

    @property
    def name(self) -> str:
        return ("w" if self.weighted else "") + self.kind.value

    @property
    def order(self) -> int | None:
        return ORDER.get(self.kind)

    @property
    def differentiable(self) -> bool:
        return self.kind in ORDER

    def validate_dim(self, d: int) -> None:
        if self.weights is not None and self.weighted and len(self.weights) != d:
            raise ValueError(f"weight length {len(self.weights)} does not match d={d}")
        r = self.order
        if r is not None and d < r + 1:
            raise ValueError(f"{self.name} needs d >= {r + 1}, got d={d}")
        if self.kind is Kind.L1LINF and not self.s <= d:
            raise ValueError(f"s must satisfy 1 < s <= d, got s={self.s}, d={d}")


def criterion_from_name(name: str, weights=None, s: float | None = None,
                        normalize: bool = True) -> CriterionSpec:
    """Build a spec from a CLI criterion string such as ``wbicoherence``."""
    if name not in CRITERION_NAMES:
        raise ValueError(f"unknown criterion {name!r}; expected one of {', '.join(CRITERION_NAMES)}")
    weighted = name.startswith("w") and name[1:] in ("coherence", "bicoherence", "tricoherence")
    kind = Kind(name[1:] if weighted else name)
    return CriterionSpec(kind, weighted=weighted, weights=weights if weighted else None, s=s,
                         normalize=normalize)


def _gram(state) -> np.ndarray:
    return state.gram if isinstance(state, GramState) else np.asarray(state, dtype=np.float64)


def _tuple_weights(weights: np.ndarray, tuples: np.ndarray) -> np.ndarray:
    k = tuples.shape[1]
    prod = np.prod(weights[tuples], axis=1)
    if k == 2:
        return np.sqrt(prod)
    return prod ** (1.0 / k)


def _tuples(d: int, r: int, symmetric: bool):
    """Yield (targets, subsets, member tuples) chunks."""
    tuples = index_tuples(d, r + 1)
    for start in range(0, len(tuples), CHUNK):
        chunk = tuples[start:start + CHUNK]
        if not symmetric:
            yield chunk[:, 0], chunk[:, 1:], chunk
            continue
        for pos in range(r + 1):
            rest = np.delete(chunk, pos, axis=1)
            yield chunk[:, pos], rest, chunk


def order_loss(state, order: int, weights=None, symmetric: bool = False) -> float:
    """Generalized coherence loss of the given order (1, 2 or 3)."""
    g = np.ascontiguousarray(_gram(state))
    d = g.shape[0]
    if order not in ORDER_SUMS:
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    if d < order + 1:
        raise ValueError(f"order-{order} coherence needs d >= {order + 1}, got d={d}")
    if weights is not None:
        weights = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
        if weights.shape != (d,):
            raise ValueError(f"weight length {weights.size} does not match d={d}")
    if symmetric:
        return order_loss_vectorized(g, order, weights, symmetric=True)
    w = np.ones(d) if weights is None else np.ascontiguousarray(weights)
    return float(ORDER_SUMS[order](g, w, weights is not None))


def order_loss_vectorized(state, order: int, weights=None, symmetric: bool = False) -> float:
    """Same sum as :func:`order_loss`, evaluated with batched numpy kernels."""
    g = _gram(state)
    d = g.shape[0]
    partials = []
    for targets, subsets, members in _tuples(d, order, symmetric):
        res = batched_residuals(g, targets, subsets)
        if weights is not None:
            res = _tuple_weights(weights, members) * res
        partials.append(np.sum(res))
    return float(sum(partials))


def coherence_loss(state, weights=None, symmetric: bool = False) -> float:
    """Sum over ``i < j`` of ``w_ij (G_ii - G_ij^2 / G_jj)``."""
    return order_loss(state, 1, weights, symmetric)


def bicoherence_loss(state, weights=None, symmetric: bool = False) -> float:
    return order_loss(state, 2, weights, symmetric)


def tricoherence_loss(state, weights=None, symmetric: bool = False) -> float:
    return order_loss(state, 3, weights, symmetric)


def normalized_gram(state, allow_zero: bool = False) -> np.ndarray:
    """Gram of ``A`` with unit-normalized columns.

    Zero columns raise unless ``allow_zero``, in which case they stay zero.
    """
    g = _gram(state)
    diag = np.diag(g).copy()
    live = diag >= ZERO_COLUMN_TOL
    if not allow_zero and not live.all():
        raise ValueError("effective matrix has a zero column; coherence is undefined")
    inv = np.where(live, 1.0 / np.sqrt(np.where(live, diag, 1.0)), 0.0)
    gn = g * inv[:, None] * inv[None, :]
    np.fill_diagonal(gn, live.astype(np.float64))
    return gn


def mu_max(state) -> float:
    """Largest absolute normalized inner product between distinct columns."""
    gn = normalized_gram(state)
    np.fill_diagonal(gn, 0.0)
    return float(np.abs(gn).max()) if gn.size > 1 else 0.0


def mu_avg(state) -> float:
    """Off-diagonal Frobenius norm of the column-normalized Gram."""
    gn = normalized_gram(state)
    np.fill_diagonal(gn, 0.0)
    return float(np.sqrt(np.sum(gn * gn)))


# -- l1-linf measure ---------------------------------------------------------

def omega2(state, s: float, iters: int = 500) -> float:
    """Upper-bound estimate of ``min ||G z||_2 / ||z||_inf`` over the cone
    ``||z||_1 / ||z||_inf <= s``.

    By scale and sign symmetry one coordinate ``t`` can be pinned to 1 with
    ``||z||_inf <= 1``. Each of the ``d`` resulting convex problems is solved
    by accelerated projected gradient descent (FISTA with adaptive restart,
    step ``1 / sigma_max(G)^2``, projection by bisection on the shrinkage
    threshold); the smallest objective seen over all iterates and all ``t``
    is returned.
    """
    g = np.ascontiguousarray(_gram(state), dtype=np.float64)
    d = g.shape[0]
    if not (1.0 < s <= d):
        raise ValueError(f"s must satisfy 1 < s <= d, got s={s}, d={d}")
    if not np.any(g):
        return 0.0
    return float(min(pinned_descent(g, t, s - 1.0, iters, BISECT_STEPS) for t in range(d)))


# -- dispatch ----------------------------------------------------------------

def evaluate(spec: CriterionSpec, state) -> float:
    """Objective to maximize: larger is better for every criterion.

    Coherence-family losses and ``l1linf`` are computed on the
    column-normalized Gram when ``spec.normalize`` is set; ``mumax`` and
    ``muavg`` are negated; ``l1linf`` returns ``omega2`` (a larger value means a better
    recovery bound).
    """
    g = _gram(state)
    spec.validate_dim(g.shape[0])
    if spec.kind in ORDER:
        weights = spec.weights if spec.weighted else None
        if spec.normalize:
            g = normalized_gram(g, allow_zero=True)
        return order_loss(g, spec.order, weights, spec.symmetric)
    if spec.kind is Kind.MUMAX:
        return -mu_max(g)
    if spec.kind is Kind.MUAVG:
        return -mu_avg(g)
    if spec.normalize:
        g = normalized_gram(g, allow_zero=True)
    return omega2(g, spec.s)


def gram_gradient(spec: CriterionSpec, state) -> np.ndarray:
    """Derivative of a coherence-family loss w.r.t. the Gram entries as read.

    Entry ``(a, b)`` is the partial derivative with respect to ``G[a, b]``
    treating the two triangles as independent, so that for ``G = A^T A``
    the gradient with respect to ``A`` is ``A (D + D^T)``.
    """
    if not spec.differentiable:
        raise ValueError(f"{spec.name} has no closed-form gradient")
    g = _gram(state)
    d = g.shape[0]
    spec.validate_dim(d)
    if spec.normalize:
        return _normalization_chain(g, _raw_gram_gradient(spec, normalized_gram(g, allow_zero=True)))
    return _raw_gram_gradient(spec, g)


def _normalization_chain(g: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Map a derivative w.r.t. the normalized Gram back to the raw Gram."""
    diag = np.diag(g)
    live = diag >= ZERO_COLUMN_TOL
    inv = np.where(live, 1.0 / np.sqrt(np.where(live, diag, 1.0)), 0.0)
    gn = g * inv[:, None] * inv[None, :]
    out = e * inv[:, None] * inv[None, :]
    pull = (e * gn).sum(axis=1) + (e * gn).sum(axis=0)
    out[np.diag_indices_from(out)] -= 0.5 * pull * inv * inv
    return out


def _raw_gram_gradient(spec: CriterionSpec, g: np.ndarray) -> np.ndarray:
    d = g.shape[0]
    r = spec.order
    weights = spec.weights if spec.weighted else None
    flat = np.zeros(d * d)
    for targets, subsets, members in _tuples(d, r, spec.symmetric):
        w = np.ones(len(targets)) if weights is None else _tuple_weights(weights, members)
        beta = _projection_coefficients(g, targets, subsets)
        idx = [targets * d + targets]
        val = [w]
        for a in range(r):
            idx.append(subsets[:, a] * d + targets)
            val.append(-2.0 * w * beta[:, a])
            for b in range(r):
                idx.append(subsets[:, a] * d + subsets[:, b])
                val.append(w * beta[:, a] * beta[:, b])
        flat += np.bincount(np.concatenate(idx), weights=np.concatenate(val), minlength=d * d)
    return flat.reshape(d, d)


def _projection_coefficients(g: np.ndarray, targets: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    """Least-squares coefficients ``beta = G_SS^+ g_S`` for each pair."""
    gv = g[subsets, targets[:, None]]
    h = g[subsets[:, :, None], subsets[:, None, :]]
    r = subsets.shape[1]
    if r == 1:
        hjj = h[:, 0, 0]
        safe = hjj >= ZERO_COLUMN_TOL
        return np.where(safe, gv[:, 0] / np.where(safe, hjj, 1.0), 0.0)[:, None]
    det = np.linalg.det(h)
    scale = (np.trace(h, axis1=1, axis2=2) / r) ** r
    singular = np.abs(det) <= SINGULAR_RTOL * scale
    beta = np.empty_like(gv)
    ok = ~singular
    if ok.any():
        beta[ok] = np.linalg.solve(h[ok], gv[ok][:, :, None])[:, :, 0]
    if singular.any():
        hp = np.linalg.pinv(h[singular], rcond=SINGULAR_RTOL, hermitian=True)
        beta[singular] = np.einsum("nij,nj->ni", hp, gv[singular])
    return beta


def objective(spec: CriterionSpec, d: int):
    """Return ``f(gram) -> float`` for repeated evaluation at dimension ``d``."""
    spec.validate_dim(d)
    if spec.kind in ORDER and not spec.symmetric:
        kernel = ORDER_SUMS[spec.order]
        weighted = spec.weighted
        w = np.ascontiguousarray(spec.weights) if weighted else np.ones(d)
        if spec.normalize:
            return lambda g: float(kernel(normalized_gram(g, allow_zero=True), w, weighted))
        return lambda g: float(kernel(g, w, weighted))
    return lambda g: evaluate(spec, g)
