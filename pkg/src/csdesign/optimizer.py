"""Sensing-matrix design: coordinate flips for binary matrices and projected
gradient ascent for continuous ones."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .criteria import CriterionSpec, gram_gradient, objective
from .linalg import (
    Dictionary,
    Mode,
    SensingMatrix,
    _flip_inplace,
    build_gram,
    gram_from_effective,
)

log = logging.getLogger(__name__)


class ScanOrder(str, enum.Enum):
    ROW_MAJOR = "row-major"
    RANDOM = "random"


@dataclass
class FlipOptimizerConfig:
    delta: float = 1e-3
    max_epochs: int = 200
    seed: int = 0
    scan_order: ScanOrder = ScanOrder.ROW_MAJOR

    def __post_init__(self):
        self.scan_order = ScanOrder(self.scan_order)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class PgaConfig:
    step_size: float = 1e-3
    max_iters: int = 500
    projection_rounds: int = 25
    grad_tolerance: float = 1e-8
    seed: int = 0
    backtracking: bool = True
    max_halvings: int = 20

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.projection_rounds < 1:
            raise ValueError("projection_rounds must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class DesignResult:
    phi: SensingMatrix
    #: ``(epoch, loss)`` for flips, ``(iter, loss, step)`` for PGA; entry 0 is the start
    trace: list = field(default_factory=list)
    converged: bool = False
    #: number of flips kept in the final epoch (flip optimizer only)
    last_epoch_flips: int = 0

    @property
    def losses(self) -> np.ndarray:
        return np.array([row[1] for row in self.trace])


def flip_optimize(phi0: SensingMatrix, psi: Dictionary, spec: CriterionSpec,
                  cfg: FlipOptimizerConfig | None = None) -> DesignResult:
    """Greedy single-entry flips: keep a flip only if it strictly increases the
    loss; stop when an epoch gains less than ``cfg.delta``."""
    cfg = cfg or FlipOptimizerConfig()
    if phi0.mode is not Mode.BINARY:
        raise ValueError("flip_optimize requires a binary starting matrix")
    if phi0.cols != psi.dim:
        raise ValueError("sensing matrix and dictionary dimensions differ")
    m, d = phi0.entries.shape
    loss_of = objective(spec, d)
    rng = np.random.default_rng(cfg.seed)

    phi = phi0.copy()
    entries = phi.entries
    basis = psi.basis
    state = build_gram(phi, psi)
    current = loss_of(state.gram)
    result = DesignResult(phi, [(0, current)])
    order = np.arange(m * d)

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.scan_order is ScanOrder.RANDOM:
            order = rng.permutation(m * d)
        kept = 0
        for flat in order:
            i, j = divmod(int(flat), d)
            _flip_inplace(state, entries, i, j, basis[j])
            trial = loss_of(state.gram)
            if trial > current:
                current = trial
                kept += 1
            else:
                _flip_inplace(state, entries, i, j, basis[j])
        # full rebuild bounds the drift of the incremental updates
        state = build_gram(phi, psi)
        previous = result.trace[-1][1]
        current = loss_of(state.gram)
        result.trace.append((epoch, current))
        result.last_epoch_flips = kept
        log.debug("epoch %d: loss %.10g (%d flips kept)", epoch, current, kept)
        if current - previous < cfg.delta:
            result.converged = True
            break
    return result


def is_flip_local_max(phi: SensingMatrix, psi: Dictionary, spec: CriterionSpec,
                      rtol: float = 1e-12) -> bool:
    """True if no single flip increases the loss (each trial rebuilt from scratch)."""
    loss_of = objective(spec, phi.cols)
    base = loss_of(build_gram(phi, psi).gram)
    trial = phi.copy()
    for i in range(phi.rows):
        for j in range(phi.cols):
            trial.entries[i, j] = 1.0 - trial.entries[i, j]
            value = loss_of(build_gram(trial, psi).gram)
            trial.entries[i, j] = 1.0 - trial.entries[i, j]
            if value > base + rtol * abs(base):
                return False
    return True


# -- continuous matrices -------------------------------------------------------

def project_feasible(phi, rounds: int = 25) -> SensingMatrix:
    """Alternate clipping to [0, 1] with unit-normalizing the columns.

    Columns that vanish after clipping are reset to the constant ``1/sqrt(m)``.
    """
    x = np.array(getattr(phi, "entries", phi), dtype=np.float64)
    m = x.shape[0]
    for _ in range(max(1, rounds)):
        np.clip(x, 0.0, 1.0, out=x)
        norms = np.linalg.norm(x, axis=0)
        dead = norms == 0.0
        x[:, dead] = 1.0 / np.sqrt(m)
        norms[dead] = 1.0
        x /= norms
    np.clip(x, 0.0, 1.0, out=x)
    return SensingMatrix(x, Mode.CONTINUOUS)


def phi_gradient(phi, psi: Dictionary, spec: CriterionSpec) -> np.ndarray:
    """Analytic gradient of the loss with respect to the entries of Phi."""
    x = np.asarray(getattr(phi, "entries", phi), dtype=np.float64)
    state = gram_from_effective(x @ psi.basis)
    dg = gram_gradient(spec, state)
    grad_a = state.effective @ (dg + dg.T)
    return grad_a @ psi.basis.T


def pga_optimize(phi0: SensingMatrix, psi: Dictionary, spec: CriterionSpec,
                 cfg: PgaConfig | None = None) -> DesignResult:
    """Projected gradient ascent with step halving on loss decrease."""
    cfg = cfg or PgaConfig()
    if phi0.mode is not Mode.CONTINUOUS:
        raise ValueError("pga_optimize requires a continuous starting matrix")
    if not spec.differentiable:
        raise ValueError(f"{spec.name} is not differentiable; use flip_optimize")
    loss_of = objective(spec, phi0.cols)
    basis = psi.basis

    def loss(x):
        return loss_of(gram_from_effective(x @ basis).gram)

    x = phi0.entries.copy()
    current = loss(x)
    result = DesignResult(SensingMatrix(x, Mode.CONTINUOUS), [(0, current, 0.0)])
    for it in range(1, cfg.max_iters + 1):
        grad = phi_gradient(x, psi, spec)
        step = cfg.step_size
        for _ in range(cfg.max_halvings + 1):
            cand = project_feasible(x + step * grad, cfg.projection_rounds).entries
            value = loss(cand)
            if not cfg.backtracking or value >= current:
                break
            step *= 0.5
        else:
            result.converged = True
            break
        change = np.abs(cand - x).max()
        x, current = cand, value
        result.trace.append((it, current, step))
        if change < cfg.grad_tolerance:
            result.converged = True
            break
    result.phi = SensingMatrix(x, Mode.CONTINUOUS)
    return result
