"""Shared fixtures and independent oracles.

The oracles work on the effective matrix ``A`` directly with dense least
squares, never on the Gram formulas they are checking.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from csdesign.criteria import evaluate
from csdesign.linalg import Mode, SensingMatrix, build_gram, dct_dictionary

#: acceptance outcomes collected by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def lstsq_residual(a: np.ndarray, i: int, subset) -> float:
    """Squared residual of projecting column ``i`` onto the columns in ``subset``."""
    target = a[:, i]
    basis = a[:, list(subset)]
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    r = target - basis @ coef
    return float(r @ r)


def brute_order_loss(a: np.ndarray, order: int, weights=None) -> float:
    """Literal sum over increasing tuples with the smallest index as target."""
    d = a.shape[1]
    total = 0.0
    for tup in itertools.combinations(range(d), order + 1):
        w = 1.0
        if weights is not None:
            w = float(np.prod([weights[k] for k in tup])) ** (1.0 / (order + 1))
        total += w * lstsq_residual(a, tup[0], tup[1:])
    return total


def random_unit_columns(rng, m, d):
    a = rng.normal(size=(m, d))
    return a / np.linalg.norm(a, axis=0)


def omega2_grid_oracle(g, s, step=0.1):
    """Best value of ||G z|| / ||z||_inf over a uniform grid in [-1, 1]^d inside the cone."""
    d = g.shape[0]
    levels = np.round(np.arange(-1.0, 1.0 + 1e-9, step), 10)
    best, arg = np.inf, None
    head = np.array(list(itertools.product(levels, repeat=d - 2)))
    for pair in itertools.product(levels, repeat=2):
        z = np.hstack([head, np.tile(pair, (len(head), 1))])
        peak = np.abs(z).max(1)
        keep = (peak > 0) & (np.abs(z).sum(1) <= s * peak + 1e-12)
        if not keep.any():
            continue
        vals = np.linalg.norm(z[keep] @ g, axis=1) / peak[keep]
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, arg = float(vals[k]), z[keep][k]
    return best, arg


def omega2_qp_oracle(g, s, start):
    """Exact minimum: one convex QP per pinned coordinate, solved from the grid point."""
    d = g.shape[0]
    best = np.inf
    for t in range(d):
        free = [j for j in range(d) if j != t]
        z0 = start / np.abs(start).max() * np.sign(start[t] or 1.0)
        x0 = np.concatenate([np.maximum(z0[free], 0), np.maximum(-z0[free], 0)])

        def obj(x):
            z = np.zeros(d)
            z[t] = 1.0
            z[free] = x[:d - 1] - x[d - 1:]
            r = g @ z
            return r @ r

        cons = [{"type": "ineq", "fun": lambda x: (s - 1.0) - x.sum()}]
        cons += [{"type": "ineq", "fun": lambda x, j=j: 1.0 - x[j] - x[j + d - 1]} for j in range(d - 1)]
        res = minimize(obj, x0, bounds=[(0, 1)] * (2 * d - 2), constraints=cons,
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        best = min(best, float(np.sqrt(max(res.fun, 0.0))))
    return best


def fd_phi_gradient(x, psi, spec, h=1e-5):
    out = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        f = [evaluate(spec, build_gram(SensingMatrix(v, Mode.CONTINUOUS), psi))
             for v in (np.clip(xp, 0, 1), np.clip(xm, 0, 1))]
        out[idx] = (f[0] - f[1]) / (2 * h)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def dct8():
    return dct_dictionary(8)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
