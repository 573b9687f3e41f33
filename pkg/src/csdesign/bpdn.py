"""Basis pursuit denoising: ``min ||theta||_1  s.t.  ||y - A theta||_2 <= eps``.

Solved by ADMM on the splitting ``theta = z`` (l1 prox) and
``A theta - y = w`` (projection onto the eps-ball), followed by a support
polish that solves the problem restricted to the recovered support and sign
pattern in closed form. Many right-hand sides sharing ``A`` are solved at
once, one column per signal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Status(str, enum.Enum):
    CONVERGED = "converged"
    NON_CONVERGED = "non-converged"


@dataclass
class BpdnSettings:
    max_iters: int = 2000
    abs_tol: float = 1e-6
    rel_tol: float = 1e-4
    rho: float = 1.0
    #: over-relaxation factor in (0, 2)
    relaxation: float = 1.6
    polish: bool = True
    #: polish only the solves that ADMM leaves unconverged or infeasible
    rescue: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.rho > 0):
            raise ValueError("tolerances and rho must be positive")
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must lie in (0, 2)")


@dataclass
class BpdnInfo:
    status: Status
    iterations: int
    primal_residual: float
    dual_residual: float
    #: ``||y - A theta||_2`` of the returned solution
    misfit: float
    polished: bool = False


class BpdnError(RuntimeError):
    pass


def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _ball_project(v: np.ndarray, radius: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=0)
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return v * scale


def solve_bpdn(A: np.ndarray, y: np.ndarray, epsilon: float,
               settings: BpdnSettings | None = None) -> tuple[np.ndarray, BpdnInfo]:
    """Single right-hand-side wrapper around :func:`solve_bpdn_batch`."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    theta, infos = solve_bpdn_batch(A, y[:, None], epsilon, settings)
    return theta[:, 0], infos[0]


def solve_bpdn_batch(A: np.ndarray, Y: np.ndarray, epsilon,
                     settings: BpdnSettings | None = None) -> tuple[np.ndarray, list[BpdnInfo]]:
    """Solve BPDN for every column of ``Y``; ``epsilon`` is a scalar or per-column."""
    settings = settings or BpdnSettings()
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if A.ndim != 2 or Y.ndim != 2 or Y.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, Y is {Y.shape}")
    m, d = A.shape
    n = Y.shape[1]
    eps = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), (n,)).copy()
    if np.any(eps < 0):
        raise ValueError("epsilon must be nonnegative")

    theta = np.zeros((d, n))
    infos: list[BpdnInfo | None] = [None] * n
    ynorm = np.linalg.norm(Y, axis=0)
    trivial = ynorm <= eps
    for k in np.flatnonzero(trivial):
        infos[k] = BpdnInfo(Status.CONVERGED, 0, 0.0, 0.0, float(ynorm[k]))
    work = np.flatnonzero(~trivial)
    if work.size == 0:
        return theta, infos

    # uniform rescaling keeps the minimizer: A' = A / a, y' = y / b, theta' = theta * a / b
    a_scale = np.linalg.norm(A, 2)
    if a_scale == 0.0:
        raise BpdnError("A is zero but some measurement exceeds epsilon")
    b_scale = ynorm[work]
    As = A / a_scale
    Ys = Y[:, work] / b_scale
    es = eps[work] / b_scale

    ts, zs, duals, admm_info = _admm(As, Ys, es, settings)
    ts *= b_scale / a_scale
    zs *= b_scale / a_scale

    ls = None
    for col, k in enumerate(work):
        y = Y[:, k]
        cand = zs[:, col]
        polished = False
        it, rp, rd, ok = admm_info[col]
        if settings.polish or (settings.rescue and not (
                ok and np.linalg.norm(y - A @ cand) <= eps[k] + settings.abs_tol)):
            better = _polish(A, y, eps[k], cand, ts[:, col], settings, duals[:, col])
            if better is not None:
                cand, polished = better, True
        misfit = float(np.linalg.norm(y - A @ cand))
        if misfit > eps[k] * (1 + settings.rel_tol) + settings.abs_tol:
            alt = ts[:, col]
            alt_misfit = float(np.linalg.norm(y - A @ alt))
            if alt_misfit < misfit:
                cand, misfit = alt, alt_misfit
        if misfit > eps[k] + settings.abs_tol:
            if ls is None:
                ls = np.linalg.pinv(A)
            restored = _restore_feasible(A, y, eps[k], cand, ls @ y)
            if restored is not None:
                cand = restored
                misfit = float(np.linalg.norm(y - A @ cand))
        feasible = misfit <= eps[k] + settings.abs_tol
        status = Status.CONVERGED if feasible and (ok or polished) else Status.NON_CONVERGED
        theta[:, k] = cand
        infos[k] = BpdnInfo(status, it, rp, rd, misfit, polished)
    return theta, infos


def _admm(A, Y, eps, settings: BpdnSettings):
    m, d = A.shape
    n = Y.shape[1]
    # theta-update system does not depend on rho since both blocks share it
    inv = np.linalg.inv(np.eye(d) + A.T @ A)
    rho = settings.rho
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), (n,))
    out_theta = np.zeros((d, n))
    out_z = np.zeros((d, n))
    out_dual = np.zeros((m, n))
    info = [None] * n
    # converged columns are written out and dropped from the working set
    act = np.arange(n)
    y, e = Y.copy(), eps.copy()
    z = np.zeros((d, n))
    w = -y.copy()
    u = np.zeros((d, n))
    v = np.zeros((m, n))
    sqrt_dm = np.sqrt(d + m)
    sqrt_d = np.sqrt(d)
    alpha = settings.relaxation
    for it in range(1, settings.max_iters + 1):
        theta = inv @ (z - u + A.T @ (y + w - v))
        at = A @ theta
        z_old, w_old = z, w
        top = alpha * theta + (1.0 - alpha) * z_old
        bot = alpha * (at - y) + (1.0 - alpha) * w_old
        z = soft_threshold(top + u, 1.0 / rho)
        w = _ball_project(bot + v, e)
        u = u + top - z
        v = v + bot - w
        r_top = theta - z
        r_bot = at - y - w
        rp = np.sqrt((r_top ** 2).sum(0) + (r_bot ** 2).sum(0))
        rd = rho * np.linalg.norm((z - z_old) + A.T @ (w - w_old), axis=0)
        scale_p = np.maximum(np.sqrt((theta ** 2).sum(0) + (at ** 2).sum(0)),
                             np.maximum(np.sqrt((z ** 2).sum(0) + (w ** 2).sum(0)),
                                        np.linalg.norm(y, axis=0)))
        # u + A^T v vanishes at the optimum (theta has no objective), so the
        # dual scale uses the two blocks separately
        scale_d = rho * np.maximum(np.linalg.norm(u, axis=0), np.linalg.norm(A.T @ v, axis=0))
        ok = (rp <= sqrt_dm * settings.abs_tol + settings.rel_tol * scale_p) & \
             (rd <= sqrt_d * settings.abs_tol + settings.rel_tol * scale_d)
        last = it == settings.max_iters
        retire = np.ones_like(ok) if last else ok
        if not retire.any():
            continue
        for k in np.flatnonzero(retire):
            col = act[k]
            out_theta[:, col] = theta[:, k]
            out_z[:, col] = z[:, k]
            out_dual[:, col] = rho * v[:, k]
            info[col] = (it, float(rp[k]), float(rd[k]), bool(ok[k]))
        keep = ~retire
        if not keep.any():
            break
        act = act[keep]
        y, e, z, w, u, v = y[:, keep], e[keep], z[:, keep], w[:, keep], u[:, keep], v[:, keep]
    return out_theta, out_z, out_dual, info


def _restore_feasible(A, y, eps, theta, theta_ls):
    """Shortest step from ``theta`` toward ``theta_ls`` that meets the ball constraint.

    ADMM stops on residuals of the split variables, so the sparse iterate can
    sit a hair outside the ball; the misfit along the segment is convex and
    the step solves one quadratic.
    """
    a = A @ theta - y
    b = A @ theta_ls - y - a
    if np.linalg.norm(a + b) > eps:
        return None
    qa, qb, qc = b @ b, 2.0 * (a @ b), a @ a - eps * eps
    if qa == 0.0:
        return None
    t = (-qb - np.sqrt(max(qb * qb - 4.0 * qa * qc, 0.0))) / (2.0 * qa)
    # the smaller root crosses into the ball; nudge inward against rounding
    t = min(1.0, max(0.0, t) * (1.0 + 1e-9) + 1e-15)
    return theta + t * (theta_ls - theta)


def _polish(A, y, eps, z, theta, settings: BpdnSettings, dual=None):
    """Closed-form BPDN restricted to a support/sign pattern taken from the
    sparse iterate ``z`` and the dense iterate ``theta``.

    Candidate supports are ``|z|`` thresholded at a few relative levels, then
    the top-``k`` entries of ``|theta|`` for increasing ``k``. The first candidate whose
    duality gap is certified below ``gap_rtol * ||theta||_1`` is returned.
    """
    m = A.shape[0]
    mag = np.abs(z)
    peak = mag.max()
    if peak == 0.0:
        return None
    gap_rtol = settings.rel_tol
    # z is exactly sparse but ties at zero; theta orders every coordinate
    blend = np.where(mag > 0, z, theta)
    ranked = np.lexsort((-np.abs(theta), -mag))
    candidates = [np.flatnonzero(mag > level * peak) for level in (0.0, 1e-6, 1e-3)]
    candidates += [np.sort(ranked[:k]) for k in range(1, m + 1)]
    tried = set()

    def attempt(support, signs):
        key = tuple(support)
        if key in tried or not 0 < support.size <= m:
            return None
        tried.add(key)
        sol = _restricted_solution(A, y, eps, support, signs)
        if sol is not None and duality_gap(A, y, eps, sol, support, dual) <= gap_rtol * np.abs(sol).sum():
            return sol
        return None

    for support in candidates:
        sol = attempt(support, np.sign(blend[support]))
        if sol is not None:
            return sol
    # one-index neighbours of the support of z catch entries the iterate
    # has not resolved yet
    base = set(np.flatnonzero(mag).tolist())
    neighbours = [base | {j} for j in range(A.shape[1]) if j not in base]
    neighbours += [base - {j} for j in sorted(base)]
    for nb in neighbours:
        idx = np.array(sorted(nb), dtype=int)
        if not 0 < idx.size <= m:
            continue
        t_ls, *_ = np.linalg.lstsq(A[:, idx], y, rcond=None)
        signs = np.where(mag[idx] > 0, np.sign(z[idx]), np.sign(t_ls))
        sol = attempt(idx, signs)
        if sol is not None:
            return sol
    return None


def _restricted_solution(A, y, eps, support, signs):
    """Minimize ``signs . t`` subject to ``||y - A_S t|| <= eps``; the embedded
    solution is returned only if its signs agree with ``signs``."""
    As = A[:, support]
    h = As.T @ As
    if np.linalg.cond(h) > 1e12:
        return None
    chol = np.linalg.cholesky(h)

    def solve(b):
        return np.linalg.solve(chol.T, np.linalg.solve(chol, b))

    t_ls = solve(As.T @ y)
    r0 = y - As @ t_ls
    slack = eps * eps - r0 @ r0
    if slack < -1e-12 * max(1.0, y @ y):
        return None
    hs = solve(signs)
    q = signs @ hs
    if q <= 0:
        return None
    t = t_ls - np.sqrt(max(slack, 0.0) / q) * hs
    if np.any(np.sign(t) != signs):
        return None
    theta = np.zeros(A.shape[1])
    theta[support] = t
    return theta


def duality_gap(A, y, eps, theta, support=None, dual=None) -> float:
    """Upper bound on ``||theta||_1 - OPT`` for a feasible ``theta``.

    The dual of BPDN is ``max y.nu - eps ||nu||`` over ``||A^T nu||_inf <= 1``;
    candidate dual directions are the residual, the least-norm solution of
    ``A_S^T nu = sign(theta_S)`` and an optional solver dual (either sign),
    each scaled to dual feasibility.
    """
    if support is None:
        support = np.flatnonzero(theta)
    directions = [y - A @ theta]
    if dual is not None:
        directions += [dual, -dual]
    if support.size:
        nu, *_ = np.linalg.lstsq(A[:, support].T, np.sign(theta[support]), rcond=None)
        directions.append(nu)
    best = 0.0
    for nu in directions:
        peak = np.abs(A.T @ nu).max()
        if peak == 0.0:
            continue
        best = max(best, (y @ nu - eps * np.linalg.norm(nu)) / peak)
    return float(np.abs(theta).sum() - best)
