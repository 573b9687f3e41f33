"""Acceptance criteria AC1-AC10.

Each test records one PASS/FAIL line (printed in the terminal summary and on
stdout) and then asserts. AC3 and AC7 share one desk-scale design and
evaluation run: p = 8, m = 24, sigma^2 = 4, five seeds, the bundled test set.
"""

import time

import numpy as np
import pytest
from conftest import (
    ACCEPTANCE,
    brute_order_loss,
    fd_phi_gradient,
    omega2_grid_oracle,
    omega2_qp_oracle,
    random_unit_columns,
)
from scipy.optimize import linprog

from csdesign.bpdn import Status, solve_bpdn
from csdesign.config import ExperimentConfig
from csdesign.criteria import (
    CRITERION_NAMES,
    bicoherence_loss,
    coherence_loss,
    criterion_from_name,
    mu_avg,
    omega2,
    tricoherence_loss,
)
from csdesign.experiment import mean_by, read_results, run_design, run_evaluate, training_weights
from csdesign.linalg import SensingMatrix, dct_dictionary, gram_from_effective, load_matrix
from csdesign.metrics import PSNR_CAP, psnr, ssim
from csdesign.optimizer import (
    FlipOptimizerConfig,
    flip_optimize,
    is_flip_local_max,
    phi_gradient,
    project_feasible,
)

DESK_CRITERIA = ["random", "coherence", "bicoherence", "wcoherence"]
DESK_SEEDS = [0, 1, 2, 3, 4]


def record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    print(f"{key} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    cfg = ExperimentConfig(measurement_counts=[24], criteria=DESK_CRITERIA, seeds=DESK_SEEDS,
                           sigma2=4.0, output_dir=out)
    start = time.perf_counter()
    run_design(cfg)
    designed = time.perf_counter()
    summary = run_evaluate(cfg)
    done = time.perf_counter()
    return cfg, summary, designed - start, done - designed


def test_ac1_oracle_equivalence(rng):
    worst = 0.0
    for _ in range(50):
        m, d = int(rng.integers(4, 9)), int(rng.integers(5, 11))
        a = rng.normal(size=(m, d))
        g = a.T @ a
        for fn, order in ((coherence_loss, 1), (bicoherence_loss, 2), (tricoherence_loss, 3)):
            ref = brute_order_loss(a, order)
            worst = max(worst, abs(fn(g) - ref) / abs(ref))
    record("AC1", worst < 1e-8, f"worst relative error {worst:.2e} over 50 matrices x 3 orders")


def test_ac2_average_coherence_identity(rng):
    worst, agree = 0.0, 0
    for _ in range(20):
        d = int(rng.integers(5, 11))
        a = random_unit_columns(rng, int(rng.integers(3, 8)), d)
        g = a.T @ a
        off = g[np.triu_indices(d, 1)]
        worst = max(worst, abs(coherence_loss(g) - (d * (d - 1) / 2 - np.sum(off ** 2))))
        grams = [(lambda x: x.T @ x)(random_unit_columns(rng, a.shape[0], d)) for _ in range(10)]
        agree += int(np.argmax([coherence_loss(c) for c in grams]) == np.argmin([mu_avg(c) for c in grams]))
    record("AC2", worst < 1e-10 and agree == 20,
           f"identity error {worst:.2e}; argmax/argmin agree on {agree}/20 candidate sets")


@pytest.mark.slow
def test_ac3_flip_contract(desk_run):
    cfg, _, _, _ = desk_run
    psi = dct_dictionary(8)
    weights = training_weights(cfg.train_dir, psi).values
    # one timed run of the heaviest desk job
    phi0 = SensingMatrix.random_binary(24, 64, np.random.default_rng(0))
    spec = criterion_from_name("bicoherence")
    start = time.perf_counter()
    res = flip_optimize(phi0, psi, spec, FlipOptimizerConfig(delta=1e-3))
    elapsed = time.perf_counter() - start
    runs = [("single", res.losses, res.phi, spec)]
    for name in DESK_CRITERIA[1:]:
        spec_n = criterion_from_name(name, weights=weights)
        for seed in DESK_SEEDS:
            stem = f"{name}_m24_s{seed}"
            trace = np.loadtxt(cfg.output_dir / f"{stem}_trace.csv", delimiter=",", skiprows=1)[:, 1]
            runs.append((stem, trace, load_matrix(cfg.output_dir / f"{stem}.csmat"), spec_n))
    monotone = all(np.all(np.diff(t) >= -1e-9 * abs(t[-1])) for _, t, _, _ in runs)
    stopped = all(len(t) >= 2 and t[-1] - t[-2] < 1e-3 for _, t, _, _ in runs)
    local = [stem for stem, _, phi, s in runs if not is_flip_local_max(phi, psi, s)]
    ok = monotone and stopped and not local and res.converged and elapsed < 600
    record("AC3", ok, f"{len(runs)} runs: monotone={monotone} delta-stop={stopped} "
                      f"not-local-max={local or 'none'}; bicoherence p=8 m=24 took {elapsed:.0f}s")


def test_ac4_gradients(rng):
    names = [n for n in CRITERION_NAMES if criterion_from_name(n, weights=np.ones(9), s=2.0).differentiable]
    worst = 0.0
    for name in names:
        for _ in range(20):
            spec = criterion_from_name(name, weights=rng.uniform(0.5, 2.0, 9))
            # m > 3 keeps every order non-degenerate (with m <= r the loss is identically 0)
            x = rng.uniform(0.05, 0.95, size=(int(rng.integers(4, 7)), 9))
            psi = dct_dictionary(3)
            g = phi_gradient(x, psi, spec)
            fd = fd_phi_gradient(x, psi, spec)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    record("AC4", worst < 1e-4, f"worst relative error {worst:.2e} over {len(names)} criteria x 20")


def test_ac5_projection(rng):
    bad_box, worst_norm, worst_idem = 0, 0.0, 0.0
    for _ in range(100):
        m, d = int(rng.integers(1, 9)), int(rng.integers(9, 20))
        x = rng.normal(size=(m, d)) * rng.uniform(0.1, 5)
        out = project_feasible(x).entries
        bad_box += int(out.min() < 0.0 or out.max() > 1.0)
        worst_norm = max(worst_norm, np.abs(np.linalg.norm(out, axis=0) - 1).max())
        worst_idem = max(worst_idem, np.abs(project_feasible(out).entries - out).max())
    ok = bad_box == 0 and worst_norm < 1e-3 and worst_idem < 1e-9
    record("AC5", ok, f"box violations {bad_box}; norm error {worst_norm:.1e}; idempotence {worst_idem:.1e}")


def test_ac6_bpdn(rng):
    start = time.perf_counter()
    planted_ok = 0
    for _ in range(20):
        a = rng.normal(size=(32, 64))
        a /= np.linalg.norm(a, axis=0)
        truth = np.zeros(64)
        support = rng.choice(64, 3, replace=False)
        truth[support] = rng.choice([-1, 1], 3) * rng.uniform(1, 3, 3)
        theta, info = solve_bpdn(a, a @ truth, 1e-6)
        found = set(np.flatnonzero(np.abs(theta) > 1e-6))
        planted_ok += int(found == set(support) and np.abs(theta - truth).max() < 1e-4
                          and info.status is Status.CONVERGED)
    worst = 0.0
    for _ in range(20):
        m, d = int(rng.integers(4, 9)), int(rng.integers(9, 17))
        a = rng.normal(size=(m, d))
        y = rng.normal(size=m)
        theta, _ = solve_bpdn(a, y, 0.0)
        lp = linprog(np.ones(2 * d), A_eq=np.hstack([a, -a]), b_eq=y, bounds=[(0, None)] * (2 * d),
                     method="highs").fun
        worst = max(worst, abs(np.abs(theta).sum() - lp) / lp)
    elapsed = time.perf_counter() - start
    ok = planted_ok == 20 and worst < 1e-5 and elapsed < 120
    record("AC6", ok, f"planted {planted_ok}/20; LP worst relative gap {worst:.1e}; {elapsed:.1f}s")


@pytest.mark.slow
def test_ac7_desk_ordering(desk_run):
    cfg, summary, t_design, t_eval = desk_run
    rows = read_results(cfg.output_dir / "results.csv")
    p = mean_by(rows, (0, 2), 4)
    s = mean_by(rows, (0, 2), 5)
    images = len({r[3] for r in rows})
    gain = [p["coherence", k] - p["random", k] for k in DESK_SEEDS]
    a = sum(g >= 0.3 for g in gain)
    b = sum(s["bicoherence", k] >= s["coherence", k] for k in DESK_SEEDS)
    c = sum(s["wcoherence", k] >= s["coherence", k] for k in DESK_SEEDS)
    minutes = (t_design + t_eval) / 60
    ok = a >= 4 and b >= 3 and c >= 3 and images >= 6 and minutes < 45
    record("AC7", ok,
           f"(a) coherence-random PSNR gain {' '.join(f'{g:+.2f}' for g in gain)} dB, >=0.3 in {a}/5 (need 4); "
           f"(b) bicoherence>=coherence SSIM {b}/5; (c) wcoherence>=coherence SSIM {c}/5; "
           f"{images} images; {summary.nonconverged}/{summary.patches} patches non-converged; "
           f"{minutes:.1f} min")


def test_ac8_metrics(rng):
    x = rng.integers(0, 256, size=(32, 32))
    checks = {
        "psnr identical": psnr(x, x) == PSNR_CAP,
        "ssim identical": ssim(x, x) == 1.0,
        "psnr mse 256": abs(psnr(np.zeros((8, 8)), np.full((8, 8), 16.0)) - 24.05) < 0.01,
    }
    failed = [k for k, v in checks.items() if not v]
    record("AC8", not failed, f"{len(checks) - len(failed)}/{len(checks)} trivial cases")


def test_ac9_omega2(rng):
    g = gram_from_effective(rng.normal(size=(5, 8))).gram
    vals = [omega2(g, s) for s in (1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0)]
    monotone = all(b <= a + 1e-6 for a, b in zip(vals, vals[1:]))
    worst = 0.0
    for _ in range(3):
        g = gram_from_effective(rng.normal(size=(5, 5))).gram
        _, arg = omega2_grid_oracle(g, 2.5)
        exact = omega2_qp_oracle(g, 2.5, arg)
        worst = max(worst, abs(omega2(g, 2.5) - exact) / exact)
    a = rng.normal(size=(4, 6))
    a[:, 4] = a[:, 1]
    dup = omega2(gram_from_effective(a).gram, 2.0)
    ok = monotone and worst < 0.05 and dup < 1e-6
    record("AC9", ok, f"monotone={monotone}; worst gap to grid+QP oracle {worst:.1e}; duplicate {dup:.1e}")


def test_ac10_determinism(tmp_path):
    cfg = ExperimentConfig(patch_side=4, measurement_counts=[6], criteria=["random", "coherence"],
                           seeds=[0], output_dir=tmp_path / "m", validation_patches=100)
    run_design(cfg)
    blobs = []
    for name in ("a", "b"):
        run = cfg.with_overrides(output_dir=tmp_path / name)
        run_evaluate(run, matrix_dir=tmp_path / "m")
        blobs.append((tmp_path / name / "results.csv").read_bytes())
    rows = blobs[0].count(b"\n") - 1
    record("AC10", blobs[0] == blobs[1] and rows > 0, f"two evaluate runs, {rows} rows, identical={blobs[0] == blobs[1]}")
