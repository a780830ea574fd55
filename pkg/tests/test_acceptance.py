"""Acceptance gate.

Each criterion is a function returning ``(passed, detail)``. The pytest
wrapper prints one ``PASS``/``FAIL`` line per criterion and asserts it;
``python tests/test_acceptance.py`` prints the same lines without pytest.
"""

import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from slopeqmle import dgp, harness, population, qmle
from slopeqmle.dgp import CovariateModel, Dataset, DgpSpec, ErrorModel, ModelParams, ScaleFunction
from slopeqmle.harness import ExperimentConfig
from slopeqmle.links import LOGISTIC, PROBIT, get_link

X2 = CovariateModel.normal([0, 0], np.eye(2))
THETA0 = ModelParams(0.5, [1.0, -1.0])
PROBIT_ON_LOGIT = DgpSpec(X2, ErrorModel(), THETA0)
INDEX_HET = ErrorModel("index-heteroskedastic", scale_fn=ScaleFunction("quadratic", (1.0, 1.0)))


def criterion_1():
    t0 = time.perf_counter()
    pt = population.pseudo_true_for(PROBIT_ON_LOGIT, LOGISTIC)
    elapsed = time.perf_counter() - t0
    err = max(abs(pt.c_star - 1.0), abs(pt.r_star))
    return err < 1e-7 and elapsed < 1.0, f"|(c*, r*) - (1, 0)| = {err:.1e}, {elapsed:.2f} s"


def criterion_2():
    t0 = time.perf_counter()
    law, pi = dgp.index_distribution(PROBIT_ON_LOGIT), dgp.pi_function(PROBIT_ON_LOGIT)
    grid = population.make_grid(law)
    pt = population.solve_pseudo_true(pi, law, PROBIT, grid)

    # full dense grid, evaluated row block by row block to bound memory
    cs = np.round(np.arange(0.01, 5 + 1e-9, 0.005), 10)
    rs = np.round(np.arange(-3, 3 + 1e-9, 0.005), 10)
    best, arg = -np.inf, None
    for lo in range(0, cs.size, 50):
        block = population.restricted_population_loglik(cs[lo : lo + 50, None], rs[None, :], pi, law, PROBIT, grid)
        i, j = np.unravel_index(np.argmax(block), block.shape)
        if block[i, j] > best:
            best, arg = block[i, j], (cs[lo + i], rs[j])
    on_grid = abs(arg[0] - pt.c_star) <= 0.005 and abs(arg[1] - pt.r_star) <= 0.005

    cfg = ExperimentConfig(PROBIT_ON_LOGIT, "probit", (100_000,), 200, 20_002, mode="pseudo-true")
    s = harness.run(cfg).summary[0]
    z = (s["c_hat_mean"] - pt.c_star) / s["c_hat_mcse"]
    elapsed = time.perf_counter() - t0
    ok = pt.c_star > 0 and on_grid and abs(z) <= 2 and s["ok"] == 200 and elapsed < 300
    detail = (
        f"c* = {pt.c_star:.6f}, grid argmax = ({arg[0]:.3f}, {arg[1]:.3f}), "
        f"MC mean c_hat = {s['c_hat_mean']:.6f} (z = {z:+.2f}), {elapsed:.0f} s"
    )
    return ok, detail


def criterion_3():
    failures, checked = [], 0
    r_grid = np.linspace(-10, 10, 401)
    for case in harness.assumption_battery():
        if not {"A2.1", "A2.2"} <= case.spec.assumption_flags:
            continue
        link = get_link(case.link)
        law, pi = dgp.index_distribution(case.spec), dgp.pi_function(case.spec)
        grid = population.make_grid(law)
        try:
            pt = population.solve_pseudo_true(pi, law, link, grid)
        except population.PopulationError as exc:
            failures.append(f"{case.name}: {exc}")
            continue
        psi0 = pt.bracket_history[0][2]
        cs = np.linspace(0, 4 * pt.c_star, 41)
        curve = population.psi_curve(cs, pi, law, link, grid)
        crossed = psi0 > 0 and np.any(curve < 0) and np.isfinite(pt.c_star)
        decreasing = all(np.all(np.diff(population.phi(c, r_grid, pi, law, link, grid)) < 0) for c in cs)
        checked += 1
        if not (crossed and decreasing):
            failures.append(case.name)
    return not failures, f"{checked} cases checked" if not failures else "failed: " + ", ".join(failures)


def criterion_4():
    worst_closed = 0.0
    for case in harness.assumption_battery():
        if case.guaranteed and not case.spec.errors.kind == "covariate-heteroskedastic":
            pt = population.pseudo_true_for(case.spec, get_link(case.link))
            worst_closed = max(worst_closed, pt.residual_full_foc)
    x = dgp.sample(PROBIT_ON_LOGIT, 1_000_000, 40_004).x
    a_hat, b_hat = dgp.estimate_linearity_coefficients(x, 0.5 + x @ THETA0.beta)
    law, pi = dgp.index_distribution(PROBIT_ON_LOGIT), dgp.pi_function(PROBIT_ON_LOGIT)
    pt = population.solve_pseudo_true(pi, law, PROBIT)
    regression = population.full_foc_residual(pt, a_hat, b_hat, pi, law, PROBIT)

    # any affine E(X | V) makes the full condition a combination of the two
    # restricted ones, so also average the exact per-observation scores
    x = PROBIT_ON_LOGIT.covariates.sample(np.random.default_rng(40_005), 2_000_000)
    v = 0.5 + x @ THETA0.beta
    z = pt.c_star * v + pt.r_star
    g = pi(v) * stats.norm.pdf(z) / stats.norm.cdf(z) - (1 - pi(v)) * stats.norm.pdf(z) / stats.norm.sf(z)
    sample_avg = np.max(np.abs((g[:, None] * np.column_stack([np.ones_like(v), x])).mean(axis=0)))
    ok = worst_closed < 1e-7 and regression < 1e-3 and sample_avg < 1e-3
    return ok, (
        f"closed-form residual {worst_closed:.1e}, regression residual {regression:.1e}, "
        f"sample-average score {sample_avg:.1e}"
    )


def _fd(f, theta, rel=1e-6):
    out = []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = rel * (1 + abs(theta[j]))
        out.append((f(theta + e) - f(theta - e)) / (2 * e[j]))
    return np.array(out)


def criterion_5():
    data = dgp.sample(PROBIT_ON_LOGIT, 2000, 50_005)
    worst, monotone, equiv = 0.0, True, 0.0
    a = np.array([[2.0, 0.5], [-1.0, 1.5]])
    shift = np.array([3.0, -2.0])
    moved = Dataset(data.y, data.x @ a + shift)
    for link in (LOGISTIC, PROBIT):
        for theta in ([0.0, 0.0, 0.0], [0.5, 1.0, -1.0], [-2.0, 3.0, 1.5]):
            theta = np.array(theta)
            g = qmle.gradient(data, link, theta)
            h = qmle.hessian(data, link, theta)
            fd_g = _fd(lambda t: qmle.objective(data, link, t), theta)
            fd_h = np.array([_fd(lambda t, j=j: qmle.gradient(data, link, t)[j], theta) for j in range(3)])
            worst = max(worst, np.max(np.abs(g - fd_g) / np.maximum(np.abs(fd_g), 1e-8)))
            worst = max(worst, np.max(np.abs(h - fd_h) / np.maximum(np.abs(fd_h), 1e-8)))
        res = qmle.fit(data, link, init=np.array([3.0, -4.0, 5.0]))
        monotone &= bool(np.all(np.diff(res.history) >= 0))
        r0, r1 = qmle.fit(data, link), qmle.fit(moved, link)
        b_back = np.linalg.solve(a, r0.theta_hat.beta)
        equiv = max(equiv, np.max(np.abs(r1.theta_hat.beta / b_back - 1)))
    ok = worst < 1e-6 and monotone and equiv < 1e-9
    return ok, f"max FD relative error {worst:.1e}, monotone ascent {monotone}, equivariance error {equiv:.1e}"


def _size(beta0, hypothesis, seed):
    spec = DgpSpec(X2, ErrorModel(), ModelParams(0.2, beta0))
    rejections = 0
    for rep in range(500):
        data = dgp.sample(spec, 5000, np.random.SeedSequence(seed, spawn_key=(rep,)))
        rejections += qmle.test_scale_invariant(qmle.fit(data, PROBIT), hypothesis).p_value < 0.05
    return rejections / 500


def criterion_6():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(PROBIT_ON_LOGIT, "probit", (5000,), 1000, 60_006, mode="coverage", ratio=(0, 1))
    s = harness.run(cfg).summary[0]
    zero = _size([1.0, 0.0], qmle.Zero(1), 60_007)
    equal = _size([1.0, 1.0], qmle.Equal(0, 1), 60_008)
    elapsed = time.perf_counter() - t0
    ok = 0.93 <= s["coverage"] <= 0.97 and 0.03 <= zero <= 0.07 and 0.03 <= equal <= 0.07 and elapsed < 600
    return ok, f"ratio CI coverage {s['coverage']:.3f}, size zero {zero:.3f}, size equal {equal:.3f}, {elapsed:.0f} s"


def criterion_7():
    spec = DgpSpec(X2, INDEX_HET, THETA0)
    pt = population.pseudo_true_for(spec, PROBIT)
    cfg = ExperimentConfig(spec, "probit", (200_000,), 20, 70_007)
    rows = harness.run(cfg).rows
    cos = np.array([r["cosine"] for r in rows])
    ok = pt.c_star > 0 and np.all(cos > 0.995)
    return ok, f"c* = {pt.c_star:.5f}, direction cosine min {cos.min():.5f} over {cos.size} samples"


def _reweight_wins(errors, seed):
    spec = DgpSpec(harness.skewed_mixture_covariates(), errors, ModelParams(0.0, [1.0, 1.0]))
    cfg = ExperimentConfig(spec, "probit", (100_000,), 200, seed, mode="reweight-compare")
    rows = harness.run(cfg).rows
    return np.mean([r["weighted_better"] for r in rows]), sum(r["status"] == "ok" for r in rows)


def criterion_8():
    rate, ok_rows = _reweight_wins(INDEX_HET, 80_008)
    return rate >= 0.90 and ok_rows == 200, f"weighted fit closer in direction in {rate:.1%} of 200 replications"


def criterion_8_logistic_errors():
    # informational: with independent logistic errors the nonlinearity bias is
    # small next to sampling noise, so per-replication wins are far below 90%
    rate, _ = _reweight_wins(ErrorModel(), 80_009)
    return None, f"logistic errors: weighted fit closer in {rate:.1%} of 200 replications"


def _cli_commands(d: Path):
    exp = d / "exp.ini"
    exp.write_text(
        dgp.dump_spec(PROBIT_ON_LOGIT)
        + "\n[experiment]\nmode = coverage\nlink = probit\nsample_sizes = 500, 2000\nreplications = 10\nseed = 9\n"
    )
    (d / "dgp.ini").write_text(dgp.dump_spec(PROBIT_ON_LOGIT))
    mix = DgpSpec(harness.skewed_mixture_covariates(), ErrorModel(), ModelParams(0.0, [1.0, 1.0]))
    dgp.sample(mix, 5000, 1).to_csv(d / "mix.csv")
    return [
        ["simulate", "--dgp", d / "dgp.ini", "--n", "1000", "--seed", "7", "--out", d / "sim.csv"],
        ["fit", "--data", d / "sim.csv", "--link", "probit"],
        ["pseudo-true", "--dgp", d / "dgp.ini", "--link", "probit"],
        ["montecarlo", "--config", exp],
        ["reweight", "--data", d / "mix.csv", "--target", "normal", "--trim", "0.01", "--out", d / "w.csv"],
        ["fit", "--data", d / "mix.csv", "--link", "probit", "--weights", d / "w.csv"],
        ["battery", "--n", "5000", "--seed", "3"],
    ]


def criterion_9():
    mismatched = []
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        for argv in _cli_commands(d):
            outs = []
            for _ in range(2):
                proc = subprocess.run([sys.executable, "-m", "slopeqmle", *map(str, argv)], capture_output=True)
                files = sorted(p.read_bytes() for p in d.iterdir() if p.suffix == ".csv" and p.name in ("sim.csv", "w.csv"))
                outs.append((proc.returncode, proc.stdout, files))
            if outs[0] != outs[1] or outs[0][0] != 0:
                mismatched.append(argv[0])
    return not mismatched, "7 invocations byte-identical" if not mismatched else "differs: " + ", ".join(mismatched)


CRITERIA = {
    1: ("correct-specification identity", criterion_1),
    2: ("slope consistency: solver, dense grid and Monte Carlo agree", criterion_2),
    3: ("sign structure over the battery", criterion_3),
    4: ("full first-order condition residual", criterion_4),
    5: ("estimator correctness", criterion_5),
    6: ("sandwich inference coverage and size", criterion_6),
    7: ("index-heteroskedastic slope consistency", criterion_7),
    8: ("reweighting improves direction", criterion_8),
    9: ("CLI determinism", criterion_9),
}


def _line(k, passed, detail):
    return f"{'PASS' if passed else 'FAIL'} criterion {k}: {CRITERIA[k][0]} | {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, capsys):
    passed, detail = CRITERIA[k][1]()
    with capsys.disabled():
        print("\n" + _line(k, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    for k, (_, fn) in CRITERIA.items():
        print(_line(k, *fn()), flush=True)
    print(f"INFO criterion 8 with {criterion_8_logistic_errors()[1]}")
