"""
Acceptance gate: the twelve criteria at their stated tolerances.

Each test prints one ``[PASS]`` or ``[FAIL]`` line with the measured values
(visible in ``pytest -v`` output) and then asserts. The Monte Carlo studies
take several minutes; run just this file with ``pytest tests/test_acceptance.py``.
"""

import json

import numpy as np
import pytest

from pagarch import cli
from pagarch.arma import concentrate_mu, concentrated_objective, fit_arma, within_estimator
from pagarch.forecast import BacktestOptions, forecast_origin, lr_cc, rolling_backtest
from pagarch.inference import jackknife_arma, jackknife_garch
from pagarch.lqform import (
    GarchInnovations,
    IIDInnovations,
    LQProblem,
    centering_block,
    clt_montecarlo,
    iid_profile,
    lq_mean,
    lq_variance,
)
from pagarch.model import ArmaParams, ModelOrders, PanelData, residual_filter, simulate
from pagarch.montecarlo import DesignSpec, ExperimentConfig, coverage_experiment, run_experiment

from conftest import design_params
from test_arma import dense_objective, random_problem
from test_lqform import exact_moments, iid_outcomes, random_three_point

pytestmark = pytest.mark.slow

SEED = 20240601


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2} ({title}): {detail}")
    return ok


def within(value, target, tol):
    return abs(value - target) <= tol


@pytest.fixture(scope="module")
def study_t100():
    cfg = ExperimentConfig(grid=((50, 100),), replications=200, seed=SEED, bootstrap_reps=200)
    report = run_experiment(cfg)
    assert not report.aborted
    return report


@pytest.fixture(scope="module")
def study_t200():
    cfg = ExperimentConfig(
        grid=((50, 200),), replications=200, seed=SEED, estimators=("ls", "vtqml")
    )
    report = run_experiment(cfg)
    assert not report.aborted
    return report


def test_criterion_01_bias_reproduction(study_t100, capsys):
    b = {p: study_t100.cell(50, 100, e, p).bias for e, p in
         [("ls", "phi"), ("ls", "psi"), ("vtqml", "tau"), ("vtqml", "nu")]}
    checks = [
        within(b["phi"], -0.002, 0.0015),
        within(b["psi"], -0.005, 0.004),
        within(b["tau"], -0.025, 0.005),
        within(b["nu"], -0.053, 0.015),
    ]
    detail = ", ".join(f"bias {k} {v:+.4f}" for k, v in b.items())
    assert verdict(capsys, 1, "bias reproduction, N=50 T=100 R=200", all(checks), detail)


def test_criterion_02_bias_correction(study_t100, capsys):
    c = study_t100.cell
    phi_j = c(50, 100, "jackknife", "phi").bias
    psi_a = c(50, 100, "analytic", "psi").bias
    tau, tau_j = c(50, 100, "vtqml", "tau").bias, c(50, 100, "garch-jackknife", "tau").bias
    nu, nu_j = c(50, 100, "vtqml", "nu").bias, c(50, 100, "garch-jackknife", "nu").bias
    checks = [
        abs(phi_j) <= 0.003,
        abs(psi_a) <= 0.005,
        abs(tau_j) <= 0.006,
        abs(nu_j) <= 0.045,
        abs(tau_j) < abs(tau),
        abs(nu_j) < abs(nu),
    ]
    detail = (
        f"phi_J {phi_j:+.4f}, psi_A {psi_a:+.4f}, tau_J {tau_j:+.4f} (tau {tau:+.4f}), "
        f"nu_J {nu_j:+.4f} (nu {nu:+.4f})"
    )
    assert verdict(capsys, 2, "bias correction efficacy", all(checks), detail)


def test_criterion_03_sd_and_sd_ad(study_t100, study_t200, capsys):
    sd_phi = study_t100.cell(50, 100, "ls", "phi").sd
    sd_nu = study_t100.cell(50, 100, "vtqml", "nu").sd
    ratios = {}
    for t, rep in ((100, study_t100), (200, study_t200)):
        for e, p in (("ls", "beta"), ("ls", "phi"), ("ls", "psi"), ("vtqml", "tau")):
            ratios[f"{p}@{t}"] = rep.cell(50, t, e, p).sd_ad
    checks = [within(sd_phi, 0.007, 0.002), within(sd_nu, 0.063, 0.015)]
    checks += [0.85 <= r <= 1.15 for r in ratios.values()]
    detail = f"SD(phi) {sd_phi:.4f}, SD(nu) {sd_nu:.4f}; SD/AD " + ", ".join(
        f"{k} {v:.3f}" for k, v in ratios.items()
    )
    assert verdict(capsys, 3, "SD and SD/AD", all(checks), detail)


def test_criterion_04_concentration_oracle(capsys):
    worst = 0.0
    for seed in range(100):
        orders, panel, lam = random_problem(seed)
        beta, phi, psi = orders.split_lambda(lam)
        q = concentrated_objective(lam, panel, orders)
        dense = dense_objective(panel.y, panel.x, beta, phi, psi)
        mu = concentrate_mu(lam, panel, orders)
        ssr = np.sum(residual_filter(panel, ArmaParams(mu, beta, phi, psi)) ** 2)
        scale = max(abs(q), 1e-300)
        worst = max(worst, abs(q - dense) / scale, abs(q - ssr) / scale)
    ok = worst <= 1e-8
    assert verdict(capsys, 4, "concentration oracle", ok, f"max relative gap {worst:.2e} over 100 panels")


def test_criterion_05_within_estimator_oracle(capsys):
    orders = ModelOrders(1, 0, 1, 1, 1)
    worst = 0.0
    for seed in range(20):
        _, arma, garch = design_params(20, seed=seed)
        panel = simulate(orders, ArmaParams(arma.mu, [1.5], [0.5]), garch, 40, seed=seed)
        fit = fit_arma(panel, orders)
        beta, phi = within_estimator(panel, 1)
        worst = max(worst, np.max(np.abs(fit.lambda_hat - np.r_[beta, phi])))
    ok = worst <= 1e-6
    assert verdict(capsys, 5, "within-estimator oracle", ok, f"max abs gap {worst:.2e} over 20 panels")


def test_criterion_06_lq_exactness(capsys):
    worst = 0.0
    for case in range(50):
        rng = np.random.default_rng([2024, case])
        n = int(rng.integers(1, 4))
        t = int(rng.integers(1, 6 // n + 1))
        values, probs = random_three_point(rng)
        scales = rng.uniform(0.5, 1.5, n)
        prob = LQProblem.from_dense(
            rng.standard_normal((n * t, n * t)), n, t, rng.standard_normal((n, t))
        )
        v, p = np.asarray(values), np.asarray(probs)
        prof = iid_profile(scales**2 * (p @ v**2), scales**3 * (p @ v**3), scales**4 * (p @ v**4))
        mean, var = exact_moments(prob, iid_outcomes(values, probs, scales, t))
        worst = max(
            worst,
            abs(lq_mean(prob, prof) - mean) / max(abs(mean), 1e-12),
            abs(lq_variance(prob, prof) - var) / max(var, 1e-12),
        )
    spec = GarchInnovations(omega=(1.0,))
    problem = LQProblem.blockwise(centering_block(50), 1, innovations=spec)
    res = clt_montecarlo(problem, 100_000, seed=SEED, profile=spec.profile(1, max_gap=200))
    ok = worst <= 1e-10 and abs(res.variance - 1.0) <= 0.05
    detail = (
        f"enumeration max relative gap {worst:.1e}; GARCH case MC var / sigma2_LQ "
        f"{res.variance:.4f} over 1e5 reps"
    )
    assert verdict(capsys, 6, "LQ-form exactness", ok, detail)


def test_criterion_07_lq_clt(capsys):
    problem = LQProblem.blockwise(centering_block(50), 100, innovations=IIDInnovations())
    res = clt_montecarlo(problem, 10_000, seed=SEED)
    ok = res.ks_distance <= 0.02
    detail = f"KS {res.ks_distance:.4f}, mean {res.mean:+.4f}, var {res.variance:.4f}"
    assert verdict(capsys, 7, "LQ CLT, N=100 T=50", ok, detail)


def test_criterion_08_jackknife_identities(capsys):
    ok, fits = True, 0
    for seed in range(5):
        orders, arma, garch = design_params(20, seed=seed)
        panel = simulate(orders, arma, garch, 60 + seed, seed=seed)
        fit = fit_arma(panel, orders)
        jack = jackknife_arma(panel, orders, fit)
        a, b = jack.lambda_halves
        ok &= np.array_equal(jack.lambda_corrected, 2.0 * fit.lambda_hat - 0.5 * (a + b))
        fits += 1
        for mode in ("slice", "full", "refit"):
            jg = jackknife_garch(panel, orders, fit, jack.fit, half_first_step=mode)
            a, b = jg.zeta_halves
            ok &= np.array_equal(jg.zeta_corrected, 2.0 * jg.zeta_star - 0.5 * (a + b))
            fits += 1
    assert verdict(capsys, 8, "jackknife identities", bool(ok), f"exact on {fits} corrected fits")


def test_criterion_09_fixed_effect_coverage(capsys):
    rep = coverage_experiment(n_units=50, n_periods=300, panels=1000, seed=SEED)
    ok = within(rep.mu, 0.95, 0.02) and within(rep.varpi, 0.95, 0.02)
    detail = (
        f"N=50 T=300, {rep.panels} panels: mu {rep.mu:.4f}, varpi {rep.varpi:.4f} "
        f"(with zeta-error delta term {rep.varpi_delta:.4f}; omega {rep.omega:.4f})"
    )
    assert verdict(capsys, 9, "fixed-effect coverage", ok, detail)


def test_criterion_10_lr_cc_size(capsys):
    rng = np.random.default_rng(SEED)
    mc_reject = chi2_reject = 0
    for trial in range(1000):
        hits = (rng.random(100) < 0.05).astype(int)
        mc_reject += lr_cc(hits, 0.05, pvalue="mc", reps=999, seed=[SEED, trial]).pvalue < 0.05
        chi2_reject += lr_cc(hits, 0.05).pvalue < 0.05
    rate = mc_reject / 1000
    ok = within(rate, 0.05, 0.02)
    detail = f"rejection rate {rate:.3f} (Monte Carlo p-values); chi-square(2) p-values give {chi2_reject / 1000:.3f}"
    assert verdict(capsys, 10, "LR_cc size", ok, detail)


def _mutated(panel, origin):
    y, x = panel.y.copy(), panel.x.copy()
    y[:, origin + 1 :] = 1e3
    x[:, origin + 2 :] = -1e3
    return PanelData(y, x, panel.unit_ids)


def test_criterion_11_forecast_direction(capsys):
    orders = ModelOrders(1, 1, 1, 1, 1)
    design = DesignSpec()
    better, units, clean = 0, 0, True
    for k in range(3):
        panel, _, _ = design.draw(31, 120, seed=[SEED, k])
        opts = BacktestOptions(seed=k)
        summaries = {}
        for method in ("panel-jackknife", "univariate"):
            out = rolling_backtest(panel, orders, 96, method, opts)
            summaries[method] = out
            by_origin = {}
            for r in out.records:
                by_origin.setdefault(r.origin, []).append(r)
            for origin, recs in by_origin.items():
                again = forecast_origin(_mutated(panel, origin), orders, origin, 96, method, opts)
                clean &= all(
                    (a.y_point, a.interval, a.h_forecast) == (b.y_point, b.interval, b.h_forecast)
                    for a, b in zip(recs, again)
                )
            clean &= not out.skipped
        better += int(np.sum(summaries["panel-jackknife"].rmse < summaries["univariate"].rmse))
        units += 31
    share = better / units
    ok = share >= 0.60 and clean
    detail = (
        f"panel-jackknife RMSE below univariate in {better}/{units} units ({share:.1%}); "
        f"no-look-ahead {'held' if clean else 'VIOLATED'} on every origin"
    )
    assert verdict(capsys, 11, "forecast direction, N=31 T=120 window 96", ok, detail)


def _cli(*argv):
    assert cli.main([str(a) for a in argv]) == 0


def test_criterion_12_determinism(tmp_path, capsys):
    cfg = dict(grid=((8, 40),), replications=50, seed=SEED, bootstrap_reps=20)
    runs = [run_experiment(ExperimentConfig(workers=w, **cfg)).to_csv() for w in (1, 1, 8)]
    same = {"harness 1 vs 1 vs 8 workers": runs[0] == runs[1] == runs[2]}

    def twice(name, argv, outputs, strip=None):
        blobs = []
        for run in ("a", "b"):
            d = tmp_path / f"{name}_{run}"
            d.mkdir()
            _cli(*[str(a).replace("{d}", str(d)) for a in argv])
            blob = []
            for o in outputs:
                text = (d / o).read_text()
                if strip:
                    doc = json.loads(text)
                    doc.pop(strip)
                    text = json.dumps(doc)
                blob.append(text)
            blobs.append(blob)
        same[name] = blobs[0] == blobs[1]

    panel = tmp_path / "panel.csv"
    _cli("simulate", "--units", 8, "--periods", 70, "--seed", 3, "--output", panel)
    twice("simulate", ["simulate", "--units", 8, "--periods", 70, "--seed", 3,
                       "--output", "{d}/p.csv"], ["p.csv"])
    twice("fit", ["fit", "--input", panel, "--output", "{d}/f.json"], ["f.json"], strip="timing")
    twice("correct", ["correct", "--input", panel, "--reps", 20, "--seed", 2,
                      "--output", "{d}/c.json"], ["c.json"], strip="timing")
    twice("infer", ["infer", "--input", panel, "--output", "{d}/i.csv"], ["i.csv"])
    twice("forecast", ["forecast", "--input", panel, "--window", 66, "--method", "panel-jackknife",
                       "--fhs-draws", 2000, "--seed", 5, "--output", "{d}/fc.csv"],
          ["fc.csv", "fc_records.csv"])
    twice("lq-verify", ["lq-verify", "--units", 10, "--periods", 20, "--reps", 2000, "--seed", 4,
                        "--output", "{d}/lq.csv"], ["lq.csv", "lq_sample.csv"])
    mc_cfg = tmp_path / "mc.cfg"
    mc_cfg.write_text("grid = 8x40\nbootstrap_reps = 20\n")
    tables = []
    for threads in (1, 8):
        out = tmp_path / f"mc{threads}.txt"
        _cli("montecarlo", "--config", mc_cfg, "--reps", 50, "--threads", threads, "--output", out)
        tables.append((out.read_text(), out.with_suffix(".csv").read_text()))
    same["montecarlo --threads 1 vs 8"] = tables[0] == tables[1]
    ok = all(same.values())
    detail = ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items())
    assert verdict(capsys, 12, "determinism", ok, detail)
