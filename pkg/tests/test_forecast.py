import numpy as np
import pytest

from pagarch import forecast as fc
from pagarch.arma import ArmaEstimate, fit_arma
from pagarch.errors import EstimationError, ParameterError
from pagarch.forecast import (
    BacktestOptions,
    ForecastRecord,
    Interval,
    fhs_interval,
    forecast_origin,
    lr_cc,
    point_forecast,
    rolling_backtest,
    summarize,
)
from pagarch.garch import GarchEstimate, fit_garch
from pagarch.model import ModelOrders, PanelData, simulate

from conftest import design_params


def hand_fits(mu, phi, psi, resid, tau=(), nu=(), omega=None, h=None):
    n, t = resid.shape
    orders = ModelOrders(len(phi), len(psi), len(tau), len(nu), 0)
    arma = ArmaEstimate(
        orders, np.array([*phi, *psi], float), np.asarray(mu, float), resid, 0.0, True
    )
    omega = np.mean(resid**2, axis=1) if omega is None else np.asarray(omega, float)
    z = np.array([*tau, *nu], float)
    garch = GarchEstimate(
        len(tau),
        len(nu),
        z,
        omega,
        omega * (1 - z.sum()),
        np.broadcast_to(omega[:, None], resid.shape).copy() if h is None else h,
        0.0,
        True,
        omega,
    )
    return arma, garch


# --------------------------------------------------------- point forecast


def test_hand_arma11_point_forecast():
    y = np.array([[0.3, -0.1, 2.0]])
    resid = np.array([[0.5, 0.2, 1.0]])
    arma, garch = hand_fits([0.0], [0.5], [0.2], resid)
    y_pt, _ = point_forecast(arma, garch, PanelData(y), 0, origin=2)
    assert y_pt == pytest.approx(1.2)


def test_constant_mean_model_forecasts_mu(rng):
    resid = rng.standard_normal((3, 10))
    arma, garch = hand_fits([1.0, -2.0, 0.5], [], [], resid)
    y = rng.standard_normal((3, 10))
    for unit, mu in enumerate([1.0, -2.0, 0.5]):
        assert point_forecast(arma, garch, PanelData(y), unit, 9)[0] == mu


def test_no_garch_effect_forecasts_omega(rng):
    resid = rng.standard_normal((2, 20))
    arma, garch = hand_fits([0.0, 0.0], [0.3], [], resid, tau=(0.0,), nu=(0.0,))
    _, h = point_forecast(arma, garch, PanelData(rng.standard_normal((2, 20))), 1, 19)
    assert h == pytest.approx(np.mean(resid[1] ** 2))


def test_garch_one_step_recursion(rng):
    resid = rng.standard_normal((1, 30))
    hh = rng.uniform(0.5, 2.0, (1, 30))
    arma, garch = hand_fits([0.0], [], [], resid, tau=(0.2,), nu=(0.5,), omega=[1.5], h=hh)
    _, h = point_forecast(arma, garch, PanelData(resid), 0, 29)
    assert h == pytest.approx(1.5 * 0.3 + 0.2 * resid[0, -1] ** 2 + 0.5 * hh[0, -1])


def test_regressor_at_panel_edge_is_an_error(rng):
    orders = ModelOrders(1, 0, 0, 0, 1)
    arma = ArmaEstimate(orders, np.array([1.0, 0.2]), np.zeros(2), np.ones((2, 10)), 0.0, True)
    _, garch = hand_fits([0, 0], [], [], np.ones((2, 10)))
    panel = PanelData(rng.standard_normal((2, 10)), rng.standard_normal((2, 10, 1)))
    with pytest.raises(ParameterError):
        point_forecast(arma, garch, panel, 0, 9)


# -------------------------------------------------------------------- FHS


def test_fhs_normal_pool_matches_normal_quantiles(rng):
    resid = rng.standard_normal((20, 500))
    arma, garch = hand_fits(np.zeros(20), [], [], resid, omega=np.ones(20), h=np.ones((20, 500)))
    lo, hi, degenerate = fhs_interval(arma, garch, PanelData(resid), 3, 499, 0.05, 100_000, seed=4)
    assert not degenerate
    assert lo == pytest.approx(-1.96, rel=0.02)
    assert hi == pytest.approx(1.96, rel=0.02)


def test_fhs_degenerate_pool_collapses():
    resid = np.zeros((2, 40))
    arma, garch = hand_fits([1.0, 2.0], [], [], resid, omega=np.ones(2), h=np.ones((2, 40)))
    assert fhs_interval(arma, garch, PanelData(resid), 1, 39) == Interval(2.0, 2.0, True)


def test_fhs_pool_too_small(rng):
    resid = rng.standard_normal((1, 30))
    arma, garch = hand_fits([0.0], [], [], resid)
    with pytest.raises(EstimationError):
        fhs_interval(arma, garch, PanelData(resid), 0, 29)


def test_fhs_determinism_and_monotone_in_alpha(rng):
    resid = rng.standard_normal((5, 40))
    arma, garch = hand_fits(np.zeros(5), [], [], resid)
    panel = PanelData(resid)
    a = fhs_interval(arma, garch, panel, 2, 39, seed=9)
    assert a == fhs_interval(arma, garch, panel, 2, 39, seed=9)
    wide = fhs_interval(arma, garch, panel, 2, 39, alpha=0.01, seed=9)
    narrow = fhs_interval(arma, garch, panel, 2, 39, alpha=0.2, seed=9)
    assert wide.lower <= a.lower <= narrow.lower
    assert narrow.upper <= a.upper <= wide.upper


# ------------------------------------------------------------------ LR_cc


def test_lr_cc_independent_hits_at_nominal_rate():
    hits = np.zeros(100, int)
    hits[[10, 30, 50, 70, 90]] = 1
    res = lr_cc(hits, 0.05)
    assert res.lr_uc == pytest.approx(0.0, abs=1e-12)
    assert res.lr_ind < 1.0
    assert res.pvalue > 0.5


def test_lr_cc_clustered_hits_reject():
    hits = np.zeros(100, int)
    hits[40:46] = 1
    res = lr_cc(hits, 0.05)
    assert res.lr_ind > 10
    assert res.pvalue < 0.01


@pytest.mark.parametrize("value", [0, 1])
def test_lr_cc_constant_sequences_finite(value):
    res = lr_cc(np.full(50, value), 0.05)
    assert np.isfinite(res.statistic)
    assert 0.0 <= res.pvalue <= 1.0


def test_lr_cc_validation():
    with pytest.raises(ParameterError):
        lr_cc(np.zeros(10, int))
    with pytest.raises(ParameterError):
        lr_cc(np.full(30, 2))
    with pytest.raises(ParameterError):
        lr_cc(np.zeros(30, int), pvalue="exact")


def test_lr_cc_mc_pvalue_range_and_determinism():
    hits = (np.random.default_rng(1).random(100) < 0.05).astype(int)
    a = lr_cc(hits, pvalue="mc", seed=3)
    assert a == lr_cc(hits, pvalue="mc", seed=3)
    assert 0.0 < a.pvalue <= 1.0


# --------------------------------------------------------------- backtest


@pytest.fixture(scope="module")
def small_panel():
    orders, arma, garch = design_params(6, seed=2)
    return orders, simulate(orders, arma, garch, 60, seed=8, burn_in=100)


@pytest.mark.parametrize("method", ["panel", "panel-jackknife", "univariate"])
def test_no_look_ahead(small_panel, method):
    orders, panel = small_panel
    origin, window = 56, 52
    opts = BacktestOptions(fhs_draws=500)
    before = forecast_origin(panel, orders, origin, window, method, opts)
    y = panel.y.copy()
    x = panel.x.copy()
    y[:, origin + 1 :] = 1e3
    x[:, origin + 2 :] = -1e3
    after = forecast_origin(PanelData(y, x), orders, origin, window, method, opts)
    for a, b in zip(before, after):
        assert (a.y_point, a.interval, a.h_forecast) == (b.y_point, b.interval, b.h_forecast)


def test_backtest_unit_order_invariance(small_panel):
    orders, panel = small_panel
    opts = BacktestOptions(fhs_draws=500)
    base = rolling_backtest(panel, orders, 56, "panel", opts)
    perm = np.array([3, 0, 5, 1, 4, 2])
    other = rolling_backtest(panel.units(perm), orders, 56, "panel", opts)
    assert np.allclose(other.rmse, base.rmse[perm], rtol=1e-6)
    assert base.n_units == 6 and len(base.records) == 6 * 4
    assert np.all((base.coverage >= 0) & (base.coverage <= 1))


def test_backtest_skips_and_aborts(small_panel, monkeypatch):
    orders, panel = small_panel
    real = fc._fit_window
    calls = {"n": 0}

    def flaky(sub, *args):
        calls["n"] += 1
        if calls["n"] == 2:
            raise EstimationError("synthetic failure")
        return real(sub, *args)

    monkeypatch.setattr(fc, "_fit_window", flaky)
    out = rolling_backtest(panel, orders, 50, "panel", BacktestOptions(fhs_draws=200))
    assert out.skipped == [50]
    assert len(out.records) == 6 * 9

    def broken(*args):
        raise EstimationError("always")

    monkeypatch.setattr(fc, "_fit_window", broken)
    with pytest.raises(EstimationError, match="aborting"):
        rolling_backtest(panel, orders, 50, "panel")


def test_backtest_rejects_short_panel(small_panel):
    orders, panel = small_panel
    with pytest.raises(ParameterError):
        rolling_backtest(panel, orders, 59, "panel")
    with pytest.raises(ParameterError):
        rolling_backtest(panel, orders, 30, "oracle")


def test_constant_series_has_zero_rmse():
    orders = ModelOrders(0, 0, 0, 0, 0)
    y = np.full((2, 12), 4.0)
    y[:, ::2] += 1e-9 * np.array([[1.0], [-1.0]])  # avoid an all-zero variance target
    fit = fit_arma(PanelData(y[:, :10]), orders)
    g = fit_garch(fit.residuals, 0, 0)
    records = []
    for unit in range(2):
        y_pt, h = point_forecast(fit, g, PanelData(y), unit, 9)
        records.append(ForecastRecord(unit, 9, y[unit, 10], y_pt, Interval(3.0, 5.0), h))
    out = summarize(records, 2, "panel", 10)
    assert np.allclose(out.rmse, 0.0, atol=1e-8)
