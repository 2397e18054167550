"""
Rolling-window one-step forecasting: point forecasts, filtered historical
simulation (FHS) intervals, RMSE and the conditional coverage test.

Time indices are 0-based. A forecast made at ``origin`` uses ``y`` up to
``origin`` and the regressors up to ``origin + 1`` (the regressors are
lagged exogenous series, so their value at ``origin + 1`` is known at
``origin``), and targets ``y[:, origin + 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from pagarch.arma import ArmaEstimate, ArmaFitOptions, fit_arma
from pagarch.errors import EstimationError, ParameterError
from pagarch.garch import GarchEstimate, GarchFitOptions, fit_garch, garch_at, project_zeta
from pagarch.inference import analytic_correct_arma, jackknife_arma, jackknife_garch
from pagarch.model import ModelOrders, PanelData, spawn

log = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "BacktestOptions",
    "BacktestSummary",
    "ForecastRecord",
    "Interval",
    "fhs_interval",
    "forecast_origin",
    "lr_cc",
    "point_forecast",
    "point_forecasts",
    "rolling_backtest",
]

METHODS = ("panel", "panel-analytic", "panel-jackknife", "univariate")
MIN_POOL = 50
MAX_SKIP_SHARE = 0.2


class Interval(NamedTuple):
    lower: float
    upper: float
    degenerate: bool = False


@dataclass(frozen=True)
class ForecastRecord:
    unit: int
    origin: int
    y_actual: float
    y_point: float
    interval: Interval
    h_forecast: float

    @property
    def hit(self) -> int:
        """1 when the realized value falls outside the interval."""
        lo, hi = self.interval[:2]
        return int(not (lo <= self.y_actual <= hi))


# ---------------------------------------------------------- point forecast


def _window_start(arma_fit: ArmaEstimate, origin: int) -> int:
    start = origin - arma_fit.residuals.shape[1] + 1
    if start < 0:
        raise ParameterError("fit window extends before the start of the panel")
    return start


def point_forecasts(
    arma_fit: ArmaEstimate, garch_fit: GarchEstimate, panel: PanelData, origin: int
):
    """One-step point and variance forecasts for every unit.

    ``arma_fit`` and ``garch_fit`` must come from the window ending at
    ``origin`` (their residual matrices fix the window length).

    Returns
    -------
    y_point, h_forecast : ndarray
        Length-N arrays.
    """
    orders = arma_fit.orders
    if origin < max(orders.p, orders.q):
        raise ParameterError(f"origin {origin} leaves fewer than max(P, Q) lags")
    if orders.dx and origin + 1 >= panel.n_periods:
        raise ParameterError(f"no regressor values at period {origin + 1}")
    w = arma_fit.residuals.shape[1]
    _window_start(arma_fit, origin)
    beta, phi, psi = orders.split_lambda(arma_fit.lambda_hat)
    y_point = np.array(arma_fit.mu_hat, dtype=float, copy=True)
    if orders.dx:
        y_point += panel.x[:, origin + 1, :] @ beta
    for p, coef in enumerate(phi, start=1):
        y_point += coef * panel.y[:, origin + 1 - p]
    u = arma_fit.residuals
    for q, coef in enumerate(psi, start=1):
        if w - q >= 0:
            y_point += coef * u[:, w - q]
    h = garch_fit.varpi_hat.copy()
    for lag, coef in enumerate(garch_fit.tau, start=1):
        if w - lag >= 0:
            h += coef * u[:, w - lag] ** 2
    for lag, coef in enumerate(garch_fit.nu, start=1):
        h += coef * (garch_fit.h_hat[:, w - lag] if w - lag >= 0 else garch_fit.c_h)
    return y_point, h


def point_forecast(arma_fit, garch_fit, panel: PanelData, unit: int, origin: int):
    """``(y_point, h_forecast)`` for a single unit; see :func:`point_forecasts`."""
    y, h = point_forecasts(arma_fit, garch_fit, panel, origin)
    return float(y[unit]), float(h[unit])


# -------------------------------------------------------------- intervals


def _pool(arma_fit, garch_fit, unit=None):
    eps = garch_fit.standardized_residuals(arma_fit.residuals)
    return (eps if unit is None else eps[unit]).ravel()


def fhs_interval(
    arma_fit: ArmaEstimate,
    garch_fit: GarchEstimate,
    panel: PanelData,
    unit: int,
    origin: int,
    alpha: float = 0.05,
    draws: int = 10_000,
    seed=0,
    pool: str = "panel",
) -> Interval:
    """Filtered historical simulation interval for ``y[unit, origin + 1]``.

    Standardized residuals ``u_hat / sqrt(h_hat)`` from the window (all units
    with ``pool="panel"``, only ``unit`` with ``pool="unit"``) are resampled
    ``draws`` times; the interval is the pair of empirical ``alpha/2`` and
    ``1 - alpha/2`` quantiles of ``y_point + sqrt(h_forecast) eps*``. Draws use
    the stream ``spawn(seed, unit, origin)``.
    """
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    y_point, h = point_forecast(arma_fit, garch_fit, panel, unit, origin)
    eps = _pool(arma_fit, garch_fit, None if pool == "panel" else unit)
    return _fhs(y_point, h, eps, alpha, draws, np.random.default_rng(spawn(seed, unit, origin)))


def _fhs(y_point, h, eps, alpha, draws, rng) -> Interval:
    if eps.size < MIN_POOL:
        raise EstimationError(f"only {eps.size} standardized residuals (need {MIN_POOL})")
    if not np.any(eps):
        log.warning("degenerate residual pool; interval collapses to the point forecast")
        return Interval(y_point, y_point, True)
    star = rng.choice(eps, size=draws)
    lo, hi = np.quantile(star, [alpha / 2, 1 - alpha / 2])
    s = np.sqrt(h)
    return Interval(float(y_point + s * lo), float(y_point + s * hi), False)


# ---------------------------------------------------------------- LR_cc


def _lr_parts(hits, alpha):
    """LR_uc + LR_ind for each row of a 2-D hit array (0 log 0 = 0)."""
    hits = np.asarray(hits, dtype=np.int8)
    n = hits.shape[1]
    n1 = hits.sum(axis=1).astype(float)
    n0 = n - n1
    p = n1 / n
    lr_uc = -2.0 * (
        special.xlogy(n0, 1 - alpha)
        + special.xlogy(n1, alpha)
        - special.xlogy(n0, 1 - p)
        - special.xlogy(n1, p)
    )
    prev, cur = hits[:, :-1], hits[:, 1:]
    n00 = np.sum((prev == 0) & (cur == 0), axis=1).astype(float)
    n01 = np.sum((prev == 0) & (cur == 1), axis=1).astype(float)
    n10 = np.sum((prev == 1) & (cur == 0), axis=1).astype(float)
    n11 = np.sum((prev == 1) & (cur == 1), axis=1).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        p01 = np.where(n00 + n01 > 0, n01 / (n00 + n01), 0.0)
        p11 = np.where(n10 + n11 > 0, n11 / (n10 + n11), 0.0)
    pi = (n01 + n11) / (n - 1)
    lr_ind = -2.0 * (
        special.xlogy(n00 + n10, 1 - pi)
        + special.xlogy(n01 + n11, pi)
        - special.xlogy(n00, 1 - p01)
        - special.xlogy(n01, p01)
        - special.xlogy(n10, 1 - p11)
        - special.xlogy(n11, p11)
    )
    return np.maximum(lr_uc, 0.0), np.maximum(lr_ind, 0.0)


class LRResult(NamedTuple):
    statistic: float
    pvalue: float
    lr_uc: float
    lr_ind: float


def lr_cc(hits, alpha: float = 0.05, pvalue: str = "chi2", reps: int = 999, seed=0) -> LRResult:
    """Conditional coverage likelihood ratio ``LR_cc = LR_uc + LR_ind``.

    Parameters
    ----------
    hits : sequence of {0, 1}
        1 marks a realization outside the interval; at least 20 entries.
    alpha : float
        Nominal violation rate.
    pvalue : {"chi2", "mc"}
        Asymptotic chi-square(2) p-value, or a Monte Carlo p-value from
        ``reps`` simulated i.i.d. Bernoulli(alpha) sequences of the same
        length with randomized tie-breaking, which has exact size.
    """
    h = np.asarray(hits)
    if h.ndim != 1 or h.size < 20:
        raise ParameterError("need a 1-D hit sequence of length >= 20")
    if not np.all((h == 0) | (h == 1)):
        raise ParameterError("hits must be 0/1")
    uc, ind = _lr_parts(h[None, :], alpha)
    stat = float(uc[0] + ind[0])
    if pvalue == "chi2":
        p = float(stats.chi2.sf(stat, 2))
    elif pvalue == "mc":
        rng = np.random.default_rng(seed)
        sims = (rng.random((reps, h.size)) < alpha).astype(np.int8)
        s_uc, s_ind = _lr_parts(sims, alpha)
        null = s_uc + s_ind
        tol = 1e-9 * max(1.0, stat)
        greater = np.sum(null > stat + tol)
        equal = np.sum(np.abs(null - stat) <= tol)
        p = float((greater + rng.random() * (equal + 1)) / (reps + 1))
    else:
        raise ParameterError(f"unknown p-value method {pvalue!r}")
    return LRResult(stat, min(1.0, p), float(uc[0]), float(ind[0]))


# -------------------------------------------------------------- backtest


@dataclass(frozen=True)
class BacktestOptions:
    """Settings for :func:`rolling_backtest`.

    ``alpha`` is the interval's nominal violation rate (0.05 gives 95%
    intervals). ``pool`` picks panel-wide or per-unit FHS residual pools
    (the univariate method always uses its own unit). ``bootstrap_reps`` and
    ``presample`` configure the analytic correction.
    """

    alpha: float = 0.05
    fhs_draws: int = 10_000
    seed: int = 0
    pool: str = "panel"
    bootstrap_reps: int = 200
    presample: str = "stationary"
    c_h: float = None
    arma: ArmaFitOptions = field(default_factory=ArmaFitOptions)
    garch: GarchFitOptions = field(default_factory=GarchFitOptions)
    lr_pvalue: str = "chi2"


@dataclass
class BacktestSummary:
    method: str
    window: int
    records: list
    rmse: np.ndarray
    hits: list
    coverage: np.ndarray
    lr_statistic: np.ndarray
    lr_pvalue: np.ndarray
    skipped: list

    @property
    def n_units(self):
        return self.rmse.size


def _corrected_pair(panel, orders, method, opts, arma_fit, seed):
    """Bias-corrected first and second step objects for the panel methods."""
    if method == "panel-jackknife":
        first = jackknife_arma(panel, orders, arma_fit, opts.arma).fit
        source = "jackknife"
    else:
        first = analytic_correct_arma(
            panel, arma_fit, opts.bootstrap_reps, seed, presample=opts.presample
        ).fit
        source = "analytic"
    if not first.converged:
        log.info("corrected lambda inadmissible; using the uncorrected first step")
        first = arma_fit
    jg = jackknife_garch(
        panel,
        orders,
        arma_fit,
        first,
        lambda_source=source,
        garch_options=opts.garch,
        c_h=opts.c_h,
    )
    zeta = project_zeta(jg.zeta_corrected, orders.l, opts.garch.margin)
    return first, garch_at(first.residuals, zeta, orders.l, orders.k, opts.c_h)


def _fit_window(sub: PanelData, orders, method, opts, seed):
    arma_fit = fit_arma(sub, orders, opts.arma)
    if method in ("panel", "univariate"):
        return arma_fit, fit_garch(arma_fit.residuals, orders.l, orders.k, opts.garch, c_h=opts.c_h)
    return _corrected_pair(sub, orders, method, opts, arma_fit, seed)


def forecast_origin(
    panel: PanelData,
    orders: ModelOrders,
    origin: int,
    window: int,
    method: str = "panel",
    options: BacktestOptions = None,
) -> list:
    """Forecast records for every unit at one origin.

    The window is ``[origin - window + 1, origin]``. Only ``y`` up to
    ``origin`` and regressors up to ``origin + 1`` are read.
    """
    opts = options or BacktestOptions()
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    start = origin - window + 1
    if start < 0 or origin + 1 >= panel.n_periods:
        raise ParameterError(f"origin {origin} incompatible with window {window}")
    # a truncated copy makes look-ahead impossible by construction
    y = panel.y[:, : origin + 1]
    visible = PanelData(
        np.concatenate([y, np.zeros((panel.n_units, 1))], axis=1),
        panel.x[:, : origin + 2],
        panel.unit_ids,
    )
    sub = visible.periods(start, origin + 1)
    seed = spawn(opts.seed, origin)
    if method == "univariate":
        fits = [
            _fit_window(sub.units([i]), orders, method, opts, spawn(seed, i))
            for i in range(panel.n_units)
        ]
    records = []
    for i in range(panel.n_units):
        if method == "univariate":
            a, g = fits[i]
            vis = visible.units([i])
            y_pt, h = point_forecast(a, g, vis, 0, origin)
            eps = _pool(a, g)
        else:
            if i == 0:
                a_all, g_all = _fit_window(sub, orders, method, opts, seed)
                y_all, h_all = point_forecasts(a_all, g_all, visible, origin)
                pool_all = _pool(a_all, g_all)
            y_pt, h = float(y_all[i]), float(h_all[i])
            eps = pool_all if opts.pool == "panel" else _pool(a_all, g_all, i)
        rng = np.random.default_rng(spawn(opts.seed, i, origin))
        interval = _fhs(y_pt, h, eps, opts.alpha, opts.fhs_draws, rng)
        records.append(
            ForecastRecord(i, origin, float(panel.y[i, origin + 1]), y_pt, interval, h)
        )
    return records


def rolling_backtest(
    panel: PanelData,
    orders: ModelOrders,
    window: int = 96,
    method: str = "panel",
    options: BacktestOptions = None,
) -> BacktestSummary:
    """Rolling-window one-step backtest over origins ``window - 1, ..., T - 2``.

    A window whose fit fails is skipped and logged; more than 20% skipped
    origins raises :class:`EstimationError`.
    """
    opts = options or BacktestOptions()
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    if panel.n_periods <= window + 1:
        raise ParameterError(f"T={panel.n_periods} must exceed window + 1 = {window + 1}")
    origins = range(window - 1, panel.n_periods - 1)
    records, skipped = [], []
    for origin in origins:
        try:
            records.extend(forecast_origin(panel, orders, origin, window, method, opts))
        except (EstimationError, ParameterError, np.linalg.LinAlgError) as exc:
            log.warning("origin %d skipped: %s", origin, exc)
            skipped.append(origin)
            if len(skipped) > MAX_SKIP_SHARE * len(origins):
                raise EstimationError(
                    f"{len(skipped)} of {len(origins)} origins failed; aborting backtest"
                ) from exc
    return summarize(records, panel.n_units, method, window, opts, skipped)


def summarize(records, n_units, method, window, options=None, skipped=()):
    opts = options or BacktestOptions()
    rmse = np.full(n_units, np.nan)
    cover = np.full(n_units, np.nan)
    stat = np.full(n_units, np.nan)
    pval = np.full(n_units, np.nan)
    hits = []
    for i in range(n_units):
        own = sorted((r for r in records if r.unit == i), key=lambda r: r.origin)
        err = np.array([r.y_actual - r.y_point for r in own])
        h = np.array([r.hit for r in own], dtype=int)
        hits.append(h)
        if own:
            rmse[i] = float(np.sqrt(np.mean(err**2)))
            cover[i] = 1.0 - h.mean()
        if h.size >= 20:
            res = lr_cc(h, opts.alpha, opts.lr_pvalue, seed=spawn(opts.seed, i))
            stat[i], pval[i] = res.statistic, res.pvalue
    return BacktestSummary(method, window, list(records), rmse, hits, cover, stat, pval, list(skipped))
