"""
First-step estimation: concentrated least squares for the ARMA parameters.

For fixed ``lambda = (beta, phi, psi)`` the unit intercepts solve a weighted
mean problem in closed form, so the objective depends on ``lambda`` only.
Writing ``w_i`` for ``y_i - x_i beta - sum_p phi_p L^p y_i`` (zero pre-sample
values) and ``B_psi`` for the lower-triangular MA band matrix,

    e_i = B_psi^{-1} w_i,  g = B_psi^{-1} 1,
    mu_i = g'e_i / g'g,    Q_i = e_i'e_i - (g'e_i)^2 / g'g.

Both triangular solves are the MA inverse filter, run in the kernel module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from pagarch import kernels
from pagarch.errors import EstimationError, ParameterError
from pagarch.model import (
    ArmaParams,
    ModelOrders,
    PanelData,
    ar_ok,
    arma_transform,
    lagged,
    ma_ok,
    residual_filter,
    validate_arma,
)

log = logging.getLogger(__name__)

__all__ = [
    "ArmaEstimate",
    "ArmaFitOptions",
    "concentrate_mu",
    "concentrated_objective",
    "fit_arma",
    "lambda_valid",
    "unit_objectives",
    "within_estimator",
]

TIE_GAP = 1e-12


@dataclass(frozen=True)
class ArmaFitOptions:
    """Optimizer settings for :func:`fit_arma`.

    Parameters
    ----------
    method : {"nelder-mead", "bfgs"}
        Simplex descent (default) or quasi-Newton with central-difference
        gradients.
    xatol, fatol : float
        Parameter and objective tolerances. The objective is scaled by
        ``1/(NT)`` inside the optimizer, so ``fatol`` is relative to the
        average squared residual.
    maxiter : int
        Iteration budget per start.
    multistart : bool
        Add the ``psi = +-0.3`` starts to the pooled-OLS start. When False
        and a warm start is supplied, only the warm start is used.
    """

    method: str = "nelder-mead"
    xatol: float = 1e-8
    fatol: float = 1e-10
    maxiter: int = 2000
    multistart: bool = True

    def __post_init__(self):
        if self.method not in ("nelder-mead", "bfgs"):
            raise ParameterError(f"unknown ARMA optimizer {self.method!r}")


@dataclass
class ArmaEstimate:
    """Result of the first-step fit.

    ``covariance_lambda`` is filled in by :func:`pagarch.inference.covariance_lambda`
    and holds the sandwich estimate of ``Var(lambda_hat)`` (that is,
    ``Sigma_1 / (NT)``).
    """

    orders: ModelOrders
    lambda_hat: np.ndarray
    mu_hat: np.ndarray
    residuals: np.ndarray
    objective: float
    converged: bool
    n_iter: int = 0
    message: str = ""
    covariance_lambda: np.ndarray = None
    starts: list = field(default_factory=list)

    @property
    def beta(self):
        return self.orders.split_lambda(self.lambda_hat)[0]

    @property
    def phi(self):
        return self.orders.split_lambda(self.lambda_hat)[1]

    @property
    def psi(self):
        return self.orders.split_lambda(self.lambda_hat)[2]

    @property
    def params(self) -> ArmaParams:
        beta, phi, psi = self.orders.split_lambda(self.lambda_hat)
        return ArmaParams(self.mu_hat, beta, phi, psi)

    @property
    def std_errors(self):
        if self.covariance_lambda is None:
            return None
        return np.sqrt(np.diag(self.covariance_lambda))


def lambda_valid(lam, orders: ModelOrders) -> bool:
    """Root conditions only (the common-root check is applied to final fits)."""
    _, phi, psi = orders.split_lambda(lam)
    return bool(np.all(np.isfinite(lam))) and ar_ok(phi) and ma_ok(psi)


def _pieces(lam, panel: PanelData, orders: ModelOrders):
    beta, phi, psi = orders.split_lambda(lam)
    w = arma_transform(panel, beta, phi)
    return kernels.concentrated_ssr(w, psi)


def _require_valid(lam, orders):
    if not lambda_valid(lam, orders):
        raise ParameterError("lambda violates the stationarity/invertibility conditions")


def concentrate_mu(lam, panel: PanelData, orders: ModelOrders) -> np.ndarray:
    """Profiled intercepts ``mu_hat(lambda)``, one per unit."""
    panel.check_orders(orders)
    _require_valid(lam, orders)
    return _pieces(lam, panel, orders)[1]


def unit_objectives(lam, panel: PanelData, orders: ModelOrders) -> np.ndarray:
    """Per-unit concentrated sums of squares ``Q_i(lambda)``; ``inf`` if invalid."""
    if not lambda_valid(lam, orders):
        return np.full(panel.n_units, np.inf)
    return _pieces(lam, panel, orders)[0]


def concentrated_objective(lam, panel: PanelData, orders: ModelOrders) -> float:
    """Concentrated least-squares objective ``Q(lambda) = sum_i Q_i(lambda)``."""
    panel.check_orders(orders)
    _require_valid(lam, orders)
    return float(np.sum(_pieces(lam, panel, orders)[0]))


def within_estimator(panel: PanelData, p: int):
    """Pooled OLS of unit-demeaned ``y`` on demeaned regressors and ``p`` AR lags.

    Lags use zero pre-sample values, so for ``Q = 0`` this is exactly the
    minimizer of the concentrated objective. Returns ``(beta, phi)``.
    """
    y = panel.y
    cols = [panel.x[:, :, j] for j in range(panel.n_regressors)]
    cols += [lagged(y, lag) for lag in range(1, p + 1)]
    if not cols:
        return np.zeros(0), np.zeros(0)
    z = np.stack(cols, axis=-1)
    z = z - z.mean(axis=1, keepdims=True)
    yd = y - y.mean(axis=1, keepdims=True)
    coef, *_ = np.linalg.lstsq(z.reshape(-1, z.shape[-1]), yd.ravel(), rcond=None)
    return coef[: panel.n_regressors], coef[panel.n_regressors :]


def _initial_simplex(x0, orders):
    steps = np.full(x0.size, 0.05)
    steps[: orders.dx] = 0.05 * np.maximum(np.abs(x0[: orders.dx]), 1.0)
    return np.vstack([x0, x0 + np.diag(steps)])


def _starting_points(panel, orders, options, start):
    if start is not None and not options.multistart:
        start = np.asarray(start, dtype=float)
        if lambda_valid(start, orders):
            return [start]
    beta, phi = within_estimator(panel, orders.p)
    if orders.p and not ar_ok(phi):
        phi = phi * 0.9 / max(1e-12, np.sum(np.abs(phi)))
    base = np.concatenate([beta, phi, np.zeros(orders.q)])
    starts = []
    if start is not None:
        starts.append(np.asarray(start, dtype=float))
    starts.append(base)
    if options.multistart and orders.q:
        for s in (0.3, -0.3):
            cand = base.copy()
            cand[orders.dx + orders.p :] = s
            starts.append(cand)
    return [s for s in starts if lambda_valid(s, orders)]


def _minimize(fun, x0, orders, options):
    if x0.size == 0:
        return x0, fun(x0), True, 0, "no free parameters"
    if options.method == "nelder-mead":
        res = optimize.minimize(
            fun,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": options.xatol,
                "fatol": options.fatol,
                "maxiter": options.maxiter,
                "maxfev": 10 * options.maxiter,
                "initial_simplex": _initial_simplex(x0, orders),
            },
        )
    else:
        res = optimize.minimize(
            fun,
            x0,
            method="BFGS",
            jac="3-point",
            options={"gtol": 1e-8, "maxiter": options.maxiter},
        )
    return res.x, float(res.fun), bool(res.success), int(res.nit), str(res.message)


def fit_arma(
    panel: PanelData,
    orders: ModelOrders,
    options: ArmaFitOptions = None,
    start=None,
) -> ArmaEstimate:
    """Concentrated least-squares estimate of ``lambda`` and the unit intercepts.

    Parameters
    ----------
    panel : PanelData
    orders : ModelOrders
    options : ArmaFitOptions, optional
    start : array_like, optional
        Extra (warm) starting value tried before the default starts.

    Returns
    -------
    ArmaEstimate

    Raises
    ------
    EstimationError
        When no start reaches a valid minimizer.
    """
    options = options or ArmaFitOptions()
    panel.check_orders(orders)
    if panel.n_periods <= orders.p + orders.q + 2:
        raise EstimationError(f"T={panel.n_periods} too short for P+Q={orders.p + orders.q}")
    scale = 1.0 / (panel.n_units * panel.n_periods)

    def fun(lam):
        if not lambda_valid(lam, orders):
            return np.inf
        return scale * float(np.sum(_pieces(lam, panel, orders)[0]))

    runs = []
    for x0 in _starting_points(panel, orders, options, start):
        lam, f, ok, nit, msg = _minimize(fun, x0, orders, options)
        if not np.isfinite(f):
            continue
        _, phi, psi = orders.split_lambda(lam)
        verdict = validate_arma(phi, psi)
        if not verdict:
            log.debug("start %s ended at invalid lambda: %s", x0, verdict.reason)
            continue
        runs.append((f, lam, ok, nit, msg))
    if not runs:
        raise EstimationError("no start produced a valid ARMA minimizer")
    best_f = min(r[0] for r in runs)
    ties = [r for r in runs if r[0] - best_f <= TIE_GAP * max(1.0, abs(best_f))]
    f, lam, ok, nit, msg = min(ties, key=lambda r: float(np.linalg.norm(r[1])))
    ssr, mu, _ = _pieces(lam, panel, orders)
    beta, phi, psi = orders.split_lambda(lam)
    resid = residual_filter(panel, ArmaParams(mu, beta, phi, psi))
    return ArmaEstimate(
        orders=orders,
        lambda_hat=np.asarray(lam, dtype=float),
        mu_hat=mu,
        residuals=resid,
        objective=float(np.sum(ssr)),
        converged=ok,
        n_iter=nit,
        message=msg,
        starts=[float(r[0] / scale) for r in runs],
    )


def refit_mu(fit: ArmaEstimate, panel: PanelData) -> ArmaEstimate:
    """Same ``lambda``, intercepts and residuals recomputed on another panel."""
    ssr, mu, _ = _pieces(fit.lambda_hat, panel, fit.orders)
    beta, phi, psi = fit.orders.split_lambda(fit.lambda_hat)
    resid = residual_filter(panel, ArmaParams(mu, beta, phi, psi))
    return replace(
        fit, mu_hat=mu, residuals=resid, objective=float(np.sum(ssr)), covariance_lambda=None
    )
