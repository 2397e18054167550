"""
Bias corrections and standard errors.

* Half-panel jackknife for ``lambda`` and for ``zeta``.
* Analytic correction of ``lambda``: the expected score at the fitted
  parameters is estimated from panels simulated from the fitted model, and
  mapped into a bias through the Hessian.
* Sandwich covariances for ``lambda_hat`` (unit-clustered scores) and for
  ``zeta_hat`` (stacked two-step scores, so the first-step estimation error
  is propagated).
* Normal intervals for the unit effects ``mu_i``, ``omega_i`` and ``varpi_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from pagarch import kernels
from pagarch.arma import (
    ArmaEstimate,
    ArmaFitOptions,
    fit_arma,
    lambda_valid,
    refit_mu,
    unit_objectives,
)
from pagarch.errors import EstimationError
from pagarch.garch import GarchEstimate, GarchFitOptions, fit_garch
from pagarch.model import (
    ModelOrders,
    PanelData,
    arma_transform,
    max_root_modulus,
    spawn,
)
from pagarch.numdiff import hessian, jacobian

log = logging.getLogger(__name__)

__all__ = [
    "AnalyticCorrection",
    "FixedEffectIntervals",
    "JackknifeArma",
    "JackknifeGarch",
    "SandwichCovariance",
    "analytic_correct_arma",
    "covariance_lambda",
    "covariance_zeta",
    "fixed_effect_inference",
    "jackknife_arma",
    "jackknife_combine",
    "jackknife_garch",
    "vtqml_sandwich",
]

MAX_CONDITION = 1e10


def jackknife_combine(full, first, second) -> np.ndarray:
    """Half-panel jackknife ``2 full - (first + second) / 2``."""
    full, first, second = (np.asarray(a, dtype=float) for a in (full, first, second))
    return 2.0 * full - 0.5 * (first + second)


def _halves(n_periods):
    mid = n_periods // 2
    return (0, mid), (mid, n_periods)


# ----------------------------------------------------------- covariances


@dataclass
class SandwichCovariance:
    """``Sigma = Gamma^{-1} Omega Gamma^{-1}`` with ``cov = Sigma / (NT)``.

    ``gamma`` is the Hessian of the (minimized) objective scaled by ``1/(NT)``
    and ``omega`` the clustered outer product of unit scores scaled the same
    way. ``ad`` holds the asymptotic standard deviations ``sqrt(diag(cov))``.
    """

    gamma: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    cov: np.ndarray
    n_obs: int
    condition: float
    names: list = field(default_factory=list)

    @property
    def ad(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def _sandwich(bread, meat, n_obs, names):
    cond = float(np.linalg.cond(bread)) if bread.size else 1.0
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(f"singular Hessian (condition number {cond:.3g})")
    inv = np.linalg.inv(bread)
    sigma = inv @ meat @ inv.T * n_obs
    sigma = 0.5 * (sigma + sigma.T)
    return SandwichCovariance(
        gamma=bread / n_obs,
        omega=meat / n_obs,
        sigma=sigma,
        cov=sigma / n_obs,
        n_obs=n_obs,
        condition=cond,
        names=names,
    )


def _centered_outer(scores):
    s = scores - scores.mean(axis=0, keepdims=True)
    return s.T @ s


def _lambda_pieces(panel, fit):
    orders = fit.orders
    lam = fit.lambda_hat

    def total(v):
        return float(np.sum(unit_objectives(v, panel, orders)))

    h = hessian(total, lam)
    g = jacobian(lambda v: unit_objectives(v, panel, orders), lam)
    return h, g


def covariance_lambda(panel: PanelData, fit: ArmaEstimate) -> SandwichCovariance:
    """Sandwich covariance of ``lambda_hat`` with unit-clustered scores.

    The bread is the central-difference Hessian of the concentrated objective
    at ``lambda_hat``; the meat is ``sum_i g_i g_i'`` with ``g_i`` the gradient
    of unit ``i``'s contribution. Units are independent, so clustering on the
    unit is valid under any within-unit dependence of the scores.
    """
    h, g = _lambda_pieces(panel, fit)
    return _sandwich(h, _centered_outer(g), panel.y.size, fit.orders.lambda_names())


def _unit_nll(tau, nu, omega, u, c_h):
    """Per-unit ``sum_t log h + u^2/h`` without the feasibility guard."""
    intercept = omega * (1.0 - np.sum(tau) - np.sum(nu))
    return kernels.garch_nll(u * u, intercept, tau, nu, c_h)


def _residuals_at(lam, panel, orders):
    """Residuals with intercepts concentrated at ``lam``."""
    beta, phi, psi = orders.split_lambda(lam)
    w = arma_transform(panel, beta, phi)
    _, mu, _ = kernels.concentrated_ssr(w, psi)
    w -= mu[:, None]
    return kernels.ma_filter(w, psi) if psi.size else w


def _garch_unit_loglik(panel, orders, garch_fit, residuals=None):
    """Return ``f(lam, zeta) -> per-unit log-likelihood`` with targets recomputed."""
    l = garch_fit.l
    fixed_ch = None if garch_fit.c_h_targeted else garch_fit.c_h

    def f(lam, zeta):
        u = residuals if residuals is not None else _residuals_at(lam, panel, orders)
        omega = np.mean(u * u, axis=1)
        c_h = omega if fixed_ch is None else fixed_ch
        return -0.5 * _unit_nll(zeta[:l], zeta[l:], omega, u, c_h)

    return f


def vtqml_sandwich(residuals, garch_fit: GarchEstimate) -> SandwichCovariance:
    """One-step VT-QML sandwich treating ``residuals`` as known (no first step)."""
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    f = _garch_unit_loglik(None, None, garch_fit, residuals=u)
    z = garch_fit.zeta_hat
    h22 = -hessian(lambda v: float(np.sum(f(None, v))), z)
    s2 = jacobian(lambda v: f(None, v), z)
    names = [f"tau{j + 1}" for j in range(garch_fit.l)] + [
        f"nu{j + 1}" for j in range(garch_fit.k)
    ]
    return _sandwich(h22, _centered_outer(s2), u.size, names)


def covariance_zeta(
    panel: PanelData,
    arma_fit: ArmaEstimate,
    garch_fit: GarchEstimate,
    first_step: bool = True,
) -> SandwichCovariance:
    """Two-step sandwich covariance of ``zeta_hat``.

    Unit scores are stacked as ``s_i = (dQ_i/dlambda, dl_i/dzeta)``. With
    ``H11`` the Hessian of the first-step objective, ``H22`` that of the
    negated log-likelihood in ``zeta`` and ``H21`` the derivative of the
    ``zeta`` score with respect to ``lambda`` (residuals, intercepts and
    variance targets recomputed at each ``lambda``), the influence of unit
    ``i`` on ``zeta_hat`` is ``H22^{-1}(s2_i - H21 H11^{-1} s1_i)``.

    ``first_step=False`` drops the correction, which is the right variance
    when the residuals are computed at a known ``lambda``.
    """
    orders = arma_fit.orders
    lam = arma_fit.lambda_hat
    z = garch_fit.zeta_hat
    k1 = lam.size
    f = _garch_unit_loglik(panel, orders, garch_fit)
    if not first_step or k1 == 0:
        return vtqml_sandwich(arma_fit.residuals, garch_fit)

    def neg_total(v):
        return -float(np.sum(f(v[:k1], v[k1:])))

    joint = hessian(neg_total, np.concatenate([lam, z]))
    h22 = joint[k1:, k1:]
    h21 = joint[k1:, :k1]
    h11, s1 = _lambda_pieces(panel, arma_fit)
    # derivative of the negated log-likelihood, so it shares H22's sign
    s2 = -jacobian(lambda v: f(lam, v), z)
    cond = np.linalg.cond(h11)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(f"singular first-step Hessian (condition number {cond:.3g})")
    adj = s2 - s1 @ np.linalg.solve(h11, h21.T)
    names = [f"tau{j + 1}" for j in range(garch_fit.l)] + [
        f"nu{j + 1}" for j in range(garch_fit.k)
    ]
    return _sandwich(h22, _centered_outer(adj), panel.y.size, names)


# ------------------------------------------------------------- jackknife


@dataclass
class JackknifeArma:
    lambda_hat: np.ndarray
    lambda_halves: tuple
    lambda_corrected: np.ndarray
    fit: ArmaEstimate
    half_fits: tuple


def _require_length(panel, orders, minimum):
    if panel.n_periods < minimum:
        raise EstimationError(
            f"T={panel.n_periods} too short for the half-panel jackknife (need >= {minimum})"
        )


def jackknife_arma(
    panel: PanelData,
    orders: ModelOrders,
    fit: ArmaEstimate = None,
    options: ArmaFitOptions = None,
) -> JackknifeArma:
    """Half-panel jackknife ``lambda_J = 2 lambda_hat - (lambda_1 + lambda_2) / 2``.

    Each half is a fresh panel (zero pre-sample values) fitted from the full
    sample estimate as a warm start. The returned ``fit`` carries
    ``lambda_J`` with intercepts and residuals recomputed on the full panel.
    """
    _require_length(panel, orders, 2 * (orders.p + orders.q + 5))
    fit = fit or fit_arma(panel, orders, options)
    warm = replace(options or ArmaFitOptions(), multistart=False)
    halves = []
    for a, b in _halves(panel.n_periods):
        halves.append(fit_arma(panel.periods(a, b), orders, warm, start=fit.lambda_hat))
    lam_j = jackknife_combine(fit.lambda_hat, halves[0].lambda_hat, halves[1].lambda_hat)
    return JackknifeArma(
        lambda_hat=fit.lambda_hat,
        lambda_halves=(halves[0].lambda_hat, halves[1].lambda_hat),
        lambda_corrected=lam_j,
        fit=with_lambda(fit, panel, lam_j),
        half_fits=tuple(halves),
    )


def with_lambda(fit: ArmaEstimate, panel: PanelData, lam) -> ArmaEstimate:
    """Copy of ``fit`` at another ``lambda`` with intercepts re-concentrated.

    A corrected ``lambda`` can leave the admissible set; the copy is still
    returned (``converged`` set to False) so callers can decide.
    """
    lam = np.asarray(lam, dtype=float)
    out = replace(fit, lambda_hat=lam, covariance_lambda=None)
    if not lambda_valid(lam, fit.orders):
        log.warning("corrected lambda %s violates the root conditions", lam)
        out.converged = False
        return out
    return refit_mu(out, panel)


@dataclass
class JackknifeGarch:
    zeta_star: np.ndarray
    zeta_halves: tuple
    zeta_corrected: np.ndarray
    fit: GarchEstimate
    half_fits: tuple
    lambda_source: str
    half_first_step: str


def _corrected_lambda(panel, orders, source, options, fit=None, seed=0, reps=200):
    if source == "jackknife":
        return jackknife_arma(panel, orders, fit, options).fit
    if source == "analytic":
        fit = fit or fit_arma(panel, orders, options)
        return analytic_correct_arma(panel, fit, reps, seed).fit
    if source == "none":
        return fit or fit_arma(panel, orders, options)
    raise ValueError(f"unknown lambda source {source!r}")


def jackknife_garch(
    panel: PanelData,
    orders: ModelOrders,
    arma_fit: ArmaEstimate = None,
    corrected_fit: ArmaEstimate = None,
    lambda_source: str = "jackknife",
    half_first_step: str = "slice",
    arma_options: ArmaFitOptions = None,
    garch_options: GarchFitOptions = None,
    c_h=None,
    bootstrap_reps: int = 200,
    seed=0,
) -> JackknifeGarch:
    """Half-panel jackknife for ``zeta`` built on a bias-corrected first step.

    ``zeta_star`` is the second step run on residuals at the corrected
    ``lambda`` (``lambda_source`` = "jackknife" or "analytic"; "none" uses
    ``lambda_hat``). For the half-samples, ``half_first_step`` selects:

    ``"slice"``
        the two halves of the full-sample corrected residual series, so only
        the second step is repeated on each half (default);
    ``"full"``
        the full-sample corrected ``lambda`` with intercepts re-concentrated
        on each half;
    ``"refit"``
        a corrected ``lambda`` computed on each half by itself (for the
        jackknife source this needs quarter-sample fits).

    Under "full" and "refit" each half is a fresh sample with zero
    pre-sample values.
    """
    _require_length(panel, orders, 2 * (orders.p + orders.q + 5))
    if half_first_step not in ("slice", "full", "refit"):
        raise ValueError(f"unknown half_first_step {half_first_step!r}")
    arma_fit = arma_fit or fit_arma(panel, orders, arma_options)
    if corrected_fit is None:
        corrected_fit = _corrected_lambda(
            panel, orders, lambda_source, arma_options, arma_fit, seed, bootstrap_reps
        )
    star = fit_garch(corrected_fit.residuals, orders.l, orders.k, garch_options, c_h=c_h)
    halves = []
    for h, (a, b) in enumerate(_halves(panel.n_periods)):
        sub = panel.periods(a, b)
        if half_first_step == "slice":
            resid = corrected_fit.residuals[:, a:b]
        elif half_first_step == "full":
            resid = refit_mu(corrected_fit, sub).residuals
        else:
            warm_options = replace(arma_options or ArmaFitOptions(), multistart=False)
            warm = fit_arma(sub, orders, warm_options, start=arma_fit.lambda_hat)
            first = _corrected_lambda(
                sub, orders, lambda_source, arma_options, warm, spawn(seed, 1 + h), bootstrap_reps
            )
            resid = first.residuals
        halves.append(
            fit_garch(resid, orders.l, orders.k, garch_options, c_h=c_h, start=star.zeta_hat)
        )
    zeta_j = jackknife_combine(star.zeta_hat, halves[0].zeta_hat, halves[1].zeta_hat)
    return JackknifeGarch(
        zeta_star=star.zeta_hat,
        zeta_halves=(halves[0].zeta_hat, halves[1].zeta_hat),
        zeta_corrected=zeta_j,
        fit=star,
        half_fits=tuple(halves),
        lambda_source=lambda_source,
        half_first_step=half_first_step,
    )


# ------------------------------------------------------ analytic (lambda)


@dataclass
class AnalyticCorrection:
    """Bootstrap estimate of the ``O(1/T)`` bias of ``lambda_hat``.

    ``bias`` is the estimated ``E(lambda_hat) - lambda`` and ``bias_se`` its
    bootstrap standard error; ``c_total = T * bias`` corresponds to the sum of
    the fixed-effect and initial-value bias constants.
    """

    bias: np.ndarray
    bias_se: np.ndarray
    c_total: np.ndarray
    lambda_corrected: np.ndarray
    fit: ArmaEstimate
    reps: int
    presample: str


def _pooled_innovations(fit):
    u = fit.residuals
    e = u / np.sqrt(np.mean(u * u, axis=1, keepdims=True))
    e = e.ravel()
    e = e - e.mean()
    return e / e.std()


def _burn_length(fit, presample):
    if presample == "zero":
        return 0
    r = max_root_modulus(fit.phi, fit.psi)
    if r <= 0:
        return 50
    return int(np.clip(np.ceil(np.log(1e-8) / np.log(r)), 50, 500))


def bootstrap_panel(fit: ArmaEstimate, panel: PanelData, rng, pool=None, burn: int = 0):
    """Simulate a homoskedastic panel from the fitted ARMA part.

    Innovations are ``sqrt(omega_hat_i)`` times draws from ``pool`` (standard
    normal if None). The observed regressors are kept; burn-in regressors are
    resampled from each unit's own rows.
    """
    n, t = panel.y.shape
    total = t + burn
    eps = rng.choice(pool, size=(n, total)) if pool is not None else rng.standard_normal((n, total))
    x = panel.x
    if burn and panel.n_regressors:
        idx = rng.integers(0, t, size=(n, burn))
        x = np.concatenate([np.take_along_axis(panel.x, idx[..., None], axis=1), panel.x], axis=1)
    xb = x @ fit.beta if panel.n_regressors else np.zeros((n, total))
    omega = np.mean(fit.residuals**2, axis=1)
    y, _, _ = kernels.simulate_arma_garch(
        eps, xb, fit.mu_hat, fit.phi, fit.psi, omega, np.zeros(0), np.zeros(0)
    )
    return PanelData(y[:, burn:], x[:, burn:] if x is not panel.x else panel.x)


def analytic_correct_arma(
    panel: PanelData,
    fit: ArmaEstimate,
    bootstrap_reps: int = 200,
    seed=0,
    innovations: str = "resample",
    presample: str = "stationary",
) -> AnalyticCorrection:
    """Analytic-type bias correction of ``lambda_hat``.

    The expected score ``E(D)`` of the concentrated objective at the truth
    drives the ``O(1/T)`` bias through ``bias = -H^{-1} E(D)``. It is estimated
    by the mean gradient at ``lambda_hat`` over ``bootstrap_reps`` panels
    simulated from the fitted model. Under martingale-difference errors the
    expected score depends on second moments only, so the simulated errors
    are homoskedastic with unit variances ``omega_hat_i``.

    Parameters
    ----------
    innovations : {"resample", "normal"}
        Draw standardized innovations from the pooled standardized residuals
        or from N(0, 1).
    presample : {"stationary", "zero"}
        Start the simulated panels in the stationary distribution (burn-in
        chosen from the root moduli) or from zero pre-sample values. The
        initial-value part of the bias depends on how the data started, so
        this should match the data: "zero" suits panels simulated without
        burn-in, "stationary" suits observed series.
    """
    if bootstrap_reps < 2:
        raise ValueError("need at least two bootstrap panels")
    orders = fit.orders
    lam = fit.lambda_hat
    h, _ = _lambda_pieces(panel, fit)
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise EstimationError(f"singular Hessian (condition number {cond:.3g})")
    pool = _pooled_innovations(fit) if innovations == "resample" else None
    burn = _burn_length(fit, presample)
    scores = np.empty((bootstrap_reps, lam.size))
    for b in range(bootstrap_reps):
        rng = np.random.default_rng(spawn(seed, b))
        sim = bootstrap_panel(fit, panel, rng, pool, burn)
        scores[b] = jacobian(lambda v: np.sum(unit_objectives(v, sim, orders)), lam)[0]
    draws = -np.linalg.solve(h, scores.T).T
    bias = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(bootstrap_reps)
    lam_a = lam - bias
    return AnalyticCorrection(
        bias=bias,
        bias_se=se,
        c_total=panel.n_periods * bias,
        lambda_corrected=lam_a,
        fit=with_lambda(fit, panel, lam_a),
        reps=bootstrap_reps,
        presample=presample,
    )


# ---------------------------------------------------------- fixed effects


@dataclass
class FixedEffectIntervals:
    """Per-unit point estimates, standard errors and normal intervals."""

    level: float
    mu: np.ndarray
    mu_se: np.ndarray
    omega: np.ndarray
    omega_se: np.ndarray
    varpi: np.ndarray
    varpi_se: np.ndarray
    kurtosis: float
    degenerate: bool

    def _ci(self, est, se):
        z = stats.norm.ppf(0.5 + self.level / 2.0)
        return np.stack([est - z * se, est + z * se], axis=-1)

    @property
    def mu_ci(self):
        return self._ci(self.mu, self.mu_se)

    @property
    def omega_ci(self):
        return self._ci(self.omega, self.omega_se)

    @property
    def varpi_ci(self):
        return self._ci(self.varpi, self.varpi_se)

    def unit(self, i: int) -> dict:
        return {
            "mu": (self.mu[i], self.mu_se[i], tuple(self.mu_ci[i])),
            "omega": (self.omega[i], self.omega_se[i], tuple(self.omega_ci[i])),
            "varpi": (self.varpi[i], self.varpi_se[i], tuple(self.varpi_ci[i])),
        }


def fixed_effect_inference(
    arma_fit: ArmaEstimate,
    garch_fit: GarchEstimate,
    level: float = 0.95,
    kurtosis: str = "pooled",
    zeta=None,
    zeta_cov=None,
) -> FixedEffectIntervals:
    """Normal intervals for ``mu_i``, ``omega_i`` and ``varpi_i``.

    Asymptotic variances (of ``sqrt(T)`` times the estimation error):

    * ``mu_i``: ``omega_i * T / (1' Sigma_psi^{-1} 1)``;
    * ``omega_i``: ``((1 - sum nu) / (1 - sum tau - sum nu))^2 (E eps^4 - 1) E h^2``;
    * ``varpi_i``: ``(1 - sum nu)^2 (E eps^4 - 1) E h^2``,

    with ``E eps^4`` the sample fourth moment of standardized residuals
    (pooled over units by default, or per unit) and ``E h^2`` the unit's mean
    of squared fitted variances.

    Parameters
    ----------
    zeta : array_like, optional
        Value of ``(tau, nu)`` used in ``varpi_i = omega_i (1 - sum zeta)`` and
        in the variance factors; defaults to ``garch_fit.zeta_hat`` (pass a
        bias-corrected value to center the ``varpi`` intervals better).
    zeta_cov : ndarray, optional
        When given, adds the finite-N delta-method term
        ``omega_i^2 1' Cov(zeta) 1`` to the ``varpi`` variance.
    """
    t = arma_fit.residuals.shape[1]
    _, _, gg = kernels.concentrated_ssr(np.zeros((1, t)), arma_fit.psi)
    u = arma_fit.residuals
    omega = np.mean(u * u, axis=1)
    mu_se = np.sqrt(omega / gg)
    zeta = garch_fit.zeta_hat if zeta is None else np.asarray(zeta, dtype=float)
    tau_sum = float(np.sum(zeta[: garch_fit.l]))
    nu_sum = float(np.sum(zeta[garch_fit.l :]))
    eps = garch_fit.standardized_residuals(u)
    if kurtosis == "pooled":
        k4 = np.full(u.shape[0], np.mean(eps**4))
    elif kurtosis == "unit":
        k4 = np.mean(eps**4, axis=1)
    else:
        raise ValueError(f"unknown kurtosis option {kurtosis!r}")
    degenerate = bool(np.any(k4 <= 1.0))
    if degenerate:
        log.warning("sample fourth moment of standardized residuals <= 1")
    eh2 = np.mean(garch_fit.h_hat**2, axis=1)
    base = np.clip(k4 - 1.0, 0.0, None) * eh2
    persistence = tau_sum + nu_sum
    s2_omega = ((1.0 - nu_sum) / (1.0 - persistence)) ** 2 * base
    s2_varpi = (1.0 - nu_sum) ** 2 * base
    varpi = garch_fit.omega_hat * (1.0 - persistence)
    var_varpi = s2_varpi / t
    if zeta_cov is not None:
        ones = np.ones(len(zeta))
        var_varpi = var_varpi + garch_fit.omega_hat**2 * float(ones @ zeta_cov @ ones)
    return FixedEffectIntervals(
        level=level,
        mu=arma_fit.mu_hat,
        mu_se=mu_se,
        omega=garch_fit.omega_hat,
        omega_se=np.sqrt(s2_omega / t),
        varpi=varpi,
        varpi_se=np.sqrt(var_varpi),
        kurtosis=float(np.mean(k4)),
        degenerate=degenerate,
    )
