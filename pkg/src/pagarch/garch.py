"""
Second-step estimation: variance-targeted Gaussian QML for ``zeta = (tau, nu)``.

The unconditional variances are estimated by per-unit sample second moments
of the first-step residuals, ``omega_i = mean_t u_it^2``. Given those, the
working log-likelihood

    L(zeta) = -1/2 sum_i sum_t [log h_it + u_it^2 / h_it]

is maximized over ``{tau >= 0, nu >= 0, sum(tau) + sum(nu) <= 1 - margin}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from pagarch import kernels
from pagarch.errors import EstimationError, ParameterError
from pagarch.model import PERSISTENCE_MARGIN, GarchParams, garch_filter

log = logging.getLogger(__name__)

__all__ = [
    "GarchEstimate",
    "GarchFitOptions",
    "fit_garch",
    "garch_at",
    "project_zeta",
    "unit_logliks",
    "variance_target",
    "vt_quasi_loglik",
]

BOUNDARY_TOL = 1e-5


@dataclass(frozen=True)
class GarchFitOptions:
    """Optimizer settings for :func:`fit_garch`.

    ``margin`` is the distance kept between ``sum(tau) + sum(nu)`` and one.
    ``zero_unidentified`` sets ``nu`` to zero when every ``tau`` sits on the
    zero boundary and the likelihood does not change, since ``nu`` is not
    identified there.
    """

    xatol: float = 1e-8
    fatol: float = 1e-10
    maxiter: int = 2000
    margin: float = PERSISTENCE_MARGIN
    multistart: bool = True
    zero_unidentified: bool = True


@dataclass
class GarchEstimate:
    l: int
    k: int
    zeta_hat: np.ndarray
    omega_hat: np.ndarray
    varpi_hat: np.ndarray
    h_hat: np.ndarray
    loglik: float
    converged: bool
    c_h: np.ndarray
    boundary: bool = False
    c_h_targeted: bool = True
    n_iter: int = 0
    message: str = ""
    covariance_zeta: np.ndarray = None
    starts: list = field(default_factory=list)

    @property
    def tau(self):
        return self.zeta_hat[: self.l]

    @property
    def nu(self):
        return self.zeta_hat[self.l :]

    @property
    def params(self) -> GarchParams:
        return GarchParams(self.omega_hat, self.tau, self.nu)

    @property
    def std_errors(self):
        if self.covariance_zeta is None:
            return None
        return np.sqrt(np.diag(self.covariance_zeta))

    def standardized_residuals(self, residuals) -> np.ndarray:
        return np.asarray(residuals) / np.sqrt(self.h_hat)


def variance_target(residuals) -> np.ndarray:
    """Per-unit sample second moments ``omega_i = T^{-1} sum_t u_it^2``."""
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    if u.shape[1] < 1:
        raise EstimationError("need at least one period to target the variance")
    omega = np.mean(u * u, axis=1)
    zero = np.flatnonzero(omega <= 0)
    if zero.size:
        raise EstimationError(f"unit {zero[0]} has identically zero residuals")
    return omega


def _split(zeta, l):
    zeta = np.asarray(zeta, dtype=float)
    return zeta[:l], zeta[l:]


def _feasible(tau, nu, margin):
    return bool(
        np.all(np.isfinite(tau))
        and np.all(np.isfinite(nu))
        and np.all(tau >= 0)
        and np.all(nu >= 0)
        and tau.sum() + nu.sum() <= 1.0 - margin
    )


def unit_logliks(tau, nu, omega, residuals, c_h=None, margin=PERSISTENCE_MARGIN):
    """Per-unit quasi log-likelihoods; ``-inf`` outside the constraint set."""
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (u.shape[0],))
    c_h = omega if c_h is None else np.broadcast_to(np.asarray(c_h, dtype=float), omega.shape)
    if not _feasible(tau, nu, margin):
        return np.full(u.shape[0], -np.inf)
    intercept = omega * (1.0 - tau.sum() - nu.sum())
    return -0.5 * kernels.garch_nll(u * u, intercept, tau, nu, c_h)


def vt_quasi_loglik(zeta, omega, residuals, c_h=None) -> float:
    """Variance-targeted Gaussian quasi log-likelihood.

    Parameters
    ----------
    zeta : tuple of array_like
        ``(tau, nu)``.
    omega : array_like
        Unconditional variances, one per unit.
    residuals : ndarray
        N x T residual matrix.
    c_h : float or array_like, optional
        Pre-sample variance; defaults to ``omega``.
    """
    tau, nu = zeta
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if not _feasible(tau, nu, PERSISTENCE_MARGIN):
        raise ParameterError("zeta outside {tau, nu >= 0, sum < 1 - 1e-6}")
    if np.any(np.asarray(omega) <= 0):
        raise ParameterError("omega must be positive")
    return float(np.sum(unit_logliks(tau, nu, omega, residuals, c_h)))


def _starts(l, k):
    if l == 0:
        return [np.zeros(k)]
    out = []
    for a, b in ((0.05, 0.85), (0.10, 0.60), (0.30, 0.30)):
        out.append(np.concatenate([np.full(l, a / l), np.full(k, b / k) if k else []]))
    return out


def _on_boundary(tau, nu, margin):
    return bool(
        np.any(tau < BOUNDARY_TOL)
        or np.any(nu < BOUNDARY_TOL)
        or tau.sum() + nu.sum() > 1.0 - margin - BOUNDARY_TOL
    )


def fit_garch(
    residuals,
    l: int = 1,
    k: int = 1,
    options: GarchFitOptions = None,
    c_h=None,
    start=None,
) -> GarchEstimate:
    """Variance-targeted QML estimate of ``(tau, nu)``.

    Parameters
    ----------
    residuals : ndarray
        N x T first-step residuals.
    l, k : int
        ARCH and GARCH orders.
    options : GarchFitOptions, optional
    c_h : float or array_like, optional
        Pre-sample conditional variance; defaults to ``omega_hat`` per unit.
    start : array_like, optional
        Warm start tried before the default grid.

    Returns
    -------
    GarchEstimate
    """
    options = options or GarchFitOptions()
    if k >= 1 and l == 0:
        raise ParameterError("K >= 1 requires L >= 1")
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    if u.shape[1] < 30:
        log.warning("T=%d is below the recommended floor of 30 for the GARCH step", u.shape[1])
    omega = variance_target(u)
    targeted = c_h is None
    c_h = omega.copy() if c_h is None else np.broadcast_to(np.asarray(c_h, float), omega.shape).copy()
    if np.any(c_h <= 0):
        raise ParameterError("c_h must be positive")
    scale = 1.0 / u.size

    def fun(z):
        tau, nu = _split(z, l)
        return -scale * float(np.sum(unit_logliks(tau, nu, omega, u, c_h, options.margin)))

    starts = [] if start is None else [np.asarray(start, dtype=float)]
    starts += _starts(l, k) if options.multistart else _starts(l, k)[:1]
    runs = []
    for z0 in starts:
        if z0.size == 0:
            runs.append((fun(z0), z0, True, 0, "no free parameters"))
            continue
        if not np.isfinite(fun(z0)):
            continue
        simplex = np.vstack([z0, z0 + np.diag(np.where(z0 > 0.5, -0.05, 0.05))])
        res = optimize.minimize(
            fun,
            z0,
            method="Nelder-Mead",
            options={
                "xatol": options.xatol,
                "fatol": options.fatol,
                "maxiter": options.maxiter,
                "maxfev": 10 * options.maxiter,
                "initial_simplex": simplex,
            },
        )
        if np.isfinite(res.fun):
            runs.append((float(res.fun), res.x, bool(res.success), int(res.nit), str(res.message)))
    if not runs:
        raise EstimationError("GARCH step failed from every start")
    f, z, ok, nit, msg = min(runs, key=lambda r: r[0])
    z = np.asarray(z, dtype=float)
    tau, nu = _split(z, l)
    if options.zero_unidentified and k and l and np.all(tau < BOUNDARY_TOL):
        z0 = np.concatenate([tau, np.zeros(k)])
        if fun(z0) <= f + options.fatol:
            z, f = z0, fun(z0)
            tau, nu = _split(z, l)
    h = garch_filter(u, tau, nu, omega, c_h) if _feasible(tau, nu, PERSISTENCE_MARGIN) else None
    if h is None:
        raise EstimationError("GARCH optimum outside the admissible set")
    return GarchEstimate(
        l=l,
        k=k,
        zeta_hat=z,
        omega_hat=omega,
        varpi_hat=omega * (1.0 - z.sum()),
        h_hat=h,
        loglik=-f / scale,
        converged=ok,
        c_h=c_h,
        boundary=_on_boundary(tau, nu, options.margin),
        c_h_targeted=targeted,
        n_iter=nit,
        message=msg,
        starts=[-r[0] / scale for r in runs],
    )


def project_zeta(zeta, l, margin=PERSISTENCE_MARGIN) -> np.ndarray:
    """Nearest-in-spirit admissible point: clip at zero, then shrink the sum.

    Bias-corrected estimates can leave the constraint set; this maps them
    back so the variance recursion stays defined.
    """
    z = np.clip(np.asarray(zeta, dtype=float), 0.0, None)
    total = z.sum()
    cap = 1.0 - margin - BOUNDARY_TOL
    if total > cap:
        z = z * (cap / total)
    return z


def garch_at(residuals, zeta, l: int, k: int, c_h=None) -> GarchEstimate:
    """GARCH estimate object at given ``zeta`` (targets and ``h`` recomputed).

    Used to carry bias-corrected parameters; ``zeta`` must be admissible
    (see :func:`project_zeta`).
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    z = np.asarray(zeta, dtype=float)
    tau, nu = _split(z, l)
    omega = variance_target(u)
    targeted = c_h is None
    c_h = omega.copy() if c_h is None else np.broadcast_to(np.asarray(c_h, float), omega.shape).copy()
    h = garch_filter(u, tau, nu, omega, c_h)
    return GarchEstimate(
        l=l,
        k=k,
        zeta_hat=z,
        omega_hat=omega,
        varpi_hat=omega * (1.0 - z.sum()),
        h_hat=h,
        loglik=float(np.sum(unit_logliks(tau, nu, omega, u, c_h))),
        converged=True,
        c_h=c_h,
        boundary=_on_boundary(tau, nu, PERSISTENCE_MARGIN),
        c_h_targeted=targeted,
        message="parameters supplied",
    )


def c_h_sensitivity(residuals, estimate: GarchEstimate, factors=(0.5, 2.0), options=None):
    """Largest change in ``zeta_hat`` when the pre-sample variance is rescaled.

    The pre-sample constant ``c_h`` is a convention rather than a parameter,
    so its influence is reported instead of removed: the model is refitted
    with ``c_h`` multiplied by each factor (warm-started at the original
    estimate) and the maximum absolute coordinate change is returned. Values
    that are large relative to the standard errors indicate the first
    periods carry much of the information about ``zeta``.
    """
    worst = 0.0
    for factor in factors:
        refit = fit_garch(
            residuals,
            estimate.l,
            estimate.k,
            options,
            c_h=factor * estimate.c_h,
            start=estimate.zeta_hat,
        )
        worst = max(worst, float(np.max(np.abs(refit.zeta_hat - estimate.zeta_hat))))
    return worst
