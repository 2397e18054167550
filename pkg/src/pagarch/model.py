"""
Panel ARMA(P,Q)-GARCH(L,K) data model.

Containers for panels and parameters, root checks, the feasible residual and
variance recursions (zero pre-sample values for ``y`` and ``u``, ``c_h`` for
``h``), and the data-generating simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pagarch import kernels
from pagarch.errors import PanelDataError, ParameterError

ROOT_MARGIN = 1e-8
COMMON_ROOT_TOL = 1e-6
PERSISTENCE_MARGIN = 1e-6

__all__ = [
    "ArmaParams",
    "ArmaValidity",
    "GarchParams",
    "Innovation",
    "ModelOrders",
    "PanelData",
    "VolatilityState",
    "arma_transform",
    "garch_filter",
    "garch_params_ok",
    "innovation_draws",
    "lagged",
    "residual_filter",
    "seed_sequence",
    "simulate",
    "spawn",
    "validate_arma",
]


@dataclass(frozen=True)
class ModelOrders:
    """Lag orders ``(P, Q, L, K)`` and regressor dimension ``D_x``."""

    p: int = 1
    q: int = 1
    l: int = 1
    k: int = 1
    dx: int = 0

    def __post_init__(self):
        for name in ("p", "q", "l", "k", "dx"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ParameterError(f"order {name} must be a nonnegative integer")
        if self.k >= 1 and self.l == 0:
            raise ParameterError("K >= 1 requires L >= 1 (zeta is unidentified)")

    @classmethod
    def parse(cls, text: str, dx: int = 0) -> "ModelOrders":
        """Parse ``"P,Q,L,K"``."""
        parts = [s.strip() for s in str(text).split(",")]
        if len(parts) != 4:
            raise ParameterError(f"orders must look like P,Q,L,K, got {text!r}")
        try:
            p, q, l, k = (int(s) for s in parts)
        except ValueError:
            raise ParameterError(f"orders must be integers, got {text!r}") from None
        return cls(p, q, l, k, dx)

    @property
    def n_lambda(self) -> int:
        return self.dx + self.p + self.q

    @property
    def n_zeta(self) -> int:
        return self.l + self.k

    @property
    def max_lag(self) -> int:
        return max(self.p, self.q, self.l, self.k)

    def lambda_names(self) -> list[str]:
        return (
            [f"beta{j + 1}" for j in range(self.dx)]
            + [f"phi{j + 1}" for j in range(self.p)]
            + [f"psi{j + 1}" for j in range(self.q)]
        )

    def zeta_names(self) -> list[str]:
        return [f"tau{j + 1}" for j in range(self.l)] + [
            f"nu{j + 1}" for j in range(self.k)
        ]

    def split_lambda(self, lam):
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.n_lambda,):
            raise ParameterError(
                f"lambda must have length {self.n_lambda}, got {lam.shape}"
            )
        beta = lam[: self.dx]
        phi = lam[self.dx : self.dx + self.p]
        psi = lam[self.dx + self.p :]
        return beta, phi, psi

    def split_zeta(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (self.n_zeta,):
            raise ParameterError(f"zeta must have length {self.n_zeta}, got {zeta.shape}")
        return zeta[: self.l], zeta[self.l :]


@dataclass(frozen=True)
class PanelData:
    """Balanced panel: ``y`` is N x T, ``x`` is N x T x D_x (D_x may be 0)."""

    y: np.ndarray
    x: np.ndarray = None
    unit_ids: tuple = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim == 1:
            y = y[None, :]
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise PanelDataError(f"y must be a nonempty N x T matrix, got shape {y.shape}")
        if self.x is None:
            x = np.zeros(y.shape + (0,))
        else:
            x = np.array(self.x, dtype=float)
            if x.ndim == 2 and y.shape[0] == 1 and x.shape[0] == y.shape[1]:
                x = x[None, :, :]
            if x.ndim == 2:
                x = x[:, :, None]
            if x.shape[:2] != y.shape:
                raise PanelDataError(
                    f"x has leading shape {x.shape[:2]}, expected {y.shape}"
                )
        if not np.all(np.isfinite(y)):
            i, t = np.argwhere(~np.isfinite(y))[0]
            raise PanelDataError(f"non-finite y at unit {i}, period {t}")
        if not np.all(np.isfinite(x)):
            i, t, _ = np.argwhere(~np.isfinite(x))[0]
            raise PanelDataError(f"non-finite x at unit {i}, period {t}")
        ids = self.unit_ids
        if ids is None:
            ids = tuple(str(i) for i in range(y.shape[0]))
        elif len(ids) != y.shape[0]:
            raise PanelDataError("unit_ids length does not match N")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "unit_ids", tuple(ids))

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def n_periods(self) -> int:
        return self.y.shape[1]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[2]

    def check_orders(self, orders: ModelOrders) -> None:
        if orders.dx != self.n_regressors:
            raise PanelDataError(
                f"panel has D_x={self.n_regressors} regressors, orders say {orders.dx}"
            )
        if self.n_periods < orders.max_lag + 2:
            raise PanelDataError(
                f"T={self.n_periods} too short for orders (need >= {orders.max_lag + 2})"
            )

    def periods(self, start: int, stop: int) -> "PanelData":
        """Sub-panel for periods ``start:stop`` (treated as a fresh sample)."""
        return PanelData(self.y[:, start:stop], self.x[:, start:stop], self.unit_ids)

    def units(self, index) -> "PanelData":
        index = np.atleast_1d(index)
        return PanelData(
            self.y[index], self.x[index], tuple(self.unit_ids[i] for i in index)
        )


@dataclass(frozen=True)
class ArmaParams:
    mu: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("mu", "beta", "phi", "psi"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )

    @property
    def lam(self) -> np.ndarray:
        return np.concatenate([self.beta, self.phi, self.psi])


@dataclass(frozen=True)
class GarchParams:
    omega: np.ndarray
    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("omega", "tau", "nu"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )

    @property
    def zeta(self) -> np.ndarray:
        return np.concatenate([self.tau, self.nu])

    @property
    def persistence(self) -> float:
        return float(self.tau.sum() + self.nu.sum())

    @property
    def varpi(self) -> np.ndarray:
        return self.omega * (1.0 - self.persistence)

    def validate(self, margin: float = PERSISTENCE_MARGIN) -> None:
        if np.any(self.omega <= 0):
            raise ParameterError("omega must be positive")
        if not garch_params_ok(self.tau, self.nu, margin):
            raise ParameterError(
                "need tau >= 0, nu >= 0 and sum(tau) + sum(nu) <= 1 - margin"
            )


@dataclass(frozen=True)
class VolatilityState:
    u: np.ndarray
    h: np.ndarray
    c_h: np.ndarray


def garch_params_ok(tau, nu, margin: float = PERSISTENCE_MARGIN) -> bool:
    tau = np.asarray(tau, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return bool(
        np.all(tau >= 0) and np.all(nu >= 0) and tau.sum() + nu.sum() <= 1 - margin
    )


# ---------------------------------------------------------------- roots


def _reciprocal_roots(coefs, sign):
    """Reciprocal roots of ``1 + sign * sum_j coefs_j z^j``.

    Trailing zero coefficients are dropped so a zero leading lag does not show
    up as a root at infinity.
    """
    coefs = np.trim_zeros(np.asarray(coefs, dtype=float), "b")
    if coefs.size == 0:
        return np.zeros(0, dtype=complex)
    if coefs.size == 1:
        return np.array([-sign * coefs[0]], dtype=complex)
    return np.roots(np.concatenate([[1.0], sign * coefs])).astype(complex)


def ar_ok(phi, margin: float = ROOT_MARGIN) -> bool:
    """All roots of ``1 - sum phi_p z^p`` outside ``|z| <= 1 + margin``."""
    r = _reciprocal_roots(phi, -1.0)
    return bool(np.all(np.abs(r) * (1.0 + margin) < 1.0))


def ma_ok(psi, margin: float = ROOT_MARGIN) -> bool:
    """All roots of ``1 + sum psi_q z^q`` outside ``|z| <= 1 + margin``."""
    r = _reciprocal_roots(psi, 1.0)
    return bool(np.all(np.abs(r) * (1.0 + margin) < 1.0))


@dataclass(frozen=True)
class ArmaValidity:
    valid: bool
    reason: str = ""
    roots: tuple = ()

    def __bool__(self):
        return self.valid


def validate_arma(phi, psi, margin: float = ROOT_MARGIN) -> ArmaValidity:
    """Check stationarity, invertibility and absence of common roots.

    Roots are reported on the ``z`` scale of ``phi(z)`` and ``psi(z)``.
    """
    rphi = _reciprocal_roots(phi, -1.0)
    rpsi = _reciprocal_roots(psi, 1.0)
    with np.errstate(divide="ignore"):
        zphi = 1.0 / rphi
        zpsi = 1.0 / rpsi
    bad = tuple(zphi[np.abs(rphi) * (1.0 + margin) >= 1.0])
    if bad:
        return ArmaValidity(False, "AR polynomial has a root inside the unit disk", bad)
    bad = tuple(zpsi[np.abs(rpsi) * (1.0 + margin) >= 1.0])
    if bad:
        return ArmaValidity(False, "MA polynomial has a root inside the unit disk", bad)
    common = []
    for a in zphi:
        for b in zpsi:
            if abs(a - b) <= COMMON_ROOT_TOL * max(abs(a), abs(b)):
                common.append(a)
    if common:
        return ArmaValidity(False, "AR and MA polynomials share a root", tuple(common))
    return ArmaValidity(True)


def max_root_modulus(phi, psi) -> float:
    """Largest reciprocal-root modulus of the AR and MA polynomials."""
    r = np.concatenate([_reciprocal_roots(phi, -1.0), _reciprocal_roots(psi, 1.0)])
    return float(np.max(np.abs(r))) if r.size else 0.0


# ----------------------------------------------------------- recursions


def lagged(a, lag):
    """``a[:, t - lag]`` with zeros for ``t < lag``."""
    out = np.zeros_like(a)
    if lag < a.shape[1]:
        out[:, lag:] = a[:, :-lag]
    return out


def arma_transform(panel: PanelData, beta, phi) -> np.ndarray:
    """``V_{phi,beta}``: ``y_it - x_it'beta - sum_p phi_p y_{i,t-p}``, zero pre-sample."""
    y = panel.y
    w = y - panel.x @ np.asarray(beta, dtype=float) if panel.n_regressors else y.copy()
    for p, c in enumerate(np.atleast_1d(phi), start=1):
        if p < y.shape[1]:
            w[:, p:] -= c * y[:, :-p]
    return w


def residual_filter(panel: PanelData, params: ArmaParams) -> np.ndarray:
    """Feasible residuals ``u_hat`` of the ARMA equation (zero initial values)."""
    if params.mu.shape != (panel.n_units,):
        raise PanelDataError(f"mu has shape {params.mu.shape}, expected ({panel.n_units},)")
    if params.beta.shape != (panel.n_regressors,):
        raise PanelDataError(
            f"beta has length {params.beta.size}, panel has {panel.n_regressors} regressors"
        )
    w = arma_transform(panel, params.beta, params.phi) - params.mu[:, None]
    if params.psi.size == 0:
        return w
    return kernels.ma_filter(w, params.psi)


def garch_filter(u, tau, nu, omega, c_h) -> np.ndarray:
    """Feasible conditional variances under variance targeting.

    ``h_it = omega_i (1 - sum tau - sum nu) + sum tau_l u_{i,t-l}^2 +
    sum nu_k h_{i,t-k}`` with ``u = 0`` and ``h = c_h`` before the sample.
    ``c_h`` may be a scalar or a per-unit vector.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = u.shape[0]
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (n,))
    c_h = np.broadcast_to(np.asarray(c_h, dtype=float), (n,))
    if np.any(omega <= 0):
        raise ParameterError("omega must be positive")
    if np.any(c_h <= 0):
        raise ParameterError("c_h must be positive")
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if not garch_params_ok(tau, nu):
        raise ParameterError("need tau, nu >= 0 with sum(tau) + sum(nu) <= 1 - 1e-6")
    intercept = omega * (1.0 - tau.sum() - nu.sum())
    return kernels.garch_variance(u * u, intercept, tau, nu, c_h)


# ------------------------------------------------------------ simulator


@dataclass(frozen=True)
class Innovation:
    """Unit-variance innovation law: ``"normal"`` or standardized Student-t."""

    kind: str = "normal"
    df: float = None

    def __post_init__(self):
        if self.kind not in ("normal", "t"):
            raise ParameterError(f"unknown innovation kind {self.kind!r}")
        if self.kind == "t" and (self.df is None or self.df <= 4):
            raise ParameterError("Student-t innovations need df > 4 (finite 4+delta moment)")

    @property
    def fourth_moment(self) -> float:
        if self.kind == "normal":
            return 3.0
        return 3.0 + 6.0 / (self.df - 4.0)


def innovation_draws(rng: np.random.Generator, innovation: Innovation, size):
    if innovation.kind == "normal":
        return rng.standard_normal(size)
    df = innovation.df
    return rng.standard_t(df, size) * np.sqrt((df - 2.0) / df)


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def spawn(seed, *key) -> np.random.SeedSequence:
    """Child stream addressed by ``key``; independent of any spawn history."""
    ss = seed_sequence(seed)
    return np.random.SeedSequence(
        ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key)
    )


def simulate(
    orders: ModelOrders,
    arma: ArmaParams,
    garch: GarchParams,
    n_periods: int,
    innovation: Innovation = Innovation(),
    burn_in: int = 500,
    seed=0,
    x=None,
    return_state: bool = False,
):
    """Simulate a panel from the ARMA-GARCH model.

    Each unit draws from its own substream of ``seed`` so output does not
    depend on generation order. Pre-sample values are ``y = u = 0`` and
    ``h = omega_i``; the first ``burn_in`` periods are discarded. Regressors
    are standard normal unless ``x`` (N x T x D_x, retained periods only) is
    given, in which case burn-in regressors are drawn by resampling each
    unit's own rows.
    """
    n = arma.mu.size
    if burn_in < 0:
        raise ParameterError("burn_in must be >= 0")
    if garch.omega.shape != (n,):
        raise ParameterError("omega and mu must have one entry per unit")
    if (arma.beta.size, arma.phi.size, arma.psi.size) != (orders.dx, orders.p, orders.q):
        raise ParameterError("ARMA parameter lengths do not match the orders")
    if (garch.tau.size, garch.nu.size) != (orders.l, orders.k):
        raise ParameterError("GARCH parameter lengths do not match the orders")
    verdict = validate_arma(arma.phi, arma.psi)
    if not verdict:
        raise ParameterError(verdict.reason)
    garch.validate()
    total = n_periods + burn_in
    eps = np.empty((n, total))
    xs = np.empty((n, total, orders.dx))
    for i in range(n):
        rng = np.random.default_rng(spawn(seed, i))
        eps[i] = innovation_draws(rng, innovation, total)
        if x is None:
            xs[i] = rng.standard_normal((total, orders.dx))
        else:
            xi = np.asarray(x[i], dtype=float).reshape(n_periods, orders.dx)
            xs[i, burn_in:] = xi
            if burn_in:
                xs[i, :burn_in] = xi[rng.integers(0, n_periods, burn_in)]
    xb = xs @ arma.beta if orders.dx else np.zeros((n, total))
    y, u, h = kernels.simulate_arma_garch(
        eps, xb, arma.mu, arma.phi, arma.psi, garch.omega, garch.tau, garch.nu
    )
    panel = PanelData(y[:, burn_in:], xs[:, burn_in:])
    if not return_state:
        return panel
    c_h = h[:, burn_in - 1] if burn_in else garch.omega.copy()
    return panel, VolatilityState(u[:, burn_in:], h[:, burn_in:], c_h)
