"""
Linear-quadratic forms ``LQ = V'MV + b'V`` in block-independent innovations.

``V`` stacks ``N`` independent blocks ``v_i = (v_i1, ..., v_iT)``; each block
is a stationary, uncorrelated sequence (martingale differences in the
intended use). ``M`` is stored as a dictionary of nonzero ``T x T`` blocks
``M_ij``, with a dense fallback for small problems.

The exact mean and variance of ``LQ`` depend on the innovations through a
:class:`MomentProfile`: ``sigma^2 = E v^2``, ``pi = E v^3``, ``rho4 = E v^4`` and
the lag-indexed cross moments

* ``varsigma(d) = Cov(v_t^2, v_{t-d}^2)``,
* ``vartheta(d1, d2) = E(v_t^2 v_{t-d1} v_{t-d2})``,
* ``varrho(d) = E(v_t^3 v_{t-d})``,
* ``pi(d) = E(v_t^2 v_{t-d})``,

indexed by signed lags (``d > 0`` means an earlier period). For martingale
differences only positive lags can be nonzero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from pagarch import kernels
from pagarch.errors import ParameterError
from pagarch.model import Innovation, innovation_draws, spawn

log = logging.getLogger(__name__)

__all__ = [
    "CLTResult",
    "ConditionReport",
    "GarchInnovations",
    "IIDInnovations",
    "LQProblem",
    "MomentProfile",
    "centering_block",
    "check_conditions",
    "clt_montecarlo",
    "estimate_profile",
    "garch11_profile",
    "iid_profile",
    "lq_mean",
    "lq_variance",
]

DEFAULT_MAX_GAP = 200


# ----------------------------------------------------------- innovations


@dataclass(frozen=True)
class IIDInnovations:
    """I.i.d. innovations scaled per unit by ``sqrt(sigma2)``.

    ``kind`` is ``"normal"``, ``"t"`` (standardized, needs ``df``) or
    ``"discrete"`` (``values`` with ``probs``, used as given).
    """

    kind: str = "normal"
    df: float = None
    values: tuple = None
    probs: tuple = None
    sigma2: float = 1.0

    def __post_init__(self):
        if self.kind == "discrete":
            v = np.asarray(self.values, float)
            p = np.asarray(self.probs, float)
            if v.shape != p.shape or abs(p.sum() - 1) > 1e-12 or np.any(p < 0):
                raise ParameterError("discrete innovations need matching values/probs")
            if abs(p @ v) > 1e-12:
                raise ParameterError("discrete innovations must have mean zero")
        elif self.kind in ("normal", "t"):
            Innovation(self.kind, self.df)
        else:
            raise ParameterError(f"unknown innovation kind {self.kind!r}")

    def draw(self, rng, n_units, n_periods):
        size = (n_units, n_periods)
        if self.kind == "discrete":
            out = rng.choice(np.asarray(self.values, float), size=size, p=self.probs)
        else:
            out = innovation_draws(rng, Innovation(self.kind, self.df), size)
        return out * np.sqrt(self.sigma2)

    def profile(self, n_units=1):
        if self.kind == "discrete":
            v = np.asarray(self.values, float)
            p = np.asarray(self.probs, float)
            m2, m3, m4 = (p @ v**2, p @ v**3, p @ v**4)
        elif self.kind == "normal":
            m2, m3, m4 = 1.0, 0.0, 3.0
        else:
            m2, m3, m4 = 1.0, 0.0, Innovation("t", self.df).fourth_moment
        s = self.sigma2
        return iid_profile(
            np.full(n_units, m2 * s), np.full(n_units, m3 * s**1.5), np.full(n_units, m4 * s**2)
        )


@dataclass(frozen=True)
class GarchInnovations:
    """Stationary GARCH(L,K) innovations ``v_t = sqrt(h_t) eps_t`` per unit."""

    omega: tuple
    tau: tuple = (0.2,)
    nu: tuple = (0.4,)
    innovation: Innovation = Innovation()
    burn_in: int = 500

    def draw(self, rng, n_units, n_periods):
        omega = np.broadcast_to(np.asarray(self.omega, float), (n_units,))
        total = n_periods + self.burn_in
        eps = innovation_draws(rng, self.innovation, (n_units, total))
        zeros = np.zeros((n_units, total))
        _, u, _ = kernels.simulate_arma_garch(
            eps,
            zeros,
            np.zeros(n_units),
            np.zeros(0),
            np.zeros(0),
            omega,
            np.asarray(self.tau, float),
            np.asarray(self.nu, float),
        )
        return u[:, self.burn_in :]

    def profile(self, n_units=1, max_gap=DEFAULT_MAX_GAP):
        if len(self.tau) != 1 or len(self.nu) != 1:
            raise ParameterError("closed-form profile only for GARCH(1,1); use estimate_profile")
        omega = np.broadcast_to(np.asarray(self.omega, float), (n_units,))
        return garch11_profile(
            self.tau[0], self.nu[0], omega, self.innovation.fourth_moment, max_gap
        )


# -------------------------------------------------------- moment profile


@dataclass
class MomentProfile:
    """Innovation moments needed by :func:`lq_variance`.

    Scalar moments are length-N arrays. Cross-moment tables have a leading
    unit axis of length N or 1 (shared) and are indexed by signed lag
    ``d + max_gap``; ``None`` means identically zero. ``varsigma`` is even in
    ``d``; ``vartheta`` is indexed ``[unit, d1 + G, d2 + G]``.
    """

    sigma2: np.ndarray
    pi3: np.ndarray
    rho4: np.ndarray
    max_gap: int = 0
    varsigma: np.ndarray = None
    vartheta: np.ndarray = None
    varrho: np.ndarray = None
    pi_cross: np.ndarray = None

    def __post_init__(self):
        self.sigma2 = np.atleast_1d(np.asarray(self.sigma2, float))
        self.pi3 = np.broadcast_to(np.asarray(self.pi3, float), self.sigma2.shape)
        self.rho4 = np.broadcast_to(np.asarray(self.rho4, float), self.sigma2.shape)
        if np.any(self.rho4 < self.sigma2**2 * (1 - 1e-12)):
            raise ParameterError("E v^4 must be at least (E v^2)^2")

    @property
    def n_units(self):
        return self.sigma2.size

    def _row(self, table, i):
        return table[0] if table.shape[0] == 1 else table[i]

    def lag_values(self, name, i, lags):
        """Table lookup with zeros beyond ``max_gap``."""
        table = getattr(self, name)
        lags = np.asarray(lags)
        if table is None:
            return np.zeros(lags.shape)
        g = self.max_gap
        row = self._row(table, i)
        inside = np.abs(lags) <= g
        out = np.zeros(lags.shape)
        out[inside] = row[lags[inside] + g]
        return out

    def triple_values(self, i, d1, d2):
        if self.vartheta is None:
            return np.zeros(np.broadcast(d1, d2).shape)
        g = self.max_gap
        d1, d2 = np.broadcast_arrays(d1, d2)
        row = self._row(self.vartheta, i)
        inside = (np.abs(d1) <= g) & (np.abs(d2) <= g)
        out = np.zeros(d1.shape)
        out[inside] = row[d1[inside] + g, d2[inside] + g]
        return out


def iid_profile(sigma2, pi3=0.0, rho4=None) -> MomentProfile:
    sigma2 = np.atleast_1d(np.asarray(sigma2, float))
    rho4 = 3.0 * sigma2**2 if rho4 is None else rho4
    return MomentProfile(sigma2, pi3, rho4)


def garch11_profile(tau, nu, omega, kappa=3.0, max_gap=DEFAULT_MAX_GAP) -> MomentProfile:
    """Closed-form profile for GARCH(1,1) with symmetric standardized innovations.

    With ``varpi = omega (1 - tau - nu)``,

    ``E u^4 = kappa varpi^2 (1 + tau + nu) / ((1 - tau - nu)(1 - nu^2 - 2 tau nu - kappa tau^2))``

    and the autocorrelations of ``u^2`` are ``rho_1 = tau (1 - tau nu - nu^2) /
    (1 - 2 tau nu - nu^2)``, ``rho_d = rho_1 (tau + nu)^(d-1)``. Symmetry makes
    the third-order moments vanish.
    """
    omega = np.atleast_1d(np.asarray(omega, float))
    denom = 1.0 - nu**2 - 2.0 * tau * nu - kappa * tau**2
    if denom <= 0:
        raise ParameterError("GARCH parameters imply an infinite fourth moment")
    varpi = omega * (1.0 - tau - nu)
    m4 = kappa * varpi**2 * (1.0 + tau + nu) / ((1.0 - tau - nu) * denom)
    rho1 = tau * (1.0 - tau * nu - nu**2) / (1.0 - 2.0 * tau * nu - nu**2)
    lags = np.arange(-max_gap, max_gap + 1)
    acf = np.where(lags == 0, 1.0, rho1 * (tau + nu) ** (np.abs(lags) - 1.0))
    varsigma = (m4 - omega**2)[:, None] * acf[None, :]
    return MomentProfile(omega, 0.0, m4, max_gap, varsigma=varsigma)


def estimate_profile(paths, max_gap=20, max_gap_triple=5, shared=True) -> MomentProfile:
    """Sample moment profile from long simulated paths (one row per unit).

    With ``shared=True`` rows are pooled into a single profile (units are
    identically distributed up to the sampled values).
    """
    v = np.atleast_2d(np.asarray(paths, float))
    n, t = v.shape
    if t <= 2 * max_gap:
        raise ParameterError("paths too short for the requested lags")
    rows = [v.ravel()[None, :]] if shared else [v[i : i + 1] for i in range(n)]
    g = max_gap
    out = {k: [] for k in ("s2", "m3", "m4", "vs", "vr", "pc", "vt")}
    for r in rows:
        x = r.reshape(-1, t) if shared else r
        x2 = x * x
        s2 = x2.mean()
        vs = np.zeros(2 * g + 1)
        vr = np.zeros(2 * g + 1)
        pc = np.zeros(2 * g + 1)
        for d in range(-g, g + 1):
            if d == 0:
                continue
            a, b = _lag_pair(x, d)
            a2, b2 = a * a, b * b
            vs[d + g] = np.mean(a2 * b2) - s2 * s2
            vr[d + g] = np.mean(a2 * a * b)
            pc[d + g] = np.mean(a2 * b)
        gt = max_gap_triple
        vt = np.zeros((2 * g + 1, 2 * g + 1))
        for d1 in range(1, gt + 1):
            for d2 in range(1, gt + 1):
                if d1 == d2:
                    continue
                m = max(d1, d2)
                vt[d1 + g, d2 + g] = np.mean(x2[:, m:] * x[:, m - d1 : t - d1] * x[:, m - d2 : t - d2])
        out["s2"].append(s2)
        out["m3"].append(np.mean(x2 * x))
        out["m4"].append(np.mean(x2 * x2))
        out["vs"].append(vs)
        out["vr"].append(vr)
        out["pc"].append(pc)
        out["vt"].append(vt)
    size = n if not shared else 1
    return MomentProfile(
        np.repeat(out["s2"], n // size),
        np.repeat(out["m3"], n // size),
        np.repeat(out["m4"], n // size),
        g,
        varsigma=np.array(out["vs"]),
        vartheta=np.array(out["vt"]),
        varrho=np.array(out["vr"]),
        pi_cross=np.array(out["pc"]),
    )


def _lag_pair(x, d):
    """Aligned ``(v_t, v_{t-d})`` samples for signed lag ``d``."""
    if d > 0:
        return x[:, d:], x[:, :-d]
    return x[:, :d], x[:, -d:]


# --------------------------------------------------------------- problem


@dataclass
class LQProblem:
    """``V'MV + b'V`` with ``M`` as ``{(i, j): T x T}`` blocks and ``b`` as N x T."""

    n_units: int
    n_periods: int
    blocks: dict = field(default_factory=dict)
    b: np.ndarray = None
    innovations: object = None

    def __post_init__(self):
        t = self.n_periods
        clean = {}
        for (i, j), m in self.blocks.items():
            m = np.asarray(m, float)
            if m.shape != (t, t):
                raise ParameterError(f"block {(i, j)} has shape {m.shape}, expected {(t, t)}")
            if not (0 <= i < self.n_units and 0 <= j < self.n_units):
                raise ParameterError(f"block index {(i, j)} out of range")
            clean[(int(i), int(j))] = m
        self.blocks = clean
        self.b = (
            np.zeros((self.n_units, t))
            if self.b is None
            else np.asarray(self.b, float).reshape(self.n_units, t)
        )

    @classmethod
    def from_dense(cls, m, n_units, n_periods, b=None, innovations=None):
        m = np.asarray(m, float)
        t = n_periods
        if m.shape != (n_units * t, n_units * t):
            raise ParameterError("dense M has the wrong shape")
        blocks = {}
        for i in range(n_units):
            for j in range(n_units):
                blk = m[i * t : (i + 1) * t, j * t : (j + 1) * t]
                if np.any(blk):
                    blocks[(i, j)] = blk.copy()
        return cls(n_units, n_periods, blocks, b, innovations)

    @classmethod
    def blockwise(cls, block, n_units, b=None, innovations=None):
        """Block-diagonal ``M`` with the same ``T x T`` block for every unit."""
        block = np.asarray(block, float)
        return cls(
            n_units, block.shape[0], {(i, i): block for i in range(n_units)}, b, innovations
        )

    def to_dense(self):
        t = self.n_periods
        out = np.zeros((self.n_units * t, self.n_units * t))
        for (i, j), m in self.blocks.items():
            out[i * t : (i + 1) * t, j * t : (j + 1) * t] = m
        return out

    def diagonal_block(self, i):
        return self.blocks.get((i, i), np.zeros((self.n_periods, self.n_periods)))

    def evaluate(self, v):
        """LQ values for a batch of draws ``v`` with shape (R, N, T) or (N, T)."""
        v = np.asarray(v, float)
        single = v.ndim == 2
        v = v[None] if single else v
        out = np.einsum("rnt,nt->r", v, self.b)
        for (i, j), m in self.blocks.items():
            out += np.einsum("rt,ts,rs->r", v[:, i], m, v[:, j])
        return out[0] if single else out


def centering_block(n_periods):
    """``I_T - l l' / T``."""
    return np.eye(n_periods) - np.full((n_periods, n_periods), 1.0 / n_periods)


# --------------------------------------------------------- mean/variance


def lq_mean(problem: LQProblem, profile: MomentProfile) -> float:
    """``sum_i sigma_i^2 tr(M_ii)``."""
    _check_profile(problem, profile)
    return float(
        sum(
            profile.sigma2[_unit(profile, i)] * np.trace(m)
            for (i, j), m in problem.blocks.items()
            if i == j
        )
    )


def _check_profile(problem, profile):
    if profile.n_units not in (1, problem.n_units):
        raise ParameterError("profile and problem disagree on N")


def _unit(profile, i):
    return 0 if profile.n_units == 1 else i


def lq_variance(problem: LQProblem, profile: MomentProfile, max_gap=DEFAULT_MAX_GAP) -> float:
    """Exact variance of ``V'MV + b'V``.

    Cross moments at lags beyond ``min(T - 1, max_gap)`` are treated as zero;
    when the profile is nonzero at the truncation lag this is logged together
    with the size of the last included term.
    """
    _check_profile(problem, profile)
    t = problem.n_periods
    lag = np.arange(t)[:, None] - np.arange(t)[None, :]
    keep = (lag != 0) & (np.abs(lag) <= max_gap)
    total = 0.0
    for i in range(problem.n_units):
        u = _unit(profile, i)
        s2, p3, r4 = profile.sigma2[u], profile.pi3[u], profile.rho4[u]
        m = problem.diagonal_block(i)
        b = problem.b[i]
        dm = np.diag(m)
        sym = m + m.T
        total += np.sum((r4 - 3.0 * s2 * s2) * dm**2) + 2.0 * p3 * np.sum(b * dm)
        if profile.varsigma is not None:
            vs = profile.lag_values("varsigma", u, lag) * keep
            total += np.sum((np.outer(dm, dm) + m * m + m * m.T) * vs)
        if profile.varrho is not None:
            vr = profile.lag_values("varrho", u, lag) * keep
            total += 2.0 * np.sum(dm[:, None] * sym * vr)
        if profile.pi_cross is not None:
            pc = profile.lag_values("pi_cross", u, lag) * keep
            total += 2.0 * np.sum((dm[:, None] * b[None, :] + sym * b[:, None]) * pc)
        if profile.vartheta is not None:
            d1 = lag[:, :, None]
            d2 = lag[:, None, :]
            mask = keep[:, :, None] & keep[:, None, :] & (d1 != d2)
            th = profile.triple_values(u, d1, d2) * mask
            weight = 2.0 * dm[:, None, None] * m[None, :, :] + sym[:, :, None] * sym[:, None, :]
            total += np.sum(weight * th)
        total += s2 * float(b @ b)
    for (i, j), m in problem.blocks.items():
        si = profile.sigma2[_unit(profile, i)]
        sj = profile.sigma2[_unit(profile, j)]
        mt = problem.blocks.get((j, i))
        cross = np.sum(m * m) + (np.sum(m * mt.T) if mt is not None else 0.0)
        total += si * sj * cross
    if t - 1 > max_gap and profile.varsigma is not None:
        tail = np.max(np.abs(profile.lag_values("varsigma", 0, np.array([max_gap]))))
        log.info("cross moments truncated at lag %d (last included |varsigma| = %.3g)", max_gap, tail)
    return float(total)


# ------------------------------------------------------------ conditions


@dataclass
class ConditionReport:
    max_row_sum: float
    max_col_sum: float
    sup_b2: float
    diag_square_mean: float
    diag_variation: float
    far_mass: float
    chi: int
    passed: dict = field(default_factory=dict)


def check_conditions(problem: LQProblem, chi: int = None, thresholds: dict = None) -> ConditionReport:
    """Finite-T diagnostics for the boundedness and matrix conditions.

    Reports the largest absolute row and column sums of ``M``, ``sup b^2`` and,
    maximized over units, ``T^{-1} sum_t m_tt^2`` (``diag_square_mean``),
    the largest ``T^{-1} sum_t |m_{t,t-k} - m_{t-1,t-k-1}|`` over lags ``k``
    (``diag_variation``) and ``T^{-1} sum_{|t-s| >= chi} m_ts^2`` (``far_mass``).
    ``thresholds`` maps any of these field names to an upper bound; each
    supplied bound yields a pass/fail entry in ``passed``.
    """
    t = problem.n_periods
    chi = max(1, t // 4) if chi is None else int(chi)
    n = problem.n_units
    rows = np.zeros((n, t))
    cols = np.zeros((n, t))
    for (i, j), m in problem.blocks.items():
        a = np.abs(m)
        rows[i] += a.sum(axis=1)
        cols[j] += a.sum(axis=0)
    lag = np.abs(np.arange(t)[:, None] - np.arange(t)[None, :])
    stat_a = stat_b = stat_c = 0.0
    for i in range(n):
        m = problem.diagonal_block(i)
        stat_a = max(stat_a, float(np.sum(np.diag(m) ** 2) / t))
        for k in range(1, t - 1):
            stat_b = max(stat_b, float(np.sum(np.abs(np.diff(np.diag(m, -k)))) / t))
        stat_c = max(stat_c, float(np.sum(m[lag >= chi] ** 2) / t))
    report = ConditionReport(
        max_row_sum=float(rows.max()),
        max_col_sum=float(cols.max()),
        sup_b2=float(np.max(problem.b**2)),
        diag_square_mean=stat_a,
        diag_variation=stat_b,
        far_mass=stat_c,
        chi=chi,
    )
    for key, bound in (thresholds or {}).items():
        if not hasattr(report, key) or key in ("passed", "chi"):
            raise ParameterError(f"unknown condition statistic {key!r}")
        report.passed[key] = bool(getattr(report, key) <= bound)
    return report


# ------------------------------------------------------------------- CLT


@dataclass
class CLTResult:
    standardized: np.ndarray
    mean: float
    variance: float
    ks_distance: float
    ks_pvalue: float
    skewness: float
    excess_kurtosis: float


def clt_montecarlo(
    problem: LQProblem,
    replications: int = 10_000,
    seed=0,
    profile: MomentProfile = None,
    batch: int = 500,
) -> CLTResult:
    """Standardized Monte Carlo sample of ``(LQ - mu_LQ) / sigma_LQ``.

    Replication ``r`` draws from its own stream ``spawn(seed, r)``, so a longer
    run extends a shorter one with the same seed.
    """
    if replications < 1000:
        raise ParameterError("need at least 1000 replications")
    if problem.innovations is None:
        raise ParameterError("problem has no innovation spec")
    if profile is None:
        profile = problem.innovations.profile(problem.n_units)
    mu = lq_mean(problem, profile)
    sd = np.sqrt(lq_variance(problem, profile))
    values = np.empty(replications)
    for start in range(0, replications, batch):
        stop = min(start + batch, replications)
        v = np.stack(
            [
                problem.innovations.draw(
                    np.random.default_rng(spawn(seed, r)), problem.n_units, problem.n_periods
                )
                for r in range(start, stop)
            ]
        )
        values[start:stop] = problem.evaluate(v)
    z = (values - mu) / sd
    ks = stats.kstest(z, "norm")
    return CLTResult(
        standardized=z,
        mean=float(z.mean()),
        variance=float(z.var(ddof=1)),
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        skewness=float(stats.skew(z)),
        excess_kurtosis=float(stats.kurtosis(z)),
    )
