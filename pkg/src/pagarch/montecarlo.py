"""
Monte Carlo harness for the panel ARMA(1,1)-GARCH(1,1) simulation design.

Each replication simulates a panel, fits the requested estimators and records
estimates and asymptotic standard deviations (AD). Replications are keyed by
``(seed, N, T, r)``, so cells are reproducible on their own, independent of
the grid they sit in and of the worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from pagarch.arma import fit_arma
from pagarch.errors import ConfigError, EstimationError, ParameterError
from pagarch.garch import fit_garch
from pagarch.io import parse_keyvalue
from pagarch.inference import (
    analytic_correct_arma,
    covariance_lambda,
    covariance_zeta,
    fixed_effect_inference,
    jackknife_arma,
    jackknife_garch,
)
from pagarch.model import ArmaParams, GarchParams, Innovation, ModelOrders, simulate, spawn

log = logging.getLogger(__name__)

__all__ = [
    "ESTIMATORS",
    "Cell",
    "CoverageReport",
    "DesignSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "config_from_mapping",
    "coverage_experiment",
    "mc_stderr",
    "parse_config",
    "config_to_dict",
    "render_tables",
    "replicate",
    "run_experiment",
]

ESTIMATORS = ("ls", "analytic", "jackknife", "vtqml", "garch-jackknife")
GARCH_ESTIMATORS = ("vtqml", "garch-jackknife")
GARCH_MIN_T = 30
MAX_FAILURE_SHARE = 0.05
ORDERS = ModelOrders(1, 1, 1, 1, 1)
LAMBDA_NAMES = ("beta", "phi", "psi")
ZETA_NAMES = ("tau", "nu")
_FAILURES = (EstimationError, ParameterError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class DesignSpec:
    """Data-generating process: one regressor, ARMA(1,1) mean, GARCH(1,1) variance.

    ``mu_i ~ N(0, mu_sd^2)``, ``omega_i ~ U(omega_low, omega_high)``,
    ``x ~ N(0, 1)``. ``burn_in = 0`` starts every series at ``y = u = 0`` and
    ``h = omega_i``, the same convention the estimators use.
    """

    beta: float = 3.0
    phi: float = 0.3
    psi: float = 0.3
    tau: float = 0.2
    nu: float = 0.4
    mu_sd: float = 1.0
    omega_low: float = 1.0
    omega_high: float = 3.0
    innovation: str = "normal"
    df: float = None
    burn_in: int = 0

    @property
    def lam(self):
        return np.array([self.beta, self.phi, self.psi])

    @property
    def zeta(self):
        return np.array([self.tau, self.nu])

    def draw(self, n_units, n_periods, seed):
        """Unit effects and a simulated panel for one replication."""
        rng = np.random.default_rng(spawn(seed, 0))
        mu = self.mu_sd * rng.standard_normal(n_units)
        omega = rng.uniform(self.omega_low, self.omega_high, n_units)
        arma = ArmaParams(mu, [self.beta], [self.phi], [self.psi])
        garch = GarchParams(omega, [self.tau], [self.nu])
        panel = simulate(
            ORDERS,
            arma,
            garch,
            n_periods,
            Innovation(self.innovation, self.df),
            burn_in=self.burn_in,
            seed=spawn(seed, 1),
        )
        return panel, arma, garch


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid, replication count, design and estimator settings.

    ``analytic_presample="auto"`` matches the bootstrap start to the design
    (zero pre-sample values when ``burn_in = 0``, stationary otherwise).
    """

    grid: tuple = ((50, 100),)
    replications: int = 200
    design: DesignSpec = field(default_factory=DesignSpec)
    estimators: tuple = ESTIMATORS
    seed: int = 20240601
    workers: int = 1
    bootstrap_reps: int = 200
    analytic_presample: str = "auto"
    lambda_source: str = "jackknife"
    half_first_step: str = "slice"

    def __post_init__(self):
        if self.replications < 50:
            raise ConfigError("replications must be at least 50")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators {sorted(bad)}")
        for n, t in self.grid:
            if n < 1 or t < 2 * (ORDERS.p + ORDERS.q + 5):
                raise ConfigError(f"grid point (N={n}, T={t}) too small")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.analytic_presample not in ("auto", "zero", "stationary"):
            raise ConfigError(f"unknown analytic_presample {self.analytic_presample!r}")
        if self.lambda_source not in ("jackknife", "analytic", "none"):
            raise ConfigError(f"unknown lambda_source {self.lambda_source!r}")
        if self.half_first_step not in ("slice", "full", "refit"):
            raise ConfigError(f"unknown half_first_step {self.half_first_step!r}")

    @property
    def presample(self):
        if self.analytic_presample != "auto":
            return self.analytic_presample
        return "zero" if self.design.burn_in == 0 else "stationary"


# ------------------------------------------------------------ replication


def _wants(config, name, n_periods):
    if name not in config.estimators:
        return False
    return name not in GARCH_ESTIMATORS or n_periods >= GARCH_MIN_T


def replicate(config: ExperimentConfig, n_units: int, n_periods: int, rep: int) -> dict:
    """Estimates and ADs for one replication (raises on estimation failure)."""
    seed = spawn(config.seed, n_units, n_periods, rep)
    panel, _, _ = config.design.draw(n_units, n_periods, seed)
    out = {}
    fit = fit_arma(panel, ORDERS)
    need_garch = any(_wants(config, e, n_periods) for e in GARCH_ESTIMATORS)
    if "ls" in config.estimators:
        out["ls"] = fit.lambda_hat
        out["ls_ad"] = covariance_lambda(panel, fit).ad
    jack = None
    if "jackknife" in config.estimators or (
        need_garch and config.lambda_source == "jackknife"
    ):
        jack = jackknife_arma(panel, ORDERS, fit)
    if "jackknife" in config.estimators:
        out["jackknife"] = jack.lambda_corrected
        out["jackknife_ad"] = out.get("ls_ad")
    analytic = None
    if "analytic" in config.estimators or (
        need_garch and config.lambda_source == "analytic"
    ):
        analytic = analytic_correct_arma(
            panel, fit, config.bootstrap_reps, spawn(seed, 2), presample=config.presample
        )
    if "analytic" in config.estimators:
        out["analytic"] = analytic.lambda_corrected
        out["analytic_ad"] = out.get("ls_ad")
    if need_garch:
        g = fit_garch(fit.residuals, ORDERS.l, ORDERS.k)
        zeta_ad = covariance_zeta(panel, fit, g).ad
        if _wants(config, "vtqml", n_periods):
            out["vtqml"] = g.zeta_hat
            out["vtqml_ad"] = zeta_ad
        if _wants(config, "garch-jackknife", n_periods):
            corrected = {"jackknife": jack, "analytic": analytic}.get(config.lambda_source)
            jg = jackknife_garch(
                panel,
                ORDERS,
                fit,
                corrected.fit if corrected is not None else fit,
                lambda_source=config.lambda_source,
                half_first_step=config.half_first_step,
            )
            out["garch-jackknife"] = jg.zeta_corrected
            out["garch-jackknife_ad"] = zeta_ad
    return out


def _task(args):
    config, n, t, rep = args
    try:
        return rep, replicate(config, n, t, rep), None
    except _FAILURES as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


# ----------------------------------------------------------------- report


@dataclass(frozen=True)
class Cell:
    n_units: int
    n_periods: int
    estimator: str
    parameter: str
    bias: float
    sd: float
    ad: float
    sd_ad: float
    mc_se: float
    n_success: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: list
    failures: dict
    failure_log: list
    aborted: list
    raw: dict = field(default_factory=dict, repr=False)

    def cell(self, n_units, n_periods, estimator, parameter) -> Cell:
        for c in self.cells:
            if (c.n_units, c.n_periods, c.estimator, c.parameter) == (
                n_units,
                n_periods,
                estimator,
                parameter,
            ):
                return c
        raise KeyError((n_units, n_periods, estimator, parameter))

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(Cell)]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for c in self.cells:
            writer.writerow([_fmt(getattr(c, k)) for k in names])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _summarize(config, n, t, results):
    cells = []
    truth = {"ls": config.design.lam, "vtqml": config.design.zeta}
    for est in config.estimators:
        if not _wants(config, est, t):
            continue
        names = ZETA_NAMES if est in GARCH_ESTIMATORS else LAMBDA_NAMES
        true = truth["vtqml" if est in GARCH_ESTIMATORS else "ls"]
        est_vals = np.array([r[est] for r in results]) if results else np.empty((0, len(names)))
        ad_vals = [r.get(f"{est}_ad") for r in results]
        ad_vals = np.array(ad_vals) if results and ad_vals[0] is not None else None
        count = len(est_vals)
        for j, name in enumerate(names):
            if count < 2:
                cells.append(Cell(n, t, est, name, *([math.nan] * 5), count))
                continue
            sd = float(np.std(est_vals[:, j], ddof=1))
            ad = float(np.mean(ad_vals[:, j])) if ad_vals is not None else math.nan
            cells.append(
                Cell(
                    n,
                    t,
                    est,
                    name,
                    float(np.mean(est_vals[:, j]) - true[j]),
                    sd,
                    ad,
                    sd / ad if ad > 0 else math.nan,
                    sd / math.sqrt(count),
                    count,
                )
            )
    return cells


def run_experiment(config: ExperimentConfig, keep_raw: bool = False) -> ExperimentReport:
    """Run every grid point; a grid point with more than 5% failed
    replications is aborted (no cells) and listed in ``aborted``."""
    cells, failures, failure_log, aborted, raw = [], {}, [], [], {}
    for n, t in config.grid:
        tasks = [(config, n, t, r) for r in range(config.replications)]
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                outcomes = list(pool.map(_task, tasks, chunksize=4))
        else:
            outcomes = [_task(a) for a in tasks]
        outcomes.sort(key=lambda o: o[0])
        good = [res for _, res, _ in outcomes if res is not None]
        bad = [(rep, msg) for rep, res, msg in outcomes if res is None]
        failures[(n, t)] = len(bad)
        for rep, msg in bad:
            failure_log.append(
                {"N": n, "T": t, "rep": rep, "seed_key": (config.seed, n, t, rep), "error": msg}
            )
            log.warning("replication failed: N=%d T=%d rep=%d (%s)", n, t, rep, msg)
        if len(bad) > MAX_FAILURE_SHARE * config.replications:
            log.error("grid point N=%d T=%d aborted: %d failures", n, t, len(bad))
            aborted.append((n, t))
            continue
        if keep_raw:
            raw[(n, t)] = good
        cells.extend(_summarize(config, n, t, good))
    return ExperimentReport(config, cells, failures, failure_log, aborted, raw)


def mc_stderr(report: ExperimentReport) -> dict:
    """``SD / sqrt(R)`` per cell; ``None`` marks cells without successful runs."""
    out = {}
    for c in report.cells:
        key = (c.n_units, c.n_periods, c.estimator, c.parameter)
        out[key] = None if c.n_success == 0 or math.isnan(c.sd) else c.sd / math.sqrt(c.n_success)
    return out


# -------------------------------------------------------------- rendering

_COLUMNS = (
    ("ls", "beta"),
    ("analytic", "beta"),
    ("jackknife", "beta"),
    ("ls", "phi"),
    ("analytic", "phi"),
    ("jackknife", "phi"),
    ("ls", "psi"),
    ("analytic", "psi"),
    ("jackknife", "psi"),
    ("vtqml", "tau"),
    ("garch-jackknife", "tau"),
    ("vtqml", "nu"),
    ("garch-jackknife", "nu"),
)
_SUFFIX = {"ls": "", "vtqml": "", "analytic": "_A", "jackknife": "_J", "garch-jackknife": "_J"}


def render_tables(report: ExperimentReport) -> str:
    """Bias, SD and SD/AD tables in the layout of the published tables."""
    present = {(c.estimator, c.parameter) for c in report.cells}
    cols = [c for c in _COLUMNS if c in present or c[0] in report.config.estimators]
    heads = [f"{p}{_SUFFIX[e]}" for e, p in cols]
    lookup = {(c.n_units, c.n_periods, c.estimator, c.parameter): c for c in report.cells}
    blocks = []
    for title, attr in (("Bias", "bias"), ("SD", "sd"), ("SD/AD", "sd_ad")):
        lines = [title, "  ".join(["N".rjust(4), "T".rjust(4)] + [h.rjust(8) for h in heads])]
        for n, t in report.config.grid:
            row = [str(n).rjust(4), str(t).rjust(4)]
            for e, p in cols:
                c = lookup.get((n, t, e, p))
                v = getattr(c, attr) if c is not None else math.nan
                row.append(("-----" if math.isnan(v) else f"{v:.3f}").rjust(8))
            if (n, t) in report.aborted:
                row.append("aborted")
            lines.append("  ".join(row))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


_DESIGN_KEYS = {f.name: f.type for f in fields(DesignSpec)}
_CONFIG_KEYS = (
    "grid",
    "replications",
    "estimators",
    "seed",
    "workers",
    "bootstrap_reps",
    "analytic_presample",
    "lambda_source",
    "half_first_step",
)


def _parse_grid(text):
    grid = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n, t = (int(v) for v in item.lower().split("x"))
        except ValueError:
            raise ConfigError(f"grid entries look like NxT, got {item!r}") from None
        grid.append((n, t))
    return tuple(grid)


_ALIASES = {"reps": "replications", "threads": "workers"}


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a config from string (or already typed) values.

    Keys are the :class:`ExperimentConfig` fields (``grid`` as
    ``50x50, 50x100``; ``estimators`` comma separated), the
    :class:`DesignSpec` fields, and the aliases ``reps`` and ``threads``.
    Unknown keys raise :class:`~pagarch.errors.ConfigError`; ``None`` values
    are ignored so unset command-line flags fall through.
    """
    design, top = {}, {}
    try:
        for key, value in mapping.items():
            if value is None:
                continue
            key = _ALIASES.get(key.replace("-", "_"), key.replace("-", "_"))
            if key in _DESIGN_KEYS:
                if key == "innovation":
                    design[key] = str(value)
                elif key == "burn_in":
                    design[key] = int(value)
                else:
                    design[key] = None if str(value).lower() == "none" else float(value)
            elif key == "grid":
                top[key] = _parse_grid(value) if isinstance(value, str) else tuple(value)
            elif key == "estimators":
                if isinstance(value, str):
                    value = [v.strip() for v in value.split(",") if v.strip()]
                top[key] = tuple(value)
            elif key in ("replications", "seed", "workers", "bootstrap_reps"):
                top[key] = int(value)
            elif key in _CONFIG_KEYS:
                top[key] = str(value)
            else:
                raise ConfigError(f"unknown experiment key {key!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad value: {exc}") from None
    return ExperimentConfig(design=DesignSpec(**design), **top)


def parse_config(text: str, overrides: dict = None) -> ExperimentConfig:
    """Experiment settings from flat ``key = value`` text; ``overrides`` win."""
    mapping = parse_keyvalue(text)
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(mapping)


def config_to_dict(config: ExperimentConfig) -> dict:
    out = asdict(config)
    out["grid"] = [list(g) for g in config.grid]
    out["estimators"] = list(config.estimators)
    return out


# -------------------------------------------------- fixed-effect coverage


@dataclass
class CoverageReport:
    level: float
    panels: int
    n_units: int
    n_periods: int
    mu: float
    omega: float
    varpi: float
    varpi_delta: float
    failures: int


def _coverage_task(args):
    design, n, t, rep, seed, level = args
    s = spawn(seed, n, t, rep)
    panel, arma, garch = design.draw(n, t, s)
    try:
        fit = fit_arma(panel, ORDERS)
        g = fit_garch(fit.residuals, 1, 1)
        theorem = fixed_effect_inference(fit, g, level)
        delta = fixed_effect_inference(
            fit, g, level, zeta_cov=covariance_zeta(panel, fit, g).cov
        )
    except _FAILURES:
        return None
    varpi = garch.omega * (1.0 - design.tau - design.nu)
    z = stats.norm.ppf(0.5 + level / 2.0)

    def inside(est, se, truth):
        return np.abs(est - truth) <= z * se

    return (
        inside(theorem.mu, theorem.mu_se, arma.mu),
        inside(theorem.omega, theorem.omega_se, garch.omega),
        inside(theorem.varpi, theorem.varpi_se, varpi),
        inside(delta.varpi, delta.varpi_se, varpi),
    )


def coverage_experiment(
    n_units=50,
    n_periods=300,
    panels=1000,
    level=0.95,
    design: DesignSpec = None,
    seed=20240601,
    workers=1,
) -> CoverageReport:
    """Empirical coverage of the fixed-effect intervals, averaged over units
    and panels. ``varpi_delta`` adds the finite-N term for the error in
    ``zeta_hat`` to the ``varpi`` variance."""
    design = design or DesignSpec()
    tasks = [(design, n_units, n_periods, r, seed, level) for r in range(panels)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_coverage_task, tasks, chunksize=8))
    else:
        results = [_coverage_task(a) for a in tasks]
    good = [r for r in results if r is not None]
    rate = [float(np.mean([r[k] for r in good])) for k in range(4)]
    return CoverageReport(level, len(good), n_units, n_periods, *rate, len(results) - len(good))
