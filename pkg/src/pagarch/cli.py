"""
Command-line interface: ``pagarch <command> [options]``.

Commands
--------
simulate    simulate the ARMA(1,1)-GARCH(1,1) design panel to CSV
fit         two-step estimates with standard errors to a result document
correct     jackknife and analytic bias corrections to a result document
infer       standard-error table plus per-unit fixed-effect intervals (CSV)
forecast    rolling one-step backtest (summary CSV and per-forecast records)
montecarlo  simulation study tables (text and CSV)
lq-verify   normality check for a centered quadratic form (CSV)

Every option may also be set in a ``--config`` file of ``key = value`` lines
using the option names; options given on the command line win. Exit status
is 0 on success, 1 for invalid input or configuration and 2 for numerical
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

import pagarch
from pagarch import montecarlo as mc
from pagarch.arma import fit_arma
from pagarch.errors import ConfigError, EstimationError, PanelDataError, ParameterError
from pagarch.forecast import METHODS, BacktestOptions, rolling_backtest
from pagarch.garch import c_h_sensitivity, fit_garch
from pagarch.inference import (
    analytic_correct_arma,
    covariance_lambda,
    covariance_zeta,
    fixed_effect_inference,
    jackknife_arma,
    jackknife_garch,
)
from pagarch.io import ResultDocument, read_keyvalue, read_panel, write_panel, write_rows
from pagarch.lqform import IIDInnovations, LQProblem, centering_block, clt_montecarlo
from pagarch.model import ModelOrders, PanelData

log = logging.getLogger("pagarch")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2
_INVALID = (ConfigError, PanelDataError, ParameterError, FileNotFoundError, IsADirectoryError)
_NUMERICAL = (EstimationError, np.linalg.LinAlgError, FloatingPointError)

# Built-in values for options left unset on the command line and in the config.
DEFAULTS = {
    "orders": "1,1,1,1",
    "seed": 0,
    "level": 0.95,
    "reps": None,
    "threads": 1,
    "window": 96,
    "method": "panel",
    "fhs_draws": 10_000,
    "c_h": None,
    "units": 50,
    "periods": 100,
    "burn_in": 0,
    "correction": "both",
    "innovation": "normal",
    "df": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Report usage problems as validation errors (exit 1) instead of exit 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, *names):
    adders = {
        "input": lambda: p.add_argument("--input", help="panel CSV (unit_id,time,y,x1..xD)"),
        "output": lambda: p.add_argument("--output", help="output path"),
        "orders": lambda: p.add_argument("--orders", help="P,Q,L,K (default 1,1,1,1)"),
        "seed": lambda: p.add_argument("--seed", type=int, help="random seed (default 0)"),
        "level": lambda: p.add_argument("--level", type=float, help="interval level (default 0.95)"),
        "reps": lambda: p.add_argument("--reps", type=int, help="replications"),
        "threads": lambda: p.add_argument("--threads", type=int, help="worker processes"),
        "c_h": lambda: p.add_argument("--c-h", type=float, dest="c_h", help="pre-sample variance"),
    }
    for name in names:
        adders[name]()
    p.add_argument("--config", help="key = value file with option defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pagarch", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=pagarch.__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate the ARMA(1,1)-GARCH(1,1) design")
    _common(p, "output", "seed")
    p.add_argument("--units", type=int, help="N (default 50)")
    p.add_argument("--periods", type=int, help="T (default 100)")
    p.add_argument("--burn-in", type=int, dest="burn_in", help="discarded start-up periods")

    p = sub.add_parser("fit", help="two-step estimates")
    _common(p, "input", "output", "orders", "c_h")

    p = sub.add_parser("correct", help="bias-corrected estimates")
    _common(p, "input", "output", "orders", "reps", "seed", "c_h")
    p.add_argument("--correction", choices=("jackknife", "analytic", "both"))

    p = sub.add_parser("infer", help="standard errors and fixed-effect intervals")
    _common(p, "input", "output", "orders", "level", "c_h")

    p = sub.add_parser("forecast", help="rolling one-step density forecasts")
    _common(p, "input", "output", "orders", "level", "reps", "seed", "c_h")
    p.add_argument("--window", type=int, help="estimation window (default 96)")
    p.add_argument("--method", choices=METHODS, help="estimation method (default panel)")
    p.add_argument("--fhs-draws", type=int, dest="fhs_draws", help="FHS draws (default 10000)")

    p = sub.add_parser("montecarlo", help="simulation study")
    _common(p, "output", "reps", "seed", "threads")

    p = sub.add_parser("lq-verify", help="normality of a centered quadratic form")
    _common(p, "output", "reps", "seed")
    p.add_argument("--units", type=int, help="N (default 50)")
    p.add_argument("--periods", type=int, help="T (default 100)")
    p.add_argument("--innovation", choices=("normal", "t"))
    p.add_argument("--df", type=float, help="t degrees of freedom")
    return parser


def _resolve(args, parser):
    """Merge flags over the config file over built-in defaults."""
    options = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    extra = {}
    if args.config:
        file_values = read_keyvalue(args.config)
        for key, value in file_values.items():
            if key in options:
                if options[key] is None:
                    options[key] = _coerce(parser, args.command, key, value)
            elif args.command == "montecarlo":
                extra[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r} for command {args.command!r}")
    for key, value in options.items():
        if value is None and key in DEFAULTS:
            options[key] = DEFAULTS[key]
    return argparse.Namespace(command=args.command, **options), extra


def _coerce(parser, command, key, value):
    """Apply the option's argparse type to a config-file string."""
    subparser = parser._subparsers._group_actions[0].choices[command]
    for action in subparser._actions:
        if action.dest == key:
            try:
                value = action.type(value) if action.type else value
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r}: bad value {value!r}") from None
            if action.choices and value not in action.choices:
                raise ConfigError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
            return value
    return value


def _need(opts, *names):
    for name in names:
        if getattr(opts, name) in (None, ""):
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def _load(opts):
    _need(opts, "input")
    panel = read_panel(opts.input)
    orders = ModelOrders.parse(opts.orders, panel.n_regressors)
    panel.check_orders(orders)
    return panel, orders


def _estimates(orders, panel, arma_fit, garch_fit, cov_l, cov_z):
    return {
        "lambda": {"names": orders.lambda_names(), "value": arma_fit.lambda_hat, "se": cov_l.ad},
        "mu": {"names": list(panel.unit_ids), "value": arma_fit.mu_hat},
        "zeta": {"names": orders.zeta_names(), "value": garch_fit.zeta_hat, "se": cov_z.ad},
        "omega": {"names": list(panel.unit_ids), "value": garch_fit.omega_hat},
        "varpi": {"names": list(panel.unit_ids), "value": garch_fit.varpi_hat},
    }


def _two_step(panel, orders, c_h):
    started = time.perf_counter()
    arma_fit = fit_arma(panel, orders)
    garch_fit = fit_garch(arma_fit.residuals, orders.l, orders.k, c_h=c_h)
    cov_l = covariance_lambda(panel, arma_fit)
    cov_z = covariance_zeta(panel, arma_fit, garch_fit)
    return arma_fit, garch_fit, cov_l, cov_z, time.perf_counter() - started


def _document(command, orders, panel, arma_fit, garch_fit, cov_l, cov_z, seconds, seed=None):
    return ResultDocument(
        command=command,
        orders={"p": orders.p, "q": orders.q, "l": orders.l, "k": orders.k, "dx": orders.dx},
        unit_ids=list(panel.unit_ids),
        estimates=_estimates(orders, panel, arma_fit, garch_fit, cov_l, cov_z),
        diagnostics={
            "arma": {
                "converged": arma_fit.converged,
                "objective": arma_fit.objective,
                "iterations": arma_fit.n_iter,
                "message": arma_fit.message,
                "condition": cov_l.condition,
            },
            "garch": {
                "converged": garch_fit.converged,
                "loglik": garch_fit.loglik,
                "boundary": garch_fit.boundary,
                "iterations": garch_fit.n_iter,
                "message": garch_fit.message,
                "condition": cov_z.condition,
                "c_h_sensitivity": c_h_sensitivity(arma_fit.residuals, garch_fit),
            },
        },
        version=pagarch.__version__,
        seed=seed,
        timing={"estimation_seconds": seconds},
    )


def _emit(doc: ResultDocument, output):
    if output:
        doc.save(output)
    else:
        sys.stdout.write(doc.to_json() + "\n")


# --------------------------------------------------------------- commands


def cmd_simulate(opts, extra):
    _need(opts, "output")
    design = mc.DesignSpec(burn_in=opts.burn_in)
    panel, _, _ = design.draw(opts.units, opts.periods, opts.seed)
    width = len(str(opts.units - 1))
    ids = tuple(f"u{i:0{width}d}" for i in range(opts.units))  # sorts in simulation order
    write_panel(PanelData(panel.y, panel.x, ids), opts.output)
    log.info("wrote N=%d, T=%d panel to %s", opts.units, opts.periods, opts.output)


def cmd_fit(opts, extra):
    panel, orders = _load(opts)
    parts = _two_step(panel, orders, opts.c_h)
    _emit(_document("fit", orders, panel, *parts), opts.output)


def cmd_correct(opts, extra):
    panel, orders = _load(opts)
    arma_fit, garch_fit, cov_l, cov_z, seconds = _two_step(panel, orders, opts.c_h)
    doc = _document("correct", orders, panel, arma_fit, garch_fit, cov_l, cov_z, seconds, opts.seed)
    reps = opts.reps or 200
    started = time.perf_counter()
    names = orders.lambda_names()
    if opts.correction in ("jackknife", "both"):
        jack = jackknife_arma(panel, orders, arma_fit)
        jg = jackknife_garch(panel, orders, arma_fit, jack.fit, c_h=opts.c_h)
        doc.correction["jackknife"] = {
            "lambda": dict(zip(names, jack.lambda_corrected)),
            "lambda_halves": [list(h) for h in jack.lambda_halves],
            "zeta": dict(zip(orders.zeta_names(), jg.zeta_corrected)),
            "zeta_halves": [list(h) for h in jg.zeta_halves],
            "half_first_step": jg.half_first_step,
        }
    if opts.correction in ("analytic", "both"):
        ac = analytic_correct_arma(panel, arma_fit, reps, opts.seed)
        doc.correction["analytic"] = {
            "lambda": dict(zip(names, ac.lambda_corrected)),
            "bias": dict(zip(names, ac.bias)),
            "bias_se": dict(zip(names, ac.bias_se)),
            "bootstrap_reps": ac.reps,
            "presample": ac.presample,
        }
    doc.timing["correction_seconds"] = time.perf_counter() - started
    _emit(doc, opts.output)


def cmd_infer(opts, extra):
    panel, orders = _load(opts)
    arma_fit, garch_fit, cov_l, cov_z, _ = _two_step(panel, orders, opts.c_h)
    fe = fixed_effect_inference(arma_fit, garch_fit, opts.level)
    lines = [f"{'parameter':>10} {'estimate':>12} {'std.err':>12}"]
    for name, est, se in zip(
        orders.lambda_names() + orders.zeta_names(),
        np.concatenate([arma_fit.lambda_hat, garch_fit.zeta_hat]),
        np.concatenate([cov_l.ad, cov_z.ad]),
    ):
        lines.append(f"{name:>10} {est:12.6f} {se:12.6f}")
    sys.stdout.write("\n".join(lines) + "\n")
    header = ["unit_id"]
    for name in ("mu", "omega", "varpi"):
        header += [name, f"{name}_se", f"{name}_lower", f"{name}_upper"]
    rows = []
    for i, unit in enumerate(panel.unit_ids):
        row = [unit]
        for est, se, ci in (
            (fe.mu, fe.mu_se, fe.mu_ci),
            (fe.omega, fe.omega_se, fe.omega_ci),
            (fe.varpi, fe.varpi_se, fe.varpi_ci),
        ):
            row += [float(est[i]), float(se[i]), float(ci[i, 0]), float(ci[i, 1])]
        rows.append(row)
    if opts.output:
        write_rows(opts.output, header, rows)
    else:
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(str(v) for v in row) + "\n")


def cmd_forecast(opts, extra):
    _need(opts, "output")
    panel, orders = _load(opts)
    options = BacktestOptions(
        alpha=1.0 - opts.level,
        fhs_draws=opts.fhs_draws,
        seed=opts.seed,
        bootstrap_reps=opts.reps or 200,
        c_h=opts.c_h,
    )
    out = rolling_backtest(panel, orders, opts.window, opts.method, options)
    write_rows(
        opts.output,
        ["unit_id", "method", "rmse", "coverage", "lr_cc", "lr_cc_pvalue"],
        [
            [u, out.method, float(out.rmse[i]), float(out.coverage[i]),
             float(out.lr_statistic[i]), float(out.lr_pvalue[i])]
            for i, u in enumerate(panel.unit_ids)
        ],
    )
    path = Path(opts.output)
    records = path.with_name(path.stem + "_records" + (path.suffix or ".csv"))
    write_rows(
        records,
        ["unit_id", "origin", "y_actual", "y_point", "lower", "upper", "h_forecast", "hit"],
        [
            [panel.unit_ids[r.unit], r.origin, float(r.y_actual), float(r.y_point),
             float(r.interval.lower), float(r.interval.upper), float(r.h_forecast), r.hit]
            for r in out.records
        ],
    )
    if out.skipped:
        log.warning("skipped origins: %s", out.skipped)


def cmd_montecarlo(opts, extra):
    mapping = dict(extra)
    mapping.update({"replications": opts.reps, "seed": opts.seed, "workers": opts.threads})
    config = mc.config_from_mapping(mapping)
    report = mc.run_experiment(config)
    text = mc.render_tables(report)
    if opts.output:
        path = Path(opts.output)
        path.write_text(text)
        path.with_suffix(".csv").write_text(report.to_csv())
    else:
        sys.stdout.write(text)
    if report.aborted:
        raise EstimationError(f"grid points aborted after failures: {report.aborted}")


def cmd_lq_verify(opts, extra):
    reps = opts.reps or 10_000
    innov = IIDInnovations(opts.innovation, df=opts.df)
    problem = LQProblem.blockwise(centering_block(opts.periods), opts.units, innovations=innov)
    res = clt_montecarlo(problem, reps, opts.seed)
    summary = [
        ["replications", reps],
        ["mean", res.mean],
        ["variance", res.variance],
        ["skewness", res.skewness],
        ["excess_kurtosis", res.excess_kurtosis],
        ["ks_distance", res.ks_distance],
        ["ks_pvalue", res.ks_pvalue],
    ]
    if opts.output:
        write_rows(opts.output, ["statistic", "value"], summary)
        path = Path(opts.output)
        write_rows(
            path.with_name(path.stem + "_sample" + (path.suffix or ".csv")),
            ["replication", "standardized"],
            [[r, float(v)] for r, v in enumerate(res.standardized)],
        )
    else:
        for name, value in summary:
            sys.stdout.write(f"{name},{value}\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "correct": cmd_correct,
    "infer": cmd_infer,
    "forecast": cmd_forecast,
    "montecarlo": cmd_montecarlo,
    "lq-verify": cmd_lq_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        opts, extra = _resolve(args, parser)
        COMMANDS[args.command](opts, extra)
    except _INVALID as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except _NUMERICAL as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
