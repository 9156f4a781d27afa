"""
Command-line front end.

    efalrt test --kind no-factor data.csv
    efalrt select --correction bartlett data.csv
    efalrt diagnose 1000 30
    efalrt simulate configs/figure2.cfg --threads 4

Exit codes: 0 ok, 1 error, 2 validity warning under --strict.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EfaLrtError
from .lrt import (
    CALIBRATIONS,
    CORRECTIONS,
    RegimeThresholds,
    min_safe_sample_size,
    regime_diagnostic,
    test_given_sigma,
    test_k_factor,
    test_no_factor,
)
from .selection import select_num_factors
from .simulation import load_config, run_grid, with_overrides

EXIT_OK, EXIT_ERROR, EXIT_STRICT = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for --strict here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_table(path) -> np.ndarray:
    """
    Read a comma- or whitespace-delimited numeric table, rows = observations.

    The first non-empty line is treated as a header when any of its cells is
    not a number.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise CliError(f"{path}: no data")
    delim = "," if "," in lines[0][1] else None

    def cells(ln):
        return [c.strip() for c in ln.split(delim)]

    if not all(_is_number(c) for c in cells(lines[0][1])):
        lines = lines[1:]
    rows = []
    for lineno, ln in lines:
        row = cells(ln)
        try:
            rows.append([float(c) for c in row])
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise CliError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
        if len(row) != len(rows[0]):
            raise CliError(f"{path}:{lineno}: expected {len(rows[0])} columns, found {len(row)}")
    if not rows:
        raise CliError(f"{path}: header only, no observations")
    x = np.array(rows)
    if not np.all(np.isfinite(x)):
        raise CliError(f"{path}: non-finite values")
    return x


def _fmt(x, digits=6) -> str:
    if x is None:
        return "-"
    x = float(x)
    if abs(x) < 1e7:
        return f"{round(x, digits) + 0.0:.{digits}f}".rstrip("0").rstrip(".") or "0"
    return f"{x:.{digits}g}"


def _thresholds(args) -> RegimeThresholds:
    return RegimeThresholds(safe=args.safe_threshold, failing=args.failing_threshold)


def _regime_lines(report) -> list[str]:
    return [
        f"regime: N={report.N} p={report.p} epsilon={report.epsilon:.4f}",
        f"  p^2/N   = {_fmt(report.ratio_sq)}  chisq verdict:    {report.chisq_valid}",
        f"  p^3/N^2 = {_fmt(report.ratio_cube)}  bartlett verdict: {report.bartlett_valid}",
    ]


def _result_dict(res) -> dict:
    r = res.regime
    return {
        "statistic": res.statistic,
        "corrected_statistic": res.corrected_statistic,
        "correction": res.correction,
        "calibration": res.calibration,
        "df": res.df,
        "rho": res.rho,
        "bartlett_factor": res.bartlett_factor,
        "p_value": res.p_value,
        "z": res.z,
        "alpha": res.alpha,
        "rejected": res.rejected,
        "converged": res.converged,
        "regime": {
            "N": r.N, "p": r.p, "epsilon": r.epsilon, "ratio_sq": r.ratio_sq,
            "ratio_cube": r.ratio_cube, "chisq_valid": r.chisq_valid,
            "bartlett_valid": r.bartlett_valid,
        },
        "warnings": list(res.warnings),
    }


def cmd_test(args) -> int:
    x = read_table(args.data)
    common = dict(correction=args.correction, calibration=args.calibration, alpha=args.alpha,
                  thresholds=_thresholds(args))
    if args.kind == "no-factor":
        res = test_no_factor(x, **common)
    elif args.kind == "k-factor":
        if args.k is None:
            raise CliError("--kind k-factor needs --k")
        res = test_k_factor(x, args.k, **common)
    else:
        if args.sigma is None:
            raise CliError("--kind given-sigma needs --sigma")
        res = test_given_sigma(x, read_table(args.sigma), **common)

    if args.json:
        print(json.dumps({"test": args.kind, **_result_dict(res)}, indent=2))
    else:
        name = {"no-factor": "T0", "k-factor": f"T{args.k}", "given-sigma": "T'"}[args.kind]
        lines = [
            f"test: {args.kind}" + (f" (k={args.k})" if args.kind == "k-factor" else ""),
            f"statistic {name}: {_fmt(res.statistic)}",
            f"correction: {res.correction}  rho: {_fmt(res.rho)}",
            f"corrected statistic: {_fmt(res.corrected_statistic)}",
            f"calibration: {res.calibration}",
            f"df: {_fmt(res.df)}",
        ]
        if res.z is not None:
            lines.append(f"z: {_fmt(res.z)}")
        lines += [
            f"p-value: {res.p_value:.6g}",
            f"decision at alpha={res.alpha:g}: {'reject' if res.rejected else 'do not reject'}",
        ]
        lines += _regime_lines(res.regime)
        lines += [f"WARNING: {w}" for w in res.warnings]
        print("\n".join(lines))
    return EXIT_STRICT if args.strict and res.warnings else EXIT_OK


def cmd_select(args) -> int:
    x = read_table(args.data)
    sel = select_num_factors(x, alpha=args.alpha, correction=args.correction, k_max=args.k_max)
    warnings = []
    for e in sel.trail:
        warnings += [f"k={e.k}: {w}" for w in e.result.warnings if f"k={e.k}: {w}" not in warnings]
    if args.json:
        doc = {
            "k_hat": sel.k_hat,
            "stopped_reason": sel.stopped_reason,
            "alpha": sel.alpha,
            "trail": [{"k": e.k, "rejected": e.rejected, **_result_dict(e.result)} for e in sel.trail],
            "warnings": warnings,
        }
        print(json.dumps(doc, indent=2))
    else:
        print(f"k_hat: {sel.k_hat}")
        print(f"stopped: {sel.stopped_reason}")
        print(f"{'k':>3}  {'statistic':>14}  {'df':>8}  {'p-value':>11}  decision")
        for e in sel.trail:
            r = e.result
            decision = "reject" if e.rejected else "do not reject"
            if not r.converged:
                decision += " (fit did not converge)"
            print(f"{e.k:>3}  {_fmt(r.corrected_statistic):>14}  {_fmt(r.df):>8}  "
                  f"{r.p_value:>11.4g}  {decision}")
        for w in warnings:
            print(f"WARNING: {w}")
    return EXIT_STRICT if args.strict and warnings else EXIT_OK


def cmd_diagnose(args) -> int:
    if args.N < 1 or args.p < 1:
        raise CliError("N and p must be positive")
    th = _thresholds(args)
    report = regime_diagnostic(args.N, args.p, th)
    n_chisq, n_bart = min_safe_sample_size(args.p, th)
    print("\n".join(_regime_lines(report)))
    print(f"minimum N for a safe chisq verdict at p={args.p}: {n_chisq}")
    print(f"minimum N for a safe bartlett verdict at p={args.p}: {n_bart}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise CliError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    updates = {k: v for k, v in (("seed", args.seed), ("threads", args.threads),
                                 ("replications", args.replications)) if v is not None}
    if updates:
        cfg = with_overrides(cfg, **updates)
    prefix = args.output or cfg.output or Path(args.config).stem
    result = run_grid(cfg, progress=lambda msg: print(msg, file=sys.stderr, flush=True))
    csv_path, json_path = result.write(prefix)
    print(f"wrote {csv_path} and {json_path} ({len(result.rows)} rows)")
    return EXIT_OK


def _add_modes(sp, calibration=True):
    sp.add_argument("--correction", choices=CORRECTIONS, default="none")
    if calibration:
        sp.add_argument("--calibration", choices=CALIBRATIONS, default="chisq")
    sp.add_argument("--alpha", type=float, default=0.05)


def _add_thresholds(sp):
    sp.add_argument("--safe-threshold", type=float, default=0.1,
                    help="ratio below which a verdict is safe (default 0.1)")
    sp.add_argument("--failing-threshold", type=float, default=1.0,
                    help="ratio at or above which a verdict is failing (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="efalrt", description="Likelihood ratio tests for exploratory factor analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("test", help="run one likelihood ratio test on a data file")
    sp.add_argument("data", help="delimited numeric table, rows = observations")
    sp.add_argument("--kind", choices=("no-factor", "k-factor", "given-sigma"), default="no-factor")
    sp.add_argument("--k", type=int, help="number of factors for --kind k-factor")
    sp.add_argument("--sigma", help="covariance matrix file for --kind given-sigma")
    _add_modes(sp)
    _add_thresholds(sp)
    sp.add_argument("--strict", action="store_true", help="exit 2 when the report has warnings")
    sp.add_argument("--json", action="store_true", help="print the report as JSON")
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("select", help="sequentially choose the number of factors")
    sp.add_argument("data")
    _add_modes(sp, calibration=False)
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("diagnose", help="regime verdicts for a sample size and dimension")
    sp.add_argument("N", type=int)
    sp.add_argument("p", type=int)
    _add_thresholds(sp)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("simulate", help="run a Monte Carlo experiment from a config file")
    sp.add_argument("config")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--output", help="output prefix; writes PREFIX.csv and PREFIX.json")
    sp.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, EfaLrtError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
