"""
Monte Carlo experiments over (N, epsilon) grids with p = floor(N^epsilon).

Replication r of grid point (N, p) always draws its data from random stream
(N, p, r) of the configured seed, so results do not depend on how
replications are spread over workers or the order they finish in.
Replications that fail (a singular correlation matrix, a non-converged
maximum likelihood fit) are counted in the ``failed`` column and excluded
from the rates.
"""

import configparser
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from .core_stats import sample_covariance
from .errors import EfaLrtError, InvalidInputError
from .factor_mle import factor_dof, fit_factor_model
from .lrt import (
    bartlett_factor_t0,
    bartlett_factor_tk,
    bartlett_factor_tprime,
    calibrate,
    given_sigma_statistic,
    hd_calibration_t0,
    hd_calibration_tprime,
    k_factor_statistic,
    no_factor_statistic,
)
from .sampler import GeneratorSpec, build_example_model, sample
from .selection import select_num_factors

log = logging.getLogger(__name__)

EXPERIMENTS = ("typeI-h00", "typeI-hk", "typeI-tprime", "selection", "histogram")
CSV_HEADER = ("N", "epsilon", "p", "mode", "correction", "metric", "value", "mc_se",
              "replications", "failed")
HISTOGRAM_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
DESK_MAX_N = 2000
DESK_MAX_EPSILON = Fraction(23, 24)


def parse_epsilon(text: str) -> Fraction:
    return Fraction(text.strip())


def floor_power(N: int, epsilon: Fraction) -> int:
    """floor(N ** epsilon) in exact integer arithmetic (1000 ** (1/3) must give 10)."""
    num, den = epsilon.numerator, epsilon.denominator
    target = N**num
    p = int(round(N ** float(epsilon)))
    while p > 0 and p**den > target:
        p -= 1
    while (p + 1) ** den <= target:
        p += 1
    return p


def expand_epsilons(items: list[str]) -> list[str]:
    """Expand "a/d..b/d" ranges into a/d, (a+1)/d, ..., b/d."""
    out = []
    for item in items:
        item = item.strip()
        if ".." in item:
            lo, hi = (s.strip() for s in item.split(".."))
            (a, d1), (b, d2) = (tuple(int(v) for v in s.split("/")) for s in (lo, hi))
            if d1 != d2:
                raise ValueError(f"range {item!r} must use one denominator")
            out.extend(f"{j}/{d1}" for j in range(a, b + 1))
        elif item:
            out.append(item)
    return out


class SimConfig(BaseModel):
    """A simulation experiment; see README for the config file keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: Literal["typeI-h00", "typeI-hk", "typeI-tprime", "selection", "histogram"]
    N_list: tuple[int, ...] = ()
    epsilon_list: tuple[str, ...] = ()
    p_list: tuple[int, ...] = ()
    generator: Literal["iid-normal", "factor-normal", "iid-t", "discretized"] = "iid-normal"
    k0: int = 0
    t_df: float | None = None
    setting: Literal["I", "II", "III"] | None = None
    replications: int | None = None
    alpha: float = 0.05
    corrections: tuple[Literal["none", "bartlett"], ...] = ("none", "bartlett")
    calibrations: tuple[Literal["chisq", "hd-normal"], ...] = ("chisq",)
    seed: int = 0
    threads: int = 1
    selection_full_trail: bool = False
    output: str | None = None

    @field_validator("N_list")
    @classmethod
    def _check_n(cls, v):
        bad = [n for n in v if n < 2]
        if bad:
            raise ValueError(f"sample sizes must be >= 2, got {bad}")
        return v

    @field_validator("epsilon_list")
    @classmethod
    def _check_eps(cls, v):
        out = expand_epsilons(list(v))
        for e in out:
            try:
                f = parse_epsilon(e)
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"epsilon {e!r} is not a number or fraction") from None
            if not 0 < f <= 1:
                raise ValueError(f"epsilon {e} outside (0, 1]")
        return tuple(out)

    @field_validator("p_list")
    @classmethod
    def _check_p(cls, v):
        if any(p < 1 for p in v):
            raise ValueError("dimensions must be >= 1")
        return v

    @field_validator("replications")
    @classmethod
    def _check_reps(cls, v):
        if v is not None and v < 0:
            raise ValueError("replications must be >= 0")
        return v

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, v):
        if not 0 < v < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return v

    @field_validator("seed")
    @classmethod
    def _check_seed(cls, v):
        if not 0 <= v < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        return v

    @field_validator("threads")
    @classmethod
    def _check_threads(cls, v):
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        problems = []
        if self.epsilon_list and self.p_list:
            problems.append("give either epsilon_list or p_list, not both")
        needs_factor = self.experiment in ("typeI-hk", "selection")
        if needs_factor and self.generator != "factor-normal":
            problems.append(f"{self.experiment} needs generator = factor-normal")
        if self.generator == "factor-normal" and self.k0 not in (1, 3):
            problems.append("factor-normal generator needs k0 = 1 or 3")
        if self.generator != "factor-normal" and self.k0 != 0:
            problems.append("k0 is only meaningful with generator = factor-normal")
        if self.generator == "iid-t" and not (self.t_df and self.t_df > 0):
            problems.append("iid-t generator needs t_df > 0")
        if self.generator == "discretized" and self.setting is None:
            problems.append("discretized generator needs setting = I, II or III")
        if self.experiment == "typeI-tprime" and self.generator not in ("factor-normal", "iid-normal"):
            problems.append("typeI-tprime needs a normal generator with known covariance")
        if "hd-normal" in self.calibrations and self.experiment not in ("typeI-h00", "typeI-tprime"):
            problems.append(f"hd-normal calibration is not available for {self.experiment}")
        if not self.corrections:
            problems.append("corrections must not be empty")
        if not self.calibrations:
            problems.append("calibrations must not be empty")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def n_replications(self) -> int:
        if self.replications is not None:
            return self.replications
        return 5000 if self.experiment == "histogram" else 1000

    def generator_spec(self, p: int) -> GeneratorSpec:
        if self.generator == "factor-normal":
            return GeneratorSpec("factor-normal", model=build_example_model(self.k0, p), seed=self.seed)
        if self.generator == "iid-t":
            return GeneratorSpec("iid-t", df=self.t_df, seed=self.seed)
        if self.generator == "discretized":
            return GeneratorSpec("discretized", setting=self.setting, seed=self.seed)
        return GeneratorSpec("iid-normal", seed=self.seed)

    def grid(self) -> list[tuple[int, str, int]]:
        """(N, epsilon label, p) for every grid point, in config order."""
        cells = []
        for N in self.N_list:
            if self.p_list:
                for p in self.p_list:
                    eps = math.log(p) / math.log(N)
                    cells.append((N, f"{eps:.6f}", p))
            else:
                for e in self.epsilon_list:
                    cells.append((N, e, floor_power(N, parse_epsilon(e))))
        return cells


class ConfigError(EfaLrtError, ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid simulation config:\n" + "\n".join(f"  - {p}" for p in problems))


_LIST_KEYS = {"N_list", "epsilon_list", "p_list", "corrections", "calibrations"}


def parse_config_text(text: str) -> SimConfig:
    """
    Parse a flat ``key = value`` config. Lists are comma separated; ``#`` starts
    a comment. Every problem found is reported, not just the first.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[sim]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([str(exc).splitlines()[0]]) from None
    raw = {}
    for key, value in parser["sim"].items():
        value = value.strip()
        if key in _LIST_KEYS:
            raw[key] = [v.strip() for v in value.split(",") if v.strip()]
        elif value == "":
            raw[key] = None
        else:
            raw[key] = value
    try:
        return SimConfig(**raw)
    except ValidationError as exc:
        problems, bad_keys = _describe(exc)
    # field errors stop pydantic before the cross-field checks; rerun those
    # without the offending keys so the report is complete
    rest = {k: v for k, v in raw.items() if k not in bad_keys}
    if "experiment" in rest:
        try:
            SimConfig(**rest)
        except ValidationError as exc:
            problems += [m for m in _describe(exc)[0] if m not in problems]
    raise ConfigError(problems)


def _describe(exc: ValidationError) -> tuple[list[str], set[str]]:
    problems, keys = [], set()
    for err in exc.errors():
        where = ".".join(str(x) for x in err["loc"])
        if err["loc"]:
            keys.add(str(err["loc"][0]))
        msg = err["msg"].removeprefix("Value error, ")
        problems.extend(f"{where}: {m}" if where else m for m in msg.split("; "))
    return problems, keys


def with_overrides(cfg: SimConfig, **updates) -> SimConfig:
    """Copy of `cfg` with some fields replaced, validated like a config file."""
    try:
        return SimConfig(**{**cfg.model_dump(), **updates})
    except ValidationError as exc:
        raise ConfigError(_describe(exc)[0]) from None


def load_config(path) -> SimConfig:
    return parse_config_text(Path(path).read_text())


@dataclass(frozen=True)
class SimRow:
    N: int
    epsilon: str
    p: int
    mode: str
    correction: str
    metric: str
    value: float | None
    mc_se: float | None
    replications: int
    failed: int
    skipped: bool = False


@dataclass(frozen=True)
class SimGridResult:
    rows: tuple[SimRow, ...]
    config: SimConfig | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([
                r.N, r.epsilon, r.p, r.mode, r.correction, r.metric,
                "" if r.value is None else repr(float(r.value)),
                "" if r.mc_se is None else repr(float(r.mc_se)),
                r.replications, r.failed,
            ])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "config": None if self.config is None else self.config.model_dump(mode="json"),
            "columns": list(CSV_HEADER) + ["skipped"],
            "rows": [asdict(r) for r in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def write(self, prefix) -> tuple[Path, Path]:
        """Write ``<prefix>.csv`` and ``<prefix>.json``."""
        prefix = Path(prefix)
        csv_path = prefix.with_name(prefix.name + ".csv")
        json_path = prefix.with_name(prefix.name + ".json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json())
        return csv_path, json_path

    def lookup(self, **match) -> list[SimRow]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def value(self, **match) -> float:
        rows = self.lookup(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {match}")
        return rows[0].value


# ---------------------------------------------------------------- replications


@dataclass(frozen=True)
class _Cell:
    experiment: str
    spec: GeneratorSpec
    N: int
    p: int
    k0: int
    alpha: float
    corrections: tuple
    calibrations: tuple
    full_trail: bool


def _modes(cell: _Cell):
    return [(cal, cor) for cal in cell.calibrations for cor in cell.corrections]


def _one_replication(cell: _Cell, r: int):
    """Outcome of replication r: a tuple of values, or None on failure."""
    x = sample(cell.spec.with_stream((cell.N, cell.p, r)), cell.N, cell.p)
    N, p = cell.N, cell.p
    try:
        if cell.experiment in ("typeI-h00", "histogram"):
            stat = no_factor_statistic(x)
            if cell.experiment == "histogram":
                return (stat,)
            df, rho = p * (p - 1) / 2, bartlett_factor_t0(N, p)
            hd = hd_calibration_t0(N, p) if "hd-normal" in cell.calibrations else None
        elif cell.experiment == "typeI-tprime":
            sigma0 = cell.spec.model.implied_sigma() if cell.spec.model else np.eye(p)
            stat = given_sigma_statistic(x, sigma0)
            df, rho = p * (p + 1) / 2, bartlett_factor_tprime(N, p)
            hd = hd_calibration_tprime(N, p) if "hd-normal" in cell.calibrations else None
        elif cell.experiment == "typeI-hk":
            s = sample_covariance(x)
            fit = fit_factor_model(s, cell.k0)
            if not fit.converged:
                return None
            stat = k_factor_statistic(s, fit.sigma, N)
            df, rho, hd = factor_dof(p, cell.k0), bartlett_factor_tk(N, p, cell.k0), None
        else:
            return tuple(_classify_selection(x, cell, cor) for cor in cell.corrections)
    except EfaLrtError:
        return None
    out = []
    for cal, cor in _modes(cell):
        _, _, pval, _ = calibrate(stat, df, rho, cor, cal, hd)
        out.append(pval < cell.alpha)
    return tuple(out)


def _classify_selection(x, cell: _Cell, correction: str) -> str:
    k_max = None if cell.full_trail else cell.k0
    res = select_num_factors(x, cell.alpha, correction, k_max=k_max)
    if res.stopped_reason == "mle-failure":
        raise InvalidInputError("maximum likelihood fit did not converge")
    rejected_upto_k0 = (
        len(res.trail) > cell.k0 and all(e.rejected for e in res.trail[: cell.k0 + 1])
    )
    if rejected_upto_k0:
        return "over"
    return "correct" if res.k_hat == cell.k0 else "under"


def _run_chunk(args):
    cell, reps = args
    return [(r, _one_replication(cell, r)) for r in reps]


def _run_cell(cell: _Cell, n_reps: int, pool) -> list:
    if pool is None:
        return [_one_replication(cell, r) for r in range(n_reps)]
    n_chunks = max(1, min(n_reps, 4 * pool._max_workers))
    chunks = [list(range(i, n_reps, n_chunks)) for i in range(n_chunks)]
    results = [None] * n_reps
    for part in pool.map(_run_chunk, [(cell, c) for c in chunks]):
        for r, outcome in part:
            results[r] = outcome
    return results


def _skip_reason(cfg: SimConfig, N: int, p: int) -> str | None:
    margin = 2 if cfg.experiment == "typeI-tprime" else 5
    if N < p + margin:
        return f"N < p + {margin}"
    if cfg.experiment in ("typeI-h00", "histogram") and p < 2:
        return "p < 2"
    if cfg.experiment in ("typeI-hk", "selection"):
        if p < cfg.k0 + 1 or factor_dof(p, cfg.k0) <= 0:
            return f"k0={cfg.k0} leaves no degrees of freedom at p={p}"
    return None


def _rate_rows(N, eps, p, mode, correction, metric, hits, used, n_reps, failed):
    if used == 0:
        return SimRow(N, eps, p, mode, correction, metric, None, None, n_reps, failed)
    rate = hits / used
    return SimRow(N, eps, p, mode, correction, metric, rate, math.sqrt(rate * (1 - rate) / used),
                  n_reps, failed)


def _summarize(cfg: SimConfig, N, eps, p, outcomes) -> list[SimRow]:
    n_reps = len(outcomes)
    ok = [o for o in outcomes if o is not None]
    failed = n_reps - len(ok)
    rows = []
    if cfg.experiment == "histogram":
        t0 = np.array([o[0] for o in ok])
        f0 = p * (p - 1) / 2
        rho = bartlett_factor_t0(N, p)
        for cor in cfg.corrections:
            vals = t0 * (rho if cor == "bartlett" else 1.0)
            label = "rho0T0" if cor == "bartlett" else "T0"
            stats = [("mean", np.mean(vals) if vals.size else None),
                     ("var", np.var(vals, ddof=1) if vals.size > 1 else None)]
            stats += [(f"q{q:g}", np.quantile(vals, q) if vals.size else None)
                      for q in HISTOGRAM_QUANTILES]
            for name, v in stats:
                se = None
                if name == "mean" and vals.size > 1:
                    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
                rows.append(SimRow(N, eps, p, "histogram", cor, f"{name}_{label}",
                                   None if v is None else float(v), se, n_reps, failed))
        rows.append(SimRow(N, eps, p, "histogram", "reference", "f0", f0, None, n_reps, failed))
        rows.append(SimRow(N, eps, p, "histogram", "reference", "2f0", 2 * f0, None, n_reps, failed))
        return rows
    if cfg.experiment == "selection":
        for i, cor in enumerate(cfg.corrections):
            labels = [o[i] for o in ok]
            for metric, key in (("p_correct", "correct"), ("p_over", "over"), ("p_under", "under")):
                rows.append(_rate_rows(N, eps, p, "selection", cor, metric,
                                       labels.count(key), len(ok), n_reps, failed))
        return rows
    cal_cor = [(cal, cor) for cal in cfg.calibrations for cor in cfg.corrections]
    for i, (cal, cor) in enumerate(cal_cor):
        hits = sum(bool(o[i]) for o in ok)
        rows.append(_rate_rows(N, eps, p, cal, cor, "rejection_rate", hits, len(ok), n_reps, failed))
    return rows


def _estimate_seconds(N: int, p: int, reps: int, experiment: str) -> float:
    per_rep = 2e-9 * N * p * p + 5e-9 * N * p
    if experiment in ("typeI-hk", "selection"):
        per_rep += 30 * 1e-9 * p**3
    return per_rep * reps


def run_grid(
    cfg: SimConfig,
    threads: int | None = None,
    progress: Callable[[str], None] | None = None,
) -> SimGridResult:
    """Run every grid point of `cfg` and tabulate the configured metric."""
    threads = threads or cfg.threads
    n_reps = cfg.n_replications
    cells = cfg.grid()
    for N, eps, p in cells:
        if N > DESK_MAX_N or (cfg.epsilon_list and parse_epsilon(eps) > DESK_MAX_EPSILON):
            log.warning("grid point N=%d, p=%d exceeds desk scale; estimated %.0f s",
                        N, p, _estimate_seconds(N, p, n_reps, cfg.experiment))
    rows: list[SimRow] = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for N, eps, p in cells:
            reason = _skip_reason(cfg, N, p)
            if reason is not None:
                rows.append(SimRow(N, eps, p, _mode_label(cfg), "", "skipped", None, None, 0, 0, True))
                if progress:
                    progress(f"N={N} epsilon={eps} p={p}: skipped ({reason})")
                continue
            cell = _Cell(cfg.experiment, cfg.generator_spec(p), N, p, cfg.k0, cfg.alpha,
                         tuple(cfg.corrections), tuple(cfg.calibrations), cfg.selection_full_trail)
            outcomes = _run_cell(cell, n_reps, pool) if n_reps > 0 else []
            cell_rows = _summarize(cfg, N, eps, p, outcomes) if n_reps > 0 else []
            rows.extend(cell_rows)
            if progress:
                summary = ", ".join(
                    f"{r.mode}/{r.correction} {r.metric}={r.value:.4g}"
                    for r in cell_rows if r.value is not None and r.metric != "f0"
                )[:200]
                progress(f"N={N} epsilon={eps} p={p}: {summary or 'no replications'}")
    finally:
        if pool is not None:
            pool.shutdown()
    return SimGridResult(tuple(rows), cfg)


def _mode_label(cfg: SimConfig) -> str:
    if cfg.experiment in ("selection", "histogram"):
        return cfg.experiment
    return cfg.calibrations[0] if len(cfg.calibrations) == 1 else "+".join(cfg.calibrations)


def _require(cfg: SimConfig, experiments: tuple[str, ...], op: str) -> None:
    if cfg.experiment not in experiments:
        raise InvalidInputError(f"{op} runs {experiments}, config has {cfg.experiment!r}")


def run_type1_grid(cfg: SimConfig, threads: int | None = None, progress=None) -> SimGridResult:
    """Rejection rates under the null for each (N, epsilon) and test mode."""
    _require(cfg, ("typeI-h00", "typeI-hk", "typeI-tprime"), "run_type1_grid")
    return run_grid(cfg, threads, progress)


def run_selection_grid(cfg: SimConfig, threads: int | None = None, progress=None) -> SimGridResult:
    """Proportions of correct, over- and under-estimation of k0 by the sequential procedure."""
    _require(cfg, ("selection",), "run_selection_grid")
    return run_grid(cfg, threads, progress)


def run_histogram_summary(cfg: SimConfig, threads: int | None = None, progress=None) -> SimGridResult:
    """Mean, variance and quantiles of T0 and rho0*T0 next to the chi-square reference."""
    _require(cfg, ("histogram",), "run_histogram_summary")
    return run_grid(cfg, threads, progress)
