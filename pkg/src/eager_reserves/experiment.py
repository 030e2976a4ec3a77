"""Train/test comparison of LP rounding against the greedy baseline on
correlated log-normal bids."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithms import greedy_lazy_reserves, pro_lpr_run
from .auction import ReserveVector, build_reserve_grids, format_reserve, parse_reserve, total_revenue, zero_reserve_revenue
from .errors import SolverError, ValidationError
from .instances import LogNormalParams, gen_correlated_lognormal
from .profiles import solve_profile_lp
from .simplex import SimplexOptions

# substream roles; test set j uses ROLE_TEST + j
ROLE_MU, ROLE_TRAIN, ROLE_ROUND, ROLE_TEST = 0, 1, 2, 3


def substream_seed(master: int, *path: int) -> int:
    """64-bit key for the substream identified by ``path`` under ``master``."""
    words = np.random.SeedSequence([int(master), *map(int, path)]).generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    ws: tuple[float, ...] = (-0.2, 0.0, 0.2)
    instances_per_w: int = 50
    sigma: float = 0.1
    mu_range: tuple[float, float] = (0.0, 1.0)
    train_auctions: int = 100
    test_sets: int = 100
    test_auctions: int = 100
    grid_mode: str = "equally_spaced"
    grid_size: int = 30
    samples: int = 200
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ws", tuple(float(w) for w in self.ws))
        object.__setattr__(self, "mu_range", tuple(float(m) for m in self.mu_range))
        object.__setattr__(self, "solver", dict(self.solver))
        for name in ("instances_per_w", "train_auctions", "test_sets", "test_auctions", "samples"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.ws:
            raise ValidationError("need at least one correlation value w")
        if any(not -1 < w < 1 for w in self.ws):
            raise ValidationError("every w must lie in (-1, 1)")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if len(self.mu_range) != 2 or self.mu_range[0] > self.mu_range[1]:
            raise ValidationError("mu_range must be [low, high] with low <= high")
        self.solver_options()  # validates

    @property
    def instance_count(self) -> int:
        return len(self.ws) * self.instances_per_w

    def solver_options(self) -> SimplexOptions:
        try:
            return SimplexOptions(**self.solver)
        except TypeError as exc:
            raise ValidationError(f"bad solver options: {exc}") from None

    def to_json(self) -> dict:
        d = asdict(self)
        d["ws"] = list(self.ws)
        d["mu_range"] = list(self.mu_range)
        return d

    @classmethod
    def from_json(cls, obj: dict, **overrides) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        merged = {**obj, **{k: v for k, v in overrides.items() if v is not None}}
        if "seed" not in merged:
            raise ValidationError("config needs a seed")
        return cls(**merged)


@dataclass
class InstanceRecord:
    index: int
    w: float
    mu: float
    status: str = "ok"
    diagnostics: str = ""
    lp_objective: float = math.nan
    zero_revenue: float = math.nan
    prolpr_estimate: float = math.nan
    prolpr_standard_error: float = math.nan
    prolpr_rounding_mean: float = math.nan
    prolpr_best_revenue: float = math.nan
    greedy_revenue: float = math.nan
    best_vector: tuple[float, ...] = ()
    greedy_vector: tuple[float, ...] = ()
    lp_iterations: int = 0
    test_prolpr: list[float] = field(default_factory=list)
    test_greedy: list[float] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def prolpr_ratio(self) -> float:
        return self.prolpr_estimate / self.lp_objective if self.ok and self.lp_objective > 0 else math.nan

    @property
    def greedy_ratio(self) -> float:
        return self.greedy_revenue / self.lp_objective if self.ok and self.lp_objective > 0 else math.nan

    def gains(self) -> list[float | None]:
        return [(p - g) / g if g > 0 else None for p, g in zip(self.test_prolpr, self.test_greedy)]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[InstanceRecord]

    @property
    def failed(self) -> list[InstanceRecord]:
        return [r for r in self.records if not r.ok]

    @property
    def tested(self) -> bool:
        return any(r.test_prolpr for r in self.records)


def five_number(values: Sequence[float]) -> dict:
    """min / q25 / median / q75 / max with linear-interpolation quantiles."""
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"count": 0, "min": None, "q25": None, "median": None, "q75": None, "max": None}
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return {"count": int(v.size), "min": float(q[0]), "q25": float(q[1]), "median": float(q[2]),
            "q75": float(q[3]), "max": float(q[4])}


# --------------------------------------------------------------------------
# protocol


def _instance_params(cfg: ExperimentConfig, index: int) -> tuple[float, float]:
    w = cfg.ws[index // cfg.instances_per_w]
    lo, hi = cfg.mu_range
    u = np.random.Generator(np.random.Philox(key=substream_seed(cfg.seed, index, ROLE_MU))).random()
    return w, lo + (hi - lo) * float(u)


def _dataset(cfg: ExperimentConfig, w: float, mu: float, auctions: int, key: int):
    return gen_correlated_lognormal(LogNormalParams(mu, cfg.sigma, w, auctions, key))


def train_instance(cfg: ExperimentConfig, index: int) -> InstanceRecord:
    w, mu = _instance_params(cfg, index)
    rec = InstanceRecord(index, w, mu)
    ds = _dataset(cfg, w, mu, cfg.train_auctions, substream_seed(cfg.seed, index, ROLE_TRAIN))
    grid = build_reserve_grids(ds, cfg.grid_mode, cfg.grid_size)
    rec.zero_revenue = zero_reserve_revenue(ds)
    greedy = greedy_lazy_reserves(ds, grid)
    rec.greedy_vector = tuple(greedy.as_array(ds.n))
    rec.greedy_revenue = total_revenue(ds, greedy)
    try:
        sol, report, _ = solve_profile_lp(ds, grid, options=cfg.solver_options(), warm_start=greedy)
    except SolverError as exc:
        rec.status = "failed"
        rep = exc.report
        rec.diagnostics = str(exc) if rep is None else f"{exc} (iterations={rep.iterations}, residual={rep.max_residual:.3g})"
        return rec
    rec.lp_objective = sol.objective
    rec.lp_iterations = report.iterations
    out = pro_lpr_run(ds, sol, cfg.samples, substream_seed(cfg.seed, index, ROLE_ROUND))
    rec.prolpr_estimate = out.estimate
    rec.prolpr_standard_error = out.standard_error
    rec.prolpr_rounding_mean = out.rounding_mean
    rec.prolpr_best_revenue = out.best_revenue
    rec.best_vector = tuple(out.best_vector.as_array(ds.n))
    return rec


def run_training_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    records = []
    for i in range(cfg.instance_count):
        records.append(train_instance(cfg, i))
        if progress:
            progress(records[-1])
    return ExperimentResult(cfg, records)


def run_test_evaluation(cfg: ExperimentConfig, trained: ExperimentResult) -> ExperimentResult:
    """Score each instance's selected vectors on fresh test sets (paired data)."""
    if not trained.records:
        raise ValidationError("no instances")
    records = []
    for rec in trained.records:
        rec = replace(rec, test_prolpr=[], test_greedy=[])
        if rec.ok:
            best = ReserveVector.from_sequence(rec.best_vector)
            greedy = ReserveVector.from_sequence(rec.greedy_vector)
            for j in range(cfg.test_sets):
                key = substream_seed(cfg.seed, rec.index, ROLE_TEST + j)
                ds = _dataset(cfg, rec.w, rec.mu, cfg.test_auctions, key)
                rec.test_prolpr.append(total_revenue(ds, best))
                rec.test_greedy.append(total_revenue(ds, greedy))
        records.append(rec)
    return ExperimentResult(cfg, records)


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    return run_test_evaluation(cfg, run_training_experiment(cfg, progress))


# --------------------------------------------------------------------------
# reports

PER_INSTANCE_COLUMNS = (
    "instance", "w", "mu", "status", "lp_objective", "zero_revenue", "prolpr_estimate",
    "prolpr_standard_error", "prolpr_rounding_mean", "prolpr_best_revenue", "greedy_revenue",
    "prolpr_ratio", "greedy_ratio", "lp_iterations", "best_vector", "greedy_vector", "diagnostics",
)
PER_TESTSET_COLUMNS = ("instance", "w", "mu", "test_set", "prolpr_revenue", "greedy_revenue", "gain")


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _vec(v: Sequence[float]) -> str:
    return ";".join(str(format_reserve(float(r))) if math.isinf(r) else repr(float(r)) for r in v)


def per_instance_rows(result: ExperimentResult) -> list[list[str]]:
    rows = []
    for r in result.records:
        rows.append([str(r.index), repr(r.w), repr(r.mu), r.status, _num(r.lp_objective), _num(r.zero_revenue),
                     _num(r.prolpr_estimate), _num(r.prolpr_standard_error), _num(r.prolpr_rounding_mean),
                     _num(r.prolpr_best_revenue), _num(r.greedy_revenue), _num(r.prolpr_ratio),
                     _num(r.greedy_ratio), str(r.lp_iterations), _vec(r.best_vector), _vec(r.greedy_vector),
                     r.diagnostics])
    return rows


def per_testset_rows(result: ExperimentResult) -> list[list[str]]:
    rows = []
    for r in result.records:
        for j, (p, g, gain) in enumerate(zip(r.test_prolpr, r.test_greedy, r.gains())):
            rows.append([str(r.index), repr(r.w), repr(r.mu), str(j), repr(p), repr(g), _num(gain)])
    return rows


def _csv_text(header: Sequence[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def read_per_instance(text: str) -> list[dict]:
    """Parse ``per_instance.csv`` back into typed values."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for k, v in row.items():
            if k in ("instance", "lp_iterations"):
                rec[k] = int(v)
            elif k in ("status", "diagnostics"):
                rec[k] = v
            elif k in ("best_vector", "greedy_vector"):
                rec[k] = tuple(parse_reserve(x) for x in v.split(";")) if v else ()
            else:
                rec[k] = float(v) if v != "" else math.nan
        out.append(rec)
    return out


def summarize(result: ExperimentResult) -> dict:
    by_w = {}
    for w in result.config.ws:
        recs = [r for r in result.records if r.w == w and r.ok]
        gains = [g for r in recs for g in r.gains()]
        by_w[repr(w)] = {
            "instances": len(recs),
            "prolpr_ratio": five_number([r.prolpr_ratio for r in recs]),
            "greedy_ratio": five_number([r.greedy_ratio for r in recs]),
            "test_gain": five_number([g for g in gains if g is not None]),
            "undefined_gains": sum(g is None for g in gains),
        }
    ok = [r for r in result.records if r.ok]
    all_gains = [g for r in ok for g in r.gains() if g is not None]
    ratios = [r.prolpr_ratio for r in ok]
    return {
        "config": result.config.to_json(),
        "instances": len(result.records),
        "failed_instances": [{"instance": r.index, "diagnostics": r.diagnostics} for r in result.failed],
        "headline_ratio": "prolpr_estimate / lp_objective; prolpr_estimate is the mean over draws of "
                          "max(zero-reserve revenue, draw revenue)",
        "min_prolpr_ratio": min(ratios) if ratios else None,
        "max_prolpr_ratio": max(ratios) if ratios else None,
        "median_test_gain": float(np.median(all_gains)) if all_gains else None,
        "undefined_gains": sum(g is None for r in ok for g in r.gains()),
        "by_w": by_w,
    }


def emit_report(result: ExperimentResult, out_dir: str | Path, plots: bool = False) -> list[Path]:
    if not result.records:
        raise ValidationError("no instances")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = out / "summary.json"
    summary.write_text(json.dumps(summarize(result), indent=1, sort_keys=True) + "\n")
    written.append(summary)
    inst = out / "per_instance.csv"
    inst.write_text(_csv_text(PER_INSTANCE_COLUMNS, per_instance_rows(result)))
    written.append(inst)
    tests = out / "per_testset.csv"
    tests.write_text(_csv_text(PER_TESTSET_COLUMNS, per_testset_rows(result)))
    written.append(tests)
    if plots:
        from .plots import gain_boxplot, ratio_boxplot

        written.append(ratio_boxplot(result, out / "training_ratio_box.svg"))
        written.append(gain_boxplot(result, out / "test_gain_box.svg"))
    return written
