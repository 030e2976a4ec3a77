"""Command-line entry point: ``eager-reserves <command> ...``.

Exit status is 0 on success, 1 for invalid input (or a failed theory
check) and 2 when the LP solver fails to reach optimality.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .algorithms import (
    brute_force_optimum,
    condition_gap,
    condition_thresholds,
    greedy_lazy_reserves,
    pro_lpr_run,
)
from .auction import (
    GRID_MODES,
    Dataset,
    ReserveGrid,
    build_reserve_grids,
    dataset_to_csv,
    dataset_to_json,
    parse_dataset,
    total_revenue,
    zero_reserve_revenue,
)
from .errors import ReserveError, SolverError, ValidationError
from .instances import (
    GapInstanceSpec,
    LogNormalParams,
    TightInstanceSpec,
    gap_esp_star,
    gap_feasible_lp_value,
    gen_correlated_lognormal,
    gap_instance,
    tight_instance,
    tight_rounding_value,
)
from .profiles import LpSolution, check_lp_feasibility, solve_profile_lp
from .simplex import SimplexOptions


def _load_dataset(path: str) -> Dataset:
    fmt = "json" if path.lower().endswith(".json") else "csv"
    with open(path, "rb") as fh:
        return parse_dataset(fh, fmt)


def _write_dataset(ds: Dataset, path: str) -> None:
    text = dataset_to_json(ds) if path.lower().endswith(".json") else dataset_to_csv(ds)
    Path(path).write_text(text)


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _grid(args, ds: Dataset) -> ReserveGrid:
    if getattr(args, "grid_file", None):
        return ReserveGrid.from_json(_load_json(args.grid_file))
    return build_reserve_grids(ds, args.grid, args.grid_size if args.grid == "equally_spaced" else None)


def _solution_grid(obj: dict, ds: Dataset) -> ReserveGrid:
    # solutions written by solve-lp carry their grid; fall back to own bids
    if "grid" in obj:
        return ReserveGrid.from_json(obj["grid"])
    return build_reserve_grids(ds, "own_bids")


def _add_grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", choices=GRID_MODES, default="own_bids")
    p.add_argument("--grid-size", type=int, default=30, help="points for equally_spaced")
    p.add_argument("--grid-file", help="JSON grid {buyer: [reserves...]}; overrides --grid")


# --------------------------------------------------------------------------
# commands


def cmd_solve_lp(args) -> int:
    ds = _load_dataset(args.dataset)
    grid = _grid(args, ds)
    opts = SimplexOptions(tol=args.tol, pricing=args.pricing, max_iters=args.max_iters)
    sol, report, _ = solve_profile_lp(ds, grid, options=opts, max_variables=args.max_variables)
    obj = sol.to_json()
    obj["grid"] = grid.to_json()
    obj["status"] = report.status
    obj["iterations"] = report.iterations
    obj["max_residual"] = report.max_residual
    _emit(obj, args.out)
    return 0


def cmd_round(args) -> int:
    ds = _load_dataset(args.dataset)
    sol = LpSolution.from_json(_load_json(args.lpsolution), ds)
    out = pro_lpr_run(ds, sol, args.samples, args.seed)
    obj = out.to_json()
    obj["best_of_expectations"] = out.best_of_expectations
    obj["lp_objective"] = sol.objective
    _emit(obj, args.out)
    return 0


def cmd_greedy(args) -> int:
    ds = _load_dataset(args.dataset)
    r = greedy_lazy_reserves(ds, _grid(args, ds))
    _emit({"reserves": r.to_json(), "revenue": total_revenue(ds, r)}, args.out)
    return 0


def cmd_brute_force(args) -> int:
    ds = _load_dataset(args.dataset)
    res = brute_force_optimum(ds, _grid(args, ds), cap=args.cap)
    _emit({"reserves": res.reserves.to_json(), "revenue": res.value, "evaluated": res.evaluated}, args.out)
    return 0


def cmd_gen(args) -> int:
    meta: dict = {"family": args.family}
    if args.family == "lognormal":
        params = LogNormalParams(args.mu, args.sigma, args.w, args.auctions, args.seed)
        ds = gen_correlated_lognormal(params)
        meta.update(mu=params.mu, sigma=params.sigma, w=params.w, auctions=params.auctions, seed=params.seed)
    elif args.family == "gap":
        spec = GapInstanceSpec(args.n, args.lam, args.k)
        ds = gap_instance(spec)
        meta.update(n=spec.n, lam=spec.lam, k=spec.k, esp_star=gap_esp_star(spec),
                    feasible_lp_value=gap_feasible_lp_value(spec))
    else:
        spec = TightInstanceSpec(args.k, args.epsilon)
        inst = tight_instance(spec)
        ds = inst.ds
        sol_path = Path(args.out).with_suffix(".solution.json")
        obj = inst.sol.to_json()
        obj["grid"] = inst.grid.to_json()
        sol_path.write_text(json.dumps(obj, indent=1) + "\n")
        meta.update(k=spec.k, epsilon=spec.epsilon, lp_objective=inst.sol.objective,
                    rounding_value=tight_rounding_value(spec), solution=sol_path.name)
    _write_dataset(ds, args.out)
    Path(args.out).with_suffix(".meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    return 0


def cmd_experiment(args) -> int:
    from .experiment import ExperimentConfig, emit_report, run_experiment

    base = _load_json(args.config) if args.config else {}
    cfg = ExperimentConfig.from_json(
        base, seed=args.seed, instances_per_w=args.instances_per_w, test_sets=args.test_sets,
        samples=args.samples, train_auctions=args.train_auctions, test_auctions=args.test_auctions,
    )

    def progress(rec):
        if not args.quiet:
            print(f"instance {rec.index}: {rec.status} ratio={rec.prolpr_ratio:.4f}", file=sys.stderr)

    result = run_experiment(cfg, progress)
    for path in emit_report(result, args.out, plots=args.plots):
        print(path)
    return 0


def cmd_verify_theory(args) -> int:
    from .theory import verify_theory

    checks = verify_theory(args.step)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "passed", "detail"])
            for c in checks:
                w.writerow([c.name, c.passed, c.detail])
    return 0 if all(c.passed for c in checks) else 1


def cmd_check_conditions(args) -> int:
    ds = _load_dataset(args.dataset)
    obj = _load_json(args.lpsolution)
    sol = LpSolution.from_json(obj, ds)
    grid = _solution_grid(obj, ds)
    feas = check_lp_feasibility(ds, grid, sol, args.tol)
    worst = None
    rows = []
    for a in ds.auctions:
        reports = [condition_gap(a, sol, t) for t in condition_thresholds(a, grid)]
        top = max(reports, key=lambda r: r.gap)
        rows.append({"auction": a.id, "max_gap": top.gap, "t": top.t})
        if worst is None or top.gap > worst["max_gap"]:
            worst = rows[-1]
    _emit({
        "feasible": feas.feasible,
        "max_residual": feas.max_residual,
        "violated_rows": feas.violated_rows,
        "max_gap": worst["max_gap"],
        "worst_auction": worst["auction"],
        "worst_threshold": worst["t"],
        "zero_reserve_revenue": zero_reserve_revenue(ds),
        "auctions": rows,
    }, args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eager-reserves", description="Reserve prices for eager second-price auctions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-lp", help="solve the profile LP of a dataset")
    p.add_argument("dataset")
    _add_grid_args(p)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--pricing", choices=("devex", "dantzig"), default="devex")
    p.add_argument("--max-variables", type=int, default=1_000_000)
    p.add_argument("--max-iters", type=int, help="simplex pivot limit (default scales with the LP size)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_lp)

    p = sub.add_parser("round", help="sample reserves from an LP solution")
    p.add_argument("dataset")
    p.add_argument("lpsolution")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("greedy", help="per-buyer lazy-optimal reserves")
    p.add_argument("dataset")
    _add_grid_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("brute-force", help="exhaustive search over the reserve grid")
    p.add_argument("dataset")
    _add_grid_args(p)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_brute_force)

    p = sub.add_parser("gen", help="generate a dataset")
    gen = p.add_subparsers(dest="family", required=True)
    g = gen.add_parser("lognormal")
    g.add_argument("--mu", type=float, required=True)
    g.add_argument("--sigma", type=float, default=0.1)
    g.add_argument("--w", type=float, default=0.0)
    g.add_argument("--auctions", type=int, default=100)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g = gen.add_parser("gap")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--lam", type=float, default=GapInstanceSpec.lam)
    g.add_argument("--k", type=float, default=GapInstanceSpec.k)
    g.add_argument("--out", required=True)
    g = gen.add_parser("tight")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--epsilon", type=float, default=TightInstanceSpec.epsilon)
    g.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("experiment", help="run the train/test comparison")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--instances-per-w", type=int)
    p.add_argument("--test-sets", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--train-auctions", type=int)
    p.add_argument("--test-auctions", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify-theory", help="numeric checks of the rounding bound")
    p.add_argument("--out", help="CSV file for the check table")
    p.add_argument("--step", type=float, default=1e-4)
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("check-conditions", help="feasibility and tail-condition gaps of an LP solution")
    p.add_argument("dataset")
    p.add_argument("lpsolution")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_conditions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    except (ReserveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
