"""Command-line front end: ``gen``, ``solve``, ``validate`` and ``sweep``.

Exit codes: 0 success, 1 usage or unreadable input, 2 infeasible, 3 internal error.
The sweep runs cells in worker processes; the default worker count comes from
the ``EVRP_OHD_THREADS`` environment variable and ``--threads`` overrides it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .exact import ExactLimitError, ExactLimits, InfeasibleError, solve_exact
from .instances import (
    MPH,
    GenParams,
    InstanceFormatError,
    generate,
    read_instance,
    read_solution,
    write_instance,
    write_solution,
)
from .model import (
    LEXICOGRAPHIC,
    WEIGHTED_SUM,
    Engine,
    Instance,
    MalformedRouteError,
    ModelError,
    Solution,
    objective_purchase,
    objective_travel,
    validate,
)
from .vns_upper import VnsConfig, vns_search

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "EVRP_OHD_THREADS"
OBJECTIVES = {"weighted": WEIGHTED_SUM, "lex": LEXICOGRAPHIC}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for infeasible here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ratio(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= x <= 1:
        raise argparse.ArgumentTypeError(f"ratio {x} outside [0, 1]")
    return x


def _positive_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {x}")
    return x


def _nonneg_int(text):
    x = int(text)
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {x}")
    return x


def _positive_float(text):
    x = float(text)
    if x <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {x}")
    return x


def _list_of(kind):
    def parse(text):
        try:
            out = [kind(t) for t in text.split(",") if t.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
        if not out:
            raise argparse.ArgumentTypeError("empty list")
        return out
    return parse


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return n


# GenParams fields exposed as flags, shared by gen and sweep
GEN_FLAGS = [
    ("--extent", "plane_extent", _positive_int, "side of the square service area, minutes of travel"),
    ("--night-speedup", "speed_ratio_night", _positive_float, "day time / night time ratio"),
    ("--volume-min", "volume_min", _positive_int, None),
    ("--volume-max", "volume_max", _positive_int, None),
    ("--dropoff", "unit_dropoff", _nonneg_int, "drop-off seconds per order"),
    ("--max-conventional", "max_conventional", _nonneg_int, None),
    ("--max-electric", "max_electric", _nonneg_int, None),
    ("--capacity", "capacity", _positive_int, "orders per shift, both engines"),
    ("--range-conventional", "range_conventional", _positive_int, "minutes"),
    ("--range-electric", "range_electric", _positive_int, "minutes"),
    ("--tco-conventional", "tco_conventional", _nonneg_int, None),
    ("--tco-electric", "tco_electric", _nonneg_int, None),
    ("--evse-cost", "evse_cost", _nonneg_int, None),
    ("--recharge-speed", "recharge_speed", _positive_float, "driving minutes restored per recharge minute"),
    ("--break-window", "break_window", _positive_int, "minutes between shifts"),
]


def _add_gen_flags(p):
    for flag, dest, kind, helptext in GEN_FLAGS:
        p.add_argument(flag, dest=dest, type=kind, default=None, help=helptext)


def _gen_overrides(args) -> dict:
    out = {dest: getattr(args, dest) for _, dest, _, _ in GEN_FLAGS if getattr(args, dest) is not None}
    if getattr(args, "objective", None):
        out["objective_mode"] = OBJECTIVES[args.objective]
    return out


def _make_params(**kw) -> GenParams:
    params = GenParams(**kw)
    problems = params.problems()
    if problems:
        raise UsageError("; ".join(problems))
    return params


# -- gen ---------------------------------------------------------------------

def cmd_gen(args) -> int:
    params = _make_params(customer_count=args.n, ohd_ratio=args.ohd, seed=args.seed, **_gen_overrides(args))
    inst = generate(params)
    write_instance(inst, args.out)
    print(f"n={len(inst.customers)} ohd={len(inst.customers_ohd)} volume={inst.total_volume()} out={args.out}")
    return EXIT_OK


# -- solve -------------------------------------------------------------------

def _with_objective(inst: Instance, objective: str | None) -> Instance:
    if objective is None:
        return inst
    return replace(inst, costs=replace(inst.costs, objective_mode=OBJECTIVES[objective]))


def summary_line(method: str, inst: Instance, sol: Solution, feasible: bool, wall: float) -> str:
    purchase = objective_purchase(sol, inst.costs)
    travel = objective_travel(inst, sol)
    trucks = sol.assigned()
    electric = sum(1 for t in trucks if t.engine is Engine.ELECTRIC)
    return (f"method={method} mode={inst.costs.objective_mode} purchase={purchase} travel={travel} "
            f"trucks={len(trucks)} electric={electric} evse={sol.evse_count} "
            f"feasible={int(feasible)} wall={wall:.3f}")


def cmd_solve(args) -> int:
    inst = _with_objective(read_instance(args.instance), args.objective)
    start = time.monotonic()
    if args.method == "exact":
        try:
            sol = solve_exact(inst, ExactLimits(time_budget=args.budget))
        except InfeasibleError as exc:
            print(f"method=exact feasible=0 reason={json.dumps(str(exc))}")
            return EXIT_INFEASIBLE
        feasible = True
    else:
        config = VnsConfig(max_computation_time=args.budget if args.budget is not None else 60.0,
                           seed=args.seed, sample_cap=args.sample_cap, max_steps=args.max_steps)
        run = vns_search(inst, config)
        sol, feasible = run.solution, run.feasible
        for v in run.violations:
            log.warning("%s", v)
    wall = time.monotonic() - start
    write_solution(sol, args.out, inst)
    print(summary_line(args.method, inst, sol, feasible, wall))
    return EXIT_OK if feasible else EXIT_INFEASIBLE


# -- validate ----------------------------------------------------------------

def cmd_validate(args) -> int:
    inst = read_instance(args.instance)
    sol = read_solution(args.solution, inst)
    violations = validate(inst, sol)
    for v in violations:
        print(f"constraint={v.constraint} magnitude={v.magnitude} {v}")
    if not violations:
        print("valid")
    return EXIT_INFEASIBLE if violations else EXIT_OK


# -- sweep -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    customer_count: int = 100
    ohd_ratios: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.5)
    ev_ranges: tuple[int, ...] = (420, 660)
    seeds: tuple[int, ...] = (0, 1, 2)
    # desk scale: a 240-minute service area with 40-order trucks needs about 8 trucks,
    # and a full route runs close to the shorter electric range
    base: dict = field(default_factory=lambda: {"objective_mode": LEXICOGRAPHIC, "plane_extent": 240,
                                                "capacity": 40})
    budget: float = 600.0  # wall-clock seconds per run; a safety net, not the binding limit
    max_steps: int | None = 200
    sample_cap: int = 40
    vns_seed: int = 0

    def problems(self) -> list[str]:
        out = []
        for name in ("ohd_ratios", "ev_ranges", "seeds"):
            if not getattr(self, name):
                out.append(f"{name} must be nonempty")
        out += [f"ohd ratio {r} outside [0, 1]" for r in self.ohd_ratios if not 0 <= r <= 1]
        out += [f"EV range {r} must be positive" for r in self.ev_ranges if r <= 0]
        if self.customer_count < 1:
            out.append("customer_count must be at least 1")
        if self.budget <= 0:
            out.append("budget must be positive")
        if self.sample_cap < 1:
            out.append("sample_cap must be at least 1")
        if self.max_steps is not None and self.max_steps < 1:
            out.append("max_steps must be at least 1")
        known = {f.name for f in fields(GenParams)} - {"customer_count", "ohd_ratio", "seed", "range_electric"}
        out += [f"unknown base parameter {k!r}" for k in self.base if k not in known]
        return out


SPEC_KEYS = {f.name for f in fields(SweepSpec)}


def load_sweep_spec(path) -> SweepSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read sweep spec {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("sweep spec must be a JSON object")
    unknown = sorted(set(doc) - SPEC_KEYS)
    if unknown:
        raise UsageError(f"unknown sweep spec keys: {', '.join(unknown)}")
    for key in ("ohd_ratios", "ev_ranges", "seeds"):
        if key in doc:
            doc[key] = tuple(doc[key])
    if "base" in doc:
        doc["base"] = {**SweepSpec().base, **doc["base"]}
    return SweepSpec(**doc)


HEADER_NOTES = [
    "EVRP-OHD scenario sweep. One row per (ohd_ratio, ev_range_min, seed) cell, then one mean row per (ohd_ratio, ev_range_min).",
    "trucks: trucks in use (A). routes: day routes plus night routes (B). ev_ratio_pct: (B - A) / A * 100.",
    "total_vht_h: total travel hours, day and night. total_vmt_mi: total_vht_h * 30, a nominal 30 MPH conversion, not measured mileage.",
    "avg_speed_mph: total_vmt_mi / total_vht_h. avg_vmt_per_route_mi, avg_vht_per_route_h: per route (B).",
    "avg_oh_per_truck_h: operation hours per truck, travel plus drop-off time.",
    "purchase: truck and charger cost. travel_min: total travel minutes. objective: purchase + travel_min.",
    "feasible: yes/no per cell, error if the cell crashed; on mean rows, feasible cells / cells. Means cover feasible cells only.",
    "Limitation: instances are synthetic Euclidean geometry; trends are comparable to simulated city networks, absolute values are not.",
]
COLUMNS = ["row", "ohd_ratio", "ev_range_min", "seed", "feasible", "trucks", "routes", "ev_ratio_pct", "evse",
           "total_vht_h", "total_vmt_mi", "avg_speed_mph", "avg_vmt_per_route_mi", "avg_vht_per_route_h",
           "avg_oh_per_truck_h", "purchase", "travel_min", "objective"]
METRICS = COLUMNS[5:]


def report_metrics(inst: Instance, sol: Solution) -> dict:
    """Numeric columns for one solved cell."""
    trucks = sol.assigned()
    a = len(trucks)
    b = a + sum(1 for t in trucks if t.night_route)
    travel = objective_travel(replace(inst, costs=replace(inst.costs, travel_electric_only=False)), sol)
    service = sum(inst.service_time[c] for t in trucks for c in t.day_route + t.night_route)
    vht = travel / 60
    vmt = vht * MPH
    purchase = objective_purchase(sol, inst.costs)
    return {
        "trucks": a,
        "routes": b,
        "ev_ratio_pct": 100 * (b - a) / a if a else 0.0,
        "evse": sol.evse_count,
        "total_vht_h": vht,
        "total_vmt_mi": vmt,
        "avg_speed_mph": vmt / vht if vht else 0.0,
        "avg_vmt_per_route_mi": vmt / b if b else 0.0,
        "avg_vht_per_route_h": vht / b if b else 0.0,
        "avg_oh_per_truck_h": (travel + service) / 60 / a if a else 0.0,
        "purchase": purchase,
        "travel_min": travel,
        "objective": purchase + travel,
    }


def _run_cell(job):
    spec, ratio, ev_range, seed = job
    start = time.monotonic()
    try:
        params = GenParams(spec.customer_count, ratio, seed, range_electric=ev_range, **spec.base)
        inst = generate(params)
        config = VnsConfig(max_computation_time=spec.budget, seed=spec.vns_seed,
                           sample_cap=spec.sample_cap, max_steps=spec.max_steps)
        run = vns_search(inst, config)
        feasible = not validate(inst, run.solution)
        row = {"feasible": "yes" if feasible else "no", **report_metrics(inst, run.solution)}
    except Exception as exc:  # a broken cell must not sink the sweep
        log.error("cell ohd=%s range=%s seed=%s failed: %s", ratio, ev_range, seed, exc)
        row = {"feasible": "error"}
    row.update(row="cell", ohd_ratio=ratio, ev_range_min=ev_range, seed=seed)
    row["wall_s"] = time.monotonic() - start
    return row


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3f}"
    return "" if v is None else str(v)


def run_sweep(spec: SweepSpec, threads: int = 1, timing: bool = False) -> str:
    """Solve every cell and return the CSV report text."""
    jobs = [(spec, r, d, s) for r in spec.ohd_ratios for d in spec.ev_ranges for s in spec.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_cell, jobs))  # map keeps job order
    else:
        rows = [_run_cell(j) for j in jobs]

    columns = COLUMNS + (["wall_s"] if timing else [])
    out = io.StringIO()
    for note in HEADER_NOTES:
        out.write(f"# {note}\n")
    writer = csv.DictWriter(out, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    for r in spec.ohd_ratios:
        for d in spec.ev_ranges:
            group = [row for row in rows if row["ohd_ratio"] == r and row["ev_range_min"] == d]
            good = [row for row in group if row["feasible"] == "yes"]
            mean = {"row": "mean", "ohd_ratio": r, "ev_range_min": d, "seed": "",
                    "feasible": f"{len(good)}/{len(group)}"}
            for k in METRICS + (["wall_s"] if timing else []):
                pool = good if k != "wall_s" else group
                mean[k] = sum(float(row[k]) for row in pool) / len(pool) if pool else None
            writer.writerow({k: _fmt(mean.get(k)) for k in columns})
    return out.getvalue()


def read_report(text: str) -> list[dict]:
    """Parse a sweep CSV, skipping the ``#`` header notes."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec) if args.spec else SweepSpec()
    changes = {}
    for name, attr in (("n", "customer_count"), ("ratios", "ohd_ratios"), ("ranges", "ev_ranges"),
                       ("seeds", "seeds"), ("budget", "budget"), ("max_steps", "max_steps"),
                       ("sample_cap", "sample_cap"), ("vns_seed", "vns_seed")):
        val = getattr(args, name)
        if val is not None:
            changes[attr] = tuple(val) if isinstance(val, list) else val
    base = {**spec.base, **_gen_overrides(args)}
    base.pop("range_electric", None)
    spec = replace(spec, base=base, **changes)
    problems = spec.problems()
    if problems:
        raise UsageError("; ".join(problems))
    text = run_sweep(spec, args.threads, args.timing)
    Path(args.out).write_text(text, encoding="utf-8")
    rows = read_report(text)
    cells = [r for r in rows if r["row"] == "cell"]
    bad = sum(1 for r in cells if r["feasible"] != "yes")
    print(f"cells={len(cells)} infeasible={bad} out={args.out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evrp-ohd", description="Fleet-mix electric routing with off-hour delivery.")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker processes for sweeps (default: ${THREADS_ENV} or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic instance")
    g.add_argument("--n", type=_nonneg_int, required=True, help="customer count")
    g.add_argument("--ohd", type=_ratio, default=0.0, help="share of customers accepting night delivery")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--objective", choices=sorted(OBJECTIVES), default=None)
    g.add_argument("--out", required=True)
    _add_gen_flags(g)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("--in", dest="instance", required=True)
    s.add_argument("--method", choices=("vns", "exact"), default="vns")
    s.add_argument("--budget", type=_positive_float, default=None, help="seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--objective", choices=sorted(OBJECTIVES), default=None,
                   help="override the instance's objective mode")
    s.add_argument("--max-steps", type=_positive_int, default=None,
                   help="neighbourhood evaluations; bounds the search independently of the clock")
    s.add_argument("--sample-cap", type=_positive_int, default=200)
    s.add_argument("--out", required=True)

    v = sub.add_parser("validate", help="check a solution against its instance")
    v.add_argument("--instance", required=True)
    v.add_argument("--solution", required=True)

    w = sub.add_parser("sweep", help="solve a grid of scenarios into a CSV report")
    w.add_argument("--spec", default=None, help="JSON sweep spec; flags override its values")
    w.add_argument("--n", type=_positive_int, default=None)
    w.add_argument("--ratios", type=_list_of(_ratio), default=None, help="comma-separated OHD ratios")
    w.add_argument("--ranges", type=_list_of(_positive_int), default=None, help="comma-separated EV ranges, minutes")
    w.add_argument("--seeds", type=_list_of(int), default=None, help="comma-separated instance seeds")
    w.add_argument("--budget", type=_positive_float, default=None, help="wall-clock seconds per cell")
    w.add_argument("--max-steps", type=_positive_int, default=None)
    w.add_argument("--sample-cap", type=_positive_int, default=None)
    w.add_argument("--vns-seed", type=int, default=None)
    w.add_argument("--objective", choices=sorted(OBJECTIVES), default=None)
    w.add_argument("--timing", action="store_true", help="add a wall_s column (breaks byte-identical output)")
    w.add_argument("--out", required=True)
    _add_gen_flags(w)
    return p


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "validate": cmd_validate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is None:
            args.threads = default_threads()
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"evrp-ohd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExactLimitError, InstanceFormatError, MalformedRouteError, ModelError, OSError) as exc:
        print(f"evrp-ohd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.exception("internal error")
        print(f"evrp-ohd: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
