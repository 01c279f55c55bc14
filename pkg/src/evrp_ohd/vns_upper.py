"""Upper-level variable neighbourhood search over truck assignments.

An upper solution is a vector of truck slots, each unassigned (``"0"``),
conventional (``"1c"``) or electric (``"1e"``), plus the customer set of every
slot. Routes inside a slot are delegated to :func:`tabu_search_route`, whose
results are cached by (engine, customer set, night allowed), so only trucks
whose sets changed cost a lower-level call.
"""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field, replace

from . import ts_lower
from .model import (
    Engine,
    Instance,
    Solution,
    TruckPlan,
    Violation,
    combine_objective,
    finalize_solution,
    purchase_cost,
    recharge_minutes,
    required_evse_count,
    validate,
)

log = logging.getLogger(__name__)

UNASSIGNED, CONVENTIONAL, ELECTRIC = "0", "1c", "1e"
STATUS_ENGINE = {CONVENTIONAL: Engine.CONVENTIONAL, ELECTRIC: Engine.ELECTRIC}

ONE_INSERT = "1-insert"
ONE_SWAP = "1-swap"
TWO_INSERT = "2-insert"
TYPE_CHANGE = "type-change"
ROUTE_INSERT = "route-insert"
ROUTE_DELETE = "route-delete"
STRUCTURES = (ONE_INSERT, ONE_SWAP, TWO_INSERT, TYPE_CHANGE, ROUTE_INSERT, ROUTE_DELETE)


@dataclass(frozen=True)
class VnsConfig:
    max_computation_time: float = 60.0  # seconds
    order: tuple[str, ...] = STRUCTURES
    shake_intensity: int | None = None  # None: every truck may be a move source
    sample_cap: int = 200
    seed: int = 0
    max_idle_cycles: int = 50
    max_steps: int | None = None  # deterministic budget: neighbourhood evaluations

    def __post_init__(self):
        if sorted(self.order) != sorted(STRUCTURES):
            raise ValueError(f"order must be a permutation of {STRUCTURES}")
        if self.sample_cap < 1:
            raise ValueError("sample_cap must be at least 1")
        if self.shake_intensity is not None and self.shake_intensity < 1:
            raise ValueError("shake_intensity must be at least 1")
        if self.max_idle_cycles < 1:
            raise ValueError("max_idle_cycles must be at least 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class LowerResult:
    engine: Engine
    day: tuple[int, ...]
    night: tuple[int, ...]
    day_time: int
    night_time: int
    excess: int
    recharge: int


@dataclass(frozen=True)
class Evaluation:
    plans: tuple[TruckPlan, ...]  # one per slot, empty plan for unassigned slots
    purchase: float
    travel: int
    objective: object
    excess: int
    evse_count: int

    @property
    def feasible(self) -> bool:
        return self.excess == 0


@dataclass(frozen=True)
class UpperSolution:
    status: tuple[str, ...]
    sets: tuple[frozenset, ...]
    evaluation: Evaluation | None = field(default=None, compare=False)

    def assigned(self) -> list[int]:
        return [k for k, s in enumerate(self.status) if s != UNASSIGNED]

    def with_sets(self, changes: dict[int, frozenset], status: dict[int, str] | None = None) -> "UpperSolution":
        st = list(self.status)
        sets = list(self.sets)
        for k, v in changes.items():
            sets[k] = frozenset(v)
            if not v:
                st[k] = UNASSIGNED
        for k, v in (status or {}).items():
            st[k] = v
        return UpperSolution(tuple(st), tuple(sets))


class Evaluator:
    """Prices upper solutions, memoising lower-level tabu searches."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.ohd = instance.ohd_set
        self.cache: dict = {}
        self.lower_calls = 0

    def lower(self, engine: Engine, customers: frozenset, night: bool) -> LowerResult:
        key = (engine, customers, night)
        got = self.cache.get(key)
        if got is None:
            self.lower_calls += 1
            eligible = customers & self.ohd if night else ()
            res = ts_lower.tabu_search_route(self.instance, engine, sorted(customers), eligible)
            excess = ts_lower.string_excess(self.instance, res.route, eligible)
            r = recharge_minutes(res.day_time, self.instance.charging.recharge_speed) if res.route.night else 0
            got = self.cache[key] = LowerResult(engine, res.route.day, res.route.night,
                                                res.day_time, res.night_time, excess, r)
        return got

    def options(self, status: str, customers: frozenset) -> list[LowerResult]:
        engine = STATUS_ENGINE[status]
        if engine is Engine.CONVENTIONAL:
            return [self.lower(engine, customers, False)]
        day_only = self.lower(engine, customers, False)
        if not customers & self.ohd:
            return [day_only]
        with_night = self.lower(engine, customers, True)
        if not with_night.night:
            return [with_night if (with_night.excess, with_night.day_time) < (day_only.excess, day_only.day_time)
                    else day_only]
        return [with_night, day_only]

    def rank(self, ev: Evaluation) -> tuple:
        obj = ev.objective if isinstance(ev.objective, tuple) else (ev.objective,)
        return (ev.excess, *obj)

    def _price(self, picks, nc, ne, fleet_excess):
        inst = self.instance
        rsum = sum(p.recharge for p in picks)
        evse = required_evse_count([rsum], inst.charging.break_window)
        travel = 0
        for p in picks:
            if inst.costs.travel_electric_only and p.engine is not Engine.ELECTRIC:
                continue
            travel += p.day_time + p.night_time
        purchase = purchase_cost(inst.costs, nc, ne, evse)
        obj = combine_objective(purchase, travel, inst.costs.objective_mode)
        excess = sum(p.excess for p in picks) + fleet_excess
        return purchase, travel, obj, excess, evse

    def evaluate(self, sol: UpperSolution) -> UpperSolution:
        if sol.evaluation is not None:
            return sol
        inst = self.instance
        slots = sol.assigned()
        opts = [self.options(sol.status[k], sol.sets[k]) for k in slots]
        nc = sum(1 for k in slots if sol.status[k] == CONVENTIONAL)
        ne = len(slots) - nc
        fleet_excess = max(0, nc - inst.trucks.max_conventional) + max(0, ne - inst.trucks.max_electric)

        picks = [o[0] for o in opts]
        priced = self._price(picks, nc, ne, fleet_excess)
        switchable = [i for i, o in enumerate(opts) if len(o) == 2]
        if switchable and inst.costs.evse_cost > 0:
            picks, priced = self._trade_recharge(opts, picks, priced, switchable, nc, ne, fleet_excess)

        plans = [TruckPlan(Engine.CONVENTIONAL)] * len(sol.status)
        for k, p in zip(slots, picks):
            plans[k] = TruckPlan(p.engine, p.day, p.night, p.recharge)
        purchase, travel, obj, excess, evse = priced
        ev = Evaluation(tuple(plans), purchase, travel, obj, excess, evse)
        return replace(sol, evaluation=ev)

    def _trade_recharge(self, opts, picks, priced, switchable, nc, ne, fleet_excess):
        """Move electric trucks back to day-only tours when the EVSE saving pays.

        For each smaller EVSE count, trucks are switched in order of travel and
        excess added per recharge minute saved until the recharge total fits.
        """
        def key(pr):
            _, _, obj, excess, _ = pr
            return (excess, *(obj if isinstance(obj, tuple) else (obj,)))

        best_picks, best_priced = picks, priced
        bw = self.instance.charging.break_window
        rsum = sum(p.recharge for p in picks)
        current = required_evse_count([rsum], bw)

        def cost_per_minute(i):
            night, day = opts[i]
            saved = night.recharge
            added = (day.excess - night.excess, (day.day_time + day.night_time) - (night.day_time + night.night_time))
            return (added[0] / saved if saved else math.inf, added[1] / saved if saved else math.inf, i)

        order = sorted(switchable, key=cost_per_minute)
        for target in range(current - 1, -1, -1):
            trial = list(picks)
            total = rsum
            for i in order:
                if total <= target * bw:
                    break
                total -= trial[i].recharge
                trial[i] = opts[i][1]
            if total > target * bw:
                break
            pr = self._price(trial, nc, ne, fleet_excess)
            if key(pr) < key(best_priced):
                best_picks, best_priced = trial, pr
        return best_picks, best_priced

    def to_solution(self, sol: UpperSolution) -> Solution:
        ev = self.evaluate(sol).evaluation
        plans = [ev.plans[k] for k in sol.assigned()]
        return finalize_solution(self.instance, plans)


# -- initial solution ------------------------------------------------------

def k_medoids(instance: Instance, k: int, rng: random.Random, max_rounds: int = 50):
    """Cluster customers around ``k`` medoids by daytime travel time."""
    customers = list(instance.customers)
    mat = instance.travel_day
    medoids = sorted(rng.sample(customers, k))
    clusters = {}
    for _ in range(max_rounds):
        clusters = {m: [] for m in medoids}
        for c in customers:
            if c in clusters:
                clusters[c].append(c)
                continue
            m = min(medoids, key=lambda m: (mat[m][c], m))
            clusters[m].append(c)
        new = sorted(min(members, key=lambda x: (sum(mat[x][y] for y in members), x))
                     for members in clusters.values())
        if new == medoids:
            break
        medoids = new
    else:
        clusters = {m: [] for m in medoids}
        for c in customers:
            m = c if c in clusters else min(medoids, key=lambda m: (mat[m][c], m))
            clusters[m].append(c)
    return [sorted(clusters[m]) for m in medoids]


def initial_solution_by_clustering(instance: Instance, seed=0, evaluator: Evaluator | None = None,
                                   slots: int | None = None) -> UpperSolution:
    """One conventional truck per k-medoid cluster, ``k = ceil(total volume / Q^C)``.

    Range, fleet bounds and the other constraints are ignored here; the search
    repairs whatever the clustering breaks.
    """
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    customers = instance.customers
    if not customers:
        return UpperSolution((), ())
    k = math.ceil(instance.total_volume() / instance.trucks.capacity_conventional)
    k = max(1, min(k, len(customers)))
    clusters = k_medoids(instance, k, rng)
    fleet = instance.trucks
    if slots is None:
        slots = min(fleet.max_conventional + fleet.max_electric, len(customers))
    slots = max(slots, k)
    status = [CONVENTIONAL] * k + [UNASSIGNED] * (slots - k)
    sets = [frozenset(c) for c in clusters] + [frozenset()] * (slots - k)
    sol = UpperSolution(tuple(status), tuple(sets))
    return (evaluator or Evaluator(instance)).evaluate(sol)


# -- shaking and neighbourhoods -------------------------------------------

def shake(solution: UpperSolution, structure_index: int, seed=None) -> list[int]:
    """Random priority order over truck slots; the solution itself is untouched."""
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    order = list(range(len(solution.status)))
    rng.shuffle(order)
    return order


def _medoid(mat, members) -> int:
    return min(members, key=lambda x: (sum(mat[x][y] for y in members), x))


def _generate(instance: Instance, sol: UpperSolution, structure: str, priority, rng, intensity):
    """Yield ``(changes, status_changes)`` moves, highest-priority trucks first."""
    active = [k for k in priority if sol.status[k] != UNASSIGNED]
    sources = active if intensity is None else active[:intensity]
    members = {k: sorted(sol.sets[k]) for k in active}
    for k in active:
        rng.shuffle(members[k])

    if structure == ONE_INSERT:
        for a in sources:
            for c in members[a]:
                for b in active:
                    if b != a:
                        yield {a: sol.sets[a] - {c}, b: sol.sets[b] | {c}}, None
    elif structure == ONE_SWAP:
        for ia, a in enumerate(sources):
            for b in active:
                if b == a or (b in sources and sources.index(b) < ia):
                    continue
                for x in members[a]:
                    for y in members[b]:
                        yield {a: (sol.sets[a] - {x}) | {y}, b: (sol.sets[b] - {y}) | {x}}, None
    elif structure == TWO_INSERT:
        for a in sources:
            m = members[a]
            for i in range(len(m)):
                for j in range(i + 1, len(m)):
                    pair = {m[i], m[j]}
                    for b in active:
                        if b != a:
                            yield {a: sol.sets[a] - pair, b: sol.sets[b] | pair}, None
    elif structure == TYPE_CHANGE:
        for a in sources:
            flipped = ELECTRIC if sol.status[a] == CONVENTIONAL else CONVENTIONAL
            yield {}, {a: flipped}
    elif structure == ROUTE_INSERT:
        free = [k for k in priority if sol.status[k] == UNASSIGNED]
        if not free:
            return
        slot = min(free)
        for a in sources:
            if len(members[a]) < 2:
                continue
            for c in members[a]:
                for st in (ELECTRIC, CONVENTIONAL):
                    yield {a: sol.sets[a] - {c}, slot: frozenset({c})}, {slot: st}
    elif structure == ROUTE_DELETE:
        if len(active) < 2:
            return
        mat = instance.travel_day
        for a in sources:
            others = sorted(k for k in active if k != a)
            medoids = {k: _medoid(mat, sol.sets[k]) for k in others}
            new = {k: set(sol.sets[k]) for k in others}
            for c in sorted(sol.sets[a]):
                tgt = min(others, key=lambda k: (mat[c][medoids[k]], k))
                new[tgt].add(c)
            changes = {k: frozenset(v) for k, v in new.items() if v != sol.sets[k]}
            changes[a] = frozenset()
            yield changes, None
    else:
        raise ValueError(f"unknown neighbourhood structure {structure!r}")


def neighborhood_set(instance: Instance, solution: UpperSolution, structure: str, priority, cap: int,
                     evaluator: Evaluator | None = None, rng=None, intensity: int | None = None,
                     stats: dict | None = None) -> list[UpperSolution]:
    """Evaluated one-move neighbours of ``solution``, at most ``cap`` of them."""
    evaluator = evaluator or Evaluator(instance)
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)
    out = []
    truncated = False
    for changes, status in _generate(instance, solution, structure, priority, rng, intensity):
        if len(out) >= cap:
            truncated = True
            break
        out.append(evaluator.evaluate(solution.with_sets(changes, status)))
    if stats is not None:
        stats["truncated"] = truncated
    return out


# -- main loop -------------------------------------------------------------

@dataclass
class VnsRun:
    solution: Solution
    upper: UpperSolution
    feasible: bool
    violations: list[Violation]
    initial_objective: object
    objective: object
    initial_rank: tuple  # (constraint excess, objective...) of the clustering start
    trace: list[dict]
    lower_calls: int
    elapsed: float


def vns_search(instance: Instance, config: VnsConfig | None = None) -> VnsRun:
    config = config or VnsConfig()
    start = time.monotonic()
    rng = random.Random(config.seed)
    evaluator = Evaluator(instance)
    sol = initial_solution_by_clustering(instance, rng, evaluator)
    initial_objective = sol.evaluation.objective if sol.evaluation else 0
    trace: list[dict] = []
    if not instance.customers:
        return VnsRun(Solution(), sol, True, [], 0, 0, (0, 0), trace, 0, 0.0)
    initial_rank = evaluator.rank(sol.evaluation)

    n = 0
    idle_cycles = 0
    cycle_truncated = False
    step = 0
    order = config.order
    while time.monotonic() - start <= config.max_computation_time:
        if config.max_steps is not None and step >= config.max_steps:
            break
        structure = order[n]
        priority = shake(sol, n, rng)
        stats = {}
        cands = neighborhood_set(instance, sol, structure, priority, config.sample_cap,
                                 evaluator, rng, config.shake_intensity, stats)
        cycle_truncated |= stats["truncated"]
        best = None
        for cand in cands:
            if best is None or evaluator.rank(cand.evaluation) < evaluator.rank(best.evaluation):
                best = cand
        improved = best is not None and evaluator.rank(best.evaluation) < evaluator.rank(sol.evaluation)
        step += 1
        if improved:
            sol = best
        trace.append({"step": step, "structure": structure, "index": n, "candidates": len(cands),
                      "accepted": improved, "rank": evaluator.rank(sol.evaluation)})
        if improved:
            n = 0
            idle_cycles = 0
            cycle_truncated = False
            continue
        n += 1
        if n == len(order):
            n = 0
            idle_cycles += 1
            # a cycle that enumerated every neighbourhood completely cannot improve on a rerun
            if not cycle_truncated or idle_cycles >= config.max_idle_cycles:
                break
            cycle_truncated = False

    solution = evaluator.to_solution(sol)
    violations = validate(instance, solution)
    ev = sol.evaluation
    log.debug("vns finished: %d steps, %d lower calls, objective %s", step, evaluator.lower_calls, ev.objective)
    return VnsRun(solution, sol, not violations, violations, initial_objective, ev.objective, initial_rank,
                  trace, evaluator.lower_calls, time.monotonic() - start)


def vns_solve(instance: Instance, config: VnsConfig | None = None) -> Solution:
    return vns_search(instance, config).solution
