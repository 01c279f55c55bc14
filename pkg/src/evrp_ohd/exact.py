"""Exact EVRP-OHD solutions for tiny instances by exhaustive enumeration.

Tour costs for every customer subset come from one Held-Karp pass per shift.
Solutions are then enumerated as set partitions of the customers, one block per
truck, where each block carries its non-dominated (engine, day/night split)
options. The coupling term (the shared EVSE count) is resolved at the leaves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .model import (
    Engine,
    Instance,
    ModelError,
    Shift,
    Solution,
    TruckPlan,
    combine_objective,
    purchase_cost,
    recharge_minutes,
    required_evse_count,
)

HARD_CUSTOMER_CAP = 12


class ExactLimitError(ModelError):
    pass


class InfeasibleError(ModelError):
    def __init__(self, message: str, customers: tuple[int, ...] = ()):
        super().__init__(message)
        self.customers = customers


@dataclass(frozen=True)
class ExactLimits:
    max_customers: int = 8
    max_trucks: int = 4
    time_budget: float | None = None  # seconds

    def __post_init__(self):
        if self.max_customers > HARD_CUSTOMER_CAP:
            raise ExactLimitError(f"max_customers is capped at {HARD_CUSTOMER_CAP}")


class SubsetTours:
    """Optimal depot-rooted tour for every subset of ``nodes`` under one matrix.

    ``best[S][j]`` is the cheapest way to start at node ``j``, visit the rest of
    ``S`` and return to the depot. Reconstructing forward while always taking the
    lowest node index among ties yields the lexicographically smallest optimal tour.
    """

    def __init__(self, matrix, depot: int, nodes):
        self.nodes = tuple(sorted(nodes))
        m = len(self.nodes)
        if m > HARD_CUSTOMER_CAP:
            raise ExactLimitError(f"{m} customers exceed the enumeration cap {HARD_CUSTOMER_CAP}")
        self.matrix = matrix
        self.depot = depot
        nd = self.nodes
        inf = float("inf")
        full = 1 << m
        best = [[inf] * m for _ in range(full)]
        for j in range(m):
            best[1 << j][j] = matrix[nd[j]][depot]
        for mask in range(1, full):
            row = best[mask]
            for j in range(m):
                bit = 1 << j
                if not mask & bit or mask == bit:
                    continue
                rest = mask ^ bit
                src = matrix[nd[j]]
                val = inf
                r = rest
                while r:
                    low = r & -r
                    k = low.bit_length() - 1
                    cand = src[nd[k]] + best[rest][k]
                    if cand < val:
                        val = cand
                    r ^= low
                row[j] = val
        self._best = best
        self._tour = [0] * full
        dep = matrix[depot]
        for mask in range(1, full):
            row = best[mask]
            self._tour[mask] = min(dep[nd[j]] + row[j] for j in range(m) if mask >> j & 1)

    def mask_of(self, customers) -> int:
        pos = {c: i for i, c in enumerate(self.nodes)}
        mask = 0
        for c in customers:
            mask |= 1 << pos[c]
        return mask

    def cost(self, mask: int) -> int:
        return self._tour[mask]

    def route(self, mask: int) -> tuple[int, ...]:
        nd, best, mat = self.nodes, self._best, self.matrix
        out = []
        prev = self.depot
        remaining = mask
        target = self._tour[mask]
        while remaining:
            for j in range(len(nd)):
                if remaining >> j & 1 and mat[prev][nd[j]] + best[remaining][j] == target:
                    break
            else:  # pragma: no cover - guarded by the DP identity
                raise AssertionError("tour reconstruction failed")
            out.append(nd[j])
            target = best[remaining][j]
            remaining ^= 1 << j
            prev = nd[j]
        return tuple(out)


def optimal_route(instance: Instance, customers, shift: Shift = Shift.DAY) -> tuple[tuple[int, ...], int]:
    customers = tuple(sorted(set(customers)))
    if len(customers) > HARD_CUSTOMER_CAP:
        raise ExactLimitError(f"{len(customers)} customers exceed the enumeration cap {HARD_CUSTOMER_CAP}")
    if not customers:
        return (), 0
    tours = SubsetTours(instance.matrix(Shift(shift)), instance.depot, customers)
    full = (1 << len(customers)) - 1
    return tours.route(full), tours.cost(full)


@dataclass(frozen=True)
class _Option:
    engine: Engine
    day_mask: int
    night_mask: int
    day_time: int
    night_time: int
    obj_travel: int
    recharge: int


def _block_options(instance: Instance, block: int, ctx) -> list[_Option]:
    fleet = instance.trucks
    load, service, day, night, ohd_mask, to_night = ctx
    opts = []
    svc = instance.include_service_in_range
    if fleet.max_conventional > 0 and load[block] <= fleet.capacity_conventional:
        t = day.cost(block)
        if t + (service[block] if svc else 0) <= fleet.range_conventional:
            travel = 0 if instance.costs.travel_electric_only else t
            opts.append(_Option(Engine.CONVENTIONAL, block, 0, t, 0, travel, 0))
    if fleet.max_electric > 0:
        cap, rng = fleet.capacity_electric, fleet.range_electric
        eligible = block & ohd_mask
        sub = eligible
        while True:
            a = block ^ sub
            if a and load[a] <= cap and load[sub] <= cap:
                ta = day.cost(a)
                tn = night.cost(to_night[sub]) if sub else 0
                if (ta + (service[a] if svc else 0) <= rng
                        and tn + (service[sub] if svc else 0) <= rng):
                    r = recharge_minutes(ta, instance.charging.recharge_speed) if sub else 0
                    opts.append(_Option(Engine.ELECTRIC, a, sub, ta, tn, ta + tn, r))
            if sub == 0:
                break
            sub = (sub - 1) & eligible
    # drop options dominated on (travel, recharge) within the same engine
    kept = []
    for o in sorted(opts, key=lambda o: (o.engine.value, o.obj_travel, o.recharge, o.day_mask)):
        if any(k.engine is o.engine and k.obj_travel <= o.obj_travel and k.recharge <= o.recharge
               for k in kept):
            continue
        kept.append(o)
    return kept


def _single_customer_feasible(instance: Instance, c: int) -> bool:
    fleet = instance.trucks
    svc = instance.service_time[c] if instance.include_service_in_range else 0
    v = instance.volume[c]
    d = instance.travel_day[instance.depot][c] + instance.travel_day[c][instance.depot] + svc
    nt = instance.travel_night[instance.depot][c] + instance.travel_night[c][instance.depot] + svc
    if fleet.max_conventional > 0 and v <= fleet.capacity_conventional and d <= fleet.range_conventional:
        return True
    if fleet.max_electric > 0 and v <= fleet.capacity_electric:
        if d <= fleet.range_electric:
            return True
        if c in instance.ohd_set and nt <= fleet.range_electric:
            return True
    return False


def solve_exact(instance: Instance, limits: ExactLimits | None = None) -> Solution:
    """Provably optimal solution under ``instance.costs.objective_mode``.

    Ties are broken by fewer trucks, then by the lexicographically smallest
    sorted list of (engine, day route, night route) triples.
    """
    limits = limits or ExactLimits()
    customers = instance.customers
    n = len(customers)
    fleet = instance.trucks
    if n > limits.max_customers:
        raise ExactLimitError(f"{n} customers exceed the limit of {limits.max_customers}")
    effective_fleet = min(fleet.max_conventional + fleet.max_electric, n)
    if effective_fleet > limits.max_trucks:
        raise ExactLimitError(f"fleet of {effective_fleet} trucks exceeds the limit of {limits.max_trucks}")
    if n == 0:
        return Solution((), 0)
    deadline = None if limits.time_budget is None else time.monotonic() + limits.time_budget

    stranded = tuple(c for c in customers if not _single_customer_feasible(instance, c))
    if stranded:
        raise InfeasibleError(
            "no truck can serve customer(s) " + ", ".join(map(str, stranded)) + " within range and capacity",
            stranded)

    day = SubsetTours(instance.travel_day, instance.depot, customers)
    ohd_nodes = [c for c in customers if c in instance.ohd_set]
    night = SubsetTours(instance.travel_night, instance.depot, ohd_nodes)
    full = (1 << n) - 1
    load = [0] * (full + 1)
    service = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        c = customers[low.bit_length() - 1]
        load[mask] = load[mask ^ low] + instance.volume[c]
        service[mask] = service[mask ^ low] + instance.service_time[c]
    ohd_mask = day.mask_of(ohd_nodes)
    # map a night-eligible mask over `customers` to the night tour table's own bit layout
    to_night = {}
    sub = ohd_mask
    while True:
        to_night[sub] = night.mask_of(customers[i] for i in range(n) if sub >> i & 1)
        if sub == 0:
            break
        sub = (sub - 1) & ohd_mask
    ctx = (load, service, day, night, ohd_mask, to_night)
    options_cache: dict[int, list[_Option]] = {}

    def options(block):
        got = options_cache.get(block)
        if got is None:
            got = options_cache[block] = _block_options(instance, block, ctx)
        return got

    costs = instance.costs
    mode = costs.objective_mode
    bw = instance.charging.break_window

    def score(nc, ne, rsum, travel):
        evse = required_evse_count([rsum], bw)
        return combine_objective(purchase_cost(costs, nc, ne, evse), travel, mode)

    best = {"score": None, "trucks": None, "picks": None, "key": None}

    def key_of(picks):
        plans = sorted(
            (o.engine.value, day.route(o.day_mask), night.route(to_night[o.night_mask]) if o.night_mask else ())
            for o in picks)
        return tuple(plans)

    def consider(picks, nc, ne, rsum, travel):
        s = score(nc, ne, rsum, travel)
        b = best["score"]
        if b is not None:
            if s > b:
                return
            if s == b:
                if len(picks) > best["trucks"]:
                    return
                if len(picks) == best["trucks"]:
                    k = key_of(picks)
                    if k >= best["key"]:
                        return
                    best.update(score=s, trucks=len(picks), picks=list(picks), key=k)
                    return
        best.update(score=s, trucks=len(picks), picks=list(picks), key=key_of(picks))

    def bound_exceeded(nc, ne, rsum, travel):
        b = best["score"]
        return b is not None and score(nc, ne, rsum, travel) > b

    picks: list[_Option] = []

    def search(remaining, nc, ne, rsum, travel):
        if deadline is not None and time.monotonic() > deadline:
            raise ExactLimitError("exact enumeration exceeded its time budget")
        if not remaining:
            consider(picks, nc, ne, rsum, travel)
            return
        if bound_exceeded(nc, ne, rsum, travel):
            return
        low = remaining & -remaining
        rest = remaining ^ low
        sub = rest
        while True:
            block = sub | low
            for o in options(block):
                if o.engine is Engine.CONVENTIONAL:
                    if nc >= fleet.max_conventional:
                        continue
                    picks.append(o)
                    search(remaining ^ block, nc + 1, ne, rsum, travel + o.obj_travel)
                else:
                    if ne >= fleet.max_electric:
                        continue
                    picks.append(o)
                    search(remaining ^ block, nc, ne + 1, rsum + o.recharge, travel + o.obj_travel)
                picks.pop()
            if sub == 0:
                break
            sub = (sub - 1) & rest

    search(full, 0, 0, 0, 0)
    if best["picks"] is None:
        raise InfeasibleError("no combination of trucks covers every customer within the fleet bounds")

    plans = []
    for o in best["picks"]:
        day_route = day.route(o.day_mask)
        night_route = night.route(to_night[o.night_mask]) if o.night_mask else ()
        plans.append(TruckPlan(o.engine, day_route, night_route, o.recharge))
    plans.sort(key=lambda p: (p.engine.value, p.day_route, p.night_route))
    evse = required_evse_count([p.recharge_time for p in plans], bw)
    return Solution(tuple(plans), evse)

