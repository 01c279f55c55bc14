"""Domain types, objectives and the constraint validator for EVRP-OHD.

A single-depot instance is served by conventional and electric trucks. Every
truck runs a day shift; electric trucks may also run a night shift over
customers that accept off-hour delivery, recharging at the depot during the
break in between. All durations are integer minutes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence


class ModelError(ValueError):
    pass


class MalformedRouteError(ModelError):
    pass


class DomainError(ModelError):
    pass


class Engine(str, enum.Enum):
    CONVENTIONAL = "conventional"
    ELECTRIC = "electric"


class Shift(str, enum.Enum):
    DAY = "day"
    NIGHT = "night"


WEIGHTED_SUM = "weighted_sum"
LEXICOGRAPHIC = "lexicographic"
OBJECTIVE_MODES = (WEIGHTED_SUM, LEXICOGRAPHIC)


@dataclass(frozen=True)
class FleetSpec:
    max_conventional: int
    max_electric: int
    capacity_conventional: int = 140
    capacity_electric: int = 140
    range_conventional: int = 720
    range_electric: int = 420

    def capacity(self, engine: Engine) -> int:
        if engine is Engine.ELECTRIC:
            return self.capacity_electric
        return self.capacity_conventional

    def range(self, engine: Engine) -> int:
        if engine is Engine.ELECTRIC:
            return self.range_electric
        return self.range_conventional


@dataclass(frozen=True)
class CostParams:
    tco_conventional: int = 1000
    tco_electric: int = 950
    evse_cost: int = 200
    objective_mode: str = WEIGHTED_SUM
    # restrict the travel objective to electric trucks, as (1-2) is literally written
    travel_electric_only: bool = False


@dataclass(frozen=True)
class ChargingParams:
    recharge_speed: float = 7
    break_window: int = 240


@dataclass(frozen=True)
class Instance:
    depot: int
    customers_day_only: tuple[int, ...]
    customers_ohd: tuple[int, ...]
    travel_day: tuple[tuple[int, ...], ...]
    travel_night: tuple[tuple[int, ...], ...]
    volume: tuple[int, ...]
    service_time: tuple[int, ...]
    trucks: FleetSpec
    costs: CostParams = field(default_factory=CostParams)
    charging: ChargingParams = field(default_factory=ChargingParams)
    include_service_in_range: bool = False

    @property
    def size(self) -> int:
        return len(self.travel_day)

    @property
    def customers(self) -> tuple[int, ...]:
        return tuple(sorted(self.customers_day_only + self.customers_ohd))

    @property
    def ohd_set(self) -> frozenset[int]:
        return frozenset(self.customers_ohd)

    def matrix(self, shift: Shift) -> tuple[tuple[int, ...], ...]:
        return self.travel_night if shift is Shift.NIGHT else self.travel_day

    def total_volume(self) -> int:
        return sum(self.volume[c] for c in self.customers)

    def problems(self) -> list[tuple[str, str]]:
        """Return ``(field_path, message)`` pairs for every broken invariant."""
        out = []
        n = self.size
        for name in ("travel_day", "travel_night"):
            mat = getattr(self, name)
            for i, row in enumerate(mat):
                if len(row) != n:
                    out.append((f"{name}[{i}]", f"row has {len(row)} entries, expected {n}"))
                    continue
                for j, t in enumerate(row):
                    if t < 0:
                        out.append((f"{name}[{i}][{j}]", f"negative travel time {t}"))
                if row[i] != 0:
                    out.append((f"{name}[{i}][{i}]", "diagonal entry must be 0"))
        for name in ("volume", "service_time"):
            if len(getattr(self, name)) != n:
                out.append((name, f"has {len(getattr(self, name))} entries, expected {n}"))
        if not 0 <= self.depot < n:
            out.append(("depot", f"index {self.depot} outside 0..{n - 1}"))
        seen = set()
        for name in ("customers_day_only", "customers_ohd"):
            for pos, c in enumerate(getattr(self, name)):
                path = f"{name}[{pos}]"
                if not 0 <= c < n:
                    out.append((path, f"index {c} outside 0..{n - 1}"))
                    continue
                if c == self.depot:
                    out.append((path, f"index {c} is the depot"))
                if c in seen:
                    out.append((path, f"index {c} listed twice across customer sets"))
                seen.add(c)
                if c < len(self.volume) and self.volume[c] <= 0:
                    out.append((f"volume[{c}]", "customer volume must be positive"))
                if c < len(self.service_time) and self.service_time[c] < 0:
                    out.append((f"service_time[{c}]", "service time must be nonnegative"))
        for name in ("max_conventional", "max_electric"):
            if getattr(self.trucks, name) < 0:
                out.append((f"trucks.{name}", "must be nonnegative"))
        for name in ("capacity_conventional", "capacity_electric",
                     "range_conventional", "range_electric"):
            if getattr(self.trucks, name) <= 0:
                out.append((f"trucks.{name}", "must be positive"))
        for name in ("tco_conventional", "tco_electric", "evse_cost"):
            if getattr(self.costs, name) < 0:
                out.append((f"costs.{name}", "must be nonnegative"))
        if self.costs.objective_mode not in OBJECTIVE_MODES:
            out.append(("costs.objective_mode", f"unknown mode {self.costs.objective_mode!r}"))
        if self.charging.recharge_speed <= 0:
            out.append(("charging.recharge_speed", "must be positive"))
        if self.charging.break_window <= 0:
            out.append(("charging.break_window", "must be positive"))
        return out


@dataclass(frozen=True)
class TruckPlan:
    engine: Engine
    day_route: tuple[int, ...] = ()
    night_route: tuple[int, ...] = ()
    recharge_time: int = 0

    @property
    def assigned(self) -> bool:
        return bool(self.day_route or self.night_route)


@dataclass(frozen=True)
class Solution:
    trucks: tuple[TruckPlan, ...] = ()
    evse_count: int = 0

    def assigned(self) -> list[TruckPlan]:
        return [t for t in self.trucks if t.assigned]


@dataclass(frozen=True)
class Violation:
    constraint: str
    magnitude: float
    truck: int | None = None
    location: int | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.truck is not None:
            where.append(f"truck {self.truck}")
        if self.location is not None:
            where.append(f"location {self.location}")
        loc = f" ({', '.join(where)})" if where else ""
        return f"constraint {self.constraint}{loc}: {self.detail} [by {self.magnitude:g}]"


def route_travel_time(instance: Instance, route: Sequence[int], shift: Shift = Shift.DAY) -> int:
    if not route:
        return 0
    mat = instance.matrix(Shift(shift))
    n = len(mat)
    prev = instance.depot
    total = 0
    for c in route:
        if not 0 <= c < n:
            raise MalformedRouteError(f"location index {c} outside 0..{n - 1}")
        total += mat[prev][c]
        prev = c
    return total + mat[prev][instance.depot]


def route_load(instance: Instance, route: Iterable[int]) -> int:
    return sum(instance.volume[c] for c in route)


def route_service(instance: Instance, route: Iterable[int]) -> int:
    return sum(instance.service_time[c] for c in route)


def _shift_duration(instance: Instance, route: Sequence[int], shift: Shift) -> int:
    t = route_travel_time(instance, route, shift)
    if instance.include_service_in_range:
        t += route_service(instance, route)
    return t


def check_capacity(instance: Instance, plan: TruckPlan, truck: int | None = None) -> list[Violation]:
    cap = instance.trucks.capacity(plan.engine)
    cid = "14" if plan.engine is Engine.ELECTRIC else "7"
    out = []
    for shift, route in ((Shift.DAY, plan.day_route), (Shift.NIGHT, plan.night_route)):
        load = route_load(instance, route)
        if load > cap:
            out.append(Violation(cid, load - cap, truck=truck,
                                 detail=f"{shift.value} load {load} exceeds capacity {cap}"))
    return out


def check_range(instance: Instance, plan: TruckPlan, truck: int | None = None) -> list[Violation]:
    limit = instance.trucks.range(plan.engine)
    out = []
    if plan.engine is Engine.CONVENTIONAL:
        checks = [("5", Shift.DAY, plan.day_route)]
    else:
        checks = [("11", Shift.DAY, plan.day_route), ("12", Shift.NIGHT, plan.night_route)]
    for cid, shift, route in checks:
        t = _shift_duration(instance, route, shift)
        if t > limit:
            out.append(Violation(cid, t - limit, truck=truck,
                                 detail=f"{shift.value} duration {t} exceeds range {limit}"))
    return out


def recharge_minutes(day_travel: int, recharge_speed) -> int:
    """Whole minutes of charging needed to restore ``day_travel`` driving minutes."""
    if day_travel <= 0:
        return 0
    speed = Fraction(str(recharge_speed)) if isinstance(recharge_speed, float) else Fraction(recharge_speed)
    return math.ceil(Fraction(day_travel) / speed)


def required_recharge_time(instance: Instance, plan: TruckPlan) -> int:
    if plan.engine is not Engine.ELECTRIC:
        raise DomainError("recharge time is only defined for electric trucks")
    if not plan.night_route:
        return 0
    day = route_travel_time(instance, plan.day_route, Shift.DAY)
    return recharge_minutes(day, instance.charging.recharge_speed)


def required_evse_count(recharge_times: Iterable[int], break_window: int) -> int:
    total = sum(recharge_times)
    if total <= 0:
        return 0
    return math.ceil(Fraction(total) / Fraction(break_window))


def purchase_cost(costs: CostParams, n_conventional: int, n_electric: int, evse_count: int):
    return (costs.tco_conventional * n_conventional + costs.tco_electric * n_electric
            + costs.evse_cost * evse_count)


def objective_purchase(solution: Solution, costs: CostParams):
    assigned = solution.assigned()
    n_e = sum(1 for t in assigned if t.engine is Engine.ELECTRIC)
    return purchase_cost(costs, len(assigned) - n_e, n_e, solution.evse_count)


def objective_travel(instance: Instance, solution: Solution) -> int:
    total = 0
    for plan in solution.trucks:
        if instance.costs.travel_electric_only and plan.engine is not Engine.ELECTRIC:
            continue
        total += route_travel_time(instance, plan.day_route, Shift.DAY)
        total += route_travel_time(instance, plan.night_route, Shift.NIGHT)
    return total


def combine_objective(purchase, travel, mode: str):
    """Scalar score for weighted-sum mode, a (purchase, travel) pair otherwise."""
    if mode == WEIGHTED_SUM:
        return purchase + travel
    if mode == LEXICOGRAPHIC:
        return (purchase, travel)
    raise ModelError(f"unknown objective mode {mode!r}")


def scalar_objective(instance: Instance, solution: Solution, costs: CostParams | None = None):
    costs = costs or instance.costs
    return combine_objective(objective_purchase(solution, costs),
                             objective_travel(instance, solution), costs.objective_mode)


def _check_indices(instance: Instance, solution: Solution) -> None:
    n = instance.size
    for k, plan in enumerate(solution.trucks):
        for c in plan.day_route + plan.night_route:
            if not 0 <= c < n:
                raise MalformedRouteError(f"truck {k} visits location {c} outside 0..{n - 1}")
            if c == instance.depot:
                raise MalformedRouteError(f"truck {k} lists the depot {c} as a stop")


def validate(instance: Instance, solution: Solution) -> list[Violation]:
    """Every breached constraint of the model, empty for a feasible solution.

    Structural mismatches (location indices outside the instance) raise
    :class:`MalformedRouteError` instead, since no constraint applies to them.
    """
    _check_indices(instance, solution)
    out: list[Violation] = []
    ohd = instance.ohd_set

    visits: dict[int, int] = {}
    for plan in solution.trucks:
        for c in plan.day_route + plan.night_route:
            visits[c] = visits.get(c, 0) + 1
    for cid, group in (("4", instance.customers_day_only), ("10", instance.customers_ohd)):
        for c in group:
            v = visits.get(c, 0)
            if v == 0:
                out.append(Violation(cid, 1, location=c, detail="customer not visited"))
            elif v > 1:
                out.append(Violation(cid, v - 1, location=c, detail=f"customer visited {v} times"))
    known = set(instance.customers)
    for c in sorted(visits):
        if c not in known:
            out.append(Violation("coverage", visits[c], location=c,
                                 detail="location is not a customer of this instance"))

    recharge = []
    for k, plan in enumerate(solution.trucks):
        if plan.night_route:
            if plan.engine is not Engine.ELECTRIC:
                out.append(Violation("y-domain", len(plan.night_route), truck=k,
                                     detail="night route on a conventional truck"))
            for c in plan.night_route:
                if c not in ohd:
                    out.append(Violation("y-domain", 1, truck=k, location=c,
                                         detail="night visit to a customer without off-hour acceptance"))
            if not plan.day_route:
                out.append(Violation("8", 1, truck=k, detail="night departure without a day departure"))
        out.extend(check_capacity(instance, plan, k))
        out.extend(check_range(instance, plan, k))
        if plan.recharge_time < 0:
            out.append(Violation("17", -plan.recharge_time, truck=k, detail="negative recharge time"))
        if plan.engine is Engine.ELECTRIC:
            need = required_recharge_time(instance, plan)
            if plan.recharge_time < need:
                out.append(Violation("15", need - plan.recharge_time, truck=k,
                                     detail=f"recharge {plan.recharge_time} below required {need}"))
            if not plan.night_route and plan.recharge_time > 0:
                out.append(Violation("15", plan.recharge_time, truck=k,
                                     detail="recharge without a night route"))
            recharge.append(max(plan.recharge_time, 0))
        elif plan.recharge_time > 0:
            out.append(Violation("15", plan.recharge_time, truck=k,
                                 detail="recharge on a conventional truck"))

    if solution.evse_count < 0:
        out.append(Violation("17", -solution.evse_count, detail="negative EVSE count"))
    need_evse = required_evse_count(recharge, instance.charging.break_window)
    if solution.evse_count < need_evse:
        out.append(Violation("16", need_evse - solution.evse_count,
                             location=instance.depot,
                             detail=f"{solution.evse_count} EVSEs cannot fit recharging; need {need_evse}"))

    assigned = solution.assigned()
    n_e = sum(1 for t in assigned if t.engine is Engine.ELECTRIC)
    n_c = len(assigned) - n_e
    if n_c > instance.trucks.max_conventional:
        out.append(Violation("fleet", n_c - instance.trucks.max_conventional,
                             detail=f"{n_c} conventional trucks exceed bound {instance.trucks.max_conventional}"))
    if n_e > instance.trucks.max_electric:
        out.append(Violation("fleet", n_e - instance.trucks.max_electric,
                             detail=f"{n_e} electric trucks exceed bound {instance.trucks.max_electric}"))
    return out


def finalize_solution(instance: Instance, plans: Iterable[TruckPlan]) -> Solution:
    """Fill in minimal recharge times and EVSE count for the given routes."""
    trucks = []
    for plan in plans:
        r = required_recharge_time(instance, plan) if plan.engine is Engine.ELECTRIC else 0
        trucks.append(TruckPlan(plan.engine, tuple(plan.day_route), tuple(plan.night_route), r))
    evse = required_evse_count([t.recharge_time for t in trucks], instance.charging.break_window)
    return Solution(tuple(trucks), evse)
