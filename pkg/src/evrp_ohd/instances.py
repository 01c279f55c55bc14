"""Synthetic instance generation and JSON (de)serialization.

Files are UTF-8 JSON with a top-level ``schema_version``. Keys are sorted and
separators fixed so equal objects always serialize to identical bytes.
"""

from __future__ import annotations

import io
import json
import math
import random
import warnings
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .model import (
    ChargingParams,
    CostParams,
    Engine,
    FleetSpec,
    Instance,
    ModelError,
    Solution,
    TruckPlan,
    objective_purchase,
    objective_travel,
)

SCHEMA_VERSION = "1.0"
MPH = 30  # nominal speed converting travel hours to miles


class InstanceFormatError(ModelError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ObjectiveMismatchWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GenParams:
    customer_count: int
    ohd_ratio: float = 0.0
    seed: int = 0
    plane_extent: int = 120
    speed_ratio_night: float = 1.3
    volume_min: int = 1
    volume_max: int = 5
    unit_dropoff: int = 120  # seconds per order
    max_conventional: int | None = None  # None: one per customer
    max_electric: int | None = None
    capacity: int = 140
    range_conventional: int = 720
    range_electric: int = 420
    tco_conventional: int = 1000
    tco_electric: int | None = None  # None: 95% of conventional
    evse_cost: int | None = None  # None: 20% of conventional
    recharge_speed: float = 7
    break_window: int = 240
    objective_mode: str = "weighted_sum"

    def problems(self) -> list[str]:
        out = []
        if self.customer_count < 0:
            out.append("customer_count must be nonnegative")
        if not 0 <= self.ohd_ratio <= 1:
            out.append(f"ohd_ratio {self.ohd_ratio} outside [0, 1]")
        if self.plane_extent <= 0:
            out.append("plane_extent must be positive")
        if self.speed_ratio_night <= 0:
            out.append("speed_ratio_night must be positive")
        if not 0 < self.volume_min <= self.volume_max:
            out.append("volume range must satisfy 0 < volume_min <= volume_max")
        if self.unit_dropoff < 0:
            out.append("unit_dropoff must be nonnegative")
        for name in ("capacity", "range_conventional", "range_electric", "break_window"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive")
        if self.recharge_speed <= 0:
            out.append("recharge_speed must be positive")
        return out


def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def generate(params: GenParams) -> Instance:
    problems = params.problems()
    if problems:
        raise ModelError("; ".join(problems))
    rng = random.Random(params.seed)
    n = params.customer_count
    ext = params.plane_extent
    points = [(ext / 2, ext / 2)]
    for _ in range(n):
        points.append((rng.uniform(0, ext), rng.uniform(0, ext)))
    ratio = _exact(params.speed_ratio_night)
    day = []
    night = []
    for (x1, y1) in points:
        row = [round(math.hypot(x1 - x2, y1 - y2)) for (x2, y2) in points]
        day.append(tuple(row))
        night.append(tuple(round(Fraction(t) / ratio) for t in row))
    customers = list(range(1, n + 1))
    volume = [0] + [rng.randint(params.volume_min, params.volume_max) for _ in customers]
    # one shuffle per seed: the same base instance at every ratio, nested N^O sets
    order = list(customers)
    rng.shuffle(order)
    ohd = sorted(order[:round(params.ohd_ratio * n)])
    ohd_set = set(ohd)
    service = [round(v * params.unit_dropoff / 60) for v in volume]
    c = params.tco_conventional
    return Instance(
        depot=0,
        customers_day_only=tuple(x for x in customers if x not in ohd_set),
        customers_ohd=tuple(ohd),
        travel_day=tuple(day),
        travel_night=tuple(night),
        volume=tuple(volume),
        service_time=tuple(service),
        trucks=FleetSpec(
            max_conventional=n if params.max_conventional is None else params.max_conventional,
            max_electric=n if params.max_electric is None else params.max_electric,
            capacity_conventional=params.capacity,
            capacity_electric=params.capacity,
            range_conventional=params.range_conventional,
            range_electric=params.range_electric,
        ),
        costs=CostParams(
            tco_conventional=c,
            tco_electric=round(c * Fraction(95, 100)) if params.tco_electric is None else params.tco_electric,
            evse_cost=round(c * Fraction(20, 100)) if params.evse_cost is None else params.evse_cost,
            objective_mode=params.objective_mode,
        ),
        charging=ChargingParams(params.recharge_speed, params.break_window),
    )


# -- serialization ---------------------------------------------------------

def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


def _write(text: str, sink) -> None:
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def _read(source) -> dict:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        text = source.read()
    else:
        raise TypeError(f"cannot read from {type(source).__name__}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"malformed JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(f"unsupported schema version {version!r}", "schema_version")
    return doc


def instance_to_dict(instance: Instance) -> dict:
    doc = asdict(instance)
    doc["customers_day_only"] = sorted(doc["customers_day_only"])
    doc["customers_ohd"] = sorted(doc["customers_ohd"])
    doc["schema_version"] = SCHEMA_VERSION
    doc["kind"] = "instance"
    return doc


def _get(doc: dict, key: str, kind, path: str = ""):
    where = f"{path}.{key}" if path else key
    if key not in doc:
        raise InstanceFormatError("missing field", where)
    val = doc[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise InstanceFormatError(f"expected an integer, got {val!r}", where)
    if kind is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
        raise InstanceFormatError(f"expected a number, got {val!r}", where)
    if kind is list and not isinstance(val, list):
        raise InstanceFormatError(f"expected an array, got {type(val).__name__}", where)
    if kind is dict and not isinstance(val, dict):
        raise InstanceFormatError(f"expected an object, got {type(val).__name__}", where)
    if kind is bool and not isinstance(val, bool):
        raise InstanceFormatError(f"expected a boolean, got {val!r}", where)
    if kind is str and not isinstance(val, str):
        raise InstanceFormatError(f"expected a string, got {val!r}", where)
    return val


def _int_list(doc, key, path=""):
    vals = _get(doc, key, list, path)
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, int):
            raise InstanceFormatError(f"expected an integer, got {v!r}", f"{key}[{i}]")
    return tuple(vals)


def _matrix(doc, key):
    rows = _get(doc, key, list)
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            raise InstanceFormatError("expected an array", f"{key}[{i}]")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, int):
                raise InstanceFormatError(f"expected an integer, got {v!r}", f"{key}[{i}][{j}]")
        out.append(tuple(row))
    return tuple(out)


def instance_from_dict(doc: dict) -> Instance:
    if doc.get("kind", "instance") != "instance":
        raise InstanceFormatError(f"expected an instance document, got {doc.get('kind')!r}", "kind")
    t = _get(doc, "trucks", dict)
    c = _get(doc, "costs", dict)
    ch = _get(doc, "charging", dict)
    inst = Instance(
        depot=_get(doc, "depot", int),
        customers_day_only=_int_list(doc, "customers_day_only"),
        customers_ohd=_int_list(doc, "customers_ohd"),
        travel_day=_matrix(doc, "travel_day"),
        travel_night=_matrix(doc, "travel_night"),
        volume=_int_list(doc, "volume"),
        service_time=_int_list(doc, "service_time"),
        trucks=FleetSpec(**{k: _get(t, k, int, "trucks") for k in (
            "max_conventional", "max_electric", "capacity_conventional",
            "capacity_electric", "range_conventional", "range_electric")}),
        costs=CostParams(
            tco_conventional=_get(c, "tco_conventional", float, "costs"),
            tco_electric=_get(c, "tco_electric", float, "costs"),
            evse_cost=_get(c, "evse_cost", float, "costs"),
            objective_mode=_get(c, "objective_mode", str, "costs"),
            travel_electric_only=c.get("travel_electric_only", False),
        ),
        charging=ChargingParams(
            recharge_speed=_get(ch, "recharge_speed", float, "charging"),
            break_window=_get(ch, "break_window", float, "charging"),
        ),
        include_service_in_range=doc.get("include_service_in_range", False),
    )
    n = len(inst.travel_day)
    if len(inst.travel_night) != n:
        raise InstanceFormatError(f"has {len(inst.travel_night)} rows, expected {n}", "travel_night")
    problems = inst.problems()
    if problems:
        path, msg = problems[0]
        raise InstanceFormatError(msg, path)
    return inst


def write_instance(instance: Instance, sink) -> None:
    _write(_dumps(instance_to_dict(instance)), sink)


def read_instance(source) -> Instance:
    return instance_from_dict(_read(source))


def solution_to_dict(solution: Solution, instance: Instance | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solution",
        "evse_count": solution.evse_count,
        "trucks": [
            {"engine": t.engine.value, "day_route": list(t.day_route),
             "night_route": list(t.night_route), "recharge_time": t.recharge_time}
            for t in solution.trucks
        ],
    }
    if instance is not None:
        doc["objective"] = {
            "purchase": objective_purchase(solution, instance.costs),
            "travel": objective_travel(instance, solution),
        }
    return doc


def solution_from_dict(doc: dict, instance: Instance | None = None) -> Solution:
    if doc.get("kind", "solution") != "solution":
        raise InstanceFormatError(f"expected a solution document, got {doc.get('kind')!r}", "kind")
    evse = _get(doc, "evse_count", int)
    if evse < 0:
        raise InstanceFormatError("must be nonnegative", "evse_count")
    trucks = []
    for k, t in enumerate(_get(doc, "trucks", list)):
        path = f"trucks[{k}]"
        if not isinstance(t, dict):
            raise InstanceFormatError("expected an object", path)
        engine = _get(t, "engine", str, path)
        try:
            engine = Engine(engine)
        except ValueError:
            raise InstanceFormatError(f"unknown engine {engine!r}", f"{path}.engine") from None
        trucks.append(TruckPlan(
            engine,
            _int_list(t, "day_route", path),
            _int_list(t, "night_route", path),
            _get(t, "recharge_time", int, path),
        ))
    sol = Solution(tuple(trucks), evse)
    stored = doc.get("objective")
    if instance is not None and stored is not None:
        fresh = {"purchase": objective_purchase(sol, instance.costs),
                 "travel": objective_travel(instance, sol)}
        for key, val in fresh.items():
            if stored.get(key) != val:
                warnings.warn(f"stored {key} objective {stored.get(key)!r} differs from recomputed {val!r}",
                              ObjectiveMismatchWarning, stacklevel=3)
    return sol


def write_solution(solution: Solution, sink, instance: Instance | None = None) -> None:
    _write(_dumps(solution_to_dict(solution, instance)), sink)


def read_solution(source, instance: Instance | None = None) -> Solution:
    """Load a solution; with ``instance`` given, stored objectives are re-checked
    and a mismatch emits :class:`ObjectiveMismatchWarning`."""
    return solution_from_dict(_read(source), instance)


def with_fleet(instance: Instance, **changes) -> Instance:
    return replace(instance, trucks=replace(instance.trucks, **changes))
