"""Shared builders for hand-made test instances."""

from evrp_ohd.model import ChargingParams, CostParams, Engine, FleetSpec, Instance, TruckPlan, finalize_solution


def make_instance(day, night=None, *, ohd=(), volume=None, service=None, fleet=None,
                  costs=None, charging=None, depot=0, **kw):
    """Hand-built instance; every non-depot location is a customer."""
    n = len(day)
    night = night if night is not None else day
    customers = [i for i in range(n) if i != depot]
    volume = volume if volume is not None else [0 if i == depot else 1 for i in range(n)]
    service = service if service is not None else [0] * n
    return Instance(
        depot=depot,
        customers_day_only=tuple(c for c in customers if c not in ohd),
        customers_ohd=tuple(sorted(ohd)),
        travel_day=tuple(tuple(r) for r in day),
        travel_night=tuple(tuple(r) for r in night),
        volume=tuple(volume),
        service_time=tuple(service),
        trucks=fleet or FleetSpec(max_conventional=n, max_electric=n),
        costs=costs or CostParams(),
        charging=charging or ChargingParams(),
        **kw,
    )


def random_solution(inst, rng):
    """Random partition of the customers over a few trucks, night where allowed."""
    plans = []
    k = rng.randint(1, 3)
    buckets = [[[], []] for _ in range(k)]
    engines = [rng.choice([Engine.CONVENTIONAL, Engine.ELECTRIC]) for _ in range(k)]
    for c in inst.customers:
        b = rng.randrange(k)
        night = engines[b] is Engine.ELECTRIC and c in inst.ohd_set and rng.random() < 0.5
        buckets[b][1 if night else 0].append(c)
    for (d, n), e in zip(buckets, engines):
        if n and not d:
            d, n = n[:1], n[1:]
        rng.shuffle(d)
        rng.shuffle(n)
        plans.append(TruckPlan(e, tuple(d), tuple(n)))
    return finalize_solution(inst, plans)


def homogeneous_params(n, ratio, seed, **kw):
    """Small-city setting: equal TCO and range for both engines, free chargers, four trucks per type."""
    from evrp_ohd.instances import GenParams
    params = dict(plane_extent=60, range_conventional=180, range_electric=180, max_conventional=4,
                  max_electric=4, tco_electric=1000, evse_cost=0)
    params.update(kw)
    return GenParams(n, ratio, seed, **params)
