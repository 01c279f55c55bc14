import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evrp_ohd.exact import optimal_route
from evrp_ohd.instances import GenParams, generate
from evrp_ohd.model import Engine, TruckPlan, check_capacity, check_range
from evrp_ohd.ts_lower import (
    RECHARGE,
    RouteString,
    TabuState,
    _apply,
    _Context,
    _moves,
    initial_route,
    iteration_cap,
    neighbors,
    tabu_search_route,
    tabu_tenure,
)
from helpers import make_instance

C, E = Engine.CONVENTIONAL, Engine.ELECTRIC


def east_west():
    """Customer 1 is 13 min east of the depot, customer 2 is 13 min west."""
    day = [[0, 13, 13], [13, 0, 26], [13, 26, 0]]
    night = [[round(t / 1.3) for t in row] for row in day]
    return make_instance(day, night, ohd=(2,))


def inst(n, ratio, seed, **kw):
    params = dict(plane_extent=60, range_conventional=400, range_electric=300)
    params.update(kw)
    return generate(GenParams(n, ratio, seed, **params))


@pytest.mark.parametrize("length, tenure, cap", [(4, 2, 3), (9, 3, 5), (16, 4, 6), (25, 5, 8)])
def test_tabu_parameters(length, tenure, cap):
    assert tabu_tenure(length) == tenure
    assert iteration_cap(length) == cap


def test_route_string_layout():
    rs = RouteString(E, 0, (1, 2), (3,))
    assert rs.nodes() == (0, 1, 2, RECHARGE, 3, 0)
    assert RouteString(E, 0, (1, 2)).nodes() == (0, 1, 2, 0)
    assert len(RouteString(C, 0, (1, 2))) == 4


def test_single_customer_conventional_start():
    assert initial_route(east_west(), C, [1]).nodes() == (0, 1, 0)


def test_eligible_customer_goes_to_night():
    rs = initial_route(east_west(), E, [1, 2], [2])
    assert rs.day == (1,) and rs.night == (2,)


def test_conventional_start_ignores_eligibility():
    rs = initial_route(east_west(), C, [1, 2], [2])
    assert rs.night == () and sorted(rs.day) == [1, 2]


def test_day_segment_never_left_empty():
    rs = initial_route(east_west(), E, [2], [2])
    assert rs.day == (2,) and rs.night == ()


def test_two_customer_day_segment_has_one_swap():
    got = neighbors(east_west(), RouteString(C, 0, (1, 2)), kinds=("swap",))
    assert got == {RouteString(C, 0, (2, 1))}


def three_customer_instance():
    day = [[0, 10, 12, 14], [10, 0, 5, 9], [12, 5, 0, 7], [14, 9, 7, 0]]
    night = [[round(t / 1.3) for t in row] for row in day]
    return make_instance(day, night, ohd=(2, 3))


def test_insert_across_separator_for_eligible_customer():
    ins = three_customer_instance()
    start = RouteString(E, 0, (1, 2), (3,))
    got = neighbors(ins, start, ohd_eligible=(2, 3), kinds=("insert",))
    assert RouteString(E, 0, (1,), (2, 3)) in got
    assert RouteString(E, 0, (1,), (3, 2)) in got
    assert RouteString(E, 0, (1, 3, 2), ()) in got


def test_no_insert_across_separator_for_day_only_customer():
    ins = three_customer_instance()
    start = RouteString(E, 0, (1, 2), (3,))
    got = neighbors(ins, start, ohd_eligible=(2, 3))
    assert all(1 not in rs.night for rs in got)
    assert all(rs.day for rs in got)


def test_tabu_moves_filtered_without_aspiration():
    ins = three_customer_instance()
    start = RouteString(C, 0, (1, 2, 3))
    state = TabuState.for_length(len(start))
    state.push({1, 2, 3})
    state.best_score = (0, 0)
    assert neighbors(ins, start, tabu_state=state) == set()
    state.best_score = (0, 10**6)
    assert neighbors(ins, start, tabu_state=state) == neighbors(ins, start)


def test_empty_customer_set():
    res = tabu_search_route(east_west(), E, [], [])
    assert res.route.customers() == () and res.day_time == res.night_time == 0 and res.feasible


def test_string_of_nine_uses_tenure_three_and_five_iterations():
    ins = inst(7, 0, 3)
    trace = []
    tabu_search_route(ins, C, ins.customers, trace=trace)
    assert trace[0]["length"] == 9 and trace[0]["tenure"] == 3 and trace[0]["cap"] == 5
    assert len(trace) - 1 <= 5


def test_four_customer_tour_is_optimal():
    ins = inst(4, 0, 17)
    res = tabu_search_route(ins, C, ins.customers)
    assert res.day_time == optimal_route(ins, ins.customers)[1]


def test_oracle_match_rate_on_five_customer_tours():
    hits = 0
    for seed in range(200):
        ins = inst(5, 0, seed)
        res = tabu_search_route(ins, C, ins.customers)
        opt = optimal_route(ins, ins.customers)[1]
        assert res.day_time >= opt
        hits += res.day_time == opt
    assert hits >= 190


def test_infeasible_string_is_flagged():
    ins = inst(4, 0, 2, range_conventional=10)
    res = tabu_search_route(ins, C, ins.customers)
    assert not res.feasible


def test_seeded_tie_breaking_is_reproducible():
    ins = inst(8, 0.5, 4)
    a = tabu_search_route(ins, E, ins.customers, ins.customers_ohd, seed=5)
    b = tabu_search_route(ins, E, ins.customers, ins.customers_ohd, seed=5)
    assert a == b


searches = st.tuples(st.integers(1, 9), st.sampled_from([0, 0.5, 1]), st.integers(0, 10_000),
                     st.sampled_from([C, E]))


@settings(max_examples=80, deadline=None)
@given(searches)
def test_search_invariants(args):
    n, ratio, seed, engine = args
    ins = inst(n, ratio, seed)
    rng = random.Random(seed)
    customers = sorted(rng.sample(list(ins.customers), rng.randint(1, n)))
    eligible = [c for c in customers if c in ins.ohd_set]
    trace = []
    res = tabu_search_route(ins, engine, customers, eligible, trace=trace)
    rs = res.route
    assert sorted(rs.customers()) == customers
    assert rs.day, "assigned truck needs a day tour"
    assert set(rs.night) <= set(eligible)
    if engine is C:
        assert rs.night == ()
    nodes = rs.nodes()
    assert (RECHARGE in nodes) == (engine is E and bool(rs.night))
    plan = TruckPlan(engine, rs.day, rs.night)
    assert res.feasible == (not check_capacity(ins, plan) and not check_range(ins, plan))

    bests = [t["best"] for t in trace]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))
    assert len(trace) - 1 <= trace[0]["cap"]

    # a moved id stays tabu for `tenure` iterations unless the move sets a new best
    tenure = trace[0]["tenure"]
    for t, step in enumerate(trace[1:], start=1):
        for back in range(1, tenure + 1):
            if t - back < 1:
                break
            if set(step["moved"]) & set(trace[t - back]["moved"]):
                assert step["score"] < trace[t - 1]["best"]


@settings(max_examples=60, deadline=None)
@given(searches, st.integers(0, 10_000))
def test_move_deltas_match_full_recomputation(args, pick):
    n, ratio, seed, engine = args
    ins = inst(n, ratio, seed, plane_extent=90)
    rng = random.Random(pick)
    customers = list(ins.customers)
    rng.shuffle(customers)
    eligible = [c for c in customers if c in ins.ohd_set]
    ctx = _Context(ins, engine, eligible)
    cut = rng.randint(1, len(customers))
    day = tuple(customers[:cut])
    night = tuple(c for c in customers[cut:] if c in ctx.eligible)
    day += tuple(c for c in customers[cut:] if c not in ctx.eligible)
    segs = (day, night)
    state = ctx.evaluate(segs)
    for kind, ids, nt, nl, ns, spec in _moves(ctx, segs, *state):
        new = _apply(segs, kind, spec)
        assert (nt, nl, ns) == ctx.evaluate(new), (kind, spec)
        assert sorted(new[0] + new[1]) == sorted(customers)
        assert new[0]
        assert set(new[1]) <= ctx.eligible
