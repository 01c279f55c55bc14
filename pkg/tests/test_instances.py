import io
import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evrp_ohd.exact import solve_exact
from evrp_ohd.instances import (
    SCHEMA_VERSION,
    GenParams,
    InstanceFormatError,
    ObjectiveMismatchWarning,
    generate,
    instance_from_dict,
    instance_to_dict,
    read_instance,
    read_solution,
    write_instance,
    write_solution,
)
from evrp_ohd.model import Engine, ModelError, Solution, TruckPlan
from helpers import random_solution


def test_no_ohd_customers_at_ratio_zero():
    inst = generate(GenParams(10, 0.0, 1))
    assert inst.customers_ohd == () and len(inst.customers_day_only) == 10


def test_all_ohd_customers_at_ratio_one():
    inst = generate(GenParams(10, 1.0, 1))
    assert inst.customers_day_only == () and inst.customers_ohd == tuple(range(1, 11))


@pytest.mark.parametrize("n, ratio", [(20, 0.2), (7, 0.5), (13, 0.3), (100, 0.1)])
def test_ohd_count(n, ratio):
    assert len(generate(GenParams(n, ratio, 3)).customers_ohd) == round(ratio * n)


def test_night_times_are_day_over_speed_ratio():
    inst = generate(GenParams(12, 0.5, 8))
    for drow, nrow in zip(inst.travel_day, inst.travel_night):
        assert all(n == round(d / 1.3) for d, n in zip(drow, nrow))


def test_triangle_inequality_up_to_rounding():
    inst = generate(GenParams(15, 0, 2))
    d = inst.travel_day
    idx = range(inst.size)
    assert all(d[i][k] <= d[i][j] + d[j][k] + 1 for i in idx for j in idx for k in idx)


def test_ratios_share_the_base_instance():
    low, high = generate(GenParams(30, 0.2, 5)), generate(GenParams(30, 0.6, 5))
    assert low.travel_day == high.travel_day and low.volume == high.volume
    assert set(low.customers_ohd) <= set(high.customers_ohd)


def test_service_time_from_volume():
    inst = generate(GenParams(10, 0, 4, unit_dropoff=90))
    assert inst.service_time == tuple(round(v * 90 / 60) for v in inst.volume)
    assert inst.volume[0] == 0 and all(1 <= v <= 5 for v in inst.volume[1:])


def test_bad_params_rejected():
    with pytest.raises(ModelError, match="ohd_ratio"):
        generate(GenParams(5, 1.5))


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_instance(generate(GenParams(25, 0.4, 9)), a)
    write_instance(generate(GenParams(25, 0.4, 9)), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().endswith("\n")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 12), st.sampled_from([0, 0.25, 0.5, 1]), st.integers(0, 10_000),
       st.sampled_from(["weighted_sum", "lexicographic"]))
def test_instance_round_trip(n, ratio, seed, mode):
    inst = generate(GenParams(n, ratio, seed, objective_mode=mode))
    buf = io.StringIO()
    write_instance(inst, buf)
    assert read_instance(io.StringIO(buf.getvalue())) == inst
    assert instance_from_dict(json.loads(json.dumps(instance_to_dict(inst)))) == inst


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10_000))
def test_solution_round_trip(n, seed):
    import random
    inst = generate(GenParams(n, 0.5, seed))
    sol = random_solution(inst, random.Random(seed))
    buf = io.StringIO()
    write_solution(sol, buf, inst)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert read_solution(io.StringIO(buf.getvalue()), inst) == sol


def test_empty_solution_round_trip():
    buf = io.StringIO()
    write_solution(Solution(), buf)
    assert read_solution(io.StringIO(buf.getvalue())) == Solution()


def doc_of(inst):
    return json.loads(json.dumps(instance_to_dict(inst)))


def test_overlapping_customer_sets_name_the_index():
    doc = doc_of(generate(GenParams(6, 0.5, 1)))
    dup = doc["customers_ohd"][0]
    doc["customers_day_only"].append(dup)
    with pytest.raises(InstanceFormatError, match=str(dup)):
        instance_from_dict(doc)


def test_negative_travel_time_is_located():
    doc = doc_of(generate(GenParams(4, 0, 1)))
    doc["travel_day"][1][2] = -3
    with pytest.raises(InstanceFormatError) as err:
        instance_from_dict(doc)
    assert "travel_day" in str(err.value)


def test_wrong_type_is_located():
    doc = doc_of(generate(GenParams(4, 0, 1)))
    doc["volume"] = "lots"
    with pytest.raises(InstanceFormatError) as err:
        instance_from_dict(doc)
    assert "volume" in str(err.value)


def test_bad_schema_version():
    doc = doc_of(generate(GenParams(3, 0, 1)))
    doc["schema_version"] = "9.9"
    with pytest.raises(InstanceFormatError, match="schema"):
        read_instance(io.StringIO(json.dumps(doc)))
    assert SCHEMA_VERSION == "1.0"


def test_malformed_json():
    with pytest.raises(InstanceFormatError, match="line 1"):
        read_instance(io.StringIO("{not json"))


def test_unknown_engine_is_located():
    doc = {"schema_version": "1.0", "kind": "solution", "evse_count": 0,
           "trucks": [{"engine": "steam", "day_route": [1], "night_route": [], "recharge_time": 0}]}
    with pytest.raises(InstanceFormatError, match=r"trucks\[0\]\.engine"):
        read_solution(io.StringIO(json.dumps(doc)))


def test_tampered_objective_warns():
    inst = generate(GenParams(5, 0.4, 2, max_conventional=2, max_electric=2,
                              plane_extent=60, range_conventional=150, range_electric=110))
    buf = io.StringIO()
    write_solution(solve_exact(inst), buf, inst)
    doc = json.loads(buf.getvalue())
    doc["objective"]["travel"] += 1
    with pytest.warns(ObjectiveMismatchWarning):
        read_solution(io.StringIO(json.dumps(doc)), inst)


def test_engine_serialised_by_name():
    buf = io.StringIO()
    write_solution(Solution((TruckPlan(Engine.ELECTRIC, (1,), (2,), 5),), 1), buf)
    truck = json.loads(buf.getvalue())["trucks"][0]
    assert truck == {"engine": "electric", "day_route": [1], "night_route": [2], "recharge_time": 5}
