import json

import pytest
from hypothesis import given, settings, strategies as st

from hpttp.instance import (InstanceError, Line, Train, expand_periodic, fleet_need, from_dict,
                            generate_micro, generate_peaked, generate_toy, load_instance)


@pytest.fixture(scope="module")
def inst():
    return generate_micro(3)


def test_time_grid(inst):
    assert inst.step == 2.0
    assert inst.num_ticks == int(inst.params.horizon / 2.0) + 1
    assert inst.tick(8.0) == 4
    assert inst.dur(3.0) == 2      # durations round up
    assert inst.dur(4.0) == 2
    assert inst.dur(0.0) == 0
    assert inst.minutes(5) == 10.0
    with pytest.raises(InstanceError):
        inst.tick(3.0)


def test_section_ticks_include_penalties(inst):
    (a, b), sec = next(iter(inst.sections.items()))
    stop_both = inst.section_ticks(a, b, True, True)
    assert stop_both == inst.dur(sec.run_time + sec.acc + sec.dec)
    assert inst.section_ticks(a, b, False, False) == inst.dur(sec.run_time)


def test_json_round_trip(inst, tmp_path):
    path = tmp_path / "i.json"
    inst.dump(path)
    back = load_instance(path)
    assert back.to_dict() == inst.to_dict()
    assert json.loads(path.read_text())["params"]["step"] == 2.0


@pytest.mark.parametrize("edit, field", [
    (lambda d: d["params"].update(step=0), "params.step"),
    (lambda d: d["params"].update(xi=1.5), "params.xi"),
    (lambda d: d["params"]["headways"].update(dd=1.0), "headways.dd"),
    (lambda d: d["groups"][0].update(size=0), "size"),
])
def test_bad_fields_are_named(inst, edit, field):
    d = json.loads(json.dumps(inst.to_dict()))
    edit(d)
    with pytest.raises(InstanceError, match=field.split(".")[-1]):
        from_dict(d)


def test_unknown_station_in_section_rejected(inst):
    d = json.loads(json.dumps(inst.to_dict()))
    d["sections"][0]["to"] = "ZZ"
    with pytest.raises(InstanceError):
        from_dict(d)


def test_fleet_need_by_hand():
    lines = {"f": Line("f", ("A", "B"), (True, True), ()), "r": Line("r", ("B", "A"), (True, True), ())}
    trains = [Train("f1", "f", ((None, 0.0), (10.0, None))),
              Train("r1", "r", ((None, 4.0), (14.0, None))),
              Train("f2", "f", ((None, 20.0), (30.0, None))),
              Train("f3", "f", ((None, 16.0), (26.0, None)))]
    # A: departures at 0, 16, 20; r1 returns at 14 + 2 = 16, before f3 leaves -> two units
    # B: r1 leaves at 4 before f1 arrives -> one unit
    assert fleet_need(trains, lines, 2.0) == {"A": 2, "B": 1}


def test_expand_periodic_shifts_by_cycle():
    base = [Train("t", "f", ((None, 0.0), (10.0, None)))]
    out = expand_periodic(base, 3, 16.0)
    assert [t.schedule[0][1] for t in out] == [0.0, 16.0, 32.0]
    assert len({t.id for t in out}) == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_micro_generator_limits(seed):
    inst = generate_micro(seed)
    assert len(inst.stations) <= 4 and inst.params.periods <= 2
    assert len(inst.trains) <= 6 and len(inst.groups) <= 12
    assert inst.params.costs.max_transfers >= 2
    assert generate_micro(seed).to_dict() == inst.to_dict()


def test_toy_shape():
    inst = generate_toy(1)
    assert len(inst.stations) == 8
    assert sorted(inst.terminals) == ["1", "2", "4", "5", "7", "8"]
    assert inst.params.tau == 4.0
    assert generate_toy(1).to_dict() == inst.to_dict()


def test_peaked_instance():
    base = generate_peaked(0)
    hyb = generate_peaked(0, xi=0.6, extra=True)
    assert base.params.periods == 4 and base.params.xi == 1.0 and not base.params.extra_paths
    assert hyb.params.xi == 0.6 and hyb.params.extra_paths
    sizes = {g.period: 0 for g in base.groups.values()}
    for g in base.groups.values():
        sizes[g.period] += g.size
    assert max(sizes, key=sizes.get) == 1
