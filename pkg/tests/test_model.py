import json
from fractions import Fraction as F

import pytest

from hpnsim.errors import ModelError, ParseError
from hpnsim.model import (
    CONTINUOUS,
    DISCRETE,
    ConflictPolicy,
    HybridNet,
    NodeKind,
    Place,
    Transition,
    load_net,
    net_to_doc,
    priority,
    save_net,
    sharing,
    structural_conflicts,
    validate,
)
from hpnsim.rationals import INF


def tiny_net(**overrides):
    """source -> place -> sink, all weights 1."""
    kwargs = dict(
        places=[Place("P", NodeKind(CONTINUOUS))],
        transitions=[
            Transition("in", NodeKind(CONTINUOUS), rate=F(1)),
            Transition("out", NodeKind(CONTINUOUS), rate=F(2)),
        ],
        pre={("P", "out"): F(1)},
        post={("in", "P"): F(1)},
        m0={},
        policies=[],
    )
    kwargs.update(overrides)
    return HybridNet(**kwargs)


def violation_kinds(net):
    return {v.kind for v in validate(net)}


def test_valid_tiny_net():
    assert validate(tiny_net()) == []


def test_fixture_net_is_valid(relay_net):
    assert validate(relay_net) == []


def test_negative_weight():
    net = tiny_net(pre={("P", "out"): F(-1)})
    assert "negative-weight" in violation_kinds(net)


def test_fractional_weight_on_discrete_place():
    net = tiny_net(
        places=[Place("P", NodeKind(DISCRETE))],
        transitions=[
            Transition("in", NodeKind(DISCRETE), delay=F(1)),
            Transition("out", NodeKind(DISCRETE), delay=F(1)),
        ],
        pre={("P", "out"): F(1, 2)},
    )
    assert "fractional-discrete-weight" in violation_kinds(net)


def test_discrete_continuous_loop_mismatch():
    # discrete gate feeding a continuous transition must use equal weights
    net = HybridNet(
        [Place("G", NodeKind(DISCRETE)), Place("P", NodeKind(CONTINUOUS))],
        [Transition("T", NodeKind(CONTINUOUS), rate=F(1))],
        {("G", "T"): F(1)},
        {("T", "G"): F(2), ("T", "P"): F(1)},
        {"G": F(1)},
    )
    assert "loop-weight-mismatch" in violation_kinds(net)


def test_timing_shape_checks():
    bad_disc = tiny_net(
        transitions=[
            Transition("in", NodeKind(DISCRETE), rate=F(1)),
            Transition("out", NodeKind(CONTINUOUS), rate=F(1)),
        ]
    )
    assert "bad-timing" in violation_kinds(bad_disc)
    zero_rate = tiny_net(
        transitions=[
            Transition("in", NodeKind(CONTINUOUS), rate=F(0)),
            Transition("out", NodeKind(CONTINUOUS), rate=F(1)),
        ]
    )
    assert "bad-timing" in violation_kinds(zero_rate)


def test_id_collision_and_unknown_nodes():
    net = HybridNet(
        [Place("X", NodeKind(CONTINUOUS))],
        [Transition("X", NodeKind(CONTINUOUS), rate=F(1))],
        {("X", "X"): F(1)},
        {},
        {},
    )
    assert "id-collision" in violation_kinds(net)
    dangling = tiny_net(pre={("P", "out"): F(1), ("Q", "out"): F(1)})
    assert "unknown-node" in violation_kinds(dangling)


def test_marking_checks():
    net = tiny_net(m0={"P": F(-1)})
    assert "negative-marking" in violation_kinds(net)
    disc = HybridNet(
        [Place("G", NodeKind(DISCRETE))],
        [Transition("T", NodeKind(DISCRETE), delay=F(1))],
        {("G", "T"): F(1)},
        {},
        {"G": F(1, 2)},
    )
    assert "fractional-tokens" in violation_kinds(disc)


def test_policy_membership_checks():
    net = tiny_net(policies=[priority("P", ["out", "nope"])])
    assert "policy-not-output" in violation_kinds(net)
    dup = tiny_net(policies=[ConflictPolicy("P", ({"out": F(1)}, {"out": F(1)}))])
    assert "policy-duplicate" in violation_kinds(dup)
    zero_w = tiny_net(policies=[sharing("P", {"out": F(0)})])
    assert "policy-weight" in violation_kinds(zero_w)


def test_missing_policy_on_continuous_conflict():
    net = HybridNet(
        [Place("P", NodeKind(CONTINUOUS))],
        [
            Transition("a", NodeKind(CONTINUOUS), rate=F(1)),
            Transition("b", NodeKind(CONTINUOUS), rate=F(1)),
        ],
        {("P", "a"): F(1), ("P", "b"): F(1)},
        {},
        {"P": F(1)},
    )
    assert "missing-conflict-policy" in violation_kinds(net)
    covered = net.with_changes(policies=[priority("P", ["a", "b"])])
    assert validate(covered) == []


def test_case3_two_member_conflict_needs_no_policy():
    # one discrete + one continuous competitor resolves by the fixed rule
    net = HybridNet(
        [Place("P", NodeKind(CONTINUOUS))],
        [
            Transition("c", NodeKind(CONTINUOUS), rate=F(1)),
            Transition("d", NodeKind(DISCRETE), delay=F(1)),
        ],
        {("P", "c"): F(1), ("P", "d"): F(1)},
        {},
        {"P": F(1)},
    )
    assert validate(net) == []
    assert structural_conflicts(net) == [("P", ["c", "d"], 3)]


def test_structural_conflict_cases(relay_net):
    conflicts = {pid: (set(ts), case) for pid, ts, case in structural_conflicts(relay_net)}
    assert conflicts["P1"] == ({"T4", "T5", "T6", "T15", "T16"}, 2)
    assert conflicts["P5"][1] == 2
    assert conflicts["P6"] == ({"T8", "T19"}, 2)
    # out-degree < 2 places are not listed
    assert "P8" not in conflicts and "P4" not in conflicts

    case1 = HybridNet(
        [Place("G", NodeKind(DISCRETE))],
        [Transition("a", NodeKind(DISCRETE), delay=F(1)), Transition("b", NodeKind(DISCRETE), delay=F(2))],
        {("G", "a"): F(1), ("G", "b"): F(1)},
        {},
        {"G": F(1)},
    )
    assert structural_conflicts(case1)[0][2] == 1

    case4 = HybridNet(
        [Place("G", NodeKind(DISCRETE))],
        [Transition("a", NodeKind(CONTINUOUS), rate=F(1)), Transition("b", NodeKind(CONTINUOUS), rate=F(1))],
        {("G", "a"): F(1), ("G", "b"): F(1)},
        {("a", "G"): F(1), ("b", "G"): F(1)},
        {"G": F(1)},
        [priority("G", ["a", "b"])],
    )
    assert structural_conflicts(case4)[0][2] == 4


def test_linear_net_has_no_conflicts():
    assert structural_conflicts(tiny_net()) == []


# -- file format ----------------------------------------------------------


def test_round_trip_fixture(relay_net):
    assert load_net(save_net(relay_net)) == relay_net


def test_round_trip_preserves_exact_rationals():
    net = tiny_net(
        transitions=[
            Transition("in", NodeKind(CONTINUOUS), rate=F(355, 113)),
            Transition("out", NodeKind(CONTINUOUS), rate=INF),
        ],
        m0={"P": F(10**12, 7)},
    )
    again = load_net(save_net(net))
    assert again.transitions["in"].rate == F(355, 113)
    assert again.transitions["out"].rate == INF
    assert again.m0["P"] == F(10**12, 7)


def test_round_trip_policy_forms(relay_net):
    levels = ConflictPolicy("P1", ({"T15": F(1)}, {"T4": F(1), "T5": F(2), "T6": F(1)}, {"T16": F(1)}))
    net = relay_net.with_changes(
        policies=[p for p in relay_net.policies.values() if p.place != "P1"] + [levels]
    )
    again = load_net(save_net(net))
    assert again.policies["P1"] == levels


def test_save_rejects_invalid():
    with pytest.raises(ModelError):
        save_net(tiny_net(m0={"P": F(-1)}))


def test_load_unknown_field_names_it():
    doc = net_to_doc(tiny_net())
    doc["places"][0]["colour"] = "red"
    with pytest.raises(ParseError) as err:
        load_net(json.dumps(doc))
    assert "colour" in str(err.value)


def test_load_empty_file():
    with pytest.raises(ParseError) as err:
        load_net(b"")
    assert "no places" in str(err.value)


def test_load_requires_places():
    with pytest.raises(ParseError) as err:
        load_net(json.dumps({"places": [], "transitions": []}))
    assert "no places" in str(err.value)


def test_load_duplicate_id():
    doc = net_to_doc(tiny_net())
    doc["places"].append(doc["places"][0])
    with pytest.raises(ParseError) as err:
        load_net(json.dumps(doc))
    assert "duplicate" in str(err.value)


def test_load_bad_rational_and_bad_arc():
    doc = net_to_doc(tiny_net())
    doc["arcs"][0]["weight"] = "one"
    with pytest.raises(ParseError):
        load_net(json.dumps(doc))
    doc = net_to_doc(tiny_net())
    doc["arcs"].append({"from": "in", "to": "out", "weight": "1"})
    with pytest.raises(ParseError) as err:
        load_net(json.dumps(doc))
    assert "place and a transition" in str(err.value)
