from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from hpnsim.casestudy import relay_network
from hpnsim.errors import UnboundedSpeedError, UnresolvedConflictError
from hpnsim.model import (
    CONTINUOUS,
    DISCRETE,
    HybridNet,
    NodeKind,
    Place,
    Transition,
    priority,
    sharing,
)
from hpnsim.oracle import euler_simulate
from hpnsim.rationals import INF, is_inf
from hpnsim.semantics import (
    Enabling,
    Label,
    Marking,
    balance,
    classify_enabling,
    compute_speed_vector,
    conflict_free_speeds,
    d_enabling_degree,
    draining_speed,
    effective_conflicts,
    enabling_degree,
    feeding_speed,
    max_firing_speed,
    resolve_conflict,
)

C, D = NodeKind(CONTINUOUS), NodeKind(DISCRETE)


def net_of(places, transitions, pre, post, m0, policies=()):
    return HybridNet(places, transitions, pre, post, m0, policies)


# -- enabling degrees ----------------------------------------------------------


def test_enabling_degree_quotient():
    net = net_of(
        [Place("P", C)], [Transition("T", C, rate=F(1))], {("P", "T"): F(2)}, {}, {"P": F(6)}
    )
    assert enabling_degree(net, Marking.initial(net), "T") == F(3)


def test_enabling_degree_min_over_inputs():
    net = net_of(
        [Place("A", C), Place("B", C)],
        [Transition("T", C, rate=F(1))],
        {("A", "T"): F(2), ("B", "T"): F(1)},
        {},
        {"A": F(4), "B": F(1)},
    )
    assert enabling_degree(net, Marking.initial(net), "T") == F(1)


def test_enabling_degree_no_inputs_unbounded():
    net = net_of([Place("P", C)], [Transition("T", C, rate=F(1))], {}, {("T", "P"): F(1)}, {})
    assert enabling_degree(net, Marking.initial(net), "T") is None
    with pytest.raises(KeyError):
        enabling_degree(net, Marking.initial(net), "missing")


def test_d_enabling_degree():
    net = net_of(
        [Place("G", D), Place("P", C)],
        [Transition("T", C, rate=F(2)), Transition("X", D, delay=F(1))],
        {("G", "T"): F(2), ("P", "T"): F(1), ("G", "X"): F(1)},
        {("T", "G"): F(2)},
        {"G": F(3), "P": F(1)},
    )
    m = Marking.initial(net)
    assert d_enabling_degree(net, m, "T") == F(3, 2)  # floor-free
    assert max_firing_speed(net, m, "T") == F(3)
    with pytest.raises(ValueError):
        d_enabling_degree(net, m, "X")


def test_d_degree_cases():
    def gated(tokens, rate):
        net = net_of(
            [Place("G", D)],
            [Transition("T", C, rate=rate)],
            {("G", "T"): F(1)},
            {("T", "G"): F(1)},
            {"G": F(tokens)},
        )
        return net, Marking.initial(net)

    net, m = gated(1, F(2))
    assert d_enabling_degree(net, m, "T") == 1 and max_firing_speed(net, m, "T") == F(2)
    net, m = gated(0, F(2))
    assert max_firing_speed(net, m, "T") == 0
    net, m = gated(1, INF)
    assert is_inf(max_firing_speed(net, m, "T"))
    net, m = gated(0, INF)  # inf * 0 = 0
    assert max_firing_speed(net, m, "T") == 0


def test_max_speed_without_gate_is_rate():
    net = net_of([Place("P", C)], [Transition("T", C, rate=F(2))], {("P", "T"): F(1)}, {}, {"P": F(1)})
    assert max_firing_speed(net, Marking.initial(net), "T") == F(2)


# -- enabling classification ----------------------------------------------------------


def test_classify_enabling(relay_net):
    m = Marking.initial(relay_net)
    _, ext = compute_speed_vector(relay_net, m)
    assert classify_enabling(relay_net, ext, "T1") == Enabling.STRONG  # no inputs
    assert classify_enabling(relay_net, ext, "T4") == Enabling.WEAK  # P1 is 0+
    assert classify_enabling(relay_net, ext, "T16") == Enabling.WEAK  # immediate


def test_classify_not_enabled_on_unfed_zero():
    net = net_of(
        [Place("P", C)],
        [Transition("T", C, rate=F(1))],
        {("P", "T"): F(1)},
        {},
        {},
    )
    _, ext = compute_speed_vector(net, Marking.initial(net))
    assert ext.labels["P"] == Label.ZERO
    assert classify_enabling(net, ext, "T") == Enabling.NOT_ENABLED


def test_classify_discrete():
    net = net_of(
        [Place("G", D)],
        [Transition("X", D, delay=F(1))],
        {("G", "X"): F(2)},
        {},
        {"G": F(5)},
    )
    _, ext = compute_speed_vector(net, Marking.initial(net))
    enabled, degree = classify_enabling(net, ext, "X")
    assert enabled and degree == 2


# -- flow rates ----------------------------------------------------------


def test_flow_rates_zero_vector(relay_net):
    v = {t: F(0) for t in relay_net.continuous_transitions()}
    for p in ("P1", "P4", "P6"):
        assert feeding_speed(relay_net, v, p) == 0
        assert draining_speed(relay_net, v, p) == 0
        assert balance(relay_net, v, p) == 0


def test_balance_hand_sum_and_euler():
    # one feeder (Post=2, v=1.5), one drain (Pre=1, v=1): balance 2
    net = net_of(
        [Place("P", C), Place("Src", C), Place("Out", C)],
        [Transition("A", C, rate=F(3, 2)), Transition("B", C, rate=F(1))],
        {("Src", "A"): F(1), ("P", "B"): F(1)},
        {("A", "P"): F(2), ("B", "Out"): F(1)},
        {"Src": F(100), "P": F(5)},
    )
    v, _ = compute_speed_vector(net, Marking.initial(net))
    assert v == {"A": F(3, 2), "B": F(1)}
    assert balance(net, v, "P") == F(2)
    # Euler oracle confirms the slope
    samples = euler_simulate(net, dt=F(1, 100), horizon=F(1))
    t_end, cm = samples[-1]
    assert abs(cm["P"] - (5 + 2 * t_end)) < 0.1


def test_fixture_balances(relay_net):
    v, _ = compute_speed_vector(relay_net, Marking.initial(relay_net))
    assert balance(relay_net, v, "P4") == F(7, 2)
    assert balance(relay_net, v, "P5") == F(-7, 2)


# -- effective conflicts ----------------------------------------------------------


def two_consumer_net(v_a=F(1), v_b=F(1, 2), policies=()):
    """source(1) -> X(empty) -> {A, B}"""
    return net_of(
        [Place("X", C), Place("OutA", C), Place("OutB", C)],
        [
            Transition("src", C, rate=F(1)),
            Transition("A", C, rate=v_a),
            Transition("B", C, rate=v_b),
        ],
        {("X", "A"): F(1), ("X", "B"): F(1)},
        {("src", "X"): F(1), ("A", "OutA"): F(1), ("B", "OutB"): F(1)},
        {},
        policies,
    )


def test_marked_place_never_in_effective_conflict():
    net = two_consumer_net(policies=[priority("X", ["A", "B"])])
    net = net.with_changes(m0={"X": F(5)})
    assert effective_conflicts(net, Marking.initial(net)) == []


def test_exact_supply_is_not_a_conflict():
    net = two_consumer_net(v_a=F(1, 2), v_b=F(1, 2))
    m = Marking.initial(net)
    assert effective_conflicts(net, m) == []
    v, _ = compute_speed_vector(net, m)  # needs no policy either
    assert v["A"] == F(1, 2) and v["B"] == F(1, 2)


def test_undersupply_is_a_conflict_and_policies_differ():
    m = Marking.initial(two_consumer_net())
    assert effective_conflicts(two_consumer_net(), m) == ["X"]

    by_priority, _ = compute_speed_vector(
        two_consumer_net(policies=[priority("X", ["A", "B"])]), m
    )
    assert (by_priority["A"], by_priority["B"]) == (F(1), F(0))

    by_share, _ = compute_speed_vector(
        two_consumer_net(policies=[sharing("X", {"A": F(1), "B": F(1)})]), m
    )
    assert (by_share["A"], by_share["B"]) == (F(1, 2), F(1, 2))


def test_conflict_without_policy_halts():
    with pytest.raises(UnresolvedConflictError) as err:
        compute_speed_vector(two_consumer_net(), Marking.initial(two_consumer_net()))
    assert err.value.place == "X"


# -- conflict resolution ----------------------------------------------------------


def test_priority_greedy():
    pol = priority("X", ["A", "B"])
    grants = resolve_conflict(pol, F(1), {"A": F(1), "B": F(1, 2)})
    assert grants == {"A": F(1), "B": F(0)}


def test_sharing_even_split():
    pol = sharing("X", {"A": F(1), "B": F(1)})
    grants = resolve_conflict(pol, F(1), {"A": F(1), "B": F(1)})
    assert grants == {"A": F(1, 2), "B": F(1, 2)}


def test_sharing_redistributes_capped_surplus():
    pol = sharing("X", {"A": F(1), "B": F(1)})
    grants = resolve_conflict(pol, F(1), {"A": F(1, 5), "B": F(1)})
    assert grants == {"A": F(1, 5), "B": F(4, 5)}


def test_sharing_redistribution_matches_euler():
    # same 0.2/0.8 split emerges from time-stepping a 2-consumer net
    net = two_consumer_net(v_a=F(1, 5), v_b=F(2), policies=[sharing("X", {"A": F(1), "B": F(1)})])
    v, _ = compute_speed_vector(net, Marking.initial(net))
    assert (v["A"], v["B"]) == (F(1, 5), F(4, 5))
    samples = euler_simulate(net, dt=F(1, 50), horizon=F(4))
    _, cm = samples[-1]
    assert abs(cm["OutA"] - 0.2 * 4) < 0.05
    assert abs(cm["OutB"] - 0.8 * 4) < 0.05


def test_layered_policy_priority_between_sharing_groups():
    from hpnsim.model import ConflictPolicy

    pol = ConflictPolicy("X", ({"hi": F(1)}, {"a": F(1), "b": F(1)}, {"lo": F(1)}))
    grants = resolve_conflict(pol, F(2), {"hi": F(1, 2), "a": F(1), "b": F(1), "lo": INF})
    assert grants == {"hi": F(1, 2), "a": F(3, 4), "b": F(3, 4), "lo": F(0)}


def test_infinite_demand_takes_remainder():
    pol = priority("X", ["A", "B"])
    grants = resolve_conflict(pol, F(4), {"A": F(1), "B": INF})
    assert grants == {"A": F(1), "B": F(3)}


def test_uncovered_demand_raises():
    pol = priority("X", ["A"])
    with pytest.raises(UnresolvedConflictError):
        resolve_conflict(pol, F(1), {"A": F(1), "B": F(1)})


@given(
    supply=st.fractions(min_value=0, max_value=10, max_denominator=100),
    demands=st.lists(st.fractions(min_value=0, max_value=5, max_denominator=100), min_size=1, max_size=5),
    weights=st.lists(st.integers(min_value=1, max_value=4), min_size=5, max_size=5),
)
@settings(max_examples=200, deadline=None)
def test_sharing_totality_and_caps(supply, demands, weights):
    names = [f"t{i}" for i in range(len(demands))]
    pol = sharing("X", dict(zip(names, map(F, weights))))
    ds = dict(zip(names, demands))
    grants = resolve_conflict(pol, supply, ds)
    total = sum(grants.values())
    for t in names:
        assert 0 <= grants[t] <= ds[t]
    assert total <= supply
    if sum(demands) >= supply:
        assert total == supply  # sharing totality


@given(
    supply=st.fractions(min_value=0, max_value=10, max_denominator=100),
    demands=st.lists(st.fractions(min_value=0, max_value=5, max_denominator=100), min_size=2, max_size=5),
)
@settings(max_examples=200, deadline=None)
def test_priority_dominance(supply, demands):
    names = [f"t{i}" for i in range(len(demands))]
    pol = priority("X", names)
    ds = dict(zip(names, demands))
    grants = resolve_conflict(pol, supply, ds)
    for i, earlier in enumerate(names):
        for later in names[i + 1 :]:
            if grants[later] > 0:
                assert grants[earlier] == ds[earlier]


# -- the full fixed point ----------------------------------------------------------


def test_fixture_speed_vector(relay_net):
    v, ext = compute_speed_vector(relay_net, Marking.initial(relay_net))
    expected = [F(4), F(3), F(5), F(1), F(3, 2), F(1), F(1, 2), F(1, 2), F(1), F(0),
                F(1, 2), F(1), F(1, 2), F(1, 2), F(1, 2), F(0), F(1), F(5, 2), F(1, 2)]
    assert [v[f"T{i}"] for i in range(1, 20)] == expected
    assert ext.labels["P5"] == Label.POSITIVE
    assert ext.labels["P1"] == Label.ZERO_PLUS


def test_pipe_steady_state():
    # source capped at 2 into an empty place drained by a faster sink
    net = net_of(
        [Place("X", C), Place("Out", C)],
        [Transition("src", C, rate=F(2)), Transition("snk", C, rate=F(3))],
        {("X", "snk"): F(1)},
        {("src", "X"): F(1), ("snk", "Out"): F(1)},
        {},
    )
    v, _ = compute_speed_vector(net, Marking.initial(net))
    assert v == {"src": F(2), "snk": F(2)}


def test_conflict_free_candidate_overbooks():
    net = two_consumer_net()
    cand = conflict_free_speeds(net, Marking.initial(net))
    assert cand["A"] == F(1) and cand["B"] == F(1, 2)
    assert draining_speed(net, cand, "X") > feeding_speed(net, cand, "X")


def test_unbounded_immediate_rejected():
    net = net_of(
        [Place("P", C)],
        [Transition("T", C, rate=INF)],
        {("P", "T"): F(1)},
        {},
        {"P": F(1)},
    )
    with pytest.raises(UnboundedSpeedError):
        compute_speed_vector(net, Marking.initial(net))


def test_shared_gate_budget_split():
    # two continuous transitions looped on one marked discrete place
    def gate_net(policy):
        return net_of(
            [Place("G", D), Place("OutA", C), Place("OutB", C)],
            [Transition("A", C, rate=F(2)), Transition("B", C, rate=F(2))],
            {("G", "A"): F(1), ("G", "B"): F(1)},
            {("A", "G"): F(1), ("B", "G"): F(1), ("A", "OutA"): F(1), ("B", "OutB"): F(1)},
            {"G": F(1)},
            [policy],
        )

    v, _ = compute_speed_vector(gate_net(priority("G", ["A", "B"])), Marking.initial(gate_net(priority("G", ["A", "B"]))))
    assert (v["A"], v["B"]) == (F(2), F(0))  # A takes the whole token budget

    net = gate_net(sharing("G", {"A": F(1), "B": F(1)}))
    v, _ = compute_speed_vector(net, Marking.initial(net))
    assert (v["A"], v["B"]) == (F(1), F(1))  # half a server each


def test_scale_invariance(relay_net):
    from hpnsim.casestudy import BASE_RATES, relay_network

    k = F(7, 3)
    scaled = relay_network({t: (r if is_inf(r) else r * k) for t, r in BASE_RATES.items()})
    v1, _ = compute_speed_vector(relay_net, Marking.initial(relay_net))
    v2, _ = compute_speed_vector(scaled, Marking.initial(scaled))
    for t in relay_net.continuous_transitions():
        assert v2[t] == v1[t] * k, t
