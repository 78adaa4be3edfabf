"""Instantaneous semantics: enabling, flow balances and the speed fixed point.

Within a phase every continuous transition fires at a constant speed v_j with
0 <= v_j <= V_j, where V_j is the rate cap scaled by the discrete enabling
degree. Strongly enabled transitions (all continuous inputs positive) run at
V_j. A transition whose input place is empty but fed can only pass the flow
through: its speed is the minimum of V_j and its share of each such place's
inflow. When an empty place cannot satisfy all its consumers, the place's
conflict policy (strict priority, proportional sharing, or priority-ordered
sharing levels) splits the supply.

The speed vector is found by a deterministic relaxation: per sweep, place
allocations are recomputed in place-id order from the previous sweep's
speeds, then speeds in transition-id order, then the fed/unfed labels of
empty places. A (labels, speeds, allocations) fixed point is the answer;
hitting the iteration cap raises NonConvergenceError, which marks a net
outside the supported class (e.g. gain cycles through empty places) rather
than returning a guess.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Mapping

from .errors import NonConvergenceError, UnboundedSpeedError, UnresolvedConflictError
from .model import ConflictPolicy, HybridNet, NodeKind
from .rationals import INF, Rat, is_inf, mul

ZERO = Fraction(0)


@dataclass(frozen=True)
class Marking:
    """Token counts for discrete places, fluid levels for continuous ones."""

    discrete: Mapping[str, int]
    continuous: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "discrete", dict(self.discrete))
        object.__setattr__(self, "continuous", dict(self.continuous))

    @classmethod
    def initial(cls, net: HybridNet) -> "Marking":
        m0 = net.initial_marking()
        return cls(
            {p: int(m0[p]) for p in net.discrete_places()},
            {p: Fraction(m0[p]) for p in net.continuous_places()},
        )

    def value(self, pid: str) -> Rat:
        if pid in self.discrete:
            return Fraction(self.discrete[pid])
        return self.continuous[pid]


class Label(str, Enum):
    """Three-valued continuous marking used while solving for speeds."""

    ZERO = "0"        # empty and not fed
    ZERO_PLUS = "0+"  # empty but fed at a positive rate
    POSITIVE = "+"    # positive stored value


class Enabling(str, Enum):
    NOT_ENABLED = "not-enabled"
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class ExtendedMarking:
    """Marking plus the zero/fed/positive classification of continuous places."""

    discrete: Mapping[str, int]
    labels: Mapping[str, Label]
    values: Mapping[str, Fraction]

    def __post_init__(self):
        object.__setattr__(self, "discrete", dict(self.discrete))
        object.__setattr__(self, "labels", dict(self.labels))
        object.__setattr__(self, "values", dict(self.values))


# -- degrees and caps ------------------------------------------------------------


def enabling_degree(net: HybridNet, m: Marking, tid: str) -> Rat | None:
    """min over input places of m(P)/Pre(P,t); None = unbounded (no inputs)."""
    if tid not in net.transitions:
        raise KeyError(f"unknown transition {tid}")
    inputs = net.inputs_of(tid)
    if not inputs:
        return None
    return min(Fraction(m.value(pid)) / w for pid, w in inputs)


def d_enabling_degree(net: HybridNet, m: Marking, tid: str) -> Fraction | None:
    """Degree from discrete input places only; None = unbounded.

    Quantises a continuous transition's speed budget: the rate cap is this
    degree times the flow rate. Not floored; a half-marked gate yields half
    a server.
    """
    t = net.transitions[tid]
    if t.kind != NodeKind.CONTINUOUS:
        raise ValueError(f"{tid} is discrete; D-enabling degree applies to continuous transitions")
    discrete_inputs = [
        (pid, w) for pid, w in net.inputs_of(tid) if net.places[pid].kind == NodeKind.DISCRETE
    ]
    if not discrete_inputs:
        return None
    return min(Fraction(m.discrete[pid]) / w for pid, w in discrete_inputs)


def max_firing_speed(net: HybridNet, m: Marking, tid: str,
                     rates: Mapping[str, Rat] | None = None) -> Rat:
    """Speed cap V = D * U; with no discrete gate the cap is the rate itself.

    inf * 0 is 0 (an ungated immediate transition stays off), inf * k is inf.
    """
    t = net.transitions[tid]
    rate = (rates or {}).get(tid, t.rate)
    d = d_enabling_degree(net, m, tid)
    if d is None:
        return rate
    return mul(d, rate)


def classify_enabling(net: HybridNet, ext: ExtendedMarking, tid: str):
    """Enabling state of a transition under an extended marking.

    Continuous transitions return an Enabling value; discrete transitions
    return (enabled, degree) with degree None meaning unbounded.
    """
    t = net.transitions[tid]
    if t.kind == NodeKind.DISCRETE:
        return discrete_enabling(net, Marking(ext.discrete, ext.values), tid)

    m = Marking(ext.discrete, ext.values)
    d = d_enabling_degree(net, m, tid)
    if d is not None and d <= 0:
        return Enabling.NOT_ENABLED
    cont_inputs = [pid for pid, _ in net.inputs_of(tid) if net.places[pid].kind == NodeKind.CONTINUOUS]
    labels = [ext.labels[pid] for pid in cont_inputs]
    if any(lab == Label.ZERO for lab in labels):
        return Enabling.NOT_ENABLED
    if t.rate is not None and is_inf(t.rate):
        # immediate transitions are at most weakly enabled
        return Enabling.WEAK
    if all(lab == Label.POSITIVE for lab in labels):
        return Enabling.STRONG
    return Enabling.WEAK


def discrete_enabling(net: HybridNet, m: Marking, tid: str) -> tuple[bool, int | None]:
    """Standard discrete rule: enabled iff every input holds >= Pre."""
    inputs = net.inputs_of(tid)
    if not inputs:
        return True, None
    degree = None
    for pid, w in inputs:
        q = Fraction(m.value(pid)) / w
        degree = q if degree is None else min(degree, q)
    floor = int(degree) if degree >= 0 else 0
    return degree >= 1, floor


# -- place flow rates --------------------------------------------------------------


def feeding_speed(net: HybridNet, v: Mapping[str, Rat], pid: str) -> Rat:
    """Total inflow rate of a continuous place under speed vector v."""
    total: Rat = ZERO
    for tid, w in net.place_inputs(pid):
        if net.transitions[tid].kind == NodeKind.CONTINUOUS:
            total += mul(w, v.get(tid, ZERO))
    return total


def draining_speed(net: HybridNet, v: Mapping[str, Rat], pid: str) -> Rat:
    """Total outflow rate of a continuous place under speed vector v."""
    total: Rat = ZERO
    for tid, w in net.place_outputs(pid):
        if net.transitions[tid].kind == NodeKind.CONTINUOUS:
            total += mul(w, v.get(tid, ZERO))
    return total


def balance(net: HybridNet, v: Mapping[str, Rat], pid: str) -> Rat:
    """d/dt of the place's marking: inflow minus outflow."""
    return feeding_speed(net, v, pid) - draining_speed(net, v, pid)


# -- conflict resolution ------------------------------------------------------------


def resolve_conflict(policy: ConflictPolicy, supply: Rat, demands: Mapping[str, Rat]) -> dict[str, Rat]:
    """Split ``supply`` (flow units) among ``demands`` per the policy.

    Levels are served in order; within a level the remaining supply is
    water-filled proportionally to the weights, capping each member at its
    demand and redistributing the excess. Total granted never exceeds
    supply, and no member exceeds its demand.
    """
    grants: dict[str, Rat] = {t: ZERO for t in demands}
    members = set(policy.members())
    uncovered = sorted(t for t, d in demands.items() if d > 0 and t not in members)
    if uncovered:
        raise UnresolvedConflictError(
            policy.place, f"policy does not cover demanding transitions {', '.join(uncovered)}"
        )
    remaining = supply
    for level in policy.levels:
        if remaining <= 0:
            break
        wanting = {t: demands[t] for t in sorted(level) if demands.get(t, ZERO) > 0}
        if not wanting:
            continue
        total = INF if any(is_inf(d) for d in wanting.values()) else sum(wanting.values())
        if not is_inf(total) and total <= remaining:
            for t, d in wanting.items():
                grants[t] = d
            remaining -= total
        else:
            weights = {t: level[t] for t in wanting}
            grants.update(_water_fill(remaining, weights, wanting))
            remaining = ZERO
    return grants


def _water_fill(supply: Rat, weights: Mapping[str, Rat], demands: Mapping[str, Rat]) -> dict[str, Rat]:
    grants = {t: ZERO for t in weights}
    active = set(weights)
    remaining = supply
    while remaining > 0 and active:
        total_w = sum(weights[t] for t in active)
        over = [
            t for t in sorted(active)
            if not is_inf(demands[t]) and remaining * weights[t] / total_w >= demands[t]
        ]
        if not over:
            for t in sorted(active):
                grants[t] = remaining * weights[t] / total_w
            break
        for t in over:
            grants[t] = demands[t]
            remaining -= demands[t]
            active.remove(t)
    return grants


# -- the speed fixed point ------------------------------------------------------------


def _iteration_cap(net: HybridNet) -> int:
    return max(10 * len(net.transitions), 40)


def compute_speed_vector(
    net: HybridNet,
    m: Marking,
    policies: Mapping[str, ConflictPolicy] | None = None,
    rates: Mapping[str, Rat] | None = None,
) -> tuple[dict[str, Rat], ExtendedMarking]:
    """Solve for the instantaneous speeds and the consistent extended marking.

    ``rates`` optionally overrides transition rates (used by rate schedules).
    Raises UnresolvedConflictError when an effective conflict has no covering
    policy, NonConvergenceError when no fixed point is reached, and
    UnboundedSpeedError when an immediate transition is left unconstrained.
    """
    pols = net.policies if policies is None else dict(policies)
    v, ext, _ = _fixed_point(net, m, pols, rates, resolve=True)
    for tid, speed in v.items():
        if is_inf(speed):
            raise UnboundedSpeedError(
                f"immediate transition {tid} has no finite constraint "
                "(all its input places are marked)",
                subject=tid,
            )
    # an empty place may fill up (C2) but must never be over-drained
    for pid, lab in ext.labels.items():
        if lab != Label.POSITIVE and balance(net, v, pid) < 0:
            raise NonConvergenceError(f"negative balance at empty place {pid}", subject=pid)
    return v, ext


def speed_vector_details(
    net: HybridNet,
    m: Marking,
    policies: Mapping[str, ConflictPolicy] | None = None,
    rates: Mapping[str, Rat] | None = None,
):
    """compute_speed_vector plus the final per-place allocations (for checks)."""
    pols = net.policies if policies is None else dict(policies)
    return _fixed_point(net, m, pols, rates, resolve=True)


def conflict_free_speeds(
    net: HybridNet,
    m: Marking,
    rates: Mapping[str, Rat] | None = None,
) -> dict[str, Rat]:
    """Speeds each transition would take if no place enforced its supply.

    Every consumer of an empty fed place independently takes its full share
    of the inflow; the joint demand may exceed supply. This is the candidate
    assignment that effective-conflict detection compares against.
    """
    v, _, _ = _fixed_point(net, m, {}, rates, resolve=False)
    return v


def effective_conflicts(
    net: HybridNet,
    m: Marking,
    v_candidate: Mapping[str, Rat] | None = None,
    rates: Mapping[str, Rat] | None = None,
) -> list[str]:
    """Empty places whose inflow cannot cover their consumers' joint demand.

    Only structural-conflict places qualify; the comparison is strict, so a
    place whose supply exactly matches demand is not in conflict.
    """
    if v_candidate is None:
        v_candidate = conflict_free_speeds(net, m, rates)
    conflicted = []
    for pid, _competitors, _case in structural_conflicts_continuous(net):
        if net.places[pid].kind != NodeKind.CONTINUOUS or m.continuous[pid] > 0:
            continue
        # the candidate speeds already carry each consumer's min-share demand,
        # so the condition is just: joint demand exceeds inflow (strictly)
        supply = feeding_speed(net, v_candidate, pid)
        demand = draining_speed(net, v_candidate, pid)
        if supply < demand:
            conflicted.append(pid)
    return conflicted


def structural_conflicts_continuous(net: HybridNet):
    """Structural conflicts restricted to >= 2 continuous competitors."""
    from .model import structural_conflicts

    out = []
    for pid, competitors, case in structural_conflicts(net):
        cont = [t for t in competitors if net.transitions[t].kind == NodeKind.CONTINUOUS]
        if len(cont) >= 2:
            out.append((pid, cont, case))
    return out


def _speed_caps(net: HybridNet, m: Marking, rates) -> dict[str, Rat]:
    return {t: max_firing_speed(net, m, t, rates) for t in net.continuous_transitions()}


def _fixed_point(net, m, policies, rates, resolve):
    cont_trans = sorted(net.continuous_transitions())
    cont_places = sorted(net.continuous_places())
    caps = _speed_caps(net, m, rates)

    cont_inputs = {
        t: [(p, w) for p, w in net.inputs_of(t) if net.places[p].kind == NodeKind.CONTINUOUS]
        for t in cont_trans
    }
    cont_outputs = {
        p: [(t, w) for t, w in net.place_outputs(p) if net.transitions[t].kind == NodeKind.CONTINUOUS]
        for p in cont_places
    }
    d_enabled = {t: caps[t] > 0 or is_inf(caps[t]) for t in cont_trans}

    labels = {
        p: Label.POSITIVE if m.continuous[p] > 0 else Label.ZERO for p in cont_places
    }
    v: dict[str, Rat] = {t: ZERO for t in cont_trans}
    alloc: dict[str, dict[str, Rat]] = {}
    budget_cap: dict[str, Rat] = {}

    # discrete places whose token budget is shared by several continuous
    # transitions (case-4 conflicts): the budget is split by policy
    shared_gates = []
    for p in sorted(net.discrete_places()):
        members = [
            (t, w) for t, w in net.place_outputs(p)
            if net.transitions[t].kind == NodeKind.CONTINUOUS
        ]
        if len(members) >= 2:
            for t, _ in members:
                rate = (rates or {}).get(t, net.transitions[t].rate)
                if is_inf(rate):
                    raise NonConvergenceError(
                        f"immediate transition {t} competes for discrete place {p}; "
                        "budget sharing needs finite rates",
                        subject=p,
                    )
            shared_gates.append((p, members))

    # scarcity[p][t]: last grant at p that cut t below its demand there.
    # Only those grants constrain t's demand at *other* places; grants that
    # met the demand in full carry no information beyond p's raw inflow
    # share, and feeding them back as caps can lock a mutual zero in place.
    scarcity: dict[str, dict[str, Rat]] = {}

    def enabled(t):
        if not d_enabled[t]:
            return False
        return all(labels[p] != Label.ZERO for p, _ in cont_inputs[t])

    def demand_speed(t, at_place, inflow, budget):
        """Speed t would claim at ``at_place`` given shares elsewhere.

        Capped by each fed empty input's raw inflow share and by scarcity
        cuts at *other* places; the place we are asking for must see the
        full claim, or conflicts there would go undetected.
        """
        if not enabled(t):
            return ZERO
        share: Rat = min(caps[t], budget.get(t, INF))
        for p, pw in cont_inputs[t]:
            if labels[p] != Label.ZERO_PLUS:
                continue
            offer = Fraction(inflow[p]) / pw if not is_inf(inflow[p]) else INF
            share = min(share, offer)
            if p == at_place:
                continue
            cut = scarcity.get(p, {}).get(t)
            if cut is not None:
                share = min(share, cut)
        return share

    cap = _iteration_cap(net)
    prev_state = None
    for _ in range(cap):
        inflow = {p: feeding_speed(net, v, p) for p in cont_places}

        new_alloc: dict[str, dict[str, Rat]] = {}
        new_scarcity: dict[str, dict[str, Rat]] = {}
        for p in cont_places:
            if labels[p] != Label.ZERO_PLUS:
                continue
            outs = cont_outputs[p]
            if not outs:
                continue
            demands = {t: demand_speed(t, p, inflow, budget_cap) for t, _w in outs}
            flows = {t: mul(w, demands[t]) for t, w in outs}
            total = INF if any(is_inf(f) for f in flows.values()) else sum(flows.values())
            if is_inf(total) or total > inflow[p]:
                if not resolve:
                    new_alloc[p] = demands
                    continue
                policy = policies.get(p)
                if policy is None:
                    raise UnresolvedConflictError(p, "no policy declared")
                granted = resolve_conflict(policy, inflow[p], flows)
                grants = {t: granted.get(t, ZERO) / w for t, w in outs}
                new_alloc[p] = grants
                new_scarcity[p] = {
                    t: grants[t] for t, _w in outs if grants[t] < demands[t]
                }
            else:
                new_alloc[p] = demands
        alloc, scarcity = new_alloc, new_scarcity

        # split the token budget of shared discrete gates by policy
        new_budget_cap: dict[str, Rat] = {}
        for p, members in shared_gates:
            budget = Fraction(m.discrete[p])
            rate_of = {t: (rates or {}).get(t, net.transitions[t].rate) for t, _ in members}
            needs: dict[str, Rat] = {}
            for t, w in members:
                want = demand_speed(t, None, inflow, {})
                needs[t] = mul(w, want / rate_of[t])
            if sum(needs.values()) > budget:
                if resolve:
                    policy = policies.get(p)
                    if policy is None:
                        raise UnresolvedConflictError(p, "no policy declared for shared gate")
                    granted = resolve_conflict(policy, budget, needs)
                else:
                    granted = needs
                for t, w in members:
                    new_budget_cap[t] = granted.get(t, ZERO) / w * rate_of[t]
        budget_cap = new_budget_cap

        new_v: dict[str, Rat] = {}
        for t in cont_trans:
            if not enabled(t):
                new_v[t] = ZERO
                continue
            speed: Rat = min(caps[t], budget_cap.get(t, INF))
            for p, _w in cont_inputs[t]:
                if labels[p] == Label.ZERO_PLUS:
                    speed = min(speed, alloc.get(p, {}).get(t, INF))
            new_v[t] = speed

        new_labels = {}
        for p in cont_places:
            if m.continuous[p] > 0:
                new_labels[p] = Label.POSITIVE
            else:
                fed = feeding_speed(net, new_v, p) > 0
                new_labels[p] = Label.ZERO_PLUS if fed else Label.ZERO

        state = (new_v, new_labels, alloc, scarcity, budget_cap)
        if state == prev_state:
            ext = ExtendedMarking(m.discrete, labels, m.continuous)
            return v, ext, alloc
        prev_state = state
        v, labels = new_v, new_labels

    raise NonConvergenceError(
        f"speed vector did not stabilise within {cap} sweeps; "
        "the net is outside the solver's supported class"
    )
