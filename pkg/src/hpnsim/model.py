"""Hybrid Petri net structure, validation and the JSON file format.

A net mixes discrete places/transitions (token counts, firing delays) with
continuous ones (fluid levels, flow rates). Arcs carry non-negative rational
weights; arcs touching a discrete place must be integer weighted, and a
discrete place attached to a continuous transition must form a
marking-preserving loop (equal weights both ways) so continuous flow can be
gated by tokens without consuming them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import ModelError, ParseError
from .rationals import INF, Rat, fmt_rat, is_inf, parse_rat, rat

DISCRETE = "discrete"
CONTINUOUS = "continuous"

TRANSITION_ROLES = ("transfer", "high-priority-job", "low-priority-drain")


class NodeKind(str, Enum):
    DISCRETE = DISCRETE
    CONTINUOUS = CONTINUOUS


@dataclass(frozen=True)
class Place:
    id: str
    kind: NodeKind
    name: str = ""

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.id)


@dataclass(frozen=True)
class Transition:
    """A transition; exactly one of ``delay``/``rate`` is set by kind.

    ``delay``: firing delay of a discrete transition (INF = never fires).
    ``rate``: maximal flow rate of a continuous transition (INF = immediate).
    ``role``: optional decision-layer tag (see TRANSITION_ROLES).
    ``set_rates``: rates applied to other transitions when this (discrete)
    transition fires; used by scenario-generated rate schedulers.
    """

    id: str
    kind: NodeKind
    delay: Rat | None = None
    rate: Rat | None = None
    role: str | None = None
    set_rates: Mapping[str, Rat] | None = None

    def __post_init__(self):
        if self.set_rates is not None:
            object.__setattr__(self, "set_rates", dict(self.set_rates))

    def __hash__(self):
        return hash(self.id)


def priority(place: str, order: Iterable[str]) -> "ConflictPolicy":
    """Strict priority policy: earlier in ``order`` = served first."""
    return ConflictPolicy(place, tuple({t: Fraction(1)} for t in order))


def sharing(place: str, weights: Mapping[str, Rat]) -> "ConflictPolicy":
    """Proportional sharing policy with positive weights."""
    return ConflictPolicy(place, (dict(weights),))


@dataclass(frozen=True)
class ConflictPolicy:
    """How an effective conflict at ``place`` splits scarce supply.

    ``levels`` is an ordered tuple of weight maps. Levels are served in
    strict priority order; within a level the supply left over is shared in
    proportion to the weights. Plain priority is all-singleton levels, plain
    sharing a single level; mixed forms are allowed.
    """

    place: str
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(dict(l) for l in self.levels))

    def members(self) -> list[str]:
        return [t for level in self.levels for t in level]

    def is_priority(self) -> bool:
        return all(len(level) == 1 for level in self.levels)

    def is_sharing(self) -> bool:
        return len(self.levels) == 1


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    message: str

    def as_dict(self):
        return {"kind": self.kind, "subject": self.subject, "message": self.message}


class HybridNet:
    """Immutable-by-convention net: places, transitions, incidence, m0, policies.

    ``pre[(pid, tid)]`` is the weight of the arc place->transition,
    ``post[(tid, pid)]`` of transition->place. Zero-weight arcs are dropped
    at construction. ``m0`` may be partial; unnamed places start at 0.
    """

    def __init__(
        self,
        places: Iterable[Place],
        transitions: Iterable[Transition],
        pre: Mapping[tuple, Rat],
        post: Mapping[tuple, Rat],
        m0: Mapping[str, Rat] | None = None,
        policies: Iterable[ConflictPolicy] = (),
    ):
        self.places = {p.id: p for p in places}
        self.transitions = {t.id: t for t in transitions}
        self.pre = {k: rat(v) for k, v in pre.items() if rat(v) != 0}
        self.post = {k: rat(v) for k, v in post.items() if rat(v) != 0}
        self.m0 = {pid: rat(v) for pid, v in (m0 or {}).items()}
        self.policies = {pol.place: pol for pol in policies}
        self._index()

    def _index(self):
        self._t_inputs = {t: [] for t in self.transitions}
        self._t_outputs = {t: [] for t in self.transitions}
        self._p_inputs = {p: [] for p in self.places}
        self._p_outputs = {p: [] for p in self.places}
        for (pid, tid), w in sorted(self.pre.items()):
            if tid in self._t_inputs and pid in self._p_outputs:
                self._t_inputs[tid].append((pid, w))
                self._p_outputs[pid].append((tid, w))
        for (tid, pid), w in sorted(self.post.items()):
            if tid in self._t_outputs and pid in self._p_inputs:
                self._t_outputs[tid].append((pid, w))
                self._p_inputs[pid].append((tid, w))

    # -- structural accessors -------------------------------------------------

    def inputs_of(self, tid: str) -> list[tuple[str, Rat]]:
        """(place, weight) pairs feeding transition ``tid``."""
        return self._t_inputs[tid]

    def outputs_of(self, tid: str) -> list[tuple[str, Rat]]:
        """(place, weight) pairs produced by transition ``tid``."""
        return self._t_outputs[tid]

    def place_inputs(self, pid: str) -> list[tuple[str, Rat]]:
        """(transition, weight) pairs feeding place ``pid``."""
        return self._p_inputs[pid]

    def place_outputs(self, pid: str) -> list[tuple[str, Rat]]:
        """(transition, weight) pairs draining place ``pid``."""
        return self._p_outputs[pid]

    def kind_of(self, node_id: str) -> NodeKind:
        if node_id in self.places:
            return self.places[node_id].kind
        return self.transitions[node_id].kind

    def continuous_places(self) -> list[str]:
        return [p.id for p in self.places.values() if p.kind == NodeKind.CONTINUOUS]

    def discrete_places(self) -> list[str]:
        return [p.id for p in self.places.values() if p.kind == NodeKind.DISCRETE]

    def continuous_transitions(self) -> list[str]:
        return [t.id for t in self.transitions.values() if t.kind == NodeKind.CONTINUOUS]

    def discrete_transitions(self) -> list[str]:
        return [t.id for t in self.transitions.values() if t.kind == NodeKind.DISCRETE]

    def initial_marking(self) -> dict[str, Rat]:
        return {pid: self.m0.get(pid, Fraction(0)) for pid in self.places}

    def with_changes(self, *, places=None, transitions=None, pre=None, post=None,
                     m0=None, policies=None) -> "HybridNet":
        """Functional update used by scenario application and composition."""
        return HybridNet(
            places if places is not None else list(self.places.values()),
            transitions if transitions is not None else list(self.transitions.values()),
            pre if pre is not None else self.pre,
            post if post is not None else self.post,
            m0 if m0 is not None else self.m0,
            policies if policies is not None else list(self.policies.values()),
        )

    def __eq__(self, other):
        if not isinstance(other, HybridNet):
            return NotImplemented
        return (
            self.places == other.places
            and self.transitions == other.transitions
            and self.pre == other.pre
            and self.post == other.post
            and self.initial_marking() == other.initial_marking()
            and self.policies == other.policies
        )

    def __repr__(self):
        return f"HybridNet(|P|={len(self.places)}, |T|={len(self.transitions)})"


# -- validation ----------------------------------------------------------------


def validate(net: HybridNet) -> list[Violation]:
    """Check every structural invariant; an empty report means valid.

    Violations are data, not exceptions: callers that require a valid net
    (save_net, evolve) raise ModelError when the report is non-empty.
    """
    out: list[Violation] = []
    add = lambda kind, subject, message: out.append(Violation(kind, subject, message))

    if not net.places:
        add("no-places", "", "net has no places")
    if not net.transitions:
        add("no-transitions", "", "net has no transitions")
    shared = set(net.places) & set(net.transitions)
    for node in sorted(shared):
        add("id-collision", node, f"id {node} used for both a place and a transition")

    for tid, t in net.transitions.items():
        if t.kind == NodeKind.DISCRETE:
            if t.delay is None or t.rate is not None:
                add("bad-timing", tid, f"discrete transition {tid} must carry a delay only")
            elif not is_inf(t.delay) and t.delay < 0:
                add("bad-timing", tid, f"negative delay on {tid}")
        else:
            if t.rate is None or t.delay is not None:
                add("bad-timing", tid, f"continuous transition {tid} must carry a rate only")
            elif not is_inf(t.rate) and t.rate <= 0:
                add("bad-timing", tid, f"rate on {tid} must be positive")
        if t.role is not None and t.role not in TRANSITION_ROLES:
            add("bad-role", tid, f"unknown role {t.role!r} on {tid}")
        if t.set_rates:
            if t.kind != NodeKind.DISCRETE:
                add("bad-set-rates", tid, f"setRates only allowed on discrete transitions ({tid})")
            for target in t.set_rates:
                if target not in net.transitions or net.transitions[target].kind != NodeKind.CONTINUOUS:
                    add("bad-set-rates", tid, f"{tid} sets the rate of non-continuous node {target}")

    def check_arc(pid, tid, w, arcname):
        if pid not in net.places:
            add("unknown-node", pid, f"arc {arcname} references unknown place {pid}")
            return
        if tid not in net.transitions:
            add("unknown-node", tid, f"arc {arcname} references unknown transition {tid}")
            return
        if is_inf(w) or w < 0:
            add("negative-weight", arcname, f"arc {arcname} has weight {fmt_rat(w)}; weights are finite and >= 0")
        elif net.places[pid].kind == NodeKind.DISCRETE and Fraction(w).denominator != 1:
            add("fractional-discrete-weight", arcname, f"arc {arcname} touches discrete place {pid} with non-integer weight {fmt_rat(w)}")

    for (pid, tid), w in sorted(net.pre.items()):
        check_arc(pid, tid, w, f"{pid}->{tid}")
    for (tid, pid), w in sorted(net.post.items()):
        check_arc(pid, tid, w, f"{tid}->{pid}")

    # discrete place / continuous transition pairs must be marking-preserving
    for pid in net.discrete_places():
        if pid not in net.places:
            continue
        for tid, t in net.transitions.items():
            if t.kind != NodeKind.CONTINUOUS:
                continue
            w_pre = net.pre.get((pid, tid), Fraction(0))
            w_post = net.post.get((tid, pid), Fraction(0))
            if (w_pre or w_post) and w_pre != w_post:
                add(
                    "loop-weight-mismatch",
                    f"{pid}/{tid}",
                    f"discrete place {pid} and continuous transition {tid} need equal "
                    f"weights both ways (got {fmt_rat(w_pre)} vs {fmt_rat(w_post)})",
                )

    for pid, v in net.m0.items():
        if pid not in net.places:
            add("unknown-node", pid, f"initial marking names unknown place {pid}")
            continue
        if is_inf(v) or v < 0:
            add("negative-marking", pid, f"initial marking of {pid} must be finite and >= 0")
        elif net.places[pid].kind == NodeKind.DISCRETE and Fraction(v).denominator != 1:
            add("fractional-tokens", pid, f"discrete place {pid} cannot hold {fmt_rat(v)} tokens")

    for pid, pol in sorted(net.policies.items()):
        if pid not in net.places:
            add("unknown-node", pid, f"conflict policy names unknown place {pid}")
            continue
        outputs = {t for t, _ in net.place_outputs(pid)}
        seen: set[str] = set()
        for level in pol.levels:
            for tid, w in level.items():
                if tid not in outputs:
                    add("policy-not-output", pid, f"policy member {tid} is not an output transition of {pid}")
                if tid in seen:
                    add("policy-duplicate", pid, f"policy member {tid} appears twice at {pid}")
                seen.add(tid)
                if is_inf(w) or w <= 0:
                    add("policy-weight", pid, f"sharing weight of {tid} at {pid} must be finite and > 0")

    # conflicts among >=2 continuous consumers need a declared policy;
    # all-discrete races and the discrete-before-continuous rule need none
    for pid, competitors, case in structural_conflicts(net):
        cont = [t for t in competitors if net.transitions[t].kind == NodeKind.CONTINUOUS]
        if len(cont) < 2:
            continue
        pol = net.policies.get(pid)
        missing = [t for t in cont if pol is None or t not in pol.members()]
        if missing:
            add(
                "missing-conflict-policy",
                pid,
                f"place {pid} (case {case} conflict) has competing continuous "
                f"transitions without a policy: {', '.join(missing)}",
            )

    return out


def structural_conflicts(net: HybridNet) -> list[tuple[str, list[str], int]]:
    """Every place with >= 2 output transitions, tagged with its conflict case.

    Case 1: all competitors discrete. Case 2: continuous competitors at a
    continuous place. Case 3: mixed discrete/continuous competitors.
    Case 4: continuous competitors at a discrete place.
    """
    found = []
    for pid in net.places:
        outs = [t for t, _ in net.place_outputs(pid)]
        if len(outs) < 2:
            continue
        kinds = {net.transitions[t].kind for t in outs}
        if kinds == {NodeKind.DISCRETE}:
            case = 1
        elif len(kinds) == 2:
            case = 3
        elif net.places[pid].kind == NodeKind.CONTINUOUS:
            case = 2
        else:
            case = 4
        found.append((pid, sorted(outs), case))
    return found


def require_valid(net: HybridNet, context: str = "net") -> None:
    report = validate(net)
    if report:
        raise ModelError(
            f"{context} fails validation: " + "; ".join(v.message for v in report[:5]),
            violations=report,
        )


# -- JSON file format ------------------------------------------------------------

_PLACE_FIELDS = {"id", "kind", "name"}
_TRANSITION_FIELDS = {"id", "kind", "delay", "rate", "role", "setRates"}
_ARC_FIELDS = {"from", "to", "weight"}
_NET_FIELDS = {"places", "transitions", "arcs", "initialMarking", "conflictPolicies"}
_POLICY_FIELDS = {"place", "priority", "sharing", "levels"}


def _fail(where: str, why: str):
    raise ParseError(f"{where}: {why}", subject=where)


def _check_fields(obj: dict, allowed: set, where: str):
    if not isinstance(obj, dict):
        _fail(where, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            _fail(f"{where}.{key}", "unknown field")


def _parse_rat_field(value, where: str) -> Rat:
    try:
        return parse_rat(value)
    except (ValueError, TypeError) as exc:
        _fail(where, str(exc))


def load_net(data: bytes | str) -> HybridNet:
    """Parse a net document. Schema errors raise ParseError naming the field;
    structural problems are left to ``validate``."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if not data or not data.strip():
        raise ParseError("empty document: no places")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    _check_fields(doc, _NET_FIELDS, "net")
    if not doc.get("places"):
        _fail("net.places", "no places")
    if not doc.get("transitions"):
        _fail("net.transitions", "no transitions")

    places, transitions = [], []
    seen: set[str] = set()
    for i, item in enumerate(doc["places"]):
        where = f"places[{i}]"
        _check_fields(item, _PLACE_FIELDS, where)
        pid = item.get("id")
        if not isinstance(pid, str) or not pid:
            _fail(where, "missing id")
        if pid in seen:
            _fail(where, f"duplicate id {pid}")
        seen.add(pid)
        kind = item.get("kind")
        if kind not in (DISCRETE, CONTINUOUS):
            _fail(f"{where}.kind", f"must be '{DISCRETE}' or '{CONTINUOUS}'")
        places.append(Place(pid, NodeKind(kind), item.get("name", "")))

    for i, item in enumerate(doc["transitions"]):
        where = f"transitions[{i}]"
        _check_fields(item, _TRANSITION_FIELDS, where)
        tid = item.get("id")
        if not isinstance(tid, str) or not tid:
            _fail(where, "missing id")
        if tid in seen:
            _fail(where, f"duplicate id {tid}")
        seen.add(tid)
        kind = item.get("kind")
        if kind not in (DISCRETE, CONTINUOUS):
            _fail(f"{where}.kind", f"must be '{DISCRETE}' or '{CONTINUOUS}'")
        delay = rate = None
        if kind == DISCRETE:
            if "delay" not in item:
                _fail(where, "discrete transition needs a delay")
            if "rate" in item:
                _fail(f"{where}.rate", "discrete transitions carry a delay, not a rate")
            delay = _parse_rat_field(item["delay"], f"{where}.delay")
        else:
            if "rate" not in item:
                _fail(where, "continuous transition needs a rate")
            if "delay" in item:
                _fail(f"{where}.delay", "continuous transitions carry a rate, not a delay")
            rate = _parse_rat_field(item["rate"], f"{where}.rate")
        role = item.get("role")
        if role is not None and role not in TRANSITION_ROLES:
            _fail(f"{where}.role", f"unknown role {role!r}")
        set_rates = None
        if "setRates" in item:
            raw = item["setRates"]
            if not isinstance(raw, dict):
                _fail(f"{where}.setRates", "expected an object")
            set_rates = {k: _parse_rat_field(v, f"{where}.setRates.{k}") for k, v in raw.items()}
        transitions.append(Transition(tid, NodeKind(kind), delay, rate, role, set_rates))

    place_ids = {p.id for p in places}
    trans_ids = {t.id for t in transitions}
    pre, post = {}, {}
    for i, item in enumerate(doc.get("arcs", [])):
        where = f"arcs[{i}]"
        _check_fields(item, _ARC_FIELDS, where)
        src, dst = item.get("from"), item.get("to")
        if src is None or dst is None:
            _fail(where, "arc needs 'from' and 'to'")
        w = _parse_rat_field(item.get("weight", "1"), f"{where}.weight")
        if src in place_ids and dst in trans_ids:
            key, store = (src, dst), pre
        elif src in trans_ids and dst in place_ids:
            key, store = (src, dst), post
        else:
            _fail(where, f"arc must connect a place and a transition ({src}->{dst})")
        if key in store:
            _fail(where, f"duplicate arc {src}->{dst}")
        store[key] = w

    m0 = {}
    marking = doc.get("initialMarking", {})
    if not isinstance(marking, dict):
        _fail("net.initialMarking", "expected an object")
    for pid, value in marking.items():
        if pid not in place_ids:
            _fail(f"initialMarking.{pid}", "unknown place")
        m0[pid] = _parse_rat_field(value, f"initialMarking.{pid}")

    policies = []
    for i, item in enumerate(doc.get("conflictPolicies", [])):
        where = f"conflictPolicies[{i}]"
        _check_fields(item, _POLICY_FIELDS, where)
        pid = item.get("place")
        if pid not in place_ids:
            _fail(f"{where}.place", f"unknown place {pid!r}")
        forms = [k for k in ("priority", "sharing", "levels") if k in item]
        if len(forms) != 1:
            _fail(where, "exactly one of 'priority', 'sharing' or 'levels' required")
        if forms[0] == "priority":
            order = item["priority"]
            if not isinstance(order, list) or not all(isinstance(t, str) for t in order):
                _fail(f"{where}.priority", "expected a list of transition ids")
            policies.append(priority(pid, order))
        elif forms[0] == "sharing":
            weights = item["sharing"]
            if not isinstance(weights, dict):
                _fail(f"{where}.sharing", "expected an object of weights")
            policies.append(
                sharing(pid, {t: _parse_rat_field(w, f"{where}.sharing.{t}") for t, w in weights.items()})
            )
        else:
            levels = item["levels"]
            if not isinstance(levels, list) or not levels:
                _fail(f"{where}.levels", "expected a non-empty list of weight maps")
            parsed = []
            for j, level in enumerate(levels):
                if not isinstance(level, dict) or not level:
                    _fail(f"{where}.levels[{j}]", "expected a non-empty weight map")
                parsed.append({t: _parse_rat_field(w, f"{where}.levels[{j}].{t}") for t, w in level.items()})
            policies.append(ConflictPolicy(pid, tuple(parsed)))
    seen_pol = set()
    for pol in policies:
        if pol.place in seen_pol:
            _fail("conflictPolicies", f"two policies for place {pol.place}")
        seen_pol.add(pol.place)

    return HybridNet(places, transitions, pre, post, m0, policies)


def net_to_doc(net: HybridNet) -> dict:
    """The JSON-ready document for a net (canonical ordering)."""
    places = [
        {"id": p.id, "kind": p.kind.value, "name": p.name} for p in net.places.values()
    ]
    transitions = []
    for t in net.transitions.values():
        item: dict = {"id": t.id, "kind": t.kind.value}
        if t.kind == NodeKind.DISCRETE:
            item["delay"] = fmt_rat(t.delay)
        else:
            item["rate"] = fmt_rat(t.rate)
        if t.role:
            item["role"] = t.role
        if t.set_rates:
            item["setRates"] = {k: fmt_rat(v) for k, v in sorted(t.set_rates.items())}
        transitions.append(item)
    arcs = [
        {"from": pid, "to": tid, "weight": fmt_rat(w)}
        for (pid, tid), w in sorted(net.pre.items())
    ] + [
        {"from": tid, "to": pid, "weight": fmt_rat(w)}
        for (tid, pid), w in sorted(net.post.items())
    ]
    marking = {pid: fmt_rat(v) for pid, v in sorted(net.m0.items()) if v != 0}
    policies = []
    for pid, pol in sorted(net.policies.items()):
        if pol.is_priority():
            policies.append({"place": pid, "priority": [next(iter(l)) for l in pol.levels]})
        elif pol.is_sharing():
            policies.append({"place": pid, "sharing": {t: fmt_rat(w) for t, w in sorted(pol.levels[0].items())}})
        else:
            policies.append(
                {"place": pid, "levels": [{t: fmt_rat(w) for t, w in sorted(l.items())} for l in pol.levels]}
            )
    return {
        "places": places,
        "transitions": transitions,
        "arcs": arcs,
        "initialMarking": marking,
        "conflictPolicies": policies,
    }


def save_net(net: HybridNet) -> bytes:
    """Serialize a *valid* net; raises ModelError otherwise."""
    require_valid(net)
    return (json.dumps(net_to_doc(net), indent=2) + "\n").encode("utf-8")


def canonical_net_json(net: HybridNet) -> bytes:
    """Compact, key-sorted serialization used for content addressing."""
    return json.dumps(net_to_doc(net), sort_keys=True, separators=(",", ":")).encode("utf-8")
