"""Scenario parameterization: what-if inputs applied on top of a base net.

A scenario bundles link availability (fixed or scheduled toggles), speed
profiles (constant, piecewise-constant, or seeded-random piecewise), policy
overrides, the message size, the deadline, and the source/destination pair.

Applying a scenario never mutates the base net. Scheduled changes are
materialised as ordinary timed discrete transitions so the evolution engine
needs no side channel: an availability toggle moves the gate token, a rate
change is a transition tagged with the rates to install when it fires.
Generated node ids contain ``@`` and therefore cannot collide with schema-
level ids.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import BadRequestError, ParseError
from .model import (
    CONTINUOUS,
    DISCRETE,
    ConflictPolicy,
    HybridNet,
    NodeKind,
    Place,
    Transition,
)
from .rationals import Rat, fmt_rat, is_inf, parse_rat


@dataclass(frozen=True)
class ToggleStep:
    at: Fraction
    available: bool


@dataclass(frozen=True)
class Segment:
    """One piece of a piecewise-constant rate profile; until=None is open."""

    rate: Rat
    until: Fraction | None


@dataclass(frozen=True)
class RandomProfile:
    """Seeded piecewise profile: ``intervals`` values drawn in [low, high]."""

    low: Fraction
    high: Fraction
    intervals: int
    interval_length: Fraction
    seed: int


@dataclass(frozen=True)
class Scenario:
    net_ref: str | None = None
    availability: Mapping[str, object] = field(default_factory=dict)
    speeds: Mapping[str, object] = field(default_factory=dict)
    priorities: Sequence[ConflictPolicy] = ()
    message_size: Fraction | None = None
    deadline: Fraction | None = None
    source: str | None = None
    destination: str | None = None
    search_places: Sequence[str] | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "availability", dict(self.availability))
        object.__setattr__(self, "speeds", dict(self.speeds))
        object.__setattr__(self, "priorities", tuple(self.priorities))
        if self.search_places is not None:
            object.__setattr__(self, "search_places", tuple(self.search_places))
        if self.message_size is not None and self.message_size <= 0:
            raise BadRequestError("message size must be positive")
        if self.deadline is not None and self.deadline <= 0:
            raise BadRequestError("deadline must be positive")

    def with_priorities(self, priorities: Sequence[ConflictPolicy]) -> "Scenario":
        return replace(self, priorities=tuple(priorities))


def sample_speed_profile(low: Rat, high: Rat, intervals: int,
                         interval_length: Rat, seed: int) -> list[Segment]:
    """Deterministic piecewise profile with values in [low, high].

    Values are uniform on the 1/100 grid; the final segment holds its value
    forever so any horizon is covered.
    """
    low, high = Fraction(low), Fraction(high)
    if low > high:
        raise BadRequestError("profile bounds must satisfy low <= high")
    if intervals < 1:
        raise BadRequestError("profile needs at least one interval")
    rng = random.Random(seed)
    lo, hi = round(low * 100), round(high * 100)
    values = [Fraction(rng.randint(lo, hi), 100) for _ in range(intervals)]
    segments = []
    t = Fraction(0)
    for i, value in enumerate(values):
        t += Fraction(interval_length)
        last = i == len(values) - 1
        segments.append(Segment(value, None if last else t))
    return segments


# -- applying a scenario to a net ---------------------------------------------------


def apply_scenario(net: HybridNet, sc: Scenario) -> HybridNet:
    """Specialise ``net`` per the scenario; the base net is left untouched."""
    _check_ids(net, sc)

    places = list(net.places.values())
    transitions = list(net.transitions.values())
    pre = dict(net.pre)
    post = dict(net.post)
    m0 = net.initial_marking()
    policies = dict(net.policies)

    gen_places: list[Place] = []
    gen_transitions: list[Transition] = []

    for pid in sorted(sc.availability):
        spec = sc.availability[pid]
        if isinstance(spec, bool):
            m0[pid] = Fraction(1 if spec else 0)
            continue
        steps = list(spec)
        state = m0.get(pid, Fraction(0)) > 0
        prev_at = Fraction(0)
        trigger = f"{pid}@trg0"
        gen_places.append(Place(trigger, NodeKind(DISCRETE), f"toggle trigger for {pid}"))
        m0[trigger] = Fraction(1)
        for k, step in enumerate(steps):
            if step.available == state:
                raise BadRequestError(
                    f"toggle schedule for {pid} does not alternate at t={fmt_rat(step.at)}"
                )
            if step.at < prev_at:
                raise BadRequestError(f"toggle schedule for {pid} is not time-ordered")
            tid = f"{pid}@tg{k + 1}"
            t_pre = {(trigger, tid): Fraction(1)}
            t_post = {}
            if k + 1 < len(steps):
                trigger = f"{pid}@trg{k + 1}"
                gen_places.append(Place(trigger, NodeKind(DISCRETE), f"toggle trigger for {pid}"))
                t_post[(tid, trigger)] = Fraction(1)
            if step.available:
                t_post[(tid, pid)] = Fraction(1)
            else:
                t_pre[(pid, tid)] = Fraction(1)
            gen_transitions.append(
                Transition(tid, NodeKind(DISCRETE), delay=step.at - prev_at)
            )
            pre.update(t_pre)
            post.update(t_post)
            state = step.available
            prev_at = step.at

    rates_changed = {}
    for tid in sorted(sc.speeds):
        profile = sc.speeds[tid]
        if isinstance(profile, RandomProfile):
            profile = sample_speed_profile(
                profile.low, profile.high, profile.intervals, profile.interval_length, profile.seed
            )
        if not isinstance(profile, (list, tuple)):
            rates_changed[tid] = profile
            continue
        segments: list[Segment] = list(profile)
        if not segments:
            raise BadRequestError(f"empty speed profile for {tid}")
        if segments[-1].until is not None:
            raise BadRequestError(
                f"speed profile for {tid} must end with an open segment to cover the horizon"
            )
        rates_changed[tid] = segments[0].rate
        prev_at = Fraction(0)
        trigger = None
        for k, seg in enumerate(segments[:-1]):
            if seg.until is None or seg.until <= prev_at:
                raise BadRequestError(f"speed profile for {tid} is not time-ordered")
            if trigger is None:
                trigger = f"{tid}@trg0"
                gen_places.append(Place(trigger, NodeKind(DISCRETE), f"rate schedule trigger for {tid}"))
                m0[trigger] = Fraction(1)
            sched = f"{tid}@sched{k + 1}"
            s_pre = {(trigger, sched): Fraction(1)}
            s_post = {}
            if k + 1 < len(segments) - 1:
                trigger = f"{tid}@trg{k + 1}"
                gen_places.append(Place(trigger, NodeKind(DISCRETE), f"rate schedule trigger for {tid}"))
                s_post[(sched, trigger)] = Fraction(1)
            gen_transitions.append(
                Transition(
                    sched,
                    NodeKind(DISCRETE),
                    delay=seg.until - prev_at,
                    set_rates={tid: segments[k + 1].rate},
                )
            )
            pre.update(s_pre)
            post.update(s_post)
            prev_at = seg.until

    if rates_changed:
        transitions = [
            replace(t, rate=rates_changed[t.id]) if t.id in rates_changed else t
            for t in transitions
        ]

    for pol in sc.priorities:
        policies[pol.place] = pol

    if sc.message_size is not None:
        if sc.source is None:
            raise BadRequestError("scenario sets a message size but no source place")
        m0[sc.source] = Fraction(sc.message_size)

    return HybridNet(
        places + gen_places,
        transitions + gen_transitions,
        pre,
        post,
        m0,
        list(policies.values()),
    )


def _check_ids(net: HybridNet, sc: Scenario):
    for pid in sc.availability:
        if pid not in net.places:
            raise BadRequestError(f"availability override names unknown place {pid}", subject=pid)
        if net.places[pid].kind != NodeKind.DISCRETE:
            raise BadRequestError(f"availability override targets non-discrete place {pid}", subject=pid)
    for tid in sc.speeds:
        if tid not in net.transitions:
            raise BadRequestError(f"speed profile names unknown transition {tid}", subject=tid)
        if net.transitions[tid].kind != NodeKind.CONTINUOUS:
            raise BadRequestError(f"speed profile targets discrete transition {tid}", subject=tid)
    for pol in sc.priorities:
        if pol.place not in net.places:
            raise BadRequestError(f"priority override names unknown place {pol.place}", subject=pol.place)
    for pid in (sc.source, sc.destination):
        if pid is not None and pid not in net.places:
            raise BadRequestError(f"scenario names unknown place {pid}", subject=pid)
    for pid in sc.search_places or ():
        if pid not in net.places:
            raise BadRequestError(f"search place {pid} not in net", subject=pid)


# -- scenario file format ------------------------------------------------------------

_SCENARIO_FIELDS = {
    "net", "availability", "speeds", "priorities", "messageSize",
    "deadline", "source", "destination", "searchPlaces", "label",
}


def _fail(where, why):
    raise ParseError(f"{where}: {why}", subject=where)


def load_scenario(data: bytes | str) -> Scenario:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    if not data or not data.strip():
        raise ParseError("empty scenario document")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        _fail("scenario", "expected an object")
    for key in doc:
        if key not in _SCENARIO_FIELDS:
            _fail(f"scenario.{key}", "unknown field")

    availability = {}
    for pid, spec in (doc.get("availability") or {}).items():
        where = f"availability.{pid}"
        if isinstance(spec, bool):
            availability[pid] = spec
        elif isinstance(spec, list):
            steps = []
            for i, step in enumerate(spec):
                if not isinstance(step, dict) or set(step) != {"at", "available"}:
                    _fail(f"{where}[{i}]", "expected {at, available}")
                at = parse_rat(step["at"])
                if is_inf(at):
                    _fail(f"{where}[{i}].at", "must be finite")
                if not isinstance(step["available"], bool):
                    _fail(f"{where}[{i}].available", "expected a boolean")
                steps.append(ToggleStep(Fraction(at), step["available"]))
            availability[pid] = steps
        else:
            _fail(where, "expected a boolean or a toggle schedule")

    speeds = {}
    for tid, spec in (doc.get("speeds") or {}).items():
        where = f"speeds.{tid}"
        if isinstance(spec, str):
            speeds[tid] = parse_rat(spec)
        elif isinstance(spec, list):
            segs = []
            for i, seg in enumerate(spec):
                if not isinstance(seg, dict) or set(seg) - {"rate", "until"} or "rate" not in seg:
                    _fail(f"{where}[{i}]", "expected {rate, until}")
                until = seg.get("until")
                segs.append(
                    Segment(parse_rat(seg["rate"]), None if until is None else Fraction(parse_rat(until)))
                )
            speeds[tid] = segs
        elif isinstance(spec, dict):
            required = {"low", "high", "intervals", "intervalLength", "seed"}
            if set(spec) != required:
                _fail(where, f"random profile needs exactly {sorted(required)}")
            speeds[tid] = RandomProfile(
                Fraction(parse_rat(spec["low"])),
                Fraction(parse_rat(spec["high"])),
                int(spec["intervals"]),
                Fraction(parse_rat(spec["intervalLength"])),
                int(spec["seed"]),
            )
        else:
            _fail(where, "expected a rate, a segment list or a random profile")

    from .model import _POLICY_FIELDS, load_net  # reuse policy parsing below

    priorities = []
    for i, item in enumerate(doc.get("priorities") or []):
        where = f"priorities[{i}]"
        if not isinstance(item, dict) or "place" not in item:
            _fail(where, "expected a policy object with a place")
        for key in item:
            if key not in _POLICY_FIELDS:
                _fail(f"{where}.{key}", "unknown field")
        priorities.append(_parse_policy(item, where))

    def opt_rat(key):
        if key not in doc or doc[key] is None:
            return None
        value = parse_rat(doc[key])
        if is_inf(value):
            _fail(f"scenario.{key}", "must be finite")
        return Fraction(value)

    return Scenario(
        net_ref=doc.get("net"),
        availability=availability,
        speeds=speeds,
        priorities=priorities,
        message_size=opt_rat("messageSize"),
        deadline=opt_rat("deadline"),
        source=doc.get("source"),
        destination=doc.get("destination"),
        search_places=doc.get("searchPlaces"),
        label=doc.get("label"),
    )


def _parse_policy(item: dict, where: str) -> ConflictPolicy:
    from .model import priority as mk_priority, sharing as mk_sharing

    forms = [k for k in ("priority", "sharing", "levels") if k in item]
    if len(forms) != 1:
        _fail(where, "exactly one of 'priority', 'sharing' or 'levels' required")
    pid = item["place"]
    if forms[0] == "priority":
        return mk_priority(pid, list(item["priority"]))
    if forms[0] == "sharing":
        return mk_sharing(pid, {t: parse_rat(w) for t, w in item["sharing"].items()})
    levels = tuple({t: parse_rat(w) for t, w in level.items()} for level in item["levels"])
    return ConflictPolicy(pid, levels)


def scenario_to_doc(sc: Scenario) -> dict:
    availability = {}
    for pid, spec in sorted(sc.availability.items()):
        if isinstance(spec, bool):
            availability[pid] = spec
        else:
            availability[pid] = [
                {"at": fmt_rat(s.at), "available": s.available} for s in spec
            ]
    speeds = {}
    for tid, spec in sorted(sc.speeds.items()):
        if isinstance(spec, RandomProfile):
            speeds[tid] = {
                "low": fmt_rat(spec.low),
                "high": fmt_rat(spec.high),
                "intervals": spec.intervals,
                "intervalLength": fmt_rat(spec.interval_length),
                "seed": spec.seed,
            }
        elif isinstance(spec, (list, tuple)):
            speeds[tid] = [
                {"rate": fmt_rat(s.rate), "until": None if s.until is None else fmt_rat(s.until)}
                for s in spec
            ]
        else:
            speeds[tid] = fmt_rat(spec)
    priorities = []
    for pol in sc.priorities:
        if pol.is_priority():
            priorities.append({"place": pol.place, "priority": [next(iter(l)) for l in pol.levels]})
        elif pol.is_sharing():
            priorities.append(
                {"place": pol.place, "sharing": {t: fmt_rat(w) for t, w in sorted(pol.levels[0].items())}}
            )
        else:
            priorities.append(
                {"place": pol.place,
                 "levels": [{t: fmt_rat(w) for t, w in sorted(l.items())} for l in pol.levels]}
            )
    doc: dict = {}
    if sc.net_ref:
        doc["net"] = sc.net_ref
    if availability:
        doc["availability"] = availability
    if speeds:
        doc["speeds"] = speeds
    if priorities:
        doc["priorities"] = priorities
    if sc.message_size is not None:
        doc["messageSize"] = fmt_rat(sc.message_size)
    if sc.deadline is not None:
        doc["deadline"] = fmt_rat(sc.deadline)
    if sc.source:
        doc["source"] = sc.source
    if sc.destination:
        doc["destination"] = sc.destination
    if sc.search_places is not None:
        doc["searchPlaces"] = list(sc.search_places)
    if sc.label:
        doc["label"] = sc.label
    return doc


def save_scenario(sc: Scenario) -> bytes:
    return (json.dumps(scenario_to_doc(sc), indent=2) + "\n").encode("utf-8")
