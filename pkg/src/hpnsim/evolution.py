"""Piecewise-linear evolution: phases, boundary events, and the run loop.

A phase is a maximal interval with constant discrete marking, constant
discrete enabling vector, and constant continuous speeds; continuous
markings evolve linearly inside it. Phases end at the earliest of:

* C1 - a marked continuous place drains to zero;
* D1 - a discrete transition's clock expires and it fires;
* D2 - a discrete transition's enabling degree changes because a continuous
  input crosses a multiple of its arc weight.

Simultaneous events share one boundary, processed D1 then C1 then D2, each
group in subject-id order. C2 (an empty place starting to fill) never ends
a phase; it is recorded at phase start for tracing. All times and markings
are exact rationals, so event ordering is deterministic and boundary values
land exactly on their thresholds.

Discrete transitions use single-server clocks: the clock is set to the
delay when the transition becomes enabled, dropped when it is disabled, and
restarted after each firing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import BadRequestError, HpnError
from .model import HybridNet, NodeKind, require_valid
from .rationals import INF, Rat, dec10, fmt_rat, is_inf
from .scenario import Scenario, apply_scenario
from .semantics import (
    Label,
    Marking,
    balance,
    compute_speed_vector,
)

DEFAULT_HORIZON = Fraction(10**6)
PHASE_CAP = 10**4

EVENT_ORDER = {"D1": 0, "C1": 1, "D2": 2, "C2": 3}


@dataclass(frozen=True)
class Event:
    time: Fraction
    kind: str  # C1 | C2 | D1 | D2
    subject: str


@dataclass
class Phase:
    index: int
    start: Fraction
    duration: Fraction | None  # None = open-ended (terminal phase)
    discrete_marking: dict[str, int]
    enabling: dict[str, int | None]  # interval enabling degree per discrete transition
    speeds: dict[str, Rat]
    balances: dict[str, Fraction]
    continuous_start: dict[str, Fraction]
    labels: dict[str, Label]

    def marking_at(self, t: Fraction) -> dict[str, Fraction]:
        """Continuous markings at absolute time ``t`` inside this phase."""
        dt = t - self.start
        return {p: x + self.balances[p] * dt for p, x in self.continuous_start.items()}

    @property
    def end(self) -> Fraction | None:
        return None if self.duration is None else self.start + self.duration


@dataclass(frozen=True)
class Terminal:
    status: str  # HorizonReached | Deadlock | TargetReached | Error
    time: Fraction | None = None
    detail: str | None = None


@dataclass
class EvolutionGraph:
    phases: list[Phase]
    events: list[Event]
    terminal: Terminal

    @property
    def completion_time(self) -> Fraction | None:
        return self.terminal.time if self.terminal.status == "TargetReached" else None

    def marking_at(self, t: Fraction) -> dict[str, Fraction]:
        for phase in self.phases:
            if phase.duration is None or t <= phase.end:
                if t >= phase.start:
                    return phase.marking_at(t)
        last = self.phases[-1]
        return last.marking_at(last.end if last.duration is not None else last.start)

    @property
    def end_time(self) -> Fraction:
        last = self.phases[-1]
        return last.start if last.duration is None else last.end


class DiscreteClockState:
    """Remaining time per enabled discrete transition (single server)."""

    def __init__(self, remaining: Mapping[str, Fraction] | None = None):
        self.remaining: dict[str, Fraction] = dict(remaining or {})

    def copy(self) -> "DiscreteClockState":
        return DiscreteClockState(self.remaining)

    def __eq__(self, other):
        return isinstance(other, DiscreteClockState) and self.remaining == other.remaining

    def __repr__(self):
        return f"DiscreteClockState({self.remaining})"


# -- discrete firing ------------------------------------------------------------


def fire_discrete(net: HybridNet, m: Marking, tid: str) -> Marking:
    """Fire a discrete transition: m' = m - Pre + Post. Must be enabled."""
    t = net.transitions[tid]
    if t.kind != NodeKind.DISCRETE:
        raise BadRequestError(f"{tid} is not a discrete transition", subject=tid)
    for pid, w in net.inputs_of(tid):
        if m.value(pid) < w:
            raise BadRequestError(f"firing disabled transition {tid}: {pid} holds less than {fmt_rat(w)}", subject=tid)
    discrete = dict(m.discrete)
    continuous = dict(m.continuous)
    for pid, w in net.inputs_of(tid):
        if pid in discrete:
            discrete[pid] -= int(w)
        else:
            continuous[pid] -= Fraction(w)
    for pid, w in net.outputs_of(tid):
        if pid in discrete:
            discrete[pid] += int(w)
        else:
            continuous[pid] += Fraction(w)
    return Marking(discrete, continuous)


# -- enabling degrees on the open interval after a phase start -----------------------


def _place_interval_degree(x0: Fraction, b: Fraction, w: Rat) -> int:
    q = Fraction(x0) / w
    fl = q.numerator // q.denominator
    if b < 0 and q == fl and fl > 0:
        return fl - 1  # sitting on the threshold and draining: below it next
    return fl


def interval_enabling_degree(net: HybridNet, m: Marking, balances, tid: str) -> int | None:
    """Enabling degree of a discrete transition on the phase's open interval.

    None means unbounded (no input places). Continuous inputs sitting
    exactly on a threshold with negative balance count as already below it.
    """
    inputs = net.inputs_of(tid)
    if not inputs:
        return None
    degree = None
    for pid, w in inputs:
        if pid in m.discrete:
            q = m.discrete[pid] // int(w) if w > 0 else 0
        else:
            q = _place_interval_degree(m.continuous[pid], balances[pid], w)
        degree = q if degree is None else min(degree, q)
    return degree


def _next_degree_change(net, m, balances, tid, e_now, t0) -> Fraction | None:
    """Earliest t > t0 where the transition's interval degree departs e_now."""
    if e_now is None:
        return None
    cont_inputs = [
        (pid, w) for pid, w in net.inputs_of(tid) if pid in m.continuous
    ]
    if not cont_inputs:
        return None
    candidates: list[Fraction] = []
    rising_argmin: list[Fraction] = []
    can_rise = all(
        m.discrete[pid] // int(w) > e_now
        for pid, w in net.inputs_of(tid)
        if pid in m.discrete
    )
    for pid, w in cont_inputs:
        x0, b = m.continuous[pid], balances[pid]
        e_p = _place_interval_degree(x0, b, w)
        if b < 0:
            # drops below e_now when the marking reaches e_now * w
            target = Fraction(e_now) * w
            if x0 > target:
                candidates.append(t0 + (x0 - target) / (-b))
            can_rise = False
        elif e_p == e_now:
            if b > 0:
                rising_argmin.append(t0 + (Fraction(e_now + 1) * w - x0) / b)
            else:
                can_rise = False
    if can_rise and rising_argmin:
        candidates.append(max(rising_argmin))
    return min(candidates) if candidates else None


# -- the evolution loop ------------------------------------------------------------


def compute_phase(net: HybridNet, state, policies=None, rates=None, index: int = 0) -> Phase:
    """Build the (open-ended) phase for the given (marking, clocks) state."""
    m, _clocks = state if isinstance(state, tuple) else (state, None)
    v, ext = compute_speed_vector(net, m, policies=policies, rates=rates)
    balances = {p: Fraction(balance(net, v, p)) for p in net.continuous_places()}
    enabling = {
        tid: interval_enabling_degree(net, m, balances, tid)
        for tid in sorted(net.discrete_transitions())
    }
    return Phase(
        index=index,
        start=Fraction(0),
        duration=None,
        discrete_marking=dict(m.discrete),
        enabling=enabling,
        speeds=v,
        balances=balances,
        continuous_start=dict(m.continuous),
        labels=dict(ext.labels),
    )


def next_event(net: HybridNet, phase: Phase, clocks: DiscreteClockState):
    """Earliest phase-ending event, or None if the phase runs forever.

    Simultaneous events tie-break D1 < C1 < D2, then subject id; the caller
    processes the whole boundary.
    """
    candidates = _event_candidates(net, phase, clocks)
    if not candidates:
        return None
    time, order, subject, kind = min(candidates)
    return time, Event(time, kind, subject)


def _event_candidates(net, phase: Phase, clocks: DiscreteClockState):
    t0 = phase.start
    out = []
    for pid in sorted(net.continuous_places()):
        x0, b = phase.continuous_start[pid], phase.balances[pid]
        if x0 > 0 and b < 0:
            out.append((t0 + x0 / (-b), EVENT_ORDER["C1"], pid, "C1"))
    for tid in sorted(clocks.remaining):
        out.append((t0 + clocks.remaining[tid], EVENT_ORDER["D1"], tid, "D1"))
    m = Marking(phase.discrete_marking, phase.continuous_start)
    for tid in sorted(net.discrete_transitions()):
        u = _next_degree_change(net, m, phase.balances, tid, phase.enabling[tid], t0)
        if u is not None:
            out.append((u, EVENT_ORDER["D2"], tid, "D2"))
    return out


def evolve(
    net: HybridNet,
    scenario: Scenario | None = None,
    horizon: Rat | None = None,
    policies=None,
    phase_cap: int = PHASE_CAP,
) -> EvolutionGraph:
    """Run the net (optionally specialised by a scenario) to a terminal state.

    Deterministic for fixed inputs. Solver errors are re-raised with the
    failing phase index attached; hitting the phase cap yields an Error
    terminal instead (a Zeno-looking run is a result, not a crash).
    """
    target = None
    if scenario is not None:
        net = apply_scenario(net, scenario)
        if scenario.destination is not None and scenario.message_size is not None:
            target = (scenario.destination, Fraction(scenario.message_size))
    require_valid(net)
    horizon = DEFAULT_HORIZON if horizon is None else Fraction(horizon)

    m = Marking.initial(net)
    rates = {t.id: t.rate for t in net.transitions.values() if t.kind == NodeKind.CONTINUOUS}
    clocks = DiscreteClockState()
    phases: list[Phase] = []
    events: list[Event] = []
    t = Fraction(0)

    for index in range(phase_cap):
        try:
            phase = compute_phase(net, (m, clocks), policies=policies, rates=rates, index=index)
        except HpnError as exc:
            exc.args = (f"phase {index}: {exc.args[0]}",) + exc.args[1:]
            raise
        phase.start = t

        # trace C2: empty places that begin to fill during this phase
        for pid in sorted(net.continuous_places()):
            if m.continuous[pid] == 0 and phase.balances[pid] > 0:
                events.append(Event(t, "C2", pid))

        if target is not None and m.continuous[target[0]] >= target[1]:
            phase.duration = Fraction(0)
            phases.append(phase)
            return EvolutionGraph(phases, events, Terminal("TargetReached", t))

        # clock management for this phase's interval
        for tid in sorted(net.discrete_transitions()):
            active = phase.enabling[tid] is None or phase.enabling[tid] >= 1
            delay = net.transitions[tid].delay
            if active and tid not in clocks.remaining and not is_inf(delay):
                clocks.remaining[tid] = Fraction(delay)
            elif not active and tid in clocks.remaining:
                del clocks.remaining[tid]

        candidates = _event_candidates(net, phase, clocks)
        target_time = None
        if target is not None:
            x0 = m.continuous[target[0]]
            b = phase.balances[target[0]]
            if b > 0 and x0 < target[1]:
                target_time = t + (target[1] - x0) / b

        t_event = min(c[0] for c in candidates) if candidates else None

        if target_time is not None and target_time <= horizon and (
            t_event is None or target_time <= t_event
        ):
            phase.duration = target_time - t
            phases.append(phase)
            return EvolutionGraph(phases, events, Terminal("TargetReached", target_time))

        if t_event is None:
            if all(v == 0 for v in phase.speeds.values()) and not clocks.remaining:
                phase.duration = None
                phases.append(phase)
                return EvolutionGraph(phases, events, Terminal("Deadlock", t))
            phase.duration = horizon - t
            phases.append(phase)
            return EvolutionGraph(phases, events, Terminal("HorizonReached", horizon))

        if t_event >= horizon:
            phase.duration = horizon - t
            phases.append(phase)
            return EvolutionGraph(phases, events, Terminal("HorizonReached", horizon))

        # advance to the boundary
        dt = t_event - t
        new_cont = {p: x + phase.balances[p] * dt for p, x in m.continuous.items()}
        for pid, x in new_cont.items():
            if x < 0:
                raise HpnError(f"internal: negative marking at {pid}")  # pragma: no cover
        m = Marking(m.discrete, new_cont)
        for tid in list(clocks.remaining):
            clocks.remaining[tid] -= dt
        phase.duration = dt
        phases.append(phase)

        boundary = sorted(
            (c for c in candidates if c[0] == t_event), key=lambda c: (c[1], c[2])
        )
        for _time, _order, subject, kind in boundary:
            if kind == "D1":
                ok, _deg = _discrete_enabled_now(net, m, subject)
                clocks.remaining.pop(subject, None)
                if not ok:
                    continue  # lost the race at this boundary; no firing
                m = fire_discrete(net, m, subject)
                set_rates = net.transitions[subject].set_rates
                if set_rates:
                    rates.update(set_rates)
                events.append(Event(t_event, "D1", subject))
            else:
                events.append(Event(t_event, kind, subject))
        t = t_event

    return EvolutionGraph(phases, events, Terminal("Error", t, "phase cap"))


def _discrete_enabled_now(net, m, tid):
    for pid, w in net.inputs_of(tid):
        if m.value(pid) < w:
            return False, 0
    return True, 1


# -- serialization ------------------------------------------------------------


def _r(x: Rat | None):
    if x is None:
        return None
    return {"frac": fmt_rat(x), "dec": dec10(x)}


def graph_to_doc(graph: EvolutionGraph) -> dict:
    phases = []
    for ph in graph.phases:
        phases.append(
            {
                "index": ph.index,
                "start": _r(ph.start),
                "duration": _r(ph.duration),
                "speeds": {t: _r(v) for t, v in sorted(ph.speeds.items())},
                "balances": {p: _r(b) for p, b in sorted(ph.balances.items())},
                "continuousStart": {p: _r(x) for p, x in sorted(ph.continuous_start.items())},
                "discreteMarking": dict(sorted(ph.discrete_marking.items())),
                "enabling": dict(sorted(ph.enabling.items())),
                "labels": {p: lab.value for p, lab in sorted(ph.labels.items())},
            }
        )
    return {
        "phases": phases,
        "events": [
            {"time": _r(e.time), "kind": e.kind, "subject": e.subject} for e in graph.events
        ],
        "terminal": {
            "status": graph.terminal.status,
            "time": _r(graph.terminal.time),
            "detail": graph.terminal.detail,
        },
        "completionTime": _r(graph.completion_time),
    }


def graph_json_bytes(graph: EvolutionGraph) -> bytes:
    """Canonical evolution-graph JSON; CLI and HTTP both emit exactly this."""
    return (json.dumps(graph_to_doc(graph), indent=2, sort_keys=True) + "\n").encode("utf-8")


def sample_trajectory_csv(graph: EvolutionGraph, dt: Rat) -> str:
    """CSV samples of every continuous place at multiples of ``dt``."""
    dt = Fraction(dt)
    if dt <= 0:
        raise BadRequestError("sample step must be positive")
    places = sorted(graph.phases[0].continuous_start)
    end = graph.end_time
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["time"] + places)
    t = Fraction(0)
    while t <= end:
        marking = graph.marking_at(t)
        writer.writerow([dec10(t)] + [dec10(marking[p]) for p in places])
        t += dt
    return out.getvalue()
