"""Decision layer: run scenarios, search priority configurations, compare runs.

The search looks for the first configuration whose transfer completes within
the deadline. Heuristic mode starts from "fastest link gets highest
priority" and, after each infeasible run, demotes the transition feeding the
worst accumulating buffer one level (a full buffer means its feeder was too
eager). Exhaustive mode enumerates every priority permutation of the
searchable conflict sets, plus the equal-weight sharing alternative, in
deterministic order.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .errors import BadRequestError, NoFeasibleConfigurationError
from .evolution import EvolutionGraph, evolve, graph_to_doc
from .model import ConflictPolicy, HybridNet, NodeKind, priority as mk_priority
from .rationals import Rat, dec10, fmt_rat, is_inf
from .scenario import Scenario, RandomProfile, Segment, scenario_to_doc

log = logging.getLogger(__name__)

EXHAUSTIVE_CAP = 10**5
HEURISTIC_STEP_CAP = 100


@dataclass(frozen=True)
class Accumulation:
    place: str
    phases: tuple[int, ...]
    max_balance: Fraction


@dataclass(frozen=True)
class ScenarioResult:
    label: str
    scenario: Scenario
    feasible: bool
    completion_time: Fraction | None
    graph: EvolutionGraph
    accumulation: tuple[Accumulation, ...]


@dataclass(frozen=True)
class SearchAttempt:
    index: int
    priorities: tuple[ConflictPolicy, ...]
    completion_time: Fraction | None
    feasible: bool


@dataclass(frozen=True)
class HistoryEntry:
    id: str
    stored_at: str
    result: ScenarioResult


@dataclass(frozen=True)
class RunHistory:
    entries: tuple[HistoryEntry, ...]

    def get(self, entry_id: str) -> HistoryEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise BadRequestError(f"history entry {entry_id} not found", subject=entry_id)


def run_scenario(net: HybridNet, sc: Scenario, horizon=None, label: str | None = None) -> ScenarioResult:
    """Simulate one scenario and derive feasibility and accumulation facts."""
    graph = evolve(net, sc, horizon=horizon)
    completion = graph.completion_time
    feasible = completion is not None and (sc.deadline is None or completion <= sc.deadline)
    acc: dict[str, list] = {}
    for phase in graph.phases:
        for pid, b in phase.balances.items():
            if b > 0:
                acc.setdefault(pid, []).append((phase.index, b))
    accumulation = tuple(
        Accumulation(pid, tuple(i for i, _ in hits), max(b for _, b in hits))
        for pid, hits in sorted(acc.items())
    )
    return ScenarioResult(
        label=label or sc.label or "run",
        scenario=sc,
        feasible=feasible,
        completion_time=completion,
        graph=graph,
        accumulation=accumulation,
    )


# -- priority heuristics ------------------------------------------------------------


def _initial_rate(net: HybridNet, sc: Scenario, tid: str) -> Rat:
    spec = sc.speeds.get(tid)
    if spec is None:
        return net.transitions[tid].rate
    if isinstance(spec, RandomProfile):
        return spec.low  # sampled later; bound is the stable comparator
    if isinstance(spec, (list, tuple)):
        return spec[0].rate
    return spec


def searchable_places(net: HybridNet, sc: Scenario) -> list[str]:
    """Conflict sets the search may reorder: explicit, or every set with
    two or more transfer-tagged members."""
    if sc.search_places is not None:
        return sorted(sc.search_places)
    out = []
    for pid in sorted(net.places):
        members = _conflict_members(net, pid)
        transfers = [t for t in members if net.transitions[t].role == "transfer"]
        if len(transfers) >= 2:
            out.append(pid)
    return out


def _conflict_members(net: HybridNet, pid: str) -> list[str]:
    pol = net.policies.get(pid)
    if pol is not None:
        return pol.members()
    return [t for t, _ in net.place_outputs(pid)]


def _ordered_policy(net: HybridNet, pid: str, transfer_order: Sequence[str]) -> ConflictPolicy:
    """Rebuild a conflict set's priority list around a transfer order:
    urgent jobs stay on top, background drains at the bottom."""
    members = _conflict_members(net, pid)
    role = lambda t: net.transitions[t].role
    high = sorted(t for t in members if role(t) == "high-priority-job")
    low = sorted(t for t in members if role(t) == "low-priority-drain")
    other = sorted(t for t in members if role(t) not in ("high-priority-job", "low-priority-drain", "transfer"))
    transfers = [t for t in transfer_order if t in members]
    return mk_priority(pid, high + transfers + other + low)


def _sharing_policy(net: HybridNet, pid: str, transfers: Sequence[str]) -> ConflictPolicy:
    members = _conflict_members(net, pid)
    role = lambda t: net.transitions[t].role
    high = sorted(t for t in members if role(t) == "high-priority-job")
    low = sorted(t for t in members if role(t) == "low-priority-drain")
    other = sorted(t for t in members if role(t) not in ("high-priority-job", "low-priority-drain", "transfer"))
    levels: list[dict] = [{t: Fraction(1)} for t in high]
    levels.append({t: Fraction(1) for t in transfers if t in members})
    levels += [{t: Fraction(1)} for t in other + low]
    return ConflictPolicy(pid, tuple(levels))


def initial_priority_assignment(net: HybridNet, sc: Scenario) -> list[ConflictPolicy]:
    """Fastest transfer first, per conflict set; ties broken by id."""
    assignment = []
    for pid in searchable_places(net, sc):
        members = _conflict_members(net, pid)
        transfers = [t for t in members if net.transitions[t].role == "transfer"]
        ranked = sorted(
            transfers,
            key=lambda t: (
                0 if is_inf(_initial_rate(net, sc, t)) else 1,
                -(_initial_rate(net, sc, t)) if not is_inf(_initial_rate(net, sc, t)) else 0,
                t,
            ),
        )
        assignment.append(_ordered_policy(net, pid, ranked))
    return assignment


def _transfer_order_of(policy: ConflictPolicy, net: HybridNet) -> list[str]:
    return [
        t for level in policy.levels for t in level
        if net.transitions[t].role == "transfer"
    ]


def refine_on_accumulation(net: HybridNet, result: ScenarioResult) -> list[ConflictPolicy] | None:
    """Demote the feeder of the worst accumulating buffer one level.

    Returns the next priority assignment for the searchable sets, or None
    when nothing accumulates (or the feeder is already last everywhere).
    """
    sc = result.scenario
    skip = {sc.source, sc.destination}
    candidates = [
        a for a in result.accumulation
        if a.place not in skip and net.places[a.place].kind == NodeKind.CONTINUOUS
    ]
    if not candidates:
        return None
    # earliest accumulation first, largest overflow, then id
    candidates.sort(key=lambda a: (a.phases[0], -a.max_balance, a.place))
    place = candidates[0]
    phase = result.graph.phases[place.phases[0]]
    feeders = [
        (tid, phase.speeds.get(tid, Fraction(0)))
        for tid, _w in net.place_inputs(place.place)
        if net.transitions[tid].role == "transfer"
    ]
    feeders = [f for f in feeders if f[1] > 0]
    if not feeders:
        return None
    feeders.sort(key=lambda f: (-f[1], f[0]))
    culprit = feeders[0][0]

    current = {pol.place: pol for pol in result.scenario.priorities}
    demoted_anywhere = False
    next_assignment = []
    for pid in searchable_places(net, sc):
        pol = current.get(pid) or net.policies.get(pid)
        if pol is None:
            continue
        order = _transfer_order_of(pol, net)
        if culprit in order:
            i = order.index(culprit)
            if i + 1 < len(order):
                order[i], order[i + 1] = order[i + 1], order[i]
                demoted_anywhere = True
        next_assignment.append(_ordered_policy(net, pid, order))
    return next_assignment if demoted_anywhere else None


# -- search ------------------------------------------------------------


def search_first_feasible(
    net: HybridNet,
    sc: Scenario,
    mode: str = "heuristic",
    horizon=None,
) -> tuple[ScenarioResult, list[SearchAttempt]]:
    """First configuration meeting the deadline, with the attempt trace.

    Raises NoFeasibleConfigurationError (carrying the fastest attempt and
    the full trace) when every tried configuration misses the deadline.
    """
    if sc.deadline is None:
        raise BadRequestError("search needs a deadline")
    if mode not in ("heuristic", "exhaustive"):
        raise BadRequestError(f"unknown search mode {mode!r}")

    if mode == "exhaustive":
        combos = _exhaustive_assignments(net, sc)
        if combos is None:
            log.warning(
                "exhaustive search space exceeds %d attempts; forcing heuristic mode",
                EXHAUSTIVE_CAP,
            )
            mode = "heuristic"

    trace: list[SearchAttempt] = []
    best: ScenarioResult | None = None

    def attempt(assignment: Sequence[ConflictPolicy]) -> ScenarioResult:
        nonlocal best
        merged = {pol.place: pol for pol in sc.priorities}
        merged.update({pol.place: pol for pol in assignment})
        run_sc = sc.with_priorities(list(merged.values()))
        result = run_scenario(net, run_sc, horizon=horizon, label=f"attempt-{len(trace) + 1}")
        trace.append(
            SearchAttempt(len(trace) + 1, tuple(assignment), result.completion_time, result.feasible)
        )
        if best is None or _faster(result.completion_time, best.completion_time):
            best = result
        return result

    if mode == "heuristic":
        assignment = initial_priority_assignment(net, sc)
        for _ in range(HEURISTIC_STEP_CAP):
            result = attempt(assignment)
            if result.feasible:
                return result, trace
            assignment = refine_on_accumulation(net, result)
            if assignment is None:
                break
    else:
        for assignment in combos:
            result = attempt(assignment)
            if result.feasible:
                return result, trace

    raise NoFeasibleConfigurationError(
        f"no configuration meets the deadline {fmt_rat(sc.deadline)} "
        f"(best completion: {fmt_rat(best.completion_time) if best and best.completion_time is not None else 'none'})",
        best=best,
        trace=trace,
    )


def _faster(a: Fraction | None, b: Fraction | None) -> bool:
    if a is None:
        return False
    return b is None or a < b


def _exhaustive_assignments(net: HybridNet, sc: Scenario):
    """Deterministic cross-product of per-set candidates, or None if too big.

    Per set: every permutation of its transfer members (id-lexicographic),
    then the equal-weight sharing group.
    """
    per_place: list[list[ConflictPolicy]] = []
    total = 1
    for pid in searchable_places(net, sc):
        members = _conflict_members(net, pid)
        transfers = sorted(t for t in members if net.transitions[t].role == "transfer")
        if not transfers:
            continue
        options = [
            _ordered_policy(net, pid, perm) for perm in itertools.permutations(transfers)
        ]
        options.append(_sharing_policy(net, pid, transfers))
        per_place.append(options)
        total *= len(options)
        if total > EXHAUSTIVE_CAP:
            return None
    return [list(combo) for combo in itertools.product(*per_place)]


# -- run comparison ------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    id: str
    label: str
    feasible: bool
    completion_time: Fraction | None
    phase_count: int
    accumulating_places: tuple[str, ...]


def compare_runs(history: RunHistory, ids: Sequence[str]) -> list[ComparisonRow]:
    """Rows for the requested runs, fastest completion first."""
    rows = []
    for entry_id in ids:
        entry = history.get(entry_id)
        r = entry.result
        rows.append(
            ComparisonRow(
                id=entry.id,
                label=r.label,
                feasible=r.feasible,
                completion_time=r.completion_time,
                phase_count=len(r.graph.phases),
                accumulating_places=tuple(a.place for a in r.accumulation),
            )
        )
    rows.sort(key=lambda r: (r.completion_time is None, r.completion_time, r.id))
    return rows


def comparison_to_csv(rows: Sequence[ComparisonRow]) -> str:
    import csv
    import io

    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["id", "label", "feasible", "completionTime", "phases", "accumulatingPlaces"])
    for r in rows:
        writer.writerow(
            [
                r.id,
                r.label,
                "yes" if r.feasible else "no",
                "" if r.completion_time is None else dec10(r.completion_time),
                r.phase_count,
                " ".join(r.accumulating_places),
            ]
        )
    return out.getvalue()


# -- result serialization ------------------------------------------------------------


def _r(x):
    if x is None:
        return None
    return {"frac": fmt_rat(x), "dec": dec10(x)}


def result_to_doc(result: ScenarioResult) -> dict:
    return {
        "label": result.label,
        "scenario": scenario_to_doc(result.scenario),
        "feasible": result.feasible,
        "completionTime": _r(result.completion_time),
        "graph": graph_to_doc(result.graph),
        "accumulation": [
            {"place": a.place, "phases": list(a.phases), "maxBalance": _r(a.max_balance)}
            for a in result.accumulation
        ],
    }


def attempts_to_doc(trace: Sequence[SearchAttempt]) -> list[dict]:
    out = []
    for a in trace:
        out.append(
            {
                "index": a.index,
                "priorities": [
                    {"place": p.place, "levels": [{t: fmt_rat(w) for t, w in level.items()} for level in p.levels]}
                    for p in a.priorities
                ],
                "completionTime": _r(a.completion_time),
                "feasible": a.feasible,
            }
        )
    return out
