"""Independent first-order time-stepping cross-check for the engine.

This simulator shares only the net data model with the evolution engine; it
computes speeds by a greedy local rule per step instead of a global fixed
point, and works in floats. Each step, every place offers its current stock
to its consumers (policy-split when over-subscribed), transitions take the
minimum of their rate cap and their granted shares, and markings advance by
balance * dt. Flow through an empty fed place therefore lags one step,
which is exactly the first-order error the convergence tests budget for.

Intentionally not exact and intentionally redundant: agreement within
C * dt between this and the phase engine is evidence for both.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .errors import BadRequestError, UnresolvedConflictError
from .model import HybridNet, NodeKind
from .rationals import Rat, is_inf
from .scenario import Scenario, apply_scenario

EPS = 1e-12


def euler_simulate(
    net: HybridNet,
    scenario: Scenario | None = None,
    dt: Rat = Fraction(1, 10),
    horizon: Rat = Fraction(10),
) -> list[tuple[float, dict[str, float]]]:
    """Sampled continuous markings at 0, dt, 2*dt, ... horizon."""
    if scenario is not None:
        net = apply_scenario(net, scenario)
    dtf = float(dt)
    if dtf <= 0:
        raise BadRequestError("dt must be positive")
    steps = int(round(float(horizon) / dtf))

    cont_places = sorted(net.continuous_places())
    disc_places = sorted(net.discrete_places())
    cont_trans = sorted(net.continuous_transitions())
    disc_trans = sorted(net.discrete_transitions())

    m0 = net.initial_marking()
    cm = {p: float(m0[p]) for p in cont_places}
    dm = {p: int(m0[p]) for p in disc_places}
    rates = {
        t: (math.inf if is_inf(net.transitions[t].rate) else float(net.transitions[t].rate))
        for t in cont_trans
    }
    delays = {
        t: (math.inf if is_inf(net.transitions[t].delay) else float(net.transitions[t].delay))
        for t in disc_trans
    }
    clocks: dict[str, float] = {}

    in_places = {t: net.inputs_of(t) for t in cont_trans + disc_trans}
    out_places = {t: net.outputs_of(t) for t in cont_trans + disc_trans}
    consumers = {
        p: [(t, w) for t, w in net.place_outputs(p) if net.transitions[t].kind == NodeKind.CONTINUOUS]
        for p in cont_places
    }

    def stock(pid) -> float:
        return float(dm[pid]) if pid in dm else cm[pid]

    def cap(t) -> float:
        v = rates[t]
        degree = math.inf
        for pid, w in in_places[t]:
            if pid in dm:
                degree = min(degree, dm[pid] / float(w))
        if math.isinf(degree):
            return v
        if degree <= 0:
            return 0.0
        return degree * v if not math.isinf(v) else math.inf

    def discrete_enabled(t) -> bool:
        return all(stock(pid) >= float(w) - EPS for pid, w in in_places[t])

    samples = [(0.0, dict(cm))]
    time = 0.0
    for _step in range(steps):
        # per-place grants from current stock; over-subscription split by policy
        grant: dict[str, dict[str, float]] = {}
        for p in cont_places:
            outs = consumers[p]
            if not outs:
                continue
            demands = {}
            for t, w in outs:
                c = cap(t)
                demands[t] = float(w) * c * dtf if not math.isinf(c) else math.inf
            total = sum(demands.values())
            avail = cm[p]
            if total <= avail:
                grant[p] = demands
            elif len(demands) == 1:
                t = next(iter(demands))
                grant[p] = {t: min(demands[t], avail)}
            else:
                policy = net.policies.get(p)
                if policy is None:
                    raise UnresolvedConflictError(p, "no policy declared (oracle)")
                grant[p] = _split(policy, avail, demands)

        v = {}
        for t in cont_trans:
            c = cap(t)
            if c <= 0:
                v[t] = 0.0
                continue
            speed = c
            for pid, w in in_places[t]:
                if pid in dm:
                    continue
                g = grant.get(pid, {}).get(t, 0.0)
                speed = min(speed, g / (float(w) * dtf))
            if math.isinf(speed):
                raise BadRequestError(f"immediate transition {t} unconstrained (oracle)")
            v[t] = speed

        outflow = {p: 0.0 for p in cont_places}
        inflow = {p: 0.0 for p in cont_places}
        for t in cont_trans:
            if v[t] == 0.0:
                continue
            for pid, w in in_places[t]:
                if pid in outflow:
                    outflow[pid] += float(w) * v[t] * dtf
            for pid, w in out_places[t]:
                if pid in inflow:
                    inflow[pid] += float(w) * v[t] * dtf
        for p in cont_places:
            cm[p] = max(0.0, cm[p] - outflow[p] + inflow[p])

        # discrete clocks: run while enabled, fire on expiry, reset on disable
        for t in disc_trans:
            if discrete_enabled(t) and not math.isinf(delays[t]):
                clocks.setdefault(t, delays[t])
            else:
                clocks.pop(t, None)
        for t in sorted(clocks):
            clocks[t] -= dtf
            if clocks[t] <= EPS:
                if discrete_enabled(t):
                    for pid, w in in_places[t]:
                        if pid in dm:
                            dm[pid] -= int(w)
                        else:
                            cm[pid] = max(0.0, cm[pid] - float(w))
                    for pid, w in out_places[t]:
                        if pid in dm:
                            dm[pid] += int(w)
                        else:
                            cm[pid] += float(w)
                    changes = net.transitions[t].set_rates
                    if changes:
                        for target, rate in changes.items():
                            rates[target] = math.inf if is_inf(rate) else float(rate)
                del clocks[t]

        time += dtf
        samples.append((time, dict(cm)))
    return samples


def _split(policy, avail: float, demands: dict[str, float]) -> dict[str, float]:
    grants = {t: 0.0 for t in demands}
    members = set(policy.members())
    missing = [t for t, d in demands.items() if d > EPS and t not in members]
    if missing:
        raise UnresolvedConflictError(policy.place, f"uncovered transitions {missing} (oracle)")
    remaining = avail
    for level in policy.levels:
        if remaining <= 0:
            break
        wanting = {t: demands[t] for t in sorted(level) if demands.get(t, 0.0) > 0}
        if not wanting:
            continue
        total = sum(wanting.values())
        if total <= remaining:
            for t, d in wanting.items():
                grants[t] = d
            remaining -= total
            continue
        active = dict(wanting)
        while remaining > EPS and active:
            total_w = sum(float(level[t]) for t in active)
            over = {
                t: d for t, d in active.items()
                if not math.isinf(d) and remaining * float(level[t]) / total_w >= d
            }
            if not over:
                for t in active:
                    grants[t] = remaining * float(level[t]) / total_w
                break
            for t, d in over.items():
                grants[t] = d
                remaining -= d
                del active[t]
        break
    return grants
