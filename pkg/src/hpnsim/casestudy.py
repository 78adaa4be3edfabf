"""Bundled example model: a four-node packet relay network.

Node 1 must move a stock of packets to node 4, directly or via relays at
nodes 2 and 3 (routes 1-4, 1-2-4, 1-3-4, 1-2-3-4, 1-3-2-4; no route visits
a node twice). Each relay node also runs local jobs that compete with
forwarding for the node's work capacity.

Model shape:

* ``T1``..``T3`` generate the per-node work capacity into ``P1``..``P3``.
  Every activity of a node consumes from that capacity stock.
* ``P5`` holds the packets still to send; ``P4`` collects delivered ones.
* Transfers out of node 1: ``T4`` (to node 2, into ``P6``), ``T5`` (direct
  to node 4), ``T6`` (to node 3, into ``P7``). Each consumes node-1
  capacity and a packet.
* At node 2, arrivals from node 1 (``P6``) either go straight to node 4
  (``T8``) or are queued for node 3 (``T19`` into ``P10``, then sent by
  ``T7`` into ``P9``). Arrivals from node 3 (``P8``) go to node 4 via
  ``T9``. Node 3 mirrors this: ``P7`` feeds ``T10`` (to node 4) and
  ``T12`` (to node 2, into ``P8``); ``P9`` arrivals leave via ``T11``.
* ``T14``/``T15``/``T17`` are jobs more urgent than forwarding at nodes
  2/1/3; ``T13``/``T16``/``T18`` are background jobs with unbounded rate
  that soak up whatever capacity is left, so capacity stocks never grow.
* Every transfer ``T4``..``T11`` is gated by a marked discrete place
  (``P11``..``P18``) modelling link availability; unmarking one disables
  the corresponding link.

The relay chain at node 2 is split into a routing step (``T19``) and a
send step (``T7``, which also consumes node-2 capacity) with the queue
``P10`` in between; node 3 forwards with the single step ``T12`` since its
relayed traffic re-enters the common pool ``P8``.
"""

from __future__ import annotations

from fractions import Fraction

from .model import CONTINUOUS, DISCRETE, HybridNet, NodeKind, Place, Transition, priority
from .rationals import INF, Rat

F = Fraction

#: rates used by the bundled baseline run
BASE_RATES: dict[str, Rat] = {
    "T1": F(4), "T2": F(3), "T3": F(5),
    "T4": F(1), "T5": F(3, 2), "T6": F(2),
    "T7": F(1), "T8": F(1, 2), "T9": F(1),
    "T10": F(1), "T11": F(1), "T12": F(2),
    "T13": INF, "T14": F(1, 2), "T15": F(1, 2),
    "T16": INF, "T17": F(1), "T18": INF,
    "T19": F(1),
}

#: rates used by the priority study (faster node-1 links, slower node-3 relay)
STUDY_RATES: dict[str, Rat] = {
    "T1": F(4), "T2": F(3), "T3": F(5),
    "T4": F(3), "T5": F(2), "T6": F(2),
    "T7": F(1), "T8": F(1, 2), "T9": F(1),
    "T10": F(1), "T11": F(1), "T12": F(1),
    "T13": INF, "T14": F(1, 2), "T15": F(1, 2),
    "T16": INF, "T17": F(1), "T18": INF,
    "T19": F(1, 2),
}

SOURCE = "P5"
DESTINATION = "P4"
MESSAGE_SIZE = 1000

#: availability gate -> the transfer it enables
GATES = {
    "P11": "T4", "P12": "T5", "P13": "T6", "P14": "T7",
    "P15": "T8", "P16": "T9", "P17": "T10", "P18": "T11",
}

_PLACE_NAMES = {
    "P1": "node 1 work capacity",
    "P2": "node 2 work capacity",
    "P3": "node 3 work capacity",
    "P4": "packets delivered at node 4",
    "P5": "packets awaiting transmission",
    "P6": "in transit node 1 to node 2",
    "P7": "in transit node 1 to node 3",
    "P8": "in transit node 3 to node 2",
    "P9": "in transit node 2 to node 3",
    "P10": "relay queue at node 2 towards node 3",
    "P11": "link 1-2 available",
    "P12": "link 1-4 available",
    "P13": "link 1-3 available",
    "P14": "link 2-3 available",
    "P15": "link 2-4 available (traffic from node 1)",
    "P16": "link 2-4 available (relayed traffic)",
    "P17": "link 3-4 available (traffic from node 1)",
    "P18": "link 3-4 available (relayed traffic)",
}

_ROLES = {
    **{t: "transfer" for t in ("T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11", "T12", "T19")},
    "T14": "high-priority-job", "T15": "high-priority-job", "T17": "high-priority-job",
    "T13": "low-priority-drain", "T16": "low-priority-drain", "T18": "low-priority-drain",
}


def relay_network(rates: dict[str, Rat] | None = None) -> HybridNet:
    """Build the relay network with the given (default: baseline) rates."""
    rates = {**BASE_RATES, **(rates or {})}
    places = [Place(p, NodeKind(CONTINUOUS), _PLACE_NAMES[p]) for p in
              ("P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9", "P10")]
    places += [Place(p, NodeKind(DISCRETE), _PLACE_NAMES[p]) for p in GATES]

    transitions = [
        Transition(t, NodeKind(CONTINUOUS), rate=rates[t], role=_ROLES.get(t))
        for t in sorted(rates, key=lambda s: int(s[1:]))
    ]

    pre: dict[tuple, Rat] = {}
    post: dict[tuple, Rat] = {}

    def arc(src, dst, w=1):
        if src.startswith("P"):
            pre[(src, dst)] = F(w)
        else:
            post[(src, dst)] = F(w)

    # capacity generation
    arc("T1", "P1"), arc("T2", "P2"), arc("T3", "P3")
    # node 1 activities drain its capacity
    for t in ("T4", "T5", "T6", "T15", "T16"):
        arc("P1", t)
    # transfers out of node 1 also consume a packet
    for t in ("T4", "T5", "T6"):
        arc("P5", t)
    arc("T4", "P6"), arc("T5", "P4"), arc("T6", "P7")
    # node 2
    for t in ("T7", "T8", "T9", "T13", "T14"):
        arc("P2", t)
    arc("P6", "T8"), arc("T8", "P4")
    arc("P6", "T19"), arc("T19", "P10")
    arc("P10", "T7"), arc("T7", "P9")
    arc("P8", "T9"), arc("T9", "P4")
    # node 3
    for t in ("T10", "T11", "T12", "T17", "T18"):
        arc("P3", t)
    arc("P7", "T10"), arc("T10", "P4")
    arc("P7", "T12"), arc("T12", "P8")
    arc("P9", "T11"), arc("T11", "P4")
    # link availability gates (marking-preserving loops)
    for gate, t in GATES.items():
        arc(gate, t)
        arc(t, gate)

    m0: dict[str, Rat] = {SOURCE: F(MESSAGE_SIZE)}
    m0.update({gate: F(1) for gate in GATES})

    policies = [
        priority("P1", ["T15", "T4", "T5", "T6", "T16"]),
        priority("P5", ["T4", "T5", "T6"]),
        priority("P2", ["T14", "T7", "T8", "T9", "T13"]),
        priority("P3", ["T17", "T10", "T11", "T12", "T18"]),
        priority("P6", ["T8", "T19"]),
        priority("P7", ["T12", "T10"]),
    ]
    return HybridNet(places, transitions, pre, post, m0, policies)


def transfer_priorities(order: list[str]) -> list:
    """Conflict policies for node 1 given a transfer order (highest first)."""
    return [
        priority("P1", ["T15", *order, "T16"]),
        priority("P5", list(order)),
    ]
