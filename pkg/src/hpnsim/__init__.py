"""hpnsim: hybrid Petri net simulation with an exact-rational kernel.

Continuous/discrete nets, piecewise-linear evolution graphs, an independent
Euler cross-check, and a scenario-search decision layer for deadline-driven
network configuration.
"""

from .errors import (
    BadRequestError,
    HpnError,
    ModelError,
    NoFeasibleConfigurationError,
    NonConvergenceError,
    NotFoundError,
    ParseError,
    UnboundedSpeedError,
    UnresolvedConflictError,
)
from .model import (
    CONTINUOUS,
    DISCRETE,
    ConflictPolicy,
    HybridNet,
    NodeKind,
    Place,
    Transition,
    Violation,
    load_net,
    priority,
    save_net,
    sharing,
    structural_conflicts,
    validate,
)
from .rationals import INF, Rat, dec10, fmt_rat, parse_rat
from .semantics import (
    Enabling,
    ExtendedMarking,
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

__version__ = "0.1.0"
