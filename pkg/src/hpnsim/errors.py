"""Exception taxonomy for the engine and its interfaces.

Every error that can cross the CLI/HTTP boundary carries a machine code so
callers can react without parsing messages:

    validation     - a net (or composed net) violates a structural invariant
    conflict       - an effective conflict has no covering policy
    nonconvergence - the speed fixed point did not stabilise (or is unbounded)
    notfound       - repository lookup miss
    badrequest     - malformed file/request content
"""

from __future__ import annotations


class HpnError(Exception):
    """Base class; ``code`` is the wire-level error family."""

    code = "badrequest"

    def __init__(self, message: str, subject: str | None = None):
        super().__init__(message)
        self.subject = subject


class ParseError(HpnError):
    """A net/scenario document does not match its schema."""

    code = "badrequest"


class ModelError(HpnError):
    """An operation was handed a structurally invalid net."""

    code = "validation"

    def __init__(self, message: str, violations=None, subject=None):
        super().__init__(message, subject)
        self.violations = list(violations or [])


class UnresolvedConflictError(HpnError):
    """An effective conflict arose at a place with no covering policy."""

    code = "conflict"

    def __init__(self, place: str, detail: str = ""):
        msg = f"unresolved effective conflict at place {place}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg, subject=place)
        self.place = place


class NonConvergenceError(HpnError):
    """The speed fixed point did not stabilise within the iteration cap."""

    code = "nonconvergence"


class UnboundedSpeedError(NonConvergenceError):
    """An immediate transition ended up with no finite speed constraint."""

    code = "nonconvergence"


class NotFoundError(HpnError):
    code = "notfound"


class BadRequestError(HpnError):
    code = "badrequest"


class NoFeasibleConfigurationError(HpnError):
    """Search exhausted its configurations without meeting the deadline.

    Carries the best (fastest) attempt for diagnosis.
    """

    code = "badrequest"

    def __init__(self, message: str, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = list(trace or [])
