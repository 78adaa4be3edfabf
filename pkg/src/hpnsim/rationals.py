"""Exact rational arithmetic helpers shared by the whole engine.

All markings, weights, speeds and times are ``fractions.Fraction`` values.
Immediate transitions and unbounded quantities use the ``INF`` sentinel
(``math.inf``); the helpers below keep the few places where infinity enters
an exact computation well defined (notably ``inf * 0 == 0`` for disabled
immediate transitions).
"""

from __future__ import annotations

import math
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Union

INF = math.inf

#: A rational number, or the infinity sentinel.
Rat = Union[Fraction, float]


def is_inf(x: Rat) -> bool:
    return x == INF


def rat(value) -> Rat:
    """Coerce ints/strings/Fractions to an exact value (or INF)."""
    if value == INF:
        return INF
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rat(value)
    raise TypeError(f"not an exact rational: {value!r}")


def mul(a: Rat, b: Rat) -> Rat:
    """Product with the convention inf*0 == 0 (disabled immediate flow)."""
    if is_inf(a) and b == 0:
        return Fraction(0)
    if is_inf(b) and a == 0:
        return Fraction(0)
    if is_inf(a) or is_inf(b):
        return INF
    return a * b


def parse_rat(text: str) -> Rat:
    """Parse the wire form of a rational: "p", "p/q" or "inf"."""
    if not isinstance(text, str):
        raise ValueError(f"rational must be a string, got {text!r}")
    s = text.strip()
    if s == "inf":
        return INF
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad rational {text!r}: {exc}") from None


def fmt_rat(x: Rat) -> str:
    """Canonical wire form: reduced "p/q" ("p" when the denominator is 1)."""
    if is_inf(x):
        return "inf"
    f = Fraction(x)
    if f.denominator == 1:
        return str(f.numerator)
    return f"{f.numerator}/{f.denominator}"


def dec10(x: Rat) -> str:
    """10-significant-digit decimal rendering, for display next to "p/q"."""
    if is_inf(x):
        return "inf"
    f = Fraction(x)
    with localcontext() as ctx:
        ctx.prec = 10
        d = Decimal(f.numerator) / Decimal(f.denominator)
    return format(d, "f") if -1e10 < f < 1e10 else str(d)
