from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from hpnsim.rationals import INF, dec10, fmt_rat, is_inf, mul, parse_rat


def test_parse_forms():
    assert parse_rat("3") == F(3)
    assert parse_rat("2000/7") == F(2000, 7)
    assert parse_rat("-1") == F(-1)
    assert parse_rat("inf") == INF
    with pytest.raises(ValueError):
        parse_rat("x/y")
    with pytest.raises(ValueError):
        parse_rat("1/0")


def test_fmt_canonical():
    assert fmt_rat(F(4, 2)) == "2"
    assert fmt_rat(F(2000, 7)) == "2000/7"
    assert fmt_rat(INF) == "inf"


@given(st.fractions(max_denominator=10**9))
def test_round_trip(x):
    assert parse_rat(fmt_rat(x)) == x


def test_inf_products():
    assert mul(INF, F(0)) == 0
    assert mul(F(0), INF) == 0
    assert is_inf(mul(INF, F(2)))
    assert mul(F(3), F(1, 2)) == F(3, 2)


def test_dec10():
    assert dec10(F(2000, 7)) == "285.7142857"
    assert dec10(F(1000)) == "1000"
    assert dec10(F(1, 2)) == "0.5"
    assert dec10(INF) == "inf"
