"""Parser, printer, derivatives and evaluation of chart expressions."""

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folia.components.expr import (
    NotPolynomial,
    differentiate,
    eval_at,
    is_zero,
    parse_expr,
    parse_rational,
    poly_normalize,
    polynomial_terms,
    symbols_for,
    to_source,
)
from folia.utils.errors import ExprParseError, SingularLocusError, UnknownIdentifierError

XY = ("x", "y")

rationals = st.fractions(min_value=-10, max_value=10, max_denominator=50)


def test_polynomial_printing_is_canonical():
    e = parse_expr("3*y*x + x^2 - 1/2", XY)
    assert to_source(e) == "x^2 + 3*x*y - 1/2"


def test_equal_polynomials_print_identically():
    a = parse_expr("(x + y)^2", XY)
    b = parse_expr("y^2 + 2*x*y + x*x", XY)
    assert to_source(a) == to_source(b)
    assert is_zero(a - b, symbols_for(XY))


def test_unary_minus_and_rational_constants():
    e = parse_expr("-x + 2/3", XY)
    assert polynomial_terms(e, symbols_for(XY)) == {(1, 0): Fraction(-1), (0, 0): Fraction(2, 3)}


def test_derivative_of_cubic():
    e = parse_expr("x^3 - y", XY)
    assert to_source(differentiate(e, "x")) == "3*x^2"
    assert to_source(differentiate(e, "y")) == "-1"


def test_exact_evaluation_at_rational_point():
    e = parse_expr("x^2 + 1/3*y", XY)
    value = eval_at(e, ["1/2", 3], XY)
    assert isinstance(value, Fraction)
    assert value == Fraction(5, 4)


def test_float_evaluation_of_transcendental_expression():
    e = parse_expr("sin(x) + exp(y)", XY)
    assert eval_at(e, [0.5, 0.0], XY) == pytest.approx(math.sin(0.5) + 1.0, abs=1e-14)


def test_unknown_identifier_reports_position():
    with pytest.raises(UnknownIdentifierError) as raised:
        parse_expr("x + z", XY)
    assert raised.value.name == "z"
    assert raised.value.position == 4


def test_syntax_errors():
    with pytest.raises(ExprParseError):
        parse_expr("x + * y", XY)
    with pytest.raises(ExprParseError):
        parse_expr("(x + y", XY)
    with pytest.raises(ExprParseError):
        parse_expr("x/0", XY)


def test_singular_locus_is_reported():
    e = parse_expr("1/x", ("x",))
    with pytest.raises(SingularLocusError):
        eval_at(e, [0], ("x",))
    assert eval_at(e, ["1/4"], ("x",)) == 4


def test_non_polynomial_normal_form():
    result = poly_normalize(parse_expr("sin(x)*y", XY))
    assert isinstance(result, NotPolynomial)
    assert not result
    assert "sin" in result.reason


def test_parse_rational_forms():
    assert parse_rational("3/4") == Fraction(3, 4)
    assert parse_rational(2) == Fraction(2)
    assert parse_rational(0.5) == Fraction(1, 2)
    with pytest.raises(ValueError):
        parse_rational("one half")
    with pytest.raises(ValueError):
        parse_rational(True)


@given(a=rationals, b=rationals)
@settings(max_examples=50, deadline=None)
def test_polynomial_evaluation_is_exact(a, b):
    """Property: rational points evaluate polynomials without rounding"""
    e = parse_expr("x*y - y + 1/7", XY)
    assert eval_at(e, [a, b], XY) == a * b - b + Fraction(1, 7)


@given(a=rationals)
@settings(max_examples=30, deadline=None)
def test_derivative_matches_difference_quotient_of_quadratic(a):
    """Property: for a quadratic the symmetric difference quotient is exact"""
    e = parse_expr("x^2 - 3*x", ("x",))
    h = Fraction(1, 3)
    quotient = (eval_at(e, [a + h], ("x",)) - eval_at(e, [a - h], ("x",))) / (2 * h)
    assert eval_at(differentiate(e, "x"), [a], ("x",)) == quotient
