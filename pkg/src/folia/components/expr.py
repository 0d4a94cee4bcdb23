#!/usr/bin/env python3
"""
Symbolic scalar expressions over chart variables.

Expressions are immutable sympy trees with exact rational constants. This module
owns the text grammar (parser and printer), differentiation, the polynomial
normal form used by every exact decision, and evaluation (exact at rational
points for polynomials, IEEE double otherwise).

Grammar:
    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('+'|'-') factor | base ('^' rational)?
    base   := number | ident | func '(' expr ')' | '(' expr ')'
with func in {sin, cos, exp}, number a decimal or p/q rational. The unary sign
and the signed exponent extend the base grammar without changing its values.
"""

import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from sympy import QQ
from sympy.polys.polyerrors import CoercionFailed, GeneratorsNeeded, PolynomialError

from folia.utils.errors import (
    DimensionMismatchError,
    ExprParseError,
    NotPolynomialError,
    SingularLocusError,
    UnknownIdentifierError,
)

logger = logging.getLogger(__name__)

Expr = sympy.Expr
Number = Union[Fraction, float]
Monomial = Tuple[int, ...]

FUNCTIONS = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "exp": sympy.exp,
}

# Time variable of time-dependent coefficients
TIME = sympy.Symbol("t")

_TOKEN = re.compile(
    r"\s*(?:(?P<number>\d+/\d+|\d+(?:\.\d*)?|\.\d+)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class NotPolynomial:
    """Result of poly_normalize on an expression outside the polynomial fragment"""
    reason: str

    def __bool__(self) -> bool:
        return False


def symbol(name: str) -> sympy.Symbol:
    """Chart-variable symbol for a name"""
    return sympy.Symbol(name)


def symbols_for(names: Sequence[str]) -> Tuple[sympy.Symbol, ...]:
    return tuple(symbol(name) for name in names)


def parse_rational(value: Union[str, int, float, Fraction, sympy.Rational]) -> Fraction:
    """Exact rational from a config number: int, 'p/q', decimal string or float"""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"Not a rational number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, sympy.Rational):
        return Fraction(int(value.p), int(value.q))
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"Not a rational number: {value!r}") from exc
    raise ValueError(f"Not a rational number: {value!r}")


def to_sympy_rational(value: Union[Fraction, int]) -> sympy.Rational:
    value = Fraction(value)
    return sympy.Rational(value.numerator, value.denominator)


def to_fraction(value: sympy.Rational) -> Fraction:
    value = sympy.nsimplify(value) if not isinstance(value, sympy.Rational) else value
    return Fraction(int(value.p), int(value.q))


class _Parser:
    """Recursive-descent parser for the expression grammar"""

    def __init__(self, source: str, chart_vars: Sequence[str]):
        self.source = source
        self.chart_vars = list(chart_vars)
        self.tokens = self._tokenize(source)
        self.index = 0

    def _tokenize(self, source: str) -> List[Tuple[str, str, int]]:
        tokens = []
        position = 0
        while position < len(source):
            if source[position:].strip() == "":
                break
            match = _TOKEN.match(source, position)
            if not match:
                offset = len(source[position:]) - len(source[position:].lstrip())
                raise ExprParseError("Unexpected character", source, position + offset)
            kind = match.lastgroup
            text = match.group(kind)
            tokens.append((kind, text, match.start(kind)))
            position = match.end()
        tokens.append(("end", "", len(source)))
        return tokens

    def _peek(self) -> Tuple[str, str, int]:
        return self.tokens[self.index]

    def _next(self) -> Tuple[str, str, int]:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _expect(self, text: str) -> None:
        kind, value, position = self._next()
        if value != text:
            raise ExprParseError(f"Expected '{text}'", self.source, position)

    def parse(self) -> Expr:
        result = self._expr()
        kind, value, position = self._peek()
        if kind != "end":
            raise ExprParseError(f"Unexpected token '{value}'", self.source, position)
        if result.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo):
            raise ExprParseError("Division by zero", self.source, 0)
        return result

    def _expr(self) -> Expr:
        result = self._term()
        while self._peek()[1] in ("+", "-"):
            op = self._next()[1]
            right = self._term()
            result = result + right if op == "+" else result - right
        return result

    def _term(self) -> Expr:
        result = self._factor()
        while self._peek()[1] in ("*", "/"):
            op = self._next()[1]
            right = self._factor()
            if op == "*":
                result = result * right
            else:
                if right == 0:
                    raise ExprParseError("Division by zero", self.source, self._peek()[2])
                result = result / right
        return result

    def _factor(self) -> Expr:
        kind, value, position = self._peek()
        if value in ("+", "-"):
            self._next()
            operand = self._factor()
            return -operand if value == "-" else operand
        base = self._base()
        if self._peek()[1] == "^":
            self._next()
            exponent = self._exponent()
            if base == 0 and exponent < 0:
                raise ExprParseError("Division by zero", self.source, position)
            return base ** exponent
        return base

    def _exponent(self) -> sympy.Rational:
        kind, value, position = self._peek()
        if value == "(":
            self._next()
            exponent = self._signed_number()
            self._expect(")")
            return exponent
        return self._signed_number()

    def _signed_number(self) -> sympy.Rational:
        sign = 1
        kind, value, position = self._peek()
        if value in ("+", "-"):
            self._next()
            sign = -1 if value == "-" else 1
        kind, value, position = self._next()
        if kind != "number":
            raise ExprParseError("Expected a rational exponent", self.source, position)
        return sign * sympy.Rational(value)

    def _base(self) -> Expr:
        kind, value, position = self._next()
        if kind == "number":
            return sympy.Rational(value)
        if kind == "ident":
            if value in FUNCTIONS and self._peek()[1] == "(":
                self._next()
                argument = self._expr()
                self._expect(")")
                return FUNCTIONS[value](argument)
            if value in self.chart_vars:
                return symbol(value)
            raise UnknownIdentifierError(value, position, self.chart_vars)
        if value == "(":
            inner = self._expr()
            self._expect(")")
            return inner
        if kind == "end":
            raise ExprParseError("Unexpected end of input", self.source, position)
        raise ExprParseError(f"Unexpected token '{value}'", self.source, position)


def parse_expr(source: str, chart_vars: Sequence[str]) -> Expr:
    """Parse source text into an expression over the given chart variables."""
    if not isinstance(source, str):
        source = str(source)
    return _Parser(source, chart_vars).parse()


def differentiate(e: Expr, var: Union[str, sympy.Symbol]) -> Expr:
    """Partial derivative d e / d var; singular loci stay visible through singular_locus."""
    sym = symbol(var) if isinstance(var, str) else var
    return sympy.diff(e, sym)


def singular_locus(e: Expr) -> Tuple[Expr, ...]:
    """Bases whose vanishing makes e (or its derivatives) singular."""
    loci = []
    for node in sympy.preorder_traversal(e):
        if node.is_Pow and node.exp.is_Rational and not (node.exp.is_Integer and node.exp >= 0):
            if not node.base.is_Number and node.base not in loci:
                loci.append(node.base)
    return tuple(loci)


def polynomial_obstruction(e: Expr) -> Optional[str]:
    """Reason why e is outside the polynomial fragment, or None."""
    for node in sympy.preorder_traversal(e):
        if isinstance(node, sympy.Function):
            return f"uses {node.func.__name__}"
        if node.is_Pow:
            exponent = node.exp
            if exponent.is_Integer and exponent < 0:
                return "uses division"
            if not exponent.is_Integer:
                return "uses a non-integer power"
        if node.is_Number and not node.is_Rational:
            return "uses a floating-point constant"
        if isinstance(node, sympy.NumberSymbol):
            return f"uses the constant {node}"
    return None


def _default_gens(e: Expr) -> Tuple[sympy.Symbol, ...]:
    return tuple(sorted(e.free_symbols, key=lambda s: s.name))


def poly_normalize(e: Expr, gens: Optional[Sequence[sympy.Symbol]] = None) -> Union[sympy.Poly, NotPolynomial]:
    """Canonical polynomial (sorted monomials, reduced rational coefficients) or NotPolynomial."""
    e = sympy.sympify(e)
    reason = polynomial_obstruction(e)
    if reason:
        return NotPolynomial(reason)
    gens = tuple(gens) if gens else _default_gens(e)
    if not gens:
        gens = (symbol("_const"),)
    try:
        return sympy.Poly(e, *gens, domain=QQ)
    except (CoercionFailed, PolynomialError, GeneratorsNeeded) as exc:
        return NotPolynomial(f"not polynomial in {', '.join(g.name for g in gens)}: {exc}")


def require_polynomial(e: Expr, gens: Sequence[sympy.Symbol]) -> sympy.Poly:
    """poly_normalize that raises NotPolynomialError"""
    result = poly_normalize(e, gens)
    if isinstance(result, NotPolynomial):
        raise NotPolynomialError(f"{to_source(e)}: {result.reason}")
    return result


def polynomial_terms(e: Expr, gens: Sequence[sympy.Symbol]) -> Dict[Monomial, Fraction]:
    """Monomial -> coefficient dictionary of a polynomial expression"""
    poly = require_polynomial(e, gens)
    return {monom: to_fraction(coeff) for monom, coeff in poly.terms() if coeff != 0}


def expr_from_terms(terms: Dict[Monomial, Fraction], gens: Sequence[sympy.Symbol]) -> Expr:
    """Inverse of polynomial_terms"""
    total = sympy.Integer(0)
    for monom, coeff in terms.items():
        if not coeff:
            continue
        term = to_sympy_rational(coeff)
        for gen, power in zip(gens, monom):
            if power:
                term = term * gen ** power
        total = total + term
    return total


def is_zero(e: Expr, gens: Optional[Sequence[sympy.Symbol]] = None) -> bool:
    """Exact zero test; polynomial normal form, else expansion and cancellation."""
    normal = poly_normalize(e, gens)
    if not isinstance(normal, NotPolynomial):
        return normal.is_zero
    return sympy.cancel(sympy.expand(e)) == 0


def _is_exact_coordinate(value) -> bool:
    return isinstance(value, (int, Fraction, sympy.Rational, str)) and not isinstance(value, bool)


def eval_at(e: Expr, point: Sequence, chart_vars: Sequence[str]) -> Number:
    """Evaluate at a point; exact for polynomials at rational points, float otherwise."""
    if len(point) != len(chart_vars):
        raise DimensionMismatchError(
            f"Point has {len(point)} coordinates, chart has {len(chart_vars)} variables"
        )
    gens = symbols_for(chart_vars)
    exact = all(_is_exact_coordinate(c) for c in point)
    if exact:
        coordinates = [parse_rational(c) for c in point]
        for locus in singular_locus(e):
            value = sympy.sympify(locus).subs(dict(zip(gens, map(to_sympy_rational, coordinates))))
            if value == 0:
                raise SingularLocusError(locus, coordinates)
        normal = poly_normalize(e, gens)
        if not isinstance(normal, NotPolynomial):
            return _eval_terms(normal, coordinates)
        coordinates = [float(c) for c in coordinates]
    else:
        coordinates = [float(c) for c in point]
        for locus in singular_locus(e):
            value = compile_exprs((locus,), gens)(np.array(coordinates))[0]
            if abs(value) < 1e-300:
                raise SingularLocusError(locus, coordinates)
    return float(compile_exprs((e,), gens)(np.array(coordinates, dtype=float))[0])


def _eval_terms(poly: sympy.Poly, coordinates: Sequence[Fraction]) -> Fraction:
    total = Fraction(0)
    for monom, coeff in poly.terms():
        term = to_fraction(coeff)
        for value, power in zip(coordinates, monom):
            if power:
                term *= value ** power
        total += term
    return total


def _real_powers(e: Expr) -> Expr:
    """Rewrite odd-denominator rational powers as real roots for numeric evaluation."""
    def is_odd_root(node) -> bool:
        return (
            node.is_Pow
            and node.exp.is_Rational
            and not node.exp.is_Integer
            and int(node.exp.q) % 2 == 1
        )

    def real_root(node) -> Expr:
        return sympy.sign(node.base) ** int(node.exp.p) * sympy.Abs(node.base) ** node.exp

    return e.replace(is_odd_root, real_root)


@lru_cache(maxsize=4096)
def _lambdified(exprs: Tuple[Expr, ...], symbols: Tuple[sympy.Symbol, ...]) -> Callable:
    prepared = [_real_powers(sympy.sympify(e)) for e in exprs]
    return sympy.lambdify(symbols, prepared, modules="numpy")


def compile_exprs(exprs: Sequence[Expr], symbols: Sequence[sympy.Symbol]) -> Callable[[np.ndarray], np.ndarray]:
    """Batched float evaluator: (N, n) points -> (N, len(exprs)); a single point gives a vector."""
    exprs = tuple(sympy.sympify(e) for e in exprs)
    symbols = tuple(symbols)
    function = _lambdified(exprs, symbols)

    def evaluate(points: np.ndarray) -> np.ndarray:
        array = np.asarray(points, dtype=float)
        single = array.ndim == 1
        array = np.atleast_2d(array)
        count = array.shape[0]
        values = function(*[array[:, i] for i in range(array.shape[1])])
        out = np.empty((count, len(exprs)))
        for j, value in enumerate(values):
            out[:, j] = np.broadcast_to(np.asarray(value, dtype=float), (count,))
        return out[0] if single else out

    return evaluate


def _number_text(value: sympy.Rational) -> str:
    value = sympy.Rational(value)
    if value.q == 1:
        return str(value.p)
    return f"{value.p}/{value.q}"


def to_source(e: Expr) -> str:
    """Print an expression in the grammar; canonical for polynomials."""
    e = sympy.sympify(e)
    normal = poly_normalize(e)
    if not isinstance(normal, NotPolynomial) and e.free_symbols:
        return _print_poly(normal)
    return _print(e)


def _print_poly(poly: sympy.Poly) -> str:
    names = [g.name for g in poly.gens]
    pieces = []
    for monom, coeff in poly.terms():
        if coeff == 0:
            continue
        factors = []
        for name, power in zip(names, monom):
            if power == 1:
                factors.append(name)
            elif power > 1:
                factors.append(f"{name}^{power}")
        magnitude = abs(coeff)
        if not factors:
            body = _number_text(magnitude)
        elif magnitude == 1:
            body = "*".join(factors)
        else:
            body = _number_text(magnitude) + "*" + "*".join(factors)
        pieces.append((coeff < 0, body))
    if not pieces:
        return "0"
    negative, body = pieces[0]
    text = ("-" if negative else "") + body
    for negative, body in pieces[1:]:
        text += (" - " if negative else " + ") + body
    return text


def _print(e: Expr) -> str:
    if e.is_Rational:
        return ("-" + _number_text(-e)) if e < 0 else _number_text(e)
    if e.is_Symbol:
        return e.name
    if isinstance(e, sympy.Function):
        return f"{e.func.__name__}({_print(e.args[0])})"
    if e.is_Add:
        text = ""
        for i, term in enumerate(e.as_ordered_terms()):
            piece = _print(term)
            if i == 0:
                text = piece
            elif piece.startswith("-"):
                text += " - " + piece[1:]
            else:
                text += " + " + piece
        return text
    if e.is_Mul:
        coeff, rest = e.as_coeff_Mul()
        numerator, denominator = [], []
        for factor in rest.as_ordered_factors():
            if factor.is_Pow and factor.exp.is_Rational and factor.exp < 0:
                denominator.append(_wrap(factor.base ** -factor.exp))
            else:
                numerator.append(_wrap(factor))
        body = "*".join(numerator) if numerator else "1"
        magnitude = abs(coeff)
        if magnitude != 1:
            body = _number_text(magnitude) + "*" + body if numerator else _number_text(magnitude)
        if denominator:
            body += "/" + "/".join(denominator)
        return ("-" + body) if coeff < 0 else body
    if e.is_Pow:
        exponent = e.exp
        if not exponent.is_Rational:
            raise ValueError(f"Cannot print non-rational exponent in {e}")
        exponent_text = _number_text(exponent) if exponent >= 0 else "-" + _number_text(-exponent)
        return f"{_wrap(e.base)}^{exponent_text}"
    raise ValueError(f"Cannot print expression {e}")


def _wrap(e: Expr) -> str:
    text = _print(e)
    if e.is_Symbol or isinstance(e, sympy.Function) or (e.is_Integer and e >= 0):
        return text
    if e.is_Pow and (e.base.is_Symbol or isinstance(e.base, sympy.Function)):
        return text
    return f"({text})"
