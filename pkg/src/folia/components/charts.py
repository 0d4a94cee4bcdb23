#!/usr/bin/env python3
"""
Vector fields on coordinate charts.

Charts are global coordinate boxes. Vector fields and maps carry sympy component
expressions; module membership, involutivity, fiber dimensions and
projectability are decided exactly on polynomial data up to a degree bound D,
so every negative verdict reads "up to degree D".
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import sympy

from folia.components.expr import (
    Expr,
    NotPolynomial,
    compile_exprs,
    differentiate,
    eval_at,
    expr_from_terms,
    is_zero,
    parse_expr,
    parse_rational,
    poly_normalize,
    polynomial_terms,
    symbols_for,
    to_source,
)
from folia.config.configuration import DEGREE_BOUND, SAMPLES, SEED
from folia.constants import Verdict
from folia.utils.errors import (
    CannotAutoComputeError,
    ChartMismatchError,
    DimensionMismatchError,
    FrameInvalidError,
    NotSubmersionError,
)
from folia.utils.polynomial_system import (
    Poly,
    batched_float_rank,
    degree_schedule,
    evaluate_poly,
    exact_rank,
    monomials_up_to,
    poly_degree,
    poly_mul,
    relation_rank_at,
    solve_combination_bounded,
    solve_linear,
    syzygy_module,
)
from folia.utils.sampling import sample_box

logger = logging.getLogger(__name__)

Point = Sequence[Union[Fraction, float, int, str]]


@dataclass(frozen=True)
class Chart:
    """Coordinate box with named variables"""
    name: str
    variables: Tuple[str, ...]
    box: Optional[Tuple[Tuple[Fraction, Fraction], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.variables) < 1:
            raise DimensionMismatchError(f"Chart '{self.name}' needs at least one variable")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError(f"Chart '{self.name}' has repeated variable names: {self.variables}")
        if self.box is not None:
            box = tuple((parse_rational(lo), parse_rational(hi)) for lo, hi in self.box)
            if len(box) != len(self.variables):
                raise DimensionMismatchError(f"Chart '{self.name}' box has {len(box)} intervals")
            if any(lo >= hi for lo, hi in box):
                raise ValueError(f"Chart '{self.name}' has an empty box interval")
            object.__setattr__(self, "box", box)

    @property
    def dimension(self) -> int:
        return len(self.variables)

    @property
    def symbols(self) -> Tuple[sympy.Symbol, ...]:
        return symbols_for(self.variables)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Float box bounds, infinite when the chart has no box"""
        if self.box is None:
            return np.full(self.dimension, -np.inf), np.full(self.dimension, np.inf)
        low = np.array([float(lo) for lo, _ in self.box])
        high = np.array([float(hi) for _, hi in self.box])
        return low, high

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        low, high = self.bounds()
        return np.all((points >= low) & (points <= high), axis=1)

    def product(self, other: "Chart", name: Optional[str] = None) -> "Chart":
        """Product chart; the box is kept only when both factors have one"""
        box = None
        if self.box is not None and other.box is not None:
            box = self.box + other.box
        return Chart(name or f"{self.name}x{other.name}", self.variables + other.variables, box)

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {"name": self.name, "variables": list(self.variables)}
        if self.box is not None:
            result["box"] = [[_rational_text(lo), _rational_text(hi)] for lo, hi in self.box]
        return result


def _rational_text(value: Fraction) -> str:
    return str(Fraction(value))


@dataclass(frozen=True)
class VectorField:
    """Components X^i of X = Σ X^i ∂_i on a chart"""
    chart: Chart
    components: Tuple[Expr, ...]

    def __post_init__(self):
        components = tuple(sympy.sympify(c) for c in self.components)
        if len(components) != self.chart.dimension:
            raise DimensionMismatchError(
                f"Vector field has {len(components)} components on the {self.chart.dimension}-dimensional chart '{self.chart.name}'"
            )
        object.__setattr__(self, "components", components)

    @classmethod
    def from_strings(cls, chart: Chart, sources: Sequence[str]) -> "VectorField":
        return cls(chart, tuple(parse_expr(s, chart.variables) for s in sources))

    @classmethod
    def coordinate(cls, chart: Chart, index: int) -> "VectorField":
        return cls(chart, tuple(sympy.Integer(1 if i == index else 0) for i in range(chart.dimension)))

    @classmethod
    def zero(cls, chart: Chart) -> "VectorField":
        return cls(chart, tuple(sympy.Integer(0) for _ in range(chart.dimension)))

    def _check_chart(self, other: "VectorField") -> None:
        if other.chart != self.chart:
            raise ChartMismatchError(f"Fields on charts '{self.chart.name}' and '{other.chart.name}'")

    def __add__(self, other: "VectorField") -> "VectorField":
        self._check_chart(other)
        return VectorField(self.chart, tuple(sympy.expand(a + b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "VectorField") -> "VectorField":
        self._check_chart(other)
        return VectorField(self.chart, tuple(sympy.expand(a - b) for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "VectorField":
        return VectorField(self.chart, tuple(-a for a in self.components))

    def scaled(self, g: Union[Expr, int, Fraction]) -> "VectorField":
        """g·X for a function g"""
        g = sympy.sympify(g) if not isinstance(g, Fraction) else sympy.Rational(g.numerator, g.denominator)
        return VectorField(self.chart, tuple(sympy.expand(g * a) for a in self.components))

    def apply(self, f: Expr) -> Expr:
        """X(f) = Σ X^j ∂_j f"""
        return sympy.expand(sum(
            (c * differentiate(f, s) for c, s in zip(self.components, self.chart.symbols)),
            sympy.Integer(0),
        ))

    @property
    def is_polynomial(self) -> bool:
        return all(not isinstance(poly_normalize(c, self.chart.symbols), NotPolynomial) for c in self.components)

    def poly_vector(self) -> List[Poly]:
        """Term dictionaries of the components; raises NotPolynomialError"""
        return [polynomial_terms(c, self.chart.symbols) for c in self.components]

    def degree(self) -> int:
        return max((poly_degree(p) for p in self.poly_vector()), default=-1)

    def is_zero(self) -> bool:
        return all(is_zero(c, self.chart.symbols) for c in self.components)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Batched float values, (N, n) -> (N, n)"""
        return compile_exprs(self.components, self.chart.symbols)(points)

    def value_at(self, point: Point) -> List[Union[Fraction, float]]:
        """Exact values at a rational point (float otherwise)"""
        return [eval_at(c, point, self.chart.variables) for c in self.components]

    def to_source(self) -> List[str]:
        return [to_source(c) for c in self.components]

    def to_dict(self) -> Dict[str, Any]:
        return {"chart": self.chart.name, "components": self.to_source()}

    def __str__(self) -> str:
        terms = []
        for text, name in zip(self.to_source(), self.chart.variables):
            if text == "0":
                continue
            coefficient = "" if text == "1" else (f"({text})" if any(op in text for op in "+- ") else text) + "*"
            terms.append(f"{coefficient}d{name}")
        return " + ".join(terms) if terms else "0"


@dataclass(frozen=True)
class VfModule:
    """Finitely generated module of vector fields with a membership degree bound"""
    chart: Chart
    generators: Tuple[VectorField, ...]
    degree_bound: int = DEGREE_BOUND

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if self.degree_bound < 1:
            raise ValueError("Degree bound must be at least 1")
        for generator in self.generators:
            if generator.chart != self.chart:
                raise ChartMismatchError(
                    f"Generator on chart '{generator.chart.name}' in a module on '{self.chart.name}'"
                )

    @property
    def rank(self) -> int:
        return len(self.generators)

    def poly_vectors(self) -> List[List[Poly]]:
        return [g.poly_vector() for g in self.generators]

    def with_generators(self, generators: Sequence[VectorField]) -> "VfModule":
        return VfModule(self.chart, tuple(generators), self.degree_bound)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "chart": self.chart.name,
            "generators": [g.to_source() for g in self.generators],
            "degree_bound": self.degree_bound,
        }


class MapLike(Protocol):
    """Anything with a name, charts and batched numeric evaluation"""
    name: str
    source: Chart
    target: Chart

    def evaluate(self, points: np.ndarray) -> np.ndarray: ...

    def jacobian_at(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SmoothMap:
    """Map from the source chart to the target chart by component expressions"""
    name: str
    source: Chart
    target: Chart
    components: Tuple[Expr, ...]

    def __post_init__(self):
        components = tuple(sympy.sympify(c) for c in self.components)
        if len(components) != self.target.dimension:
            raise DimensionMismatchError(
                f"Map '{self.name}' has {len(components)} components for a {self.target.dimension}-dimensional target"
            )
        object.__setattr__(self, "components", components)

    @classmethod
    def from_strings(cls, name: str, source: Chart, target: Chart, sources: Sequence[str]) -> "SmoothMap":
        return cls(name, source, target, tuple(parse_expr(s, source.variables) for s in sources))

    @classmethod
    def identity(cls, chart: Chart, name: str = "id") -> "SmoothMap":
        return cls(name, chart, chart, chart.symbols)

    def jacobian(self) -> Tuple[Tuple[Expr, ...], ...]:
        return tuple(
            tuple(differentiate(c, s) for s in self.source.symbols)
            for c in self.components
        )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return compile_exprs(self.components, self.source.symbols)(points)

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        """Batched Jacobians, (N, n) -> (N, m, n)"""
        m, n = self.target.dimension, self.source.dimension
        flat = [entry for row in self.jacobian() for entry in row]
        values = compile_exprs(flat, self.source.symbols)(np.atleast_2d(points))
        return values.reshape(-1, m, n)

    def value_at(self, point: Point) -> List[Union[Fraction, float]]:
        return [eval_at(c, point, self.source.variables) for c in self.components]

    def substitute(self, expressions: Sequence[Expr]) -> Tuple[Expr, ...]:
        """Components with the source variables replaced by expressions"""
        mapping = dict(zip(self.source.symbols, expressions))
        return tuple(c.xreplace(mapping) for c in self.components)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "source": self.source.name,
            "target": self.target.name,
            "components": [to_source(c) for c in self.components],
        }


@dataclass
class MembershipResult:
    """Member with witness coefficients, or NotMember up to the degree bound"""
    verdict: Verdict
    coefficients: Optional[List[Expr]] = None
    degree: int = 0

    def __bool__(self) -> bool:
        return self.verdict == Verdict.MEMBER

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {"verdict": self.verdict.value, "degree": self.degree}
        if self.coefficients is not None:
            result["coefficients"] = [to_source(c) for c in self.coefficients]
        else:
            result["note"] = f"not a member up to degree {self.degree}"
        return result


@dataclass
class InvolutivityResult:
    verdict: Verdict
    witness: Optional[VectorField] = None
    pair: Optional[Tuple[int, int]] = None
    degree_bound: int = DEGREE_BOUND

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {"verdict": self.verdict.value, "degree_bound": self.degree_bound}
        if self.witness is not None:
            result["witness"] = self.witness.to_source()
            result["pair"] = list(self.pair)
        return result


@dataclass
class FiberReport:
    """Dimensions of F_x, T_xL and g_x at a point"""
    point: Tuple[Fraction, ...]
    dim_Fx: int
    dim_TxL: int
    dim_gx: int
    degree_bound: int

    def __post_init__(self):
        if not (0 <= self.dim_TxL <= self.dim_Fx and self.dim_TxL <= len(self.point)):
            raise ValueError(f"Inconsistent fiber dimensions {self.dim_Fx}, {self.dim_TxL} at {self.point}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "point": [_rational_text(c) for c in self.point],
            "dim_Fx": self.dim_Fx,
            "dim_TxL": self.dim_TxL,
            "dim_gx": self.dim_gx,
            "degree_bound": self.degree_bound,
        }


@dataclass
class ProjectionResult:
    verdict: Verdict
    field: Optional[VectorField] = None
    component: Optional[int] = None

    def __bool__(self) -> bool:
        return self.verdict == Verdict.PROJECTS

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {"verdict": self.verdict.value}
        if self.field is not None:
            result["field"] = self.field.to_source()
        if self.component is not None:
            result["component"] = self.component
        return result


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X,Y]^i = Σ_j (X^j ∂_j Y^i − Y^j ∂_j X^i)"""
    if X.chart != Y.chart:
        raise ChartMismatchError(f"Bracket of fields on '{X.chart.name}' and '{Y.chart.name}'")
    return VectorField(X.chart, tuple(sympy.expand(X.apply(b) - Y.apply(a)) for a, b in zip(X.components, Y.components)))


def jacobian_matrix(f: SmoothMap) -> Tuple[Tuple[Expr, ...], ...]:
    """m×n matrix of partial derivatives"""
    return f.jacobian()


def check_submersion(f: MapLike, samples: int = SAMPLES, seed: int = SEED, points: Optional[np.ndarray] = None) -> np.ndarray:
    """Full row rank of the Jacobian at sampled points; returns the points"""
    if points is None:
        points = sample_box(f.source, samples, seed)
    jacobians = f.jacobian_at(points)
    ranks = batched_float_rank(jacobians)
    expected = f.target.dimension
    deficient = np.nonzero(ranks < expected)[0]
    if deficient.size:
        index = int(deficient[0])
        raise NotSubmersionError(f.name, points[index], int(ranks[index]), expected)
    return points


def _frame_rank_at(frame: Sequence[VectorField], points: np.ndarray) -> np.ndarray:
    if not frame:
        return np.zeros(points.shape[0], dtype=int)
    values = np.stack([X.evaluate(points) for X in frame], axis=2)
    return batched_float_rank(values)


def _annihilates(f: SmoothMap, X: VectorField) -> bool:
    jacobian = f.jacobian()
    for row in jacobian:
        value = sympy.expand(sum((a * b for a, b in zip(row, X.components)), sympy.Integer(0)))
        if not is_zero(value, f.source.symbols):
            return False
    return True


def _auto_kernel_frame(f: SmoothMap) -> List[VectorField]:
    """Kernel frame from a column block of the Jacobian with polynomial inverse action"""
    n, m = f.source.dimension, f.target.dimension
    jacobian = sympy.Matrix(f.jacobian())
    blocks = list(combinations(range(n), m))
    determinants = {S: sympy.factor(jacobian[:, list(S)].det()) for S in blocks}
    ordered = [S for S in blocks if determinants[S].is_number and determinants[S] != 0]
    ordered += [S for S in blocks if not determinants[S].is_number and determinants[S] != 0]
    for S in ordered:
        inverse = jacobian[:, list(S)].inv(method="LU")
        frame = []
        for j in range(n):
            if j in S:
                continue
            action = inverse * jacobian[:, j]
            components = [sympy.Integer(0)] * n
            components[j] = sympy.Integer(1)
            for position, index in enumerate(S):
                components[index] = sympy.cancel(-action[position])
            frame.append(components)
        if all(not sympy.denom(sympy.together(c)).free_symbols for row in frame for c in row):
            logger.debug(f"Kernel frame of {f.name} from columns {S}")
            return [VectorField(f.source, tuple(sympy.expand(c) for c in row)) for row in frame]
    raise CannotAutoComputeError(f"No Jacobian block of {f.name} has a polynomial inverse action")


def submersion_kernel_frame(
    f: SmoothMap,
    frame: Optional[Sequence[VectorField]] = None,
    samples: int = SAMPLES,
    seed: int = SEED,
) -> List[VectorField]:
    """Verified frame of ker df: the supplied one, or one derived from the Jacobian."""
    points = check_submersion(f, samples, seed)
    expected = f.source.dimension - f.target.dimension
    if frame is None:
        frame = _auto_kernel_frame(f)
    else:
        frame = list(frame)
        for index, X in enumerate(frame):
            if X.chart != f.source:
                raise ChartMismatchError(f"Frame field {index} is not on the source chart of {f.name}")
            if not _annihilates(f, X):
                raise FrameInvalidError(f"d{f.name} does not annihilate frame field {index}: {X}")
    if len(frame) != expected:
        raise FrameInvalidError(f"Kernel frame of {f.name} has {len(frame)} fields, expected {expected}")
    ranks = _frame_rank_at(frame, points)
    deficient = np.nonzero(ranks < expected)[0]
    if deficient.size:
        raise FrameInvalidError(f"Kernel frame of {f.name} drops rank at {tuple(points[int(deficient[0])])}")
    return frame


def _require_polynomial_fields(fields: Sequence[VectorField]) -> List[List[Poly]]:
    return [X.poly_vector() for X in fields]


def module_membership(X: VectorField, mod: VfModule) -> MembershipResult:
    """Decide X = Σ g_i X_i with polynomial g_i of degree <= D"""
    if X.chart != mod.chart:
        raise ChartMismatchError(f"Field on '{X.chart.name}', module on '{mod.chart.name}'")
    target = X.poly_vector()
    vectors = _require_polynomial_fields(mod.generators)
    coefficients, degree = solve_combination_bounded(vectors, target, mod.chart.dimension, mod.degree_bound)
    if coefficients is None:
        return MembershipResult(Verdict.NOT_MEMBER, None, mod.degree_bound)
    return MembershipResult(
        Verdict.MEMBER,
        [expr_from_terms(g, mod.chart.symbols) for g in coefficients],
        degree,
    )


def involutivity_check(mod: VfModule) -> InvolutivityResult:
    """Every bracket of generators must be a member of the module"""
    for i in range(mod.rank):
        for j in range(i + 1, mod.rank):
            bracket = lie_bracket(mod.generators[i], mod.generators[j])
            if bracket.is_zero():
                continue
            if not module_membership(bracket, mod):
                logger.info(f"Bracket of generators {i} and {j} is not in the module: {bracket}")
                return InvolutivityResult(Verdict.NOT_INVOLUTIVE, bracket, (i, j), mod.degree_bound)
    return InvolutivityResult(Verdict.INVOLUTIVE, degree_bound=mod.degree_bound)


def rational_point(point: Point, dimension: int) -> Tuple[Fraction, ...]:
    if len(point) != dimension:
        raise DimensionMismatchError(f"Point {tuple(point)} is not {dimension}-dimensional")
    return tuple(parse_rational(c) for c in point)


def values_at(vectors: Sequence[Sequence[Poly]], point: Sequence[Fraction]) -> List[List[Fraction]]:
    """Row k, column i: component k of vector i at the point"""
    if not vectors:
        return []
    return [[evaluate_poly(v[k], point) for v in vectors] for k in range(len(vectors[0]))]


def syzygies(vectors: Sequence[VectorField], degree_bound: int = DEGREE_BOUND) -> List[List[Expr]]:
    """Module generators of polynomial relations Σ g_i v_i = 0, up to the degree bound"""
    if not vectors:
        return []
    chart = vectors[0].chart
    relations = syzygy_module(_require_polynomial_fields(vectors), chart.dimension, degree_bound)
    return [[expr_from_terms(g, chart.symbols) for g in relation] for relation in relations]


def relation_space_at(
    vectors: Sequence[Sequence[Poly]],
    nvars: int,
    point: Sequence[Fraction],
    degree_bound: int,
    stop_at: Optional[int] = None,
) -> int:
    """dim {c : Σ c_i v_i ∈ I_x · <v>} = dim of relation values at x"""
    rank, _ = relation_rank_at(vectors, nvars, point, degree_bound, stop_at)
    return rank


def fiber_data(mod: VfModule, x: Point) -> FiberReport:
    """Fiber dimensions of the module at a rational point"""
    point = rational_point(x, mod.chart.dimension)
    vectors = _require_polynomial_fields(mod.generators)
    dim_TxL = exact_rank(values_at(vectors, point)) if vectors else 0
    relations = relation_space_at(vectors, mod.chart.dimension, point, mod.degree_bound, mod.rank - dim_TxL)
    dim_Fx = mod.rank - relations
    return FiberReport(point, dim_Fx, dim_TxL, dim_Fx - dim_TxL, mod.degree_bound)


def _power_product(components: Sequence[Poly], beta: Tuple[int, ...], cache: Dict[Tuple[int, ...], Poly]) -> Poly:
    if sum(beta) == 0:
        nvars = _nvars_of(components)
        return {tuple([0] * nvars): Fraction(1)}
    index = next(i for i, b in enumerate(beta) if b)
    smaller = list(beta)
    smaller[index] -= 1
    smaller = tuple(smaller)
    base = cache.get(smaller)
    if base is None:
        base = _power_product(components, smaller, cache)
        cache[smaller] = base
    return poly_mul(base, components[index])


def _nvars_of(components: Sequence[Poly]) -> int:
    for component in components:
        for monom in component:
            return len(monom)
    return 0


def pullback_solve(p: Poly, components: Sequence[Poly], target_dim: int, degree: int) -> Optional[Poly]:
    """Polynomial q of degree <= degree in the target variables with q∘f = p, or None"""
    if not p:
        return {}
    cache: Dict[Tuple[int, ...], Poly] = {}
    monomials = monomials_up_to(target_dim, degree)
    columns = []
    for beta in monomials:
        product = _power_product(components, beta, cache)
        cache[beta] = product
        columns.append(dict(product))
    solution = solve_linear(columns, dict(p))
    if solution is None:
        return None
    return {beta: value for beta, value in zip(monomials, solution) if value}


def projectable(X: VectorField, f: SmoothMap, degree_bound: int = DEGREE_BOUND) -> ProjectionResult:
    """Projects(Y) when every component of df∘X is a polynomial in the components of f"""
    if X.chart != f.source:
        raise ChartMismatchError(f"Field on '{X.chart.name}', map from '{f.source.name}'")
    gens = f.source.symbols
    map_terms = [polynomial_terms(c, gens) for c in f.components]
    map_degree = max((poly_degree(p) for p in map_terms), default=0)
    pushed = []
    for row in f.jacobian():
        value = sympy.expand(sum((a * b for a, b in zip(row, X.components)), sympy.Integer(0)))
        pushed.append(polynomial_terms(value, gens))
    result_components = []
    for k, p in enumerate(pushed):
        if not p:
            result_components.append(sympy.Integer(0))
            continue
        q = None
        for degree in degree_schedule(degree_bound):
            q = pullback_solve(p, map_terms, f.target.dimension, degree)
            if q is not None:
                break
        if q is None:
            if poly_degree(p) > degree_bound * max(map_degree, 1):
                return ProjectionResult(Verdict.CANNOT_DECIDE, component=k)
            return ProjectionResult(Verdict.NOT_PROJECTABLE, component=k)
        result_components.append(expr_from_terms(q, f.target.symbols))
    return ProjectionResult(Verdict.PROJECTS, VectorField(f.target, tuple(result_components)))
