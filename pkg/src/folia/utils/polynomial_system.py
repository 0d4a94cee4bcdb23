#!/usr/bin/env python3
"""
Exact linear algebra over polynomial coefficient spaces.

Polynomials are sparse term dictionaries {exponent tuple: Fraction}; polynomial
vectors are lists of them. Every exact decision in folia (module membership,
projectability, syzygies, relation spaces at a point) reduces to a linear system
whose unknowns are monomial coefficients. Those systems are solved by sparse
reduced row echelon form over QQ (sympy DomainMatrix); small ranks at points use
fraction-free elimination, float ranks use the SVD.
"""

import logging
from fractions import Fraction
from itertools import combinations_with_replacement
from math import gcd, lcm
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from folia.constants import RANK_RTOL

logger = logging.getLogger(__name__)

Monomial = Tuple[int, ...]
Poly = Dict[Monomial, Fraction]
PolyVector = List[Poly]
Column = Dict[Hashable, Fraction]


# --- polynomial arithmetic -------------------------------------------------

def monomials_of_degree(nvars: int, total: int) -> List[Monomial]:
    """Exponent tuples of exact total degree, in a fixed order"""
    result = []
    for combo in combinations_with_replacement(range(nvars), total):
        exponents = [0] * nvars
        for index in combo:
            exponents[index] += 1
        result.append(tuple(exponents))
    return result


def monomials_up_to(nvars: int, degree: int) -> List[Monomial]:
    result = []
    for total in range(degree + 1):
        result.extend(monomials_of_degree(nvars, total))
    return result


def add_monomials(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


def poly_degree(poly: Poly) -> int:
    """Total degree; -1 for the zero polynomial"""
    return max((sum(m) for m, c in poly.items() if c), default=-1)


def vector_degree(vector: Sequence[Poly]) -> int:
    return max((poly_degree(p) for p in vector), default=-1)


def poly_add(a: Poly, b: Poly, scale: Fraction = Fraction(1)) -> Poly:
    """a + scale*b"""
    result = dict(a)
    for monom, coeff in b.items():
        value = result.get(monom, Fraction(0)) + scale * coeff
        if value:
            result[monom] = value
        else:
            result.pop(monom, None)
    return result


def poly_mul(a: Poly, b: Poly) -> Poly:
    result: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            monom = add_monomials(ma, mb)
            value = result.get(monom, Fraction(0)) + ca * cb
            if value:
                result[monom] = value
            else:
                result.pop(monom, None)
    return result


def shift(poly: Poly, monom: Monomial, scale: Fraction = Fraction(1)) -> Poly:
    """scale * x^monom * poly"""
    return {add_monomials(m, monom): scale * c for m, c in poly.items() if c}


def evaluate_poly(poly: Poly, point: Sequence[Fraction]) -> Fraction:
    total = Fraction(0)
    for monom, coeff in poly.items():
        term = coeff
        for value, power in zip(point, monom):
            if power:
                term *= value ** power
        total += term
    return total


def combine(coefficients: Sequence[Poly], vectors: Sequence[Sequence[Poly]]) -> PolyVector:
    """Σ g_i v_i for polynomial coefficients g_i"""
    length = len(vectors[0]) if vectors else 0
    result: PolyVector = [{} for _ in range(length)]
    for g, vector in zip(coefficients, vectors):
        if not g:
            continue
        for k, component in enumerate(vector):
            result[k] = poly_add(result[k], poly_mul(g, component))
    return result


def is_zero_vector(vector: Sequence[Poly]) -> bool:
    return all(not any(p.values()) for p in vector)


# --- sparse exact solves ---------------------------------------------------

def _fraction(value) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


def _rows_of(matrix: DomainMatrix) -> Dict[int, Dict[int, Fraction]]:
    if hasattr(matrix, "to_dod"):
        dod = matrix.to_dod()
    else:
        dod = dict(matrix.to_sparse().rep)
    return {i: {j: _fraction(v) for j, v in row.items() if v} for i, row in dod.items()}


def _rref(entries: Dict[int, Dict[int, Fraction]], nrows: int, ncols: int):
    dod = {
        i: {j: QQ(v.numerator, v.denominator) for j, v in row.items() if v}
        for i, row in entries.items()
    }
    dod = {i: row for i, row in dod.items() if row}
    matrix = DomainMatrix(dod, (nrows, ncols), QQ)
    reduced, pivots = matrix.rref()
    return _rows_of(reduced), tuple(pivots)


def _assemble(columns: Sequence[Column], target: Optional[Column] = None):
    """Row-index the keys of the columns (and target) into a sparse matrix"""
    row_index: Dict[Hashable, int] = {}
    entries: Dict[int, Dict[int, Fraction]] = {}
    for j, column in enumerate(columns):
        for key, value in column.items():
            if not value:
                continue
            i = row_index.setdefault(key, len(row_index))
            entries.setdefault(i, {})[j] = value
    if target is not None:
        j = len(columns)
        for key, value in target.items():
            if not value:
                continue
            i = row_index.setdefault(key, len(row_index))
            entries.setdefault(i, {})[j] = value
    return entries, len(row_index)


def solve_linear(columns: Sequence[Column], target: Column) -> Optional[List[Fraction]]:
    """Coefficients c with Σ c_j column_j = target, free variables set to 0; None if inconsistent."""
    ncols = len(columns)
    if not any(target.values()):
        return [Fraction(0)] * ncols
    entries, nrows = _assemble(columns, target)
    reduced, pivots = _rref(entries, nrows, ncols + 1)
    if ncols in pivots:
        return None
    solution = [Fraction(0)] * ncols
    for r, p in enumerate(pivots):
        row = reduced.get(r, {})
        solution[p] = row.get(ncols, Fraction(0)) / row[p]
    return solution


def nullspace_linear(columns: Sequence[Column]) -> List[Dict[int, Fraction]]:
    """Basis of {c : Σ c_j column_j = 0} as sparse coefficient dictionaries"""
    ncols = len(columns)
    if ncols == 0:
        return []
    entries, nrows = _assemble(columns)
    if nrows == 0:
        return [{j: Fraction(1)} for j in range(ncols)]
    reduced, pivots = _rref(entries, nrows, ncols)
    pivot_set = set(pivots)
    basis = []
    for free in range(ncols):
        if free in pivot_set:
            continue
        vector = {free: Fraction(1)}
        for r, p in enumerate(pivots):
            row = reduced.get(r, {})
            value = row.get(free)
            if value:
                vector[p] = -value / row[p]
        basis.append(vector)
    return basis


# --- polynomial combinations ------------------------------------------------

def degree_schedule(bound: int) -> List[int]:
    """Iterative-deepening degrees 0, 1, 2, 4, ... ending at the bound"""
    schedule = [0]
    degree = 1
    while degree < bound:
        schedule.append(degree)
        degree *= 2
    if bound > 0:
        schedule.append(bound)
    return schedule


def _combination_columns(vectors: Sequence[Sequence[Poly]], nvars: int, degree: int):
    labels: List[Tuple[int, Monomial]] = []
    columns: List[Column] = []
    monomials = monomials_up_to(nvars, degree)
    for i, vector in enumerate(vectors):
        for alpha in monomials:
            column: Column = {}
            for k, component in enumerate(vector):
                for beta, coeff in component.items():
                    key = (k, add_monomials(alpha, beta))
                    column[key] = column.get(key, Fraction(0)) + coeff
            labels.append((i, alpha))
            columns.append(column)
    return labels, columns


def _coefficients_from(labels, values: Dict[int, Fraction], count: int) -> List[Poly]:
    coefficients: List[Poly] = [{} for _ in range(count)]
    for j, value in values.items():
        if value:
            i, alpha = labels[j]
            coefficients[i][alpha] = value
    return coefficients


def solve_combination(
    vectors: Sequence[Sequence[Poly]], target: Sequence[Poly], nvars: int, degree: int
) -> Optional[List[Poly]]:
    """Polynomial g_i of degree <= degree with Σ g_i v_i = target, or None"""
    labels, columns = _combination_columns(vectors, nvars, degree)
    rhs: Column = {}
    for k, component in enumerate(target):
        for monom, coeff in component.items():
            if coeff:
                rhs[(k, monom)] = coeff
    solution = solve_linear(columns, rhs)
    if solution is None:
        return None
    return _coefficients_from(labels, dict(enumerate(solution)), len(vectors))


def solve_combination_bounded(
    vectors: Sequence[Sequence[Poly]], target: Sequence[Poly], nvars: int, bound: int
) -> Tuple[Optional[List[Poly]], int]:
    """Iterative deepening up to the bound; returns (coefficients or None, degree reached)"""
    if is_zero_vector(target):
        return [{} for _ in vectors], 0
    degree = 0
    for degree in degree_schedule(bound):
        solution = solve_combination(vectors, target, nvars, degree)
        if solution is not None:
            logger.debug(f"Combination found at degree {degree}")
            return solution, degree
    return None, degree


def syzygy_basis(vectors: Sequence[Sequence[Poly]], nvars: int, degree: int) -> List[List[Poly]]:
    """Vector-space basis of relations (g_1..g_m), deg g_i <= degree, with Σ g_i v_i = 0"""
    if not vectors:
        return []
    labels, columns = _combination_columns(vectors, nvars, degree)
    return [_coefficients_from(labels, vector, len(vectors)) for vector in nullspace_linear(columns)]


class Echelon:
    """Incrementally maintained reduced row echelon form of sparse rational vectors"""

    def __init__(self):
        self.rows: Dict[Hashable, Dict[Hashable, Fraction]] = {}

    @property
    def rank(self) -> int:
        return len(self.rows)

    def reduce(self, vector: Dict[Hashable, Fraction]) -> Dict[Hashable, Fraction]:
        result = {k: v for k, v in vector.items() if v}
        for pivot in [k for k in result if k in self.rows]:
            factor = result.get(pivot)
            if not factor:
                continue
            for key, value in self.rows[pivot].items():
                updated = result.get(key, Fraction(0)) - factor * value
                if updated:
                    result[key] = updated
                else:
                    result.pop(key, None)
        return result

    def contains(self, vector: Dict[Hashable, Fraction]) -> bool:
        return not self.reduce(vector)

    def add(self, vector: Dict[Hashable, Fraction]) -> bool:
        """Insert a vector; False when it was already in the span"""
        residue = self.reduce(vector)
        if not residue:
            return False
        pivot = min(residue, key=repr)
        scale = residue[pivot]
        row = {k: v / scale for k, v in residue.items()}
        for other in self.rows.values():
            factor = other.get(pivot)
            if factor:
                for key, value in row.items():
                    updated = other.get(key, Fraction(0)) - factor * value
                    if updated:
                        other[key] = updated
                    else:
                        other.pop(key, None)
        self.rows[pivot] = row
        return True


def _flatten(vector: Sequence[Poly]) -> Dict[Hashable, Fraction]:
    return {(k, monom): coeff for k, component in enumerate(vector) for monom, coeff in component.items() if coeff}


def primitive(vector: Sequence[Poly]) -> PolyVector:
    """Scale to integer coefficients with gcd 1 and positive leading coefficient"""
    flat = _flatten(vector)
    if not flat:
        return [dict(p) for p in vector]
    denominator = lcm(*[c.denominator for c in flat.values()])
    numerators = [int(c * denominator) for c in flat.values()]
    divisor = gcd(*numerators)
    leading_key = min(flat, key=lambda key: (key[0], [-e for e in key[1]]))
    sign = 1 if flat[leading_key] > 0 else -1
    scale = Fraction(sign * denominator, int(divisor))
    return [{m: c * scale for m, c in component.items() if c} for component in vector]


def syzygy_module(vectors: Sequence[Sequence[Poly]], nvars: int, bound: int) -> List[List[Poly]]:
    """Minimal (up to the degree bound) generators of the module of relations among vectors.

    Relations are produced degree by degree; a relation is kept only when it is
    not a polynomial combination (within the bound) of those kept before.
    """
    if not vectors:
        return []
    span = Echelon()
    generators: List[List[Poly]] = []
    monomials = monomials_up_to(nvars, bound)
    for degree in range(bound + 1):
        for relation in syzygy_basis(vectors, nvars, degree):
            if span.contains(_flatten(relation)):
                continue
            relation = primitive(relation)
            generators.append(relation)
            room = bound - vector_degree(relation)
            for alpha in monomials:
                if sum(alpha) > room:
                    continue
                span.add(_flatten([shift(p, alpha) for p in relation]))
        logger.debug(f"Degree {degree}: {len(generators)} relation generators")
    return generators


def relation_rank_at(
    vectors: Sequence[Sequence[Poly]],
    nvars: int,
    point: Sequence[Fraction],
    bound: int,
    stop_at: Optional[int] = None,
) -> Tuple[int, int]:
    """Dimension of {s(x) : s relation of degree <= bound}; returns (rank, degree used).

    Deepening stops early once the rank reaches stop_at.
    """
    count = len(vectors)
    if count == 0:
        return 0, 0
    limit = count if stop_at is None else min(stop_at, count)
    if limit <= 0:
        return 0, 0
    rank = 0
    degree = 0
    for degree in degree_schedule(bound):
        span = Echelon()
        for relation in syzygy_basis(vectors, nvars, degree):
            values = {i: evaluate_poly(g, point) for i, g in enumerate(relation)}
            span.add(values)
            if span.rank >= limit:
                break
        rank = span.rank
        if rank >= limit:
            break
    return rank, degree


# --- dense ranks --------------------------------------------------------------

def exact_rank(matrix: Sequence[Sequence[Fraction]]) -> int:
    """Rank by fraction-free (Bareiss) elimination after clearing denominators"""
    rows = []
    for row in matrix:
        row = [Fraction(v) for v in row]
        scale = lcm(*[v.denominator for v in row]) if row else 1
        rows.append([int(v * scale) for v in row])
    if not rows or not rows[0]:
        return 0
    nrows, ncols = len(rows), len(rows[0])
    rank = 0
    previous = 1
    for col in range(ncols):
        if rank == nrows:
            break
        pivot = next((i for i in range(rank, nrows) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        head = rows[rank][col]
        for i in range(rank + 1, nrows):
            factor = rows[i][col]
            for j in range(col + 1, ncols):
                rows[i][j] = (head * rows[i][j] - factor * rows[rank][j]) // previous
            rows[i][col] = 0
        previous = head
        rank += 1
    return rank


def float_rank(matrix: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Numerical rank with singular-value threshold rtol * largest singular value"""
    array = np.atleast_2d(np.asarray(matrix, dtype=float))
    if array.size == 0:
        return 0
    singular = np.linalg.svd(array, compute_uv=False)
    if singular[0] == 0:
        return 0
    return int(np.sum(singular > rtol * singular[0]))


def batched_float_rank(stack: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Float ranks of a (N, a, b) stack of matrices"""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[1] == 0 or stack.shape[2] == 0:
        return np.zeros(stack.shape[0], dtype=int)
    singular = np.linalg.svd(stack, compute_uv=False)
    top = singular[:, :1]
    return np.sum((singular > rtol * top) & (top > 0), axis=1)


def float_nullspace(matrix: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical nullspace"""
    array = np.atleast_2d(np.asarray(matrix, dtype=float))
    ncols = array.shape[1]
    if array.size == 0:
        return np.eye(ncols)
    _, singular, vh = np.linalg.svd(array)
    rank = int(np.sum(singular > rtol * singular[0])) if singular.size and singular[0] > 0 else 0
    return vh[rank:].T.copy()


def span_residual(basis: np.ndarray, vectors: np.ndarray) -> float:
    """Largest distance of the columns of vectors from the column span of basis"""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.size == 0:
        return 0.0
    if basis.size == 0:
        return float(np.max(np.linalg.norm(vectors, axis=0)))
    coefficients, *_ = np.linalg.lstsq(basis, vectors, rcond=None)
    return float(np.max(np.linalg.norm(basis @ coefficients - vectors, axis=0)))
