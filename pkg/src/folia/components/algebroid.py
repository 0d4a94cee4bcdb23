#!/usr/bin/env python3
"""
Lie algebroids over a chart.

An algebroid is given in a frame e_1..e_r by its anchor (column i is ρ(e_i))
and structure functions c_ij^k with [e_i, e_j] = Σ_k c_ij^k e_k. The kernel
module h_V is computed as the degree-bounded syzygy module of the anchor
columns; fiber dimensions reuse the relation solver of the charts module.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from folia.components.charts import (
    Chart,
    FiberReport,
    VectorField,
    VfModule,
    fiber_data,
    lie_bracket,
    rational_point,
    syzygies,
)
from folia.components.expr import (
    Expr,
    compile_exprs,
    eval_at,
    is_zero,
    parse_expr,
    polynomial_terms,
    to_source,
    to_sympy_rational,
)
from folia.config.configuration import DEGREE_BOUND
from folia.constants import Verdict
from folia.utils.errors import DimensionMismatchError, NonOrthonormalBasisError
from folia.utils.polynomial_system import exact_rank, relation_rank_at, solve_combination_bounded

logger = logging.getLogger(__name__)

Section = Tuple[Expr, ...]

# Gram deviation allowed after orthonormalizing the fiber basis
GRAM_TOL = 1e-8


@dataclass(frozen=True)
class Algebroid:
    """Anchor and structure functions of a Lie algebroid in a fixed frame"""
    name: str
    chart: Chart
    frame: Tuple[str, ...]
    anchor: Tuple[Tuple[Expr, ...], ...]                    # n × r, column i = ρ(e_i)
    structure: Tuple[Tuple[Tuple[Expr, ...], ...], ...]     # c[i][j][k]
    degree_bound: int = DEGREE_BOUND

    def __post_init__(self):
        n, r = self.chart.dimension, len(self.frame)
        if len(self.anchor) != n or any(len(row) != r for row in self.anchor):
            raise DimensionMismatchError(f"Anchor of {self.name} must be {n}×{r}")
        if len(self.structure) != r or any(len(row) != r or any(len(c) != r for c in row) for row in self.structure):
            raise DimensionMismatchError(f"Structure functions of {self.name} must be {r}×{r}×{r}")

    @property
    def rank(self) -> int:
        return len(self.frame)

    def anchor_fields(self) -> Tuple[VectorField, ...]:
        n = self.chart.dimension
        return tuple(VectorField(self.chart, tuple(self.anchor[k][i] for k in range(n))) for i in range(self.rank))

    def anchor_of(self, section: Sequence[Expr]) -> VectorField:
        """ρ(Σ f_i e_i) = Σ f_i ρ(e_i)"""
        self._check_section(section)
        components = []
        for row in self.anchor:
            components.append(sympy.expand(sum((f * a for f, a in zip(section, row)), sympy.Integer(0))))
        return VectorField(self.chart, tuple(components))

    def basis_section(self, index: int) -> Section:
        return tuple(sympy.Integer(1 if i == index else 0) for i in range(self.rank))

    def _check_section(self, section: Sequence[Expr]) -> None:
        if len(section) != self.rank:
            raise DimensionMismatchError(f"Section of {self.name} needs {self.rank} components, got {len(section)}")

    @classmethod
    def from_strings(
        cls,
        name: str,
        chart: Chart,
        frame: Sequence[str],
        anchor_columns: Sequence[Sequence[str]],
        brackets: Mapping[Tuple[str, str], Mapping[str, str]],
        degree_bound: int = DEGREE_BOUND,
    ) -> "Algebroid":
        """Anchor given column by column; brackets map a frame pair to its coefficients.

        Pairs that are not listed get the negated coefficients of the reversed
        pair, or zero.
        """
        frame = tuple(frame)
        r, n = len(frame), chart.dimension
        index = {e: i for i, e in enumerate(frame)}
        if len(anchor_columns) != r:
            raise DimensionMismatchError(f"{name} lists {len(anchor_columns)} anchor columns for {r} frame elements")
        columns = [[parse_expr(c, chart.variables) for c in column] for column in anchor_columns]
        if any(len(column) != n for column in columns):
            raise DimensionMismatchError(f"Anchor columns of {name} must have {n} components")
        anchor = tuple(tuple(columns[i][k] for i in range(r)) for k in range(n))
        zero = sympy.Integer(0)
        table = [[[zero] * r for _ in range(r)] for _ in range(r)]
        given = set()
        for (a, b), coefficients in brackets.items():
            i, j = index[a], index[b]
            for e, source in coefficients.items():
                table[i][j][index[e]] = parse_expr(str(source), chart.variables)
            given.add((i, j))
        for i, j in list(given):
            if (j, i) not in given:
                table[j][i] = [sympy.expand(-c) for c in table[i][j]]
        structure = tuple(tuple(tuple(c) for c in row) for row in table)
        return cls(name, chart, frame, anchor, structure, degree_bound)

    @classmethod
    def tangent(cls, chart: Chart, degree_bound: int = DEGREE_BOUND) -> "Algebroid":
        """TV with the coordinate frame"""
        n = chart.dimension
        anchor = tuple(tuple(sympy.Integer(1 if i == k else 0) for i in range(n)) for k in range(n))
        zero = sympy.Integer(0)
        structure = tuple(tuple(tuple(zero for _ in range(n)) for _ in range(n)) for _ in range(n))
        frame = tuple(f"d{v}" for v in chart.variables)
        return cls(f"T{chart.name}", chart, frame, anchor, structure, degree_bound)

    def to_dict(self) -> Dict[str, Any]:
        brackets = {}
        for i in range(self.rank):
            for j in range(i + 1, self.rank):
                coefficients = {self.frame[k]: to_source(c) for k, c in enumerate(self.structure[i][j]) if c != 0}
                if coefficients:
                    brackets[f"{self.frame[i]},{self.frame[j]}"] = coefficients
        return {
            "name": self.name,
            "chart": self.chart.to_dict(),
            "frame": list(self.frame),
            "anchor": [X.to_source() for X in self.anchor_fields()],
            "brackets": brackets,
            "degree_bound": self.degree_bound,
        }


def algebroid_bracket(A: Algebroid, sigma: Sequence[Expr], tau: Sequence[Expr]) -> Section:
    """[Σ f_i e_i, Σ g_j e_j] = Σ f_i g_j c_ij + ρ(σ)(g) − ρ(τ)(f)"""
    A._check_section(sigma)
    A._check_section(tau)
    r = A.rank
    anchor_sigma, anchor_tau = A.anchor_of(sigma), A.anchor_of(tau)
    result = []
    for k in range(r):
        value = anchor_sigma.apply(tau[k]) - anchor_tau.apply(sigma[k])
        for i in range(r):
            if sigma[i] == 0:
                continue
            for j in range(r):
                c = A.structure[i][j][k]
                if c != 0 and tau[j] != 0:
                    value += sigma[i] * tau[j] * c
        result.append(sympy.expand(value))
    return tuple(result)


@dataclass
class AlgebroidValidation:
    """Anchor compatibility, antisymmetry and Jacobi, each with its failures"""
    name: str
    verdict: Verdict
    failures: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "verdict": self.verdict.value, "failures": self.failures}


def validate_algebroid(A: Algebroid) -> AlgebroidValidation:
    gens = A.chart.symbols
    failures: List[Dict[str, Any]] = []
    fields = A.anchor_fields()
    frame = [A.basis_section(i) for i in range(A.rank)]
    for i in range(A.rank):
        for j in range(A.rank):
            if not all(is_zero(a + b, gens) for a, b in zip(A.structure[i][j], A.structure[j][i])):
                failures.append({"check": "antisymmetry", "pair": [A.frame[i], A.frame[j]]})
            if j <= i:
                continue
            expected = lie_bracket(fields[i], fields[j])
            actual = A.anchor_of(A.structure[i][j])
            if not (actual - expected).is_zero():
                failures.append({
                    "check": "anchor",
                    "pair": [A.frame[i], A.frame[j]],
                    "difference": (actual - expected).to_source(),
                })
    for i in range(A.rank):
        for j in range(i + 1, A.rank):
            for k in range(j + 1, A.rank):
                total = [sympy.Integer(0)] * A.rank
                for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
                    term = algebroid_bracket(A, algebroid_bracket(A, frame[a], frame[b]), frame[c])
                    total = [x + y for x, y in zip(total, term)]
                if not all(is_zero(v, gens) for v in total):
                    failures.append({
                        "check": "jacobi",
                        "triple": [A.frame[i], A.frame[j], A.frame[k]],
                        "value": [to_source(sympy.expand(v)) for v in total],
                    })
    verdict = Verdict.INVALID if failures else Verdict.VALID
    logger.info(f"{'✅' if not failures else '❌'} Algebroid {A.name}: {verdict.value}")
    return AlgebroidValidation(A.name, verdict, failures)


def induced_foliation(A: Algebroid) -> VfModule:
    """The module generated by the anchor columns"""
    return VfModule(A.chart, A.anchor_fields(), A.degree_bound)


# --- kernel module -------------------------------------------------------------

@dataclass
class HxDimensions:
    """Sequence and module-fiber dimensions of the isotropy kernel at a point"""
    point: Tuple[Fraction, ...]
    seq_dim: int
    module_fiber_dim: int
    dim_Fx: int
    dim_TxL: int
    rank: int

    @property
    def note(self) -> Optional[str]:
        if self.seq_dim != self.module_fiber_dim:
            return (
                f"sequence dimension {self.seq_dim} and module-fiber dimension "
                f"{self.module_fiber_dim} differ at this point"
            )
        return None

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {
            "point": [str(c) for c in self.point],
            "seq_dim": self.seq_dim,
            "module_fiber_dim": self.module_fiber_dim,
            "dim_Fx": self.dim_Fx,
            "dim_TxL": self.dim_TxL,
            "consistent": self.seq_dim + self.dim_Fx == self.rank,
        }
        if self.note:
            result["note"] = self.note
        return result


@dataclass
class KernelModuleReport:
    """Generators σ of h_V with ρ(σ) = 0, minimal up to the degree bound"""
    algebroid: str
    generators: List[Section]
    degree_bound: int
    table: List[HxDimensions] = field(default_factory=list)

    def polys(self, nvars_symbols) -> List[List[Dict]]:
        return [[polynomial_terms(c, nvars_symbols) for c in g] for g in self.generators]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algebroid": self.algebroid,
            "generators": [[to_source(c) for c in g] for g in self.generators],
            "degree_bound": self.degree_bound,
            "minimality": f"up to degree {self.degree_bound}",
            "table": [row.to_dict() for row in self.table],
        }


def _prune(vectors: List[List[Dict]], nvars: int, bound: int) -> List[int]:
    """Indices of generators that are not combinations of the others kept"""
    kept = list(range(len(vectors)))
    for index in reversed(range(len(vectors))):
        others = [vectors[i] for i in kept if i != index]
        if not others:
            continue
        coefficients, _ = solve_combination_bounded(others, vectors[index], nvars, bound)
        if coefficients is not None:
            kept.remove(index)
    return kept


def kernel_module(A: Algebroid, degree_bound: Optional[int] = None, points: Sequence[Sequence] = ()) -> KernelModuleReport:
    """Solve ρ(σ) = 0 degree by degree and prune to a minimal generating set"""
    bound = degree_bound or A.degree_bound
    gens = A.chart.symbols
    relations = syzygies(list(A.anchor_fields()), bound)
    vectors = [[polynomial_terms(c, gens) for c in relation] for relation in relations]
    kept = _prune(vectors, A.chart.dimension, bound)
    generators = [tuple(relations[i]) for i in kept]
    for sigma in generators:
        if not A.anchor_of(sigma).is_zero():
            raise ValueError(f"Kernel generator {sigma} is not annihilated by the anchor")
    report = KernelModuleReport(A.name, generators, bound)
    for x in points:
        report.table.append(hx_dimensions(A, x, report))
    logger.info(f"Kernel module of {A.name}: {len(generators)} generators up to degree {bound}")
    return report


def hx_dimensions(A: Algebroid, x: Sequence, kernel: Optional[KernelModuleReport] = None) -> HxDimensions:
    """seq_dim = r − dim F_x; module_fiber_dim from the relation space of the kernel generators"""
    kernel = kernel or kernel_module(A)
    fibers: FiberReport = fiber_data(induced_foliation(A), x)
    point = fibers.point
    vectors = kernel.polys(A.chart.symbols)
    count = len(vectors)
    relations, _ = relation_rank_at(vectors, A.chart.dimension, point, kernel.degree_bound, count)
    dims = HxDimensions(point, A.rank - fibers.dim_Fx, count - relations, fibers.dim_Fx, fibers.dim_TxL, A.rank)
    if dims.note:
        logger.info(f"⚠️ {A.name} at {tuple(str(c) for c in point)}: {dims.note}")
    return dims


@dataclass
class PointClass:
    verdict: Verdict
    dimensions: HxDimensions

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.verdict.value, **self.dimensions.to_dict()}


def classify_point(A: Algebroid, x: Sequence, kernel: Optional[KernelModuleReport] = None) -> PointClass:
    """InMA where the isotropy kernel does not vanish"""
    dims = hx_dimensions(A, x, kernel)
    return PointClass(Verdict.IN_MA if dims.seq_dim > 0 else Verdict.IN_MA_COMPLEMENT, dims)


def isotropy_bookkeeping(A: Algebroid, x: Sequence, kernel: Optional[KernelModuleReport] = None) -> Dict[str, Any]:
    """Dimensions in 0 → h_x → g^A_x → g_x → 0"""
    dims = hx_dimensions(A, x, kernel)
    dim_gA = A.rank - dims.dim_TxL
    dim_g = dims.dim_Fx - dims.dim_TxL
    return {
        "point": [str(c) for c in dims.point],
        "dim_hx": dims.seq_dim,
        "dim_gAx": dim_gA,
        "dim_gx": dim_g,
        "exact": dim_gA == dims.seq_dim + dim_g,
    }


# --- splittings ------------------------------------------------------------------

def _exact_values(section: Sequence[Expr], A: Algebroid, point: Sequence[Fraction]) -> List[Fraction]:
    return [Fraction(eval_at(c, point, A.chart.variables)) for c in section]


@dataclass
class Splitting:
    """Fixed-fiber trivialization A_x = σ(F_x) ⊕ h_x at a point.

    F_x is identified with the span of the frame elements mu; h_x with the
    values of the kernel sections nu. Tables are exact, in those bases.
    """
    algebroid: Algebroid
    point: Tuple[Fraction, ...]
    mu: Tuple[int, ...]
    nu: Tuple[Section, ...]
    basis: sympy.Matrix                # r × r, columns e_mu then ν(x)
    orthonormal: np.ndarray            # n × n, columns of ξ in μ-coordinates
    tangent_table: Tuple               # C[a][b][c]
    curvature: Tuple                   # R[a][b][k]
    h_table: Tuple                     # H[i][j][k]
    notes: List[str] = field(default_factory=list)

    def __post_init__(self):
        if self.basis.det() == 0:
            raise ValueError("Splitting basis is singular")
        inverse = self.basis.inv()
        if any(v != 0 for v in inverse[self.n:, :] * self.basis[:, :self.n]):
            raise ValueError("Splitting data is not a direct sum decomposition")
        self._inverse = np.array(inverse.tolist(), dtype=float)
        self._nu_values = compile_exprs([c for s in self.nu for c in s], self.algebroid.chart.symbols) if self.nu else None

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def k(self) -> int:
        return len(self.nu)

    @property
    def abelian(self) -> bool:
        return all(v == 0 for row in self.h_table for cell in row for v in cell)

    @property
    def patch(self) -> Optional[Chart]:
        if self.n == 0:
            return None
        return Chart(f"{self.algebroid.name}_leaf", tuple(f"s{i + 1}" for i in range(self.n)))

    @property
    def sigma_matrix(self) -> np.ndarray:
        """r × n: F_x coordinates (μ basis) into A_x"""
        return np.array(self.basis[:, :self.n].tolist(), dtype=float)

    @property
    def j_matrix(self) -> np.ndarray:
        """k × r: projection of A_x onto h_x along σ(F_x)"""
        return self._inverse[self.n:, :]

    def xi_fields(self) -> Tuple[VectorField, ...]:
        """ρ of the orthonormalized F_x basis"""
        anchors = self.algebroid.anchor_fields()
        result = []
        for column in self.orthonormal.T:
            nonzero = [(a, c) for a, c in enumerate(column) if abs(c) > 0]
            if len(nonzero) == 1 and nonzero[0][1] == 1.0:
                result.append(anchors[self.mu[nonzero[0][0]]])
                continue
            X = VectorField.zero(self.algebroid.chart)
            for a, c in nonzero:
                X = X + anchors[self.mu[a]].scaled(sympy.nsimplify(c))
            result.append(X)
        return tuple(result)

    def nu_at(self, points: np.ndarray) -> np.ndarray:
        """(N, r, k) values of the kernel sections"""
        points = np.atleast_2d(points)
        if self._nu_values is None:
            return np.zeros((points.shape[0], self.algebroid.rank, 0))
        return self._nu_values(points).reshape(-1, self.k, self.algebroid.rank).transpose(0, 2, 1)

    def frame_at(self, points: np.ndarray) -> np.ndarray:
        """(N, r, r): the μ frame vectors and the ν sections at the points"""
        points = np.atleast_2d(points)
        mu = np.repeat(self.sigma_matrix[None], points.shape[0], axis=0)
        return np.concatenate([mu, self.nu_at(points)], axis=2)

    def split_coordinates(self, base: np.ndarray, fiber: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Fiber vectors as (ξ-coordinates λ, h-coordinates) in the moving frame"""
        coordinates = np.linalg.solve(self.frame_at(base), np.atleast_2d(fiber)[..., None])[..., 0]
        lam = np.linalg.solve(self.orthonormal, coordinates[:, :self.n].T).T if self.n else coordinates[:, :0]
        return lam, coordinates[:, self.n:]

    def fiber_from(self, lam: np.ndarray, h: np.ndarray, base: np.ndarray) -> np.ndarray:
        """a = σ(Σ λ_i ξ_i) + Σ h_j ν_j(base)"""
        lam = np.atleast_2d(lam)
        a = lam @ self.orthonormal.T @ self.sigma_matrix.T
        if self.k:
            a = a + np.einsum("nrk,nk->nr", self.nu_at(base), np.atleast_2d(h))
        return a

    def to_dict(self) -> Dict[str, Any]:
        def table(values):
            return [[[str(v) for v in cell] for cell in row] for row in values]

        return {
            "point": [str(c) for c in self.point],
            "mu": [self.algebroid.frame[i] for i in self.mu],
            "nu": [[to_source(c) for c in s] for s in self.nu],
            "n": self.n,
            "k": self.k,
            "abelian": self.abelian,
            "tangent_table": table(self.tangent_table),
            "curvature": table(self.curvature),
            "h_table": table(self.h_table),
            "notes": self.notes,
        }


def _orthonormal_basis(n: int, inner_product: Optional[Sequence[Sequence[float]]]) -> np.ndarray:
    if inner_product is None:
        return np.eye(n)
    gram = np.asarray(inner_product, dtype=float)
    if gram.shape != (n, n) or not np.allclose(gram, gram.T):
        raise NonOrthonormalBasisError(f"Fiber inner product must be a symmetric {n}×{n} matrix")
    try:
        lower = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise NonOrthonormalBasisError("Fiber inner product is not positive definite")
    basis = np.linalg.inv(lower).T
    deviation = float(np.max(np.abs(basis.T @ gram @ basis - np.eye(n))))
    if deviation > GRAM_TOL:
        raise NonOrthonormalBasisError(f"Gram deviation {deviation:.3g} after orthonormalization")
    return basis


def leaf_splitting(
    A: Algebroid,
    x: Sequence,
    inner_product: Optional[Sequence[Sequence[float]]] = None,
    kernel: Optional[KernelModuleReport] = None,
) -> Splitting:
    """Choose ν (kernel sections independent at x) and μ (frame elements completing a basis)"""
    kernel = kernel or kernel_module(A)
    point = rational_point(x, A.chart.dimension)
    dims = hx_dimensions(A, point, kernel)
    r = A.rank

    nu: List[Section] = []
    columns: List[List[Fraction]] = []
    for sigma in kernel.generators:
        values = _exact_values(sigma, A, point)
        if exact_rank([list(row) for row in zip(*(columns + [values]))]) > len(columns):
            columns.append(values)
            nu.append(sigma)
    notes = []
    if len(nu) != dims.seq_dim:
        notes.append(f"kernel sections span {len(nu)} dimensions at x, the sequence dimension is {dims.seq_dim}")
    mu: List[int] = []
    for i in range(r):
        unit = [Fraction(int(i == j)) for j in range(r)]
        trial = [list(row) for row in zip(*([[Fraction(int(m == j)) for j in range(r)] for m in mu] + columns + [unit]))]
        if exact_rank(trial) > len(mu) + len(columns):
            mu.append(i)
    n = len(mu)
    if n != dims.dim_Fx:
        notes.append(f"{n} frame elements complete the basis, dim F_x is {dims.dim_Fx}")

    basis = sympy.Matrix(r, r, lambda row, col: 0)
    for col, i in enumerate(mu):
        basis[i, col] = 1
    for col, values in enumerate(columns):
        for row, value in enumerate(values):
            basis[row, n + col] = to_sympy_rational(value)
    inverse = basis.inv()

    def coordinates(section: Sequence[Expr]) -> List[sympy.Rational]:
        values = sympy.Matrix([to_sympy_rational(v) for v in _exact_values(section, A, point)])
        return list(inverse * values)

    k = len(nu)
    tangent_table = []
    curvature = []
    for a in range(n):
        c_row, r_row = [], []
        for b in range(n):
            coords = coordinates(A.structure[mu[a]][mu[b]])
            c_row.append(tuple(coords[:n]))
            r_row.append(tuple(-v for v in coords[n:]))
        tangent_table.append(tuple(c_row))
        curvature.append(tuple(r_row))
    h_table = []
    for i in range(k):
        row = []
        for j in range(k):
            coords = coordinates(algebroid_bracket(A, nu[i], nu[j]))
            if any(v != 0 for v in coords[:n]):
                notes.append(f"[ν{i + 1}, ν{j + 1}] has a component along σ(F_x)")
            row.append(tuple(coords[n:]))
        h_table.append(tuple(row))
    splitting = Splitting(
        A,
        point,
        tuple(mu),
        tuple(nu),
        basis,
        _orthonormal_basis(n, inner_product),
        tuple(tangent_table),
        tuple(curvature),
        tuple(h_table),
        notes,
    )
    logger.info(f"Splitting of {A.name} at {tuple(str(c) for c in point)}: n = {n}, k = {k}")
    return splitting


def _as_exprs(values: Sequence, length: int, label: str) -> Tuple[Expr, ...]:
    if len(values) != length:
        raise DimensionMismatchError(f"{label} needs {length} components, got {len(values)}")
    return tuple(sympy.sympify(v) for v in values)


def split_bracket(
    S: Splitting,
    X: Sequence,
    V: Sequence,
    Y: Sequence,
    W: Sequence,
) -> Tuple[Tuple[Expr, ...], Tuple[Expr, ...]]:
    """[X⊕V, Y⊕W] = [X,Y] ⊕ (X(W) − Y(V) + [V,W] − R(X,Y)) on the leaf patch"""
    if S.patch is None:
        raise DimensionMismatchError("The splitting has no F_x directions")
    X, Y = _as_exprs(X, S.n, "X"), _as_exprs(Y, S.n, "Y")
    V, W = _as_exprs(V, S.k, "V"), _as_exprs(W, S.k, "W")
    fx, fy = VectorField(S.patch, X), VectorField(S.patch, Y)
    tangent = lie_bracket(fx, fy).components
    vertical = []
    for k in range(S.k):
        value = fx.apply(W[k]) - fy.apply(V[k])
        for i in range(S.k):
            for j in range(S.k):
                value += V[i] * W[j] * S.h_table[i][j][k]
        for a in range(S.n):
            for b in range(S.n):
                value -= X[a] * Y[b] * S.curvature[a][b][k]
        vertical.append(sympy.expand(value))
    return tangent, tuple(vertical)
