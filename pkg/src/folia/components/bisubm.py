#!/usr/bin/env python3
"""
Bi-submersions: construction, the foliation route, bisections and inversion.

A bi-submersion is a chart U with submersions s: U → M and t: U → N whose
kernel frames generate a foliation. Maps are either symbolic (SmoothMap) or
numerically evaluated (flows of combined generators); the verification routes
use exact module algebra where the data is symbolic and sampled span checks
where it is not.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from folia.components.charts import (
    Chart,
    FiberReport,
    InvolutivityResult,
    SmoothMap,
    VectorField,
    VfModule,
    check_submersion,
    fiber_data,
    involutivity_check,
    module_membership,
    projectable,
    submersion_kernel_frame,
)
from folia.components.expr import is_zero, symbol
from folia.components.flows import FieldFamily, flow_combination
from folia.components.groups import GroupKind, GroupModel
from folia.config.configuration import (
    BALL_RADIUS,
    DEGREE_BOUND,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    SAMPLES,
    SEED,
    SWEEP_FLOW_STEP,
    TOLERANCE,
)
from folia.constants import Verdict
from folia.utils.errors import (
    BisectionInvalidError,
    ChartMismatchError,
    FlowEscapeError,
    FrameInvalidError,
    LeftDomainError,
    NotMinimalError,
)
from folia.utils.polynomial_system import batched_float_rank, float_nullspace, span_residual
from folia.utils.sampling import make_rng, sample_ball, sample_box

logger = logging.getLogger(__name__)

INVERSE_SUFFIX = "^-1"

# Largest order of a terminating Lie series for exp(Σ λ_i X_i)
LIE_SERIES_MAX_ORDER = 8

# Radius halvings before a flow escape is reported
MAX_RADIUS_HALVINGS = 6


# --- maps -------------------------------------------------------------------

@dataclass(frozen=True)
class FlowTargetMap:
    """t(y, λ, h) = exp(Σ λ_i X_i)(y), evaluated with RK4 flows"""
    name: str
    source: Chart
    target: Chart
    generators: Tuple[VectorField, ...]
    step: float = SWEEP_FLOW_STEP

    @cached_property
    def family(self) -> FieldFamily:
        return FieldFamily(self.generators)

    @property
    def argument_variables(self) -> Tuple[str, ...]:
        """Source variables the map actually depends on"""
        n, m = self.target.dimension, len(self.generators)
        return self.source.variables[: n + m]

    def _split(self, points: np.ndarray):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n, m = self.target.dimension, len(self.generators)
        return points[:, :n], points[:, n:n + m]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        y, lam = self._split(points)
        if not self.generators:
            return y.copy()
        return flow_combination(self.family, lam, y, step=self.step)

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        y, lam = self._split(points)
        n, m = self.target.dimension, len(self.generators)
        result = np.zeros((y.shape[0], n, self.source.dimension))
        if not self.generators:
            result[:, :, :n] = np.eye(n)
            return result
        _, jac_y, jac_lam = flow_combination(self.family, lam, y, step=self.step, with_jacobian=True)
        result[:, :, :n] = jac_y
        result[:, :, n:n + m] = jac_lam
        return result

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": "flow",
            "source": self.source.name,
            "target": self.target.name,
            "generators": [X.to_source() for X in self.generators],
        }


@dataclass(frozen=True)
class StackedMap:
    """u ↦ (f_1(u), ..., f_k(u))"""
    name: str
    maps: Tuple[Any, ...]

    @property
    def source(self) -> Chart:
        return self.maps[0].source

    @property
    def target(self) -> Chart:
        variables = tuple(f"{v}_{i}" for i, f in enumerate(self.maps) for v in f.target.variables)
        return Chart(self.name, variables)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.hstack([f.evaluate(points) for f in self.maps])

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        return np.concatenate([f.jacobian_at(points) for f in self.maps], axis=1)


@dataclass(frozen=True)
class ComposedMap:
    """outer ∘ inner"""
    name: str
    outer: Any
    inner: Any

    @property
    def source(self) -> Chart:
        return self.inner.source

    @property
    def target(self) -> Chart:
        return self.outer.target

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.outer.evaluate(self.inner.evaluate(points))

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self.outer.jacobian_at(self.inner.evaluate(points)) @ self.inner.jacobian_at(points)


@dataclass(frozen=True)
class NumericInverse:
    """Local inverse of a map between equal-dimensional charts by Newton iteration"""
    name: str
    inner: Any
    tol: float = NEWTON_TOL
    max_iter: int = NEWTON_MAX_ITER

    @property
    def source(self) -> Chart:
        return self.inner.target

    @property
    def target(self) -> Chart:
        return self.inner.source

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        w = points.copy()
        for _ in range(self.max_iter):
            residual = self.inner.evaluate(w) - points
            if np.max(np.abs(residual)) <= self.tol:
                break
            w = w - np.linalg.solve(self.inner.jacobian_at(w), residual[..., None])[..., 0]
        return w

    def jacobian_at(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.inner.jacobian_at(self.evaluate(points)))


# --- fiber moves ------------------------------------------------------------

@dataclass(frozen=True)
class FrameFlowMoves:
    """α_ξ, β_η as time-1 flows of frame combinations; candidate middle by the flow recipe"""
    kernel_s: Tuple[VectorField, ...]
    kernel_t: Tuple[VectorField, ...]
    step: float = SWEEP_FLOW_STEP

    @property
    def s_dim(self) -> int:
        return len(self.kernel_s)

    @property
    def t_dim(self) -> int:
        return len(self.kernel_t)

    @cached_property
    def _families(self):
        s_family = FieldFamily(self.kernel_s) if self.kernel_s else None
        t_family = FieldFamily(self.kernel_t) if self.kernel_t else None
        both = FieldFamily(self.kernel_s + self.kernel_t) if self.kernel_s + self.kernel_t else None
        return s_family, t_family, both

    def s_move(self, xi: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self._flow(self._families[0], xi, u)

    def t_move(self, eta: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self._flow(self._families[1], eta, u)

    def _flow(self, family, coefficients, points):
        if family is None:
            return np.array(points, dtype=float, copy=True)
        return flow_combination(family, coefficients, points, step=self.step)

    def candidate(self, xi, u, eta, first, last) -> Optional[np.ndarray]:
        """z = φ^{Σξ_i X_i + Ση_j Y_j}_1(u)"""
        return self._flow(self._families[2], np.hstack([xi, eta]), u)


@dataclass(frozen=True)
class PathHolonomyMoves:
    """Fiber moves of U = V × B^m (× H) with s = projection, t = exp(Σ λ_i X_i)"""
    dimension: int
    generators: Tuple[VectorField, ...]
    group_model: Optional[GroupModel] = None
    step: float = SWEEP_FLOW_STEP

    @property
    def m(self) -> int:
        return len(self.generators)

    @property
    def k(self) -> int:
        return self.group_model.dimension if self.group_model is not None else 0

    @property
    def s_dim(self) -> int:
        return self.m + self.k

    @property
    def t_dim(self) -> int:
        return self.m + self.k

    @cached_property
    def family(self) -> Optional[FieldFamily]:
        return FieldFamily(self.generators) if self.generators else None

    def _split(self, u: np.ndarray):
        n, m = self.dimension, self.m
        return u[:, :n], u[:, n:n + m], u[:, n + m:]

    def s_move(self, xi: np.ndarray, u: np.ndarray) -> np.ndarray:
        y, lam, h = self._split(np.atleast_2d(u))
        return np.hstack([y, lam + xi[:, :self.m], h + xi[:, self.m:]])

    def t_move(self, eta: np.ndarray, u: np.ndarray) -> np.ndarray:
        """y' = exp(-(λ+η)X) exp(λX) y, λ' = λ + η"""
        y, lam, h = self._split(np.atleast_2d(u))
        moved = lam + eta[:, :self.m]
        if self.family is not None:
            image = flow_combination(self.family, lam, y, step=self.step)
            y = flow_combination(self.family, -moved, image, step=self.step)
        return np.hstack([y, moved, h + eta[:, self.m:]])

    def candidate(self, xi, u, eta, first, last) -> Optional[np.ndarray]:
        """(y3, λ1 - λ2 + λ3, h1 - h2 + h3)

        Only a middle point for commuting group coordinates; a non-abelian
        group model gets no candidate and the middle is left to Newton.
        """
        if self.group_model is not None and self.group_model.kind != GroupKind.ABELIAN:
            return None
        y1, lam1, h1 = self._split(first)
        y2, lam2, h2 = self._split(np.atleast_2d(u))
        y3, lam3, h3 = self._split(last)
        return np.hstack([y3, lam1 - lam2 + lam3, h1 - h2 + h3])


@dataclass(frozen=True)
class SwappedMoves:
    """Fiber moves of the inverse bi-submersion"""
    inner: Any

    @property
    def s_dim(self) -> int:
        return self.inner.t_dim

    @property
    def t_dim(self) -> int:
        return self.inner.s_dim

    def s_move(self, xi, u):
        return self.inner.t_move(xi, u)

    def t_move(self, eta, u):
        return self.inner.s_move(eta, u)

    def candidate(self, xi, u, eta, first, last):
        return self.inner.candidate(eta, u, xi, last, first)


# --- bi-submersions ----------------------------------------------------------

@dataclass(frozen=True)
class BiSubmersion:
    """Chart U with submersions s: U → M, t: U → N and their kernel frames"""
    name: str
    chart: Chart
    s: Any
    t: Any
    kernel_s: Optional[Tuple[VectorField, ...]] = None
    kernel_t: Optional[Tuple[VectorField, ...]] = None
    degree_bound: int = DEGREE_BOUND
    seed: int = SEED
    pullback: Optional[VfModule] = None         # generators of the foliation on U
    source_module: Optional[VfModule] = None    # foliation on M
    target_module: Optional[VfModule] = None    # foliation on N
    moves: Optional[Any] = None
    base: Optional[Tuple[float, ...]] = None    # point of U the construction is centred at
    ball_radius: float = BALL_RADIUS
    flow_step: float = SWEEP_FLOW_STEP

    @property
    def symbolic_frames(self) -> bool:
        return self.kernel_s is not None and self.kernel_t is not None

    def fiber_moves(self):
        if self.moves is not None:
            return self.moves
        if not self.symbolic_frames:
            raise FrameInvalidError(f"Bi-submersion {self.name} has neither kernel frames nor fiber moves")
        return FrameFlowMoves(self.kernel_s, self.kernel_t, self.flow_step)

    def base_point(self, base: Optional[Sequence[float]] = None) -> np.ndarray:
        if base is not None:
            point = np.asarray([float(c) for c in base])
        elif self.base is not None:
            point = np.asarray(self.base, dtype=float)
        else:
            low, high = self.chart.bounds()
            point = np.where(np.isfinite(low) & np.isfinite(high), (low + high) / 2, 0.0)
        if point.shape != (self.chart.dimension,):
            raise ChartMismatchError(f"Base point {tuple(point)} is not a point of {self.chart.name}")
        return point

    def sample_points(self, count: int, seed: Optional[int] = None) -> np.ndarray:
        seed = self.seed if seed is None else seed
        if self.base is not None:
            return sample_ball(self.base, self.ball_radius, count, make_rng(seed))
        return sample_box(self.chart, count, seed)

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {
            "name": self.name,
            "chart": self.chart.to_dict(),
            "s": _map_dict(self.s),
            "t": _map_dict(self.t),
            "degree_bound": self.degree_bound,
            "ball_radius": self.ball_radius,
        }
        if self.kernel_s is not None:
            result["kernel_s"] = [X.to_source() for X in self.kernel_s]
        if self.kernel_t is not None:
            result["kernel_t"] = [X.to_source() for X in self.kernel_t]
        return result


def _map_dict(f) -> Dict[str, Any]:
    if hasattr(f, "to_dict"):
        return f.to_dict()
    return {"name": f.name, "source": f.source.name, "target": f.target.name}


def make_bisubmersion(
    name: str,
    chart: Chart,
    s,
    t,
    kernel_s: Optional[Sequence[VectorField]] = None,
    kernel_t: Optional[Sequence[VectorField]] = None,
    degree_bound: int = DEGREE_BOUND,
    seed: int = SEED,
    samples: int = SAMPLES,
    **extra,
) -> BiSubmersion:
    """Check both submersions and verify (or derive) the symbolic kernel frames"""
    for label, f in (("s", s), ("t", t)):
        if f.source != chart:
            raise ChartMismatchError(f"{label} of {name} is not defined on {chart.name}")

    points = None
    if extra.get("base") is not None:
        points = sample_ball(extra["base"], extra.get("ball_radius", BALL_RADIUS), samples, make_rng(seed))

    def frame_for(f, supplied):
        if isinstance(f, SmoothMap):
            return tuple(submersion_kernel_frame(f, supplied, samples, seed))
        check_submersion(f, samples, seed, points)
        return tuple(supplied) if supplied is not None else None

    frame_s = frame_for(s, kernel_s)
    frame_t = frame_for(t, kernel_t)
    logger.info(f"✅ {name}: s and t are submersions at {samples} samples")
    return BiSubmersion(name, chart, s, t, frame_s, frame_t, degree_bound, seed, **extra)


def invert_bisubmersion(B: BiSubmersion) -> BiSubmersion:
    """(U, t, s): swaps the maps, the frames, the modules and the fiber moves"""
    if isinstance(B.moves, SwappedMoves):
        moves = B.moves.inner
    elif B.moves is not None:
        moves = SwappedMoves(B.moves)
    else:
        moves = None
    if B.name.endswith(INVERSE_SUFFIX):
        name = B.name[: -len(INVERSE_SUFFIX)]
    else:
        name = B.name + INVERSE_SUFFIX
    return replace(
        B,
        name=name,
        s=B.t,
        t=B.s,
        kernel_s=B.kernel_t,
        kernel_t=B.kernel_s,
        source_module=B.target_module,
        target_module=B.source_module,
        moves=moves,
    )


# --- path holonomy ------------------------------------------------------------

def _lift(X: VectorField, chart: Chart) -> VectorField:
    """Field on V seen on V × B (zero along the extra coordinates)"""
    padding = (sympy.Integer(0),) * (chart.dimension - X.chart.dimension)
    return VectorField(chart, X.components + padding)


def _lie_series_target(chart: Chart, n: int, generators: Sequence[VectorField], lam: Sequence[sympy.Symbol]) -> Optional[Tuple]:
    """exp(Σ λ_i X_i) on the first n coordinate functions, when the Lie series terminates"""
    combined = VectorField.zero(chart)
    for coefficient, X in zip(lam, generators):
        combined = combined + _lift(X, chart).scaled(coefficient)
    components = []
    for k in range(n):
        term = chart.symbols[k]
        total = term
        for order in range(1, LIE_SERIES_MAX_ORDER + 1):
            term = sympy.expand(combined.apply(term) / order)
            if is_zero(term, chart.symbols):
                break
            total = total + term
        else:
            return None
        components.append(sympy.expand(total))
    return tuple(components)


def _extra_variables(base: Chart, prefix: str, count: int) -> Tuple[str, ...]:
    names = tuple(f"{prefix}{i + 1}" for i in range(count))
    clash = set(names) & set(base.variables)
    if clash:
        raise ValueError(f"Chart '{base.name}' already uses the names {sorted(clash)}")
    return names


def _shrink_radius(evaluate, base: np.ndarray, radius: float, samples: int, seed: int) -> float:
    """Halve the radius until every sampled evaluation stays in the domain"""
    for _ in range(MAX_RADIUS_HALVINGS + 1):
        points = sample_ball(base, radius, samples, make_rng(seed))
        try:
            evaluate(points)
            return radius
        except LeftDomainError as exc:
            logger.info(f"⚠️ Flows left the domain at radius {radius}: {exc}")
            radius /= 2
    raise FlowEscapeError(f"Sampled flows leave the domain even at radius {radius * 2}")


def build_path_holonomy(
    mod: VfModule,
    x: Sequence,
    minimal: bool = False,
    generators: Optional[Sequence[VectorField]] = None,
    group_model: Optional[GroupModel] = None,
    name: Optional[str] = None,
    samples: int = SAMPLES,
    seed: int = SEED,
    radius: float = BALL_RADIUS,
    flow_step: float = SWEEP_FLOW_STEP,
) -> BiSubmersion:
    """U = V × B^m (× H), s = projection, t(y, λ) = exp(Σ λ_i X_i)(y).

    The flows use the given generators (default: those of the module); the
    foliation on U is always the pullback of the whole module.
    """
    V = mod.chart
    chosen = tuple(generators) if generators is not None else mod.generators
    m = len(chosen)
    report: Optional[FiberReport] = None
    if minimal:
        report = fiber_data(mod, x)
        if report.dim_Fx != m:
            raise NotMinimalError(
                f"{m} generators but dim F_x = {report.dim_Fx} at {tuple(report.point)}"
            )
    lam_names = _extra_variables(V, "lam", m)
    k = group_model.dimension if group_model is not None else 0
    h_names = _extra_variables(V, "h", k)
    box = None
    if V.box is not None:
        box = V.box + tuple((-1, 1) for _ in range(m + k))
    U = Chart(name or f"{V.name}_holonomy", V.variables + lam_names + h_names, box)
    lam = tuple(symbol(nm) for nm in lam_names)

    s = SmoothMap("s", U, V, U.symbols[: V.dimension])
    series = _lie_series_target(U, V.dimension, chosen, lam)
    if series is not None:
        t = SmoothMap("t", U, V, series)
        logger.info("Lie series of the generators terminates; t is symbolic")
    else:
        t = FlowTargetMap("t", U, V, chosen, flow_step)

    base = tuple(float(c) for c in x) + (0.0,) * (m + k)
    radius = _shrink_radius(t.evaluate, np.asarray(base), radius, samples, seed)

    kernel_s = tuple(VectorField.coordinate(U, V.dimension + i) for i in range(m + k))
    pullback = VfModule(U, tuple(_lift(X, U) for X in mod.generators) + kernel_s, mod.degree_bound)
    moves = PathHolonomyMoves(V.dimension, chosen, group_model, flow_step)
    B = make_bisubmersion(
        U.name,
        U,
        s,
        t,
        kernel_s=kernel_s,
        kernel_t=None,
        degree_bound=mod.degree_bound,
        seed=seed,
        samples=samples,
        pullback=pullback,
        source_module=mod,
        target_module=mod,
        moves=moves,
        base=base,
        ball_radius=radius,
        flow_step=flow_step,
    )
    return B


# --- foliation route ------------------------------------------------------------

@dataclass
class ProjectionCheck:
    """Projectability of one frame field under the other map"""
    side: str
    index: int
    verdict: Verdict
    projection: Optional[VectorField] = None
    residual: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {"side": self.side, "index": self.index, "verdict": self.verdict.value}
        if self.projection is not None:
            result["projection"] = self.projection.to_source()
        if self.residual is not None:
            result["residual"] = self.residual
        return result


@dataclass
class FoliationReport:
    """Result of checking Γ(ker ds) + Γ(ker dt) against the definition"""
    name: str
    verdict: Verdict
    involutivity: Optional[InvolutivityResult]
    projections: List[ProjectionCheck] = field(default_factory=list)
    numeric_residuals: Dict[str, float] = field(default_factory=dict)
    induced_source: List[List[str]] = field(default_factory=list)
    induced_target: List[List[str]] = field(default_factory=list)
    witness: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "involutivity": self.involutivity.to_dict() if self.involutivity else None,
            "projections": [p.to_dict() for p in self.projections],
            "numeric_residuals": self.numeric_residuals,
            "induced_source": self.induced_source,
            "induced_target": self.induced_target,
            "witness": self.witness,
            "notes": self.notes,
        }


def _kernel_vectors(f, frame: Optional[Sequence[VectorField]], points: np.ndarray) -> List[np.ndarray]:
    """Per-point kernel bases (columns), symbolic frame or SVD nullspace"""
    if frame is not None:
        if not frame:
            return [np.zeros((points.shape[1], 0)) for _ in points]
        values = np.stack([X.evaluate(points) for X in frame], axis=2)
        return list(values)
    return [float_nullspace(J) for J in f.jacobian_at(points)]


def _module_values(mod: VfModule, points: np.ndarray) -> np.ndarray:
    if not mod.generators:
        return np.zeros((points.shape[0], mod.chart.dimension, 0))
    return np.stack([X.evaluate(points) for X in mod.generators], axis=2)


def _numeric_projection_residual(kernels, other, module: VfModule, points: np.ndarray) -> float:
    """Largest distance of d(other)(kernel vectors) from the module span at the image"""
    jacobians = other.jacobian_at(points)
    spans = _module_values(module, other.evaluate(points))
    worst = 0.0
    for J, K, span in zip(jacobians, kernels, spans):
        if K.shape[1] == 0:
            continue
        worst = max(worst, span_residual(span, J @ K))
    return worst


def verify_foliation_bisubmersion(B: BiSubmersion, samples: int = SAMPLES, tol: float = TOLERANCE) -> FoliationReport:
    """Involutivity of ker ds + ker dt and projectability of each frame under the other map."""
    report = FoliationReport(B.name, Verdict.PASS, None)
    points = B.sample_points(samples)
    kernels_s = _kernel_vectors(B.s, B.kernel_s, points)
    kernels_t = _kernel_vectors(B.t, B.kernel_t, points)

    # (i) involutivity
    if B.symbolic_frames:
        module = VfModule(B.chart, tuple(B.kernel_s) + tuple(B.kernel_t), B.degree_bound)
    elif B.pullback is not None:
        module = B.pullback
        spans = _module_values(module, points)
        for label, kernels in (("ker ds", kernels_s), ("ker dt", kernels_t)):
            residual = max((span_residual(S, K) for S, K in zip(spans, kernels) if K.shape[1]), default=0.0)
            report.numeric_residuals[f"{label} in foliation"] = residual
            if residual > tol:
                report.verdict = Verdict.FAIL
                report.witness = report.witness or {"check": f"{label} in foliation", "residual": residual}
        combined = [np.hstack([a, b]) for a, b in zip(kernels_s, kernels_t)]
        residual = max((span_residual(C, S) for C, S in zip(combined, spans) if S.shape[1]), default=0.0)
        report.numeric_residuals["foliation in ker ds + ker dt"] = residual
        if residual > tol:
            report.verdict = Verdict.FAIL
            report.witness = report.witness or {"check": "foliation in ker ds + ker dt", "residual": residual}
    else:
        report.verdict = Verdict.INCONCLUSIVE
        report.notes.append("no symbolic frames and no foliation generators on U")
        return report
    report.involutivity = involutivity_check(module)
    if report.involutivity.verdict == Verdict.NOT_INVOLUTIVE:
        report.verdict = Verdict.FAIL
        report.witness = {
            "check": "involutivity",
            "bracket": report.involutivity.witness.to_source(),
            "pair": list(report.involutivity.pair),
        }

    # (ii) projectability of each frame under the other map
    sides = (
        ("ker ds", B.kernel_s, kernels_s, B.t, B.target_module, B.kernel_t, report.induced_target),
        ("ker dt", B.kernel_t, kernels_t, B.s, B.source_module, B.kernel_s, report.induced_source),
    )
    for side, frame, kernels, other, module, other_frame, induced in sides:
        if frame is not None and isinstance(other, SmoothMap):
            projectable_fields = []
            pending = []
            for index, X in enumerate(frame):
                result = projectable(X, other, B.degree_bound)
                check = ProjectionCheck(side, index, result.verdict, result.field)
                report.projections.append(check)
                if result.verdict == Verdict.PROJECTS:
                    projectable_fields.append(X)
                    if not result.field.is_zero():
                        induced.append(result.field.to_source())
                else:
                    pending.append(check)
            correction = VfModule(B.chart, tuple(projectable_fields) + tuple(other_frame or ()), B.degree_bound)
            for check in pending:
                if correction.generators and module_membership(frame[check.index], correction):
                    check.verdict = Verdict.PROJECTS
                    continue
                if check.verdict == Verdict.CANNOT_DECIDE and report.verdict == Verdict.PASS:
                    report.verdict = Verdict.INCONCLUSIVE
                elif check.verdict == Verdict.NOT_PROJECTABLE:
                    report.verdict = Verdict.FAIL
                    report.witness = report.witness or {
                        "check": "projectability",
                        "side": side,
                        "field": frame[check.index].to_source(),
                    }
        elif module is not None:
            residual = _numeric_projection_residual(kernels, other, module, points)
            report.projections.append(ProjectionCheck(side, -1, Verdict.PROJECTS if residual <= tol else Verdict.NOT_PROJECTABLE, residual=residual))
            report.numeric_residuals[f"{side} projects into foliation"] = residual
            induced.extend(X.to_source() for X in module.generators)
            if residual > tol:
                report.verdict = Verdict.FAIL
                report.witness = report.witness or {"check": "projectability", "side": side, "residual": residual}
        else:
            report.notes.append(f"projectability of {side} not checked: no symbolic map and no module")
    logger.info(f"{'✅' if report.verdict == Verdict.PASS else '❌'} {B.name}: foliation check {report.verdict.value}")
    return report


# --- bisections ----------------------------------------------------------------

@dataclass(frozen=True)
class Bisection:
    """b: open subset of M → U with s∘b = id"""
    name: str
    b: Any

    @property
    def domain(self) -> Chart:
        return self.b.source


@dataclass
class CarriedDiffeomorphism:
    """ϖ_β = t∘b with its sampled checks"""
    map: Any
    bisection: Bisection
    section_residual: float
    min_rank: int
    span_residual: Optional[float] = None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.map.evaluate(points)

    def to_dict(self) -> Dict[str, Any]:
        result: Dict[str, Any] = {
            "bisection": self.bisection.name,
            "section_residual": self.section_residual,
            "min_rank": self.min_rank,
            "span_residual": self.span_residual,
        }
        if isinstance(self.map, SmoothMap):
            result["map"] = self.map.to_dict()
        return result


def _compose(outer, inner, name: str):
    if isinstance(outer, SmoothMap) and isinstance(inner, SmoothMap):
        return SmoothMap(name, inner.source, outer.target, tuple(sympy.expand(c) for c in outer.substitute(inner.components)))
    return ComposedMap(name, outer, inner)


def bisection_carry(
    B: BiSubmersion,
    beta: Bisection,
    samples: int = SAMPLES,
    tol: float = TOLERANCE,
    points: Optional[np.ndarray] = None,
) -> CarriedDiffeomorphism:
    """ϖ_β = t∘b after checking s∘b = id and that t∘b is a local diffeomorphism"""
    if beta.b.target != B.chart:
        raise BisectionInvalidError(f"Bisection {beta.name} does not map into {B.chart.name}")
    if points is None:
        points = sample_box(beta.domain, samples, B.seed)
        if B.base is not None:
            center = np.asarray(B.base[: beta.domain.dimension])
            points = sample_ball(center, B.ball_radius, samples, make_rng(B.seed))
    section = _compose(B.s, beta.b, f"s∘{beta.name}")
    if isinstance(section, SmoothMap):
        identity = section.source.symbols
        exact = all(is_zero(c - v, identity) for c, v in zip(section.components, identity))
        section_residual = 0.0 if exact else float(np.max(np.abs(section.evaluate(points) - points)))
    else:
        section_residual = float(np.max(np.abs(section.evaluate(points) - points)))
    if section_residual > 1e-8:
        raise BisectionInvalidError(f"s∘b differs from the identity by {section_residual:.3g}")
    carried = _compose(B.t, beta.b, f"t∘{beta.name}")
    ranks = batched_float_rank(carried.jacobian_at(points))
    if np.any(ranks < beta.domain.dimension):
        index = int(np.argmin(ranks))
        raise BisectionInvalidError(f"t∘b is singular at {tuple(points[index])}")
    residual = None
    if B.source_module is not None and B.target_module is not None:
        kernels = list(_module_values(B.source_module, points))
        residual = _numeric_projection_residual(kernels, carried, B.target_module, points)
        if residual > tol:
            logger.warning(f"⚠️ ϖ_{beta.name} does not carry the foliation: residual {residual:.3g}")
    return CarriedDiffeomorphism(carried, beta, section_residual, int(np.min(ranks)), residual)


def inverse_bisection(B: BiSubmersion, beta: Bisection) -> Bisection:
    """Bisection of the inverse bi-submersion: b∘ϖ⁻¹, which carries ϖ⁻¹"""
    carried = _compose(B.t, beta.b, f"t∘{beta.name}")
    inverse = NumericInverse(f"({carried.name})^-1", carried)
    return Bisection(beta.name + INVERSE_SUFFIX, ComposedMap(beta.name + INVERSE_SUFFIX, beta.b, inverse))


def constant_bisection(B: BiSubmersion, values: Sequence, name: str = "beta") -> Bisection:
    """y ↦ (y, values) for bi-submersions whose s is the projection onto the first coordinates"""
    M = B.s.target
    extra = tuple(sympy.nsimplify(v) for v in values)
    if M.dimension + len(extra) != B.chart.dimension:
        raise BisectionInvalidError(f"Bisection {name} needs {B.chart.dimension - M.dimension} constant values")
    return Bisection(name, SmoothMap(name, M, B.chart, M.symbols + extra))
