#!/usr/bin/env python3
"""
Numerical flows of (time-dependent) vector fields.

Fixed-step classical RK4, vectorized over batches of points of shape (N, n).
Every step is checked against the chart box. Pushforwards use the variational
equation, and the flow-composition identities are checked by integrating both
sides independently.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy

from folia.components.charts import Chart, VectorField
from folia.components.expr import TIME, Expr, compile_exprs, differentiate, to_source
from folia.config.configuration import COMPOSITION_STEPS, FLOW_STEP, SWEEP_FLOW_STEP
from folia.constants import ACCEL_STEP, Z0_TOL, Verdict
from folia.utils.errors import (
    ChartMismatchError,
    LeftDomainError,
    PreconditionZ0Error,
    StepUnderflowError,
)

logger = logging.getLogger(__name__)

# Smallest accepted step and largest accepted step count
MIN_STEP = 1e-12
MAX_STEPS = 10_000_000

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FlowSpec:
    """RK4 step size and integration horizon [t0, t1]"""
    step: float = FLOW_STEP
    t0: float = 0.0
    t1: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise StepUnderflowError(f"Step size must be positive, got {self.step}")
        if self.t0 > self.t1:
            raise ValueError(f"Flow horizon must satisfy t0 <= t1, got [{self.t0}, {self.t1}]")


@dataclass(frozen=True)
class TimeDependentField:
    """Σ λ_i(t) X_i with coefficients univariate in t"""
    chart: Chart
    terms: Tuple[Tuple[Expr, VectorField], ...]

    def __post_init__(self):
        terms = tuple((sympy.sympify(c), X) for c, X in self.terms)
        if TIME.name in self.chart.variables:
            raise ValueError(f"Chart '{self.chart.name}' uses the reserved time variable '{TIME.name}'")
        for coefficient, X in terms:
            if X.chart != self.chart:
                raise ChartMismatchError(f"Term field on '{X.chart.name}' in a field on '{self.chart.name}'")
            if coefficient.free_symbols - {TIME}:
                raise ValueError(f"Coefficient {coefficient} is not a function of {TIME.name} alone")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def autonomous(cls, X: VectorField) -> "TimeDependentField":
        return cls(X.chart, ((sympy.Integer(1), X),))

    @property
    def components(self) -> Tuple[Expr, ...]:
        """Components as expressions in the chart variables and t"""
        total = [sympy.Integer(0)] * self.chart.dimension
        for coefficient, X in self.terms:
            for k, c in enumerate(X.components):
                total[k] = total[k] + coefficient * c
        return tuple(sympy.expand(c) for c in total)

    def at_time(self, t: float) -> VectorField:
        value = sympy.nsimplify(t) if isinstance(t, float) else t
        return VectorField(self.chart, tuple(c.xreplace({TIME: value}) for c in self.components))

    def time_derivative(self) -> "TimeDependentField":
        return TimeDependentField(self.chart, tuple((differentiate(c, TIME), X) for c, X in self.terms))

    def rhs(self) -> Rhs:
        """Batched right-hand side f(t, points)"""
        evaluate = compile_exprs(self.components, self.chart.symbols + (TIME,))

        def f(t: float, points: np.ndarray) -> np.ndarray:
            stacked = np.column_stack([points, np.full(points.shape[0], t)])
            return evaluate(stacked)

        return f

    def jacobian(self) -> Callable[[float, np.ndarray], np.ndarray]:
        """Batched spatial Jacobian (N, n, n) at time t"""
        n = self.chart.dimension
        symbols = self.chart.symbols
        entries = [differentiate(c, s) for c in self.components for s in symbols]
        evaluate = compile_exprs(entries, symbols + (TIME,))

        def jac(t: float, points: np.ndarray) -> np.ndarray:
            stacked = np.column_stack([points, np.full(points.shape[0], t)])
            return evaluate(stacked).reshape(-1, n, n)

        return jac

    def to_dict(self) -> Dict[str, Any]:
        return {
            "chart": self.chart.name,
            "terms": [{"coefficient": to_source(c), "field": X.to_source()} for c, X in self.terms],
        }


def _as_time_dependent(F) -> TimeDependentField:
    return F if isinstance(F, TimeDependentField) else TimeDependentField.autonomous(F)


def _step_count(span: float, step: float) -> int:
    if step < MIN_STEP:
        raise StepUnderflowError(f"Step size {step} is below {MIN_STEP}")
    count = max(1, int(np.ceil(abs(span) / step - 1e-9)))
    if count > MAX_STEPS:
        raise StepUnderflowError(f"Horizon {span} needs {count} steps of size {step}")
    return count


def _check_domain(points: np.ndarray, low: np.ndarray, high: np.ndarray, step: int) -> None:
    inside = np.all(np.isfinite(points) & (points >= low) & (points <= high), axis=1)
    if not inside.all():
        index = int(np.nonzero(~inside)[0][0])
        raise LeftDomainError(step, points[index])


def rk4(
    rhs: Rhs,
    points: np.ndarray,
    t0: float,
    t1: float,
    step: float,
    chart: Chart,
    trace: Optional[List[np.ndarray]] = None,
) -> np.ndarray:
    """Classical RK4 from t0 to t1 (either direction), step adjusted to land on t1"""
    y = np.array(points, dtype=float, copy=True)
    span = t1 - t0
    if span == 0:
        return y
    count = _step_count(span, step)
    h = span / count
    low, high = chart.bounds()
    if trace is not None:
        trace.append(y.copy())
    for k in range(count):
        t = t0 + k * h
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_domain(y, low, high, k + 1)
        if trace is not None:
            trace.append(y.copy())
    return y


def rk4_variational(
    rhs: Rhs,
    jac: Callable[[float, np.ndarray], np.ndarray],
    points: np.ndarray,
    t0: float,
    t1: float,
    step: float,
    chart: Chart,
    frame: Optional[np.ndarray] = None,
    forcing: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """RK4 of y' = f(t,y) together with K' = Df(t,y) K (+ forcing(t,y))"""
    y = np.array(points, dtype=float, copy=True)
    N, n = y.shape
    K = np.repeat(np.eye(n)[None], N, axis=0) if frame is None else np.array(frame, dtype=float, copy=True)
    span = t1 - t0
    if span == 0:
        return y, K
    count = _step_count(span, step)
    h = span / count
    low, high = chart.bounds()

    def derivative(t, y, K):
        dK = jac(t, y) @ K
        if forcing is not None:
            dK = dK + forcing(t, y)
        return rhs(t, y), dK

    for k in range(count):
        t = t0 + k * h
        a1, b1 = derivative(t, y, K)
        a2, b2 = derivative(t + h / 2, y + h / 2 * a1, K + h / 2 * b1)
        a3, b3 = derivative(t + h / 2, y + h / 2 * a2, K + h / 2 * b2)
        a4, b4 = derivative(t + h, y + h * a3, K + h * b3)
        y = y + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        K = K + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        _check_domain(y, low, high, k + 1)
    return y, K


def integrate_flow(F, p: Sequence[float], spec: FlowSpec = FlowSpec()) -> np.ndarray:
    """φ^F_{t1,t0}(p); p may be a single point or a batch (N, n)"""
    F = _as_time_dependent(F)
    array = np.asarray(p, dtype=float)
    single = array.ndim == 1
    result = rk4(F.rhs(), np.atleast_2d(array), spec.t0, spec.t1, spec.step, F.chart)
    return result[0] if single else result


def flow_trace(F, p: Sequence[float], spec: FlowSpec = FlowSpec()) -> Tuple[np.ndarray, np.ndarray]:
    """Times and points of the RK4 trajectory from a single point"""
    F = _as_time_dependent(F)
    trace: List[np.ndarray] = []
    rk4(F.rhs(), np.atleast_2d(np.asarray(p, dtype=float)), spec.t0, spec.t1, spec.step, F.chart, trace)
    points = np.array([state[0] for state in trace])
    times = np.linspace(spec.t0, spec.t1, len(points))
    return times, points


def flow(F, points: np.ndarray, t: float, step: float = FLOW_STEP, s: float = 0.0) -> np.ndarray:
    """Signed-time flow φ^F_{t,s} of a batch of points"""
    F = _as_time_dependent(F)
    return rk4(F.rhs(), np.atleast_2d(np.asarray(points, dtype=float)), s, t, step, F.chart)


def pushforward_field(X: VectorField, Y: VectorField, t: float, points: np.ndarray, step: float = FLOW_STEP) -> np.ndarray:
    """(φ^X_t)_*Y at the points: K⁻¹ Y(φ_{-t} q) with K = Dφ_{-t}(q)"""
    if X.chart != Y.chart:
        raise ChartMismatchError("Pushforward of fields on different charts")
    F = TimeDependentField.autonomous(X)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    origins, K = rk4_variational(F.rhs(), F.jacobian(), points, 0.0, -t, step, X.chart)
    values = Y.evaluate(origins)
    return np.linalg.solve(K, values[..., None])[..., 0]


class FieldFamily:
    """Compiled values and Jacobians of fields X_1..X_m on one chart"""

    def __init__(self, fields: Sequence[VectorField]):
        if not fields:
            raise ValueError("Field family needs at least one field")
        self.chart = fields[0].chart
        for X in fields:
            if X.chart != self.chart:
                raise ChartMismatchError("Field family spans several charts")
        self.fields = list(fields)
        symbols = self.chart.symbols
        self._values = compile_exprs([c for X in fields for c in X.components], symbols)
        self._jacobians = compile_exprs(
            [differentiate(c, s) for X in fields for c in X.components for s in symbols], symbols
        )

    @property
    def size(self) -> int:
        return len(self.fields)

    def values(self, points: np.ndarray) -> np.ndarray:
        """(N, n) -> (N, n, m): column i is X_i"""
        n = self.chart.dimension
        return self._values(np.atleast_2d(points)).reshape(-1, self.size, n).transpose(0, 2, 1)

    def jacobians(self, points: np.ndarray) -> np.ndarray:
        """(N, n) -> (N, m, n, n)"""
        n = self.chart.dimension
        return self._jacobians(np.atleast_2d(points)).reshape(-1, self.size, n, n)

    def combination(self, coefficients: np.ndarray, points: np.ndarray) -> np.ndarray:
        return np.einsum("nkm,nm->nk", self.values(points), coefficients)


def flow_combination(
    fields,
    coefficients: np.ndarray,
    points: np.ndarray,
    time: float = 1.0,
    step: float = FLOW_STEP,
    with_jacobian: bool = False,
):
    """Flows of the per-point combinations Σ c_i X_i for the given time.

    With with_jacobian, also returns the derivative of the endpoint with respect
    to the initial point (N, n, n) and to the coefficients (N, n, m).
    """
    family = fields if isinstance(fields, FieldFamily) else FieldFamily(fields)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
    n, m = family.chart.dimension, family.size

    def rhs(t, y):
        return family.combination(coefficients, y)

    if not with_jacobian:
        return rk4(rhs, points, 0.0, time, step, family.chart)

    def jac(t, y):
        return np.einsum("nmij,nm->nij", family.jacobians(y), coefficients)

    def forcing(t, y):
        result = np.zeros((y.shape[0], n, n + m))
        result[:, :, n:] = family.values(y)
        return result

    frame = np.zeros((points.shape[0], n, n + m))
    frame[:, :, :n] = np.eye(n)
    end, K = rk4_variational(rhs, jac, points, 0.0, time, step, family.chart, frame, forcing)
    return end, K[:, :, :n], K[:, :, n:]


def sum_flow_composed(
    X,
    Y,
    points: np.ndarray,
    t: float,
    s: float = 0.0,
    step: float = FLOW_STEP,
    outer_steps: int = COMPOSITION_STEPS,
    inner_step: float = SWEEP_FLOW_STEP,
) -> np.ndarray:
    """φ^{X+Y}_{t,s} computed as φ^X_{t,0} ∘ ψ_{t,s} ∘ φ^X_{0,s}.

    ψ is the flow of W_τ(r) = [Dφ^X_{τ,0}(r)]⁻¹ Y_τ(φ^X_{τ,0}(r)), integrated with
    outer_steps RK4 steps; each evaluation of W_τ runs the variational flow of X
    at inner_step, for the whole batch of points at once.
    """
    X = _as_time_dependent(X)
    Y = _as_time_dependent(Y)
    if X.chart != Y.chart:
        raise ChartMismatchError("Composition of flows on different charts")
    chart = X.chart
    x_rhs, x_jac, y_rhs = X.rhs(), X.jacobian(), Y.rhs()

    def inner_field(tau: float, r: np.ndarray) -> np.ndarray:
        moved, K = rk4_variational(x_rhs, x_jac, r, 0.0, tau, inner_step, chart)
        return np.linalg.solve(K, y_rhs(tau, moved)[..., None])[..., 0]

    points = np.atleast_2d(np.asarray(points, dtype=float))
    start = rk4(x_rhs, points, s, 0.0, step, chart)
    middle = rk4(inner_field, start, s, t, abs(t - s) / outer_steps if t != s else step, chart)
    return rk4(x_rhs, middle, 0.0, t, step, chart)


@dataclass
class CompositionResult:
    """Direct and composed evaluation of one flow identity"""
    lhs: np.ndarray
    rhs: np.ndarray
    residual: float
    tolerance: float = 1e-6
    verdict: Verdict = field(init=False)

    def __post_init__(self):
        self.verdict = Verdict.WITHIN_TOLERANCE if self.residual <= self.tolerance else Verdict.OUT_OF_TOLERANCE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lhs": np.asarray(self.lhs).tolist(),
            "rhs": np.asarray(self.rhs).tolist(),
            "residual": self.residual,
            "tolerance": self.tolerance,
            "verdict": self.verdict.value,
        }


def _residual(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(np.atleast_2d(a) - np.atleast_2d(b), axis=1)))


def flow_sum_compose(
    X: VectorField,
    Y: VectorField,
    p: Sequence[float],
    t: float,
    step: float = FLOW_STEP,
    tolerance: float = 1e-6,
) -> CompositionResult:
    """Direct RK4 of X+Y against φ^X_t ∘ (flow of the pushed-forward Y)"""
    points = np.atleast_2d(np.asarray(p, dtype=float))
    lhs = flow(X + Y, points, t, step)
    rhs = sum_flow_composed(X, Y, points, t, step=step)
    return CompositionResult(lhs, rhs, _residual(lhs, rhs), tolerance)


def middle_term(
    X: VectorField,
    Y: VectorField,
    u: Sequence[float],
    t: float,
    step: float = FLOW_STEP,
    tolerance: float = 1e-6,
) -> CompositionResult:
    """z = φ^{X+Y}_{-t}(u), directly and through the composed formula"""
    points = np.atleast_2d(np.asarray(u, dtype=float))
    direct = flow(X + Y, points, -t, step)
    composed = sum_flow_composed(X, Y, points, -t, step=step)
    return CompositionResult(direct, composed, _residual(direct, composed), tolerance)


@dataclass
class AccelerationReport:
    """Second difference of t ↦ exp_p(Z_t) against d/dt Z_t(p) at t = 0"""
    fd_accel: np.ndarray
    velocity: np.ndarray
    residual: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fd_accel": self.fd_accel.tolist(),
            "velocity": self.velocity.tolist(),
            "residual": self.residual,
        }


def accel_velocity_check(Z: TimeDependentField, p: Sequence[float], h: float = ACCEL_STEP, step: float = 1e-2) -> AccelerationReport:
    """Check d²/dt²|₀ exp_p(Z_t) = d/dt|₀ Z_t(p); requires Z_0(p) = 0.

    exp_p(Z_t) is the integral curve γ of the time-dependent field, γ(0) = p and
    γ'(t) = Z_t(γ(t)).
    """
    point = np.asarray(p, dtype=float)
    rhs = Z.rhs()
    if np.linalg.norm(rhs(0.0, point[None])[0]) > Z0_TOL:
        raise PreconditionZ0Error(f"Z_0 does not vanish at {tuple(point)}")

    def curve(tau: float) -> np.ndarray:
        return rk4(rhs, point[None], 0.0, tau, step, Z.chart)[0]

    def second_difference(width: float) -> np.ndarray:
        return (curve(width) - 2 * curve(0.0) + curve(-width)) / width ** 2

    coarse = second_difference(h)
    fine = second_difference(h / 2)
    accel = (4 * fine - coarse) / 3
    velocity = Z.time_derivative().rhs()(0.0, point[None])[0]
    return AccelerationReport(accel, velocity, float(np.linalg.norm(accel - velocity)))


def convergence_ratio(
    X: VectorField,
    p: Sequence[float],
    t: float,
    exact: np.ndarray,
    step: float,
) -> float:
    """Error ratio of RK4 at step and step/2 against a closed-form endpoint"""
    coarse = np.linalg.norm(flow(X, p, t, step)[0] - exact)
    fine = np.linalg.norm(flow(X, p, t, step / 2)[0] - exact)
    if fine == 0:
        return float("inf")
    return float(coarse / fine)
