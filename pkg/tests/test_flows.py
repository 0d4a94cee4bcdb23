"""RK4 flows, the flow-composition identities and the acceleration check."""

import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from folia.components.charts import Chart, VectorField
from folia.components.expr import TIME
from folia.components.flows import (
    FlowSpec,
    TimeDependentField,
    accel_velocity_check,
    convergence_ratio,
    flow,
    flow_sum_compose,
    flow_trace,
    integrate_flow,
    middle_term,
    pushforward_field,
)
from folia.constants import ACCEL_RESIDUAL_TOL, RK4_ORDER_RATIO_MIN, Verdict
from folia.utils.errors import LeftDomainError, PreconditionZ0Error, StepUnderflowError

small = st.fractions(min_value=-1, max_value=1, max_denominator=10)
times = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


def _linear_field(chart, a, b, c, d):
    x, y = chart.symbols
    return VectorField(chart, (sympy.Rational(a) * x + sympy.Rational(b) * y, sympy.Rational(c) * x + sympy.Rational(d) * y))


def _random_quadratic_field(chart, rng):
    x, y = chart.symbols
    monomials = (sympy.Integer(1), x, y, x * y, x ** 2, y ** 2)

    def component():
        return sum((sympy.Rational(f"{c:.2f}") * m for c, m in zip(rng.uniform(-1.0, 1.0, 6), monomials)), sympy.Integer(0))

    return VectorField(chart, (component(), component()))


def test_rotation_closes_after_full_turn(plane):
    X = VectorField.from_strings(plane, ["-y", "x"])
    end = flow(X, [1.0, 0.0], 2 * math.pi, step=1e-3)[0]
    assert np.allclose(end, [1.0, 0.0], atol=1e-6)


def test_rotation_matches_closed_form(plane):
    X = VectorField.from_strings(plane, ["-y", "x"])
    end = flow(X, [[1.0, 0.0], [0.0, 2.0]], 0.7, step=5e-3)
    expected = np.array([[math.cos(0.7), math.sin(0.7)], [-2 * math.sin(0.7), 2 * math.cos(0.7)]])
    assert np.allclose(end, expected, atol=1e-8)


@given(a=small, b=small, c=small, d=small, t=times, s=times)
@settings(max_examples=20, deadline=None)
def test_flow_property_for_linear_fields(a, b, c, d, t, s):
    """Property: φ_{t+s}(p) = φ_t(φ_s(p)) and φ_{-t}(φ_t(p)) = p"""
    chart = Chart("R2", ("x", "y"))
    X = _linear_field(chart, a, b, c, d)
    p = np.array([[0.3, -0.6]])
    joined = flow(X, p, t + s, step=5e-3)
    stepwise = flow(X, flow(X, p, s, step=5e-3), t, step=5e-3)
    assert np.linalg.norm(joined - stepwise) <= 1e-6
    assert np.linalg.norm(flow(X, flow(X, p, t, step=5e-3), -t, step=5e-3) - p) <= 1e-6


def test_trace_starts_at_the_point(plane):
    X = VectorField.from_strings(plane, ["1", "0"])
    times_, points = flow_trace(X, [0.0, 1.0], FlowSpec(step=0.25, t1=1.0))
    assert times_.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert points[0].tolist() == [0.0, 1.0]
    assert np.allclose(points[-1], [1.0, 1.0])


def test_flow_sum_of_translation_and_shear(plane):
    X = VectorField.from_strings(plane, ["1", "0"])
    Y = VectorField.from_strings(plane, ["0", "x"])
    result = flow_sum_compose(X, Y, [0.5, 0.25], 0.5, step=5e-3)
    assert result.verdict == Verdict.WITHIN_TOLERANCE
    assert np.allclose(result.lhs, [[1.0, 0.25 + 0.25 + 0.125]], atol=1e-9)


def test_flow_sum_of_dilation_and_translation(line):
    """x∂x + ∂x from 1 for unit time ends at 2e − 1"""
    X = VectorField.from_strings(line, ["x"])
    Y = VectorField.from_strings(line, ["1"])
    result = flow_sum_compose(X, Y, [1.0], 1.0, step=5e-3)
    assert result.residual <= 1e-6
    assert result.rhs[0, 0] == pytest.approx(2 * math.e - 1, abs=1e-6)


def test_middle_term_reproduces_backward_flow(line):
    X = VectorField.from_strings(line, ["x"])
    Y = VectorField.from_strings(line, ["1"])
    result = middle_term(X, Y, [1.0], 0.5, step=5e-3)
    assert result.verdict == Verdict.WITHIN_TOLERANCE
    assert result.lhs[0, 0] == pytest.approx(2 * math.exp(-0.5) - 1, abs=1e-8)


def test_flow_formulas_on_random_quadratic_pairs(plane):
    rng = np.random.default_rng(7)
    worst_sum, worst_middle = 0.0, 0.0
    for _ in range(20):
        X, Y = _random_quadratic_field(plane, rng), _random_quadratic_field(plane, rng)
        p = rng.uniform(-0.25, 0.25, 2)
        worst_sum = max(worst_sum, flow_sum_compose(X, Y, p, 0.5, step=1e-2).residual)
        worst_middle = max(worst_middle, middle_term(X, Y, p, 0.5, step=1e-2).residual)
    assert worst_sum <= 1e-6
    assert worst_middle <= 1e-6


def test_acceleration_of_linear_in_time_translation(plane):
    Z = TimeDependentField(plane, ((TIME, VectorField.coordinate(plane, 0)),))
    report = accel_velocity_check(Z, [0.0, 0.0])
    assert np.allclose(report.velocity, [1.0, 0.0])
    assert report.residual <= 1e-6


def test_acceleration_of_time_scaled_dilation(plane):
    Z = TimeDependentField(plane, ((TIME, VectorField.from_strings(plane, ["x", "0"])),))
    report = accel_velocity_check(Z, [1.0, 0.0])
    assert np.allclose(report.fd_accel, [1.0, 0.0], atol=1e-4)
    assert report.residual <= 1e-4


def test_acceleration_matches_velocity_for_random_fields(plane):
    """Z_t = t X + t² Y: the curve accelerates like X at t = 0"""
    rng = np.random.default_rng(11)
    for _ in range(10):
        X, Y = _random_quadratic_field(plane, rng), _random_quadratic_field(plane, rng)
        p = rng.uniform(-0.5, 0.5, 2)
        report = accel_velocity_check(TimeDependentField(plane, ((TIME, X), (TIME ** 2, Y))), p)
        assert np.allclose(report.velocity, X.evaluate(p[None])[0])
        assert report.residual <= ACCEL_RESIDUAL_TOL


def test_acceleration_needs_vanishing_initial_field(plane):
    with pytest.raises(PreconditionZ0Error):
        accel_velocity_check(TimeDependentField.autonomous(VectorField.coordinate(plane, 0)), [0.0, 0.0])


def test_time_dependent_coefficients_must_depend_on_time_only(plane):
    with pytest.raises(ValueError):
        TimeDependentField(plane, ((sympy.Symbol("x"), VectorField.coordinate(plane, 0)),))


@pytest.mark.parametrize(
    "components, start, exact",
    [
        (["-y", "x"], [1.0, 0.0], [math.cos(1.0), math.sin(1.0)]),
        (["x", "0"], [1.0, 0.0], [math.e, 0.0]),
    ],
)
def test_rk4_is_fourth_order(plane, components, start, exact):
    X = VectorField.from_strings(plane, components)
    assert convergence_ratio(X, start, 1.0, np.array(exact), 0.1) >= RK4_ORDER_RATIO_MIN


def test_step_limits():
    with pytest.raises(StepUnderflowError):
        FlowSpec(step=0.0)
    chart = Chart("R", ("x",))
    with pytest.raises(StepUnderflowError):
        flow(VectorField.coordinate(chart, 0), [0.0], 1.0, step=1e-13)


def test_leaving_the_box_is_an_error():
    chart = Chart("I", ("x",), ((-1, 1),))
    with pytest.raises(LeftDomainError):
        flow(VectorField.coordinate(chart, 0), [0.0], 2.0, step=0.1)


def test_integrate_flow_single_point_and_batch(plane):
    X = VectorField.from_strings(plane, ["-y", "x"])
    spec = FlowSpec(step=5e-3, t1=math.pi / 2)
    assert np.allclose(integrate_flow(X, [1.0, 0.0], spec), [0.0, 1.0], atol=1e-8)
    batch = integrate_flow(X, [[1.0, 0.0], [0.0, 1.0]], spec)
    assert batch.shape == (2, 2)
    assert np.allclose(batch[1], [-1.0, 0.0], atol=1e-8)


def test_pushforward_along_a_translation(plane):
    """(φ^{∂x}_t)_*(x∂y) = (x - t)∂y"""
    X = VectorField.from_strings(plane, ["1", "0"])
    Y = VectorField.from_strings(plane, ["0", "x"])
    values = pushforward_field(X, Y, 0.25, np.array([[0.5, 0.25], [1.0, -2.0]]), step=5e-3)
    assert np.allclose(values, [[0.0, 0.25], [0.0, 0.75]], atol=1e-10)
