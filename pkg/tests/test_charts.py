"""Vector fields, modules, fibers and projectability on charts."""

from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from folia.components.charts import (
    Chart,
    SmoothMap,
    VectorField,
    VfModule,
    check_submersion,
    fiber_data,
    involutivity_check,
    jacobian_matrix,
    lie_bracket,
    module_membership,
    projectable,
    submersion_kernel_frame,
    syzygies,
)
from folia.components.expr import to_source
from folia.constants import Verdict
from folia.utils.errors import ChartMismatchError, DimensionMismatchError, FrameInvalidError, NotSubmersionError


def _module(chart, *generators, degree_bound=4):
    return VfModule(chart, tuple(VectorField.from_strings(chart, g) for g in generators), degree_bound)


R2 = Chart("R2", ("x", "y"))
X_, Y_ = R2.symbols
MONOMIALS = (sympy.Integer(1), X_, Y_, X_ * Y_, X_ ** 2, Y_ ** 2)
coefficients = st.lists(st.integers(min_value=-2, max_value=2), min_size=6, max_size=6)


def _quadratic(values):
    return sum((c * m for c, m in zip(values, MONOMIALS)), sympy.Integer(0))


@st.composite
def quadratic_fields(draw):
    return VectorField(R2, (_quadratic(draw(coefficients)), _quadratic(draw(coefficients))))


def test_bracket_of_coordinate_field_and_cubic_kernel(plane):
    X = VectorField.coordinate(plane, 0)
    Y = VectorField.from_strings(plane, ["0", "3*x^2"])
    assert lie_bracket(X, Y).to_source() == ["0", "6*x"]
    assert str(lie_bracket(X, Y)) == "6*x*dy"


def test_bracket_is_antisymmetric(plane):
    X = VectorField.from_strings(plane, ["x*y", "y^2 - 1"])
    Y = VectorField.from_strings(plane, ["-y", "x"])
    assert (lie_bracket(X, Y) + lie_bracket(Y, X)).is_zero()


@given(X=quadratic_fields(), Y=quadratic_fields(), Z=quadratic_fields())
@settings(max_examples=25, deadline=None)
def test_bracket_satisfies_the_jacobi_identity(X, Y, Z):
    cyclic = lie_bracket(X, lie_bracket(Y, Z)) + lie_bracket(Y, lie_bracket(Z, X)) + lie_bracket(Z, lie_bracket(X, Y))
    assert cyclic.is_zero()


@given(X=quadratic_fields(), Y=quadratic_fields(), f=coefficients)
@settings(max_examples=25, deadline=None)
def test_bracket_satisfies_leibniz(X, Y, f):
    """[X, fY] = f[X, Y] + X(f) Y"""
    g = _quadratic(f)
    expected = lie_bracket(X, Y).scaled(g) + Y.scaled(X.apply(g))
    assert (lie_bracket(X, Y.scaled(g)) - expected).is_zero()


def test_fields_on_different_charts_do_not_mix(plane, line):
    with pytest.raises(ChartMismatchError):
        VectorField.coordinate(plane, 0) + VectorField.zero(Chart("R2b", ("u", "v")))
    with pytest.raises(DimensionMismatchError):
        VectorField.from_strings(line, ["1", "0"])


def test_chart_validation():
    with pytest.raises(ValueError):
        Chart("bad", ("x", "x"))
    with pytest.raises(ValueError):
        Chart("empty", ("x",), ((1, 1),))
    chart = Chart("box", ("x",), (("-1/2", 2),))
    assert chart.box == ((Fraction(-1, 2), Fraction(2)),)
    assert chart.contains(np.array([[0.0], [3.0]])).tolist() == [True, False]


def test_membership_returns_witness(plane):
    mod = _module(plane, ["1", "0"], ["0", "1"])
    result = module_membership(VectorField.from_strings(plane, ["0", "x"]), mod)
    assert result.verdict == Verdict.MEMBER
    assert [to_source(c) for c in result.coefficients] == ["0", "x"]


def test_non_member_up_to_degree(plane):
    mod = _module(plane, ["1", "0"], ["0", "x"])
    result = module_membership(VectorField.coordinate(plane, 1), mod)
    assert result.verdict == Verdict.NOT_MEMBER
    assert not result
    assert result.to_dict()["note"] == "not a member up to degree 4"


@pytest.mark.parametrize(
    "f, verdict",
    [
        ("x", Verdict.INVOLUTIVE),
        ("x^2", Verdict.NOT_INVOLUTIVE),
        ("x^3", Verdict.NOT_INVOLUTIVE),
    ],
)
def test_kernels_of_two_projections(plane, f, verdict):
    """ker ds + ker dt for s = y, t = f(x) − y"""
    derivative = to_source(sympy.diff(sympy.sympify(f.replace("^", "**")), sympy.Symbol("x")))
    mod = _module(plane, ["1", "0"], ["1", derivative])
    result = involutivity_check(mod)
    assert result.verdict == verdict
    if verdict == Verdict.NOT_INVOLUTIVE:
        assert result.pair == (0, 1)
        assert not result.witness.is_zero()


def test_cubic_witness(plane):
    result = involutivity_check(_module(plane, ["1", "0"], ["1", "3*x^2"]))
    assert result.witness.to_source() == ["0", "6*x"]


def test_rotations_are_involutive(rotations):
    assert involutivity_check(rotations).verdict == Verdict.INVOLUTIVE


def test_fiber_data_of_coordinate_field(line):
    report = fiber_data(_module(line, ["1"]), ["3/2"])
    assert (report.dim_Fx, report.dim_TxL, report.dim_gx) == (1, 1, 0)


def test_fiber_data_of_rotations(rotations):
    regular = fiber_data(rotations, [1, 0, 0])
    assert (regular.dim_Fx, regular.dim_TxL, regular.dim_gx) == (2, 2, 0)
    singular = fiber_data(rotations, [0, 0, 0])
    assert (singular.dim_Fx, singular.dim_TxL, singular.dim_gx) == (3, 0, 3)


def test_fiber_data_ignores_redundant_generator(rotations):
    """Property: a generator that is already a member does not change dim F_x"""
    extra = rotations.generators[0].scaled(sympy.Symbol("x1")) + rotations.generators[1]
    enlarged = rotations.with_generators(rotations.generators + (extra,))
    for point in ([1, 0, 0], [0, 0, 0], ["1/2", -1, 2]):
        assert fiber_data(enlarged, point).dim_Fx == fiber_data(rotations, point).dim_Fx


def test_syzygies_are_relations(rotations):
    relations = syzygies(list(rotations.generators), 2)
    assert relations
    for relation in relations:
        total = VectorField.zero(rotations.chart)
        for g, X in zip(relation, rotations.generators):
            total = total + X.scaled(g)
        assert total.is_zero()


def test_projectable_field(plane):
    f = SmoothMap.from_strings("f", plane, Chart("M", ("m",)), ["x"])
    result = projectable(VectorField.from_strings(plane, ["x", "y"]), f, 4)
    assert result.verdict == Verdict.PROJECTS
    assert result.field.to_source() == ["m"]


def test_non_projectable_field(plane, line):
    s = SmoothMap.from_strings("s", plane, line, ["y"])
    result = projectable(VectorField.from_strings(plane, ["1", "3*x^2"]), s, 4)
    assert result.verdict == Verdict.NOT_PROJECTABLE
    assert result.component == 0


def test_auto_kernel_frame_of_cubic(cubic_target):
    frame = submersion_kernel_frame(cubic_target, samples=20, seed=1)
    assert [X.to_source() for X in frame] == [["1", "3*x^2"]]


def test_supplied_frame_must_be_annihilated(cubic_target, plane):
    with pytest.raises(FrameInvalidError):
        submersion_kernel_frame(cubic_target, [VectorField.coordinate(plane, 0)], samples=20, seed=1)


def test_constant_map_is_not_a_submersion(line):
    with pytest.raises(NotSubmersionError):
        check_submersion(SmoothMap.from_strings("c", line, line, ["0"]), samples=5, seed=0)


def test_jacobian_of_the_contact_target():
    U = Chart("U", ("x", "y", "z"))
    t = SmoothMap.from_strings("t", U, Chart("M", ("a", "b")), ["y", "z - x*y"])
    x, y, _ = U.symbols
    assert jacobian_matrix(t) == ((0, 1, 0), (-y, -x, 1))
