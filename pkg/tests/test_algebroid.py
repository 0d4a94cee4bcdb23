"""Algebroid validation, the isotropy kernel module and leaf splittings."""

import numpy as np
import pytest
import sympy

from folia.components.algebroid import (
    Algebroid,
    algebroid_bracket,
    classify_point,
    hx_dimensions,
    induced_foliation,
    isotropy_bookkeeping,
    kernel_module,
    leaf_splitting,
    split_bracket,
    validate_algebroid,
)
from folia.components.charts import involutivity_check
from folia.constants import Verdict
from folia.utils.errors import DimensionMismatchError, NonOrthonormalBasisError


def test_bundled_algebroids_are_valid(su2_star, sl2_action, plane):
    for A in (su2_star, sl2_action, Algebroid.tangent(plane)):
        result = validate_algebroid(A)
        assert result.verdict == Verdict.VALID, result.failures


def test_flipped_structure_breaks_the_anchor(space):
    flipped = Algebroid.from_strings(
        "flipped",
        space,
        ["e1", "e2", "e3"],
        [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]],
        {("e1", "e2"): {"e3": "-1"}, ("e2", "e3"): {"e1": "-1"}, ("e3", "e1"): {"e2": "-1"}},
        4,
    )
    result = validate_algebroid(flipped)
    assert result.verdict == Verdict.INVALID
    assert {failure["check"] for failure in result.failures} == {"anchor"}


def test_reversed_pairs_are_filled_in(su2_star):
    assert su2_star.structure[1][0] == (0, 0, -1)
    assert su2_star.to_dict()["brackets"]["e1,e2"] == {"e3": "1"}


def test_anchor_shape_is_checked(plane):
    with pytest.raises(DimensionMismatchError):
        Algebroid.from_strings("bad", plane, ["e1"], [["1", "0"], ["0", "1"]], {})
    with pytest.raises(DimensionMismatchError):
        Algebroid.from_strings("bad", plane, ["e1"], [["1"]], {})


def test_bracket_satisfies_leibniz(su2_star, space):
    """[e1, f e2] = f [e1, e2] + ρ(e1)(f) e2"""
    x1, x2, x3 = space.symbols
    f = x1 * x2
    e1 = su2_star.basis_section(0)
    result = algebroid_bracket(su2_star, e1, (sympy.Integer(0), f, sympy.Integer(0)))
    derivative = su2_star.anchor_fields()[0].apply(f)
    assert [sympy.expand(v) for v in result] == [0, sympy.expand(derivative), sympy.expand(f)]


def test_induced_foliation_is_involutive(sl2_action):
    assert involutivity_check(induced_foliation(sl2_action)).verdict == Verdict.INVOLUTIVE


def test_kernel_of_the_lie_poisson_anchor(su2_star):
    report = kernel_module(su2_star)
    assert report.to_dict()["generators"] == [["x1", "x2", "x3"]]
    assert report.to_dict()["minimality"] == "up to degree 4"


def test_kernel_of_the_sl2_action(sl2_action):
    report = kernel_module(sl2_action, points=[[1, 0], [0, 0], [2, 3]])
    assert len(report.generators) == 1
    assert sl2_action.anchor_of(report.generators[0]).is_zero()
    assert report.to_dict()["generators"][0][0] == "x^2"
    assert [row.seq_dim for row in report.table] == [1, 0, 1]


def test_isotropy_dimensions_away_from_the_origin(su2_star):
    kernel = kernel_module(su2_star)
    dims = hx_dimensions(su2_star, [1, 0, 0], kernel)
    assert (dims.seq_dim, dims.module_fiber_dim, dims.dim_Fx, dims.dim_TxL) == (1, 1, 2, 2)
    assert dims.note is None
    assert dims.to_dict()["consistent"]


def _nonzero_points(dimension, count=20, seed=0):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        point = rng.integers(-3, 4, size=dimension).tolist()
        if any(point):
            points.append(point)
    return points


@pytest.mark.parametrize("name, dimension", [("su2_star", 3), ("sl2_action", 2)])
def test_isotropy_is_one_dimensional_away_from_the_origin(request, name, dimension):
    A = request.getfixturevalue(name)
    kernel = kernel_module(A)
    for point in _nonzero_points(dimension):
        dims = hx_dimensions(A, point, kernel)
        assert dims.seq_dim == 1, point
        assert dims.dim_TxL == A.rank - 1, point


def test_isotropy_dimensions_jump_at_the_origin(su2_star):
    dims = hx_dimensions(su2_star, [0, 0, 0], kernel_module(su2_star))
    assert dims.seq_dim == 0
    assert dims.module_fiber_dim == 1
    assert "differ" in dims.to_dict()["note"]


def test_point_classes(su2_star):
    kernel = kernel_module(su2_star)
    assert classify_point(su2_star, [1, 2, -1], kernel).verdict == Verdict.IN_MA
    assert classify_point(su2_star, [0, 0, 0], kernel).verdict == Verdict.IN_MA_COMPLEMENT


@pytest.mark.parametrize("point", [[1, 0, 0], [0, 0, 0], ["1/2", "1/3", 0]])
def test_isotropy_sequence_is_exact(su2_star, point):
    record = isotropy_bookkeeping(su2_star, point, kernel_module(su2_star))
    assert record["exact"]


def test_splitting_on_a_sphere(su2_star):
    S = leaf_splitting(su2_star, [1, 0, 0])
    assert (S.n, S.k) == (2, 1)
    assert S.abelian
    assert S.to_dict()["mu"] == ["e2", "e3"]
    assert not S.notes
    assert [X.to_source() for X in S.xi_fields()] == [["-x3", "0", "x1"], ["x2", "-x1", "0"]]


def test_split_bracket_picks_up_curvature(su2_star):
    """[e2, e3] = e1 is vertical at (1, 0, 0)"""
    S = leaf_splitting(su2_star, [1, 0, 0])
    tangent, vertical = split_bracket(S, [1, 0], [0], [0, 1], [0])
    assert tuple(tangent) == (0, 0)
    assert vertical == (1,)


def test_split_coordinates_invert_fiber_from(su2_star):
    S = leaf_splitting(su2_star, [1, 0, 0])
    base = np.array([[1.0, 0.1, -0.2]])
    fiber = np.array([[0.3, -0.5, 0.25]])
    lam, h = S.split_coordinates(base, fiber)
    assert np.allclose(S.fiber_from(lam, h, base), fiber)


def test_splitting_at_a_regular_point_of_the_tangent_algebroid(plane):
    S = leaf_splitting(Algebroid.tangent(plane), [0, 0])
    assert (S.n, S.k) == (2, 0)


def test_inner_product_must_be_positive_definite(su2_star):
    with pytest.raises(NonOrthonormalBasisError):
        leaf_splitting(su2_star, [1, 0, 0], inner_product=[[1, 0], [0, -1]])
    S = leaf_splitting(su2_star, [1, 0, 0], inner_product=[[4, 0], [0, 1]])
    assert np.allclose(S.orthonormal, [[0.5, 0.0], [0.0, 1.0]])
