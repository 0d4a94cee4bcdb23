"""A-paths, their operations and the Weinstein bi-submersion."""

import csv
import math

import numpy as np
import pytest

from folia.components.algebroid import Algebroid, induced_foliation, leaf_splitting
from folia.components.bisubm import build_path_holonomy
from folia.components.groups import GroupKind
from folia.components.weinstein import (
    APath,
    apath_to_csv,
    base_path_from_fiber,
    build_weinstein_bisubmersion,
    check_apath,
    concatenate_paths,
    diagram_check_weinstein,
    fiber_coordinates,
    holonomy,
    psi_representative,
    reverse_path,
)
from folia.constants import APATH_RESIDUAL_TOL, Verdict
from folia.utils.errors import APathError

GRID = np.linspace(0.0, 1.0, 33)


def _parabola(A: Algebroid, start=(0.0, 0.0)) -> APath:
    """γ(t) = start + (t², t) with a = (2t, 1)"""
    base = np.stack([start[0] + GRID ** 2, start[1] + GRID], axis=1)
    fiber = np.stack([2 * GRID, np.ones_like(GRID)], axis=1)
    return APath(A, GRID, base, fiber)


@pytest.fixture
def tangent(plane) -> Algebroid:
    return Algebroid.tangent(plane)


def test_tangent_path_satisfies_the_anchor_condition(tangent):
    report = check_apath(tangent, _parabola(tangent))
    assert report.verdict == Verdict.VALID
    assert report.residual <= 1e-9
    assert report.nodes == 33


def test_wrong_fiber_is_detected(tangent):
    path = _parabola(tangent)
    path.fiber[:, 0] = GRID
    report = check_apath(tangent, path)
    assert report.verdict == Verdict.INVALID
    assert report.worst_time == 1.0


def test_apath_shapes_are_checked(tangent):
    with pytest.raises(APathError):
        APath(tangent, GRID, np.zeros((33, 3)), np.zeros((33, 2)))
    with pytest.raises(APathError):
        APath(tangent, GRID, np.zeros((33, 2)), np.zeros((33, 2)), ((0, 10), (12, 32)))
    with pytest.raises(APathError):
        APath(tangent, GRID[:1], np.zeros((1, 2)), np.zeros((1, 2)))


def test_concatenation_keeps_the_anchor_condition(tangent):
    first = _parabola(tangent)
    second = _parabola(tangent, start=(1.0, 1.0))
    joined = concatenate_paths(first, second)
    assert joined.segments == ((0, 32), (33, 65))
    assert np.allclose(joined.target, [2.0, 2.0])
    assert check_apath(tangent, joined).verdict == Verdict.VALID


def test_concatenation_needs_matching_endpoints(tangent):
    with pytest.raises(APathError):
        concatenate_paths(_parabola(tangent), _parabola(tangent))


def test_reversed_path_runs_backwards(tangent):
    path = _parabola(tangent)
    backwards = reverse_path(path)
    assert np.allclose(backwards.source, path.target)
    assert np.allclose(backwards.target, path.source)
    assert check_apath(tangent, backwards).verdict == Verdict.VALID


def test_path_csv(tangent, tmp_path):
    destination = apath_to_csv(_parabola(tangent), tmp_path / "path.csv")
    with destination.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["t", "x", "y", "dx", "dy"]
    assert len(rows) == 34
    assert float(rows[-1][1]) == 1.0


def test_base_path_rotates_around_the_sphere(su2_star):
    splitting = leaf_splitting(su2_star, [1, 0, 0])
    alpha = np.tile([0.3, 0.0], (33, 1))
    path = base_path_from_fiber(su2_star, [1.0, 0.0, 0.0], alpha, splitting)
    assert np.allclose(path.target, [math.cos(0.3), 0.0, math.sin(0.3)], atol=1e-8)
    assert check_apath(su2_star, path).verdict == Verdict.VALID


def test_holonomy_of_a_constant_isotropy_path(su2_star):
    """At (1, 0, 0) the fiber direction e1 is the isotropy"""
    splitting = leaf_splitting(su2_star, [1, 0, 0])
    base = np.tile([1.0, 0.0, 0.0], (33, 1))
    fiber = np.tile([0.7, 0.0, 0.0], (33, 1))
    path = APath(su2_star, GRID, base, fiber)
    assert check_apath(su2_star, path).verdict == Verdict.VALID
    assert np.allclose(holonomy(path, splitting), [0.7])


def test_weinstein_bisubmersion_on_a_sphere(su2_star):
    Z = build_weinstein_bisubmersion(su2_star, [1, 0, 0], samples=8)
    assert (Z.n, Z.k) == (2, 1)
    assert Z.group_model.kind == GroupKind.ABELIAN
    assert Z.bisubmersion.chart.dimension == 6
    assert not Z.t_depends_on_group
    rep = psi_representative(Z, np.array([1.0, 0.0, 0.0, 0.1, 0.05, 0.2]), grid=32)
    assert np.allclose(rep.source, [1.0, 0.0, 0.0])
    assert rep.target_gap <= 1e-4
    assert np.allclose(rep.holonomy, [0.2], atol=1e-8)


def test_weinstein_bisubmersion_of_the_tangent_algebroid(tangent):
    Z = build_weinstein_bisubmersion(tangent, [0, 0], samples=8)
    assert (Z.n, Z.k) == (2, 0)
    assert Z.group_model is None
    rep = psi_representative(Z, np.array([0.0, 0.0, 0.5, -0.25]), grid=16)
    assert np.allclose(rep.target, [0.5, -0.25])
    assert rep.holonomy.shape == (0,)


def test_weinstein_diagram_for_the_tangent_algebroid(tangent):
    Z = build_weinstein_bisubmersion(tangent, [0, 0], samples=8)
    report = diagram_check_weinstein(Z, samples=8, grid=16)
    assert report.verdict == Verdict.INVARIANTS_MATCH
    assert report.pair_check is not None and report.pair_check.verdict == Verdict.COMMUTES
    assert "necessary" in report.notes[0]
    report.raise_for_failure()


def test_fiber_coordinates_recover_the_lift(su2_star):
    splitting = leaf_splitting(su2_star, [1, 0, 0])
    alpha = np.tile([0.3, -0.2], (33, 1))
    path = base_path_from_fiber(su2_star, [1.0, 0.0, 0.0], alpha, splitting, np.full((33, 1), 0.4))
    assert check_apath(su2_star, path).verdict == Verdict.VALID
    lam, h = fiber_coordinates(path, splitting)
    assert np.allclose(lam, alpha, atol=1e-9)
    assert np.allclose(h, 0.4, atol=1e-9)


def test_anchor_residual_shrinks_as_the_grid_doubles(su2_star):
    splitting = leaf_splitting(su2_star, [1, 0, 0])
    residuals = []
    for nodes in (9, 17, 33):
        path = base_path_from_fiber(su2_star, [1.0, 0.0, 0.0], np.tile([1.0, 0.5], (nodes, 1)), splitting)
        residuals.append(check_apath(su2_star, path).residual)
    assert residuals[1] <= residuals[0] / 4
    assert residuals[2] <= residuals[1] / 4


@pytest.mark.parametrize("name, point", [("tangent", [0, 0]), ("su2_star", [0, 0, 0])])
def test_without_isotropy_the_bisubmersion_is_path_holonomy(request, name, point):
    A = request.getfixturevalue(name)
    Z = build_weinstein_bisubmersion(A, point, samples=8)
    assert Z.k == 0 and Z.group_model is None
    B = build_path_holonomy(induced_foliation(A), point, samples=8)
    assert Z.bisubmersion.chart.variables == B.chart.variables
    z = B.sample_points(20, 3)
    assert np.allclose(Z.bisubmersion.s.evaluate(z), B.s.evaluate(z))
    assert np.allclose(Z.bisubmersion.t.evaluate(z), B.t.evaluate(z))


def test_representatives_and_diagram_on_fifty_sphere_samples(su2_star):
    Z = build_weinstein_bisubmersion(su2_star, [1, 0, 0], samples=50)
    z = Z.bisubmersion.sample_points(50, 0)
    reps = psi_representative(Z, z)
    y, _, _ = Z.split(z)
    assert np.allclose([rep.source for rep in reps], y)
    assert max(rep.target_gap for rep in reps) <= APATH_RESIDUAL_TOL
    report = diagram_check_weinstein(Z, samples=50)
    assert report.verdict == Verdict.INVARIANTS_MATCH
    assert report.holonomy_gap <= APATH_RESIDUAL_TOL
    assert report.pair_check is None
