"""Bi-submersions: construction, the foliation route, path holonomy and bisections."""

from pathlib import Path

import numpy as np
import pytest

from folia.components.bisubm import (
    Bisection,
    PathHolonomyMoves,
    bisection_carry,
    build_path_holonomy,
    constant_bisection,
    inverse_bisection,
    invert_bisubmersion,
    make_bisubmersion,
    verify_foliation_bisubmersion,
)
from folia.components.charts import Chart, SmoothMap, VectorField, VfModule
from folia.components.groups import AbelianGroupModel, BCHGroupModel
from folia.constants import Verdict
from folia.utils.errors import BisectionInvalidError, ChartMismatchError, NotMinimalError
from folia.utils.job_config import load_job_config

EXAMPLES_DIR = Path(__file__).resolve().parent.parent / "config" / "examples"


def _bundled(stem: str, name: str):
    job = load_job_config(EXAMPLES_DIR / f"{stem}.json")
    entry = job.bisubmersions[name]
    return job, entry, entry.build(job.options)


def test_cubic_pair_fails_involutivity():
    _, _, B = _bundled("cubic_pair", "cubic")
    report = verify_foliation_bisubmersion(B, samples=20)
    assert report.verdict == Verdict.FAIL
    assert report.witness == {"check": "involutivity", "bracket": ["0", "6*x"], "pair": [0, 1]}
    assert report.to_dict()["verdict"] == "Fail"


def test_linear_pair_is_a_foliation_bisubmersion():
    _, _, B = _bundled("linear_pair", "linear")
    report = verify_foliation_bisubmersion(B, samples=20)
    assert report.verdict == Verdict.PASS
    assert report.witness is None
    assert report.induced_source == [["1"]]
    assert report.induced_target == [["1"]]


def test_translation_pair_projects_onto_the_line():
    _, _, B = _bundled("translation", "translation")
    report = verify_foliation_bisubmersion(B, samples=20)
    assert report.verdict == Verdict.PASS
    assert all(check.verdict == Verdict.PROJECTS for check in report.projections)


def test_maps_must_live_on_the_bisubmersion_chart(plane, line):
    s = SmoothMap.from_strings("s", line, line, ["x"])
    t = SmoothMap.from_strings("t", plane, line, ["x - y"])
    with pytest.raises(ChartMismatchError):
        make_bisubmersion("broken", plane, s, t)


def test_inverse_swaps_maps_and_frames():
    _, _, B = _bundled("cubic_pair", "cubic")
    inverse = invert_bisubmersion(B)
    assert inverse.name == "cubic^-1"
    assert inverse.s is B.t and inverse.t is B.s
    assert inverse.kernel_s == B.kernel_t
    assert invert_bisubmersion(inverse).name == "cubic"


def test_path_holonomy_of_translations():
    job = load_job_config(EXAMPLES_DIR / "translation.json")
    holonomy = job.holonomies["translations_at_origin"]
    B = build_path_holonomy(holonomy.module, holonomy.point, minimal=holonomy.minimal, samples=10)
    assert B.chart.dimension == 2
    assert np.allclose(B.t.evaluate(np.array([[0.5, 0.25]])), [[0.75]])
    assert np.allclose(B.s.evaluate(np.array([[0.5, 0.25]])), [[0.5]])
    report = verify_foliation_bisubmersion(B, samples=10)
    assert report.verdict == Verdict.PASS


def test_minimal_path_holonomy_needs_a_minimal_generating_set(rotations):
    with pytest.raises(NotMinimalError):
        build_path_holonomy(rotations, [1, 0, 0], minimal=True, samples=5)


def test_path_holonomy_rejects_clashing_variable_names():
    chart = Chart("L", ("lam0", "lam1", "lam2"))
    mod = VfModule(chart, (VectorField.coordinate(chart, 0),), 2)
    with pytest.raises(ValueError):
        build_path_holonomy(mod, [0, 0, 0], samples=5)


def test_closed_form_middle_only_for_commuting_group_coordinates(rotations):
    so3 = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        so3[i, j, k], so3[j, i, k] = 1.0, -1.0
    u = np.zeros((2, 9))
    assert PathHolonomyMoves(3, rotations.generators, BCHGroupModel(so3)).candidate(None, u, None, u, u) is None

    moves = PathHolonomyMoves(3, rotations.generators, AbelianGroupModel(1))
    first = np.array([[1.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.3]])
    middle = np.array([[1.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.1]])
    last = np.array([[0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 0.2]])
    candidate = moves.candidate(None, middle, None, first, last)
    assert np.allclose(candidate, [[0.0, 1.0, 0.0, -0.1, 0.5, 0.0, 0.4]])


def test_constant_bisection_carries_a_translation():
    _, entry, B = _bundled("translation", "translation")
    beta = entry.build_bisection(B, "shift")
    carried = bisection_carry(B, beta, samples=10)
    assert carried.section_residual == 0.0
    assert carried.min_rank == 1
    assert carried.span_residual is not None and carried.span_residual <= 1e-9
    assert np.allclose(carried.evaluate(np.array([[0.0], [1.0]])), [[0.25], [1.25]])


def test_inverse_bisection_carries_the_inverse_shift():
    _, entry, B = _bundled("translation", "translation")
    inverse = inverse_bisection(B, entry.build_bisection(B, "shift"))
    assert inverse.name == "shift^-1"
    assert np.allclose(inverse.b.evaluate(np.array([[1.0]])), [[0.75, 0.25]])
    carried = bisection_carry(invert_bisubmersion(B), inverse, samples=10)
    assert carried.section_residual <= 1e-8
    assert np.allclose(carried.evaluate(np.array([[1.0], [0.0]])), [[0.75], [-0.25]])


def test_constant_bisection_needs_the_fiber_dimension():
    _, _, B = _bundled("translation", "translation")
    with pytest.raises(BisectionInvalidError):
        constant_bisection(B, ["1/4", "1/2"])


def test_bisection_must_be_a_section_of_s():
    job, _, B = _bundled("translation", "translation")
    V, U = job.charts["V"], job.charts["U"]
    beta = Bisection("double", SmoothMap.from_strings("double", V, U, ["2*x", "0"]))
    with pytest.raises(BisectionInvalidError):
        bisection_carry(B, beta, samples=10)
