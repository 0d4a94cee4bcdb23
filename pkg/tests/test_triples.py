"""The algebraic route: sampled triples, the middle component of φ and the ψ diagram."""

from pathlib import Path

import numpy as np
import pytest

from folia.components.bisubm import StackedMap
from folia.components.triples import (
    PhiSolver,
    build_triple_space,
    check_psi_diagram,
    pair_psi,
    verify_algebraic_bisubmersion,
)
from folia.constants import TRIPLE_CONSTRAINT_TOL, Verdict
from folia.utils.errors import CommutationFailureError
from folia.utils.job_config import load_job_config

EXAMPLES_DIR = Path(__file__).resolve().parent.parent / "config" / "examples"


def _bundled(stem: str, name: str):
    job = load_job_config(EXAMPLES_DIR / f"{stem}.json")
    entry = job.bisubmersions[name]
    return entry, entry.build(job.options)


def test_sampled_triples_lie_in_the_fibered_product():
    _, B = _bundled("linear_pair", "linear")
    space = build_triple_space(B, count=30, seed=3)
    assert space.params.shape == (30, 4)
    assert space.constraint_residual <= TRIPLE_CONSTRAINT_TOL
    assert space.injectivity > 0
    assert np.array_equal(space.split(space.params)[1], space.middle)


def test_linear_pair_has_a_smooth_phi():
    _, B = _bundled("linear_pair", "linear")
    certificate = verify_algebraic_bisubmersion(B, samples=40)
    assert certificate.verdict == Verdict.EXISTS
    assert certificate.mode == "candidate"
    assert certificate.diagonal_residual <= 1e-8
    assert certificate.max_residual <= 1e-8


def test_contact_pair_has_inconsistent_constraints():
    _, B = _bundled("contact_pair", "contact")
    certificate = verify_algebraic_bisubmersion(B, samples=40)
    assert certificate.verdict == Verdict.INCONSISTENT_CONSTRAINTS
    assert certificate.witness["irreducible_residual"] > certificate.tolerance
    assert set(certificate.witness) >= {"first", "middle", "last", "z"}


def test_contact_residual_is_the_twisting_term():
    """x3 − x1 = 1 and y2 − y1 = 1/2 leave (x3 − x1)(y2 − y1) in the dropped row"""
    _, B = _bundled("contact_pair", "contact")
    first = np.array([[0.0, 0.0, 0.0]])
    middle = np.array([[0.0, 0.5, 0.0]])
    last = np.array([[1.0, 0.5, 0.5]])
    assert np.allclose(B.s.evaluate(first), B.s.evaluate(middle))
    assert np.allclose(B.t.evaluate(middle), B.t.evaluate(last))
    solution = PhiSolver(B).solve(first, last, middle)
    assert solution.converged[0]
    assert solution.irreducible[0] == pytest.approx(0.5, abs=1e-9)


def test_linear_pair_exists_on_a_hundred_triples():
    _, B = _bundled("linear_pair", "linear")
    certificate = verify_algebraic_bisubmersion(B, samples=100)
    assert certificate.verdict == Verdict.EXISTS
    assert certificate.max_residual <= 1e-6


def test_cubic_pair_middle_is_not_smooth():
    _, B = _bundled("cubic_pair", "cubic")
    certificate = verify_algebraic_bisubmersion(B, samples=40)
    assert certificate.verdict == Verdict.NON_SMOOTH_CANDIDATE
    assert certificate.witness["overall"] >= 10.0
    assert "heuristic" in certificate.notes[0]


def test_certificate_report_is_plain_data():
    _, B = _bundled("linear_pair", "linear")
    report = verify_algebraic_bisubmersion(B, samples=20).to_dict()
    assert report["verdict"] == "Exists"
    assert "space" not in report and "middles" not in report
    assert all(len(row["norms"]) == 3 for row in report["smoothness"])


@pytest.mark.parametrize("stem, name", [("isotropy_bundle", "isotropy"), ("translation", "translation")])
def test_psi_diagram_commutes(stem, name):
    entry, B = _bundled(stem, name)
    report = check_psi_diagram(B, entry.psi, entry.groupoid, samples=20)
    assert report.verdict == Verdict.COMMUTES
    assert report.discrepancy <= 1e-6
    report.raise_for_failure()


def test_pair_psi_into_the_pair_groupoid():
    _, B = _bundled("linear_pair", "linear")
    report = check_psi_diagram(B, pair_psi(B), samples=20)
    assert report.groupoid == "pair"
    assert report.verdict == Verdict.COMMUTES


def test_swapped_psi_does_not_commute():
    """ψ = (s, t) into M×M puts the source where the target belongs"""
    _, B = _bundled("linear_pair", "linear")
    swapped = StackedMap("swapped", (B.s, B.t))
    report = check_psi_diagram(B, swapped, samples=20)
    assert report.verdict == Verdict.COMMUTATION_FAILURE
    with pytest.raises(CommutationFailureError):
        report.raise_for_failure()
