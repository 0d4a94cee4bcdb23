"""Pipeline runs over the bundled job files."""

from fractions import Fraction

import pytest

from folia.constants import Outcome, Verdict
from folia.pipeline.verification_pipeline import PipelineOptions, VerificationPipeline, run_pipeline
from folia.utils.errors import ConfigError
from folia.utils.job_config import load_job_config
from folia.utils.report import EXIT_PASS, EXIT_REFUTED


def _job(examples_dir, stem: str, **overrides):
    return load_job_config(examples_dir / f"{stem}.json", overrides or None)


def test_cubic_module_is_not_involutive(examples_dir):
    report, blocks = run_pipeline(_job(examples_dir, "cubic_pair"), "check-involutivity")
    kinds = [(record.kind, record.verdict) for record in report.checks]
    assert kinds[0] == ("involutivity", Verdict.NOT_INVOLUTIVE)
    assert [kind for kind, _ in kinds[1:]] == ["fiber_data", "fiber_data"]
    assert report.exit_code == EXIT_REFUTED
    assert blocks == []


def test_cli_point_is_added_to_the_module_points(examples_dir):
    options = PipelineOptions(point=(Fraction(2), Fraction(1)), module="kernels")
    report, _ = run_pipeline(_job(examples_dir, "cubic_pair"), "check-involutivity", options)
    assert sum(record.kind == "fiber_data" for record in report.checks) == 3
    assert report.options["point"] == ["2", "1"]
    assert report.options["module"] == "kernels"


def test_cubic_bisubmersion_is_refuted(examples_dir):
    report, _ = run_pipeline(_job(examples_dir, "cubic_pair", samples=20), "check-bisubmersion")
    verdicts = {record.kind: record.verdict for record in report.checks}
    assert verdicts["submersion"] == Verdict.PASS
    assert verdicts["foliation"] == Verdict.FAIL
    assert verdicts["algebraic"] == Verdict.NON_SMOOTH_CANDIDATE
    assert report.exit_code == EXIT_REFUTED
    assert any("heuristic" in note for note in report.notes)


def test_tangent_algebroid_report_passes(examples_dir):
    report, _ = run_pipeline(_job(examples_dir, "tangent"), "algebroid-report", PipelineOptions(timing=True))
    assert report.checks[0].kind == "validation"
    assert report.checks[0].verdict == Verdict.VALID
    assert all(record.outcome == Outcome.PASS for record in report.checks)
    assert report.exit_code == EXIT_PASS
    assert set(report.timing) == {"algebroid:tangent"}


def test_weinstein_at_a_regular_point_of_the_tangent_algebroid(examples_dir):
    report, _ = run_pipeline(_job(examples_dir, "tangent", samples=8), "weinstein")
    verdicts = {record.kind: record.verdict for record in report.checks}
    assert verdicts["psi_commutation"] == Verdict.COMMUTES
    assert verdicts["weinstein_diagram"] == Verdict.INVARIANTS_MATCH
    assert verdicts["algebraic"] == Verdict.EXISTS
    assert all(record.outcome == Outcome.PASS for record in report.checks)
    assert report.exit_code == EXIT_PASS


@pytest.mark.parametrize("stem", ["rotations", "sl2_action"])
def test_path_holonomy_bisubmersions_are_sound(examples_dir, stem):
    report, _ = run_pipeline(_job(examples_dir, stem, samples=20), "path-holonomy")
    verdicts = {record.kind: record.verdict for record in report.checks}
    assert verdicts == {"construction": Verdict.PASS, "foliation": Verdict.PASS, "algebraic": Verdict.EXISTS}


def test_reports_are_byte_identical_across_runs(examples_dir):
    first, _ = run_pipeline(_job(examples_dir, "linear_pair", samples=20), "check-bisubmersion")
    second, _ = run_pipeline(_job(examples_dir, "linear_pair", samples=20), "check-bisubmersion")
    assert first.dumps() == second.dumps()


def test_flow_traces_are_exported_on_request(examples_dir):
    job = _job(examples_dir, "flows")
    report, blocks = run_pipeline(job, "flows-verify", PipelineOptions(exports=True))
    kinds = [record.kind for record in report.checks]
    assert kinds == ["flow_sum"] * 2 + ["middle_term"] * 2 + ["acceleration"] * 2 + ["rk4_order"] * 2 + ["trace"]
    assert [block.title for block in blocks] == ["traces/0"]
    assert list(blocks[0].columns) == ["t", "x", "y"]


def test_selection_errors_abort_the_job(examples_dir):
    job = _job(examples_dir, "cubic_pair")
    with pytest.raises(ConfigError):
        VerificationPipeline(job, "summon")
    with pytest.raises(ConfigError):
        run_pipeline(job, "check-involutivity", PipelineOptions(module="missing"))
    with pytest.raises(ConfigError, match="nothing for algebroid-report"):
        run_pipeline(job, "algebroid-report")
    with pytest.raises(ConfigError, match="no flows section"):
        run_pipeline(job, "flows-verify")
