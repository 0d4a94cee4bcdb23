"""Job files: loading, validation against the schema and resolution."""

from fractions import Fraction

import pytest

from folia.utils.errors import ConfigError
from folia.utils.job_config import load_job_config


def _write(tmp_path, text: str, name: str = "job.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_bundled_cubic_pair(examples_dir):
    job = load_job_config(examples_dir / "cubic_pair.json")
    assert job.options.name == "cubic_pair"
    assert job.options.degree_bound == 8
    assert set(job.bisubmersions) == {"cubic"}
    assert job.module_points["kernels"] == [(0, 0), (1, 0)]
    assert job.skipped == []


def test_named_points_resolve(examples_dir):
    job = load_job_config(examples_dir / "sl2_action.json")
    entry = job.algebroids["sl2"]
    assert entry.points[0] == (Fraction(1), Fraction(0))
    assert entry.points[3] == (Fraction(1, 2), Fraction(-1))
    assert entry.kernel_degree_bound == 4


def test_overrides_win_over_the_file(examples_dir):
    job = load_job_config(examples_dir / "linear_pair.json", {"samples": 7, "seed": None})
    assert job.options.samples == 7
    assert job.options.seed == 0


def test_unknown_keys_are_skipped(tmp_path):
    path = _write(tmp_path, "colour: red\ncharts:\n  R:\n    variables: [x]\n    shade: 3\n")
    job = load_job_config(path)
    assert set(job.skipped) == {"/colour", "/charts/R/shade"}
    assert job.charts["R"].variables == ("x",)
    assert job.options.name == "job"


def test_yaml_syntax_error_reports_position(tmp_path):
    path = _write(tmp_path, "name: job\ncharts: {R: [x\n")
    with pytest.raises(ConfigError) as raised:
        load_job_config(path)
    assert raised.value.line is not None
    assert "line" in str(raised.value)


def test_unresolved_reference_has_a_pointer(tmp_path):
    path = _write(tmp_path, "charts:\n  R: {variables: [x]}\nfields:\n  X: {chart: Q, components: ['1']}\n")
    with pytest.raises(ConfigError) as raised:
        load_job_config(path)
    assert raised.value.pointer == "/fields/X/chart"


def test_bad_expression_has_a_pointer(tmp_path):
    path = _write(tmp_path, "charts:\n  R: {variables: [x]}\nfields:\n  X: {chart: R, components: ['x +']}\n")
    with pytest.raises(ConfigError) as raised:
        load_job_config(path)
    assert raised.value.pointer == "/fields/X/components"


@pytest.mark.parametrize(
    "text, pointer",
    [
        ("samples: 0\n", "/samples"),
        ("tolerance: '-1/2'\n", "/tolerance"),
        ("charts:\n  R: {box: [[0, 1]]}\n", "/charts/R"),
        ("groupoids:\n  G: {kind: loop, base_dim: 1}\n", "/groupoids/G/kind"),
        ("charts:\n  R: {variables: [x]}\npoints:\n  p: [0]\nmodules:\n  m: {chart: R, generators: [['1']], points: [[0, 1]]}\n",
         "/modules/m/points/0"),
    ],
)
def test_schema_violations(tmp_path, text, pointer):
    with pytest.raises(ConfigError) as raised:
        load_job_config(_write(tmp_path, text))
    assert raised.value.pointer == pointer


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_job_config(tmp_path / "absent.json")


def test_document_must_be_a_mapping(tmp_path):
    with pytest.raises(ConfigError):
        load_job_config(_write(tmp_path, "- just\n- a list\n"))
