"""Shared fixtures: small charts, fields and the bundled job files."""

from pathlib import Path

import pytest

from folia.components.algebroid import Algebroid
from folia.components.charts import Chart, SmoothMap, VectorField, VfModule

EXAMPLES_DIR = Path(__file__).resolve().parent.parent / "config" / "examples"


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES_DIR


@pytest.fixture
def line() -> Chart:
    return Chart("R", ("x",))


@pytest.fixture
def plane() -> Chart:
    return Chart("R2", ("x", "y"))


@pytest.fixture
def space() -> Chart:
    return Chart("R3", ("x1", "x2", "x3"))


@pytest.fixture
def rotations(space) -> VfModule:
    """Infinitesimal rotations of R^3, singular at the origin"""
    return VfModule(space, (
        VectorField.from_strings(space, ["0", "-x3", "x2"]),
        VectorField.from_strings(space, ["x3", "0", "-x1"]),
        VectorField.from_strings(space, ["-x2", "x1", "0"]),
    ), 4)


@pytest.fixture
def cubic_target(plane, line) -> SmoothMap:
    return SmoothMap.from_strings("t", plane, line, ["x^3 - y"])


@pytest.fixture
def su2_star(space) -> Algebroid:
    return Algebroid.from_strings(
        "su2_star",
        space,
        ["e1", "e2", "e3"],
        [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]],
        {("e1", "e2"): {"e3": "1"}, ("e2", "e3"): {"e1": "1"}, ("e3", "e1"): {"e2": "1"}},
        4,
    )


@pytest.fixture
def sl2_action(plane) -> Algebroid:
    """Action algebroid of sl(2) on the plane: A = y∂x, B = x∂y, H = x∂x − y∂y"""
    return Algebroid.from_strings(
        "sl2",
        plane,
        ["e1", "e2", "e3"],
        [["y", "0"], ["0", "x"], ["x", "-y"]],
        {("e1", "e2"): {"e3": "-1"}, ("e3", "e1"): {"e1": "-2"}, ("e3", "e2"): {"e2": "2"}},
        4,
    )
