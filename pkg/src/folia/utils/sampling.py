"""Seeded sampling of points in chart boxes and balls."""

from typing import Sequence, Tuple

import numpy as np

# Half-width of the sampling box for charts without a box domain
DEFAULT_HALF_WIDTH = 1.0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def sampling_bounds(chart) -> Tuple[np.ndarray, np.ndarray]:
    """Finite sampling box of a chart: its box domain, else the default cube"""
    low, high = chart.bounds()
    low = np.where(np.isfinite(low), low, -DEFAULT_HALF_WIDTH)
    high = np.where(np.isfinite(high), high, DEFAULT_HALF_WIDTH)
    return low, high


def sample_box(chart, count: int, seed: int, margin: float = 0.05) -> np.ndarray:
    """Uniform points in the chart box, shrunk by a relative margin"""
    rng = make_rng(seed)
    low, high = sampling_bounds(chart)
    width = high - low
    low, high = low + margin * width, high - margin * width
    return rng.uniform(low, high, size=(count, chart.dimension))


def sample_ball(center: Sequence[float], radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in the closed Euclidean ball"""
    center = np.asarray(center, dtype=float)
    dim = center.shape[0]
    if dim == 0:
        return np.zeros((count, 0))
    directions = rng.normal(size=(count, dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / dim)
    return center + directions / norms * radii

