#!/usr/bin/env python3
"""
A-paths and the Weinstein bi-submersion Z = V × Bⁿ × H̃_x.

Elements of the Weinstein groupoid are handled only through A-path
representatives and their computable invariants (source, target and, for
abelian isotropy models, the holonomy vector ∫ j(a) dt). Classes are never
compared; equality of invariants is necessary but not sufficient.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from folia.components.algebroid import Algebroid, KernelModuleReport, Splitting, induced_foliation, kernel_module, leaf_splitting
from folia.components.bisubm import BiSubmersion, build_path_holonomy
from folia.components.expr import compile_exprs
from folia.components.flows import FieldFamily, rk4
from folia.components.groups import AbelianGroupModel, BCHGroupModel, GroupKind, GroupModel
from folia.components.triples import PsiDiagramReport, build_triple_space, check_psi_diagram, pair_psi, solve_phi
from folia.config.configuration import APATH_GRID, BALL_RADIUS, SAMPLES, SWEEP_FLOW_STEP, TOLERANCE
from folia.constants import APATH_RESIDUAL_TOL, Verdict
from folia.utils.errors import APathError, DimensionMismatchError, InvariantMismatchError, LeftDomainError

logger = logging.getLogger(__name__)

# RK4 substeps per grid interval when reconstructing base paths
SUBSTEPS = 4

# Largest gap allowed between the end of one path and the start of the next
JUNCTION_TOL = 1e-8

# Validity radius of truncated BCH models for the isotropy group
BCH_RADIUS = 0.5


# --- A-paths ------------------------------------------------------------------

@dataclass
class APath:
    """Base path γ and fiber coordinates a in the algebroid frame on a time grid.

    Segments are inclusive node ranges, uniformly parametrized; concatenation
    keeps the duplicated junction node so each segment stays smooth.
    """
    algebroid: Algebroid
    times: np.ndarray
    base: np.ndarray
    fiber: np.ndarray
    segments: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.base = np.atleast_2d(np.asarray(self.base, dtype=float))
        self.fiber = np.atleast_2d(np.asarray(self.fiber, dtype=float))
        count = self.times.shape[0]
        if count < 2:
            raise APathError("An A-path needs at least two nodes")
        if self.base.shape != (count, self.algebroid.chart.dimension):
            raise APathError(f"Base path has shape {self.base.shape}, expected ({count}, {self.algebroid.chart.dimension})")
        if self.fiber.shape != (count, self.algebroid.rank):
            raise APathError(f"Fiber path has shape {self.fiber.shape}, expected ({count}, {self.algebroid.rank})")
        if not self.segments:
            self.segments = ((0, count - 1),)
        position = 0
        for start, end in self.segments:
            if start != position or end <= start:
                raise APathError(f"Segments {self.segments} do not tile the {count} nodes")
            if np.any(np.diff(self.times[start:end + 1]) <= 0):
                raise APathError("Time grid is not increasing")
            position = end + 1
        if position != count:
            raise APathError(f"Segments {self.segments} do not tile the {count} nodes")

    @property
    def source(self) -> np.ndarray:
        return self.base[0]

    @property
    def target(self) -> np.ndarray:
        return self.base[-1]

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Linear interpolation of (γ, a) at time t"""
        for start, end in self.segments:
            if t <= self.times[end] or end == self.times.shape[0] - 1:
                times = self.times[start:end + 1]
                base = np.array([np.interp(t, times, column) for column in self.base[start:end + 1].T])
                fiber = np.array([np.interp(t, times, column) for column in self.fiber[start:end + 1].T])
                return base, fiber
        raise APathError(f"Time {t} outside the grid")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algebroid": self.algebroid.name,
            "nodes": int(self.times.shape[0]),
            "segments": [list(s) for s in self.segments],
            "source": self.source.tolist(),
            "target": self.target.tolist(),
        }


def _segment_derivative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fourth-order finite differences on a uniform segment"""
    count = times.shape[0]
    spacing = np.diff(times)
    if count < 5 or np.ptp(spacing) > 1e-9 * max(spacing.mean(), 1e-300):
        return np.gradient(values, times, axis=0)
    h = spacing.mean()
    v = values
    d = np.empty_like(v)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return d


def path_velocity(times: np.ndarray, base: np.ndarray, segments: Sequence[Tuple[int, int]]) -> np.ndarray:
    velocity = np.empty_like(base)
    for start, end in segments:
        velocity[start:end + 1] = _segment_derivative(times[start:end + 1], base[start:end + 1])
    return velocity


def anchor_image(A: Algebroid, path: APath) -> np.ndarray:
    """ρ(γ(t)) a(t) at every node"""
    entries = compile_exprs([c for row in A.anchor for c in row], A.chart.symbols)
    anchor = entries(path.base).reshape(-1, A.chart.dimension, A.rank)
    return np.einsum("tnr,tr->tn", anchor, path.fiber)


def tangency_residual(times: np.ndarray, base: np.ndarray, velocities: np.ndarray, segments: Sequence[Tuple[int, int]]) -> np.ndarray:
    """|v(t) − γ′(t)| per node"""
    return np.linalg.norm(velocities - path_velocity(times, base, segments), axis=1)


@dataclass
class APathReport:
    verdict: Verdict
    residual: float
    worst_time: float
    nodes: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "residual": self.residual,
            "worst_time": self.worst_time,
            "nodes": self.nodes,
        }


def check_apath(A: Algebroid, path: APath, tol: float = APATH_RESIDUAL_TOL) -> APathReport:
    """Anchor condition ρ(a) = γ′ at the nodes"""
    inside = A.chart.contains(path.base)
    if not inside.all():
        index = int(np.nonzero(~inside)[0][0])
        raise LeftDomainError(index, path.base[index])
    residuals = tangency_residual(path.times, path.base, anchor_image(A, path), path.segments)
    index = int(np.argmax(residuals))
    residual = float(residuals[index])
    verdict = Verdict.VALID if residual <= tol else Verdict.INVALID
    return APathReport(verdict, residual, float(path.times[index]), int(path.times.shape[0]))


def base_path_from_fiber(
    A: Algebroid,
    y: Sequence[float],
    alpha_x: np.ndarray,
    splitting: Splitting,
    h_lift: Optional[np.ndarray] = None,
) -> Union[APath, List[APath]]:
    """Integral curve of Σ λ_i(t) ξ_i from y, with the fiber assembled through the splitting.

    alpha_x holds ξ-coordinates on the uniform grid of [0, 1], shape (T, n) or
    (N, T, n) for a batch of start points y (N, dim V).
    """
    alpha = np.asarray(alpha_x, dtype=float)
    batch = alpha.ndim == 3
    if not batch:
        alpha = alpha[None]
    count, nodes, n = alpha.shape
    if n != splitting.n:
        raise DimensionMismatchError(f"Fiber path has {n} coordinates, F_x has {splitting.n}")
    if nodes < 2:
        raise APathError("Fiber path needs at least two grid nodes")
    starts = np.broadcast_to(np.atleast_2d(np.asarray(y, dtype=float)), (count, A.chart.dimension))
    times = np.linspace(0.0, 1.0, nodes)

    if n and np.any(alpha):
        family = FieldFamily(splitting.xi_fields())
        spline = CubicSpline(times, alpha, axis=1)

        def rhs(t, points):
            return family.combination(spline(t), points)

        trace: List[np.ndarray] = []
        rk4(rhs, starts, 0.0, 1.0, 1.0 / ((nodes - 1) * SUBSTEPS), A.chart, trace)
        base = np.stack(trace[::SUBSTEPS], axis=1)
    else:
        base = np.repeat(starts[:, None, :], nodes, axis=1)

    k = splitting.k
    # explicit sizes: reshape(-1, 0) is ambiguous when k or n is zero
    if h_lift is None or k == 0:
        h = np.zeros((count, nodes, k))
    else:
        lift = np.asarray(h_lift, dtype=float)
        h = np.broadcast_to(lift.reshape(lift.size // (nodes * k), nodes, k), (count, nodes, k))
    fiber = splitting.fiber_from(
        alpha.reshape(count * nodes, n),
        h.reshape(count * nodes, k),
        base.reshape(count * nodes, A.chart.dimension),
    ).reshape(count, nodes, A.rank)
    paths = [APath(A, times, base[i], fiber[i]) for i in range(count)]
    return paths if batch else paths[0]


def fiber_coordinates(path: APath, splitting: Splitting) -> Tuple[np.ndarray, np.ndarray]:
    """(λ, h) of the fiber in the moving frame at every node"""
    return splitting.split_coordinates(path.base, path.fiber)


def holonomy(path: APath, splitting: Splitting) -> np.ndarray:
    """∫₀¹ j(a(t)) dt by the trapezoid rule"""
    _, h = fiber_coordinates(path, splitting)
    if splitting.k == 0:
        return np.zeros(0)
    return trapezoid(h, path.times, axis=0)


def concatenate_paths(*paths: APath, tol: float = JUNCTION_TOL) -> APath:
    """Run the paths one after the other, each reparametrized onto [i/N, (i+1)/N]"""
    if not paths:
        raise APathError("Nothing to concatenate")
    count = len(paths)
    for previous, following in zip(paths, paths[1:]):
        gap = float(np.max(np.abs(previous.target - following.source)))
        if gap > tol:
            raise APathError(f"Junction gap {gap:.3g} exceeds {tol:g}")
    times, base, fiber, segments = [], [], [], []
    offset = 0
    for i, path in enumerate(paths):
        times.append((i + path.times) / count)
        base.append(path.base)
        fiber.append(count * path.fiber)
        segments.extend((start + offset, end + offset) for start, end in path.segments)
        offset += path.times.shape[0]
    return APath(paths[0].algebroid, np.concatenate(times), np.vstack(base), np.vstack(fiber), tuple(segments))


def reverse_path(path: APath) -> APath:
    """t ↦ 1 − t with negated fiber"""
    last = path.times.shape[0] - 1
    segments = tuple((last - end, last - start) for start, end in reversed(path.segments))
    return APath(path.algebroid, 1.0 - path.times[::-1], path.base[::-1], -path.fiber[::-1], segments)


def apath_to_csv(path: APath, destination: Union[str, Path]) -> Path:
    """Columns t, base coordinates, fiber coordinates"""
    destination = Path(destination)
    A = path.algebroid
    with destination.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", *A.chart.variables, *A.frame])
        for t, point, fiber in zip(path.times, path.base, path.fiber):
            writer.writerow([repr(float(t)), *(repr(float(c)) for c in point), *(repr(float(c)) for c in fiber)])
    logger.info(f"📄 A-path written to {destination}")
    return destination


# --- the bi-submersion Z ------------------------------------------------------

def isotropy_group_model(splitting: Splitting) -> Optional[GroupModel]:
    """Abelian when the kernel bracket vanishes at x, truncated BCH otherwise"""
    if splitting.k == 0:
        return None
    if splitting.abelian:
        return AbelianGroupModel(splitting.k)
    constants = np.array([[[float(v) for v in cell] for cell in row] for row in splitting.h_table])
    return BCHGroupModel(constants, BCH_RADIUS)


@dataclass
class ZBisubmersion:
    algebroid: Algebroid
    point: Tuple
    splitting: Splitting
    bisubmersion: BiSubmersion
    group_model: Optional[GroupModel]

    @property
    def n(self) -> int:
        return self.splitting.n

    @property
    def k(self) -> int:
        return self.splitting.k

    @property
    def base_dimension(self) -> int:
        return self.algebroid.chart.dimension

    def split(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        z = np.atleast_2d(z)
        d, n = self.base_dimension, self.n
        return z[:, :d], z[:, d:d + n], z[:, d + n:]

    @property
    def t_depends_on_group(self) -> bool:
        """Whether any group coordinate appears in a symbolic t_Z"""
        t = self.bisubmersion.t
        group = set(self.bisubmersion.chart.symbols[self.base_dimension + self.n:])
        components = getattr(t, "components", None)
        if components is None:
            return False
        return any(c.free_symbols & group for c in components)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "algebroid": self.algebroid.name,
            "point": [str(c) for c in self.splitting.point],
            "n": self.n,
            "k": self.k,
            "group_model": self.group_model.to_dict() if self.group_model is not None else None,
            "t_depends_on_group": self.t_depends_on_group,
            "splitting": self.splitting.to_dict(),
            "bisubmersion": self.bisubmersion.to_dict(),
        }


def build_weinstein_bisubmersion(
    A: Algebroid,
    x: Sequence,
    inner_product: Optional[Sequence[Sequence[float]]] = None,
    kernel: Optional[KernelModuleReport] = None,
    samples: int = SAMPLES,
    seed: int = 0,
    radius: float = BALL_RADIUS,
    flow_step: float = SWEEP_FLOW_STEP,
) -> ZBisubmersion:
    """Path-holonomy bi-submersion of the ξ fields, extended by the isotropy group"""
    kernel = kernel or kernel_module(A)
    splitting = leaf_splitting(A, x, inner_product, kernel)
    model = isotropy_group_model(splitting)
    mod = induced_foliation(A)
    name = f"{A.chart.name}_Z" if model is not None else None
    B = build_path_holonomy(
        mod,
        [float(c) for c in splitting.point],
        generators=splitting.xi_fields(),
        group_model=model,
        name=name,
        samples=samples,
        seed=seed,
        radius=radius,
        flow_step=flow_step,
    )
    Z = ZBisubmersion(A, tuple(splitting.point), splitting, B, model)
    logger.info(f"🚀 Weinstein bi-submersion of {A.name}: n = {Z.n}, k = {Z.k}")
    return Z


# --- representatives ----------------------------------------------------------

@dataclass
class WeinsteinRep:
    path: APath
    source: np.ndarray
    target: np.ndarray
    holonomy: Optional[np.ndarray]
    residual: float
    target_gap: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source.tolist(),
            "target": self.target.tolist(),
            "holonomy": None if self.holonomy is None else self.holonomy.tolist(),
            "residual": self.residual,
            "target_gap": self.target_gap,
        }


def psi_representative(Z: ZBisubmersion, z: np.ndarray, grid: int = APATH_GRID) -> Union[WeinsteinRep, List[WeinsteinRep]]:
    """A-path of the straight-line lifts of λ and log g, with its invariants"""
    array = np.asarray(z, dtype=float)
    batch = array.ndim == 2
    y, lam, h = Z.split(array)
    if Z.group_model is not None:
        Z.group_model.check_ball(h)
    nodes = grid + 1
    alpha = np.repeat(lam[:, None, :], nodes, axis=1)
    lifts = np.repeat(h[:, None, :], nodes, axis=1)
    paths = base_path_from_fiber(Z.algebroid, y, alpha, Z.splitting, lifts)
    targets = Z.bisubmersion.t.evaluate(np.atleast_2d(array))
    abelian = Z.group_model is None or Z.group_model.kind == GroupKind.ABELIAN
    reps = []
    for path, expected in zip(paths, targets):
        report = check_apath(Z.algebroid, path)
        if report.verdict != Verdict.VALID:
            raise APathError(f"Representative fails the anchor condition by {report.residual:.3g}")
        gap = float(np.max(np.abs(path.target - expected)))
        if gap > APATH_RESIDUAL_TOL:
            raise APathError(f"Representative ends {gap:.3g} away from t_Z(z)")
        reps.append(WeinsteinRep(
            path,
            path.source,
            path.target,
            holonomy(path, Z.splitting) if abelian else None,
            report.residual,
            gap,
        ))
    return reps if batch else reps[0]


# --- diagram check ------------------------------------------------------------

@dataclass
class WeinsteinDiagramReport:
    name: str
    verdict: Verdict
    samples: int
    source_target_gap: float = 0.0
    holonomy_gap: Optional[float] = None
    witness: Optional[Dict[str, Any]] = None
    pair_check: Optional[PsiDiagramReport] = None
    notes: List[str] = field(default_factory=list)

    def raise_for_failure(self) -> None:
        if self.verdict == Verdict.INVARIANT_MISMATCH:
            raise InvariantMismatchError(f"{self.name}: representative invariants differ", self.witness)
        if self.pair_check is not None:
            self.pair_check.raise_for_failure()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "samples": self.samples,
            "source_target_gap": self.source_target_gap,
            "holonomy_gap": self.holonomy_gap,
            "witness": self.witness,
            "pair_check": self.pair_check.to_dict() if self.pair_check is not None else None,
            "notes": self.notes,
        }


def diagram_check_weinstein(
    Z: ZBisubmersion,
    samples: int = SAMPLES,
    seed: int = 0,
    tol: float = TOLERANCE,
    grid: int = APATH_GRID,
) -> WeinsteinDiagramReport:
    """ψ of the φ_Z middle against ψ(z1) ψ(z2)⁻¹ ψ(z3) on sampled triples"""
    B = Z.bisubmersion
    report = WeinsteinDiagramReport(B.name, Verdict.INCONCLUSIVE, samples)
    report.notes.append("equal invariants are necessary, not sufficient, for equal classes")
    space = build_triple_space(B, None, samples, seed)
    _, solution, _ = solve_phi(space, tol, seed)
    if not solution.converged.all() or np.max(solution.irreducible) > tol:
        report.notes.append("no middle component on every sampled triple")
        return report

    middle = psi_representative(Z, solution.z, grid)
    firsts = psi_representative(Z, space.first, grid)
    seconds = psi_representative(Z, space.middle, grid)
    thirds = psi_representative(Z, space.last, grid)
    abelian = middle[0].holonomy is not None
    worst_st, worst_h = 0.0, 0.0
    worst, witness_index = 0.0, None
    for i, (w, a, b, c) in enumerate(zip(middle, firsts, seconds, thirds)):
        product = concatenate_paths(c.path, reverse_path(b.path), a.path, tol=APATH_RESIDUAL_TOL)
        gap = float(max(np.max(np.abs(w.source - product.source)), np.max(np.abs(w.target - product.target))))
        h_gap = 0.0
        if abelian:
            h_gap = float(np.max(np.abs(w.holonomy - holonomy(product, Z.splitting)), initial=0.0))
        if max(gap, h_gap) > worst:
            worst, witness_index = max(gap, h_gap), i
        worst_st, worst_h = max(worst_st, gap), max(worst_h, h_gap)
    report.source_target_gap = worst_st
    report.holonomy_gap = worst_h if abelian else None
    if not abelian:
        report.notes.append("holonomy compared only for abelian isotropy models")
    if worst > APATH_RESIDUAL_TOL:
        report.verdict = Verdict.INVARIANT_MISMATCH
        report.witness = {
            "first": space.first[witness_index].tolist(),
            "middle": space.middle[witness_index].tolist(),
            "last": space.last[witness_index].tolist(),
            "z": solution.z[witness_index].tolist(),
            "source_target_gap": worst_st,
            "holonomy_gap": worst_h,
        }
    else:
        report.verdict = Verdict.INVARIANTS_MATCH
    if Z.k == 0:
        report.pair_check = check_psi_diagram(B, pair_psi(B), samples=samples, seed=seed, tol=max(tol, APATH_RESIDUAL_TOL))
        if report.pair_check.verdict == Verdict.COMMUTATION_FAILURE:
            report.verdict = Verdict.COMMUTATION_FAILURE
    logger.info(f"{'✅' if report.verdict == Verdict.INVARIANTS_MATCH else '❌'} {B.name}: Weinstein diagram {report.verdict.value}")
    return report
