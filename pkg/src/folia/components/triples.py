#!/usr/bin/env python3
"""
The algebraic route for bi-submersions.

Triples (u1, u2, u3) of the fibered product U ×_s U ×_t U are sampled through
the chart χ(ξ, u, η) = (α_ξ(u), u, β_η(u)). The map φ(u1, u2, u3) = (u3, z, u1)
needs a middle component z with s(z) = s(u3) and t(z) = t(u1): it is taken from
the construction's candidate when that satisfies the constraints, and solved by
batched Newton iteration otherwise. Smoothness of z is judged by a
finite-difference heuristic that reports NonSmoothCandidate, never a proof.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from folia.components.bisubm import MAX_RADIUS_HALVINGS, BiSubmersion, StackedMap
from folia.components.flows import FieldFamily
from folia.components.groups import Groupoid, PairGroupoid
from folia.config.configuration import NEWTON_MAX_ITER, NEWTON_TOL, SAMPLES, TOLERANCE
from folia.constants import (
    DIAGONAL_TOL,
    NON_SMOOTH_RATIO_MIN,
    SMOOTH_RATIO_MAX,
    SMOOTHNESS_STEPS,
    TRIPLE_CONSTRAINT_TOL,
    TRIPLE_INJECTIVITY_TOL,
    Verdict,
)
from folia.utils.errors import CommutationFailureError, FiberedMismatchError, FlowEscapeError, LeftDomainError
from folia.utils.polynomial_system import float_rank
from folia.utils.sampling import make_rng, sample_ball

logger = logging.getLogger(__name__)

# Sampled triples that enter the smoothness table
SMOOTHNESS_SUBSAMPLE = 12

# Sampled base points that seed the degenerate-frame probes
PROBE_POINTS = 4
PROBE_SIGMA_TOL = 1e-6

POLISH_STEPS = 2
RETRIES = 2
JITTER = 1e-3


@dataclass
class TripleSpace:
    """Sampled χ-chart of the fibered product around a base point of U"""
    bisubmersion: BiSubmersion
    base: np.ndarray
    radius: float
    params: np.ndarray
    first: np.ndarray
    middle: np.ndarray
    last: np.ndarray
    constraint_residual: float = 0.0
    injectivity: float = float("inf")

    @property
    def moves(self):
        return self.bisubmersion.fiber_moves()

    @property
    def s_dim(self) -> int:
        return self.moves.s_dim

    @property
    def t_dim(self) -> int:
        return self.moves.t_dim

    def split(self, params: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, n = self.s_dim, self.bisubmersion.chart.dimension
        return params[:, :a], params[:, a:a + n], params[:, a + n:]

    def chi(self, params: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ξ, u, η) ↦ (α_ξ(u), u, β_η(u))"""
        xi, u, eta = self.split(np.atleast_2d(params))
        return self.moves.s_move(xi, u), u.copy(), self.moves.t_move(eta, u)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base.tolist(),
            "radius": self.radius,
            "samples": int(self.params.shape[0]),
            "constraint_residual": self.constraint_residual,
            "injectivity": self.injectivity,
        }


def _fiber_residual(B: BiSubmersion, first, middle, last) -> np.ndarray:
    s_gap = np.abs(B.s.evaluate(first) - B.s.evaluate(middle)).max(axis=1)
    t_gap = np.abs(B.t.evaluate(middle) - B.t.evaluate(last)).max(axis=1)
    return np.maximum(s_gap, t_gap)


def build_triple_space(
    B: BiSubmersion,
    base: Optional[Sequence[float]] = None,
    count: int = SAMPLES,
    seed: Optional[int] = None,
    radius: Optional[float] = None,
) -> TripleSpace:
    """Sample χ on a ball, halving the radius while flows leave the chart"""
    center = B.base_point(base)
    radius = radius or B.ball_radius
    seed = B.seed if seed is None else seed
    moves = B.fiber_moves()
    for _ in range(MAX_RADIUS_HALVINGS + 1):
        rng = make_rng(seed)
        params = np.hstack([
            sample_ball(np.zeros(moves.s_dim), radius, count, rng),
            sample_ball(center, radius, count, rng),
            sample_ball(np.zeros(moves.t_dim), radius, count, rng),
        ])
        space = TripleSpace(B, center, radius, params, *(np.empty(0),) * 3)
        try:
            space.first, space.middle, space.last = space.chi(params)
        except LeftDomainError as exc:
            logger.info(f"⚠️ Fiber moves left the chart at radius {radius}: {exc}")
            radius /= 2
            continue
        break
    else:
        raise FlowEscapeError(f"Fiber moves of {B.name} leave the chart even at radius {radius * 2}")

    space.constraint_residual = float(np.max(_fiber_residual(B, space.first, space.middle, space.last)))
    if space.constraint_residual > TRIPLE_CONSTRAINT_TOL:
        logger.warning(f"⚠️ Sampled triples miss the fibered product by {space.constraint_residual:.3g}")
    if count > 1:
        triples = np.hstack([space.first, space.middle, space.last])
        space.injectivity = float(np.min(pdist(triples)))
        if space.injectivity <= TRIPLE_INJECTIVITY_TOL:
            logger.warning(f"⚠️ Distinct parameters give triples {space.injectivity:.3g} apart")
    logger.info(f"Sampled {count} triples of {B.name} at radius {radius}")
    return space


# --- middle component ----------------------------------------------------------

@dataclass
class MiddleSolution:
    """Middle components with residuals over the selected and the remaining constraint rows"""
    z: np.ndarray
    residual: np.ndarray
    irreducible: np.ndarray
    converged: np.ndarray


class PhiSolver:
    """Batched Newton solve of s(z) = s(u3), t(z) = t(u1) with prioritized rows"""

    def __init__(self, B: BiSubmersion, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER, seed: int = 0):
        self.B = B
        self.tol = tol
        self.max_iter = max_iter
        self.step_cap = B.ball_radius
        self.rng = make_rng(seed)

    def rows(self, z: np.ndarray, s_target: np.ndarray, t_target: np.ndarray) -> np.ndarray:
        return np.hstack([self.B.s.evaluate(z) - s_target, self.B.t.evaluate(z) - t_target])

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        return np.concatenate([self.B.s.jacobian_at(z), self.B.t.jacobian_at(z)], axis=1)

    @staticmethod
    def select_rows(jacobians: np.ndarray) -> np.ndarray:
        """Greedy independent rows, s-rows first"""
        count, nrows, _ = jacobians.shape
        mask = np.zeros((count, nrows), dtype=bool)
        for i, J in enumerate(jacobians):
            chosen: List[int] = []
            for r in range(nrows):
                if float_rank(J[chosen + [r]]) > len(chosen):
                    chosen.append(r)
            mask[i, chosen] = True
        return mask

    def constraint_rows(self, z, first, last) -> np.ndarray:
        return self.rows(z, self.B.s.evaluate(last), self.B.t.evaluate(first))

    def _newton(self, s_target: np.ndarray, t_target: np.ndarray, seed: np.ndarray) -> MiddleSolution:
        z = np.array(seed, dtype=float, copy=True)
        mask = self.select_rows(self.jacobian(z))
        broken = np.zeros(z.shape[0], dtype=bool)
        polish = 0
        try:
            for _ in range(self.max_iter + POLISH_STEPS):
                G = np.where(mask, self.rows(z, s_target, t_target), 0.0)
                residual = np.abs(G).max(axis=1)
                if np.all((residual <= self.tol) | broken):
                    if polish == POLISH_STEPS:
                        break
                    polish += 1
                    active = ~broken
                else:
                    active = (residual > self.tol) & ~broken
                J = self.jacobian(z[active]) * mask[active][..., None]
                step = (np.linalg.pinv(J, rcond=1e-12) @ G[active][..., None])[..., 0]
                norms = np.linalg.norm(step, axis=1, keepdims=True)
                step *= np.minimum(1.0, self.step_cap / np.maximum(norms, 1e-300))
                stalled = (norms[:, 0] < 1e-14) & (residual[active] > self.tol)
                if stalled.any():
                    step[stalled] = self.rng.normal(scale=JITTER, size=(int(stalled.sum()), z.shape[1]))
                z[active] -= step
                broken |= ~np.all(np.isfinite(z), axis=1)
                z[broken] = seed[broken]
        except LeftDomainError as exc:
            logger.info(f"⚠️ Newton iterate left the chart: {exc}")
            broken |= True
        G = self.rows(z, s_target, t_target)
        residual = np.where(mask, np.abs(G), 0.0).max(axis=1)
        irreducible = np.where(mask, 0.0, np.abs(G)).max(axis=1) if G.shape[1] else np.zeros(len(z))
        converged = (residual <= self.tol) & ~broken
        return MiddleSolution(z, residual, irreducible, converged)

    def solve(self, first: np.ndarray, last: np.ndarray, seed: np.ndarray) -> MiddleSolution:
        """Newton from the seed; rows dropped at a degenerate seed get jittered retries"""
        s_target, t_target = self.B.s.evaluate(last), self.B.t.evaluate(first)
        solution = self._newton(s_target, t_target, seed)
        for _ in range(RETRIES):
            retry = solution.converged & (solution.irreducible > self.tol)
            if not retry.any():
                break
            jittered = solution.z[retry] + self.rng.normal(scale=JITTER, size=solution.z[retry].shape)
            second = self._newton(s_target[retry], t_target[retry], jittered)
            better = second.converged & (second.irreducible < solution.irreducible[retry])
            index = np.nonzero(retry)[0][better]
            for name in ("z", "residual", "irreducible", "converged"):
                getattr(solution, name)[index] = getattr(second, name)[better]
        return solution


CANDIDATE = "candidate"
NEWTON = "newton"


def _middles(space: TripleSpace, solver: PhiSolver, params: np.ndarray, mode: Optional[str], tol: float):
    """Middle components at the given parameters; the mode is decided when not given"""
    first, middle, last = space.chi(params)
    xi, u, eta = space.split(params)
    candidate = space.moves.candidate(xi, u, eta, first, last)
    if candidate is not None and mode != NEWTON:
        rows = np.abs(solver.constraint_rows(candidate, first, last))
        residual = rows.max(axis=1)
        if mode == CANDIDATE or np.all(residual <= tol):
            ok = np.all(np.isfinite(candidate), axis=1)
            return CANDIDATE, MiddleSolution(candidate, residual, residual, ok)
    seed = candidate if candidate is not None else middle
    return NEWTON, solver.solve(first, last, seed)


def _ratio(small: float, large: float) -> float:
    if max(small, large) < 1e-8:
        return 1.0
    return small / max(large, 1e-12)


@dataclass
class SmoothnessRow:
    """Finite-difference norms D_h of the middle component at one triple"""
    kind: str
    index: int
    norms: List[float]
    ratios: List[float] = field(default_factory=list)
    overall: float = 1.0
    converged: bool = True

    def __post_init__(self):
        if self.converged:
            self.ratios = [_ratio(b, a) for a, b in zip(self.norms, self.norms[1:])]
            self.overall = _ratio(self.norms[-1], self.norms[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "index": self.index,
            "steps": list(SMOOTHNESS_STEPS),
            "norms": self.norms,
            "ratios": self.ratios,
            "overall": self.overall,
            "converged": self.converged,
        }


def _smoothness_rows(space: TripleSpace, solver: PhiSolver, mode: str, params: np.ndarray, kinds: Sequence[Tuple[str, int]], tol: float) -> List[SmoothnessRow]:
    count, width = params.shape
    batches = []
    for h in SMOOTHNESS_STEPS:
        for j in range(width):
            for sign in (1.0, -1.0):
                shifted = params.copy()
                shifted[:, j] += sign * h
                batches.append(shifted)
    _, solution = _middles(space, solver, np.vstack(batches), mode, tol)
    shape = (len(SMOOTHNESS_STEPS), width, 2, count)
    z = solution.z.reshape(shape + (-1,))
    ok = solution.converged.reshape(shape).all(axis=(1, 2))
    steps = np.asarray(SMOOTHNESS_STEPS)[:, None]
    differences = np.linalg.norm(z[:, :, 0] - z[:, :, 1], axis=-1).max(axis=1) / (2 * steps)
    rows = []
    for i, (kind, index) in enumerate(kinds):
        rows.append(SmoothnessRow(kind, index, [float(v) for v in differences[:, i]], converged=bool(ok[:, i].all())))
    return rows


def _degenerate_probes(space: TripleSpace) -> List[np.ndarray]:
    """Triples (0, u, η*) where the combined kernel frame drops rank at β_η*(u)"""
    B = space.bisubmersion
    if B.moves is not None or not B.symbolic_frames or space.t_dim == 0:
        return []
    frames = tuple(B.kernel_s) + tuple(B.kernel_t)
    if len(frames) > B.chart.dimension:
        return []
    family = FieldFamily(frames)
    _, u_samples, _ = space.split(space.params)
    order = np.argsort(-np.linalg.norm(u_samples - space.base, axis=1))[:PROBE_POINTS]
    probes = []
    for index in order:
        u = u_samples[index][None]

        def objective(eta: np.ndarray) -> float:
            excess = np.linalg.norm(eta) - space.radius
            try:
                w = space.moves.t_move(eta[None], u)
            except LeftDomainError:
                return 1e3
            sigma = np.linalg.svd(family.values(w)[0], compute_uv=False)[-1]
            return float(sigma + 10.0 * max(excess, 0.0))

        simplex = np.vstack([np.zeros(space.t_dim), 0.5 * space.radius * np.eye(space.t_dim)])
        result = minimize(
            objective,
            np.zeros(space.t_dim),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400, "initial_simplex": simplex},
        )
        if result.fun < PROBE_SIGMA_TOL:
            probes.append(np.hstack([np.zeros(space.s_dim), u[0], result.x]))
    if probes:
        logger.info(f"Found {len(probes)} degenerate-frame probes")
    return probes


@dataclass
class PhiCertificate:
    """Outcome of the algebraic route with its sampled evidence"""
    name: str
    verdict: Verdict
    mode: str
    samples: int
    radius: float
    tolerance: float
    max_residual: float
    max_irreducible: float
    diagonal_residual: float
    constraint_residual: float
    injectivity: float
    smoothness: List[SmoothnessRow] = field(default_factory=list)
    witness: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)
    space: Optional[TripleSpace] = field(default=None, repr=False)
    middles: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "verdict": self.verdict.value,
            "mode": self.mode,
            "samples": self.samples,
            "radius": self.radius,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "max_irreducible": self.max_irreducible,
            "diagonal_residual": self.diagonal_residual,
            "constraint_residual": self.constraint_residual,
            "injectivity": self.injectivity,
            "smoothness": [row.to_dict() for row in self.smoothness],
            "witness": self.witness,
            "notes": self.notes,
        }


def _triple_dict(space: TripleSpace, index: int, z: np.ndarray) -> Dict[str, Any]:
    return {
        "first": space.first[index].tolist(),
        "middle": space.middle[index].tolist(),
        "last": space.last[index].tolist(),
        "z": z[index].tolist(),
    }


def solve_phi(space: TripleSpace, tol: float = TOLERANCE, seed: int = 0) -> Tuple[str, MiddleSolution, PhiSolver]:
    solver = PhiSolver(space.bisubmersion, seed=seed)
    mode, solution = _middles(space, solver, space.params, None, tol)
    return mode, solution, solver


def verify_algebraic_bisubmersion(
    B: BiSubmersion,
    base: Optional[Sequence[float]] = None,
    samples: int = SAMPLES,
    tol: float = TOLERANCE,
    seed: Optional[int] = None,
    radius: Optional[float] = None,
) -> PhiCertificate:
    """Look for a smooth φ on sampled triples and classify what was found."""
    space = build_triple_space(B, base, samples, seed, radius)
    mode, solution, solver = solve_phi(space, tol, B.seed if seed is None else seed)

    diagonal_count = min(5, samples)
    diagonal = space.params[:diagonal_count].copy()
    diagonal[:, :space.s_dim] = 0.0
    diagonal[:, space.s_dim + B.chart.dimension:] = 0.0
    _, fixed = _middles(space, solver, diagonal, mode, tol)
    diagonal_residual = float(np.max(np.abs(fixed.z - space.split(diagonal)[1])))

    certificate = PhiCertificate(
        name=B.name,
        verdict=Verdict.INCONCLUSIVE,
        mode=mode,
        samples=samples,
        radius=space.radius,
        tolerance=tol,
        max_residual=float(np.max(solution.residual)),
        max_irreducible=float(np.max(solution.irreducible)),
        diagonal_residual=diagonal_residual,
        constraint_residual=space.constraint_residual,
        injectivity=space.injectivity,
        space=space,
        middles=solution.z,
    )

    inconsistent = solution.converged & (solution.irreducible > tol)
    if inconsistent.any():
        index = int(np.argmax(np.where(inconsistent, solution.irreducible, -1.0)))
        certificate.verdict = Verdict.INCONSISTENT_CONSTRAINTS
        certificate.witness = _triple_dict(space, index, solution.z)
        certificate.witness["irreducible_residual"] = float(solution.irreducible[index])
    elif not solution.converged.all():
        certificate.notes.append(f"middle solve did not converge at {int((~solution.converged).sum())} samples")
    else:
        chosen = np.unique(np.linspace(0, samples - 1, min(SMOOTHNESS_SUBSAMPLE, samples)).astype(int))
        params = [space.params[chosen]]
        kinds = [("sample", int(i)) for i in chosen]
        probes = _degenerate_probes(space)
        if probes:
            params.append(np.vstack(probes))
            kinds.extend(("probe", i) for i in range(len(probes)))
        certificate.smoothness = _smoothness_rows(space, solver, mode, np.vstack(params), kinds, tol)
        rough = [row for row in certificate.smoothness if row.converged and row.overall >= NON_SMOOTH_RATIO_MIN]
        smooth = all(row.converged and max(row.ratios, default=1.0) <= SMOOTH_RATIO_MAX for row in certificate.smoothness)
        if rough:
            worst = max(rough, key=lambda row: row.overall)
            certificate.verdict = Verdict.NON_SMOOTH_CANDIDATE
            certificate.witness = worst.to_dict()
            certificate.notes.append("non-smoothness is a finite-difference heuristic")
        elif smooth and diagonal_residual <= DIAGONAL_TOL:
            certificate.verdict = Verdict.EXISTS
        elif diagonal_residual > DIAGONAL_TOL:
            certificate.notes.append(f"diagonal triples moved by {diagonal_residual:.3g}")
        else:
            certificate.notes.append("finite-difference ratios between the smooth and non-smooth thresholds")
    logger.info(f"{'✅' if certificate.verdict == Verdict.EXISTS else '❌'} {B.name}: φ {certificate.verdict.value} ({mode})")
    return certificate


# --- ψ diagram -----------------------------------------------------------------

@dataclass
class PsiDiagramReport:
    """Commutation of φ_U with φ_G through ψ on sampled triples"""
    name: str
    groupoid: str
    verdict: Verdict
    discrepancy: float
    samples: int
    witness: Optional[Dict[str, Any]] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "groupoid": self.groupoid,
            "verdict": self.verdict.value,
            "discrepancy": self.discrepancy,
            "samples": self.samples,
            "witness": self.witness,
            "notes": self.notes,
        }

    def raise_for_failure(self) -> None:
        if self.verdict == Verdict.COMMUTATION_FAILURE:
            raise CommutationFailureError(
                f"{self.name}: ψ-diagram discrepancy {self.discrepancy:.3g} against {self.groupoid}", self.witness
            )


def pair_psi(B: BiSubmersion) -> StackedMap:
    """ψ = (t, s): U → M × M"""
    return StackedMap("psi", (B.t, B.s))


def check_psi_diagram(
    B: BiSubmersion,
    psi,
    groupoid: Optional[Groupoid] = None,
    base: Optional[Sequence[float]] = None,
    samples: int = SAMPLES,
    seed: Optional[int] = None,
    tol: float = TOLERANCE,
) -> PsiDiagramReport:
    """ψ(middle of φ_U(u1,u2,u3)) against the middle of φ_G(ψ(u1), ψ(u2), ψ(u3))"""
    groupoid = groupoid or PairGroupoid(B.s.target.dimension)
    report = PsiDiagramReport(B.name, groupoid.name, Verdict.INCONCLUSIVE, float("nan"), samples)
    space = build_triple_space(B, base, samples, seed)
    _, solution, _ = solve_phi(space, tol, B.seed if seed is None else seed)
    if not solution.converged.all() or np.max(solution.irreducible) > tol:
        report.notes.append("no middle component on every sampled triple")
        return report

    images = [psi.evaluate(points) for points in (space.first, space.middle, space.last)]
    s_gap = np.abs(groupoid.source(images[0]) - B.s.evaluate(space.first)).max()
    t_gap = np.abs(groupoid.target(images[0]) - B.t.evaluate(space.first)).max()
    if max(s_gap, t_gap) > tol:
        report.verdict = Verdict.COMMUTATION_FAILURE
        report.discrepancy = float(max(s_gap, t_gap))
        report.witness = {"check": "psi intertwines source and target", "gap": report.discrepancy}
        return report
    try:
        _, expected, _ = groupoid.phi(*images, tol=max(tol, 100 * TRIPLE_CONSTRAINT_TOL))
    except FiberedMismatchError as exc:
        report.verdict = Verdict.COMMUTATION_FAILURE
        report.witness = {"check": "fibered product", "message": str(exc)}
        return report
    actual = psi.evaluate(solution.z)
    gaps = np.linalg.norm(np.asarray(actual, dtype=float) - np.asarray(expected, dtype=float), axis=1)
    report.discrepancy = float(gaps.max())
    if report.discrepancy <= tol:
        report.verdict = Verdict.COMMUTES
    else:
        index = int(np.argmax(gaps))
        report.verdict = Verdict.COMMUTATION_FAILURE
        report.witness = _triple_dict(space, index, solution.z)
        report.witness["discrepancy"] = report.discrepancy
    logger.info(f"{'✅' if report.verdict == Verdict.COMMUTES else '❌'} {B.name}: ψ diagram {report.verdict.value}")
    return report
