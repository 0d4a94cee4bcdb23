#!/usr/bin/env python3
"""
Local Lie group models and the groupoids used as targets of ψ-maps.

Group models act on Lie-algebra (log) coordinates h ∈ ℝ^k: abelian models add,
BCH models multiply with the order-4 Baker–Campbell–Hausdorff series of a
structure-constant table, matrix models multiply exp(Σ h_i B_i) with scipy.
Groupoids act on flat element vectors and work on float arrays or on object
arrays of Fractions (exact arithmetic).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import expm, logm

from folia.utils.errors import FiberedMismatchError, OutsideValidityBallError

logger = logging.getLogger(__name__)

# Coordinates that agree within this are the same base point for float elements
FIBER_MATCH_TOL = 1e-9


class GroupKind(Enum):
    """Kinds of local group models"""
    ABELIAN = "abelian"
    MATRIX = "matrix"
    BCH = "bch"


class GroupModel:
    """Local Lie group in log coordinates, valid on a ball of the given radius"""
    kind: GroupKind

    def __init__(self, dimension: int, radius: float = float("inf")):
        self.dimension = dimension
        self.radius = radius

    def check_ball(self, h: np.ndarray) -> None:
        h = np.atleast_2d(np.asarray(h, dtype=float))
        norms = np.linalg.norm(h, axis=1) if h.size else np.zeros(h.shape[0])
        if np.any(norms > self.radius):
            index = int(np.argmax(norms))
            raise OutsideValidityBallError(
                f"{self.kind.value} group element of norm {norms[index]:.6g} outside the validity ball of radius {self.radius}"
            )

    def identity(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, a: np.ndarray) -> np.ndarray:
        return -np.asarray(a)

    def middle(self, g1: np.ndarray, g2: np.ndarray, g3: np.ndarray) -> np.ndarray:
        """g1 g2⁻¹ g3 in log coordinates"""
        for g in (g1, g2, g3):
            self.check_ball(g)
        return self.compose(self.compose(g1, self.inverse(g2)), g3)

    def to_dict(self) -> Dict[str, Any]:
        radius = None if np.isinf(self.radius) else self.radius
        return {"kind": self.kind.value, "dimension": self.dimension, "radius": radius}


class AbelianGroupModel(GroupModel):
    """Vector group ℝ^k"""
    kind = GroupKind.ABELIAN

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a) + np.asarray(b)


class BCHGroupModel(GroupModel):
    """Local group of a Lie algebra given by structure constants c[i][j][k]: [e_i, e_j] = Σ c_ij^k e_k"""
    kind = GroupKind.BCH
    order = 4

    def __init__(self, structure_constants: np.ndarray, radius: float = 0.5):
        constants = np.asarray(structure_constants, dtype=float)
        super().__init__(constants.shape[0], radius)
        if constants.shape != (self.dimension,) * 3:
            raise ValueError(f"Structure constants must have shape (k, k, k), got {constants.shape}")
        if not np.allclose(constants, -constants.transpose(1, 0, 2)):
            raise ValueError("Structure constants are not antisymmetric")
        self.structure_constants = constants

    def bracket(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...j,ijk->...k", a, b, self.structure_constants)

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """log(exp a · exp b) truncated at order 4"""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        ab = self.bracket(a, b)
        return (
            a + b + ab / 2
            + (self.bracket(a, ab) + self.bracket(b, self.bracket(b, a))) / 12
            - self.bracket(b, self.bracket(a, ab)) / 24
        )

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result["order"] = self.order
        return result


class MatrixGroupModel(GroupModel):
    """Matrix group exp(span of basis matrices), elements handled as matrices or log coordinates"""
    kind = GroupKind.MATRIX

    def __init__(self, basis: Sequence[np.ndarray], radius: float = 1.0):
        basis = np.asarray(basis, dtype=float)
        super().__init__(basis.shape[0], radius)
        flat = basis.reshape(self.dimension, -1)
        if self.dimension and np.linalg.matrix_rank(flat) < self.dimension:
            raise ValueError("Matrix group basis is linearly dependent")
        self.basis = basis
        self.size = basis.shape[1]
        self._flat = flat

    def exp(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        return expm(np.tensordot(h, self.basis, axes=1))

    def log(self, g: np.ndarray) -> np.ndarray:
        algebra = np.real(logm(np.asarray(g, dtype=float)))
        coordinates, *_ = np.linalg.lstsq(self._flat.T, algebra.reshape(-1), rcond=None)
        return coordinates

    def roundtrip_error(self, h: np.ndarray) -> float:
        return float(np.linalg.norm(self.log(self.exp(h)) - np.asarray(h, dtype=float)))

    def check_matrix(self, g: np.ndarray) -> None:
        self.check_ball(self.log(g))

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        single = np.ndim(a) == 1
        pairs = zip(np.atleast_2d(a), np.atleast_2d(b))
        result = np.array([self.log(self.exp(x) @ self.exp(y)) for x, y in pairs])
        return result[0] if single else result

    def matrix_middle(self, g1: np.ndarray, g2: np.ndarray, g3: np.ndarray) -> np.ndarray:
        for g in (g1, g2, g3):
            self.check_matrix(g)
        return g1 @ np.linalg.inv(g2) @ g3

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result["matrix_size"] = self.size
        return result


@dataclass(frozen=True)
class BundleElement:
    """Group element over a base point of a bundle of groups"""
    base: Tuple[Any, ...]
    value: Any


def _same_base(a: Sequence, b: Sequence) -> bool:
    a_arr, b_arr = np.asarray(a, dtype=object), np.asarray(b, dtype=object)
    if a_arr.shape != b_arr.shape:
        return False
    if all(isinstance(v, (int, Fraction)) for v in list(a) + list(b)):
        return bool(np.all(a_arr == b_arr))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=FIBER_MATCH_TOL))


def local_phi_from_group(model: GroupModel, triple: Sequence[Any]) -> Tuple[Any, Any, Any]:
    """(g1, g2, g3) ↦ (g3, g1 g2⁻¹ g3, g1)"""
    g1, g2, g3 = triple
    if isinstance(g1, BundleElement):
        if not (_same_base(g1.base, g2.base) and _same_base(g2.base, g3.base)):
            raise FiberedMismatchError("Bundle elements of the triple lie over different base points")
        inner = local_phi_from_group(model, (g1.value, g2.value, g3.value))
        return (g3, BundleElement(g1.base, inner[1]), g1)
    if isinstance(model, MatrixGroupModel) and np.ndim(g1) == 2:
        return (g3, model.matrix_middle(np.asarray(g1), np.asarray(g2), np.asarray(g3)), g1)
    middle = model.middle(np.asarray(g1, dtype=float), np.asarray(g2, dtype=float), np.asarray(g3, dtype=float))
    return (g3, middle, g1)


Element = Union[np.ndarray, Sequence]


def _array(element: Element) -> np.ndarray:
    if isinstance(element, np.ndarray):
        return element
    values = list(element)
    if values and all(isinstance(v, (int, Fraction)) for v in values):
        return np.array([Fraction(v) for v in values], dtype=object)
    return np.asarray(values, dtype=float)


def _matches(a: np.ndarray, b: np.ndarray, tol: float = FIBER_MATCH_TOL) -> np.ndarray:
    """Row-wise equality of base points: exact for object arrays"""
    if a.dtype == object or b.dtype == object:
        return np.all(a == b, axis=-1)
    return np.all(np.abs(a - b) <= tol, axis=-1)


class Groupoid:
    """Groupoid with elements stored as flat vectors along the last axis"""
    name = "groupoid"

    def __init__(self, base_dim: int):
        self.base_dim = base_dim

    @property
    def element_dim(self) -> int:
        raise NotImplementedError

    def source(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def target(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def compose(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        """g·h, defined when s(g) = t(h)"""
        raise NotImplementedError

    def inverse(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def phi(self, g: Element, h: Element, zeta: Element, tol: float = FIBER_MATCH_TOL) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(g, h, ζ) ↦ (ζ, g h⁻¹ ζ, g) on the fibered product s(g)=s(h), t(h)=t(ζ)"""
        g, h, zeta = _array(g), _array(h), _array(zeta)
        if not np.all(_matches(self.source(g), self.source(h), tol)):
            raise FiberedMismatchError(f"s(g) != s(h) in the {self.name} triple")
        if not np.all(_matches(self.target(h), self.target(zeta), tol)):
            raise FiberedMismatchError(f"t(h) != t(ζ) in the {self.name} triple")
        middle = self.compose(self.compose(g, self.inverse(h)), zeta)
        return zeta, middle, g

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "base_dim": self.base_dim}


class PairGroupoid(Groupoid):
    """M×M with element (a, b): target a, source b"""
    name = "pair"

    @property
    def element_dim(self) -> int:
        return 2 * self.base_dim

    def source(self, g):
        g = _array(g)
        return g[..., self.base_dim:]

    def target(self, g):
        g = _array(g)
        return g[..., :self.base_dim]

    def compose(self, g, h):
        g, h = _array(g), _array(h)
        return np.concatenate([self.target(g), self.source(h)], axis=-1)

    def inverse(self, g):
        g = _array(g)
        return np.concatenate([self.source(g), self.target(g)], axis=-1)


class TranslationGroupoid(Groupoid):
    """Action groupoid of ℝⁿ on itself: element (y, λ), source y, target y + λ"""
    name = "translation"

    @property
    def element_dim(self) -> int:
        return 2 * self.base_dim

    def source(self, g):
        g = _array(g)
        return g[..., :self.base_dim]

    def target(self, g):
        g = _array(g)
        return g[..., :self.base_dim] + g[..., self.base_dim:]

    def compose(self, g, h):
        g, h = _array(g), _array(h)
        return np.concatenate([self.source(h), h[..., self.base_dim:] + g[..., self.base_dim:]], axis=-1)

    def inverse(self, g):
        g = _array(g)
        return np.concatenate([self.target(g), -g[..., self.base_dim:]], axis=-1)


class GroupBundle(Groupoid):
    """Bundle of groups over the base: element (x, h), s = t = x"""
    name = "group_bundle"

    def __init__(self, base_dim: int, model: GroupModel):
        super().__init__(base_dim)
        self.model = model

    @property
    def element_dim(self) -> int:
        return self.base_dim + self.model.dimension

    def source(self, g):
        g = _array(g)
        return g[..., :self.base_dim]

    def target(self, g):
        g = _array(g)
        return g[..., :self.base_dim]

    def compose(self, g, h):
        g, h = _array(g), _array(h)
        values = self.model.compose(g[..., self.base_dim:], h[..., self.base_dim:])
        return np.concatenate([self.source(h), np.asarray(values, dtype=h.dtype)], axis=-1)

    def inverse(self, g):
        g = _array(g)
        return np.concatenate([self.source(g), self.model.inverse(g[..., self.base_dim:])], axis=-1)

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result["model"] = self.model.to_dict()
        return result


def groupoid_phi(triple: Sequence[Element], groupoid: Optional[Groupoid] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """φ_G(g, h, ζ) = (ζ, g h⁻¹ ζ, g); the pair groupoid of the element's base by default"""
    g, h, zeta = triple
    if groupoid is None:
        length = len(g) if not isinstance(g, np.ndarray) else g.shape[-1]
        if length % 2:
            raise FiberedMismatchError(f"Pair-groupoid elements need even length, got {length}")
        groupoid = PairGroupoid(length // 2)
    return groupoid.phi(g, h, zeta)
