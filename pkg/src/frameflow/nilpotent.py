"""The 2-step nilpotent group s+ (+) [s+, s+] with dilations and a homogeneous gauge."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NotUnitVector
from .lie_core import LieAlgebraModel, heisenberg_structure

GAUGE_CONSTANT = 16.0
UNIT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class NilModel:
    """Bracket data for n+: z-coordinates of [v, w] are omega[k, i, j] v_i w_j."""

    name: str
    omega: np.ndarray

    @property
    def dim_v(self) -> int:
        return self.omega.shape[1]

    @property
    def dim_z(self) -> int:
        return self.omega.shape[0]

    def bracket(self, v, w) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.omega, v, w)

    def point(self, v, z=None) -> "NilPoint":
        v = np.asarray(v, dtype=float).reshape(self.dim_v)
        z = np.zeros(self.dim_z) if z is None else np.asarray(z, dtype=float).reshape(self.dim_z)
        return NilPoint(v, z, self)

    def identity(self) -> "NilPoint":
        return self.point(np.zeros(self.dim_v))

    def random_point(self, rng, scale=1.0) -> "NilPoint":
        return self.point(scale * rng.standard_normal(self.dim_v),
                          scale * rng.standard_normal(self.dim_z))


def heisenberg_model(field: str = "C", n: int = 2) -> NilModel:
    """n+ for H^n_K in the K^(n-1) (+) Im K picture."""
    return NilModel(f"heisenberg_{field}{n}", heisenberg_structure(field, n))


def abelian_model(dim: int) -> NilModel:
    """n+ = s+ = R^dim, the real hyperbolic case."""
    return NilModel(f"abelian_{dim}", np.zeros((0, dim, dim)))


def model_from_lie(model: LieAlgebraModel) -> NilModel:
    """Structure tensor of s+ (+) [s+, s+] in B_theta-orthonormal bases."""
    rd = model.roots
    s, z, gram = rd.s_plus, rd.g_m2alpha, rd.gram
    omega = np.zeros((z.shape[1], s.shape[1], s.shape[1]))
    for i in range(s.shape[1]):
        for j in range(s.shape[1]):
            c = model.coords(model.bracket(model.element(s[:, i]), model.element(s[:, j])))
            omega[:, i, j] = z.T @ gram @ c
    return NilModel(f"{model.family}({model.n},1)", omega)


@dataclass(frozen=True, eq=False)
class NilPoint:
    v: np.ndarray
    z: np.ndarray
    model: NilModel

    def __mul__(self, other: "NilPoint") -> "NilPoint":
        return nil_product(self, other)

    def inverse(self) -> "NilPoint":
        return NilPoint(-self.v, -self.z, self.model)

    def vector(self) -> np.ndarray:
        """Coordinates in n+ with s+ orthogonal to [s+, s+]."""
        return np.concatenate([self.v, self.z])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))


def nil_product(x: NilPoint, y: NilPoint) -> NilPoint:
    """Group law (v, z)(v', z') = (v + v', z + z' + [v, v']/2)."""
    if x.model is not y.model:
        raise ModelError(f"cannot multiply points of {x.model.name} and {y.model.name}")
    return NilPoint(x.v + y.v, x.z + y.z + 0.5 * x.model.bracket(x.v, y.v), x.model)


def dilate(x: NilPoint, t: float) -> NilPoint:
    return NilPoint(np.exp(-t) * x.v, np.exp(-2 * t) * x.z, x.model)


def gauge(x: NilPoint) -> float:
    """Homogeneous quasi-norm (|v|^4 + 16 |z|^2)^(1/4)."""
    v2 = float(x.v @ x.v)
    z2 = float(x.z @ x.z)
    return (v2 * v2 + GAUGE_CONSTANT * z2) ** 0.25


def gauge_distance(x: NilPoint, y: NilPoint) -> float:
    return gauge(nil_product(x.inverse(), y))


def inner_perp(x: NilPoint, y: NilPoint) -> float:
    return float(x.vector() @ y.vector())


def ring_membership(w: NilPoint, kappa: float) -> bool:
    """Is ``w`` a unit vector whose s+ part has norm at least ``kappa``?"""
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    if abs(w.norm() - 1.0) > UNIT_TOL:
        raise NotUnitVector(f"|w| = {w.norm():.12f}")
    return bool(np.linalg.norm(w.v) >= kappa - UNIT_TOL)


def quasi_triangle_constant(model: NilModel, rng, samples: int = 2000) -> float:
    """Largest observed gauge(xy) / (gauge(x) + gauge(y)) over random pairs."""
    worst = 0.0
    for _ in range(samples):
        scale = np.exp(rng.uniform(-2, 2))
        x = model.random_point(rng, scale)
        y = model.random_point(rng, np.exp(rng.uniform(-2, 2)))
        denom = gauge(x) + gauge(y)
        if denom > 0:
            worst = max(worst, gauge(nil_product(x, y)) / denom)
    return worst
