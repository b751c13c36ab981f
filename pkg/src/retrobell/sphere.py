"""Unit-sphere primitives: spin measurement, projection, distance vector, sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import AntipodalSingularity, ZeroVector

UNIT_TOL = 1e-12
ZERO_NORM = 1e-12
ANTIPODAL_TOL = 1e-9


class Outcome(IntEnum):
    PLUS = 1
    MINUS = -1

    def __neg__(self) -> Outcome:
        return Outcome(-int(self))

    @classmethod
    def of(cls, value: float) -> Outcome:
        # sgn(0) := +1
        return cls.PLUS if value >= 0 else cls.MINUS


@dataclass(frozen=True)
class UnitVec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(n - 1.0) > UNIT_TOL:
            raise ValueError(f"not a unit vector (norm={n!r}); use normalize()")

    @property
    def array(self) -> np.ndarray:
        return np.array((self.x, self.y, self.z), dtype=float)

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def __neg__(self) -> UnitVec3:
        return UnitVec3(-self.x, -self.y, -self.z)

    def dot(self, other) -> float:
        ox, oy, oz = other
        return self.x * ox + self.y * oy + self.z * oz


@dataclass(frozen=True)
class TangentVec3:
    base: UnitVec3
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (3,):
            raise ValueError("tangent components must have shape (3,)")
        if abs(float(c @ self.base.array)) > 1e-10:
            raise ValueError("vector does not lie in the tangent plane of its base")
        object.__setattr__(self, "components", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


def normalize(v) -> UnitVec3:
    arr = np.asarray(v, dtype=float).reshape(3)
    n = float(np.linalg.norm(arr))
    if not n > ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector of norm {n!r}")
    arr = arr / n
    return UnitVec3(float(arr[0]), float(arr[1]), float(arr[2]))


def measure_spin(a: UnitVec3, S: UnitVec3) -> Outcome:
    return Outcome.of(a.dot(S))


def project_spin(a: UnitVec3, S: UnitVec3) -> UnitVec3:
    """Post-measurement spin: ``sgn<a,S> a``."""
    return a if measure_spin(a, S) is Outcome.PLUS else -a


def distance_vector_array(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Raw-array form of :func:`sphere_distance_vector` (no type checks).

    Uses ``atan2(|Y - <Y,X>X|, <Y,X>)`` for the geodesic angle, which is
    stable near ``X == Y`` where the arccos/sqrt ratio is 0/0.
    """
    d = float(X @ Y)
    if d < -1.0 + ANTIPODAL_TOL:
        raise AntipodalSingularity(f"<X,Y> = {d!r}: distance direction undefined")
    w = Y - d * X
    s = float(np.linalg.norm(w))
    theta = math.atan2(s, d)
    if s < 1e-8:
        # theta/sin(theta) = 1 + theta^2/6 + O(theta^4)
        factor = 1.0 + theta * theta / 6.0
    else:
        factor = theta / s
    return factor * w


def sphere_distance_vector(X: UnitVec3, Y: UnitVec3) -> TangentVec3:
    """Tangent vector at X pointing along the geodesic to Y, with length equal to the angle."""
    comp = distance_vector_array(X.array, Y.array)
    # strip the O(eps) normal component left by rounding
    comp = comp - float(comp @ X.array) * X.array
    return TangentVec3(X, comp)


def geodesic_angle(X, Y) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return math.atan2(float(np.linalg.norm(np.cross(X, Y))), float(X @ Y))


def sample_uniform_array(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniform points on S^2 as an ``(n, 3)`` array.

    Archimedes: z uniform on [-1, 1] and an independent uniform azimuth give
    the rotation-invariant measure.
    """
    z = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    out = np.empty((n, 3))
    out[:, 0] = r * np.cos(phi)
    out[:, 1] = r * np.sin(phi)
    out[:, 2] = z
    return out


def sample_uniform(rng: np.random.Generator) -> UnitVec3:
    return normalize(sample_uniform_array(rng, 1)[0])


def sample_cap_array(rng: np.random.Generator, center, half_angle: float, n: int) -> np.ndarray:
    """Uniform points in the spherical cap of angular radius ``half_angle`` around ``center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    z = rng.uniform(math.cos(half_angle), 1.0, size=n)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    e1, e2 = orthonormal_complement(c)
    return (z[:, None] * c + (r * np.cos(phi))[:, None] * e1
            + (r * np.sin(phi))[:, None] * e2)


def orthonormal_complement(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(c, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(c, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return e1, e2


def setting_from_angle(deg: float) -> UnitVec3:
    """Coplanar apparatus setting at ``deg`` degrees in the x-y plane."""
    t = math.radians(deg)
    return normalize((math.cos(t), math.sin(t), 0.0))


def angle_between_deg(a, b) -> float:
    return math.degrees(geodesic_angle(a, b))
