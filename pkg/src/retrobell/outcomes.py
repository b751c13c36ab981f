"""Self-consistent measurement outcomes of the time-symmetric spin model.

Given the initial spin ``S0`` and settings ``a, b``, the outcome pair
``(A, B)`` must satisfy

    A = sgn( alpha <a,S0> - B beta <a,b> + A gamma )
    B = sgn(-alpha <b,S0> - A beta <a,b> + B gamma )

with ``(A, B)`` appearing on both sides.  Zero, one or several of the four
candidate pairs may be consistent; several consistent pairs is a
self-fulfilling prophecy (SFP) and a resolution policy picks one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import DegenerateCombination, EmptySet, RegimeViolation, ZeroVector
from .sphere import Outcome, UnitVec3, normalize

SUM_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Convex weights of the final-spin decomposition.

    ``alpha`` weighs the initial spin, ``beta`` the feed-forward from the
    partner's outcome and ``gamma`` the preinforcement of the particle's own
    outcome.  The checked constructor enforces positivity, unit sum and
    ``alpha > beta > gamma``; :meth:`unchecked` keeps only the unit sum and
    ``alpha > 0`` (needed for the degenerate local limit and free sweeps).
    """

    alpha: float
    beta: float
    gamma: float
    checked: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        a, b, g = self.alpha, self.beta, self.gamma
        if not all(math.isfinite(w) for w in (a, b, g)):
            raise ValueError("weights must be finite")
        if abs(a + b + g - 1.0) > SUM_TOL:
            raise ValueError(f"weights must sum to 1, got {a + b + g!r}")
        if not a > 0:
            raise ValueError("alpha must be positive")
        if self.checked:
            if not (b > 0 and g > 0):
                raise ValueError("beta and gamma must be positive")
            if not a > b > g:
                raise ValueError(f"ordering alpha > beta > gamma violated: {a}, {b}, {g}")

    @classmethod
    def unchecked(cls, alpha: float, beta: float, gamma: float) -> ModelParams:
        return cls(alpha, beta, gamma, checked=False)

    @classmethod
    def from_beta_gamma(cls, beta: float, gamma: float, checked: bool = True) -> ModelParams:
        return cls(1.0 - beta - gamma, beta, gamma, checked=checked)


class OutcomePair(NamedTuple):
    A: Outcome
    B: Outcome

    @property
    def equal(self) -> bool:
        return self.A == self.B


P, M = Outcome.PLUS, Outcome.MINUS
CANDIDATES: tuple[OutcomePair, ...] = (
    OutcomePair(P, P), OutcomePair(P, M), OutcomePair(M, P), OutcomePair(M, M),
)
_EQUAL_IDX = (0, 3)
_UNEQUAL_IDX = (1, 2)


@dataclass(frozen=True)
class ConsistentSet:
    members: tuple[OutcomePair, ...]

    def __post_init__(self):
        ordered = tuple(c for c in CANDIDATES if c in self.members)
        if len(ordered) != len(self.members):
            raise ValueError("duplicate or invalid outcome pairs")
        object.__setattr__(self, "members", ordered)

    @classmethod
    def of(cls, *pairs) -> ConsistentSet:
        return cls(tuple(OutcomePair(Outcome(a), Outcome(b)) for a, b in pairs))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, pair):
        return tuple(pair) in [tuple(m) for m in self.members]

    @property
    def equal_possible(self) -> bool:
        return any(m.equal for m in self.members)

    @property
    def unequal_possible(self) -> bool:
        return any(not m.equal for m in self.members)


class SfpPolicy(Enum):
    FAVOR_EQUAL = "favor-equal"
    FAVOR_UNEQUAL = "favor-unequal"
    UNBIASED = "unbiased"


class CaseLabel(Enum):
    OPPOSITE_SIGNS_FORCED_EQUAL = "opposite-signs-forced-equal"
    SAME_SIGNS_BOTH_POSSIBLE = "same-signs-both-possible"
    SAME_SIGNS_ONLY_EQUAL = "same-signs-only-equal"
    SAME_SIGNS_ONLY_UNEQUAL = "same-signs-only-unequal"

    @property
    def flags(self) -> tuple[bool, bool]:
        """``(equal possible, unequal possible)``."""
        return _CASE_FLAGS[self]


_CASE_FLAGS = {
    CaseLabel.OPPOSITE_SIGNS_FORCED_EQUAL: (True, False),
    CaseLabel.SAME_SIGNS_BOTH_POSSIBLE: (True, True),
    CaseLabel.SAME_SIGNS_ONLY_EQUAL: (True, False),
    CaseLabel.SAME_SIGNS_ONLY_UNEQUAL: (False, True),
}


class Particle(Enum):
    A = "A"
    B = "B"


def final_spin(S0: UnitVec3, a: UnitVec3, b: UnitVec3, outcome: OutcomePair,
               p: ModelParams, particle: Particle = Particle.A) -> UnitVec3:
    A, B = int(outcome.A), int(outcome.B)
    s0, av, bv = np.asarray(S0), np.asarray(a), np.asarray(b)
    if particle is Particle.A:
        v = p.alpha * s0 - p.beta * B * bv + p.gamma * A * av
    else:
        v = -p.alpha * s0 - p.beta * A * av + p.gamma * B * bv
    try:
        return normalize(v)
    except ZeroVector as exc:
        raise DegenerateCombination(str(exc)) from exc


def _sgn(x: float) -> int:
    return 1 if x >= 0 else -1


def is_consistent(pair: OutcomePair, dot_a_s0: float, dot_b_s0: float, dot_ab: float,
                  p: ModelParams) -> bool:
    A, B = int(pair.A), int(pair.B)
    lhs_a = _sgn(p.alpha * dot_a_s0 - B * p.beta * dot_ab + A * p.gamma)
    lhs_b = _sgn(-p.alpha * dot_b_s0 - A * p.beta * dot_ab + B * p.gamma)
    return lhs_a == A and lhs_b == B


def consistent_outcomes(S0: UnitVec3, a: UnitVec3, b: UnitVec3, p: ModelParams) -> ConsistentSet:
    """All outcome pairs that reproduce themselves under the sign equations."""
    xa, xb, d = a.dot(S0), b.dot(S0), a.dot(b)
    return ConsistentSet(tuple(c for c in CANDIDATES if is_consistent(c, xa, xb, d, p)))


def consistency_table(dot_a_s0, dot_b_s0, dot_ab: float, p: ModelParams) -> np.ndarray:
    """Vectorized consistency check, shape ``(n, 4)`` in :data:`CANDIDATES` order."""
    xa = p.alpha * np.asarray(dot_a_s0, dtype=float)
    xb = p.alpha * np.asarray(dot_b_s0, dtype=float)
    cols = []
    for c in CANDIDATES:
        A, B = int(c.A), int(c.B)
        ok_a = np.where(xa - B * p.beta * dot_ab + A * p.gamma >= 0, 1, -1) == A
        ok_b = np.where(-xb - A * p.beta * dot_ab + B * p.gamma >= 0, 1, -1) == B
        cols.append(ok_a & ok_b)
    return np.stack(cols, axis=-1)


def in_model_regime(dot_ab: float, p: ModelParams) -> bool:
    return dot_ab < 0 and p.beta * abs(dot_ab) >= p.gamma


def classify_case(S0: UnitVec3, a: UnitVec3, b: UnitVec3, p: ModelParams,
                  fallback: bool = False) -> CaseLabel:
    """Case label from the closed-form possibility conditions.

    Valid for ``<a,b> < 0`` and ``beta |<a,b>| >= gamma``.  Outside that
    regime, ``fallback=True`` derives the label from enumeration instead.
    """
    xa, xb, d = a.dot(S0), b.dot(S0), a.dot(b)
    if not in_model_regime(d, p):
        if not fallback:
            raise RegimeViolation(
                f"need <a,b> < 0 and beta|<a,b>| >= gamma (got <a,b>={d:.6g}, "
                f"beta={p.beta:.6g}, gamma={p.gamma:.6g})")
        return _label_from_set(consistent_outcomes(S0, a, b, p), xa, xb)

    # S0 -> -S0 with a <-> b leaves the conditions invariant, so use magnitudes
    if _sgn(xa) != _sgn(xb):
        return CaseLabel.OPPOSITE_SIGNS_FORCED_EQUAL
    k = p.beta * abs(d)
    ua, ub = p.alpha * abs(xa), p.alpha * abs(xb)
    equal_ok = ua < k + p.gamma or ub < k + p.gamma
    unequal_ok = ua + p.gamma > k and ub + p.gamma > k
    return _label_from_flags(equal_ok, unequal_ok)


def case_flags_array(dot_a_s0, dot_b_s0, dot_ab: float, p: ModelParams) -> np.ndarray:
    """Vectorized ``classify_case(...).flags``; shape ``(n, 2)``."""
    xa = np.asarray(dot_a_s0, dtype=float)
    xb = np.asarray(dot_b_s0, dtype=float)
    same = (xa >= 0) == (xb >= 0)
    k = p.beta * abs(dot_ab)
    ua, ub = p.alpha * np.abs(xa), p.alpha * np.abs(xb)
    equal_ok = ~same | (ua < k + p.gamma) | (ub < k + p.gamma)
    unequal_ok = same & (ua + p.gamma > k) & (ub + p.gamma > k)
    return np.stack([equal_ok, unequal_ok], axis=-1)


def _label_from_flags(equal_ok: bool, unequal_ok: bool) -> CaseLabel:
    if equal_ok and unequal_ok:
        return CaseLabel.SAME_SIGNS_BOTH_POSSIBLE
    if equal_ok:
        return CaseLabel.SAME_SIGNS_ONLY_EQUAL
    if unequal_ok:
        return CaseLabel.SAME_SIGNS_ONLY_UNEQUAL
    raise EmptySet("no consistent outcome pair")


def _label_from_set(cs: ConsistentSet, xa: float, xb: float) -> CaseLabel:
    if _sgn(xa) != _sgn(xb) and cs.equal_possible and not cs.unequal_possible:
        return CaseLabel.OPPOSITE_SIGNS_FORCED_EQUAL
    return _label_from_flags(cs.equal_possible, cs.unequal_possible)


def resolve_sfp(cs: ConsistentSet, policy: SfpPolicy, rng: np.random.Generator) -> OutcomePair:
    """Pick one outcome pair from a consistent set.

    Favor-policies prefer their class when present.  ``UNBIASED`` tosses a
    fair coin between the equal and unequal classes when both are present.
    Ties inside a class are broken uniformly with ``rng``.
    """
    if len(cs) == 0:
        raise EmptySet("cannot resolve an empty consistent set")
    equal = [m for m in cs if m.equal]
    unequal = [m for m in cs if not m.equal]
    if not equal or not unequal:
        chosen = equal or unequal
    elif policy is SfpPolicy.FAVOR_UNEQUAL:
        chosen = unequal
    elif policy is SfpPolicy.FAVOR_EQUAL:
        chosen = equal
    else:
        chosen = unequal if rng.random() < 0.5 else equal
    if len(chosen) == 1:
        return chosen[0]
    return chosen[int(rng.integers(len(chosen)))]


def resolve_table(table: np.ndarray, policy: SfpPolicy, rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`resolve_sfp`; returns candidate indices (-1 for empty rows)."""
    table = np.asarray(table, dtype=bool)
    n = table.shape[0]
    eq = table[:, list(_EQUAL_IDX)]
    ne = table[:, list(_UNEQUAL_IDX)]
    has_eq, has_ne = eq.any(axis=1), ne.any(axis=1)
    if policy is SfpPolicy.FAVOR_UNEQUAL:
        pick_ne = has_ne
    elif policy is SfpPolicy.FAVOR_EQUAL:
        pick_ne = has_ne & ~has_eq
    else:
        coin = rng.random(n) < 0.5
        pick_ne = has_ne & (~has_eq | coin)
    cls = np.where(pick_ne[:, None], ne, eq)
    cls_idx = np.where(pick_ne[:, None], np.array(_UNEQUAL_IDX), np.array(_EQUAL_IDX))
    count = cls.sum(axis=1)
    # k-th true member, k uniform in [0, count)
    k = np.floor(rng.random(n) * np.maximum(count, 1)).astype(int)
    rank = np.cumsum(cls, axis=1) - 1
    hit = cls & (rank == k[:, None])
    col = hit.argmax(axis=1)
    out = cls_idx[np.arange(n), col]
    out[count == 0] = -1
    return out
