"""Coincidence statistics: closed forms, quadrature bounds, Monte Carlo, Bell/CHSH."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, EmptyBin, EmptySet, OutOfRange, RegimeViolation
from .outcomes import (
    CANDIDATES,
    ModelParams,
    SfpPolicy,
    consistency_table,
    in_model_regime,
    resolve_table,
)
from .sphere import (
    UnitVec3,
    angle_between_deg,
    sample_cap_array,
    sample_uniform_array,
    setting_from_angle,
)

ProbFn = Callable[[UnitVec3, UnitVec3], float]

QUAD_TOL = 1e-13
MC_CHUNK = 1 << 18


def local_anticoincidence(angle_ab: float) -> float:
    """``P(A != B)`` of the purely retarded model at setting angle ``angle_ab`` (degrees)."""
    if not 0.0 <= angle_ab <= 180.0:
        raise OutOfRange(f"angle must lie in [0, 180] degrees, got {angle_ab!r}")
    # same as 1 - 2*angle/360 with a single rounding, so 120 gives the nearest double to 1/3
    return (180.0 - angle_ab) / 180.0


def qm_anticoincidence(a: UnitVec3, b: UnitVec3) -> float:
    """Singlet-state quantum prediction ``1/2 + 1/2 <a,b>``."""
    return 0.5 + 0.5 * a.dot(b)


def local_oracle(a: UnitVec3, b: UnitVec3) -> float:
    return local_anticoincidence(min(180.0, angle_between_deg(a, b)))


def qm_oracle(a: UnitVec3, b: UnitVec3) -> float:
    return qm_anticoincidence(a, b)


def cap_overlap_fraction(C: float, dot_ab: float) -> float:
    """Fraction of S^2 with both ``<a,S> > C`` and ``<b,S> > C``.

    Evaluates ``(1/pi) * int_C^D sqrt((z^2-C^2)/(z^2-z^4)) dz`` with
    ``D = sqrt((1+<a,b>)/2)``.  The substitution
    ``z^2 = C^2 + (D^2-C^2) sin^2 t`` turns the integrand into the smooth

        (D^2-C^2)^{3/2} sin^2 t cos t / (z^2 sqrt(1-z^2))   on t in [0, pi/2],

    which removes the square-root singularities at both endpoints (``D``
    never reaches 1 since ``<a,b> < 0``).
    """
    if not C >= 0:
        raise DomainError(f"C must be >= 0, got {C!r}")
    if not -1.0 < dot_ab < 0.0:
        raise DomainError(f"<a,b> must lie in (-1, 0), got {dot_ab!r}")
    D = math.sqrt(0.5 * (1.0 + dot_ab))
    if C >= D:
        return 0.0
    C2 = C * C
    span = D * D - C2
    scale = span ** 1.5

    def f(t):
        s2 = math.sin(t) ** 2
        z2 = C2 + span * s2
        ratio = 1.0 / span if C2 == 0.0 else s2 / z2
        return scale * ratio * math.cos(t) / math.sqrt(1.0 - z2)

    val, _ = integrate.quad(f, 0.0, 0.5 * math.pi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return val / math.pi


@dataclass(frozen=True)
class ProbabilityBounds:
    p_min: float
    p_max: float
    median: float

    def __post_init__(self):
        if not 0.0 <= self.p_min <= self.p_max <= 1.0:
            raise ValueError(f"bounds out of order: {self.p_min}, {self.p_max}")
        if abs(self.median - 0.5 * (self.p_min + self.p_max)) > 1e-12:
            raise ValueError("median must be the midpoint of the bounds")

    @classmethod
    def from_bounds(cls, p_min: float, p_max: float) -> ProbabilityBounds:
        return cls(p_min, p_max, 0.5 * (p_min + p_max))


def thresholds(dot_ab: float, p: ModelParams) -> tuple[float, float]:
    """Cap thresholds ``((k - gamma)/alpha, (k + gamma)/alpha)``, ``k = beta |<a,b>|``."""
    k = p.beta * abs(dot_ab)
    return (k - p.gamma) / p.alpha, (k + p.gamma) / p.alpha


def probability_bounds(a: UnitVec3, b: UnitVec3, p: ModelParams) -> ProbabilityBounds:
    """Extreme anti-coincidence probabilities over all SFP resolutions."""
    d = a.dot(b)
    if not in_model_regime(d, p):
        raise RegimeViolation(
            f"bounds need <a,b> < 0 and beta|<a,b>| >= gamma (got <a,b>={d:.6g}, "
            f"beta={p.beta:.6g}, gamma={p.gamma:.6g})")
    lo, hi = thresholds(d, p)
    # factor 2: the mirror case <a,S0>, <b,S0> < 0
    p_max = 2.0 * cap_overlap_fraction(max(lo, 0.0), d)
    p_min = 2.0 * cap_overlap_fraction(hi, d)
    return ProbabilityBounds.from_bounds(p_min, p_max)


def nu_params(nu: float, checked: bool = True) -> ModelParams:
    """One-parameter family ``beta = nu, gamma = nu^2, alpha = 1 - nu - nu^2``."""
    if not 0.0 <= nu < 1.0 or 1.0 - nu - nu * nu <= 0.0:
        raise OutOfRange(f"nu={nu!r} gives non-positive alpha")
    try:
        return ModelParams(1.0 - nu - nu * nu, nu, nu * nu, checked=checked)
    except ValueError as exc:
        raise OutOfRange(f"nu={nu!r}: {exc}") from exc


@dataclass(frozen=True)
class MonteCarloEstimate:
    probability: float
    stderr: float
    n: int
    n_ambiguous: int = 0
    n_empty: int = 0

    @property
    def ambiguous_fraction(self) -> float:
        return self.n_ambiguous / self.n if self.n else 0.0


def _binomial_stderr(p_hat: float, n: int) -> float:
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n) if n else 0.0


def _simulate_chunks(a, b, p, n, rng, chunk=MC_CHUNK):
    av, bv = np.asarray(a), np.asarray(b)
    d = a.dot(b)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        s0 = sample_uniform_array(rng, m)
        yield s0, consistency_table(s0 @ av, s0 @ bv, d, p)
        done += m


def monte_carlo_anticoincidence(a: UnitVec3, b: UnitVec3, p: ModelParams, policy: SfpPolicy,
                                n: int, rng: np.random.Generator,
                                allow_empty: bool = False) -> MonteCarloEstimate:
    """Sample ``S0`` uniformly, resolve each consistent set, count ``A != B``.

    Rows with no consistent pair raise :class:`EmptySet` unless
    ``allow_empty``, in which case they are counted and left out of the
    frequency.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = ambiguous = empty = 0
    for _, table in _simulate_chunks(a, b, p, n, rng):
        idx = resolve_table(table, policy, rng)
        empty += int((idx < 0).sum())
        hits += int(((idx == 1) | (idx == 2)).sum())
        has_eq = table[:, 0] | table[:, 3]
        has_ne = table[:, 1] | table[:, 2]
        ambiguous += int((has_eq & has_ne).sum())
    if empty and not allow_empty:
        raise EmptySet(f"{empty} of {n} samples had no consistent outcome pair")
    used = n - empty
    p_hat = hits / used if used else float("nan")
    return MonteCarloEstimate(p_hat, _binomial_stderr(p_hat, used), used, ambiguous, empty)


def monte_carlo_bounds(a: UnitVec3, b: UnitVec3, p: ModelParams, n: int,
                       rng: np.random.Generator) -> tuple[ProbabilityBounds, float]:
    """Sampled counterpart of :func:`probability_bounds` from one set of draws.

    Returns the bounds and the larger of the two binomial standard errors.
    """
    lo = hi = 0
    for _, table in _simulate_chunks(a, b, p, n, rng):
        has_eq = table[:, 0] | table[:, 3]
        has_ne = table[:, 1] | table[:, 2]
        hi += int(has_ne.sum())
        lo += int((has_ne & ~has_eq).sum())
    p_min, p_max = lo / n, hi / n
    se = max(_binomial_stderr(p_min, n), _binomial_stderr(p_max, n))
    return ProbabilityBounds.from_bounds(p_min, p_max), se


def bounds_oracle(p: ModelParams, which: str = "p_max") -> ProbFn:
    def prob(a: UnitVec3, b: UnitVec3) -> float:
        return getattr(probability_bounds(a, b, p), which)
    return prob


@dataclass(frozen=True)
class BellTriple:
    """Coplanar settings ``a, b, c`` given as angles in degrees."""

    a: float
    b: float
    c: float

    def vectors(self) -> tuple[UnitVec3, UnitVec3, UnitVec3]:
        return tuple(setting_from_angle(x) for x in (self.a, self.b, self.c))


def bell_sum(triple: BellTriple, prob_fn: ProbFn) -> float:
    """``P(a,b) + P(b,c) + P(a,c)``; local models give at least 1."""
    a, b, c = triple.vectors()
    return prob_fn(a, b) + prob_fn(b, c) + prob_fn(a, c)


def chsh_value(a: UnitVec3, a_prime: UnitVec3, b: UnitVec3, b_prime: UnitVec3,
               prob_fn: ProbFn) -> float:
    def E(x, y):
        return 1.0 - 2.0 * prob_fn(x, y)
    return E(a, b) + E(a, b_prime) + E(a_prime, b) - E(a_prime, b_prime)


@dataclass(frozen=True)
class SweepRow:
    nu: float | None
    beta: float
    gamma: float
    angle_deg: float
    p_min: float | None
    p_max: float | None
    median: float | None
    method: str
    n_samples: int
    stderr: float
    regime_ok: bool

    def as_dict(self) -> dict:
        return asdict(self)


def point_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for grid point ``index``; independent of evaluation order."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def _sweep_row(nu, beta, gamma, angle_deg, method, n, rng) -> SweepRow:
    a, b = setting_from_angle(0.0), setting_from_angle(angle_deg)
    flagged = SweepRow(nu, beta, gamma, angle_deg, None, None, None, method, 0, 0.0, False)
    if 1.0 - beta - gamma <= 0.0:
        return flagged
    p = ModelParams.unchecked(1.0 - beta - gamma, beta, gamma)
    if not in_model_regime(a.dot(b), p):
        return flagged
    if method == "quadrature":
        pb = probability_bounds(a, b, p)
        return SweepRow(nu, beta, gamma, angle_deg, pb.p_min, pb.p_max, pb.median,
                        method, 0, 0.0, True)
    if method == "monte-carlo":
        pb, se = monte_carlo_bounds(a, b, p, n, rng)
        return SweepRow(nu, beta, gamma, angle_deg, pb.p_min, pb.p_max, pb.median,
                        method, n, se, True)
    raise ValueError(f"unknown method {method!r}")


def sweep_nu(nu_grid: Sequence[float], angle_ab: float = 120.0, method: str = "quadrature",
             n: int = 0, seed: int = 0) -> list[SweepRow]:
    rows = []
    for i, nu in enumerate(nu_grid):
        nu = float(nu)
        rng = point_rng(seed, i) if method == "monte-carlo" else None
        rows.append(_sweep_row(nu, nu, nu * nu, angle_ab, method, n, rng))
    return rows


def sweep_beta_gamma(beta_grid: Sequence[float], gamma_grid: Sequence[float],
                     angle_ab: float = 120.0, method: str = "quadrature", n: int = 0,
                     seed: int = 0) -> list[SweepRow]:
    """Rows ordered beta-major; rows outside the model regime carry ``regime_ok=False``."""
    rows = []
    for i, (beta, gamma) in enumerate(itertools.product(beta_grid, gamma_grid)):
        rng = point_rng(seed, i) if method == "monte-carlo" else None
        rows.append(_sweep_row(None, float(beta), float(gamma), angle_ab, method, n, rng))
    return rows


@dataclass(frozen=True)
class ScreeningRow:
    b: UnitVec3
    p_plus: float
    stderr: float
    n: int


@dataclass(frozen=True)
class ScreeningReport:
    rows: tuple[ScreeningRow, ...]
    z_scores: np.ndarray

    @property
    def max_z(self) -> float:
        return float(np.max(self.z_scores)) if self.z_scores.size else 0.0


def screening_analysis(a: UnitVec3, b_variants: Sequence[UnitVec3], p: ModelParams,
                       policy: SfpPolicy, s0_center: UnitVec3, half_angle: float, n: int,
                       rng: np.random.Generator) -> ScreeningReport:
    """Estimate ``P(A=+1 | a, b, S0 in cap)`` for each ``b`` and compare them.

    The cap around ``s0_center`` is sampled directly.  Entry ``[i, j]`` of
    ``z_scores`` is ``|p_i - p_j| / sqrt(se_i^2 + se_j^2)``.
    """
    if not half_angle > 0.0 or n < 1:
        raise EmptyBin("bin needs positive half-angle and n >= 1")
    av = np.asarray(a)
    rows = []
    for b in b_variants:
        s0 = sample_cap_array(rng, np.asarray(s0_center), half_angle, n)
        table = consistency_table(s0 @ av, s0 @ np.asarray(b), a.dot(b), p)
        idx = resolve_table(table, policy, rng)
        if (idx < 0).any():
            raise EmptySet("empty consistent set inside screening bin")
        a_plus = np.array([int(c.A) == 1 for c in CANDIDATES])[idx]
        p_hat = float(a_plus.mean())
        rows.append(ScreeningRow(b, p_hat, _binomial_stderr(p_hat, n), n))
    k = len(rows)
    z = np.zeros((k, k))
    for i, j in itertools.combinations(range(k), 2):
        diff = abs(rows[i].p_plus - rows[j].p_plus)
        se = math.hypot(rows[i].stderr, rows[j].stderr)
        z[i, j] = z[j, i] = diff / se if se > 0 else (math.inf if diff > 0 else 0.0)
    return ScreeningReport(tuple(rows), z)
