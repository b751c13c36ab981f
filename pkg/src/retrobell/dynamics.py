"""Retarded + advanced spin interaction along particle worldlines.

Each spin obeys

    dS_i/dt = kappa * [ D(S_i(t), -S_j(tau_ret)) + D(S_i(t), -S_j(tau_adv)) ]

where ``tau_ret < t < tau_adv`` are the light-cone intersections of particle
``i`` at time ``t`` with the worldline of ``j``.  A term is dropped when the
intersection falls outside ``j``'s worldline (before the source, after
absorption).  At ``t = T`` each spin is projected onto its setting.

Because advanced terms make this a two-point problem, solutions are found by
Picard iteration with the measurement outcomes held fixed at a seed, and are
kept only if the converged spins reproduce that seed.

Kinematics (model choices, all in light units): both particles leave the
origin at ``t = 0`` in opposite directions at speed ``v``, are measured at
``T = L/v`` and absorbed at ``T + delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateBasis, NoConvergence, SeedInconsistent
from .outcomes import ModelParams, OutcomePair
from .sphere import (
    ANTIPODAL_TOL,
    Outcome,
    UnitVec3,
    distance_vector_array,
    normalize,
    orthonormal_complement,
)

ANTIPODAL_KICK = 1e-8
GRID_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    x0: float
    u: float

    def position(self, t: float) -> float:
        return self.x0 + self.u * (t - self.t0)


@dataclass(frozen=True)
class Worldline:
    """Piecewise-linear path ``x(t)`` in one spatial dimension, ``|dx/dt| < 1``."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("worldline needs at least one segment")
        for s in self.segments:
            if not s.t1 > s.t0:
                raise ValueError("segment times must increase")
            if not abs(s.u) < 1.0:
                raise ValueError("worldline speed must be below the speed of light")
        for s, nxt in zip(self.segments, self.segments[1:]):
            if abs(s.t1 - nxt.t0) > 1e-12 or abs(s.position(s.t1) - nxt.x0) > 1e-12:
                raise ValueError("segments must join continuously")

    @property
    def t_start(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def position(self, t: float) -> float:
        for s in self.segments:
            if t <= s.t1:
                return s.position(t)
        return self.segments[-1].position(t)

    @classmethod
    def static(cls, x: float, t0: float, t1: float) -> Worldline:
        return cls((Segment(t0, t1, x, 0.0),))

    @classmethod
    def recession(cls, direction: int, v: float, T: float, delta: float) -> Worldline:
        """Leave the origin at t=0 with velocity ``direction * v``; measured at T, absorbed at T+delta."""
        u = direction * v
        return cls((Segment(0.0, T, 0.0, u), Segment(T, T + delta, u * T, u)))


def light_cone_times(i: Worldline, t: float, j: Worldline) -> tuple[Optional[float], Optional[float]]:
    """Retarded and advanced times on ``j`` seen from ``i`` at time ``t``.

    Solves ``|t - tau| = |x_i(t) - x_j(tau)|`` segment by segment; each side
    has at most one root because ``|u| < 1``.  ``None`` marks an
    intersection outside ``j``'s worldline.
    """
    X = i.position(t)
    ret = adv = None
    for s in j.segments:
        c = X - s.x0 + s.u * s.t0
        for sigma in (1.0, -1.0):
            tau = (sigma * c - t) / (sigma * s.u - 1.0)
            if ret is None and s.t0 - 1e-12 <= tau <= s.t1 + 1e-12 and tau <= t \
                    and sigma * (X - s.position(tau)) >= -1e-12:
                ret = tau
            tau = (t + sigma * c) / (1.0 + sigma * s.u)
            if adv is None and s.t0 - 1e-12 <= tau <= s.t1 + 1e-12 and tau >= t \
                    and sigma * (X - s.position(tau)) >= -1e-12:
                adv = tau
    return ret, adv


@dataclass(frozen=True)
class ExperimentConfig:
    L: float = 1.0
    v: float = 0.5
    delta: float = 0.1
    kappa: float = 1.0
    h: float = 0.005
    a: UnitVec3 = field(default_factory=lambda: normalize((1.0, 0.0, 0.0)))
    b: UnitVec3 = field(default_factory=lambda: normalize((-0.5, math.sqrt(3) / 2, 0.0)))
    S0: UnitVec3 = field(default_factory=lambda: normalize((0.3, 0.4, 0.5)))
    seed_outcome: OutcomePair = OutcomePair(Outcome.PLUS, Outcome.MINUS)
    max_picard_iters: int = 200
    picard_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.v < 1.0:
            raise ValueError("need 0 < v < 1")
        if not self.kappa >= 0.0:
            raise ValueError("kappa must be non-negative")
        if not (self.L > 0 and self.delta > 0 and self.h > 0):
            raise ValueError("L, delta and h must be positive")
        if not self.h < self.delta / 10.0:
            raise ValueError("grid step must satisfy h < delta/10")
        for span, name in ((self.T, "T"), (self.T + self.delta, "T + delta")):
            k = span / self.h
            if abs(k - round(k)) > GRID_TOL * max(1.0, k):
                raise ValueError(f"{name} = {span} is not a multiple of h = {self.h}")
        object.__setattr__(self, "seed_outcome",
                           OutcomePair(Outcome(self.seed_outcome[0]), Outcome(self.seed_outcome[1])))

    @property
    def T(self) -> float:
        return self.L / self.v

    @property
    def n_measure(self) -> int:
        return int(round(self.T / self.h))

    @property
    def n_steps(self) -> int:
        return int(round((self.T + self.delta) / self.h))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    def worldlines(self) -> tuple[Worldline, Worldline]:
        return (Worldline.recession(-1, self.v, self.T, self.delta),
                Worldline.recession(+1, self.v, self.T, self.delta))

    def with_seed(self, seed: OutcomePair) -> ExperimentConfig:
        return replace(self, seed_outcome=seed)


@dataclass
class SpinTrajectory:
    """Spin samples on the uniform grid.

    ``values[m]`` (``m`` = measurement index) holds the post-measurement
    spin; the pre-measurement spin ``S(T-)`` is kept in ``s_minus``.
    """

    times: np.ndarray
    values: np.ndarray
    m: int
    s_minus: np.ndarray
    max_norm_drift: float = 0.0

    def left_values(self) -> np.ndarray:
        left = self.values.copy()
        left[self.m] = self.s_minus
        return left

    def at(self, tau: np.ndarray) -> np.ndarray:
        """Linear interpolation plus renormalization; ``tau >= T`` reads the post-measurement branch."""
        tau = np.asarray(tau, dtype=float)
        h = self.times[1] - self.times[0]
        n = len(self.times) - 1
        pos = np.clip(tau / h, 0.0, n)
        k = np.minimum(np.floor(pos).astype(int), n - 1)
        w = (pos - k)[:, None]
        pre = (tau < self.times[self.m] - 1e-12)[:, None]
        left = self.left_values()
        lo = np.where(pre, left[k], self.values[k])
        hi = np.where(pre, left[k + 1], self.values[k + 1])
        out = (1.0 - w) * lo + w * hi
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    def outcome(self, setting: UnitVec3) -> Outcome:
        return Outcome.of(float(np.asarray(setting) @ self.s_minus))

    def sup_distance(self, other: SpinTrajectory) -> float:
        return max(float(np.max(np.linalg.norm(self.values - other.values, axis=1))),
                   float(np.linalg.norm(self.s_minus - other.s_minus)))


def _kick(S: np.ndarray, target: np.ndarray) -> np.ndarray:
    # rotate an antipodal target off -S by a fixed tiny angle
    e1, _ = orthonormal_complement(S)
    return math.cos(ANTIPODAL_KICK) * target + math.sin(ANTIPODAL_KICK) * e1


def _pull(S: np.ndarray, targets) -> np.ndarray:
    total = np.zeros(3)
    for tgt in targets:
        if tgt is None:
            continue
        if float(S @ tgt) < -1.0 + ANTIPODAL_TOL:
            tgt = _kick(S, tgt)
        total += distance_vector_array(S, tgt)
    return total


def _exp_step(S: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    """Move along the geodesic from S in tangent direction ``w``; returns (new S, norm drift)."""
    w = w - float(w @ S) * S
    n = float(np.linalg.norm(w))
    if n == 0.0:
        return S.copy(), 0.0
    out = math.cos(n) * S + (math.sin(n) / n) * w
    nrm = float(np.linalg.norm(out))
    return out / nrm, abs(nrm - 1.0)


def _heun(S: np.ndarray, h: float, kappa: float, src_now, src_next) -> tuple[np.ndarray, float]:
    k1 = kappa * _pull(S, src_now)
    pred, d1 = _exp_step(S, h * k1)
    k2 = kappa * _pull(pred, src_next)
    out, d2 = _exp_step(S, 0.5 * h * (k1 + k2))
    return out, max(d1, d2)


def _project(setting: np.ndarray, S: np.ndarray, forced: Optional[Outcome]) -> np.ndarray:
    sign = int(forced) if forced is not None else (1 if float(setting @ S) >= 0 else -1)
    return sign * setting


@dataclass(frozen=True)
class _ConeTable:
    ret: np.ndarray  # tau_ret on j for each grid time of i (nan = absent)
    adv: np.ndarray


def _cone_tables(cfg: ExperimentConfig) -> tuple[_ConeTable, _ConeTable]:
    wa, wb = cfg.worldlines()
    out = []
    for i, j in ((wa, wb), (wb, wa)):
        ret = np.full(cfg.n_steps + 1, np.nan)
        adv = np.full(cfg.n_steps + 1, np.nan)
        for k, t in enumerate(cfg.times):
            r, d = light_cone_times(i, float(t), j)
            if r is not None:
                ret[k] = r
            if d is not None:
                adv[k] = d
        out.append(_ConeTable(ret, adv))
    return out[0], out[1]


def integrate_retarded_only(config: ExperimentConfig, S_A0=None, S_B0=None,
                            forced: Optional[OutcomePair] = None
                            ) -> tuple[SpinTrajectory, SpinTrajectory]:
    """Integrate with retarded terms only, both particles in lockstep.

    Defaults to singlet initial data ``S_A(0) = S0 = -S_B(0)``.  The
    measurement projection uses the natural sign unless ``forced`` is given.
    Retarded lookups past the last computed sample hold that sample.
    """
    cfg = config
    s_a = np.asarray(cfg.S0 if S_A0 is None else S_A0, dtype=float)
    s_b = -np.asarray(cfg.S0, dtype=float) if S_B0 is None else np.asarray(S_B0, dtype=float)
    s_a, s_b = s_a / np.linalg.norm(s_a), s_b / np.linalg.norm(s_b)
    times, h, m, n = cfg.times, cfg.h, cfg.n_measure, cfg.n_steps
    cone_a, cone_b = _cone_tables(cfg)
    settings = (np.asarray(cfg.a), np.asarray(cfg.b))
    vals = [np.empty((n + 1, 3)), np.empty((n + 1, 3))]
    vals[0][0], vals[1][0] = s_a, s_b
    s_minus = [None, None]
    drift = 0.0

    def history(p: int, tau: float, upto: int) -> Optional[np.ndarray]:
        if math.isnan(tau):
            return None
        if upto == 0:
            return -vals[p][0]
        pos = min(tau / h, float(upto))
        k = min(int(math.floor(pos)), upto - 1)
        w = pos - k
        hi = vals[p][k + 1]
        if k + 1 == m and tau < m * h:
            hi = s_minus[p]
        out = (1.0 - w) * vals[p][k] + w * hi
        return -out / np.linalg.norm(out)

    for k in range(n):
        new = []
        for p, cone in ((0, cone_a), (1, cone_b)):
            q = 1 - p
            now = [history(q, cone.ret[k], k)]
            nxt = [history(q, cone.ret[k + 1], k)]
            s, d = _heun(vals[p][k], h, cfg.kappa, now, nxt)
            drift = max(drift, d)
            new.append(s)
        for p in (0, 1):
            vals[p][k + 1] = new[p]
            if k + 1 == m:
                s_minus[p] = new[p].copy()
                f = None if forced is None else forced[p]
                vals[p][k + 1] = _project(settings[p], new[p], f)
    return tuple(SpinTrajectory(times, vals[p], m, s_minus[p], drift) for p in (0, 1))


def _integrate_with_sources(cfg: ExperimentConfig, p: int, cone: _ConeTable,
                            partner: SpinTrajectory, forced: Outcome,
                            start: np.ndarray) -> SpinTrajectory:
    times, h, m, n = cfg.times, cfg.h, cfg.n_measure, cfg.n_steps
    setting = np.asarray(cfg.a if p == 0 else cfg.b)
    ret_ok, adv_ok = ~np.isnan(cone.ret), ~np.isnan(cone.adv)
    ret_src = np.full((n + 1, 3), np.nan)
    adv_src = np.full((n + 1, 3), np.nan)
    if ret_ok.any():
        ret_src[ret_ok] = -partner.at(cone.ret[ret_ok])
    if adv_ok.any():
        adv_src[adv_ok] = -partner.at(cone.adv[adv_ok])

    def srcs(k):
        return [ret_src[k] if ret_ok[k] else None, adv_src[k] if adv_ok[k] else None]

    vals = np.empty((n + 1, 3))
    vals[0] = start
    s_minus = None
    drift = 0.0
    for k in range(n):
        s, d = _heun(vals[k], h, cfg.kappa, srcs(k), srcs(k + 1))
        drift = max(drift, d)
        vals[k + 1] = s
        if k + 1 == m:
            s_minus = s.copy()
            vals[k + 1] = _project(setting, s, forced)
    return SpinTrajectory(times, vals, m, s_minus, drift)


def picard_step(cfg: ExperimentConfig, ta: SpinTrajectory, tb: SpinTrajectory,
                cones=None) -> tuple[SpinTrajectory, SpinTrajectory]:
    """One Jacobi sweep: re-integrate both spins with sources from ``(ta, tb)``."""
    cone_a, cone_b = cones if cones is not None else _cone_tables(cfg)
    s0 = np.asarray(cfg.S0)
    seed = cfg.seed_outcome
    return (_integrate_with_sources(cfg, 0, cone_a, tb, seed.A, s0),
            _integrate_with_sources(cfg, 1, cone_b, ta, seed.B, -s0))


@dataclass
class TimeSymmetricSolution:
    traj_a: SpinTrajectory
    traj_b: SpinTrajectory
    seed: OutcomePair
    realized: OutcomePair
    converged: bool
    residual: float
    picard_iters: int
    residual_history: list[float]
    status: str

    @property
    def self_consistent(self) -> bool:
        return self.converged and self.realized == self.seed


def solve_time_symmetric(config: ExperimentConfig, raise_on_failure: bool = True
                         ) -> TimeSymmetricSolution:
    """Outcome-seeded Picard iteration for the retarded + advanced system.

    Iteration 0 is the retarded-only run with projections forced to the
    seed; each later iteration re-integrates both particles with retarded
    and advanced sources read from the previous iterate.  ``converged``
    requires the sup-norm update to fall below ``picard_tol`` and the
    realized signs at ``T-`` to reproduce the seed.
    """
    cfg = config
    seed = cfg.seed_outcome
    cones = _cone_tables(cfg)
    ta, tb = integrate_retarded_only(cfg, forced=seed)
    history = []
    settled = False
    it = 0
    while it < cfg.max_picard_iters:
        it += 1
        na, nb = picard_step(cfg, ta, tb, cones)
        res = max(na.sup_distance(ta), nb.sup_distance(tb))
        history.append(res)
        ta, tb = na, nb
        if not math.isfinite(res):
            break
        if res <= cfg.picard_tol:
            settled = True
            break
    realized = OutcomePair(ta.outcome(cfg.a), tb.outcome(cfg.b))
    residual = history[-1] if history else 0.0
    if not settled:
        status = "no-convergence"
    elif realized != seed:
        status = "seed-inconsistent"
    else:
        status = "converged"
    sol = TimeSymmetricSolution(ta, tb, seed, realized, status == "converged", residual, it,
                                history, status)
    if raise_on_failure and status == "no-convergence":
        err = NoConvergence(f"Picard iteration did not converge in {it} iterations "
                            f"(residual {residual:.3g})")
        err.solution = sol
        raise err
    if raise_on_failure and status == "seed-inconsistent":
        err = SeedInconsistent(f"seed {tuple(map(int, seed))} converged to realized outcome "
                               f"{tuple(map(int, realized))}")
        err.solution = sol
        raise err
    return sol


def solve_all_seeds(config: ExperimentConfig) -> dict[OutcomePair, TimeSymmetricSolution]:
    from .outcomes import CANDIDATES
    return {s: solve_time_symmetric(config.with_seed(s), raise_on_failure=False)
            for s in CANDIDATES}


def _basis(sol: TimeSymmetricSolution, cfg: ExperimentConfig, particle: int = 0) -> np.ndarray:
    A, B = int(sol.seed.A), int(sol.seed.B)
    s0, a, b = np.asarray(cfg.S0), np.asarray(cfg.a), np.asarray(cfg.b)
    if particle == 0:
        cols = (s0, -B * b, A * a)
    else:
        cols = (-s0, -A * a, B * b)
    M = np.column_stack(cols)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] < 1e-8 * sv[0]:
        raise DegenerateBasis("initial spin and settings are (nearly) coplanar; no unique fit")
    return M


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    residual: float
    coefficients: tuple[float, float, float]


def extract_alpha_beta_gamma(sol: TimeSymmetricSolution, config: ExperimentConfig) -> FitResult:
    """Decompose ``S_A(T-)`` over ``{S0, -B b, A a}`` and rescale the weights to sum 1."""
    M = _basis(sol, config, 0)
    target = sol.traj_a.s_minus
    coef, *_ = np.linalg.lstsq(M, target, rcond=None)
    residual = float(np.linalg.norm(M @ coef - target))
    w = coef / coef.sum()
    return FitResult(ModelParams.unchecked(*map(float, w)), residual, tuple(map(float, coef)))


@dataclass(frozen=True)
class TriangleReport:
    worst_violation: float
    n_violations: int
    n_samples: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.n_violations == 0


def _triangle_violation(points: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Angular distance outside the spherical triangle spanned by the columns of ``M`` (0 inside)."""
    v = [M[:, 0], M[:, 1], M[:, 2]]
    worst = np.zeros(len(points))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        nrm = np.cross(v[i], v[j])
        nrm /= np.linalg.norm(nrm)
        if nrm @ v[k] < 0:
            nrm = -nrm
        s = points @ nrm
        worst = np.maximum(worst, np.arcsin(np.clip(-s, 0.0, 1.0)))
    return worst


def check_invariant_triangle(sol: TimeSymmetricSolution, config: ExperimentConfig,
                             tol: float = 1e-6) -> TriangleReport:
    """Check every sample of S_A (S_B) against its triangle {S0, -Bb, Aa} ({-S0, Bb, -Aa})."""
    worst, bad, total = 0.0, 0, 0
    for p, traj in ((0, sol.traj_a), (1, sol.traj_b)):
        M = _basis(sol, config, p)
        pts = np.vstack([traj.values, traj.s_minus[None]])
        viol = _triangle_violation(pts, M)
        worst = max(worst, float(viol.max()))
        bad += int((viol > tol).sum())
        total += len(pts)
    return TriangleReport(worst, bad, total, tol)
