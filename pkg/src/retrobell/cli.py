"""Command-line frontend: ``retrobell <command> [options]``.

Every command writes a table either as CSV (``#``-prefixed metadata lines,
then a header row) or as a JSON object ``{"metadata": ..., "rows": [...]}``.
Exit codes: 0 success, 1 computation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .dynamics import (
    ExperimentConfig,
    check_invariant_triangle,
    extract_alpha_beta_gamma,
    solve_all_seeds,
)
from .errors import DegenerateBasis, InvalidAngle, RetrobellError
from .outcomes import ModelParams, SfpPolicy, in_model_regime
from .probability import (
    BellTriple,
    bell_sum,
    bounds_oracle,
    chsh_value,
    local_anticoincidence,
    local_oracle,
    monte_carlo_anticoincidence,
    probability_bounds,
    qm_oracle,
    screening_analysis,
    sweep_beta_gamma,
    sweep_nu,
)
from .sphere import normalize, setting_from_angle

SWEEP_COLUMNS = ("nu", "beta", "gamma", "angle_deg", "p_min", "p_max", "median", "method",
                 "n_samples", "stderr", "regime_ok")

FIG6_NU_GRID = "0:0.33:34"
FIG7_BETA_GRID = "0.02:0.4:20"
FIG7_GAMMA_GRID = "0.01:0.2:20"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- output


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value)
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def render(metadata: dict, columns: Sequence[str], rows: Sequence[dict], fmt: str) -> str:
    if fmt == "json":
        doc = {"metadata": metadata,
               "rows": [{c: _jsonable(r.get(c)) for c in columns} for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    for key, val in metadata.items():
        buf.write(f"# {key}: {json.dumps(val)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_csv_table(text: str) -> tuple[dict, list[dict]]:
    """Inverse of the CSV branch of :func:`render` (values returned as strings)."""
    meta, lines = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        elif line:
            lines.append(line)
    header, *body = csv.reader(lines)
    return meta, [dict(zip(header, row)) for row in body]


def _emit(args, command: str, params: dict, columns, rows) -> None:
    metadata = {"tool": "retrobell", "version": __version__, "command": command,
                "seed": args.seed, "params": params}
    text = render(metadata, columns, rows, args.format)
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


# ---------------------------------------------------------------- parsing helpers


def parse_floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: {exc}") from exc
    if not vals:
        raise UsageError(f"{name} must not be empty")
    return vals


def parse_grid(text: str, name: str) -> list[float]:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"{name}: expected start:stop:num")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"{name}: {exc}") from exc
        if num < 1:
            raise UsageError(f"{name} must not be empty")
        # rounding keeps grid values and their CSV text short and exact-looking
        return [round(float(x), 12) for x in np.linspace(start, stop, num)]
    return parse_floats(text, name)


def check_angle(deg: float) -> float:
    if not 0.0 <= deg < 360.0:
        raise InvalidAngle(f"angle {deg!r} outside [0, 360)")
    return deg


def _params_from_args(args) -> tuple[ModelParams, dict]:
    if args.nu is not None:
        if args.beta is not None or args.gamma is not None:
            raise UsageError("give either --nu or --beta/--gamma, not both")
        nu = args.nu
        return ModelParams.unchecked(1.0 - nu - nu * nu, nu, nu * nu), {"nu": nu}
    if args.beta is None or args.gamma is None:
        raise UsageError("need --nu or both --beta and --gamma")
    return ModelParams.unchecked(1.0 - args.beta - args.gamma, args.beta, args.gamma), {}


def _default_seed() -> int:
    env = os.environ.get("RETROBELL_SEED")
    return int(env) if env not in (None, "") else 0


def _policy(name: str) -> SfpPolicy:
    return SfpPolicy(name)


# ---------------------------------------------------------------- commands


def cmd_local(args) -> int:
    rows = []
    params: dict = {}
    if args.triple is not None:
        angles = parse_floats(args.triple, "--triple")
        if len(angles) != 3:
            raise UsageError("--triple needs three angles")
        a, b, c = (check_angle(x) for x in angles)
        params["triple"] = [a, b, c]
        pairs = (("a,b", a, b), ("b,c", b, c), ("a,c", a, c))
    else:
        ang = args.angle
        if not 0.0 <= ang <= 180.0:
            raise InvalidAngle(f"--angle {ang!r} outside [0, 180]")
        params["angle"] = ang
        pairs = (("a,b", 0.0, ang),)
    rng = np.random.default_rng(args.seed)
    local = ModelParams.unchecked(1.0, 0.0, 0.0)
    total = 0.0
    for label, x, y in pairs:
        u, v = setting_from_angle(x), setting_from_angle(y)
        # pair angle straight from the inputs; acos round-off would spoil the exact 1/3
        exact = abs(x - y) % 360.0
        exact = min(exact, 360.0 - exact)
        p = local_anticoincidence(exact)
        total += p
        row = {"pair": label, "angle_deg": exact, "p_anticoincidence": p}
        if args.mc_samples:
            est = monte_carlo_anticoincidence(u, v, local, SfpPolicy.UNBIASED, args.mc_samples, rng)
            row.update(mc_probability=est.probability, mc_stderr=est.stderr,
                       mc_n=est.n)
        rows.append(row)
    if len(pairs) == 3:
        rows.append({"pair": "sum", "p_anticoincidence": total})
    params["mc_samples"] = args.mc_samples
    cols = ["pair", "angle_deg", "p_anticoincidence"]
    if args.mc_samples:
        cols += ["mc_probability", "mc_stderr", "mc_n"]
    _emit(args, "local", params, cols, rows)
    return 0


def _bounds_row(nu, p: ModelParams, angle: float) -> dict:
    a, b = setting_from_angle(0.0), setting_from_angle(angle)
    row = {"nu": nu, "beta": p.beta, "gamma": p.gamma, "angle_deg": angle, "method": "quadrature",
           "n_samples": 0, "stderr": 0.0}
    if p.alpha <= 0 or not in_model_regime(a.dot(b), p):
        row["regime_ok"] = False
        return row
    pb = probability_bounds(a, b, p)
    row.update(p_min=pb.p_min, p_max=pb.p_max, median=pb.median, regime_ok=True)
    return row


def cmd_bounds(args) -> int:
    check_angle(args.angle)
    if args.nu is not None and (args.beta is not None or args.gamma is not None):
        raise UsageError("give either --nu or --beta/--gamma, not both")
    if args.nu is not None:
        nu, beta, gamma = args.nu, args.nu, args.nu * args.nu
    elif args.beta is not None and args.gamma is not None:
        nu, beta, gamma = None, args.beta, args.gamma
    else:
        raise UsageError("need --nu or both --beta and --gamma")
    alpha = 1.0 - beta - gamma
    params = {"angle": args.angle, "nu": nu, "beta": beta, "gamma": gamma}
    if alpha <= 0:
        row = {"nu": nu, "beta": beta, "gamma": gamma, "angle_deg": args.angle,
               "method": "quadrature", "n_samples": 0, "stderr": 0.0, "regime_ok": False}
    else:
        row = _bounds_row(nu, ModelParams.unchecked(alpha, beta, gamma), args.angle)
    _emit(args, "bounds", params, SWEEP_COLUMNS, [row])
    if not row["regime_ok"]:
        print("error: parameters outside the model regime (need <a,b> < 0, "
              "beta*|<a,b>| >= gamma and alpha > 0)", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    check_angle(args.angle)
    if args.method == "monte-carlo" and args.n < 1:
        raise UsageError("monte-carlo sweeps need -n >= 1")
    n = args.n if args.method == "monte-carlo" else 0
    if args.figure == "fig6":
        grid = parse_grid(args.nu_grid, "--nu-grid")
        rows = sweep_nu(grid, args.angle, args.method, n, args.seed)
        params = {"figure": "fig6", "nu_grid": grid}
    else:
        bg = parse_grid(args.beta_grid, "--beta-grid")
        gg = parse_grid(args.gamma_grid, "--gamma-grid")
        rows = sweep_beta_gamma(bg, gg, args.angle, args.method, n, args.seed)
        params = {"figure": "fig7", "beta_grid": bg, "gamma_grid": gg}
    params.update(angle=args.angle, method=args.method, n=n)
    _emit(args, "sweep", params, SWEEP_COLUMNS, [r.as_dict() for r in rows])
    return 0


def cmd_mc(args) -> int:
    check_angle(args.angle)
    p, extra = _params_from_args(args)
    a, b = setting_from_angle(0.0), setting_from_angle(args.angle)
    policy = _policy(args.policy)
    rng = np.random.default_rng(args.seed)
    est = monte_carlo_anticoincidence(a, b, p, policy, args.n, rng)
    row = {"nu": extra.get("nu"), "beta": p.beta, "gamma": p.gamma, "angle_deg": args.angle,
           "policy": policy.value, "probability": est.probability, "stderr": est.stderr,
           "n_samples": est.n, "ambiguous_fraction": est.ambiguous_fraction}
    params = {"angle": args.angle, "nu": extra.get("nu"), "beta": p.beta, "gamma": p.gamma,
              "policy": policy.value, "n": args.n}
    cols = ["nu", "beta", "gamma", "angle_deg", "policy", "probability", "stderr",
            "n_samples", "ambiguous_fraction"]
    _emit(args, "mc", params, cols, [row])
    return 0


def _oracle(args):
    if args.oracle == "local":
        return local_oracle
    if args.oracle == "qm":
        return qm_oracle
    p, _ = _params_from_args(args)
    which = {"p-max": "p_max", "p-min": "p_min", "median": "median"}[args.oracle]
    return bounds_oracle(p, which)


def cmd_bell(args) -> int:
    angles = parse_floats(args.triple, "--triple")
    if len(angles) != 3:
        raise UsageError("--triple needs three angles")
    triple = BellTriple(*(check_angle(x) for x in angles))
    fn = _oracle(args)
    a, b, c = triple.vectors()
    rows = [{"pair": lbl, "p_anticoincidence": fn(u, v)}
            for lbl, u, v in (("a,b", a, b), ("b,c", b, c), ("a,c", a, c))]
    total = bell_sum(triple, fn)
    rows.append({"pair": "sum", "p_anticoincidence": total})
    params = {"triple": angles, "oracle": args.oracle, "nu": args.nu, "beta": args.beta,
              "gamma": args.gamma}
    _emit(args, "bell", params, ["pair", "p_anticoincidence"], rows)
    return 0


def cmd_chsh(args) -> int:
    angles = parse_floats(args.settings, "--settings")
    if len(angles) != 4:
        raise UsageError("--settings needs four angles a,a',b,b'")
    vecs = [setting_from_angle(x) for x in angles]
    fn = _oracle(args)
    a, ap, b, bp = vecs
    rows = [{"term": lbl, "value": 1.0 - 2.0 * fn(u, v)}
            for lbl, u, v in (("E(a,b)", a, b), ("E(a,b')", a, bp), ("E(a',b)", ap, b),
                              ("E(a',b')", ap, bp))]
    rows.append({"term": "S", "value": chsh_value(a, ap, b, bp, fn)})
    params = {"settings": angles, "oracle": args.oracle, "nu": args.nu, "beta": args.beta,
              "gamma": args.gamma}
    _emit(args, "chsh", params, ["term", "value"], rows)
    return 0


def cmd_screening(args) -> int:
    p, extra = _params_from_args(args)
    a = setting_from_angle(check_angle(args.angle_a))
    b_angles = [check_angle(x) for x in parse_floats(args.b_angles, "--b-angles")]
    center = normalize(parse_floats(args.center, "--center"))
    rng = np.random.default_rng(args.seed)
    rep = screening_analysis(a, [setting_from_angle(x) for x in b_angles], p,
                             _policy(args.policy), center, math.radians(args.half_angle),
                             args.n, rng)
    rows = []
    for i, (ang, r) in enumerate(zip(b_angles, rep.rows)):
        others = [rep.z_scores[i, j] for j in range(len(b_angles)) if j != i]
        rows.append({"b_angle_deg": ang, "p_a_plus": r.p_plus, "stderr": r.stderr, "n": r.n,
                     "max_z": max(others) if others else 0.0})
    params = {"angle_a": args.angle_a, "b_angles": b_angles, "center": list(center),
              "half_angle_deg": args.half_angle, "policy": args.policy, "n": args.n,
              "beta": p.beta, "gamma": p.gamma, **extra}
    _emit(args, "screening", params, ["b_angle_deg", "p_a_plus", "stderr", "n", "max_z"], rows)
    return 0


CONFIG_FLOAT_KEYS = ("L", "v", "delta", "kappa", "h", "picard_tol")


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a flat ``key = value`` file (``#`` comments) into an :class:`ExperimentConfig`.

    Vectors are comma-separated triples (``S0`` is normalized on load);
    ``a_deg``/``b_deg`` give coplanar settings by angle instead.
    """
    kw: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        if key in CONFIG_FLOAT_KEYS:
            kw[key] = float(val)
        elif key == "max_picard_iters":
            kw[key] = int(val)
        elif key in ("a", "b", "S0"):
            kw[key] = normalize(parse_floats(val, key))
        elif key in ("a_deg", "b_deg"):
            kw[key[0]] = setting_from_angle(float(val))
        else:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
    try:
        return ExperimentConfig(**kw)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def cmd_dynamics(args) -> int:
    cfg = load_config(args.config)
    rows = []
    for seed, sol in solve_all_seeds(cfg).items():
        row = {"seed_A": int(seed.A), "seed_B": int(seed.B), "status": sol.status,
               "realized_A": int(sol.realized.A), "realized_B": int(sol.realized.B),
               "picard_iters": sol.picard_iters, "residual": sol.residual,
               "fit_status": "skipped"}
        # weights and the triangle are only meaningful for genuine solutions
        if sol.self_consistent:
            try:
                fit = extract_alpha_beta_gamma(sol, cfg)
                tri = check_invariant_triangle(sol, cfg)
                row.update(alpha=fit.params.alpha, beta=fit.params.beta, gamma=fit.params.gamma,
                           fit_residual=fit.residual, triangle_worst=tri.worst_violation,
                           triangle_violations=tri.n_violations, fit_status="ok")
            except DegenerateBasis:
                row["fit_status"] = "degenerate-basis"
        rows.append(row)
    params = {"config": {"L": cfg.L, "v": cfg.v, "delta": cfg.delta, "kappa": cfg.kappa,
                         "h": cfg.h, "a": list(cfg.a), "b": list(cfg.b), "S0": list(cfg.S0),
                         "max_picard_iters": cfg.max_picard_iters,
                         "picard_tol": cfg.picard_tol}}
    cols = ["seed_A", "seed_B", "status", "realized_A", "realized_B", "picard_iters", "residual",
            "fit_status", "alpha", "beta", "gamma", "fit_residual", "triangle_worst", "triangle_violations"]
    _emit(args, "dynamics", params, cols, rows)
    return 0


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrobell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"retrobell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-o", "--out", default=None, help="output path (default stdout)")
        # accepted everywhere so the seed is always echoed, even by deterministic commands
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="RNG seed (default $RETROBELL_SEED or 0)")

    def model(p):
        p.add_argument("--nu", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--gamma", type=float)

    p = sub.add_parser("local", help="purely retarded (local) model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--triple", help="three coplanar angles in degrees, e.g. 0,120,240")
    g.add_argument("--angle", type=float, help="angle between a and b in degrees")
    p.add_argument("--mc-samples", type=int, default=0, help="add a Monte Carlo check")
    common(p)
    p.set_defaults(func=cmd_local)

    p = sub.add_parser("bounds", help="P_min / P_max / median by quadrature")
    p.add_argument("--angle", type=float, default=120.0)
    model(p)
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", help="figure sweeps")
    p.add_argument("figure", choices=("fig6", "fig7"))
    p.add_argument("--angle", type=float, default=120.0)
    p.add_argument("--nu-grid", default=FIG6_NU_GRID)
    p.add_argument("--beta-grid", default=FIG7_BETA_GRID)
    p.add_argument("--gamma-grid", default=FIG7_GAMMA_GRID)
    p.add_argument("--method", choices=("quadrature", "monte-carlo"), default="quadrature")
    p.add_argument("-n", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mc", help="Monte Carlo anti-coincidence estimate")
    p.add_argument("--angle", type=float, default=120.0)
    model(p)
    p.add_argument("--policy", choices=[s.value for s in SfpPolicy], default="unbiased")
    p.add_argument("-n", type=int, default=100_000)
    common(p)
    p.set_defaults(func=cmd_mc)

    for name, helptext, func in (("bell", "three-term Bell sum", cmd_bell),
                                 ("chsh", "CHSH value", cmd_chsh)):
        p = sub.add_parser(name, help=helptext)
        if name == "bell":
            p.add_argument("--triple", default="0,120,240")
        else:
            p.add_argument("--settings", default="0,90,45,-45",
                           help="a,a',b,b' in degrees")
        p.add_argument("--oracle", choices=("local", "qm", "p-max", "p-min", "median"),
                       default="local")
        model(p)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("screening", help="parameter-dependence of P(A=+1 | S0 in bin)")
    p.add_argument("--angle-a", type=float, default=0.0)
    p.add_argument("--b-angles", default="120,150")
    p.add_argument("--center", required=True, help="bin center as x,y,z")
    p.add_argument("--half-angle", type=float, default=1.0, help="bin radius in degrees")
    model(p)
    p.add_argument("--policy", choices=[s.value for s in SfpPolicy], default="unbiased")
    p.add_argument("-n", type=int, default=100_000)
    common(p)
    p.set_defaults(func=cmd_screening)

    p = sub.add_parser("dynamics", help="time-symmetric solver for all four outcome seeds")
    p.add_argument("config", help="key = value config file")
    common(p)
    p.set_defaults(func=cmd_dynamics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidAngle) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except RetrobellError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
