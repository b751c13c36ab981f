"""Median anti-coincidence probability over a (beta, gamma) grid at 120 degrees."""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from retrobell import __version__
from retrobell.cli import FIG7_BETA_GRID, FIG7_GAMMA_GRID, SWEEP_COLUMNS, parse_grid, render
from retrobell.probability import sweep_beta_gamma


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta-grid", default=FIG7_BETA_GRID)
    ap.add_argument("--gamma-grid", default=FIG7_GAMMA_GRID)
    ap.add_argument("--angle", type=float, default=120.0)
    ap.add_argument("-o", "--out", type=Path, default=Path("fig7.csv"))
    args = ap.parse_args()

    bg = parse_grid(args.beta_grid, "--beta-grid")
    gg = parse_grid(args.gamma_grid, "--gamma-grid")
    rows = sweep_beta_gamma(bg, gg, args.angle)
    meta = {"tool": "retrobell", "version": __version__, "command": "scripts/reproduce_fig7.py",
            "seed": None, "params": {"beta_grid": bg, "gamma_grid": gg, "angle": args.angle}}
    args.out.write_text(render(meta, SWEEP_COLUMNS, [r.as_dict() for r in rows], "csv"))

    surface = np.full((len(bg), len(gg)), np.nan)
    for k, r in enumerate(rows):
        if r.regime_ok:
            surface[k // len(gg), k % len(gg)] = r.median
    print("median (rows: beta, columns: gamma; '.' = outside regime)")
    print("beta\\gamma " + " ".join(f"{g:5.2f}" for g in gg))
    for b, line in zip(bg, surface):
        print(f"{b:10.2f} " + " ".join("  .  " if np.isnan(x) else f"{x:5.3f}" for x in line))

    inner = surface[1:-1, 1:-1]
    print(f"\ninterior spread (max - min): {np.nanmax(inner) - np.nanmin(inner):.6f}")
    i, j = np.unravel_index(np.nanargmax(surface), surface.shape)
    print(f"maximum {surface[i, j]:.6f} at beta = {bg[i]}, gamma = {gg[j]}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
