"""How tight is the separable bound on the conjugation condition number?

Sweeps commuting tuples over a grid of joint spectral radii, conjugates each
into the strict interior of its domain, and compares the measured
cond(P^{1/2})^2 against the certified per-factor product bound. The ratio
says how much of the bound is slack at desk scale; it should approach 1 only
as the radius approaches 1.

Usage:
    python scripts/conjugation_bound_sweep.py --seeds 40 --dim 4
"""

import argparse
from dataclasses import dataclass

import numpy as np

from polydom.cpmap import CPMapTuple
from polydom.cone import min_eig
from polydom.generate import commuting_polynomials
from polydom.similarity import rota_conjugate


@dataclass
class SweepConfig:
    seeds: int = 40
    dim: int = 4
    radii: tuple = (0.3, 0.5, 0.7, 0.8, 0.9, 0.95)
    base_seed: int = 100


def run(cfg: SweepConfig) -> None:
    print(f"{'radius':>7s} {'cond med':>10s} {'cond max':>10s} "
          f"{'bound med':>10s} {'ratio med':>10s} {'worst eig':>10s}")
    for r in cfg.radii:
        conds, bounds, ratios, eigs = [], [], [], []
        for s in range(cfg.seeds):
            inst = commuting_polynomials(
                cfg.base_seed + s, dim=cfg.dim, target_radius=r
            )
            cert, T = rota_conjugate(inst.symbols, inst.m, inst.ops)
            assert cert.status == "PASS", cert.notes
            conds.append(cert.cond)
            bounds.append(cert.claimed_bound)
            ratios.append(cert.cond / cert.claimed_bound)
            phi_T = CPMapTuple(inst.symbols, T)
            grid = phi_T.defect_grid(inst.m, np.eye(cfg.dim))
            eigs.append(min(min_eig(D) for p, D in grid.items() if any(p)))
        print(f"{r:7.2f} {np.median(conds):10.3e} {max(conds):10.3e} "
              f"{np.median(bounds):10.3e} {np.median(ratios):10.3e} "
              f"{min(eigs):10.3e}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=40, help="instances per radius")
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--radii", type=str, default="0.3,0.5,0.7,0.8,0.9,0.95",
                    help="comma separated target radii")
    ap.add_argument("--base-seed", type=int, default=100)
    args = ap.parse_args()
    cfg = SweepConfig(
        seeds=args.seeds,
        dim=args.dim,
        radii=tuple(float(x) for x in args.radii.split(",")),
        base_seed=args.base_seed,
    )
    run(cfg)


if __name__ == "__main__":
    main()
