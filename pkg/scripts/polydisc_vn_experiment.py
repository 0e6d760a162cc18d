"""Margin statistics for the polydisc functional-calculus bound.

For commuting strict contraction pairs and random polynomial matrices, the
norm of the evaluated matrix is bounded by sqrt(b) times the torus supremum,
where b multiplies the per-factor power-norm sums. This experiment samples
that margin over norm caps: the observed ratio ||q(C)|| / (sqrt(b) sup)
stays below 1, and the headroom shrinks as the contractions grow.

Usage:
    python scripts/polydisc_vn_experiment.py --trials 60 --degree 3
"""

import argparse
from dataclasses import dataclass
from itertools import product

import numpy as np

from polydom.berezin import vn_check_polydisc
from polydom.cpmap import OperatorTuple
from polydom.generate import strict_contractions
from polydom.words import NCPolynomial


@dataclass
class VNConfig:
    trials: int = 60
    dim: int = 4
    degree: int = 3
    norm_caps: tuple = (0.3, 0.5, 0.7, 0.9)
    base_seed: int = 0


def random_poly_matrix(rng, k=2, degree=3, shape=(2, 2)):
    letters = [(i, 1) for i in range(1, k + 1)]

    def rand_poly():
        terms = []
        for length in range(degree + 1):
            for mono in product(letters, repeat=length):
                if rng.uniform() < (0.8 if length == 0 else 0.35):
                    c = complex(rng.standard_normal(), rng.standard_normal())
                    terms.append((c, mono))
        if not terms:
            terms.append((1.0 + 0.0j, (letters[0],)))
        return NCPolynomial(tuple(terms))

    rows, cols = shape
    return [[rand_poly() for _ in range(cols)] for _ in range(rows)]


def run(cfg: VNConfig) -> None:
    print(f"{'cap':>5s} {'pass':>5s} {'other':>6s} {'ratio med':>10s} "
          f"{'ratio max':>10s} {'sqrt(b) med':>11s}")
    for cap in cfg.norm_caps:
        ratios, factors = [], []
        verdicts = {"PASS": 0, "FAILED": 0, "INCONCLUSIVE": 0}
        for s in range(cfg.trials):
            C = strict_contractions(
                cfg.base_seed + s, k=2, dim=cfg.dim, norm_cap=cap
            )
            ops = OperatorTuple([[C[0]], [C[1]]])
            pm = random_poly_matrix(
                np.random.default_rng(5000 + s), degree=cfg.degree
            )
            rep = vn_check_polydisc(ops, pm)
            verdicts[rep.verdict] += 1
            if np.isfinite(rep.rhs) and rep.rhs > 0:
                ratios.append(rep.lhs / rep.rhs)
                factors.append(rep.factor)
        other = cfg.trials - verdicts["PASS"]
        print(f"{cap:5.2f} {verdicts['PASS']:5d} {other:6d} "
              f"{np.median(ratios):10.4f} {max(ratios):10.4f} "
              f"{np.median(factors):11.4f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=60, help="pairs per norm cap")
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--degree", type=int, default=3)
    ap.add_argument("--norm-caps", type=str, default="0.3,0.5,0.7,0.9")
    ap.add_argument("--base-seed", type=int, default=0)
    args = ap.parse_args()
    cfg = VNConfig(
        trials=args.trials,
        dim=args.dim,
        degree=args.degree,
        norm_caps=tuple(float(x) for x in args.norm_caps.split(",")),
        base_seed=args.base_seed,
    )
    run(cfg)


if __name__ == "__main__":
    main()
