"""Non-gating comparison on the bundled data over several split seeds.

Prints accuracy and sparsity of the sparse fit next to the uniform-weights
reference, plus the cheap lower bounds. None of these numbers are checked;
they exist to spot regressions by eye.
"""

import argparse

import numpy as np

from smkl.core import KSparseRandom, SmklConfig, fit, weights_value
from smkl.data_io import load_bundled, split_standardize
from smkl.kernels import build_bank, cross_gram, default_kernel_specs
from smkl.model_select import accuracy, evaluate
from smkl.relaxations import certify_gap, solve_relaxation


def uniform_accuracy(specs, split, C):
    beta = np.full(len(specs), 1.0 / len(specs))
    bank = build_bank(specs, split.train.X)
    _, model = weights_value(bank, split.train.y, beta, C, 0.0)
    K_cross = sum(b * cross_gram(s, split.train.X, split.test.X) for b, s in zip(beta, specs))
    return accuracy(model, K_cross, split.train.y, split.test.y)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--datasets", nargs="+", default=["iris", "wine"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--C", type=float, default=10.0)
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--k0", type=int, default=1)
    args = ap.parse_args()

    specs = default_kernel_specs()
    print("dataset seed  acc   uniform nnz  upper        soc-basis    gap%")
    for name in args.datasets:
        raw = load_bundled(name)
        for seed in args.seeds:
            split = split_standardize(raw, seed)
            bank = build_bank(specs, split.train.X)
            res = fit(bank, split.train.y, SmklConfig(C=args.C, lam=args.lam, k0=args.k0, init=KSparseRandom(seed)))
            rep = evaluate(res, specs, split)
            lb = solve_relaxation("soc-basis", bank, split.train.y, args.C, args.lam, args.k0).lower_bound
            gap = certify_gap(res.upper_bound, lb)
            print(f"{name:7s} {seed:4d}  {rep.accuracy:5.1f} {uniform_accuracy(specs, split, args.C):5.1f}   "
                  f"{rep.nnz_beta:3d}  {res.upper_bound:11.4f}  {lb:11.4f}  {gap.gap_over_lower:7.2f}")


if __name__ == "__main__":
    main()
