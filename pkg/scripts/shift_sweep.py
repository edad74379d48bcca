"""Sweep the surrogate mixture weight to vary distribution-shift severity.

At w=1 the methods see the true objective; at w=0 the fully biased
surrogate. Prints one summary block per weight.

Example:
    python scripts/shift_sweep.py --weights 0 0.5 1 --n-patients 10
"""

import argparse

from leon.core import Hyperparams
from leon.optimizer import RunConfig, evaluate_cohort
from leon.tasks import make_task


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--task", default="dose", choices=["dose", "regimen"])
    ap.add_argument("--weights", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--n-patients", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--budget", type=int, default=1024)
    args = ap.parse_args()

    task = make_task({"name": args.task, "seed": args.seed})
    hp = Hyperparams(budget=args.budget, batch_size=32)
    for w in args.weights:
        methods = [
            RunConfig(method="leon", engine="boltzmann-memory", hp=hp,
                      mixture_w=w, select_by_raw=True),
            RunConfig(method="surrogate-greedy", hp=hp, mixture_w=w),
        ]
        res = evaluate_cohort(task, methods, args.n_patients, args.seed)
        print(f"-- mixture w={w}")
        for s in res.summaries:
            print(f"   {s.method:<28} {s.mean:>12.4f} +/- {s.sem:.4f}")


if __name__ == "__main__":
    main()
