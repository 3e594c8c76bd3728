"""Run the verification sweep and print one row per check.

    python3 scripts/verify_sweep.py --grid-n 4001 --perturbations 50
"""

import argparse
import time

from antedata.suite import MODEL_NAMES, SuiteConfig, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", nargs="+", default=list(MODEL_NAMES), choices=MODEL_NAMES)
    ap.add_argument("--grid-n", type=int, default=4001)
    ap.add_argument("--n-obs", type=int, default=20)
    ap.add_argument("--partitions", type=int, default=5)
    ap.add_argument("--perturbations", type=int, default=50)
    ap.add_argument("--force-iid", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = SuiteConfig(
        models=tuple(args.models),
        n_obs=args.n_obs,
        partitions=args.partitions,
        grid_n=args.grid_n,
        perturbations=args.perturbations,
        force_iid=args.force_iid,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    card = run_suite(cfg)
    elapsed = time.perf_counter() - t0

    print(f"{'check':40s} {'value':>12s} {'threshold':>10s}  ok")
    for c in card["checks"]:
        v = "n/a" if c["value"] is None else f"{c['value']:.3e}"
        print(f"{c['name']:40s} {v:>12s} {c['threshold']:>10.0e}  {'yes' if c['passed'] else 'NO'}")
    print(f"\nall passed: {card['passed']}   ({elapsed:.2f} s)")


if __name__ == "__main__":
    main()
