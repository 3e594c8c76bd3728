"""Leave-group-out CV three ways on each built-in model, with timings."""

import argparse

from antedata.cv import CVPlan, compare_methods, run_cv
from antedata.models import simulate
from antedata.suite import MODEL_NAMES, builtin_case, case_prior


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-obs", type=int, default=40)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--grid-n", type=int, default=4001)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for name in MODEL_NAMES:
        case = builtin_case(name)
        prior = case_prior(case, args.grid_n)
        data = simulate(case.model, case.theta_true, args.n_obs, f"folds:{args.folds}", args.seed)
        reports = {m: run_cv(prior, case.model, data, CVPlan(data.labels, m))
                   for m in ("exact-delete", "refit", "variational-delete")}
        print(f"\n{name}: total log predictive")
        for m, r in reports.items():
            print(f"  {m:20s} {r.total_log_predictive: .10f}   {sum(r.timings().values()) * 1e3:8.1f} ms")
        for other in ("refit", "variational-delete"):
            s = compare_methods(reports["exact-delete"], reports[other])
            print(f"  exact-delete vs {other:18s} max fold diff {s['max_abs_diff']:.2e}"
                  f"   time ratio {s['runtime_ratio']:.2f}")


if __name__ == "__main__":
    main()
