"""Block variance decomposition on the analytic toy functionals and on the
weighted Voronoi passage time; prints increments with jackknife SEs."""
import argparse
from dataclasses import replace

from fpplab import ModelSpec
from fpplab.experiments import ExperimentPlan, run_var_decomp, toy_variances


def show(plan, functional):
    rep = run_var_decomp(plan, functional=functional).data["report"]
    print(f"== {functional} ({rep.outer} outer x {plan.vd_inner} inner)")
    analytic = None
    if functional != "passage_time":
        analytic = toy_variances(replace(plan, vd_functional=functional))
    for k, (v, se) in enumerate(rep.increments):
        want = f"  analytic {analytic[1][k]:.5f}" if analytic else ""
        print(f"  block {k:>2}: {v:10.5f} +- {se:.5f}{want}")
    s, se = rep.increment_sum
    print(f"  sum {s:.5f} +- {se:.5f}; direct variance {rep.total_variance[0]:.5f}"
          + (f"; analytic {analytic[0]:.5f}" if analytic else ""))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="also run the 32x8 passage-time case")
    args = ap.parse_args()
    toy = ExperimentPlan("var_decomp", ModelSpec("voronoi_weighted"), vd_window=(8.0, 4.0),
                         vd_blocks=(2, 2), vd_outer=400, vd_inner=32)
    show(toy, "single_block")
    show(toy, "block_sum")
    if args.full:
        show(ExperimentPlan("var_decomp", ModelSpec("voronoi_weighted")), "passage_time")


if __name__ == "__main__":
    main()
