"""Finite-sample training at calculator-derived parameters, audited on held-out draws."""
import argparse

import numpy as np

from momentcal.auditing import alpha_prime, sample_size_calculator
from momentcal.evaluation import empirical_calibration_audit, exact_calibration_audit
from momentcal.finite import DistributionSource, SampleTrainConfig, sample_alternating_descent
from momentcal.synthetic import bernoulli_grid, random_box_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--target", type=float, default=0.2, help="alpha' = beta' target")
    ap.add_argument("--delta-target", type=float, default=0.05)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--groups", type=int, default=8)
    ap.add_argument("--k", type=int, default=4)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--held-out", type=int, default=100_000)
    ap.add_argument("--slack", type=float, default=0.02)
    args = ap.parse_args()

    plan = sample_size_calculator(args.target, args.target, args.delta_target, args.eps, args.groups, args.k, args.m)
    a_p = alpha_prime(plan.alpha, plan.delta, plan.n)
    b_p = alpha_prime(plan.beta, plan.delta, plan.n)
    print(f"plan: alpha={plan.alpha:.6f} beta={plan.beta:.6f} delta={plan.delta:.4g} n={plan.n}")
    print(f"certified levels: alpha'={a_p:.4f} beta'={b_p:.4f}")
    dist = bernoulli_grid(5, 2)
    print("seed  updates  blocks  halt        held-out  exact@alpha'  worst_ratio")
    for seed in range(args.seeds):
        fam = random_box_family(np.random.default_rng([seed, 7]), 2, args.groups)
        cfg = SampleTrainConfig(plan.alpha, plan.beta, plan.delta, plan.n, args.m, args.k, seed=seed)
        bundle, rep = sample_alternating_descent(cfg, DistributionSource(dist, seed=seed), fam)
        held = dist.sample(args.held_out, np.random.default_rng([seed, 99]))
        emp = empirical_calibration_audit(bundle, held, fam, a_p, b_p, slack=args.slack)
        exact = exact_calibration_audit(bundle, dist, fam, a_p, b_p)
        print(f"{seed:4d}  {rep.total_updates:<8d} {rep.blocks_consumed:<7d} {rep.halt_reason:<11s} "
              f"{'pass' if emp.passed else 'FAIL':<9s} {'pass' if exact.passed else 'FAIL':<13s} "
              f"{max(r.ratio for r in emp.rows):.3f}")
    for g in (args.groups, 2 * args.groups, 4 * args.groups):
        p = sample_size_calculator(args.target, args.target, args.delta_target, args.eps, g, args.k, args.m)
        print(f"|G|={g:<4d} n={p.n}")


if __name__ == "__main__":
    main()
