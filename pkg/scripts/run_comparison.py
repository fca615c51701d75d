"""Run all six allocation policies on a (mode, clusters, budget) grid and
print a comparison table of mean returns and S-component decompositions.

Learned policies need checkpoints; without them the script runs the three
heuristics plus the two analytic-backend ranking policies.
"""

import argparse
import sys

from outbreak_alloc.harness import ExperimentSpec, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--clusters", type=int, nargs="+", default=[5])
    parser.add_argument("--budget-factors", type=int, nargs="+",
                        default=[1, 2])
    parser.add_argument("--modes", nargs="+",
                        default=["synchronous", "asynchronous"])
    parser.add_argument("--episodes", type=int, default=50)
    parser.add_argument("--seeds", type=int, nargs="+",
                        default=[0, 1, 2, 3, 4])
    parser.add_argument("--value-checkpoint", default=None)
    parser.add_argument("--controller-checkpoint", default=None)
    args = parser.parse_args()

    policies = ["symp_avg_rand", "thres_avg_rand", "thres_size_rand",
                "fixed_m_qr", "bin_m_qr"]
    if args.controller_checkpoint:
        policies.append("hier_ppo_qr")

    header = (f"{'policy':>16} {'mode':>13} {'C':>3} {'B':>4} "
              f"{'return':>16} {'S1':>7} {'S2':>7} {'S3':>7}")
    print(header)
    print("-" * len(header))
    for mode in args.modes:
        for n_clusters in args.clusters:
            for factor in args.budget_factors:
                for policy in policies:
                    spec = ExperimentSpec(
                        policy=policy, mode=mode, n_clusters=n_clusters,
                        budget=factor * n_clusters, episodes=args.episodes,
                        seeds=tuple(args.seeds),
                        value_backend="learned" if args.value_checkpoint
                        and policy.endswith("_qr") else "analytic",
                        value_checkpoint=args.value_checkpoint,
                        controller_checkpoint=args.controller_checkpoint,
                        dump_trajectories=False)
                    row = run_experiment(spec, write=False)
                    print(f"{policy:>16} {mode:>13} {n_clusters:>3} "
                          f"{row.budget:>4} "
                          f"{row.mean_return:>8.3f}±{row.std_return:<6.3f} "
                          f"{row.mean_s1:>7.3f} {row.mean_s2:>7.3f} "
                          f"{row.mean_s3:>7.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
