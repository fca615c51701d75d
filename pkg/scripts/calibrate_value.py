"""Calibration probe: generalized vs fixed-cost estimators at desk scale.

Trains a generalized estimator and fixed-cost ones on a reduced step count,
then compares paired greedy returns per cost point and checks the
monotonicity sweep. Used to pick training defaults; not part of the tests.
"""

import argparse
import sys

import numpy as np

from outbreak_alloc.config import desk_epi
from outbreak_alloc.harness import sweep_monotonicity
from outbreak_alloc.value import SingleClusterEnv, TrainConfig, delta_q, td_train


def greedy_return(estimator, epi, alpha2, alpha3, episodes, seed,
                  random_policy=False):
    rng = np.random.default_rng(seed + 999)
    returns = []
    for episode in range(episodes):
        env = SingleClusterEnv(epi, alpha2, alpha3, seed, episode)
        total = 0.0
        while not env.done():
            obs, records = env.observe()
            if random_policy:
                actions = rng.random(env.size) < 0.5
            else:
                dq = delta_q(estimator, obs, records=records,
                             local_day=env.local_day)
                actions = dq > 0.0
            total += env.step(actions)
        returns.append(total)
    return float(np.mean(returns))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=60_000)
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lambda-gp", type=float, default=1.0)
    parser.add_argument("--g-target", type=float, default=-1.0)
    parser.add_argument("--base-lr", type=float, default=3e-4)
    args = parser.parse_args()

    epi = desk_epi()
    warmup = max(500, args.steps // 20)
    gen = td_train(TrainConfig(total_steps=args.steps, warmup_steps=warmup,
                               lambda_gp=args.lambda_gp,
                               g_target=args.g_target,
                               base_lr=args.base_lr, seed=args.seed), epi,
                   progress=True)
    print("generalized trained")
    grid = [0.01, 0.05, 0.08, 0.1]
    for alpha3 in grid:
        fixed = td_train(
            TrainConfig(total_steps=args.steps, warmup_steps=warmup,
                        lambda_gp=args.lambda_gp, g_target=args.g_target,
                        base_lr=args.base_lr, alpha3_fixed=alpha3,
                        seed=args.seed), epi)
        r_gen = greedy_return(gen, epi, 0.1, alpha3, args.episodes, args.seed)
        r_fix = greedy_return(fixed, epi, 0.1, alpha3, args.episodes,
                              args.seed)
        r_rand = greedy_return(None, epi, 0.1, alpha3, args.episodes,
                               args.seed, random_policy=True)
        rel = abs(r_gen - r_fix) / abs(r_fix)
        print(f"alpha3={alpha3:.2f}: gen {r_gen:+.4f} fixed {r_fix:+.4f} "
              f"rand {r_rand:+.4f} rel_gap {rel:.3f}")
    rows = sweep_monotonicity(gen, [0.0, 0.02, 0.04, 0.06, 0.08, 0.1],
                              episodes=300, sizes=(3, 6, 10), epi=epi,
                              seed=args.seed)
    for size in (3, 6, 10):
        curve = [r["tests_per_step"] for r in rows
                 if r["cluster_size"] == size]
        print(f"size {size} curve:", [f"{v:.3f}" for v in curve])


if __name__ == "__main__":
    sys.exit(main())
