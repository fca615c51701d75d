"""Command-line entry points.

Subcommands: run, train-q, train-ppo, bench, sweep, serve. The output root
defaults to ./results and can be moved with the OUTBREAK_ALLOC_OUT
environment variable. Any invariant violation exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .config import desk_epi
from .errors import BudgetViolationError, CheckpointMismatchError, \
    ParameterError, StateError


def _spec_from_args(args) -> harness.ExperimentSpec:
    if args.spec_file:
        doc = json.loads(Path(args.spec_file).read_text())
        return harness.ExperimentSpec(**doc)
    return harness.ExperimentSpec(
        policy=args.policy,
        mode=args.mode,
        n_clusters=args.clusters,
        budget=args.budget,
        alpha2=args.alpha2,
        alpha3_true=args.alpha3,
        episodes=args.episodes,
        seeds=tuple(args.seeds),
        fixed_m=args.fixed_m,
        value_backend=args.value_backend,
        value_checkpoint=args.value_checkpoint,
        controller_checkpoint=args.controller_checkpoint,
        dump_trajectories=not args.no_dump,
        output_dir=args.out,
    )


def cmd_run(args) -> int:
    spec = _spec_from_args(args)
    row = harness.run_experiment(spec)
    print(f"{spec.policy} ({spec.mode}, C={spec.n_clusters}, B={spec.budget}): "
          f"return {row.mean_return:.4f} ± {row.std_return:.4f}  "
          f"S1={row.mean_s1:.3f} S2={row.mean_s2:.3f} S3={row.mean_s3:.3f}")
    return 0


def cmd_train_q(args) -> int:
    from .value import TrainConfig, save_checkpoint, td_train

    config = TrainConfig(
        total_steps=args.steps,
        seed=args.seed,
        alpha2=args.alpha2,
        alpha3_fixed=args.alpha3_fixed,
        lambda_gp=args.lambda_gp,
        g_target=args.g_target,
    )
    epi = desk_epi(cluster_size_max=args.cluster_size_max)
    estimator = td_train(config, epi, progress=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(estimator, out)
    print(f"saved value checkpoint to {out}")
    return 0


def cmd_train_ppo(args) -> int:
    from .config import CostParams, SystemConfig
    from .controllers import PpoConfig, ppo_train, save_controller
    from .engine import ControllerTrainingEnv
    from .rng import u01
    from .value import load_checkpoint, AnalyticQ

    epi = desk_epi(cluster_size_max=args.cluster_size_max)
    costs = CostParams(alpha2=args.alpha2, alpha3_true=args.alpha3,
                       budget=args.budget)
    if args.value_checkpoint:
        estimator = load_checkpoint(args.value_checkpoint)
    else:
        estimator = AnalyticQ(epi, args.alpha2)
    ppo_config = PpoConfig(total_steps=args.steps, seed=args.seed)
    budget_factors = (1, 2, 5, 20)

    def factory(env_index, episode):
        from .rng import Channel

        factor = budget_factors[int(
            u01(args.seed, env_index, episode, Channel.EPISODE)
            * len(budget_factors))]
        config = SystemConfig(epi=epi, costs=costs, mode=args.mode,
                              n_clusters=args.clusters, seed=args.seed)
        return ControllerTrainingEnv(config, estimator, episode,
                                     budget=factor * args.clusters)

    controller = ppo_train(ppo_config, factory, n_max=40, progress=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_controller(controller, out)
    print(f"saved controller checkpoint to {out}")
    return 0


def cmd_bench(args) -> int:
    rows = harness.bench_latency(
        cluster_grid=tuple(args.clusters_grid),
        budget_factors=tuple(args.budget_factors),
        episodes=args.episodes,
    )
    out = Path(args.out) if args.out \
        else harness.output_root() / "latency_table.csv"
    harness.write_latency_table(rows, out)
    for r in rows:
        print(f"C={r.n_clusters:3d} B={r.budget:4d}  "
              f"bin {r.bin_mean_ms:8.3f} ms  ppo {r.ppo_mean_ms:8.3f} ms  "
              f"speedup {r.speedup:5.2f}x  evals {r.bin_evaluations_mean:.1f}"
              f"/{r.ppo_evaluations_mean:.1f}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    from .value import AnalyticQ, load_checkpoint

    epi = desk_epi(cluster_size_max=args.cluster_size_max)
    if args.checkpoint:
        estimator = load_checkpoint(args.checkpoint)
    else:
        estimator = AnalyticQ(epi, args.alpha2)
    rows = harness.sweep_monotonicity(
        estimator, args.alpha3_grid, episodes=args.episodes,
        sizes=tuple(args.sizes), alpha2=args.alpha2, seed=args.seed, epi=epi)
    out = Path(args.out) if args.out \
        else harness.output_root() / "tests_vs_alpha3.csv"
    harness.write_sweep(rows, out)
    for row in rows:
        print(f"size={row['cluster_size']:3d} alpha3={row['alpha3']:.3f} "
              f"tests/step={row['tests_per_step']:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outbreak-alloc",
        description="Budget-constrained testing allocation across clusters")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--spec-file", default=None,
                     help="JSON ExperimentSpec (overrides other flags)")
    run.add_argument("--policy", default="thres_avg_rand",
                     choices=harness.ALL_POLICIES)
    run.add_argument("--mode", default="asynchronous",
                     choices=["synchronous", "asynchronous"])
    run.add_argument("--clusters", type=int, default=5)
    run.add_argument("--budget", type=int, default=5)
    run.add_argument("--alpha2", type=float, default=0.1)
    run.add_argument("--alpha3", type=float, default=0.05)
    run.add_argument("--episodes", type=int, default=20)
    run.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    run.add_argument("--fixed-m", type=float, default=1.0)
    run.add_argument("--value-backend", default="analytic",
                     choices=["analytic", "learned"])
    run.add_argument("--value-checkpoint", default=None)
    run.add_argument("--controller-checkpoint", default=None)
    run.add_argument("--no-dump", action="store_true")
    run.add_argument("--out", default=None)
    run.set_defaults(func=cmd_run)

    train_q = sub.add_parser("train-q", help="train the value estimator")
    train_q.add_argument("--steps", type=int, default=200_000)
    train_q.add_argument("--seed", type=int, default=0)
    train_q.add_argument("--alpha2", type=float, default=0.1)
    train_q.add_argument("--alpha3-fixed", type=float, default=None)
    train_q.add_argument("--lambda-gp", type=float, default=1.0)
    train_q.add_argument("--g-target", type=float, default=-1.0)
    train_q.add_argument("--cluster-size-max", type=int, default=10)
    train_q.add_argument("--out", default="checkpoints/value.ckpt")
    train_q.set_defaults(func=cmd_train_q)

    train_ppo = sub.add_parser("train-ppo", help="train the PPO controller")
    train_ppo.add_argument("--steps", type=int, default=50_000)
    train_ppo.add_argument("--seed", type=int, default=0)
    train_ppo.add_argument("--clusters", type=int, default=5)
    train_ppo.add_argument("--budget", type=int, default=5)
    train_ppo.add_argument("--alpha2", type=float, default=0.1)
    train_ppo.add_argument("--alpha3", type=float, default=0.05)
    train_ppo.add_argument("--mode", default="asynchronous")
    train_ppo.add_argument("--cluster-size-max", type=int, default=10)
    train_ppo.add_argument("--value-checkpoint", default=None)
    train_ppo.add_argument("--out", default="checkpoints/controller.ckpt")
    train_ppo.set_defaults(func=cmd_train_ppo)

    bench = sub.add_parser("bench", help="controller latency benchmark")
    bench.add_argument("--clusters-grid", type=int, nargs="+",
                       default=[10, 20, 40])
    bench.add_argument("--budget-factors", type=int, nargs="+", default=[2])
    bench.add_argument("--episodes", type=int, default=2)
    bench.add_argument("--out", default=None)
    bench.set_defaults(func=cmd_bench)

    sweep = sub.add_parser("sweep", help="tests-vs-cost monotonicity sweep")
    sweep.add_argument("--alpha3-grid", type=float, nargs="+",
                       default=[0.0, 0.02, 0.04, 0.06, 0.08, 0.1])
    sweep.add_argument("--episodes", type=int, default=100)
    sweep.add_argument("--sizes", type=int, nargs="+", default=[3, 6, 10])
    sweep.add_argument("--alpha2", type=float, default=0.1)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--cluster-size-max", type=int, default=10)
    sweep.add_argument("--checkpoint", default=None)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(func=cmd_sweep)

    serve = sub.add_parser("serve", help="start the scenario service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, CheckpointMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BudgetViolationError, StateError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
