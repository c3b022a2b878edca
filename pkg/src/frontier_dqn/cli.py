"""Command-line entry point: collect, train, test and similarity."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path

from . import agent, evaluation, neural
from .gridworld import MapError, load_grid_file, load_map, write_pgm

log = logging.getLogger("frontier_dqn")

BUNDLED = {"house": "house.map", "house_dataset": "house_dataset.txt"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_text(name: str) -> str:
    """Read a file, or a bundled resource when ``name`` is a bundled alias."""
    if name in BUNDLED and not Path(name).exists():
        return resources.files("frontier_dqn.data").joinpath(BUNDLED[name]).read_text("utf-8")
    return Path(name).read_text(encoding="utf-8")


def _episode(seed, truth, start, params, penalty, budget, threshold, variant, record):
    if params is None:
        policy, name = evaluation.greedy_policy, "baseline"
    else:
        policy, name = evaluation.trained_policy(params, penalty), "trained"
    return evaluation.explore(truth, start, policy, budget, seed, threshold, penalty=penalty,
                              variant=variant, policy_name=name, record=record)


def _run_episodes(seeds, parallel: int, **kw):
    work = partial(_episode, **kw)
    if parallel > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(work, seeds))
    return [work(s) for s in seeds]


def cmd_collect(args) -> int:
    truth, start = load_map(_read_text(args.map))
    seeds = list(range(args.seed, args.seed + args.runs))
    results = _run_episodes(seeds, args.parallel, truth=truth, start=start, params=None,
                            penalty=args.penalty, budget=args.budget, threshold=args.threshold,
                            variant="baseline", record=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dataset.txt").write_text(agent.dumps_dataset([r.transitions for r in results]),
                                     encoding="utf-8")
    runs = [r.metrics for r in results]
    (out / "metrics.csv").write_text(evaluation.metrics_csv(runs), encoding="utf-8")
    n = sum(len(r.transitions) for r in results)
    print(f"collected {len(results)} runs, {n} transitions -> {out}")
    if runs:
        print(evaluation.format_summary(evaluation.aggregate(runs)))
    return 0


def _train_config(args) -> agent.TrainConfig:
    return agent.TrainConfig(
        gamma=args.gamma, learning_rate=args.learning_rate, epsilon=args.epsilon,
        epsilon_min=args.epsilon_min, epsilon_decay=args.epsilon_decay, epochs=args.epochs,
        save_interval=args.save_interval, batch_size=args.batch_size, penalty=args.penalty,
        seed=args.seed, target_alpha=args.target_alpha)


def cmd_train(args) -> int:
    variant = agent.get_variant(args.algo)
    episodes = agent.loads_dataset(_read_text(args.dataset))
    if not any(episodes):
        raise UsageError(f"dataset {args.dataset} is empty")
    cfg = _train_config(args)
    params, series = agent.train(episodes, cfg, variant)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{variant.name}.ckpt").write_text(neural.dumps_checkpoint(params, variant.name),
                                              encoding="utf-8")
    (out / f"{variant.name}_mse.csv").write_text(evaluation.mse_csv(series), encoding="utf-8")
    if series:
        stats = evaluation.mse_series_stats(series)
        print(f"{variant.name}: first mse {stats.first:.6f}, last mse {stats.last:.6f}, "
              f"mean {stats.mean:.6f}, slope {stats.slope:.6g}")
    else:
        print(f"{variant.name}: 0 epochs, checkpoint holds the initial weights")
    return 0


def cmd_test(args) -> int:
    try:
        params, algo = neural.loads_checkpoint(Path(args.model).read_text(encoding="utf-8"))
    except neural.CheckpointError as exc:
        raise UsageError(f"cannot load {args.model}: {exc}") from None
    truth, start = load_map(_read_text(args.map))
    seeds = list(range(args.seed, args.seed + args.episodes))
    results = _run_episodes(seeds, args.parallel, truth=truth, start=start, params=params,
                            penalty=args.penalty, budget=args.budget, threshold=args.threshold,
                            variant=algo, record=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = [r.metrics for r in results]
    (out / "metrics.csv").write_text(evaluation.metrics_csv(runs), encoding="utf-8")
    for i, r in enumerate(results):
        (out / f"episode_{i:03d}.pgm").write_text(write_pgm(r.known), encoding="utf-8")
    if runs:
        print(evaluation.format_summary(evaluation.aggregate(runs)))
    return 0


def cmd_similarity(args) -> int:
    ref = load_grid_file(args.ref)
    cand = load_grid_file(args.cand)
    if ref.shape != cand.shape:
        raise UsageError(f"dimension mismatch: {ref.width}x{ref.height} vs {cand.width}x{cand.height}")
    score, passed = evaluation.map_similarity(ref, cand)
    print(f"similarity={score:.6f} pass={'true' if passed else 'false'}")
    return 0 if passed else 2


def _common_run_flags(p):
    p.add_argument("--map", required=True, help="map file, or 'house' for the bundled map")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--budget", type=int, default=2000, help="tick budget per episode")
    p.add_argument("--threshold", type=float, default=evaluation.COMPLETION_THRESHOLD,
                   help="coverage needed for a completed map")
    p.add_argument("--penalty", type=float, default=10.0)
    p.add_argument("--parallel", type=int, default=1, help="worker processes for episodes")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frontier-dqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="record greedy-baseline exploration runs")
    _common_run_flags(p)
    p.add_argument("--runs", type=int, default=10)
    p.set_defaults(func=cmd_collect)

    d = agent.TrainConfig()
    p = sub.add_parser("train", help="train a Q-network on a recorded dataset")
    p.add_argument("--algo", required=True, choices=sorted(agent.VARIANTS))
    p.add_argument("--dataset", default="house_dataset",
                   help="dataset file, or 'house_dataset' for the bundled one")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--gamma", type=float, default=d.gamma)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--epsilon", type=float, default=d.epsilon)
    p.add_argument("--epsilon-min", type=float, default=d.epsilon_min)
    p.add_argument("--epsilon-decay", type=float, default=d.epsilon_decay)
    p.add_argument("--save-interval", type=int, default=d.save_interval)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--penalty", type=float, default=d.penalty)
    p.add_argument("--target-alpha", type=float, default=d.target_alpha,
                   help="step size inside the DQN target (1 = plain Bellman target)")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="run a trained model on a map")
    p.add_argument("--model", required=True, help="checkpoint written by 'train'")
    p.add_argument("--episodes", type=int, default=5)
    _common_run_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("similarity", help="cosine similarity of two maps (PGM or map text)")
    p.add_argument("--ref", required=True)
    p.add_argument("--cand", required=True)
    p.set_defaults(func=cmd_similarity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("runs", "episodes", "budget", "parallel"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 0:
            parser.error(f"--{name} must be >= 0")
    try:
        return args.func(args)
    except (UsageError, MapError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
