"""Exploration episodes, metrics and map similarity scoring."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import agent
from .frontier import detect_frontiers, frontier_record
from .gridworld import FREE, OCCUPIED, UNKNOWN, Environment, OccupancyGrid, RobotPose, SensorConfig, \
    reachable_free
from .neural import NetworkParams
from .planner import Outcome, dispatch_goal

COMPLETION_THRESHOLD = 0.95
SIMILARITY_GATE = 0.75
POOL_SCHEDULE = ((2, 2), (4, 4), (8, 8))

METRICS_HEADER = ["episode", "seed", "policy", "variant", "ticks", "coverage", "completed",
                  "cumulative_reward", "centroids_visited"]

Policy = Callable[[np.ndarray, "agent.CentroidRecord"], int]


@dataclass
class EpisodeMetrics:
    seed: int | None
    variant: str
    ticks: int
    coverage: float
    completed: bool
    cumulative_reward: float = 0.0
    centroids_visited: int = 0
    policy: str = "baseline"
    truncated_records: int = 0
    unreachable: int = 0


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    known: OccupancyGrid
    transitions: list = field(default_factory=list)


def greedy_policy(state, record) -> int:
    return agent.target_slot(record)


def trained_policy(params: NetworkParams, penalty: float = 10.0) -> Policy:
    rng = np.random.default_rng(0)  # unused at epsilon 0, kept for the select_action contract

    def choose(state, record) -> int:
        return agent.select_action(params, state, record, 0.0, rng, penalty)
    return choose


def episode_start(truth: OccupancyGrid, default: RobotPose, seed: int | None) -> RobotPose:
    """Start pose for a seeded episode: a free cell reachable from the map's start marker."""
    if seed is None:
        return default
    cells = np.argwhere(reachable_free(truth, default.cell))
    r, c = cells[np.random.default_rng(seed).integers(len(cells))]
    return RobotPose(float(c), float(r))


def run_episode(env: Environment, policy: Policy, budget: int,
                threshold: float = COMPLETION_THRESHOLD, *, penalty: float = 10.0,
                seed: int | None = None, variant: str = "baseline", policy_name: str = "baseline",
                record: bool = False) -> EpisodeResult:
    """Explore until no frontier centroid is left or the tick budget is spent.

    With ``record=True`` one transition is kept per goal decision; the last
    one carries ``done = 1``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    h, w = env.truth.shape
    radius = env.sensor.range
    ticks = 0
    cumulative = 0.0
    visited = 0
    unreachable = 0
    truncated = 0
    blacklist: set = set()
    # goals that stay frontiers after a visit (their Unknown neighbour hides behind a corner)
    exhausted: set = set()
    transitions = []
    pending = None
    while True:
        rec = frontier_record(env.known, radius, exclude=blacklist | exhausted)
        truncated += rec.truncated > 0
        state = agent.prepare_input(env.pose, rec, w, h)
        if pending is not None:
            transitions.append(agent.Transition(pending[0], pending[1], pending[2], state, 0))
            pending = None
        if rec.n_valid == 0 or ticks >= budget:
            break
        slot = policy(state, rec)
        reward = agent.compute_reward(rec.centroids[slot], agent.target_centroid(rec), penalty)
        cumulative += reward
        if record:
            pending = (state, slot, reward)
        goal = rec.cells[slot]
        if goal is None:
            # a padded slot gives the robot nowhere to go
            break
        result = dispatch_goal(env, goal, (env.pose.x, env.pose.y), max_ticks=budget - ticks)
        ticks += result.ticks
        if result.outcome in (Outcome.REACHED, Outcome.RESENT):
            visited += 1
            blacklist.clear()
            if goal in detect_frontiers(env.known):
                exhausted.add(goal)
        else:
            unreachable += 1
            blacklist.add(goal)
    if pending is not None:
        transitions.append(agent.Transition(pending[0], pending[1], pending[2], state, 0))
    if transitions:
        last = transitions[-1]
        transitions[-1] = last._replace(done=1)
    cov = env.coverage()
    metrics = EpisodeMetrics(seed, variant, ticks, cov, cov >= threshold, cumulative, visited,
                             policy_name, truncated, unreachable)
    return EpisodeResult(metrics, env.known.copy(), transitions)


def explore(truth: OccupancyGrid, start: RobotPose, policy: Policy, budget: int, seed: int | None,
            threshold: float = COMPLETION_THRESHOLD, sensor: SensorConfig = SensorConfig(),
            **kwargs) -> EpisodeResult:
    """Build a fresh environment for ``seed`` and run one episode in it."""
    pose = episode_start(truth, start, seed)
    env = Environment(truth, pose, sensor, start=start.cell)
    return run_episode(env, policy, budget, threshold, seed=seed, **kwargs)


# -- metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class SeriesStats:
    first: float
    last: float
    mean: float
    slope: float


def mse_series_stats(series) -> SeriesStats:
    y = np.asarray(series, dtype=float)
    if y.size == 0:
        raise ValueError("empty MSE series")
    slope = 0.0
    if y.size > 1:
        x = np.arange(y.size, dtype=float)
        xc = x - x.mean()
        slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return SeriesStats(float(y[0]), float(y[-1]), float(y.mean()), slope)


@dataclass(frozen=True)
class GroupSummary:
    policy: str
    variant: str
    runs: int
    avg_ticks: float
    avg_coverage: float
    completed: int
    not_completed: int


def aggregate(runs) -> list[GroupSummary]:
    """Per (policy, variant) means and completion counts, sorted by group key."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to aggregate")
    groups = defaultdict(list)
    for m in runs:
        groups[(m.policy, m.variant)].append(m)
    out = []
    for (policy, variant), ms in sorted(groups.items()):
        done = sum(1 for m in ms if m.completed)
        out.append(GroupSummary(policy, variant, len(ms),
                                sum(m.ticks for m in ms) / len(ms),
                                sum(m.coverage for m in ms) / len(ms),
                                done, len(ms) - done))
    return out


def format_summary(summary: list[GroupSummary]) -> str:
    lines = [f"{'policy':<10} {'variant':<14} {'runs':>4} {'avg_ticks':>10} {'coverage':>9} "
             f"{'completed':>9} {'not_completed':>13}"]
    for g in summary:
        lines.append(f"{g.policy:<10} {g.variant:<14} {g.runs:>4} {g.avg_ticks:>10.1f} "
                     f"{g.avg_coverage:>9.4f} {g.completed:>9} {g.not_completed:>13}")
    return "\n".join(lines)


def metrics_csv(runs) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for i, m in enumerate(runs):
        writer.writerow([i, "" if m.seed is None else m.seed, m.policy, m.variant, m.ticks,
                         f"{m.coverage:.6f}", "true" if m.completed else "false",
                         f"{m.cumulative_reward:.6f}", m.centroids_visited])
    return buf.getvalue()


def mse_csv(series) -> str:
    lines = ["epoch,mse"] + [f"{i + 1},{v:.6f}" for i, v in enumerate(series)]
    return "\n".join(lines) + "\n"


# -- map similarity ----------------------------------------------------------

_INTENSITY = {UNKNOWN: 0.5, FREE: 1.0, OCCUPIED: 0.0}


def pool_output_size(size: int, pool: int, stride: int) -> int:
    if pool < 1 or stride < 1:
        raise ValueError("pool and stride must be >= 1")
    if pool > size:
        raise ValueError(f"pool {pool} larger than input {size}")
    return (size - pool) // stride + 1


def average_pool(x: np.ndarray, pool: int, stride: int) -> np.ndarray:
    oh = pool_output_size(x.shape[0], pool, stride)
    ow = pool_output_size(x.shape[1], pool, stride)
    out = np.empty((oh, ow))
    for i in range(oh):
        for j in range(ow):
            out[i, j] = x[i * stride:i * stride + pool, j * stride:j * stride + pool].mean()
    return out


def encode_intensity(grid: OccupancyGrid) -> np.ndarray:
    lut = np.array([_INTENSITY[UNKNOWN], _INTENSITY[FREE], _INTENSITY[OCCUPIED]])
    return lut[grid.cells.astype(np.int64) + 1]


def extract_features(grid: OccupancyGrid) -> np.ndarray:
    """Multi-scale average-pooled map features.

    Two channels are pooled at every scale: the cell intensity (Unknown 0.5,
    Free 1.0, Occupied 0.0) and a known-cell indicator.  Scales whose window
    exceeds the map are skipped; a map smaller than every window falls back
    to the raw channels.
    """
    channels = (encode_intensity(grid), (grid.cells != UNKNOWN).astype(float))
    parts = []
    for pool, stride in POOL_SCHEDULE:
        if pool > grid.height or pool > grid.width:
            continue
        parts += [average_pool(ch, pool, stride).ravel() for ch in channels]
    if not parts:
        parts = [ch.ravel() for ch in channels]
    return np.concatenate(parts)


def dot(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def magnitude(a) -> float:
    return math.sqrt(dot(a, a))


def cosine_similarity(a, b) -> float:
    aa, bb = dot(a, a), dot(b, b)
    if aa == 0.0 or bb == 0.0:
        raise ValueError("cosine similarity of a zero-magnitude vector")
    # sqrt(aa * bb) instead of |a| * |b| so that identical inputs give exactly 1.0
    return max(-1.0, min(1.0, dot(a, b) / math.sqrt(aa * bb)))


def map_similarity(reference: OccupancyGrid, candidate: OccupancyGrid,
                   gate: float = SIMILARITY_GATE) -> tuple[float, bool]:
    if reference.shape != candidate.shape:
        raise ValueError(f"dimension mismatch: {reference.shape} vs {candidate.shape}")
    score = cosine_similarity(extract_features(reference), extract_features(candidate))
    return score, score >= gate
