"""Acceptance criteria, one test each.

Every test records a pass/fail line in ``ACCEPTANCE_RESULTS``; the lines are
printed in the terminal summary at the end of the run.
"""

import time

import numpy as np
import pytest
from scipy.stats import chisquare

from frontier_dqn import agent, cli, evaluation, neural
from frontier_dqn.agent import ReplayBuffer, TrainConfig, Transition
from frontier_dqn.evaluation import explore, greedy_policy, map_similarity, trained_policy
from frontier_dqn.frontier import cluster, detect_frontiers, information_gain
from frontier_dqn.gridworld import FREE, OCCUPIED, UNKNOWN, OccupancyGrid
from frontier_dqn.neural import NetworkParams, forward, softmax, state_value
from frontier_dqn.planner import NoPathError, euclidean, plan, quaternion_from_yaw

from conftest import ACCEPTANCE_RESULTS
from oracles import (bfs_distance, flatten, frontiers_bruteforce, gain_bruteforce, numeric_gradient,
                     q_values_batched, relative_error)

BUDGET = 2000
EVAL_SEEDS = [1, 2, 3, 4, 5]


def report(name, ok, detail):
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_gradient_correctness():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        p = NetworkParams.init("standard" if i % 2 == 0 else "dueling", rng)
        s = rng.normal(size=36)
        a = int(rng.integers(10))
        y = float(rng.normal())
        _, grads = neural.acted_loss_and_grads(p, s[None, :], [a], [y])
        analytic = np.concatenate([grads[n].ravel() for n in p.names()])
        worst = max(worst, relative_error(analytic, numeric_gradient(p, s, a, y)))
    elapsed = time.perf_counter() - t0
    report("1 gradient correctness", worst < 1e-4 and elapsed < 10,
           f"max relative error {worst:.2e} (< 1e-4), {elapsed:.2f} s (< 10 s)")


def test_dueling_identity():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        p = NetworkParams.init("dueling", rng)
        p.arrays["bv2"][:] = rng.normal()
        p.arrays["ba2"][:] = rng.normal(size=10)
        s = rng.normal(size=(10, 36))
        worst = max(worst, float(np.abs(forward(p, s).mean(axis=1) - state_value(p, s)).max()))
    report("2 dueling identity", worst < 1e-9, f"max |mean Q - V| over 1000 forwards {worst:.2e}")


def test_target_cross_check():
    rng = np.random.default_rng(103)
    cfg = TrainConfig(target_alpha=1.0)
    worst, checked = 0.0, 0
    for i in range(50):
        topology = "standard" if i % 2 == 0 else "dueling"
        net = NetworkParams.init(topology, rng)
        states = rng.uniform(0, 1, size=(20, 36))
        nxt = rng.uniform(0, 1, size=(20, 36))
        actions = rng.integers(0, 10, size=20)
        rewards = rng.normal(size=20)
        dones = np.zeros(20, dtype=int)
        q_next = agent.masked_q(forward(net, nxt), agent.padded_slots(nxt), cfg.penalty)
        top2 = np.sort(q_next, axis=1)[:, -2:]
        unique = top2[:, 1] > top2[:, 0]
        args = (states, actions, rewards, nxt, dones, cfg)
        plain = agent.batch_targets(net, net, agent.VARIANTS[f"{'dueling_' * (i % 2)}dqn"], *args)
        double = agent.batch_targets(net, net, agent.VARIANTS[f"{'dueling_' * (i % 2)}ddqn"], *args)
        if unique.any():
            worst = max(worst, float(np.abs(plain - double)[unique].max()))
            checked += int(unique.sum())
    report("3 target cross-check", worst <= 1e-12 and checked > 0,
           f"max |dqn - ddqn| {worst:.1e} over {checked} unique-argmax transitions")


def test_epsilon_schedule():
    bad = 0
    for eps0, eps_min, decay in [(1.0, 0.1, 0.995), (1.0, 0.01, 0.9), (0.5, 0.05, 0.999)]:
        eps = eps0
        for k in range(1001):
            # the closed form multiplies step by step, so equality is exact
            closed = eps0
            for _ in range(k):
                closed = max(eps_min, closed * decay) if closed > eps_min else closed
            bad += eps != max(eps_min, closed)
            eps = agent.decay_epsilon(eps, eps_min, decay)
    # independent check with the power form, exact up to floating rounding of the power itself
    powered = [max(0.1, 0.995 ** k) for k in range(1001)]
    eps, worst = 1.0, 0.0
    for k in range(1001):
        worst = max(worst, abs(eps - powered[k]) / powered[k])
        eps = agent.decay_epsilon(eps, 0.1, 0.995)
    report("4 epsilon schedule", bad == 0 and worst < 1e-12,
           f"{bad} mismatches in 3x1001 steps, max rel. gap to power form {worst:.1e}")


def test_replay_buffer():
    buf = ReplayBuffer(100)
    for i in range(101):
        buf.push(Transition(np.full(36, float(i)), i % 10, float(i), np.zeros(36), 0))
    kept = [t.reward for t in buf.contents()]
    evicted_first = kept == [float(i) for i in range(1, 101)]

    small = ReplayBuffer(10)
    for i in range(10):
        small.push(Transition(np.zeros(36), 0, float(i), np.zeros(36), 0))
    rng = np.random.default_rng(105)
    draws = np.array([small.sample_indices(rng, 1)[0] for _ in range(100_000)])
    p = chisquare(np.bincount(draws, minlength=10)).pvalue
    report("5 replay buffer", evicted_first and p > 0.01,
           f"capacity+1 evicts first: {evicted_first}; chi-square p = {p:.3f} (> 0.01)")


def test_masking():
    rng = np.random.default_rng(106)
    violations, max_q = 0, 0.0
    nets = [NetworkParams.init("standard" if i % 2 else "dueling", rng) for i in range(20)]
    for i in range(10_000):
        n = int(rng.integers(1, 11))
        centroids = np.zeros((10, 2))
        centroids[:n] = rng.uniform(0.01, 1, size=(n, 2))
        gains = np.zeros(10)
        gains[:n] = np.sort(rng.uniform(0, 1, size=n))[::-1]
        rec = agent.record_from_state(np.concatenate([np.zeros(6), centroids.ravel(), gains]))
        state = np.concatenate([rng.uniform(0, 1, 2), [0, 0, 0, 1], centroids.ravel(), gains])
        net = nets[i % 20]
        max_q = max(max_q, float(np.abs(forward(net, state)).max()))
        violations += agent.select_action(net, state, rec, 0.0, rng, 10.0) >= n
    report("6 masking", violations == 0 and max_q < 5,
           f"{violations} padded picks on 10^4 records (max |Q| {max_q:.2f} < 5)")


def test_frontier_oracles():
    rng = np.random.default_rng(107)
    mismatches = {"frontiers": 0, "gain": 0, "plan": 0}
    for _ in range(100):
        cells = rng.choice([UNKNOWN, FREE, OCCUPIED], size=(16, 16), p=[0.35, 0.5, 0.15])
        grid = OccupancyGrid(cells)
        found = detect_frontiers(grid)
        mismatches["frontiers"] += found != frontiers_bruteforce(cells)
        for cl in cluster(found):
            for radius in (1, 3, 6):
                mismatches["gain"] += int(information_gain(grid, cl.centroid, radius)
                                           != gain_bruteforce(cells, cl.centroid, radius))
        free = np.argwhere(cells == FREE)
        for _ in range(3):
            a, b = (tuple(int(v) for v in free[j]) for j in rng.choice(len(free), 2, replace=False))
            expected = bfs_distance(cells, a, b)
            try:
                got = len(plan(grid, a, b)) - 1
            except NoPathError:
                got = None
            mismatches["plan"] += got != expected
    report("7 frontier/cluster oracles", not any(mismatches.values()),
           f"mismatches on 100 maps: {mismatches}")


def test_training_trend(trained, house_dataset):
    n = sum(len(e) for e in house_dataset)
    total = sum(t for _, _, t in trained.values())
    lines, ok = [], n >= 200 and total < 120
    for name, (_, series, _) in trained.items():
        stats = evaluation.mse_series_stats(series)
        good = len(series) == 100 and stats.last < stats.first and 0 <= stats.mean <= 1
        ok &= good
        lines.append(f"{name} {stats.first:.4f}->{stats.last:.4f} mean {stats.mean:.4f}")
    report("8 training trend", ok, f"{n} transitions, {total:.1f} s total; " + "; ".join(lines))


def test_imitation_accuracy(trained, house_states):
    ok, parts = True, []
    # brute-force gain argmax with the oracle forward pass, one state at a time
    for name, (params, _, _) in trained.items():
        hits = 0
        for s in house_states:
            q = q_values_batched(flatten(params)[None, :], params.topology, s)[0]
            centroids = s[6:26].reshape(10, 2)
            q = np.where((centroids == 0).all(axis=1), -10.0, q)
            gains = list(s[26:36])
            hits += int(np.argmax(q)) == gains.index(max(gains))
        acc = hits / len(house_states)
        same = abs(acc - agent.imitation_accuracy(params, house_states)) < 1e-12
        ok &= acc >= 0.90 and same
        parts.append(f"{name} {acc:.3f}")
    report("9 imitation accuracy", ok, ", ".join(parts) + " (>= 0.90)")


@pytest.fixture(scope="module")
def episodes(trained, house):
    truth, start = house
    out = {"baseline": [explore(truth, start, greedy_policy, BUDGET, s) for s in EVAL_SEEDS]}
    for name, (params, _, _) in trained.items():
        out[name] = [explore(truth, start, trained_policy(params), BUDGET, s, variant=name,
                             policy_name="trained") for s in EVAL_SEEDS]
    return out


def test_end_to_end_exploration(episodes):
    counts = {k: sum(r.metrics.completed and r.metrics.ticks <= BUDGET for r in v)
              for k, v in episodes.items()}
    ok = counts["baseline"] == 5 and all(c >= 4 for k, c in counts.items() if k != "baseline")
    report("10 end-to-end exploration", ok, f"completions out of 5: {counts}")


def test_similarity_gate(episodes, house):
    truth = house[0]
    self_score = map_similarity(truth, truth.copy())[0]
    worst = 1.0
    for name, runs in episodes.items():
        if name == "baseline":
            continue
        for base, mine in zip(episodes["baseline"], runs):
            if base.metrics.completed and mine.metrics.completed:
                worst = min(worst, map_similarity(base.known, mine.known)[0])
    unknown = max(map_similarity(r.known, OccupancyGrid.unknown(*truth.shape))[0]
                  for r in episodes["baseline"])
    ok = self_score == 1.0 and worst >= 0.75 and unknown < 0.75
    report("11 similarity gate", ok,
           f"self {self_score:.6f}; trained vs baseline min {worst:.4f} (>= 0.75); "
           f"completed vs unknown max {unknown:.4f} (< 0.75)")


def test_determinism(tmp_path):
    def artifacts(root):
        cli.main(["train", "--algo", "dueling_ddqn", "--epochs", "20", "--seed", "3",
                  "--out", str(root / "model")])
        cli.main(["test", "--model", str(root / "model" / "dueling_ddqn.ckpt"), "--map", "house",
                  "--episodes", "3", "--seed", "11", "--out", str(root / "run")])
        return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    a = artifacts(tmp_path / "a")
    b = artifacts(tmp_path / "b")
    ok = len(a) == 2 + 1 + 3 and a == b
    report("12 determinism", ok, f"{len(a)} artifacts, identical across two runs: {a == b}")


def test_math_utilities(rng):
    worst_sum, worst_shift = 0.0, 0.0
    for _ in range(1000):
        z = rng.normal(scale=10, size=int(rng.integers(1, 20)))
        p = softmax(z)
        worst_sum = max(worst_sum, abs(p.sum() - 1))
        worst_shift = max(worst_shift, float(np.abs(softmax(z + rng.normal(scale=50)) - p).max()))
    checks = {
        "softmax sum": worst_sum <= 1e-12,
        "softmax shift": worst_shift <= 1e-12,
        "quaternion": quaternion_from_yaw(0.0) == (0.0, 0.0, 0.0, 1.0),
        "euclidean": euclidean((0, 0), (3, 4)) == 5.0,
        "pool 299": evaluation.pool_output_size(299, 2, 2) == 149,
    }
    report("13 math utilities", all(checks.values()),
           ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
