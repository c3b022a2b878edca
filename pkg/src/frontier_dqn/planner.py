"""Grid path planning, goal dispatch and pose math."""

from __future__ import annotations

import enum
import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from .gridworld import FREE, Cell, CollisionError, Environment, OccupancyGrid

log = logging.getLogger(__name__)

RESEND_DISTANCE = 2.0


class NoPathError(Exception):
    """No 4-connected path over known-free cells joins the two cells."""


@dataclass(frozen=True)
class EulerAngles:
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


def plan(grid: OccupancyGrid, start: Cell, goal: Cell) -> list[Cell]:
    """Shortest 4-connected path over Free cells using Dijkstra with unit edges.

    Unknown and Occupied cells are not traversable.  The heap orders entries by
    (distance, row, col) so ties resolve deterministically.
    """
    start, goal = tuple(start), tuple(goal)
    if not grid.in_bounds(start) or grid[start] != FREE:
        raise ValueError(f"start {start} is not a free cell")
    if not grid.in_bounds(goal) or grid[goal] != FREE:
        raise NoPathError(f"goal {goal} is not a free cell")
    cells = grid.cells
    h, w = grid.shape
    dist = {start: 0}
    parent: dict[Cell, Cell | None] = {start: None}
    heap = [(0, start)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell == goal:
            break
        if d > dist[cell]:
            continue
        r, c = cell
        for nxt in ((r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)):
            nr, nc = nxt
            if 0 <= nr < h and 0 <= nc < w and cells[nr, nc] == FREE:
                nd = d + 1
                if nd < dist.get(nxt, math.inf):
                    dist[nxt] = nd
                    parent[nxt] = cell
                    heapq.heappush(heap, (nd, nxt))
    if goal not in parent:
        raise NoPathError(f"no path from {start} to {goal}")
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def quaternion_from_yaw(yaw: float) -> tuple[float, float, float, float]:
    """Planar rotation about z as an (x, y, z, w) quaternion; x and y stay zero."""
    half = 0.5 * yaw
    return (0.0, 0.0, math.sin(half), math.cos(half))


def quaternion_multiply(a, b) -> tuple[float, float, float, float]:
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return (
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    )


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_rotation(angles: EulerAngles) -> np.ndarray:
    """Rotation matrix Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return _rz(angles.yaw) @ _ry(angles.pitch) @ _rx(angles.roll)


def euclidean(p, q) -> float:
    return math.sqrt(sum((qi - pi) ** 2 for pi, qi in zip(p, q)))


class Outcome(enum.Enum):
    REACHED = "reached"
    RESENT = "resent"
    UNREACHABLE = "unreachable"


@dataclass
class DispatchResult:
    outcome: Outcome
    ticks: int = 0
    attempts: int = 1
    collided: bool = False


def dispatch_goal(env: Environment, goal: Cell, initial_plan_position, max_ticks: int | None = None,
                  ) -> DispatchResult:
    """Send the robot to ``goal`` (a cell) and walk it there.

    If planning fails and the robot is within 2.0 cells of
    ``initial_plan_position`` (an (x, y) pair) the same goal is sent once more
    on the current map.  A second failure, or a failure further away, yields
    UNREACHABLE.  ``max_ticks`` truncates the walk when the tick budget runs
    out; a truncated walk still reports REACHED only if the goal was reached.
    """
    goal = tuple(goal)
    attempts = 0
    ticks = 0
    while True:
        attempts += 1
        try:
            path = plan(env.known, env.pose.cell, goal)
        except NoPathError:
            d = euclidean((env.pose.x, env.pose.y), initial_plan_position)
            if attempts == 1 and d <= RESEND_DISTANCE:
                log.warning("goal %s aborted near previous pose (d=%.3f), resending", goal, d)
                env.sense()
                continue
            return DispatchResult(Outcome.UNREACHABLE, ticks, attempts)
        if max_ticks is not None:
            path = path[:max(0, max_ticks) + 1]
        try:
            _, ticks = env.step_along(path)
        except CollisionError:
            return DispatchResult(Outcome.UNREACHABLE, ticks, attempts, collided=True)
        if env.pose.cell != goal:
            return DispatchResult(Outcome.UNREACHABLE, ticks, attempts)
        return DispatchResult(Outcome.RESENT if attempts > 1 else Outcome.REACHED, ticks, attempts)
