"""Frontier detection, clustering, information gain and the 10-slot centroid record."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridworld import FREE, UNKNOWN, Cell, OccupancyGrid

N_SLOTS = 10


@dataclass(frozen=True)
class FrontierCluster:
    """8-connected group of frontier cells.

    ``centroid`` is a member cell ``(row, col)``: the member nearest the mean
    position, ties going to the lowest row and then the lowest column.
    """

    cells: frozenset
    centroid: Cell


@dataclass
class CentroidRecord:
    """Ten candidate goals with aligned gains.

    ``centroids`` holds normalised ``(x, y)`` pairs in ``[0, 1]``; ``cells``
    keeps the matching grid cells (``None`` for padded slots).  Padded slots
    are the zero centroid ``(0.0, 0.0)`` with gain ``0.0``.
    """

    centroids: np.ndarray = field(default_factory=lambda: np.zeros((N_SLOTS, 2)))
    gains: np.ndarray = field(default_factory=lambda: np.zeros(N_SLOTS))
    cells: list = field(default_factory=lambda: [None] * N_SLOTS)
    truncated: int = 0

    def padded_mask(self) -> np.ndarray:
        """True where the slot holds the zero centroid."""
        return np.all(self.centroids == 0.0, axis=1)

    @property
    def n_valid(self) -> int:
        return int((~self.padded_mask()).sum())


def detect_frontiers(grid: OccupancyGrid) -> set[Cell]:
    """Free cells with at least one Unknown 8-neighbour."""
    unknown = np.pad(grid.cells == UNKNOWN, 1)
    h, w = grid.shape
    near_unknown = np.zeros((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                near_unknown |= unknown[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    rows, cols = np.nonzero((grid.cells == FREE) & near_unknown)
    return set(zip(rows.tolist(), cols.tolist()))


def _snap(members: list[Cell]) -> Cell:
    arr = np.array(members, dtype=float)
    mean = arr.mean(axis=0)
    d2 = ((arr - mean) ** 2).sum(axis=1)
    best = d2.min()
    return min(m for m, d in zip(members, d2) if d == best)


def cluster(frontiers) -> list[FrontierCluster]:
    """Split frontier cells into 8-connected components.

    Components are returned in order of their smallest member cell.
    """
    remaining = set(frontiers)
    clusters = []
    for seed in sorted(remaining):
        if seed not in remaining:
            continue
        remaining.discard(seed)
        members = [seed]
        stack = [seed]
        while stack:
            r, c = stack.pop()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    n = (r + dr, c + dc)
                    if n in remaining:
                        remaining.discard(n)
                        members.append(n)
                        stack.append(n)
        clusters.append(FrontierCluster(frozenset(members), _snap(members)))
    return clusters


def _disc_mask(shape, centre, radius: float) -> np.ndarray:
    rows, cols = np.indices(shape)
    return (rows - centre[0]) ** 2 + (cols - centre[1]) ** 2 <= radius * radius


def information_gain(grid: OccupancyGrid, centroid: Cell, radius: float) -> float:
    """Share of in-bounds cells within ``radius`` of ``centroid`` that are still Unknown."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    disc = _disc_mask(grid.shape, centroid, radius)
    return float((grid.cells[disc] == UNKNOWN).sum() / disc.sum())


def build_record(clusters: list[FrontierCluster], grid: OccupancyGrid, radius: float,
                 exclude=()) -> CentroidRecord:
    """Rank clusters by gain and pack the best ten into a record.

    Clusters whose centroid cell is in ``exclude`` are skipped.
    """
    scored = [(information_gain(grid, cl.centroid, radius), cl.centroid)
              for cl in clusters if cl.centroid not in exclude]
    scored.sort(key=lambda gc: (-gc[0], gc[1][0], gc[1][1]))
    record = CentroidRecord(truncated=max(0, len(scored) - N_SLOTS))
    sx = max(grid.width - 1, 1)
    sy = max(grid.height - 1, 1)
    for i, (gain, (r, c)) in enumerate(scored[:N_SLOTS]):
        record.centroids[i] = (c / sx, r / sy)
        record.gains[i] = gain
        record.cells[i] = (r, c)
    return record


def frontier_record(grid: OccupancyGrid, radius: float, exclude=()) -> CentroidRecord:
    return build_record(cluster(detect_frontiers(grid)), grid, radius, exclude)
