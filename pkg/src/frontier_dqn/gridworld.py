"""Deterministic 2D occupancy-grid world.

Cells are addressed as ``(row, col)``.  Continuous poses use ``x = col`` and
``y = row`` so that a pose sitting exactly on a cell centre has integer
coordinates.  The robot occupies one cell and senses with a perfect range
sensor made of equally spaced rays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


class CellState(enum.IntEnum):
    UNKNOWN = -1
    FREE = 0
    OCCUPIED = 1


UNKNOWN = CellState.UNKNOWN
FREE = CellState.FREE
OCCUPIED = CellState.OCCUPIED

Cell = tuple[int, int]

_MAP_CHARS = {"#": OCCUPIED, ".": FREE, "S": FREE}
_PGM_LEVELS = {UNKNOWN: 128, FREE: 255, OCCUPIED: 0}


class MapError(ValueError):
    """Raised for malformed map text or PGM content."""


class CollisionError(RuntimeError):
    """Raised when a path runs into a ground-truth obstacle."""

    def __init__(self, cell: Cell):
        super().__init__(f"collision at cell {cell}")
        self.cell = cell


@dataclass
class OccupancyGrid:
    """Row-major grid of :class:`CellState` values stored as ``int8``."""

    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != 2 or self.cells.shape[0] < 1 or self.cells.shape[1] < 1:
            raise ValueError(f"grid must be 2D and non-empty, got shape {self.cells.shape}")

    @classmethod
    def unknown(cls, height: int, width: int) -> "OccupancyGrid":
        return cls(np.full((height, width), UNKNOWN, dtype=np.int8))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def __getitem__(self, cell: Cell) -> CellState:
        return CellState(int(self.cells[cell]))

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)


@dataclass(frozen=True)
class RobotPose:
    x: float
    y: float
    orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        norm = math.sqrt(sum(q * q for q in self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"orientation quaternion must be unit norm, got {norm}")

    @property
    def cell(self) -> Cell:
        return (int(math.floor(self.y + 0.5)), int(math.floor(self.x + 0.5)))


@dataclass(frozen=True)
class SensorConfig:
    range: int = 6
    ray_count: int = 72

    def __post_init__(self):
        if self.range < 1:
            raise ValueError("sensor range must be >= 1")
        if self.ray_count < 8:
            raise ValueError("ray_count must be >= 8")


SAMPLE_STEP = 0.25


def load_map(text: str) -> tuple[OccupancyGrid, RobotPose]:
    """Parse map text into a ground-truth grid and the start pose.

    ``#`` is occupied, ``.`` free and ``S`` the (free) start cell.  Blank
    trailing lines are ignored.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    rows = []
    start = None
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(f"ragged rows: row {r} has {len(line)} chars, expected {width}")
        row = []
        for c, ch in enumerate(line):
            if ch not in _MAP_CHARS:
                raise MapError(f"malformed character {ch!r} at row {r}, col {c}")
            if ch == "S":
                if start is not None:
                    raise MapError("multiple starts")
                start = (r, c)
            row.append(_MAP_CHARS[ch])
        rows.append(row)
    if start is None:
        raise MapError("no start marker")
    grid = OccupancyGrid(np.array(rows, dtype=np.int8))
    if grid[start] != FREE:
        raise MapError("start on occupied cell")
    return grid, RobotPose(float(start[1]), float(start[0]))


def _ray_cells(oy: float, ox: float, dy: float, dx: float, sensor_range: int) -> list[Cell]:
    """Cells crossed by one ray from ``(oy, ox)``, as offsets from the origin cell.

    Samples every 0.25 cells.  When two consecutive samples are diagonal
    neighbours the ray clipped a corner; the orthogonal cell it crossed first
    is inserted (both of them when it passes exactly through the corner), so
    the result is always a 4-connected chain.
    """
    r0 = math.floor(oy + 0.5)
    c0 = math.floor(ox + 0.5)
    cells: list[Cell] = []
    prev = (r0, c0)
    for i in range(1, int(round(sensor_range / SAMPLE_STEP)) + 1):
        t = SAMPLE_STEP * i
        cur = (math.floor(oy + t * dy + 0.5), math.floor(ox + t * dx + 0.5))
        if cur == prev:
            continue
        if cur[0] != prev[0] and cur[1] != prev[1]:
            ty = (min(cur[0], prev[0]) + 0.5 - oy) / dy
            tx = (min(cur[1], prev[1]) + 0.5 - ox) / dx
            if abs(ty - tx) < 1e-9:
                cells += [(cur[0], prev[1]), (prev[0], cur[1])]
            elif ty < tx:
                cells.append((cur[0], prev[1]))
            else:
                cells.append((prev[0], cur[1]))
        cells.append(cur)
        prev = cur
    return [(r - r0, c - c0) for r, c in cells]


@lru_cache(maxsize=64)
def _ray_table(fy: float, fx: float, sensor_range: int, ray_count: int):
    """Padded (rays, L, 2) cell-offset table plus a validity mask for a pose offset (fy, fx)."""
    angles = 2.0 * math.pi * np.arange(ray_count) / ray_count
    rays = [_ray_cells(fy, fx, math.sin(a), math.cos(a), sensor_range) for a in angles]
    longest = max(len(r) for r in rays)
    table = np.zeros((ray_count, longest, 2), dtype=np.int64)
    valid = np.zeros((ray_count, longest), dtype=bool)
    for i, ray in enumerate(rays):
        if ray:
            table[i, :len(ray)] = ray
            valid[i, :len(ray)] = True
    table.setflags(write=False)
    valid.setflags(write=False)
    return table, valid


def sense(truth: OccupancyGrid, known: OccupancyGrid, pose: RobotPose,
          cfg: SensorConfig = SensorConfig()) -> OccupancyGrid:
    """Update ``known`` in place from a perfect range scan at ``pose`` and return it.

    Cells along each ray become Free up to the range limit; the first
    truth-occupied cell becomes Occupied and stops the ray.
    """
    h, w = truth.shape
    r0, c0 = pose.cell
    known.cells[r0, c0] = truth.cells[r0, c0]
    table, valid = _ray_table(pose.y - r0, pose.x - c0, cfg.range, cfg.ray_count)
    rows = table[..., 0] + r0
    cols = table[..., 1] + c0
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    values = np.full(rows.shape, OCCUPIED, dtype=np.int8)
    values[inside] = truth.cells[rows[inside], cols[inside]]
    blocked = (~inside | (values == OCCUPIED)) & valid
    n = rows.shape[1]
    # index of the first blocking cell per ray, n if the ray is clear
    first = np.where(blocked.any(axis=1), blocked.argmax(axis=1), n)
    visible = valid & (np.arange(n)[None, :] < first[:, None])
    known.cells[rows[visible], cols[visible]] = FREE
    hit_rays = np.nonzero(first < n)[0]
    hit_idx = first[hit_rays]
    keep = inside[hit_rays, hit_idx]
    known.cells[rows[hit_rays, hit_idx][keep], cols[hit_rays, hit_idx][keep]] = OCCUPIED
    return known


def reachable_free(truth: OccupancyGrid, start: Cell) -> np.ndarray:
    """Boolean mask of truth-Free cells 4-connected to ``start``."""
    mask = np.zeros(truth.shape, dtype=bool)
    if truth[start] != FREE:
        return mask
    stack = [start]
    mask[start] = True
    while stack:
        r, c = stack.pop()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < truth.height and 0 <= nc < truth.width and not mask[nr, nc] \
                    and truth.cells[nr, nc] == FREE:
                mask[nr, nc] = True
                stack.append((nr, nc))
    return mask


def counted_cells(truth: OccupancyGrid, start: Cell) -> np.ndarray:
    """Cells that count towards coverage: reachable free cells plus the walls 4-adjacent to them.

    Diagonal-only walls are left out; a ray sensor cannot always see them
    (the corners of a one-cell corridor, for instance).
    """
    free = reachable_free(truth, start)
    padded = np.pad(free, 1)
    h, w = free.shape
    near = free.copy()
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        near |= padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    return free | (near & (truth.cells == OCCUPIED))


def coverage(known: OccupancyGrid, truth: OccupancyGrid, start: Cell | None = None,
             counted: np.ndarray | None = None) -> float:
    """Fraction of counted cells that are no longer Unknown in ``known``.

    Counted cells derive from ``start`` (the robot's start cell).  Without a
    start every truth-Free cell is treated as reachable.
    """
    if known.shape != truth.shape:
        raise ValueError(f"dimension mismatch: {known.shape} vs {truth.shape}")
    if counted is None:
        if start is None:
            free = truth.cells == FREE
            counted = np.zeros_like(free)
            # union over every free component
            seen = np.zeros_like(free)
            for cell in zip(*np.nonzero(free)):
                if not seen[cell]:
                    part = counted_cells(truth, cell)
                    seen |= part
                    counted |= part
        else:
            counted = counted_cells(truth, start)
    total = int(counted.sum())
    if total == 0:
        return 1.0
    return int((known.cells[counted] != UNKNOWN).sum()) / total


def yaw_between(a: Cell, b: Cell) -> float:
    return math.atan2(b[0] - a[0], b[1] - a[1])


@dataclass
class Environment:
    """Ground truth, the robot's evolving map and its pose."""

    truth: OccupancyGrid
    pose: RobotPose
    sensor: SensorConfig = field(default_factory=SensorConfig)
    known: OccupancyGrid | None = None
    start: Cell | None = None

    def __post_init__(self):
        cell = self.pose.cell
        if not self.truth.in_bounds(cell) or self.truth[cell] != FREE:
            raise ValueError(f"pose {cell} is not on a free ground-truth cell")
        if self.known is None:
            self.known = OccupancyGrid.unknown(*self.truth.shape)
        if self.start is None:
            self.start = cell
        self._counted = counted_cells(self.truth, self.start)
        sense(self.truth, self.known, self.pose, self.sensor)

    def sense(self) -> OccupancyGrid:
        return sense(self.truth, self.known, self.pose, self.sensor)

    def coverage(self) -> float:
        return coverage(self.known, self.truth, counted=self._counted)

    def step_along(self, path: list[Cell]) -> tuple[RobotPose, int]:
        """Move one cell per tick along ``path``, sensing after every tick.

        Returns the final pose and the number of ticks taken.  Raises
        :class:`CollisionError` if the path enters a truth-occupied cell; the
        robot stays at the last free cell it reached.
        """
        from .planner import quaternion_from_yaw

        if not path:
            raise ValueError("empty path")
        if tuple(path[0]) != self.pose.cell:
            raise ValueError(f"path starts at {path[0]}, robot is at {self.pose.cell}")
        for a, b in zip(path, path[1:]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"cells {a} and {b} are not 4-adjacent")
        for cell in path:
            if not self.known.in_bounds(cell) or self.known[cell] != FREE:
                raise ValueError(f"path cell {cell} is not free in the robot map")
        ticks = 0
        for prev, cell in zip(path, path[1:]):
            if self.truth[cell] == OCCUPIED:
                raise CollisionError(tuple(cell))
            self.pose = RobotPose(float(cell[1]), float(cell[0]),
                                  quaternion_from_yaw(yaw_between(prev, cell)))
            ticks += 1
            self.sense()
        return self.pose, ticks


def write_pgm(grid: OccupancyGrid) -> str:
    """Render a grid as plain PGM (P2): Unknown 128, Free 255, Occupied 0."""
    lut = np.empty(3, dtype=np.int64)
    for state, level in _PGM_LEVELS.items():
        lut[state + 1] = level
    levels = lut[grid.cells.astype(np.int64) + 1]
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    lines += [" ".join(str(v) for v in row) for row in levels]
    return "\n".join(lines) + "\n"


def read_pgm(text: str) -> OccupancyGrid:
    tokens = []
    for line in text.splitlines():
        tokens += line.split("#", 1)[0].split()
    if len(tokens) < 4 or tokens[0] != "P2":
        raise MapError("not a plain PGM (P2) file")
    try:
        width, height, _maxval = (int(t) for t in tokens[1:4])
        values = [int(t) for t in tokens[4:]]
    except ValueError as exc:
        raise MapError(f"bad PGM token: {exc}") from None
    if len(values) != width * height:
        raise MapError(f"PGM has {len(values)} values, expected {width * height}")
    inverse = {level: state for state, level in _PGM_LEVELS.items()}
    try:
        cells = [inverse[v] for v in values]
    except KeyError as exc:
        raise MapError(f"unexpected PGM level {exc.args[0]}") from None
    return OccupancyGrid(np.array(cells, dtype=np.int8).reshape(height, width))


def load_grid_file(path) -> OccupancyGrid:
    """Load either a PGM render or a map text file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("P2"):
        return read_pgm(text)
    return load_map(text)[0]
