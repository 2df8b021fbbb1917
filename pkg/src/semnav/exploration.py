"""Exploration state maps, frontier and cluster goals, and A* planning."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage

from .belief_map import FeatureGrid, GridSpec, SimilarityMap
from .errors import DimensionError, NoPathError
from .geometry import Cell

EIGHT = np.ones((3, 3), dtype=bool)
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ExplorationConfig:
    tau_explored: float = 0.6
    cluster_percentile: float = 95.0
    robot_radius: float = 0.0
    snap_radius: int = 3


@dataclass
class ExplorationState:
    spec: GridSpec
    observed: np.ndarray
    explored: np.ndarray
    searched: np.ndarray
    navigable: np.ndarray

    def __post_init__(self):
        for name in ("observed", "explored", "searched", "navigable"):
            if getattr(self, name).shape != self.spec.shape:
                raise DimensionError(f"{name} mask does not match grid {self.spec.shape}")

    @classmethod
    def empty(cls, spec: GridSpec) -> "ExplorationState":
        z = np.zeros(spec.shape, dtype=bool)
        return cls(spec, z.copy(), z.copy(), z.copy(), z.copy())


def update_state(
    grid: FeatureGrid,
    occupancy: np.ndarray,
    cfg: ExplorationConfig = ExplorationConfig(),
    prev: ExplorationState | None = None,
    sensed: np.ndarray | None = None,
) -> ExplorationState:
    """Derive the four masks from the grid.

    ``occupancy`` marks blocked cells. ``sensed`` marks cells touched by the
    sensor since the previous call within the current query; only those can
    join the searched map. With ``sensed=None`` every explored cell counts.
    """
    spec = grid.spec
    occupancy = np.asarray(occupancy, dtype=bool)
    if occupancy.shape != spec.shape:
        raise DimensionError(f"occupancy shape {occupancy.shape} does not match grid {spec.shape}")
    if prev is not None and prev.spec != spec:
        raise DimensionError("previous state belongs to a different grid")
    observed = grid.confidence > 0
    explored = grid.confidence >= cfg.tau_explored
    fresh = explored if sensed is None else (explored & np.asarray(sensed, dtype=bool))
    searched = fresh if prev is None else (prev.searched | fresh)
    searched &= explored
    return ExplorationState(spec, observed, explored, searched, navigable_mask(occupancy, spec, cfg.robot_radius))


def navigable_mask(occupancy: np.ndarray, spec: GridSpec, robot_radius: float) -> np.ndarray:
    r = int(math.floor(robot_radius / spec.resolution + 1e-9))
    if r <= 0:
        return ~occupancy
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    disk = xx**2 + yy**2 <= r * r
    return ~ndimage.binary_dilation(occupancy, structure=disk)


def reset_searched(state: ExplorationState) -> ExplorationState:
    return replace(state, searched=np.zeros_like(state.searched))


class GoalKind(str, Enum):
    FRONTIER = "FrontierGoal"
    CLUSTER = "ClusterGoal"
    DETECTION = "DetectionGoal"


# Cluster goals win ties: they lie in mapped space and are cheap to verify.
_KIND_RANK = {GoalKind.CLUSTER: 0, GoalKind.FRONTIER: 1, GoalKind.DETECTION: 2}


@dataclass(frozen=True)
class NavGoal:
    kind: GoalKind
    cell: Cell
    score: float


@dataclass
class Frontier:
    cells: list[Cell]
    representative: Cell
    score: float = 0.0

    def as_goal(self) -> NavGoal:
        return NavGoal(GoalKind.FRONTIER, self.representative, self.score)


def _medoid(cells: list[Cell]) -> Cell:
    pts = np.asarray(cells, dtype=np.float64)
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)).sum(axis=1)
    return cells[int(np.argmin(d))]  # cells are row-major sorted, so argmin breaks ties row-major


def frontier_mask(state: ExplorationState) -> np.ndarray:
    unexplored = state.observed & ~state.explored
    near_e = ndimage.binary_dilation(state.explored, structure=EIGHT)
    near_n = ndimage.binary_dilation(state.navigable, structure=EIGHT)
    return unexplored & near_e & near_n


def detect_frontiers(state: ExplorationState) -> list[Frontier]:
    labels, n = ndimage.label(frontier_mask(state), structure=EIGHT)
    frontiers = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)  # row-major order
        cells = [(int(c), int(r)) for r, c in zip(rows, cols)]
        frontiers.append(Frontier(cells, _medoid(cells)))
    frontiers.sort(key=lambda f: (f.representative[1], f.representative[0]))
    return frontiers


def score_frontiers(frontiers: list[Frontier], s_comb: SimilarityMap, state: ExplorationState) -> list[Frontier]:
    """Score every frontier by the max of S_comb over the O minus E cells reachable from it."""
    region = state.observed & ~state.explored
    labels, n = ndimage.label(region, structure=EIGHT)
    comp_max = np.zeros(n + 1)
    if n:
        comp_max[1:] = ndimage.maximum(s_comb.scores, labels, index=np.arange(1, n + 1))
    out = []
    for f in frontiers:
        ids = {int(labels[r, c]) for c, r in f.cells}
        ids.discard(0)
        out.append(replace(f, score=float(max((comp_max[i] for i in ids), default=0.0))))
    return out


def score_frontier(f: Frontier, s_comb: SimilarityMap, state: ExplorationState) -> float:
    return score_frontiers([f], s_comb, state)[0].score


def _goal_cell_ok(state: ExplorationState, cell: Cell) -> bool:
    c, r = cell
    r0, r1 = max(r - 1, 0), min(r + 2, state.spec.height)
    c0, c1 = max(c - 1, 0), min(c + 2, state.spec.width)
    return bool(state.navigable[r0:r1, c0:c1].any())


def find_clusters(
    s_comb: SimilarityMap,
    state: ExplorationState,
    cfg: ExplorationConfig = ExplorationConfig(),
) -> list[NavGoal]:
    """High-S_comb components inside explored-but-unsearched space."""
    candidates = state.explored & ~state.searched
    if not candidates.any():
        return []
    scores = s_comb.scores
    threshold = np.percentile(scores[candidates], cfg.cluster_percentile)
    mask = candidates & (scores >= threshold)
    labels, n = ndimage.label(mask, structure=EIGHT)
    goals = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        vals = scores[rows, cols]
        i = int(np.argmax(vals))  # first max in row-major order
        cell = (int(cols[i]), int(rows[i]))
        if _goal_cell_ok(state, cell):
            goals.append(NavGoal(GoalKind.CLUSTER, cell, float(vals[i])))
    goals.sort(key=lambda g: (g.cell[1], g.cell[0]))
    return goals


def goal_order(g: NavGoal) -> tuple:
    return (-g.score, _KIND_RANK[g.kind], g.cell[1], g.cell[0])


def select_goal(
    frontiers: Iterable[Frontier | NavGoal],
    clusters: Iterable[NavGoal],
    exclude: Callable[[NavGoal], bool] | None = None,
) -> NavGoal | None:
    """Greedy argmax over all candidates; ``None`` means the search is exhausted."""
    cands = [f.as_goal() if isinstance(f, Frontier) else f for f in frontiers]
    cands.extend(clusters)
    if exclude is not None:
        cands = [g for g in cands if not exclude(g)]
    return min(cands, key=goal_order) if cands else None


_STEPS = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]


def neighbors(nav: np.ndarray, cell: Cell):
    """8-connected moves; a diagonal move needs both adjacent orthogonal cells free."""
    h, w = nav.shape
    c, r = cell
    for dc, dr, cost in _STEPS:
        nc, nr = c + dc, r + dr
        if not (0 <= nc < w and 0 <= nr < h) or not nav[nr, nc]:
            continue
        if dc and dr and not (nav[r, nc] and nav[nr, c]):
            continue
        yield (nc, nr), cost


def _astar(nav: np.ndarray, start: Cell, is_goal: Callable[[Cell], bool], h: Callable[[Cell], float]) -> list[Cell]:
    g = {start: 0.0}
    parent: dict[Cell, Cell] = {}
    tie = 0
    heap = [(h(start), tie, start)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if is_goal(cur):
            path = [cur]
            while cur in parent:
                cur = parent[cur]
                path.append(cur)
            return path[::-1]
        closed.add(cur)
        gc = g[cur]
        for nb, cost in neighbors(nav, cur):
            ng = gc + cost
            if ng < g.get(nb, math.inf) - 1e-12:
                g[nb] = ng
                parent[nb] = cur
                tie += 1
                heapq.heappush(heap, (ng + h(nb), tie, nb))
    raise NoPathError(f"no path from {start}")


def path_cost(path: list[Cell]) -> float:
    return sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(path, path[1:]))


def snap_to_navigable(state: ExplorationState, cell: Cell, radius: int) -> Cell | None:
    c, r = cell
    if state.spec.contains(cell) and state.navigable[r, c]:
        return cell
    best = None
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            nc, nr = c + dc, r + dr
            d2 = dc * dc + dr * dr
            if d2 > radius * radius or not state.spec.contains((nc, nr)) or not state.navigable[nr, nc]:
                continue
            key = (d2, nr, nc)
            if best is None or key < best[0]:
                best = (key, (nc, nr))
    return best[1] if best else None


def plan_path(
    state: ExplorationState,
    start: Cell,
    goal: Cell,
    snap_radius: int = ExplorationConfig.snap_radius,
) -> list[Cell]:
    """Shortest 8-connected path on the navigable map (steps cost 1 or sqrt 2)."""
    nav = state.navigable
    if not state.spec.contains(start) or not nav[start[1], start[0]]:
        raise NoPathError(f"start {start} is not navigable")
    target = snap_to_navigable(state, goal, snap_radius)
    if target is None:
        raise NoPathError(f"no navigable cell within {snap_radius} cells of goal {goal}")
    tc, tr = target
    return _astar(nav, start, lambda c: c == target, lambda c: math.hypot(c[0] - tc, c[1] - tr))


def plan_path_to_region(state: ExplorationState, start: Cell, center: Cell, radius_cells: float) -> list[Cell]:
    """Shortest path to the nearest navigable cell within ``radius_cells`` of ``center``."""
    nav = state.navigable
    if not state.spec.contains(start) or not nav[start[1], start[0]]:
        raise NoPathError(f"start {start} is not navigable")
    cc, cr = center
    r2 = radius_cells * radius_cells + 1e-9

    def is_goal(c: Cell) -> bool:
        return (c[0] - cc) ** 2 + (c[1] - cr) ** 2 <= r2

    def h(c: Cell) -> float:
        return max(0.0, math.hypot(c[0] - cc, c[1] - cr) - radius_cells)

    return _astar(nav, start, is_goal, h)
