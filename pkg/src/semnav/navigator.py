"""The search agent: turns observations into discrete actions for one target at a time.

Two variants share this code. ``fused`` queries the map with the whole
proximity-filtered target set and validates candidates against the full
instruction; ``primary_only`` queries the primary target alone and calls
FOUND on the first consensus detection it reaches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief_map import FeatureGrid, GridSpec, SimilarityMap, blur_features, integrate_observation, query
from .config import Config
from .detection import (
    Detection,
    OracleValidator,
    PassThroughValidator,
    PhaseKind,
    SearchInputs,
    SearchMachine,
    ValidationContext,
    approach_target,
    consensus_filter,
)
from .errors import NoPathError
from .exploration import (
    ExplorationState,
    NavGoal,
    detect_frontiers,
    find_clusters,
    plan_path,
    reset_searched,
    score_frontiers,
    select_goal,
    update_state,
)
from .fusion import combine
from .geometry import AgentAction, Cell, GridPose, wrap_degrees
from .query_pipeline import Lexicon, QueryDecomposition, decompose, load_lexicon

PIPELINES = ("fused", "primary_only")


@dataclass
class Observation:
    pose: GridPose
    hits: list
    visible_cells: np.ndarray  # (n, 2) (col, row)
    wall_cells: np.ndarray  # (m, 2) (col, row)
    detections: list[Detection] = field(default_factory=list)
    collided: bool = False


class SearchAgent:
    def __init__(
        self,
        spec: GridSpec,
        cfg: Config,
        embedder,
        lexicon: Lexicon | None = None,
        pipeline: str = "fused",
        decomposer=None,
    ):
        if pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
        self.spec = spec
        self.cfg = cfg
        self.embedder = embedder
        self.lexicon = lexicon or load_lexicon()
        self.pipeline = pipeline
        self.decomposer = decomposer or (lambda text: decompose(text, self.lexicon, infer=cfg.infer_locations))
        self.grid = FeatureGrid.empty(spec, embedder.dim)
        self.known_walls = np.zeros(spec.shape, dtype=bool)
        self.state = ExplorationState.empty(spec)
        self._sensed = np.zeros(spec.shape, dtype=bool)
        self.decomposition: QueryDecomposition | None = None
        self.machine: SearchMachine | None = None
        self.s_comb: SimilarityMap | None = None
        self.goal: NavGoal | None = None

    # -- per-target setup -------------------------------------------------

    def start_target(self, text: str, validator=None) -> QueryDecomposition:
        d = self.decomposer(text)
        self.decomposition = d
        self.query_text = text
        self.queries = list(d.proximity_set) if self.pipeline == "fused" else [d.primary]
        self.query_vectors = [np.asarray(self.embedder.embed_text(q)) for q in self.queries]
        if self.pipeline == "primary_only":
            validator = PassThroughValidator()
        self.validator = validator if validator is not None else PassThroughValidator()
        self.machine = SearchMachine(on_success=self._on_success)
        self.state = reset_searched(self.state)
        self._sensed[:] = False
        self.s_comb = None
        self._map_age = 0
        self.goal = None
        self.goal_blacklist: set[Cell] = set()
        self.path: list[Cell] = []
        self._path_idx = 0
        self._since_plan = 0
        self._collisions = 0
        self._strict = False
        self._approach_replans = 0
        self._spin = 0
        self._n_observed = -1
        return d

    def _on_success(self) -> None:
        self.state = reset_searched(self.state)

    @property
    def phase(self) -> PhaseKind | None:
        return self.machine.phase.kind if self.machine else None

    # -- mapping ----------------------------------------------------------

    def _integrate(self, obs: Observation) -> None:
        integrate_observation(self.grid, obs.hits, self.embedder, inplace=True)
        if len(obs.wall_cells):
            self.known_walls[obs.wall_cells[:, 1], obs.wall_cells[:, 0]] = True
        if len(obs.visible_cells):
            self._sensed[obs.visible_cells[:, 1], obs.visible_cells[:, 0]] = True
        occupancy = self.known_walls | (self.grid.confidence <= 0)
        self.state = update_state(self.grid, occupancy, self.cfg.exploration, prev=self.state, sensed=self._sensed)
        self._sensed[:] = False
        self._map_age += 1

    def refresh_map(self, force: bool = False) -> SimilarityMap:
        if self.s_comb is not None and not force and self._map_age < self.cfg.map_refresh_interval:
            return self.s_comb
        blurred = blur_features(self.grid, self.cfg.blur_radius)
        unobserved = self.grid.confidence <= 0
        maps = []
        for q in self.query_vectors:
            m = query(blurred, q)
            m.scores[unobserved] = 0.0
            maps.append(m)
        self.s_comb = combine(maps, self.cfg.fusion)
        self._map_age = 0
        return self.s_comb

    # -- motion -----------------------------------------------------------

    def _cell(self, pose: GridPose) -> Cell:
        return self.spec.world_to_cell(pose.x, pose.y)

    def _dist_to_cell(self, pose: GridPose, cell: Cell) -> float:
        x, y = self.spec.cell_center(cell)
        return math.hypot(x - pose.x, y - pose.y)

    def _line_clear(self, pose: GridPose, cell: Cell) -> bool:
        """Straight-line motion to ``cell`` stays on known navigable cells without clipping a corner."""
        x1, y1 = self.spec.cell_center(cell)
        n = max(2, int(math.hypot(x1 - pose.x, y1 - pose.y) / (self.spec.resolution / 4)) + 1)
        nav = self.state.navigable
        prev = None
        for t in np.linspace(0.0, 1.0, n):
            c, r = self.spec.world_to_cell(pose.x + t * (x1 - pose.x), pose.y + t * (y1 - pose.y))
            if not self.spec.contains((c, r)) or not nav[r, c]:
                return False
            if prev is not None and prev[0] != c and prev[1] != r:
                if not (nav[prev[1], c] and nav[r, prev[0]]):
                    return False
            prev = (c, r)
        return True

    def _set_path(self, path: list[Cell]) -> None:
        self.path = path
        self._path_idx = 0
        self._collisions = 0
        self._strict = False

    def _repath(self, pose: GridPose) -> None:
        """After a collision: replan to the same endpoint and follow it cell by cell."""
        self._strict = True
        if not self.path:
            return
        try:
            path = plan_path(self.state, self._cell(pose), self.path[-1], self.cfg.snap_radius)
        except NoPathError:
            return
        self.path, self._path_idx = path, 0

    def _drive(self, pose: GridPose) -> AgentAction | None:
        """Next motion along ``self.path``; ``None`` once the last waypoint is reached."""
        tol = self.cfg.forward_step / 2 if self._strict else self.cfg.waypoint_tolerance
        n = len(self.path)
        while self._path_idx < n and self._dist_to_cell(pose, self.path[self._path_idx]) <= tol:
            self._path_idx += 1
        if self._path_idx >= n:
            return None
        idx = self._path_idx
        j = idx
        if not self._strict:
            ahead = [k for k in range(min(n - 1, idx + 4), idx - 1, -1) if self._line_clear(pose, self.path[k])]
            if ahead:
                j = self._path_idx = ahead[0]
            else:
                # off the path with no clear shot ahead: head back to a visible earlier waypoint
                behind = [k for k in range(idx - 1, max(-1, idx - 6), -1) if self._line_clear(pose, self.path[k])]
                if behind:
                    j = behind[0]
        x, y = self.spec.cell_center(self.path[j])
        desired = math.degrees(math.atan2(y - pose.y, x - pose.x))
        diff = wrap_degrees(desired - pose.heading)
        if abs(diff) > self.cfg.turn_step_deg / 2 + 1e-9:
            return AgentAction.TURN_LEFT if diff > 0 else AgentAction.TURN_RIGHT
        return AgentAction.FORWARD

    # -- decision making --------------------------------------------------

    def _choose_goal(self, pose: GridPose) -> NavGoal | None:
        s_comb = self.refresh_map()
        frontiers = score_frontiers(detect_frontiers(self.state), s_comb, self.state)
        clusters = find_clusters(s_comb, self.state, self.cfg.exploration)
        start = self._cell(pose)
        while True:
            goal = select_goal(frontiers, clusters, exclude=lambda g: g.cell in self.goal_blacklist)
            if goal is None:
                return None
            try:
                path = plan_path(self.state, start, goal.cell, self.cfg.snap_radius)
            except NoPathError:
                self.goal_blacklist.add(goal.cell)
                continue
            self._set_path(path)
            self._since_plan = 0
            return goal

    def _consensus_detection(self, obs: Observation) -> Detection | None:
        primary = self.decomposition.primary
        dets = [d for d in obs.detections if d.label == primary and not self.machine.is_blacklisted(d)]
        if not dets:
            return None
        passed = consensus_filter(dets, self.refresh_map(), self.state, self.cfg.detection_percentile)
        return passed[0] if passed else None

    def act(self, obs: Observation) -> AgentAction:
        self._integrate(obs)
        self._since_plan += 1
        if obs.collided:
            self._collisions += 1
            self._repath(obs.pose)
        pose = obs.pose
        arrive_radius = self.cfg.success_radius - 0.05
        approach_radius = max(self.cfg.success_radius - self.cfg.waypoint_tolerance, 0.0)
        m = self.machine
        for _ in range(16):
            kind = m.phase.kind
            if kind is PhaseKind.EXPLORING:
                det = self._consensus_detection(obs)
                if det is not None:
                    m.step(SearchInputs(detection=det))
                    try:
                        self._set_path(approach_target(self.state, self._cell(pose), det, approach_radius))
                        self._approach_replans = 0
                    except NoPathError:
                        m.step(SearchInputs(no_path=True))
                    continue
                if self._collisions > self.cfg.max_collisions and self.goal is not None:
                    self.goal_blacklist.add(self.goal.cell)
                    self.goal = None
                if self.goal is None or self._since_plan >= self.cfg.replan_interval:
                    self.goal = self._choose_goal(pose)
                    if self.goal is None:
                        # Nothing to go to: look around in place for one full turn before giving up.
                        n_obs = int(self.state.observed.sum())
                        if n_obs != self._n_observed:
                            self._n_observed, self._spin = n_obs, 0
                        if self._spin < round(360 / self.cfg.turn_step_deg):
                            self._spin += 1
                            return AgentAction.TURN_LEFT
                        m.step(SearchInputs(goals_exhausted=True))
                        return AgentAction.STOP
                action = self._drive(pose)
                if action is None:
                    self.goal_blacklist.add(self.goal.cell)
                    self.goal = None
                    continue
                return action
            if kind is PhaseKind.APPROACHING:
                det = m.phase.detection
                if self._dist_to_cell(pose, det.cell) <= arrive_radius:
                    m.step(SearchInputs(arrived=True))
                    continue
                action = self._drive(pose) if self._collisions <= self.cfg.max_collisions else None
                if action is None:
                    self._approach_replans += 1
                    try:
                        if self._approach_replans > 3:
                            raise NoPathError("approach keeps failing")
                        self._set_path(approach_target(self.state, self._cell(pose), det, approach_radius))
                        action = self._drive(pose)
                    except NoPathError:
                        action = None
                    if action is None:
                        m.step(SearchInputs(no_path=True))
                        self.goal = None
                        continue
                m.step(SearchInputs())
                return action
            if kind is PhaseKind.VALIDATING:
                ctx = ValidationContext(pose, sorted({h.label for h in obs.hits if h.label}))
                verdict = self.validator.validate(ctx, self.query_text, self.decomposition.primary)
                _, action = m.step(SearchInputs(verdict=verdict))
                if action is AgentAction.FOUND:
                    return action
                self.goal = None
                continue
            if kind is PhaseKind.SUCCEEDED:
                return AgentAction.FOUND
            return AgentAction.STOP
        return AgentAction.TURN_LEFT


def make_validator(pipeline: str, world, goal_id: str, cfg: Config, rng: np.random.Generator):
    if pipeline == "primary_only":
        return PassThroughValidator()
    return OracleValidator(world, goal_id, eps_fn=cfg.eps_fn, eps_fp=cfg.eps_fp, radius=cfg.success_radius, rng=rng)
