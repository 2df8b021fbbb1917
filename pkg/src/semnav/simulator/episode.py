"""Episodes: a world, a start pose and three sequential targets, plus the runner."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..config import Config
from ..embedding import SyntheticEmbedder
from ..errors import InvariantViolation, LoadError
from ..geometry import AgentAction, GridPose
from ..metrics import MODES, EpisodeResult, Outcome, TargetOutcome
from ..navigator import Observation, SearchAgent, make_validator
from .agent import AgentState, apply_action, detect, scan
from .world import WorldModel, load_world, world_from_dict

N_TARGETS = 3


@dataclass(frozen=True)
class TargetSpec:
    query: str
    goal_id: str


@dataclass
class Episode:
    id: str
    world: WorldModel
    start: GridPose
    targets: list[TargetSpec]
    step_budget: int | None = None
    mode: str = "multion"
    world_ref: str | None = None

    def __post_init__(self):
        if len(self.targets) != N_TARGETS:
            raise LoadError(f"episode {self.id!r} needs {N_TARGETS} targets, got {len(self.targets)}")
        if self.mode not in MODES:
            raise LoadError(f"unknown episode mode {self.mode!r}")
        for t in self.targets:
            self.world.object_by_id(t.goal_id)
        if not self.world.is_free(self.world.spec.world_to_cell(self.start.x, self.start.y)):
            raise LoadError(f"episode {self.id!r} starts on a wall or outside the grid")

    def to_dict(self, world_ref: str | None = None) -> dict:
        ref = world_ref or self.world_ref
        return {
            "id": self.id,
            "world": ref if ref is not None else self.world.to_dict(),
            "start": self.start.to_dict(),
            "mode": self.mode,
            "targets": [{"query": t.query, "goal_id": t.goal_id} for t in self.targets],
            "step_budget": self.step_budget,
        }


def episode_from_dict(d: dict, base_dir: Path | None = None, default_id: str = "episode") -> Episode:
    try:
        w = d["world"]
        if isinstance(w, str):
            path = Path(w) if base_dir is None or Path(w).is_absolute() else base_dir / w
            world = load_world(path)
        else:
            world = world_from_dict(w)
        return Episode(
            str(d.get("id", default_id)),
            world,
            GridPose.from_dict(d["start"]),
            [TargetSpec(str(t["query"]), str(t["goal_id"])) for t in d["targets"]],
            d.get("step_budget"),
            d.get("mode", "multion"),
            w if isinstance(w, str) else None,
        )
    except LoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"malformed episode: {exc}") from exc


def load_episode(path: str | Path) -> Episode:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot read episode file {path}: {exc}") from exc
    return episode_from_dict(data, path.parent, default_id=path.stem)


def save_episode(ep: Episode, path: str | Path, world_ref: str | None = None) -> None:
    Path(path).write_text(json.dumps(ep.to_dict(world_ref), indent=1, sort_keys=True), encoding="utf-8")


def run_episode(
    ep: Episode,
    cfg: Config | None = None,
    pipeline: str = "fused",
    seed: int = 0,
    *,
    mode: str | None = None,
    lexicon=None,
    embedder=None,
    agent_factory: Callable | None = None,
    on_step: Callable | None = None,
    trajectory: list | None = None,
) -> EpisodeResult:
    """Run the targets of ``ep`` in order. Deterministic in (episode, config, pipeline, seed)."""
    cfg = cfg or Config()
    mode = mode or ep.mode
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    world = ep.world
    budget = ep.step_budget or cfg.step_budget
    det_ss, val_ss = np.random.SeedSequence(seed).spawn(2)
    det_rng, val_rng = np.random.default_rng(det_ss), np.random.default_rng(val_ss)
    embedder = embedder or SyntheticEmbedder(world.affinity, dim=cfg.embedding_dim)
    factory = agent_factory or SearchAgent
    agent = factory(world.spec, cfg, embedder, lexicon, pipeline)
    body = AgentState.from_config(ep.start, cfg)

    result = EpisodeResult(ep.id, mode, seed, pipeline, cfg.fingerprint(), len(ep.targets))
    try:
        body = _run_targets(ep, cfg, pipeline, mode, budget, agent, body, det_rng, val_rng, result, on_step, trajectory)
    except InvariantViolation as exc:
        # The target in progress is left without an outcome; the flag marks the episode.
        result.aborted = str(exc)
    result.validate()
    return result


def _run_targets(ep, cfg, pipeline, mode, budget, agent, body, det_rng, val_rng, result, on_step, trajectory):
    world = ep.world
    for index, target in enumerate(ep.targets):
        goal = world.object_by_id(target.goal_id)
        gx, gy = world.spec.cell_center(goal.cell)
        agent.start_target(target.query, make_validator(pipeline, world, target.goal_id, cfg, val_rng))
        steps, length, outcome = 0, 0.0, None
        while outcome is None:
            if steps >= budget:
                outcome = Outcome.BUDGET_EXHAUSTED
                break
            reading = scan(world, body)
            dets = detect(reading, body.pose, det_rng, cfg.detector_miss_rate, cfg.label_confusion)
            obs = Observation(body.pose, reading.hits, reading.visible_cells, reading.wall_cells, dets, body.collided)
            action = agent.act(obs)
            steps += 1
            if trajectory is not None:
                p = body.pose
                trajectory.append({"target": index, "step": steps, "x": p.x, "y": p.y, "heading": p.heading,
                                   "action": action.value})
            if action is AgentAction.FOUND:
                d = math.hypot(body.pose.x - gx, body.pose.y - gy)
                outcome = Outcome.FOUND if d <= cfg.success_radius + 1e-9 else Outcome.FALSE_POSITIVE
            elif action is AgentAction.STOP:
                outcome = Outcome.TERMINATED_NOT_FOUND
            else:
                moved = apply_action(world, body, action)
                length += math.hypot(moved.pose.x - body.pose.x, moved.pose.y - body.pose.y)
                body = moved
            if on_step is not None:
                on_step(agent, world, body, steps)
        result.outcomes.append(TargetOutcome(target.query, target.goal_id, outcome, steps, length))
        if mode == "multion" and outcome is not Outcome.FOUND:
            break
    return body
