"""Discrete-action agent and a FOV-limited ray-cast sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..belief_map import SemanticHit
from ..detection import Detection
from ..geometry import AgentAction, Cell, GridPose
from .world import WorldModel


@dataclass(frozen=True)
class AgentState:
    pose: GridPose
    fov_deg: float = 79.0
    forward_step: float = 0.25
    turn_step: float = 15.0
    sensor_range: float = 3.0
    ray_spacing_deg: float = 1.0
    min_hit_strength: float = 0.05
    collided: bool = False

    @classmethod
    def from_config(cls, pose: GridPose, cfg) -> "AgentState":
        return cls(
            pose,
            fov_deg=cfg.fov_deg,
            forward_step=cfg.forward_step,
            turn_step=cfg.turn_step_deg,
            sensor_range=cfg.sensor_range,
            ray_spacing_deg=cfg.ray_spacing_deg,
            min_hit_strength=cfg.min_hit_strength,
        )


@dataclass
class SensorReading:
    hits: list[SemanticHit]
    depths: np.ndarray  # per ray, metres; inf when nothing was hit within range
    ray_angles: np.ndarray  # degrees
    visible_cells: np.ndarray  # (n, 2) int (col, row), row-major order
    visible_dist: np.ndarray  # (n,) metres
    wall_cells: np.ndarray  # (m, 2) int (col, row)
    object_hits: list[tuple[str, str, Cell, float]]  # (object id, label, cell, strength)


def _free_step(world: WorldModel, a: Cell, b: Cell) -> bool:
    if not world.is_free(b):
        return False
    dc, dr = b[0] - a[0], b[1] - a[1]
    if dc and dr:
        return world.is_free((a[0] + dc, a[1])) and world.is_free((a[0], a[1] + dr))
    return True


def apply_action(world: WorldModel, agent: AgentState, a: AgentAction) -> AgentState:
    """Advance the agent. Found/Stop are handled by the episode runner and leave the pose alone."""
    p = agent.pose
    if a is AgentAction.TURN_LEFT:
        return replace(agent, pose=GridPose(p.x, p.y, (p.heading + agent.turn_step) % 360.0), collided=False)
    if a is AgentAction.TURN_RIGHT:
        return replace(agent, pose=GridPose(p.x, p.y, (p.heading - agent.turn_step) % 360.0), collided=False)
    if a is AgentAction.FORWARD:
        rad = math.radians(p.heading)
        nx = p.x + agent.forward_step * math.cos(rad)
        ny = p.y + agent.forward_step * math.sin(rad)
        spec = world.spec
        a_cell = spec.world_to_cell(p.x, p.y)
        m_cell = spec.world_to_cell((p.x + nx) / 2, (p.y + ny) / 2)
        b_cell = spec.world_to_cell(nx, ny)
        if _free_step(world, a_cell, m_cell) and _free_step(world, m_cell, b_cell):
            return replace(agent, pose=GridPose(nx, ny, p.heading), collided=False)
        return replace(agent, collided=True)
    return replace(agent, collided=False)


def scan(world: WorldModel, agent: AgentState) -> SensorReading:
    """Cast rays across the field of view and report what they see.

    Visible free cells yield hits whose strength decays linearly with range:
    object cells carry the object label, other cells carry their room label
    (or an empty, confidence-only label outside rooms).
    """
    spec = world.spec
    res = spec.resolution
    p = agent.pose
    half = agent.fov_deg / 2.0
    offsets = np.arange(-half, half + 1e-9, agent.ray_spacing_deg)
    angles = p.heading + offsets
    rad = np.radians(angles)
    dists = np.arange(0.0, agent.sensor_range + 1e-9, res / 4.0)
    xs = p.x + np.cos(rad)[:, None] * dists[None, :]
    ys = p.y + np.sin(rad)[:, None] * dists[None, :]
    cols = np.floor((xs - spec.origin[0]) / res).astype(np.int64)
    rows = np.floor((ys - spec.origin[1]) / res).astype(np.int64)
    inside = (cols >= 0) & (cols < spec.width) & (rows >= 0) & (rows < spec.height)
    blocked = ~inside
    blocked[inside] = world.occupancy[rows[inside], cols[inside]]
    any_block = blocked.any(axis=1)
    first = np.where(any_block, blocked.argmax(axis=1), len(dists))
    depths = np.where(any_block, dists[np.minimum(first, len(dists) - 1)], np.inf)

    vis = np.arange(len(dists))[None, :] < first[:, None]
    flat = (rows[vis] * spec.width + cols[vis]).ravel()
    best = np.full(spec.width * spec.height, np.inf)
    np.minimum.at(best, flat, np.broadcast_to(dists[None, :], vis.shape)[vis])
    seen = np.nonzero(np.isfinite(best))[0]
    v_dist = best[seen]
    v_cells = np.stack([seen % spec.width, seen // spec.width], axis=1)

    wr = rows[any_block, first[any_block]]
    wc = cols[any_block, first[any_block]]
    ok = (wc >= 0) & (wc < spec.width) & (wr >= 0) & (wr < spec.height)
    wflat = np.unique(wr[ok] * spec.width + wc[ok])
    wall_cells = np.stack([wflat % spec.width, wflat // spec.width], axis=1)

    strength = np.maximum(agent.min_hit_strength, 1.0 - v_dist / agent.sensor_range)
    room_idx = world.room_index[v_cells[:, 1], v_cells[:, 0]]
    hits: list[SemanticHit] = []
    object_hits = []
    for (c, r), s, ri in zip(v_cells.tolist(), strength.tolist(), room_idx.tolist()):
        objs = world.objects_at((c, r))
        if objs:
            for o in objs:
                hits.append(SemanticHit(o.label, (c, r), s))
                object_hits.append((o.id, o.label, (c, r), s))
        else:
            hits.append(SemanticHit(world.rooms[ri].label if ri >= 0 else "", (c, r), s))
    return SensorReading(hits, depths, angles, v_cells, v_dist, wall_cells, object_hits)


def sense(world: WorldModel, agent: AgentState) -> tuple[list[SemanticHit], np.ndarray]:
    reading = scan(world, agent)
    return reading.hits, reading.depths


def detect(
    reading: SensorReading,
    pose: GridPose,
    rng: np.random.Generator,
    miss_rate: float = 0.0,
    confusion: dict[str, dict[str, float]] | None = None,
) -> list[Detection]:
    """Oracle detector over the visible object instances, with misses and label confusion."""
    out = []
    for _, label, cell, s in reading.object_hits:
        u_miss, u_conf = rng.random(2)
        if u_miss < miss_rate:
            continue
        row = (confusion or {}).get(label)
        if row:
            acc = 0.0
            for other, prob in sorted(row.items()):
                acc += prob
                if u_conf < acc:
                    label = other
                    break
        out.append(Detection(label, cell, float(min(1.0, s)), pose))
    return out
