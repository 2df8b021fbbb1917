"""Run configuration: one flat document, loadable from JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .exploration import ExplorationConfig
from .fusion import FusionConfig


@dataclass(frozen=True)
class Config:
    # fusion
    alpha: float = 0.8
    # belief map
    embedding_dim: int = 64
    blur_radius: int = 2
    # exploration
    tau_explored: float = 0.6
    cluster_percentile: float = 95.0
    detection_percentile: float = 95.0
    robot_radius: float = 0.0
    snap_radius: int = 3
    # sensor and agent
    sensor_range: float = 3.0
    fov_deg: float = 79.0
    ray_spacing_deg: float = 1.0
    forward_step: float = 0.25
    turn_step_deg: float = 15.0
    min_hit_strength: float = 0.05
    # protocol
    success_radius: float = 0.5
    step_budget: int = 2500
    # noise
    eps_fn: float = 0.0
    eps_fp: float = 0.0
    detector_miss_rate: float = 0.0
    label_confusion: dict = field(default_factory=dict)
    # agent behaviour
    replan_interval: int = 10
    map_refresh_interval: int = 4
    waypoint_tolerance: float = 0.2
    infer_locations: bool = True
    max_collisions: int = 3
    # endpoints (remote providers only)
    lvlm_endpoint: str | None = None
    lvlm_model: str | None = None
    embed_endpoint: str | None = None

    def __post_init__(self):
        FusionConfig(self.alpha)
        if not 0 < self.tau_explored <= 1:
            raise ValueError("tau_explored must lie in (0, 1]")
        for name in ("cluster_percentile", "detection_percentile"):
            if not 0 <= getattr(self, name) <= 100:
                raise ValueError(f"{name} must lie in [0, 100]")
        for name in ("eps_fn", "eps_fp", "detector_miss_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.step_budget < 1:
            raise ValueError("step_budget must be positive")

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(self.alpha)

    @property
    def exploration(self) -> ExplorationConfig:
        return ExplorationConfig(self.tau_explored, self.cluster_percentile, self.robot_radius, self.snap_radius)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **changes) -> "Config":
        return replace(self, **changes)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    return Config.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
