"""Deterministic grid-world simulator used for episodes and test oracles."""

from .agent import AgentState, SensorReading, apply_action, detect, scan, sense
from .episode import Episode, TargetSpec, load_episode, run_episode, save_episode
from .world import ObjectInstance, Room, WorldModel, load_world, save_world, world_from_dict

__all__ = [
    "AgentState", "SensorReading", "apply_action", "detect", "scan", "sense",
    "Episode", "TargetSpec", "load_episode", "run_episode", "save_episode",
    "ObjectInstance", "Room", "WorldModel", "load_world", "save_world", "world_from_dict",
]
