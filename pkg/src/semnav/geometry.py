from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

Cell = tuple[int, int]  # (col, row)


class AgentAction(str, Enum):
    FORWARD = "Forward"
    TURN_LEFT = "TurnLeft"
    TURN_RIGHT = "TurnRight"
    FOUND = "Found"
    # Give up on the current target without declaring it found.
    STOP = "Stop"


@dataclass(frozen=True)
class GridPose:
    """Agent pose in world metres. ``heading`` is in degrees, counter-clockwise from +x."""

    x: float
    y: float
    heading: float = 0.0

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "GridPose":
        return cls(float(d["x"]), float(d["y"]), float(d.get("heading", 0.0)))


def wrap_degrees(angle: float) -> float:
    """Wrap to (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def euclid(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
