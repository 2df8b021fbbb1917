"""Fusion of per-query similarity maps.

``intersect`` takes the per-cell minimum (a continuous intersection score);
``combine`` blends it with the per-cell maximum so that guidance survives
while some queried targets are still unseen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .belief_map import SimilarityMap
from .errors import DimensionError


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def _stack(maps: Sequence[SimilarityMap]) -> np.ndarray:
    if not maps:
        raise ValueError("at least one similarity map is required")
    spec = maps[0].spec
    for m in maps[1:]:
        if m.spec != spec:
            raise DimensionError(f"grid spec mismatch: {m.spec} != {spec}")
    return np.stack([m.scores for m in maps])


def intersect(maps: Sequence[SimilarityMap]) -> SimilarityMap:
    stack = _stack(maps)
    return SimilarityMap(maps[0].spec, stack.min(axis=0))


def combine(maps: Sequence[SimilarityMap], cfg: FusionConfig = FusionConfig()) -> SimilarityMap:
    stack = _stack(maps)
    lo = stack.min(axis=0)
    hi = stack.max(axis=0)
    out = cfg.alpha * lo + (1.0 - cfg.alpha) * hi
    # Keep the sandwich lo <= out <= hi exact under round-off.
    return SimilarityMap(maps[0].spec, np.clip(out, lo, hi))
