"""Spatial-semantic feature grid with per-cell observation confidence.

Arrays are stored row-major as ``[row, col]``; public cell coordinates are
``(col, row)`` tuples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import BoundsError, DimensionError, ProviderContractError
from .geometry import Cell

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    resolution: float
    width: int
    height: int
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def contains(self, cell: Cell) -> bool:
        c, r = cell
        return 0 <= c < self.width and 0 <= r < self.height

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        c, r = cell
        return (
            self.origin[0] + (c + 0.5) * self.resolution,
            self.origin[1] + (r + 0.5) * self.resolution,
        )

    def world_to_cell(self, x: float, y: float) -> Cell:
        return (
            int(math.floor((x - self.origin[0]) / self.resolution)),
            int(math.floor((y - self.origin[1]) / self.resolution)),
        )

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "width": self.width,
            "height": self.height,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            float(d["resolution"]),
            int(d["width"]),
            int(d["height"]),
            tuple(d.get("origin", (0.0, 0.0))),
        )


@dataclass(frozen=True)
class SemanticHit:
    """One labelled (or, with an empty label, confidence-only) observation of a cell."""

    label: str
    cell: Cell
    strength: float


@dataclass
class FeatureGrid:
    spec: GridSpec
    features: np.ndarray  # (H, W, f)
    confidence: np.ndarray  # (H, W)

    def __post_init__(self):
        if self.features.ndim != 3 or self.features.shape[:2] != self.spec.shape:
            raise DimensionError(
                f"features shape {self.features.shape} does not match grid {self.spec.shape}"
            )
        if self.confidence.shape != self.spec.shape:
            raise DimensionError(
                f"confidence shape {self.confidence.shape} does not match grid {self.spec.shape}"
            )

    @classmethod
    def empty(cls, spec: GridSpec, dim: int) -> "FeatureGrid":
        return cls(
            spec,
            np.zeros(spec.shape + (dim,), dtype=np.float64),
            np.zeros(spec.shape, dtype=np.float64),
        )

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def observed(self) -> np.ndarray:
        return self.confidence > 0

    def copy(self) -> "FeatureGrid":
        return FeatureGrid(self.spec, self.features.copy(), self.confidence.copy())


@dataclass
class SimilarityMap:
    spec: GridSpec
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.scores.shape != self.spec.shape:
            raise DimensionError(
                f"scores shape {self.scores.shape} does not match grid {self.spec.shape}"
            )

    def at(self, cell: Cell) -> float:
        return float(self.scores[cell[1], cell[0]])


def _checked_embedding(embed, label: str, dim: int) -> np.ndarray:
    e = np.asarray(embed.embed_text(label), dtype=np.float64)
    if e.shape != (dim,):
        raise ProviderContractError(f"embedding for {label!r} has shape {e.shape}, expected ({dim},)")
    n = float(np.linalg.norm(e))
    if abs(n - 1.0) > UNIT_TOL:
        raise ProviderContractError(f"embedding for {label!r} has norm {n}, expected 1")
    return e


def integrate_observation(
    grid: FeatureGrid,
    hits: Sequence[SemanticHit],
    embed,
    *,
    inplace: bool = False,
) -> FeatureGrid:
    """Fold a batch of hits into the grid.

    Per labelled hit: ``f <- normalize(c * f + s * embed(label))`` and
    ``c <- c + s * (1 - c)``. Hits with an empty label only raise confidence.
    Hits are applied in order; repeated cells in one batch are handled as
    successive updates.
    """
    out = grid if inplace else grid.copy()
    if not hits:
        return out
    spec = out.spec
    n = len(hits)
    cols = np.empty(n, dtype=np.int64)
    rows = np.empty(n, dtype=np.int64)
    strengths = np.empty(n, dtype=np.float64)
    label_idx = np.empty(n, dtype=np.int64)
    labels: dict[str, int] = {}
    for i, h in enumerate(hits):
        c, r = h.cell
        if not (0 <= c < spec.width and 0 <= r < spec.height):
            raise BoundsError(f"hit cell {h.cell} outside {spec.width}x{spec.height} grid")
        cols[i], rows[i], strengths[i] = c, r, h.strength
        label_idx[i] = labels.setdefault(h.label, len(labels)) if h.label else -1
    if np.any((strengths < 0) | (strengths > 1)):
        raise ValueError("hit strengths must lie in [0, 1]")

    dim = out.dim
    table = np.zeros((max(len(labels), 1), dim))
    for label, k in labels.items():
        table[k] = _checked_embedding(embed, label, dim)

    flat = rows * spec.width + cols
    # Split into passes with unique cells so each pass vectorizes but order per cell is kept.
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    starts = np.r_[True, sorted_flat[1:] != sorted_flat[:-1]]
    group_start = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
    occurrence = np.empty(n, dtype=np.int64)
    occurrence[order] = np.arange(n) - group_start

    F = out.features
    C = out.confidence
    for k in range(int(occurrence.max()) + 1):
        sel = occurrence == k
        r, c, s, li = rows[sel], cols[sel], strengths[sel], label_idx[sel]
        old_c = C[r, c]
        lab = li >= 0
        if np.any(lab):
            rl, cl = r[lab], c[lab]
            v = old_c[lab, None] * F[rl, cl] + s[lab, None] * table[li[lab]]
            norms = np.linalg.norm(v, axis=1, keepdims=True)
            F[rl, cl] = np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)
        C[r, c] = old_c + s * (1.0 - old_c)
    return out


def gaussian_kernel(radius: int) -> np.ndarray:
    """Normalized (2r+1)^2 Gaussian kernel with sigma = r / 2."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return np.ones((1, 1))
    sigma = radius / 2.0
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def blur_features(grid: FeatureGrid, radius_cells: int) -> FeatureGrid:
    """Confidence-weighted Gaussian blur of features and confidence.

    The kernel is renormalized over in-bounds cells at the grid border.
    """
    if radius_cells < 0:
        raise ValueError("radius must be >= 0")
    if radius_cells == 0:
        return grid.copy()
    k = gaussian_kernel(radius_cells)
    norm = ndimage.correlate(np.ones(grid.spec.shape), k, mode="constant", cval=0.0)
    conf = ndimage.correlate(grid.confidence, k, mode="constant", cval=0.0) / norm
    weighted = grid.features * grid.confidence[..., None]
    num = ndimage.correlate(weighted, k[..., None], mode="constant", cval=0.0)
    norms = np.linalg.norm(num, axis=2, keepdims=True)
    feats = np.divide(num, norms, out=np.zeros_like(num), where=norms > 1e-12)
    return FeatureGrid(grid.spec, feats, np.clip(conf, 0.0, 1.0))


def query(grid: FeatureGrid, q: np.ndarray) -> SimilarityMap:
    """Per-cell similarity ``(cos(feature, q) + 1) / 2``; unobserved cells score 0."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (grid.dim,):
        raise ProviderContractError(f"query dimension {q.shape} does not match grid dimension {grid.dim}")
    qn = float(np.linalg.norm(q))
    if abs(qn - 1.0) > UNIT_TOL:
        raise ProviderContractError(f"query embedding has norm {qn}, expected 1")
    norms = np.linalg.norm(grid.features, axis=2)
    dots = grid.features @ q
    cos = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
    scores = np.clip((cos + 1.0) / 2.0, 0.0, 1.0)
    scores[grid.confidence <= 0] = 0.0
    return SimilarityMap(grid.spec, scores)


def save_grid(grid: FeatureGrid, path: str | Path) -> None:
    np.savez_compressed(
        path,
        features=grid.features,
        confidence=grid.confidence,
        spec=np.array(json.dumps(grid.spec.to_dict())),
    )


def load_grid(path: str | Path) -> FeatureGrid:
    with np.load(path) as data:
        spec = GridSpec.from_dict(json.loads(str(data["spec"])))
        return FeatureGrid(spec, data["features"].astype(np.float64), data["confidence"].astype(np.float64))


def hits_from_cells(cells: Iterable[Cell], label: str, strength: float) -> list[SemanticHit]:
    return [SemanticHit(label, tuple(c), strength) for c in cells]
