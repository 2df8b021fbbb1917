"""Grid world: walls, rooms, planted object instances and a label-affinity matrix."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..belief_map import GridSpec
from ..embedding import affinity_matrix, canonical_label, validate_affinity
from ..errors import LoadError
from ..geometry import Cell
from ..query_pipeline import RelationKind

# Distance bounds (metres, cell centre to cell centre) that make a declared relation hold.
RELATION_BOUNDS = {
    RelationKind.ON: 0.75,
    RelationKind.UNDER: 0.75,
    RelationKind.NEXT_TO: 1.0,
    RelationKind.NEAR: 1.5,
    RelationKind.IN: 0.75,  # "in" another object rather than a room
}
FAR_BOUND = RELATION_BOUNDS[RelationKind.NEAR]


@dataclass(frozen=True)
class Room:
    label: str
    rect: tuple[int, int, int, int]  # (col0, row0, col1, row1), half-open

    def contains(self, cell: Cell) -> bool:
        c0, r0, c1, r1 = self.rect
        return c0 <= cell[0] < c1 and r0 <= cell[1] < r1


@dataclass
class ObjectInstance:
    id: str
    label: str
    cell: Cell
    relations: list[tuple[RelationKind, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "cell": list(self.cell),
            "relations": [[k.value, other] for k, other in self.relations],
        }


@dataclass
class WorldModel:
    spec: GridSpec
    occupancy: np.ndarray  # True = wall
    rooms: list[Room] = field(default_factory=list)
    objects: list[ObjectInstance] = field(default_factory=list)
    affinity: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self._room_index = np.full(self.spec.shape, -1, dtype=np.int64)
        for i, room in enumerate(self.rooms):
            c0, r0, c1, r1 = room.rect
            self._room_index[r0:r1, c0:c1] = i
        self._objects_by_id = {o.id: o for o in self.objects}
        self._objects_at: dict[Cell, list[ObjectInstance]] = {}
        for o in self.objects:
            self._objects_at.setdefault(o.cell, []).append(o)

    def is_free(self, cell: Cell) -> bool:
        c, r = cell
        return self.spec.contains(cell) and not self.occupancy[r, c]

    def room_at(self, cell: Cell) -> str | None:
        i = self._room_index[cell[1], cell[0]]
        return self.rooms[i].label if i >= 0 else None

    @property
    def room_index(self) -> np.ndarray:
        return self._room_index

    def object_by_id(self, oid: str) -> ObjectInstance:
        try:
            return self._objects_by_id[oid]
        except KeyError:
            raise LoadError(f"unknown object id {oid!r}") from None

    def objects_at(self, cell: Cell) -> list[ObjectInstance]:
        return self._objects_at.get(cell, [])

    def distance(self, a: Cell, b: Cell) -> float:
        return math.hypot(a[0] - b[0], a[1] - b[1]) * self.spec.resolution

    def relation_holds(self, obj: ObjectInstance, kind: RelationKind, other: str) -> bool:
        room = next((r for r in self.rooms if r.label == other), None)
        if room is not None and other not in self._objects_by_id:
            inside = room.contains(obj.cell)
            if kind is RelationKind.NOT_IN:
                return not inside
            if kind is RelationKind.IN:
                return inside
            if kind is RelationKind.UNRELATED:
                return True
            raise LoadError(f"relation {kind.value} to room {other!r} is not supported")
        target = self.object_by_id(other)
        d = self.distance(obj.cell, target.cell)
        if kind is RelationKind.UNRELATED:
            return True
        if kind in (RelationKind.FAR_FROM, RelationKind.NOT_IN):
            return d > FAR_BOUND
        return d <= RELATION_BOUNDS[kind] + 1e-9

    def validate(self) -> None:
        """Raise ``LoadError`` if the world is inconsistent."""
        if self.occupancy.shape != self.spec.shape:
            raise LoadError("occupancy does not match the grid spec")
        claimed = np.zeros(self.spec.shape, dtype=np.int64)
        for room in self.rooms:
            c0, r0, c1, r1 = room.rect
            if not (0 <= c0 < c1 <= self.spec.width and 0 <= r0 < r1 <= self.spec.height):
                raise LoadError(f"room {room.label!r} rect {room.rect} outside the grid")
            claimed[r0:r1, c0:c1] += 1
        if (claimed > 1).any():
            raise LoadError("room regions overlap")
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise LoadError("object ids must be unique")
        for o in self.objects:
            if not self.is_free(o.cell):
                raise LoadError(f"object {o.id!r} at {o.cell} is not on a free cell")
            for kind, other in o.relations:
                if not self.relation_holds(o, kind, other):
                    raise LoadError(f"object {o.id!r}: declared relation {kind.value} {other!r} does not hold")
        try:
            _, A = affinity_matrix(self.affinity)
            validate_affinity(A)
        except ValueError as exc:
            raise LoadError(f"invalid affinity matrix: {exc}") from exc

    def to_dict(self) -> dict:
        rows, cols = np.nonzero(self.occupancy)
        return {
            "spec": self.spec.to_dict(),
            "walls": [[int(c), int(r)] for r, c in zip(rows, cols)],
            "rooms": [{"label": r.label, "rect": list(r.rect)} for r in self.rooms],
            "objects": [o.to_dict() for o in self.objects],
            "affinity": self.affinity,
        }


def _walls_from_rle(rle: list, spec: GridSpec) -> np.ndarray:
    occ = np.zeros(spec.shape, dtype=bool)
    if len(rle) != spec.height:
        raise LoadError(f"run-length walls need {spec.height} rows, got {len(rle)}")
    for r, runs in enumerate(rle):
        for start, length in runs:
            occ[r, start : start + length] = True
    return occ


def world_from_dict(d: dict) -> WorldModel:
    try:
        spec = GridSpec.from_dict(d["spec"])
        if "walls_rle" in d:
            occ = _walls_from_rle(d["walls_rle"], spec)
        else:
            occ = np.zeros(spec.shape, dtype=bool)
            for c, r in d.get("walls", []):
                if not spec.contains((c, r)):
                    raise LoadError(f"wall cell {(c, r)} outside the grid")
                occ[r, c] = True
        rooms = [Room(canonical_label(r["label"]), tuple(int(v) for v in r["rect"])) for r in d.get("rooms", [])]
        objects = [
            ObjectInstance(
                str(o["id"]),
                canonical_label(o["label"]),
                (int(o["cell"][0]), int(o["cell"][1])),
                [(RelationKind(k), str(other)) for k, other in o.get("relations", [])],
            )
            for o in d.get("objects", [])
        ]
        world = WorldModel(spec, occ, rooms, objects, d.get("affinity", {}) or {})
    except LoadError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"malformed world file: {exc}") from exc
    world.validate()
    return world


def load_world(path: str | Path) -> WorldModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot read world file {path}: {exc}") from exc
    return world_from_dict(data)


def save_world(world: WorldModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world.to_dict(), indent=1, sort_keys=True), encoding="utf-8")
