"""Seeded three-room worlds with relation-violating decoys.

Each target is "<primary> <relation> <anchor>". The true goal sits next to its
anchor; every decoy shares the primary label but lies well away from the
anchor, so only a relation-aware search can tell them apart.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..belief_map import GridSpec
from ..geometry import GridPose
from ..query_pipeline import RelationKind, load_lexicon
from .episode import Episode, TargetSpec, save_episode
from .world import FAR_BOUND, ObjectInstance, Room, WorldModel, save_world

WIDTH, HEIGHT, RES = 28, 20, 0.25

ROOMS = [
    Room("kitchen", (1, 1, 13, 10)),
    Room("living room", (14, 1, 27, 10)),
    Room("bedroom", (1, 11, 27, 19)),
]

# (primary, phrase, relation, anchor)
TEMPLATES = [
    ("mug", "on", RelationKind.ON, "table"),
    ("kettle", "next to", RelationKind.NEXT_TO, "fridge"),
    ("remote", "on", RelationKind.ON, "sofa"),
    ("pillow", "on", RelationKind.ON, "bed"),
    ("book", "on", RelationKind.ON, "shelf"),
    ("plant", "near", RelationKind.NEAR, "window"),
    ("laptop", "on", RelationKind.ON, "desk"),
    ("lamp", "next to", RelationKind.NEXT_TO, "couch"),
    ("vase", "on", RelationKind.ON, "counter"),
    ("alarm clock", "next to", RelationKind.NEXT_TO, "wardrobe"),
    ("cushion", "on", RelationKind.ON, "armchair"),
    ("shoe", "under", RelationKind.UNDER, "dresser"),
]

ROOM_AFFINITY = 0.3


def _walls() -> np.ndarray:
    occ = np.zeros((HEIGHT, WIDTH), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    occ[:11, 13] = True
    occ[4:6, 13] = False  # kitchen <-> living room door
    occ[10, :] = True
    occ[10, 6:8] = False  # kitchen <-> bedroom door
    occ[10, 20:22] = False  # living room <-> bedroom door
    return occ


def _room_for(label: str, anchor: str, rng: np.random.Generator) -> Room:
    containers = load_lexicon().containers
    names = [r.label for r in ROOMS]
    for lab in (anchor, label):
        options = [r for r in containers.get(lab, []) if r in names]
        if options:
            return ROOMS[names.index(options[0])]
    return ROOMS[int(rng.integers(len(ROOMS)))]


def _room_cells(room: Room, margin: int = 1) -> list[tuple[int, int]]:
    c0, r0, c1, r1 = room.rect
    return [(c, r) for r in range(r0 + margin, r1 - margin) for c in range(c0 + margin, c1 - margin)]


def _far_enough(cell, taken, min_cells: float) -> bool:
    return all(math.hypot(cell[0] - t[0], cell[1] - t[1]) >= min_cells for t in taken)


def make_decoy_world(seed: int, n_decoys: int = 2) -> tuple[WorldModel, list[TargetSpec], GridPose]:
    """Build a world with three targets (each with ``n_decoys`` decoys) and a start pose."""
    rng = np.random.default_rng(seed)
    spec = GridSpec(RES, WIDTH, HEIGHT)
    occ = _walls()
    order = rng.permutation(len(TEMPLATES))
    chosen, used = [], set()
    for i in order:
        p, _, _, a = TEMPLATES[i]
        if p in used or a in used:
            continue
        chosen.append(TEMPLATES[i])
        used.update((p, a))
        if len(chosen) == 3:
            break

    objects: list[ObjectInstance] = []
    taken: list[tuple[int, int]] = []
    targets: list[TargetSpec] = []
    far_cells = FAR_BOUND / RES
    all_free = [c for room in ROOMS for c in _room_cells(room)]
    for k, (primary, phrase, kind, anchor) in enumerate(chosen):
        room = _room_for(primary, anchor, rng)
        cells = [c for c in _room_cells(room, margin=2) if _far_enough(c, taken, 3.0)]
        a_cell = cells[int(rng.integers(len(cells)))]
        offsets = [(dc, dr) for dc in (-1, 0, 1) for dr in (-1, 0, 1) if (dc, dr) != (0, 0)]
        dc, dr = offsets[int(rng.integers(len(offsets)))]
        g_cell = (a_cell[0] + dc, a_cell[1] + dr)
        a_id, g_id = f"{anchor.replace(' ', '_')}_{k}", f"{primary.replace(' ', '_')}_{k}"
        objects.append(ObjectInstance(a_id, anchor, a_cell))
        objects.append(ObjectInstance(g_id, primary, g_cell, [(kind, a_id)]))
        taken += [a_cell, g_cell]
        for j in range(n_decoys):
            options = [
                c for c in all_free
                if math.hypot(c[0] - a_cell[0], c[1] - a_cell[1]) > far_cells + 1.0 and _far_enough(c, taken, 3.0)
            ]
            d_cell = options[int(rng.integers(len(options)))]
            objects.append(ObjectInstance(f"{g_id}_decoy{j}", primary, d_cell, [(RelationKind.FAR_FROM, a_id)]))
            taken.append(d_cell)
        prefix = ["", "find ", "go to "][int(rng.integers(3))]
        targets.append(TargetSpec(f"{prefix}the {primary} {phrase} the {anchor}", g_id))

    containers = load_lexicon().containers
    labels = sorted({o.label for o in objects})
    affinity: dict[str, dict[str, float]] = {lab: {} for lab in labels}
    for lab in labels:
        for room_label in containers.get(lab, []):
            if room_label in {r.label for r in ROOMS}:
                affinity[lab][room_label] = ROOM_AFFINITY
    for r in ROOMS:
        affinity.setdefault(r.label, {})
    world = WorldModel(spec, occ, list(ROOMS), objects, affinity)
    world.validate()

    goals = [world.object_by_id(t.goal_id).cell for t in targets]
    starts = [c for c in all_free if _far_enough(c, goals, 8.0) and _far_enough(c, taken, 2.0)]
    s_cell = starts[int(rng.integers(len(starts)))]
    x, y = spec.cell_center(s_cell)
    start = GridPose(x, y, float(15 * int(rng.integers(24))))
    return world, targets, start


def make_decoy_episode(seed: int, mode: str = "multion", n_decoys: int = 2, step_budget: int | None = None) -> Episode:
    world, targets, start = make_decoy_world(seed, n_decoys)
    return Episode(f"decoy_{seed:04d}", world, start, targets, step_budget, mode)


def write_decoy_suite(out_dir: str | Path, n: int, root_seed: int = 0, mode: str = "multion") -> list[Path]:
    """Write ``n`` world/episode file pairs; returns the episode paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        ep = make_decoy_episode(root_seed + i, mode)
        world_name = f"{ep.id}.world.json"
        save_world(ep.world, out / world_name)
        p = out / f"{ep.id}.episode.json"
        save_episode(ep, p, world_ref=world_name)
        paths.append(p)
    return paths
