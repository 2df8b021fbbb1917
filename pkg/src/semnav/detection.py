"""Detection consensus filtering, approach planning, validation and the per-target search machine."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np

from .belief_map import SimilarityMap
from .errors import InvariantViolation, NoPathError, TransportError
from .exploration import ExplorationState, plan_path_to_region
from .geometry import AgentAction, Cell, GridPose
from .remote import EndpointConfig, LVLMClient, load_prompt, parse_json_object

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Detection:
    label: str
    cell: Cell
    confidence: float
    source_pose: GridPose | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"detection confidence {self.confidence} outside [0, 1]")

    @property
    def key(self) -> tuple[str, Cell]:
        return (self.label, self.cell)


@dataclass(frozen=True)
class ValidationVerdict:
    primary_present: bool
    constraint_satisfied: bool
    rationale: str = ""

    def __post_init__(self):
        if self.constraint_satisfied and not self.primary_present:
            raise ValueError("a satisfied constraint implies the primary target is present")


def consensus_filter(
    dets: Sequence[Detection],
    s_comb: SimilarityMap,
    state: ExplorationState,
    percentile: float = 95.0,
) -> list[Detection]:
    """Keep detections whose cell lies in the top percentile of S_comb over observed cells."""
    observed = state.observed
    if not dets or not observed.any():
        return []
    threshold = float(np.percentile(s_comb.scores[observed], percentile))
    scored = [(s_comb.at(d.cell), d) for d in dets if s_comb.spec.contains(d.cell)]
    kept = [(s, d) for s, d in scored if s >= threshold]
    kept.sort(key=lambda t: -t[0])
    return [d for _, d in kept]


def approach_target(state: ExplorationState, start: Cell, det: Detection, radius_m: float = 0.5) -> list[Cell]:
    """Path to the nearest navigable cell within ``radius_m`` of the detection.

    Raises ``NoPathError`` when no such cell is reachable.
    """
    radius_cells = radius_m / state.spec.resolution
    return plan_path_to_region(state, start, det.cell, radius_cells)


@dataclass
class ValidationContext:
    pose: GridPose
    candidates: list[str] = field(default_factory=list)
    image: str | None = None


class Validator(Protocol):
    def validate(self, ctx: ValidationContext, L: str, primary: str) -> ValidationVerdict: ...


class PassThroughValidator:
    """Confirms everything; models a pipeline without constraint validation."""

    def validate(self, ctx: ValidationContext, L: str, primary: str) -> ValidationVerdict:
        return ValidationVerdict(True, True, "validation disabled")


class OracleValidator:
    """Ground-truth validator for the simulator with optional verdict flips.

    ``eps_fn`` turns a positive verdict into (False, False); ``eps_fp`` turns a
    negative one into (True, True).
    """

    def __init__(self, world, goal_id: str, *, eps_fn: float = 0.0, eps_fp: float = 0.0,
                 radius: float = 0.5, rng: np.random.Generator | None = None):
        self.world = world
        self.goal = world.object_by_id(goal_id)
        self.eps_fn = eps_fn
        self.eps_fp = eps_fp
        self.radius = radius
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def truth(self, pose: GridPose, primary: str) -> ValidationVerdict:
        spec = self.world.spec
        near = []
        for obj in self.world.objects:
            if obj.label != primary:
                continue
            x, y = spec.cell_center(obj.cell)
            if math.hypot(x - pose.x, y - pose.y) <= self.radius + 1e-9:
                near.append(obj)
        present = bool(near)
        satisfied = any(o.id == self.goal.id for o in near)
        why = "goal instance in view" if satisfied else ("decoy instance" if present else "no instance nearby")
        return ValidationVerdict(present, satisfied, why)

    def validate(self, ctx: ValidationContext, L: str, primary: str) -> ValidationVerdict:
        v = self.truth(ctx.pose, primary)
        # Draw both coins every call so the noise stream does not depend on the verdict.
        u_fn, u_fp = self.rng.random(2)
        if v.constraint_satisfied and u_fn < self.eps_fn:
            return ValidationVerdict(False, False, "flipped negative")
        if not v.constraint_satisfied and u_fp < self.eps_fp:
            return ValidationVerdict(True, True, "flipped positive")
        return v


class RemoteValidator:
    """Asks the chat endpoint for a strict JSON verdict; failures count as unconfirmed."""

    def __init__(self, endpoint: EndpointConfig | LVLMClient):
        self.client = endpoint if isinstance(endpoint, LVLMClient) else LVLMClient(endpoint)
        self.template = load_prompt("validate_v1")

    @staticmethod
    def request_body(ctx: ValidationContext, L: str, primary: str) -> dict:
        return {"query": L, "primary": primary, "candidates": list(ctx.candidates), "image": ctx.image}

    def validate(self, ctx: ValidationContext, L: str, primary: str) -> ValidationVerdict:
        body = self.request_body(ctx, L, primary)
        prompt = self.template.substitute(
            query=L.replace('"', "'"),
            primary=primary,
            candidates=json.dumps(body["candidates"]),
        )
        if ctx.image:
            prompt += "\n[image attached as base64]\n" + ctx.image
        try:
            obj = parse_json_object(self.client.complete_json(prompt))
            present, satisfied = obj["primary_present"], obj["constraint_satisfied"]
            if not isinstance(present, bool) or not isinstance(satisfied, bool):
                raise ValueError("verdict fields must be booleans")
            return ValidationVerdict(present, satisfied and present, str(obj.get("rationale", "")))
        except TransportError as exc:
            log.warning("remote validation unavailable: %s", exc)
            return ValidationVerdict(False, False, f"transport error: {exc}")
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("remote validation reply rejected: %s", exc)
            return ValidationVerdict(False, False, f"schema error: {exc}")


class PhaseKind(str, Enum):
    EXPLORING = "Exploring"
    APPROACHING = "Approaching"
    VALIDATING = "Validating"
    SUCCEEDED = "Succeeded"
    TERMINATED_NOT_FOUND = "TerminatedNotFound"


TERMINAL = frozenset({PhaseKind.SUCCEEDED, PhaseKind.TERMINATED_NOT_FOUND})
LEGAL = {
    PhaseKind.EXPLORING: {PhaseKind.EXPLORING, PhaseKind.APPROACHING, PhaseKind.TERMINATED_NOT_FOUND},
    PhaseKind.APPROACHING: {PhaseKind.APPROACHING, PhaseKind.VALIDATING, PhaseKind.EXPLORING},
    PhaseKind.VALIDATING: {PhaseKind.SUCCEEDED, PhaseKind.EXPLORING},
    PhaseKind.SUCCEEDED: set(),
    PhaseKind.TERMINATED_NOT_FOUND: set(),
}


@dataclass(frozen=True)
class SearchPhase:
    kind: PhaseKind
    detection: Detection | None = None

    def __post_init__(self):
        needs = self.kind in (PhaseKind.APPROACHING, PhaseKind.VALIDATING)
        if needs != (self.detection is not None):
            raise InvariantViolation(f"phase {self.kind.value} {'requires' if needs else 'forbids'} a detection")


EXPLORING = SearchPhase(PhaseKind.EXPLORING)


@dataclass(frozen=True)
class SearchInputs:
    detection: Detection | None = None
    goals_exhausted: bool = False
    arrived: bool = False
    no_path: bool = False
    verdict: ValidationVerdict | None = None


FOUND = AgentAction.FOUND


class SearchMachine:
    """Per-target search state machine.

    ``on_success`` runs when the machine enters Succeeded (used to reset the
    searched map). Blacklisted detections are never approached again.
    """

    def __init__(self, on_success: Callable[[], None] | None = None):
        self.phase = EXPLORING
        self.blacklist: set[tuple[str, Cell]] = set()
        self.on_success = on_success

    def is_blacklisted(self, det: Detection) -> bool:
        return det.key in self.blacklist

    def _go(self, nxt: SearchPhase) -> SearchPhase:
        if nxt.kind not in LEGAL[self.phase.kind]:
            raise InvariantViolation(f"illegal transition {self.phase.kind.value} -> {nxt.kind.value}")
        self.phase = nxt
        return nxt

    def step(self, inputs: SearchInputs) -> tuple[SearchPhase, AgentAction | None]:
        phase = self.phase
        if phase.kind in TERMINAL:
            raise InvariantViolation(f"search already finished ({phase.kind.value})")
        if phase.kind is PhaseKind.EXPLORING:
            det = inputs.detection
            if det is not None and not self.is_blacklisted(det):
                return self._go(SearchPhase(PhaseKind.APPROACHING, det)), None
            if inputs.goals_exhausted:
                return self._go(SearchPhase(PhaseKind.TERMINATED_NOT_FOUND)), None
            return self._go(EXPLORING), None
        if phase.kind is PhaseKind.APPROACHING:
            if inputs.no_path:
                self.blacklist.add(phase.detection.key)
                return self._go(EXPLORING), None
            if inputs.arrived:
                return self._go(SearchPhase(PhaseKind.VALIDATING, phase.detection)), None
            return self._go(phase), None
        # Validating
        if inputs.verdict is None:
            raise InvariantViolation("validating requires a verdict")
        if inputs.verdict.constraint_satisfied:
            self._go(SearchPhase(PhaseKind.SUCCEEDED))
            if self.on_success is not None:
                self.on_success()
            return self.phase, FOUND
        self.blacklist.add(phase.detection.key)
        return self._go(EXPLORING), None


def step_search(machine: SearchMachine, inputs: SearchInputs) -> tuple[SearchPhase, AgentAction | None]:
    return machine.step(inputs)


__all__ = [
    "Detection", "ValidationVerdict", "ValidationContext", "consensus_filter", "approach_target",
    "PassThroughValidator", "OracleValidator", "RemoteValidator", "PhaseKind", "SearchPhase",
    "SearchInputs", "SearchMachine", "step_search", "FOUND", "NoPathError",
]
