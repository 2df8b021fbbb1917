"""Decompose a free-text search instruction into object-level map queries.

A small rule-based grammar handles ``<verb> <det> <adjs> <noun> (<prep> <det> <noun>)*``
instructions, lexicon-driven location inference and "demand" phrasing.
The remote variant asks a chat endpoint for the same structure and falls
back to the rules when the reply is unusable.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import TransportError
from .remote import EndpointConfig, LVLMClient, load_prompt, parse_json_object

log = logging.getLogger(__name__)


class RelationKind(str, Enum):
    IN = "In"
    ON = "On"
    NEAR = "Near"
    NEXT_TO = "NextTo"
    UNDER = "Under"
    NOT_IN = "NotIn"
    FAR_FROM = "FarFrom"
    UNRELATED = "Unrelated"

    @property
    def is_proximity(self) -> bool:
        return self in PROXIMITY_KINDS


PROXIMITY_KINDS = frozenset(
    {RelationKind.IN, RelationKind.ON, RelationKind.NEAR, RelationKind.NEXT_TO, RelationKind.UNDER}
)


@dataclass(frozen=True)
class SpatialRelation:
    kind: RelationKind
    subject: str
    object: str

    @property
    def is_proximity(self) -> bool:
        return self.kind.is_proximity

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "subject": self.subject, "object": self.object}

    @classmethod
    def from_dict(cls, d: dict) -> "SpatialRelation":
        return cls(RelationKind(d["kind"]), str(d["subject"]), str(d["object"]))


@dataclass
class QueryDecomposition:
    raw: str
    primary: str
    explicit_targets: list[str] = field(default_factory=list)
    inferred_targets: list[str] = field(default_factory=list)
    implicit_targets: list[str] = field(default_factory=list)
    relations: list[SpatialRelation] = field(default_factory=list)
    proximity_set: list[str] = field(default_factory=list)
    # "rule", "demand", "partial", "degraded", "remote" or "fallback"
    parse_quality: str = "rule"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["relations"] = [r.to_dict() for r in self.relations]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QueryDecomposition":
        return cls(
            raw=d["raw"],
            primary=d["primary"],
            explicit_targets=list(d.get("explicit_targets", [])),
            inferred_targets=list(d.get("inferred_targets", [])),
            implicit_targets=list(d.get("implicit_targets", [])),
            relations=[SpatialRelation.from_dict(r) for r in d.get("relations", [])],
            proximity_set=list(d.get("proximity_set", [])),
            parse_quality=d.get("parse_quality", "rule"),
        )


@dataclass
class Lexicon:
    rooms: frozenset[str]
    containers: dict[str, list[str]]
    demands: dict[str, list[str]]
    prepositions: dict[str, RelationKind]
    max_inferred: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "Lexicon":
        return cls(
            rooms=frozenset(_norm(r) for r in d.get("rooms", [])),
            containers={_norm(k): [_norm(x) for x in v] for k, v in d.get("containers", {}).items()},
            demands={_norm(k): [_norm(x) for x in v] for k, v in d.get("demands", {}).items()},
            prepositions={_norm(k): RelationKind(v) for k, v in d.get("prepositions", {}).items()},
            max_inferred=int(d.get("max_inferred", 1)),
        )


@lru_cache(maxsize=1)
def _bundled_lexicon() -> Lexicon:
    text = resources.files("semnav").joinpath("data").joinpath("lexicon.json").read_text(encoding="utf-8")
    return Lexicon.from_dict(json.loads(text))


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    """Load a lexicon JSON file; ``None`` loads the bundled default."""
    if path is None:
        return _bundled_lexicon()
    return Lexicon.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


COMMAND_PREFIXES = [
    ("please",), ("can", "you"), ("could", "you"),
    ("go", "to"), ("navigate", "to"), ("take", "me", "to"), ("bring", "me"), ("find", "me"),
    ("get", "me"), ("look", "for"), ("search", "for"), ("where", "is"), ("show", "me"),
    ("find",), ("get",), ("locate",), ("fetch",), ("grab",), ("bring",),
]
DETERMINERS = frozenset({"the", "a", "an", "some", "my", "this", "that", "any", "your", "our"})
COPULAS = frozenset({"is", "are", "am", "was", "were", "be", "i'm", "im", "it's", "its"})
RELATIVIZERS = frozenset({"that", "which", "who"})
PRONOUNS = frozenset({"it", "them", "this", "that", "there", "here"})


def _norm(text: str) -> str:
    return " ".join(text.lower().split())


def _tokens(text: str) -> list[str]:
    return re.sub(r"[^a-z0-9'/\- ]+", " ", text.lower()).split()


def _strip_determiners(words: list[str]) -> list[str]:
    i = 0
    while i < len(words) and words[i] in DETERMINERS:
        i += 1
    return words[i:]


def _contains_phrase(tokens: list[str], phrase: str) -> bool:
    p = phrase.split()
    return any(tokens[i : i + len(p)] == p for i in range(len(tokens) - len(p) + 1))


def _strip_command(tokens: list[str]) -> list[str]:
    changed = True
    while changed and tokens:
        changed = False
        for prefix in COMMAND_PREFIXES:
            if tuple(tokens[: len(prefix)]) == prefix:
                tokens = tokens[len(prefix) :]
                changed = True
                break
    return tokens


def _container_locations(primary: str, lexicon: Lexicon) -> list[str]:
    words = primary.split()
    for i in range(len(words)):
        key = " ".join(words[i:])
        if key in lexicon.containers:
            return lexicon.containers[key]
    return []


def _demand_targets(tokens: list[str], lexicon: Lexicon) -> list[str]:
    found: list[tuple[int, list[str]]] = []
    for keyword, objects in lexicon.demands.items():
        if _contains_phrase(tokens, keyword) and not any(_contains_phrase(tokens, o) for o in objects):
            found.append((_first_index(tokens, keyword), objects))
    found.sort(key=lambda t: t[0])
    out: list[str] = []
    for _, objects in found:
        for o in objects:
            if o not in out:
                out.append(o)
    return out


def _first_index(tokens: list[str], phrase: str) -> int:
    p = phrase.split()
    for i in range(len(tokens) - len(p) + 1):
        if tokens[i : i + len(p)] == p:
            return i
    return len(tokens)


def _split_prepositions(tokens: list[str], lexicon: Lexicon) -> list[tuple[RelationKind | None, list[str]]]:
    phrases = sorted(lexicon.prepositions, key=lambda p: -len(p.split()))
    segments: list[tuple[RelationKind | None, list[str]]] = [(None, [])]
    i = 0
    while i < len(tokens):
        match = None
        for p in phrases:
            words = p.split()
            if tokens[i : i + len(words)] == words:
                match = (p, len(words))
                break
        if match is not None:
            # "the mug that is on the table" -> drop the relative clause glue
            cur = segments[-1][1]
            while cur and (cur[-1] in COPULAS or cur[-1] in RELATIVIZERS):
                cur.pop()
            segments.append((lexicon.prepositions[match[0]], []))
            i += match[1]
        else:
            segments[-1][1].append(tokens[i])
            i += 1
    return segments


def decompose(L: str, lexicon: Lexicon | None = None, *, infer: bool = True) -> QueryDecomposition:
    """Rule-based decomposition of one instruction, already proximity-filtered."""
    if not L or not L.strip():
        raise ValueError("instruction must be nonempty")
    lexicon = lexicon or load_lexicon()
    tokens = _strip_command(_tokens(L))

    implicit = _demand_targets(tokens, lexicon)
    if implicit:
        primary = implicit[0]
        relations = [SpatialRelation(RelationKind.UNRELATED, t, primary) for t in implicit[1:]]
        d = QueryDecomposition(
            raw=L, primary=primary, implicit_targets=implicit, relations=relations, parse_quality="demand"
        )
        if infer:
            _infer(d, lexicon)
        return filter_proximity(d)

    segments = _split_prepositions(tokens, lexicon)
    head = _strip_determiners(segments[0][1])
    if not head or any(w in COPULAS for w in head):
        return filter_proximity(QueryDecomposition(raw=L, primary=L.strip(), parse_quality="degraded"))

    primary = " ".join(head)
    explicit = [primary]
    relations: list[SpatialRelation] = []
    quality = "rule"
    chain_negated = False
    for kind, words in segments[1:]:
        np_words = _strip_determiners(words)
        if not np_words or (len(np_words) == 1 and np_words[0] in PRONOUNS) or any(w in COPULAS for w in np_words):
            quality = "partial"
            continue
        noun = " ".join(np_words)
        if kind.is_proximity and chain_negated:
            kind = RelationKind.UNRELATED
        if not kind.is_proximity:
            chain_negated = True
        if noun == primary:
            continue
        if noun not in explicit:
            explicit.append(noun)
        relations.append(SpatialRelation(kind, noun, primary))

    d = QueryDecomposition(raw=L, primary=primary, explicit_targets=explicit, relations=relations, parse_quality=quality)
    if infer:
        _infer(d, lexicon)
    return filter_proximity(d)


def _infer(d: QueryDecomposition, lexicon: Lexicon) -> None:
    mentioned = set(d.explicit_targets) | set(d.implicit_targets) | {d.primary}
    if d.primary in lexicon.rooms or any(t in lexicon.rooms for t in mentioned):
        return
    for loc in _container_locations(d.primary, lexicon)[: lexicon.max_inferred]:
        if loc not in mentioned and loc not in d.inferred_targets:
            d.inferred_targets.append(loc)
            d.relations.append(SpatialRelation(RelationKind.IN, loc, d.primary))


def filter_proximity(d: QueryDecomposition) -> QueryDecomposition:
    """Keep the primary plus every target whose relations to it are all proximity relations."""
    kinds: dict[str, list[RelationKind]] = {}
    for r in d.relations:
        if r.object == d.primary:
            kinds.setdefault(r.subject, []).append(r.kind)

    def keep(t: str) -> bool:
        ks = kinds.get(t)
        return bool(ks) and all(k.is_proximity for k in ks)

    q = [d.primary]
    for group in (d.explicit_targets, d.inferred_targets, d.implicit_targets):
        for t in sorted(set(group)):
            if t != d.primary and t not in q and keep(t):
                q.append(t)
    return replace(d, proximity_set=q)


def check_decomposition(d: QueryDecomposition) -> None:
    """Raise ``ValueError`` if ``d`` breaks a structural invariant."""
    if not isinstance(d.primary, str) or not d.primary.strip():
        raise ValueError("primary target missing")
    if not d.proximity_set or d.proximity_set[0] != d.primary:
        raise ValueError("primary target must lead the proximity set")
    universe = {d.primary, *d.explicit_targets, *d.inferred_targets, *d.implicit_targets}
    for t in d.proximity_set:
        if t not in universe:
            raise ValueError(f"proximity target {t!r} was never extracted")
    for r in d.relations:
        if r.object != d.primary:
            raise ValueError(f"relation {r} is not relative to the primary target")
    for t in d.proximity_set[1:]:
        ks = [r.kind for r in d.relations if r.subject == t]
        if not ks or not all(k.is_proximity for k in ks):
            raise ValueError(f"{t!r} lacks a pure proximity relation to the primary target")


def _str_list(obj: dict, key: str) -> list[str]:
    value = obj.get(key, [])
    if not isinstance(value, list) or not all(isinstance(x, str) and x.strip() for x in value):
        raise ValueError(f"{key} must be a list of nonempty strings")
    return [_norm(x) for x in value]


def parse_remote_decomposition(L: str, content: str) -> QueryDecomposition:
    obj = parse_json_object(content)
    primary = obj.get("primary")
    if not isinstance(primary, str) or not primary.strip():
        raise ValueError("response has no primary target")
    primary = _norm(primary)
    rels = obj.get("relations", [])
    if not isinstance(rels, list):
        raise ValueError("relations must be a list")
    relations = []
    for r in rels:
        if not isinstance(r, dict):
            raise ValueError("relation entries must be objects")
        rel = SpatialRelation(RelationKind(r["kind"]), _norm(str(r["subject"])), _norm(str(r["object"])))
        relations.append(rel)
    d = QueryDecomposition(
        raw=L,
        primary=primary,
        explicit_targets=_str_list(obj, "explicit_targets"),
        inferred_targets=_str_list(obj, "inferred_targets"),
        implicit_targets=_str_list(obj, "implicit_targets"),
        relations=relations,
        parse_quality="remote",
    )
    d = filter_proximity(d)
    check_decomposition(d)
    return d


def decompose_remote(
    L: str,
    endpoint: EndpointConfig | LVLMClient,
    lexicon: Lexicon | None = None,
) -> QueryDecomposition:
    """Decompose via the chat endpoint; any transport or schema problem falls back to ``decompose``."""
    client = endpoint if isinstance(endpoint, LVLMClient) else LVLMClient(endpoint)
    prompt = load_prompt("decompose_v1").substitute(query=L.replace('"', "'"))
    try:
        return parse_remote_decomposition(L, client.complete_json(prompt))
    except TransportError as exc:
        log.warning("remote decomposition unavailable, using rules: %s", exc)
    except (ValueError, KeyError, TypeError) as exc:
        log.warning("remote decomposition rejected (%s), using rules", exc)
    return replace(decompose(L, lexicon), parse_quality="fallback")
