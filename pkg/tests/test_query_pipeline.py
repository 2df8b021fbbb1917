import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corpus import CORPUS
from semnav.query_pipeline import (
    PROXIMITY_KINDS,
    QueryDecomposition,
    RelationKind,
    SpatialRelation,
    check_decomposition,
    decompose,
    decompose_remote,
    filter_proximity,
    load_lexicon,
)
from semnav.remote import EndpointConfig, LVLMClient


@pytest.mark.parametrize("text,primary,q,excluded", CORPUS, ids=[c[0] for c in CORPUS])
def test_corpus(text, primary, q, excluded):
    d = decompose(text)
    assert d.primary == primary
    assert d.proximity_set == q
    assert not set(excluded) & set(d.proximity_set)
    check_decomposition(d)


def test_corpus_size():
    assert len(CORPUS) == 40


def test_rug_in_bathroom_structure():
    d = decompose("the blue rug in the bathroom")
    assert d.primary == "blue rug"
    assert set(d.explicit_targets) == {"blue rug", "bathroom"}
    assert SpatialRelation(RelationKind.IN, "bathroom", "blue rug") in d.relations


def test_demand_yields_implicit_target():
    d = decompose("The room is on fire!")
    assert "fire extinguisher" in d.implicit_targets
    assert d.parse_quality == "demand"


def test_towel_infers_bathroom():
    assert "bathroom" in decompose("a towel").inferred_targets


def test_inference_can_be_disabled():
    d = decompose("a towel", infer=False)
    assert d.inferred_targets == [] and d.proximity_set == ["towel"]


def test_negation_discards_location():
    d = decompose("the rug not in the bathroom")
    assert d.proximity_set == ["rug"]
    assert SpatialRelation(RelationKind.NOT_IN, "bathroom", "rug") in d.relations


def test_unparseable_text_degrades():
    d = decompose("The room is hot")
    assert d.primary == "The room is hot"
    assert d.relations == [] and d.proximity_set == [d.primary]
    assert d.parse_quality == "degraded"


def test_empty_text_rejected():
    with pytest.raises(ValueError):
        decompose("   ")


def test_dangling_preposition_marks_partial():
    d = decompose("find the mug on it")
    assert d.primary == "mug"
    assert d.parse_quality == "partial"


def test_filter_hand_table():
    d = QueryDecomposition(
        raw="",
        primary="remote",
        explicit_targets=["remote", "table", "sofa"],
        relations=[
            SpatialRelation(RelationKind.ON, "table", "remote"),
            SpatialRelation(RelationKind.FAR_FROM, "sofa", "remote"),
        ],
    )
    assert filter_proximity(d).proximity_set == ["remote", "table"]


def test_filter_singleton():
    assert filter_proximity(QueryDecomposition(raw="x", primary="x")).proximity_set == ["x"]


def test_filter_ordering_by_group_then_alphabet():
    d = QueryDecomposition(
        raw="",
        primary="p",
        explicit_targets=["p", "zeta", "alpha"],
        inferred_targets=["room b", "room a"],
        implicit_targets=["kit"],
        relations=[SpatialRelation(RelationKind.NEAR, t, "p") for t in ["zeta", "alpha", "room b", "room a", "kit"]],
    )
    assert filter_proximity(d).proximity_set == ["p", "alpha", "zeta", "room a", "room b", "kit"]


def test_proximity_classification_is_total():
    assert PROXIMITY_KINDS == {
        RelationKind.IN, RelationKind.ON, RelationKind.NEAR, RelationKind.NEXT_TO, RelationKind.UNDER
    }
    for k in RelationKind:
        assert k.is_proximity == (k in PROXIMITY_KINDS)


def test_decompose_is_deterministic():
    for text, *_ in CORPUS:
        assert decompose(text) == decompose(text)


def test_round_trip_dict():
    for text, *_ in CORPUS:
        d = decompose(text)
        assert QueryDecomposition.from_dict(json.loads(json.dumps(d.to_dict()))) == d


def test_custom_lexicon_file(tmp_path):
    path = tmp_path / "lex.json"
    path.write_text(json.dumps({
        "rooms": ["lab"],
        "containers": {"robot": ["lab"]},
        "demands": {"broken": ["toolbox"]},
        "prepositions": {"atop": "On", "apart from": "FarFrom"},
    }))
    lex = load_lexicon(path)
    assert decompose("find the robot", lex).proximity_set == ["robot", "lab"]
    assert decompose("the cup atop the box", lex).proximity_set == ["cup", "box"]
    assert decompose("the cup apart from the box", lex).proximity_set == ["cup"]
    assert decompose("it is broken", lex).primary == "toolbox"


# -- fuzzed relation tables ------------------------------------------------------

names = st.sampled_from(["table", "sofa", "kitchen", "bed", "lamp", "shelf", "garage"])
relation_tables = st.lists(st.tuples(names, st.sampled_from(list(RelationKind))), max_size=10)


def _decomp(table) -> QueryDecomposition:
    targets = sorted({t for t, _ in table})
    return QueryDecomposition(
        raw="fuzz",
        primary="remote",
        explicit_targets=["remote"] + targets[: len(targets) // 2],
        inferred_targets=targets[len(targets) // 2 :],
        relations=[SpatialRelation(k, t, "remote") for t, k in table],
    )


@given(table=relation_tables)
def test_filter_properties(table):
    d = _decomp(table)
    once = filter_proximity(d)
    assert filter_proximity(once) == once
    assert once.proximity_set[0] == "remote"
    for t in once.proximity_set[1:]:
        kinds = [k for s, k in table if s == t]
        assert kinds and all(k.is_proximity for k in kinds)
    for t, k in table:
        if not k.is_proximity:
            assert t not in once.proximity_set
    check_decomposition(once)


@given(text=st.text(alphabet=st.characters(codec="ascii", categories=["L", "Zs", "P"]), min_size=1, max_size=60))
def test_decompose_never_breaks_invariants(text):
    if not text.strip():
        return
    d = decompose(text)
    assert d.primary in d.proximity_set
    check_decomposition(d)
    assert filter_proximity(d) == d
    assert decompose(text) == d


words = st.sampled_from(["mug", "blue rug", "sofa", "kitchen", "window", "bed", "towel", "shelf"])
preps = st.sampled_from(["in", "on", "near", "next to", "under", "beside", "not in", "outside", "far from", "away from"])


@given(head=words, tail=st.lists(st.tuples(preps, words), max_size=3))
def test_generated_instructions_filter_negated_targets(head, tail):
    text = "find the " + head + "".join(f" {p} the {w}" for p, w in tail)
    d = decompose(text)
    assert d.primary == head
    check_decomposition(d)
    for r in d.relations:
        if not r.kind.is_proximity:
            assert r.subject not in d.proximity_set


# -- remote decomposition -------------------------------------------------------


def _client(handler):
    cfg = EndpointConfig("http://lvlm.test/v1/chat", model="m", api_key="k", backoff=0, max_attempts=2)
    return LVLMClient(cfg, httpx.Client(transport=httpx.MockTransport(handler)))


def _reply(content: str):
    def handler(request):
        return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})

    return handler


def test_remote_valid_reply_passes_through():
    content = json.dumps({
        "primary": "blue rug",
        "explicit_targets": ["blue rug", "bathroom"],
        "inferred_targets": [],
        "implicit_targets": [],
        "relations": [{"kind": "In", "subject": "bathroom", "object": "blue rug"}],
    })
    d = decompose_remote("the blue rug in the bathroom", _client(_reply(content)))
    assert d.parse_quality == "remote"
    assert d.primary == "blue rug"
    assert d.explicit_targets == ["blue rug", "bathroom"]
    assert d.relations == [SpatialRelation(RelationKind.IN, "bathroom", "blue rug")]
    assert d.proximity_set == ["blue rug", "bathroom"]


def test_remote_request_shape():
    seen = []

    def handler(request):
        seen.append((dict(request.headers), json.loads(request.content)))
        return httpx.Response(200, json={"choices": [{"message": {"content": '{"primary": "towel"}'}}]})

    decompose_remote("a towel", _client(handler))
    headers, body = seen[0]
    assert headers["authorization"] == "Bearer k"
    assert body["model"] == "m"
    assert body["messages"][0]["role"] == "user" and "a towel" in body["messages"][0]["content"]
    assert body["response_format"] == {"type": "json_object"}


@pytest.mark.parametrize(
    "content",
    [
        "not json at all",
        "[1, 2]",
        json.dumps({"explicit_targets": ["bathroom"], "relations": []}),
        json.dumps({"primary": "rug", "relations": [{"kind": "Sideways", "subject": "a", "object": "rug"}]}),
        json.dumps({"primary": "rug", "relations": [{"kind": "In", "subject": "a", "object": "bathroom"}]}),
    ],
    ids=["malformed", "not-object", "no-primary", "bad-kind", "relation-not-to-primary"],
)
def test_remote_bad_reply_falls_back(content):
    d = decompose_remote("the blue rug in the bathroom", _client(_reply(content)))
    assert d.parse_quality == "fallback"
    assert d.primary == "blue rug"
    assert d.proximity_set == ["blue rug", "bathroom"]


def test_remote_transport_error_falls_back():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused")

    d = decompose_remote("a towel", _client(handler))
    assert d.parse_quality == "fallback"
    assert len(calls) == 2


def test_endpoint_config_from_env(monkeypatch):
    monkeypatch.setenv("LVLM_ENDPOINT", "http://x")
    monkeypatch.setenv("LVLM_MODEL", "mm")
    monkeypatch.delenv("LVLM_API_KEY", raising=False)
    cfg = EndpointConfig.from_env()
    assert (cfg.endpoint, cfg.model, cfg.api_key) == ("http://x", "mm", None)
    monkeypatch.delenv("LVLM_ENDPOINT")
    with pytest.raises(ValueError):
        EndpointConfig.from_env()
