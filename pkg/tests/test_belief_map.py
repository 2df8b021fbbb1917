import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import FixedEmbedder, basis
from semnav.belief_map import (
    FeatureGrid,
    GridSpec,
    SemanticHit,
    blur_features,
    gaussian_kernel,
    integrate_observation,
    load_grid,
    query,
    save_grid,
)
from semnav.embedding import SyntheticEmbedder
from semnav.errors import BoundsError, DimensionError, ProviderContractError

DIM = 8


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_grid(rng, h, w, dim=DIM, p_observed=0.7) -> FeatureGrid:
    spec = GridSpec(0.25, w, h)
    feats = rng.standard_normal((h, w, dim))
    feats /= np.linalg.norm(feats, axis=2, keepdims=True)
    conf = rng.uniform(0.05, 1.0, (h, w)) * (rng.random((h, w)) < p_observed)
    feats[conf == 0] = 0.0
    return FeatureGrid(spec, feats, conf)


# -- GridSpec ---------------------------------------------------------------


def test_gridspec_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        GridSpec(0.0, 4, 4)
    with pytest.raises(ValueError):
        GridSpec(0.25, 0, 4)


def test_gridspec_cell_round_trip():
    spec = GridSpec(0.25, 10, 6, (1.0, -2.0))
    for c in range(10):
        for r in range(6):
            assert spec.world_to_cell(*spec.cell_center((c, r))) == (c, r)
    assert GridSpec.from_dict(spec.to_dict()) == spec


def test_feature_grid_shape_mismatch():
    spec = GridSpec(0.25, 4, 3)
    with pytest.raises(DimensionError):
        FeatureGrid(spec, np.zeros((4, 3, DIM)), np.zeros((3, 4)))


# -- integrate_observation ---------------------------------------------------


@pytest.fixture
def emb():
    return FixedEmbedder({"plant": basis(DIM, 0), "chair": basis(DIM, 1), "lamp": unit(np.arange(1, DIM + 1))})


def test_first_write_sets_feature_and_confidence(emb):
    g = integrate_observation(FeatureGrid.empty(GridSpec(0.25, 5, 5), DIM), [SemanticHit("plant", (2, 3), 1.0)], emb)
    np.testing.assert_array_equal(g.features[3, 2], emb.embed_text("plant"))
    assert g.confidence[3, 2] == 1.0
    assert g.confidence.sum() == 1.0


def test_same_hit_twice_is_stable(emb):
    hit = SemanticHit("plant", (1, 1), 1.0)
    g1 = integrate_observation(FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM), [hit], emb)
    g2 = integrate_observation(g1, [hit], emb)
    np.testing.assert_allclose(g2.features, g1.features, atol=1e-15)
    assert g2.confidence[1, 1] == 1.0


def test_two_labels_equal_strength_give_normalized_mean(emb):
    g = FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM)
    g = integrate_observation(g, [SemanticHit("plant", (0, 0), 1.0), SemanticHit("lamp", (0, 0), 1.0)], emb)
    a, b = emb.embed_text("plant"), emb.embed_text("lamp")
    oracle = (a + b) / 2
    oracle /= math.sqrt(sum(x * x for x in oracle))
    np.testing.assert_allclose(g.features[0, 0], oracle, atol=1e-12)


def test_weighted_update_matches_vector_oracle(emb):
    g = FeatureGrid.empty(GridSpec(0.25, 2, 2), DIM)
    g = integrate_observation(g, [SemanticHit("plant", (1, 0), 0.4)], emb)
    g = integrate_observation(g, [SemanticHit("chair", (1, 0), 0.7)], emb)
    # c1 = 0.4, f1 = plant; f2 = normalize(0.4 * plant + 0.7 * chair); c2 = 0.4 + 0.7 * 0.6
    expected = unit(0.4 * emb.embed_text("plant") + 0.7 * emb.embed_text("chair"))
    np.testing.assert_allclose(g.features[0, 1], expected, atol=1e-12)
    assert g.confidence[0, 1] == pytest.approx(0.82)


def test_empty_label_only_raises_confidence(emb):
    g = integrate_observation(FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM), [SemanticHit("plant", (1, 1), 0.5)], emb)
    before = g.features.copy()
    g = integrate_observation(g, [SemanticHit("", (1, 1), 0.5), SemanticHit("", (0, 0), 0.3)], emb)
    np.testing.assert_array_equal(g.features, before)
    assert g.confidence[1, 1] == pytest.approx(0.75)
    assert g.confidence[0, 0] == pytest.approx(0.3)


def test_integrate_does_not_mutate_input(emb):
    g = FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM)
    integrate_observation(g, [SemanticHit("plant", (1, 1), 1.0)], emb)
    assert g.confidence.sum() == 0


def test_out_of_bounds_hit_raises(emb):
    g = FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM)
    with pytest.raises(BoundsError):
        integrate_observation(g, [SemanticHit("plant", (3, 0), 1.0)], emb)
    with pytest.raises(BoundsError):
        integrate_observation(g, [SemanticHit("plant", (0, -1), 1.0)], emb)


def test_non_unit_embedding_raises():
    bad = FixedEmbedder({"x": np.full(DIM, 0.5)})
    with pytest.raises(ProviderContractError):
        integrate_observation(FeatureGrid.empty(GridSpec(0.25, 2, 2), DIM), [SemanticHit("x", (0, 0), 1.0)], bad)


def test_wrong_dimension_embedding_raises():
    bad = FixedEmbedder({"x": basis(DIM + 1, 0)})
    with pytest.raises(ProviderContractError):
        integrate_observation(FeatureGrid.empty(GridSpec(0.25, 2, 2), DIM), [SemanticHit("x", (0, 0), 1.0)], bad)


def test_strength_outside_unit_interval_raises(emb):
    with pytest.raises(ValueError):
        integrate_observation(FeatureGrid.empty(GridSpec(0.25, 2, 2), DIM), [SemanticHit("plant", (0, 0), 1.5)], emb)


def test_batch_with_repeated_cells_equals_sequential(emb, rng):
    labels = ["plant", "chair", "lamp", ""]
    hits = [
        SemanticHit(labels[rng.integers(4)], (int(rng.integers(3)), int(rng.integers(3))), float(rng.uniform(0.05, 1)))
        for _ in range(40)
    ]
    g0 = FeatureGrid.empty(GridSpec(0.25, 3, 3), DIM)
    batch = integrate_observation(g0, hits, emb)
    seq = g0
    for h in hits:
        seq = integrate_observation(seq, [h], emb)
    np.testing.assert_allclose(batch.features, seq.features, atol=1e-12)
    np.testing.assert_allclose(batch.confidence, seq.confidence, atol=1e-12)


hit_lists = st.lists(
    st.tuples(
        st.sampled_from(["plant", "chair", "lamp", ""]),
        st.integers(0, 3),
        st.integers(0, 3),
        st.floats(0.0, 1.0),
    ),
    max_size=30,
)


@given(batches=st.lists(hit_lists, min_size=1, max_size=5))
def test_confidence_monotone_and_invariants_hold(batches):
    emb = FixedEmbedder({"plant": basis(DIM, 0), "chair": basis(DIM, 1), "lamp": unit(np.arange(1, DIM + 1))})
    g = FeatureGrid.empty(GridSpec(0.25, 4, 4), DIM)
    for batch in batches:
        before = g.confidence.copy()
        g = integrate_observation(g, [SemanticHit(lab, (c, r), s) for lab, c, r, s in batch], emb)
        assert (g.confidence >= before - 1e-15).all()
        assert ((g.confidence >= 0) & (g.confidence <= 1)).all()
        norms = np.linalg.norm(g.features, axis=2)
        assert (norms[g.confidence == 0] == 0).all()
        assert np.all((np.abs(norms - 1) < 1e-6) | (norms == 0))


# -- blur_features -----------------------------------------------------------


def test_gaussian_kernel_matches_closed_form():
    k = gaussian_kernel(1)
    w = math.exp(-2.0)  # sigma = 0.5, offset 1
    raw = np.array([[w * w, w, w * w], [w, 1, w], [w * w, w, w * w]])
    np.testing.assert_allclose(k, raw / raw.sum(), atol=1e-15)
    assert gaussian_kernel(0).shape == (1, 1)


def test_blur_radius_zero_is_identity(rng):
    g = random_grid(rng, 6, 7)
    b = blur_features(g, 0)
    np.testing.assert_array_equal(b.features, g.features)
    np.testing.assert_array_equal(b.confidence, g.confidence)


def test_blur_uniform_grid_unchanged(rng):
    spec = GridSpec(0.25, 6, 5)
    v = unit(rng.standard_normal(DIM))
    g = FeatureGrid(spec, np.broadcast_to(v, (5, 6, DIM)).copy(), np.full((5, 6), 0.7))
    for r in (1, 2, 3):
        b = blur_features(g, r)
        np.testing.assert_allclose(b.features, g.features, atol=1e-12)
        np.testing.assert_allclose(b.confidence, g.confidence, atol=1e-12)


def _blur_oracle(grid: FeatureGrid, radius: int):
    """Direct per-cell convolution with a boundary-renormalized Gaussian."""
    h, w = grid.spec.shape
    sigma = radius / 2.0
    conf = np.zeros((h, w))
    feats = np.zeros_like(grid.features)
    for r in range(h):
        for c in range(w):
            wsum, csum = 0.0, 0.0
            fsum = np.zeros(grid.dim)
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        k = math.exp(-(dr * dr + dc * dc) / (2 * sigma * sigma))
                        wsum += k
                        csum += k * grid.confidence[rr, cc]
                        fsum += k * grid.confidence[rr, cc] * grid.features[rr, cc]
            conf[r, c] = csum / wsum
            n = np.linalg.norm(fsum)
            feats[r, c] = fsum / n if n > 1e-12 else 0.0
    return feats, conf


def test_blur_single_cell_matches_hand_convolution():
    spec = GridSpec(0.25, 5, 5)
    g = FeatureGrid.empty(spec, DIM)
    g.features[2, 2] = basis(DIM, 3)
    g.confidence[2, 2] = 1.0
    b = blur_features(g, 1)
    w = math.exp(-2.0)
    z = 1 + 4 * w + 4 * w * w
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = np.array([[w * w, w, w * w], [w, 1, w], [w * w, w, w * w]]) / z
    np.testing.assert_allclose(b.confidence, expected, atol=1e-12)
    nz = expected > 0
    np.testing.assert_allclose(b.features[nz], np.tile(basis(DIM, 3), (9, 1)), atol=1e-12)
    assert (b.features[~nz] == 0).all()


@pytest.mark.parametrize("radius", [1, 2, 3])
def test_blur_matches_loop_oracle_with_boundaries(rng, radius):
    g = random_grid(rng, 7, 9)
    b = blur_features(g, radius)
    feats, conf = _blur_oracle(g, radius)
    np.testing.assert_allclose(b.confidence, conf, atol=1e-12)
    np.testing.assert_allclose(b.features, feats, atol=1e-9)


@given(
    conf=hnp.arrays(np.float64, (6, 6), elements=st.floats(0.0, 1.0)),
    radius=st.integers(1, 2),
)
def test_blur_preserves_interior_confidence_mass(conf, radius):
    pad = 2 * radius
    spec = GridSpec(0.25, 6 + 2 * pad, 6 + 2 * pad)
    g = FeatureGrid.empty(spec, DIM)
    g.confidence[pad:-pad, pad:-pad] = conf
    g.features[g.confidence > 0] = basis(DIM, 0)
    b = blur_features(g, radius)
    assert b.confidence.sum() == pytest.approx(g.confidence.sum(), abs=1e-6)


# -- query -------------------------------------------------------------------


def test_query_identical_and_orthogonal():
    spec = GridSpec(0.25, 2, 1)
    feats = np.stack([basis(DIM, 0), basis(DIM, 1)])[None]
    g = FeatureGrid(spec, feats, np.ones((1, 2)))
    m = query(g, basis(DIM, 0))
    assert m.at((0, 0)) == 1.0
    assert m.at((1, 0)) == 0.5


def test_query_matches_brute_force(rng):
    g = random_grid(rng, 8, 8)
    q = unit(rng.standard_normal(DIM))
    m = query(g, q)
    for r in range(8):
        for c in range(8):
            if g.confidence[r, c] == 0:
                assert m.scores[r, c] == 0.0
                continue
            f = g.features[r, c]
            dot = sum(float(a) * float(b) for a, b in zip(f, q))
            cos = dot / math.sqrt(sum(float(a) ** 2 for a in f))
            assert m.scores[r, c] == pytest.approx((cos + 1) / 2, abs=1e-12)


def test_query_rejects_bad_vectors(rng):
    g = random_grid(rng, 3, 3)
    with pytest.raises(ProviderContractError):
        query(g, basis(DIM + 2, 0))
    with pytest.raises(ProviderContractError):
        query(g, np.full(DIM, 0.9))


@given(seed=st.integers(0, 2**32 - 1), scale_lo=st.floats(0.01, 1.0), scale_hi=st.floats(1.0, 100.0))
def test_query_invariant_under_positive_rescaling(seed, scale_lo, scale_hi):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 5, 6)
    q = unit(rng.standard_normal(DIM))
    scaled = g.copy()
    scaled.features *= rng.uniform(scale_lo, scale_hi, (5, 6, 1))
    np.testing.assert_allclose(query(scaled, q).scores, query(g, q).scores, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1), radius=st.integers(0, 3))
def test_unobserved_cells_score_zero(seed, radius):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, 6, 6, p_observed=0.3)
    q = unit(rng.standard_normal(DIM))
    for grid in (g, blur_features(g, radius)):
        m = query(grid, q)
        assert (m.scores[grid.confidence == 0] == 0).all()
        assert ((m.scores >= 0) & (m.scores <= 1)).all()


def test_grid_save_load_round_trip(tmp_path, rng):
    g = random_grid(rng, 4, 5)
    save_grid(g, tmp_path / "g.npz")
    h = load_grid(tmp_path / "g.npz")
    assert h.spec == g.spec
    np.testing.assert_array_equal(h.features, g.features)
    np.testing.assert_array_equal(h.confidence, g.confidence)


def test_synthetic_embedder_feeds_the_grid():
    emb = SyntheticEmbedder({"mug": {"cup": 0.8}}, dim=16)
    g = integrate_observation(FeatureGrid.empty(GridSpec(0.25, 2, 1), 16), [SemanticHit("mug", (0, 0), 1.0)], emb)
    m = query(g, emb.embed_text("cup"))
    assert m.at((0, 0)) == pytest.approx(0.9, abs=1e-9)
