"""Transition-bias pipeline vs. hand computations and a naive per-pair oracle."""

import numpy as np
import pytest
import scipy.special

from helpers import make_batch
from bitrec.embedding import category_width, init_embeddings
from bitrec.numerics import ParameterStore, Tensor
from bitrec.schema import make_schema
from bitrec.tre import (
    EPSILON,
    behavior_transition_lookup,
    context_dim,
    context_features,
    context_match_scores,
    init_tre,
    item_consistency,
    relational_score,
    run_tre,
    temporal_features,
    transition_bias,
)

SCHEMA = make_schema(["view", "click", "cart", "purchase"], high={"cart", "purchase"})


def tre_setup(d=8, dtype=np.float64, seed=0):
    store = ParameterStore(dtype=dtype)
    rng = np.random.default_rng(seed)
    tables = init_embeddings(store, rng, item_count=12, behavior_count=4, category_count=5, d=d, L=12)
    params = init_tre(store, rng, d, behavior_count=4)
    return store, tables, params


# -- context statistics -------------------------------------------------------


def test_context_features_hand_counts():
    # items [A, A, B], categories [c1, c1, c2], behaviors [low, high, low], L=3
    batch = make_batch([[5, 5, 7]], [[0, 2, 0]], categories=np.array([[1, 1, 2]]))
    feats = context_features(batch, SCHEMA, L_norm=3)
    np.testing.assert_allclose(feats[0, 2], [1.0, 1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(feats[0, 0], [1 / 3, 1.0, 1.0, 0.0])
    np.testing.assert_allclose(feats[0, 1], [2 / 3, 1.0, 1.0, 1 / 2])


def test_context_features_singleton_prefix():
    batch = make_batch([[4]], [[3]])
    feats = context_features(batch, SCHEMA, L_norm=8)
    np.testing.assert_allclose(feats[0, 0], [1 / 8, 1.0, 1.0, 1.0])


def test_context_features_all_low_zeroes_intensity_fraction():
    batch = make_batch([[1, 2, 3, 1]], [[0, 1, 0, 1]])
    feats = context_features(batch, SCHEMA, L_norm=4)
    assert np.all(feats[0, :, 3] == 0.0)


def test_context_features_ignore_extra_left_padding():
    narrow = make_batch([[3, 3, 9]], [[0, 2, 1]], width=3)
    wide = make_batch([[3, 3, 9]], [[0, 2, 1]], width=7)
    f_narrow = context_features(narrow, SCHEMA, L_norm=8)
    f_wide = context_features(wide, SCHEMA, L_norm=8)
    np.testing.assert_allclose(f_wide[0, 4:], f_narrow[0])
    assert np.all(f_wide[0, :4] == 0.0)


# -- context match -------------------------------------------------------------


def test_context_match_zero_projection_gives_zero():
    store, tables, params = tre_setup()
    params.Wq_ctx.data[:] = 0.0
    batch = make_batch([[1, 2, 3]], [[0, 1, 2]])
    rows_b = Tensor(np.random.default_rng(1).normal(size=(1, 3, 8)))
    rows_c = Tensor(np.random.default_rng(2).normal(size=(1, 3, category_width(8))))
    stats = context_features(batch, SCHEMA, 8)
    s = context_match_scores(rows_b, rows_c, stats, params)
    assert np.all(s.data == 0.0)


def test_context_match_identical_contexts_constant():
    store, tables, params = tre_setup()
    rows_b = Tensor(np.ones((1, 3, 8)))
    rows_c = Tensor(np.ones((1, 3, category_width(8))))
    stats = np.ones((1, 3, 4))
    s = context_match_scores(rows_b, rows_c, stats, params).data
    assert np.ptp(s) < 1e-12


def test_context_match_scalar_hand_case():
    d = 8
    store, tables, params = tre_setup(d)
    d_ctx = context_dim(d)
    # Rank-1 projections turn the bilinear form into (a.x_i) * (b.x_j).
    a = np.random.default_rng(3).normal(size=d_ctx)
    b = np.random.default_rng(4).normal(size=d_ctx)
    params.Wq_ctx.data[:] = 0.0
    params.Wk_ctx.data[:] = 0.0
    params.Wq_ctx.data[:, 0] = a
    params.Wk_ctx.data[:, 0] = b
    batch = make_batch([[1, 2]], [[0, 3]])
    rng = np.random.default_rng(5)
    rows_b = rng.normal(size=(1, 2, d))
    rows_c = rng.normal(size=(1, 2, category_width(d)))
    stats = context_features(batch, SCHEMA, 4)
    s = context_match_scores(Tensor(rows_b), Tensor(rows_c), stats, params).data
    ctx = np.concatenate([rows_b[0], rows_c[0], stats[0]], axis=-1)
    for i in range(2):
        for j in range(2):
            assert s[0, i, j] == pytest.approx((a @ ctx[i]) * (b @ ctx[j]), rel=1e-12)


# -- explicit relational features ------------------------------------------------


def test_item_consistency_reference_pairs():
    store, tables, params = tre_setup()
    # Orthogonal rows for items 0 and 1; item 2 antipodal to item 0.
    tables.item.data[:] = 0.0
    tables.item.data[0, 0] = 1.0
    tables.item.data[1, 1] = 1.0
    tables.item.data[2] = -tables.item.data[0]
    batch = make_batch(
        [[0, 1, 2]], [[0, 1, 2]], categories=np.array([[4, 4, 1]])
    )
    r = item_consistency(batch, tables.item).data[0]
    np.testing.assert_allclose(r[0, 0], [1.0, 1.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(r[1, 0], [0.0, 1.0, 0.0], atol=1e-9)   # same category only
    np.testing.assert_allclose(r[2, 0], [0.0, 0.0, -1.0], atol=1e-9)  # antipodal embeddings


def test_behavior_transition_lookup_rows_are_query_behavior():
    store, tables, params = tre_setup()
    params.transition.data[:] = 0.0
    params.transition.data[3, 2] = 0.7  # purchase query, cart history
    batch = make_batch([[1, 1, 1]], [[2, 3, 3]])
    got = behavior_transition_lookup(batch.behaviors, params.transition).data[0]
    assert got[1, 0] == pytest.approx(0.7)
    assert got[2, 0] == pytest.approx(0.7)
    assert got[0, 1] == 0.0
    assert params.transition.shape == (4, 4)


def test_temporal_features_reference_values():
    ts = np.array([[0, 24 * 3600]])
    r = temporal_features(ts)
    np.testing.assert_allclose(r[0, 0, 0], [0.5, 0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(
        r[0, 1, 0], [scipy.special.expit(1.0), np.log(25.0), 1.0 / 25.0], atol=1e-12
    )
    # Future-direction gaps clamp to zero.
    np.testing.assert_allclose(r[0, 0, 1], [0.5, 0.0, 1.0], atol=1e-12)


def test_temporal_features_monotone_in_gap():
    ts = np.array([[0, 3600, 100 * 3600, 5000 * 3600]])
    r = temporal_features(ts)
    gaps = r[0, 3, :3]  # row of the latest event vs earlier ones
    assert gaps[0, 1] > gaps[1, 1] > gaps[2, 1]  # log term shrinks with recency
    assert gaps[0, 2] < gaps[1, 2] < gaps[2, 2]  # inverse term grows with recency


def test_relational_score_constant_when_weights_zero():
    store, tables, params = tre_setup()
    params.mlp_W1.data[:] = 0.0
    params.mlp_W2.data[:] = 0.0
    params.mlp_b2.data[:] = -1.25
    r_item = Tensor(np.random.default_rng(0).normal(size=(1, 3, 3, 3)))
    b_entry = Tensor(np.zeros((1, 3, 3)))
    r_time = Tensor(np.random.default_rng(1).normal(size=(1, 3, 3, 3)))
    s = relational_score(r_item, b_entry, r_time, params).data
    np.testing.assert_allclose(s, -1.25)


def test_relational_score_hand_evaluation():
    store, tables, params = tre_setup()
    feats = np.array([1.0, 0.0, 0.37, -0.2, 0.5, 1.1, 0.04])
    r_item = Tensor(feats[:3].reshape(1, 1, 1, 3))
    b_entry = Tensor(feats[3].reshape(1, 1, 1))
    r_time = Tensor(feats[4:].reshape(1, 1, 1, 3))
    got = relational_score(r_item, b_entry, r_time, params).data[0, 0, 0]
    want = (
        params.mlp_W2.data @ np.tanh(params.mlp_W1.data @ feats + params.mlp_b1.data)
        + params.mlp_b2.data
    )[0]
    assert got == pytest.approx(want, rel=1e-12)


# -- bias fusion ------------------------------------------------------------------


def test_transition_bias_zero_gates_reference_value():
    store, tables, params = tre_setup()
    params.alpha_qk.data[:] = 0.0
    params.alpha_rel.data[:] = 0.0
    rng = np.random.default_rng(6)
    s_qk = Tensor(rng.normal(size=(1, 3, 3)))
    s_rel = Tensor(rng.normal(size=(1, 3, 3)))
    valid = np.ones((1, 3), dtype=bool)
    got = transition_bias(s_qk, s_rel, params, valid).data[0]
    expected = np.log(0.5 + EPSILON)
    assert expected == pytest.approx(-0.69315, abs=5e-5)
    for i in range(3):
        for j in range(3):
            if j <= i:
                assert got[i, j] == pytest.approx(expected, rel=1e-6)
            else:
                assert got[i, j] == 0.0


def test_transition_bias_saturates_toward_zero():
    store, tables, params = tre_setup()
    s_qk = Tensor(np.full((1, 2, 2), 1000.0))
    s_rel = Tensor(np.full((1, 2, 2), 1000.0))
    valid = np.ones((1, 2), dtype=bool)
    got = transition_bias(s_qk, s_rel, params, valid).data
    assert got[0, 1, 0] == pytest.approx(np.log(1 + EPSILON), abs=1e-9)


def test_transition_bias_bounds():
    store, tables, params = tre_setup()
    rng = np.random.default_rng(7)
    s_qk = Tensor(rng.normal(size=(2, 4, 4)) * 50)
    s_rel = Tensor(rng.normal(size=(2, 4, 4)) * 50)
    valid = np.ones((2, 4), dtype=bool)
    got = transition_bias(s_qk, s_rel, params, valid).data
    causal = np.tril(np.ones((4, 4), dtype=bool))
    vals = got[:, causal]
    assert np.all(vals >= np.log(EPSILON) - 1e-9)
    assert np.all(vals <= np.log(1 + EPSILON) + 1e-12)


# -- full pipeline oracle ------------------------------------------------------------


def naive_tre(batch, tables, params, schema, L_norm):
    """Everything per pair with plain numpy, no vectorized shortcuts."""
    b, w = batch.items.shape
    item_t = tables.item.data
    beh_t = tables.behavior.data
    cat_t = tables.category.data
    out = np.zeros((b, w, w))
    for r in range(b):
        valid = batch.valid_mask[r]
        real = [j for j in range(w) if valid[j]]
        stats = np.zeros((w, 4))
        for pos, j in enumerate(real):
            prefix = real[: pos + 1]
            stats[j, 0] = (pos + 1) / L_norm
            stats[j, 1] = sum(batch.items[r, k] == batch.items[r, j] for k in prefix) / (pos + 1)
            stats[j, 2] = sum(batch.categories[r, k] == batch.categories[r, j] for k in prefix) / (pos + 1)
            stats[j, 3] = sum(
                schema.intensity_of(int(batch.behaviors[r, k])) for k in prefix
            ) / (pos + 1)
        ctx = np.concatenate(
            [beh_t[batch.behaviors[r]], cat_t[batch.categories[r]], stats], axis=-1
        )
        q = ctx @ params.Wq_ctx.data
        k = ctx @ params.Wk_ctx.data
        for i in range(w):
            for j in range(w):
                if j > i or not valid[i] or not valid[j]:
                    continue
                s_qk = q[i] @ k[j]
                ei, ej = item_t[batch.items[r, i]], item_t[batch.items[r, j]]
                cos = float(
                    (ei @ ej) / np.sqrt((ei @ ei + 1e-24) * (ej @ ej + 1e-24))
                )
                r_item = [
                    float(batch.items[r, i] == batch.items[r, j]),
                    float(batch.categories[r, i] == batch.categories[r, j]),
                    cos,
                ]
                b_ij = params.transition.data[batch.behaviors[r, i], batch.behaviors[r, j]]
                dt = max((batch.timestamps[r, i] - batch.timestamps[r, j]) / 3600.0, 0.0)
                r_time = [scipy.special.expit(dt / 24.0), np.log1p(dt), 1.0 / (1.0 + dt)]
                feats = np.array(r_item + [b_ij] + r_time)
                s_rel = (
                    params.mlp_W2.data
                    @ np.tanh(params.mlp_W1.data @ feats + params.mlp_b1.data)
                    + params.mlp_b2.data
                )[0]
                wgt = scipy.special.expit(
                    params.alpha_qk.data[0] / params.tau * s_qk
                    + params.alpha_rel.data[0] * s_rel
                )
                out[r, i, j] = np.log(wgt + params.eps)
    return out


def test_full_pipeline_matches_naive_loop_float32():
    rng = np.random.default_rng(99)
    store = ParameterStore(dtype=np.float32)
    tables = init_embeddings(store, rng, item_count=15, behavior_count=4, category_count=6, d=8, L=12)
    params = init_tre(store, rng, 8, behavior_count=4)
    params.transition.data[:] = rng.normal(size=(4, 4)).astype(np.float32)
    for trial in range(10):
        n = int(rng.integers(2, 9))
        items = rng.integers(0, 15, size=(2, n))
        behaviors = rng.integers(0, 4, size=(2, n))
        ts = np.cumsum(rng.integers(60, 72 * 3600, size=(2, n)), axis=-1)
        batch = make_batch(items, behaviors, timestamps=ts, categories=items % 6, width=n + int(rng.integers(0, 3)))
        got = run_tre(batch, tables, SCHEMA, params, L_norm=12).data
        want = naive_tre(batch, tables, params, SCHEMA, L_norm=12)
        np.testing.assert_allclose(got, want, atol=1e-5)


def test_component_toggles_zero_features_without_shape_changes():
    store, tables, params = tre_setup()
    params.transition.data[:] = 0.5
    batch = make_batch([[1, 2, 1]], [[0, 2, 3]])
    full = run_tre(batch, tables, SCHEMA, params, L_norm=8).data
    for flag in (
        "use_context_match",
        "use_item_consistency",
        "use_behavior_transition",
        "use_temporal",
    ):
        partial = run_tre(batch, tables, SCHEMA, params, L_norm=8, **{flag: False}).data
        assert partial.shape == full.shape
        assert not np.allclose(partial, full), flag
