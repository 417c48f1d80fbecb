"""Pairwise transition relations fused into a causal attention bias.

Two signal families are combined per (query i, history j) pair: an
implicit bilinear match between statistical context vectors, and explicit
relational features (same item/category, item-embedding cosine, a
learnable behavior-to-behavior transition weight, and multi-scale elapsed
time).  A sigmoid squashes the mix to (0, 1) and the log of that weight
becomes the additive bias, so an uninformative pair contributes about
log 0.5 and a strongly related one contributes about 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special

from .dataio import Batch
from .embedding import EmbeddingTables, category_width
from .numerics import (
    ParameterStore,
    Tensor,
    add,
    concat,
    gather_rows,
    linear,
    log,
    matmul,
    mul,
    normal_init,
    power,
    reshape,
    sigmoid,
    sum_,
    swapaxes,
    take_flat,
    tanh,
    xavier_uniform,
)
from .schema import BehaviorSchema
from .hba import intensity_of_positions

STAT_WIDTH = 4       # features per position in the context vector
RELATIONAL_WIDTH = 7  # 3 item + 1 transition + 3 temporal
HIDDEN_WIDTH = 16
EPSILON = 1e-6
SECONDS_PER_HOUR = 3600.0


@dataclass
class TreParams:
    Wq_ctx: Tensor     # (d_ctx, d_m), applied C @ W
    Wk_ctx: Tensor     # (d_ctx, d_m)
    transition: Tensor  # (|B|, |B|), row = query behavior
    mlp_W1: Tensor     # (16, 7)
    mlp_b1: Tensor     # (16,)
    mlp_W2: Tensor     # (1, 16)
    mlp_b2: Tensor     # (1,)
    alpha_qk: Tensor   # (1,)
    alpha_rel: Tensor  # (1,)
    tau: float
    eps: float


def context_dim(d: int) -> int:
    return d + category_width(d) + STAT_WIDTH


def matching_dim(d: int) -> int:
    return -(-d // 4)


def init_tre(
    store: ParameterStore,
    rng: np.random.Generator,
    d: int,
    behavior_count: int,
    prefix: str = "tre",
) -> TreParams:
    d_ctx = context_dim(d)
    d_m = matching_dim(d)
    return TreParams(
        Wq_ctx=store.add(f"{prefix}.ctx.Wq", xavier_uniform(rng, (d_ctx, d_m))),
        Wk_ctx=store.add(f"{prefix}.ctx.Wk", xavier_uniform(rng, (d_ctx, d_m))),
        transition=store.add(f"{prefix}.transition", np.zeros((behavior_count, behavior_count))),
        mlp_W1=store.add(f"{prefix}.mlp.W1", normal_init(rng, (HIDDEN_WIDTH, RELATIONAL_WIDTH), std=0.1)),
        mlp_b1=store.add(f"{prefix}.mlp.b1", np.zeros(HIDDEN_WIDTH)),
        mlp_W2=store.add(f"{prefix}.mlp.W2", normal_init(rng, (1, HIDDEN_WIDTH), std=0.1)),
        mlp_b2=store.add(f"{prefix}.mlp.b2", np.zeros(1)),
        alpha_qk=store.add(f"{prefix}.alpha_qk", np.ones(1)),
        alpha_rel=store.add(f"{prefix}.alpha_rel", np.ones(1)),
        tau=float(np.sqrt(d_ctx)),
        eps=EPSILON,
    )


def context_features(batch: Batch, schema: BehaviorSchema, L_norm: int) -> np.ndarray:
    """Per-position prefix statistics, shape (batch, width, 4); pads are zero.

    Features over the real prefix [0..j]: normalized position (j+1)/L_norm,
    repeat rate of the current item, repeat rate of its category, and the
    high-intensity fraction.  Position counts real tokens, so extra left
    padding does not move the values.
    """
    valid = batch.valid_mask
    b, w = valid.shape
    real_idx = np.cumsum(valid, axis=-1) - 1
    denom = np.maximum(real_idx + 1, 1).astype(np.float64)
    causal = np.tril(np.ones((w, w), dtype=bool))
    pair = causal[None] & valid[:, None, :]

    def prefix_rate(ids):
        eq = ids[:, :, None] == ids[:, None, :]
        return (eq & pair).sum(axis=-1) / denom

    phi = intensity_of_positions(batch.behaviors, schema)
    high_rate = np.cumsum(phi * valid, axis=-1) / denom
    out = np.stack(
        [
            (real_idx + 1) / float(L_norm),
            prefix_rate(batch.items),
            prefix_rate(batch.categories),
            high_rate,
        ],
        axis=-1,
    )
    return np.where(valid[:, :, None], out, 0.0)


def context_match_scores(
    behavior_rows: Tensor, category_rows: Tensor, stats: np.ndarray, params: TreParams
) -> Tensor:
    """Bilinear match of projected context vectors, shape (batch, width, width)."""
    C = concat([behavior_rows, category_rows, Tensor(stats.astype(behavior_rows.data.dtype))], axis=-1)
    q = matmul(C, params.Wq_ctx)
    k = matmul(C, params.Wk_ctx)
    return matmul(q, swapaxes(k, -1, -2))


def item_consistency(batch: Batch, item_table: Tensor) -> Tensor:
    """[same item, same category, item-embedding cosine] per pair.

    The cosine is computed from rows normalized with a tiny additive guard
    so it stays differentiable and defined even for a zero row.
    """
    same_item = (batch.items[:, :, None] == batch.items[:, None, :]).astype(item_table.data.dtype)
    same_cat = (batch.categories[:, :, None] == batch.categories[:, None, :]).astype(item_table.data.dtype)
    rows = gather_rows(item_table, batch.items)
    inv_norm = power(add(sum_(mul(rows, rows), axis=-1, keepdims=True), 1e-24), -0.5)
    unit = mul(rows, inv_norm)
    cosine = matmul(unit, swapaxes(unit, -1, -2))
    b, w = batch.items.shape
    return concat(
        [
            Tensor(same_item.reshape(b, w, w, 1)),
            Tensor(same_cat.reshape(b, w, w, 1)),
            reshape(cosine, (b, w, w, 1)),
        ],
        axis=-1,
    )


def behavior_transition_lookup(behaviors: np.ndarray, transition: Tensor) -> Tensor:
    """Entry (i, j) = transition[b_i, b_j]: query behavior row, history column."""
    nb = transition.shape[1]
    flat = behaviors[:, :, None] * nb + behaviors[:, None, :]
    return take_flat(transition, flat)


def temporal_features(timestamps: np.ndarray) -> np.ndarray:
    """Multi-scale elapsed-time features per pair, shape (batch, w, w, 3).

    Elapsed time is (t_i - t_j) in hours, clamped at zero: day-scale
    sigmoid saturation, log compression, and inverse recency.
    """
    dt = (timestamps[:, :, None] - timestamps[:, None, :]) / SECONDS_PER_HOUR
    dt = np.maximum(dt, 0.0)
    return np.stack(
        [scipy.special.expit(dt / 24.0), np.log1p(dt), 1.0 / (1.0 + dt)], axis=-1
    )


def relational_score(r_item: Tensor, b_entry: Tensor, r_time: Tensor, params: TreParams) -> Tensor:
    """Fuse the 7 explicit features into one scalar per pair (tanh hidden MLP)."""
    b, w = b_entry.shape[0], b_entry.shape[1]
    feats = concat([r_item, reshape(b_entry, (b, w, w, 1)), r_time], axis=-1)
    hidden = tanh(linear(feats, params.mlp_W1, params.mlp_b1))
    return reshape(linear(hidden, params.mlp_W2, params.mlp_b2), (b, w, w))


def transition_bias(
    s_qk: Tensor, s_rel: Tensor, params: TreParams, valid_mask: np.ndarray
) -> Tensor:
    """log of the gated pair weight at causal valid entries, exactly 0 elsewhere."""
    a_qk = reshape(params.alpha_qk, ())
    a_rel = reshape(params.alpha_rel, ())
    mix = add(mul(s_qk, mul(a_qk, 1.0 / params.tau)), mul(s_rel, a_rel))
    w_pair = sigmoid(mix)
    b, L = valid_mask.shape
    causal = np.tril(np.ones((L, L), dtype=bool))
    keep = causal[None] & valid_mask[:, None, :] & valid_mask[:, :, None]
    return mul(log(add(w_pair, params.eps)), Tensor(keep.astype(s_rel.data.dtype)))


def run_tre(
    batch: Batch,
    tables: EmbeddingTables,
    schema: BehaviorSchema,
    params: TreParams,
    L_norm: int,
    use_context_match: bool = True,
    use_item_consistency: bool = True,
    use_behavior_transition: bool = True,
    use_temporal: bool = True,
) -> Tensor:
    """Full bias pipeline; each disabled component is replaced by zeros."""
    dtype = tables.item.data.dtype
    b, w = batch.items.shape
    behavior_rows = gather_rows(tables.behavior, batch.behaviors)
    category_rows = gather_rows(tables.category, batch.categories)
    if use_context_match:
        stats = context_features(batch, schema, L_norm)
        s_qk = context_match_scores(behavior_rows, category_rows, stats, params)
    else:
        s_qk = Tensor(np.zeros((b, w, w), dtype=dtype))
    if use_item_consistency:
        r_item = item_consistency(batch, tables.item)
    else:
        r_item = Tensor(np.zeros((b, w, w, 3), dtype=dtype))
    if use_behavior_transition:
        b_entry = behavior_transition_lookup(batch.behaviors, params.transition)
    else:
        b_entry = Tensor(np.zeros((b, w, w), dtype=dtype))
    if use_temporal:
        r_time = Tensor(temporal_features(batch.timestamps).astype(dtype))
    else:
        r_time = Tensor(np.zeros((b, w, w, 3), dtype=dtype))
    s_rel = relational_score(r_item, b_entry, r_time, params)
    return transition_bias(s_qk, s_rel, params, batch.valid_mask)
