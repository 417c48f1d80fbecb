"""Intensity-stratified attention channels fused into an attention bias.

History positions are split by behavior intensity into two strata, each
aggregated by its own masked attention channel.  Every query position
routes the channel matching its own intensity to the "self" slot and the
other to "cross", a sigmoid gate mixes the two, and a small MLP turns the
fused state plus pairwise token features into a causal (L x L) bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    ParameterStore,
    Tensor,
    add,
    concat,
    linear,
    masked_softmax,
    matmul,
    mul,
    normal_init,
    reshape,
    sigmoid,
    slice_,
    sub,
    sum_,
    swapaxes,
    tanh,
    xavier_uniform,
)
from .schema import BehaviorSchema

NEG_INF = float("-inf")


@dataclass
class HbaParams:
    Wq: Tensor      # (d, d), applied H @ Wq
    Wk: Tensor      # (d, d)
    Wv: Tensor      # (d, d)
    Wg: Tensor      # (d, 2d) gate weight, applied via linear()
    bg: Tensor      # (d,)
    mlp_W1: Tensor  # (d, 4d): columns ordered [h_i | e_bj | e_vj | R_fused_i]
    mlp_b1: Tensor  # (d,)
    mlp_W2: Tensor  # (1, d)
    mlp_b2: Tensor  # (1,)


@dataclass
class HbaOutput:
    r_low: Tensor    # (batch, L, d)
    r_high: Tensor   # (batch, L, d)
    r_fused: Tensor  # (batch, L, d)
    gate: Tensor     # (batch, L, d)
    bias: Tensor     # (batch, L, L), zero for j > i and padded i/j


def init_hba(store: ParameterStore, rng: np.random.Generator, d: int, prefix: str) -> HbaParams:
    return HbaParams(
        Wq=store.add(f"{prefix}.Wq", xavier_uniform(rng, (d, d))),
        Wk=store.add(f"{prefix}.Wk", xavier_uniform(rng, (d, d))),
        Wv=store.add(f"{prefix}.Wv", xavier_uniform(rng, (d, d))),
        Wg=store.add(f"{prefix}.gate.W", xavier_uniform(rng, (d, 2 * d))),
        bg=store.add(f"{prefix}.gate.b", np.zeros(d)),
        mlp_W1=store.add(f"{prefix}.mlp.W1", normal_init(rng, (d, 4 * d))),
        mlp_b1=store.add(f"{prefix}.mlp.b1", np.zeros(d)),
        mlp_W2=store.add(f"{prefix}.mlp.W2", normal_init(rng, (1, d))),
        mlp_b2=store.add(f"{prefix}.mlp.b2", np.zeros(1)),
    )


def intensity_of_positions(behaviors: np.ndarray, schema: BehaviorSchema) -> np.ndarray:
    """Per-position intensity flag phi(b) as an int array shaped like behaviors."""
    table = np.array([schema.intensity_of(b) for b in range(schema.num_behaviors)], dtype=np.int64)
    return table[behaviors]


def build_intensity_masks(
    behaviors: np.ndarray,
    valid_mask: np.ndarray,
    schema: BehaviorSchema,
    split: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Additive {0, -inf} masks selecting the causal low/high strata.

    Entry (i, j) is open in exactly one of the two masks when j <= i and
    both ends are real; padded query rows are fully closed.  With
    ``split=False`` both masks degrade to the plain causal mask (the
    intensity-split ablation).
    """
    b, L = behaviors.shape
    causal = np.tril(np.ones((L, L), dtype=bool))
    pair_ok = causal[None, :, :] & valid_mask[:, None, :] & valid_mask[:, :, None]
    if not split:
        m = np.where(pair_ok, 0.0, NEG_INF)
        return m, m.copy()
    phi_j = intensity_of_positions(behaviors, schema)[:, None, :]
    m_low = np.where(pair_ok & (phi_j == 0), 0.0, NEG_INF)
    m_high = np.where(pair_ok & (phi_j == 1), 0.0, NEG_INF)
    return m_low, m_high


def stratified_attention(H: Tensor, mask: np.ndarray, params: HbaParams) -> Tensor:
    """Single-head masked attention over one stratum; empty strata give zeros."""
    d = H.shape[-1]
    q = matmul(H, params.Wq)
    k = matmul(H, params.Wk)
    v = matmul(H, params.Wv)
    scores = mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / float(np.sqrt(d)))
    return matmul(masked_softmax(scores, mask), v)


def route_self_cross(
    r_low: Tensor, r_high: Tensor, behaviors: np.ndarray, schema: BehaviorSchema
) -> tuple[Tensor, Tensor]:
    """Queries read their own stratum as "self" and the other as "cross"."""
    phi = intensity_of_positions(behaviors, schema)[:, :, None]
    sel = Tensor(phi.astype(r_low.data.dtype))
    r_self = add(mul(r_low, sub(1.0, sel)), mul(r_high, sel))
    r_cross = add(mul(r_low, sel), mul(r_high, sub(1.0, sel)))
    return r_self, r_cross


def moe_fuse(r_self: Tensor, r_cross: Tensor, params: HbaParams) -> tuple[Tensor, Tensor]:
    g = sigmoid(linear(concat([r_self, r_cross], axis=-1), params.Wg, params.bg))
    fused = add(mul(g, r_self), mul(sub(1.0, g), r_cross))
    return fused, g


def hba_bias(
    H: Tensor,
    behavior_rows: Tensor,
    item_rows: Tensor,
    r_fused: Tensor,
    params: HbaParams,
    valid_mask: np.ndarray,
) -> Tensor:
    """Scalar bias per (query i, key j), zero above the diagonal and at pads.

    The MLP input [h_i | e_bj | e_vj | R_fused_i] factors into i-only and
    j-only halves, so the first layer is evaluated as a broadcast outer sum
    of two (batch, L, d) maps instead of materializing (batch, L, L, 4d).
    """
    d = params.mlp_b1.shape[0]
    w_hi = slice_(params.mlp_W1, (slice(None), slice(0, d)))
    w_bj = slice_(params.mlp_W1, (slice(None), slice(d, 2 * d)))
    w_vj = slice_(params.mlp_W1, (slice(None), slice(2 * d, 3 * d)))
    w_ri = slice_(params.mlp_W1, (slice(None), slice(3 * d, 4 * d)))
    b, L = valid_mask.shape
    part_i = reshape(add(linear(H, w_hi), linear(r_fused, w_ri)), (b, L, 1, d))
    part_j = reshape(add(linear(behavior_rows, w_bj), linear(item_rows, w_vj)), (b, 1, L, d))
    hidden = tanh(add(add(part_i, part_j), params.mlp_b1))
    raw = sum_(mul(hidden, reshape(params.mlp_W2, (d,))), axis=-1)
    raw = add(raw, reshape(params.mlp_b2, ()))
    causal = np.tril(np.ones((L, L), dtype=bool))
    keep = causal[None] & valid_mask[:, None, :] & valid_mask[:, :, None]
    return mul(raw, Tensor(keep.astype(H.data.dtype)))


def run_hba(
    H: Tensor,
    behaviors: np.ndarray,
    valid_mask: np.ndarray,
    schema: BehaviorSchema,
    params: HbaParams,
    behavior_rows: Tensor,
    item_rows: Tensor,
    split: bool = True,
) -> HbaOutput:
    m_low, m_high = build_intensity_masks(behaviors, valid_mask, schema, split=split)
    r_low = stratified_attention(H, m_low, params)
    r_high = stratified_attention(H, m_high, params)
    r_self, r_cross = route_self_cross(r_low, r_high, behaviors, schema)
    fused, gate = moe_fuse(r_self, r_cross, params)
    bias = hba_bias(H, behavior_rows, item_rows, fused, params, valid_mask)
    return HbaOutput(r_low=r_low, r_high=r_high, r_fused=fused, gate=gate, bias=bias)
