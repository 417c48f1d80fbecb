"""Causal transformer with relation-aware attention biases and dual heads.

Attention logits are content similarity plus two learnable-scaled additive
biases: a per-layer behavior-aggregation bias and a transition bias shared
across layers (it depends only on static sequence features, so computing
it once is exact).  Both scales start at zero, so a freshly initialized
model is a plain causal transformer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import Batch, sequence_to_arrays
from .embedding import EmbeddingTables, embed_sequence, init_embeddings
from .hba import HbaOutput, HbaParams, init_hba, run_hba
from .numerics import (
    ParameterStore,
    Tensor,
    add,
    dropout,
    gather_rows,
    gelu,
    layer_norm,
    linear,
    logsumexp,
    masked_softmax,
    matmul,
    mul,
    no_grad,
    reshape,
    slice_,
    sub,
    sum_,
    swapaxes,
    take_flat,
    transpose,
    xavier_uniform,
)
from .schema import BehaviorSchema, Interaction
from .tre import TreParams, init_tre, run_tre

NEG_INF = float("-inf")

INTENSITY_MODES = ("full", "none", "purchase_only")


@dataclass(frozen=True)
class ModelConfig:
    item_count: int
    behavior_count: int
    category_count: int
    d: int = 128
    heads: int = 2
    layers: int = 2
    L: int = 50
    dropout: float = 0.1
    enable_hba: bool = True
    enable_tre: bool = True
    intensity_mode: str = "full"
    use_context_match: bool = True
    use_item_consistency: bool = True
    use_behavior_transition: bool = True
    use_temporal: bool = True
    behavior_loss_weight: float = 1.0

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise ValueError(f"width {self.d} not divisible by {self.heads} heads")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.intensity_mode not in INTENSITY_MODES:
            raise ValueError(f"intensity_mode must be one of {INTENSITY_MODES}")
        if min(self.item_count, self.behavior_count, self.category_count) < 1:
            raise ValueError("catalog/schema counts must be >= 1")


@dataclass
class LayerParams:
    Wq: Tensor  # (d, d), applied x @ W
    Wk: Tensor
    Wv: Tensor
    Wo: Tensor
    norm1_scale: Tensor
    norm1_shift: Tensor
    norm2_scale: Tensor
    norm2_shift: Tensor
    ffn_W1: Tensor  # (4d, d) via linear()
    ffn_b1: Tensor
    ffn_W2: Tensor  # (d, 4d)
    ffn_b2: Tensor
    hba: HbaParams
    beta: Tensor   # (1,) scale on the aggregation bias
    gamma: Tensor  # (1,) scale on the transition bias


@dataclass
class ModelParams:
    store: ParameterStore
    tables: EmbeddingTables
    layers: list[LayerParams]
    tre: TreParams
    behavior_W: Tensor  # (|B|, d)
    behavior_b: Tensor  # (|B|,)


@dataclass
class ForwardOutput:
    hidden: Tensor           # (batch, width, d) final states
    behavior_logits: Tensor  # (batch, width, |B|)
    hba_outputs: list[HbaOutput] = field(default_factory=list)
    tre_bias: Tensor | None = None


def init_parameters(
    config: ModelConfig, rng: np.random.Generator, dtype=np.float32
) -> ModelParams:
    """Fresh parameter store; bias scales start at 0 (vanilla start)."""
    store = ParameterStore(dtype)
    d = config.d
    tables = init_embeddings(
        store, rng, config.item_count, config.behavior_count, config.category_count, d, config.L
    )
    layers = []
    for i in range(config.layers):
        p = f"attn.layer{i}"
        layers.append(
            LayerParams(
                Wq=store.add(f"{p}.Wq", xavier_uniform(rng, (d, d))),
                Wk=store.add(f"{p}.Wk", xavier_uniform(rng, (d, d))),
                Wv=store.add(f"{p}.Wv", xavier_uniform(rng, (d, d))),
                Wo=store.add(f"{p}.Wo", xavier_uniform(rng, (d, d))),
                norm1_scale=store.add(f"{p}.norm1.scale", np.ones(d)),
                norm1_shift=store.add(f"{p}.norm1.shift", np.zeros(d)),
                norm2_scale=store.add(f"{p}.norm2.scale", np.ones(d)),
                norm2_shift=store.add(f"{p}.norm2.shift", np.zeros(d)),
                ffn_W1=store.add(f"{p}.ffn.W1", xavier_uniform(rng, (4 * d, d))),
                ffn_b1=store.add(f"{p}.ffn.b1", np.zeros(4 * d)),
                ffn_W2=store.add(f"{p}.ffn.W2", xavier_uniform(rng, (d, 4 * d))),
                ffn_b2=store.add(f"{p}.ffn.b2", np.zeros(d)),
                hba=init_hba(store, rng, d, prefix=f"hba.layer{i}"),
                beta=store.add(f"integrate.layer{i}.beta", np.zeros(1)),
                gamma=store.add(f"integrate.layer{i}.gamma", np.zeros(1)),
            )
        )
    tre_params = init_tre(store, rng, d, config.behavior_count)
    behavior_W = store.add("head.behavior.W", xavier_uniform(rng, (config.behavior_count, d)))
    behavior_b = store.add("head.behavior.b", np.zeros(config.behavior_count))
    return ModelParams(store, tables, layers, tre_params, behavior_W, behavior_b)


def causal_attention_mask(valid_mask: np.ndarray) -> np.ndarray:
    """{0, -inf} mask (batch, 1, w, w): keys must be real and not in the future."""
    b, w = valid_mask.shape
    causal = np.tril(np.ones((w, w), dtype=bool))
    keep = causal[None] & valid_mask[:, None, :]
    return np.where(keep, 0.0, NEG_INF)[:, None, :, :]


def split_heads(x: Tensor, heads: int) -> Tensor:
    b, w, d = x.shape
    return transpose(reshape(x, (b, w, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    b, h, w, dk = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, w, h * dk))


def _attention_core(
    x: Tensor,
    layer: LayerParams,
    heads: int,
    mask: np.ndarray,
    bias: Tensor | None,
) -> Tensor:
    """Multi-head causal attention; ``bias`` is pre-scaled and broadcast to heads."""
    dk = x.shape[-1] // heads
    q = split_heads(matmul(x, layer.Wq), heads)
    k = split_heads(matmul(x, layer.Wk), heads)
    v = split_heads(matmul(x, layer.Wv), heads)
    scores = mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / float(np.sqrt(dk)))
    if bias is not None:
        b, w = bias.shape[0], bias.shape[1]
        scores = add(scores, reshape(bias, (b, 1, w, w)))
    weights = masked_softmax(scores, np.broadcast_to(mask, scores.shape))
    return matmul(merge_heads(matmul(weights, v)), layer.Wo)


def attention_layer(
    H: Tensor,
    layer: LayerParams,
    config: ModelConfig,
    mask: np.ndarray,
    bias_hba: Tensor | None,
    bias_tre: Tensor | None,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Pre-norm attention block + pre-norm FFN block, each residual-added."""
    bias = None
    if bias_hba is not None:
        bias = mul(bias_hba, reshape(layer.beta, ()))
    if bias_tre is not None:
        scaled = mul(bias_tre, reshape(layer.gamma, ()))
        bias = scaled if bias is None else add(bias, scaled)
    x = layer_norm(H, layer.norm1_scale, layer.norm1_shift)
    attended = _attention_core(x, layer, config.heads, mask, bias)
    if train and config.dropout > 0.0:
        attended = dropout(attended, config.dropout, rng)
    H = add(H, attended)
    y = layer_norm(H, layer.norm2_scale, layer.norm2_shift)
    f = linear(gelu(linear(y, layer.ffn_W1, layer.ffn_b1)), layer.ffn_W2, layer.ffn_b2)
    if train and config.dropout > 0.0:
        f = dropout(f, config.dropout, rng)
    return add(H, f)


def forward(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    schema: BehaviorSchema,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardOutput:
    if train and config.dropout > 0.0 and rng is None:
        raise ValueError("training forward with dropout needs an rng")
    H = embed_sequence(batch, params.tables)
    if train and config.dropout > 0.0:
        H = dropout(H, config.dropout, rng)
    mask = causal_attention_mask(batch.valid_mask)

    tre_bias = None
    if config.enable_tre:
        # Static per-sequence features only: computed once, shared by layers.
        tre_bias = run_tre(
            batch,
            params.tables,
            schema,
            params.tre,
            config.L,
            use_context_match=config.use_context_match,
            use_item_consistency=config.use_item_consistency,
            use_behavior_transition=config.use_behavior_transition,
            use_temporal=config.use_temporal,
        )

    hba_schema = schema
    if config.intensity_mode == "purchase_only":
        hba_schema = schema.purchase_only_high()
    behavior_rows = gather_rows(params.tables.behavior, batch.behaviors) if config.enable_hba else None
    item_rows = gather_rows(params.tables.item, batch.items) if config.enable_hba else None

    hba_outputs: list[HbaOutput] = []
    for layer in params.layers:
        bias_hba = None
        if config.enable_hba:
            out = run_hba(
                H,
                batch.behaviors,
                batch.valid_mask,
                hba_schema,
                layer.hba,
                behavior_rows,
                item_rows,
                split=config.intensity_mode != "none",
            )
            hba_outputs.append(out)
            bias_hba = out.bias
        H = attention_layer(H, layer, config, mask, bias_hba, tre_bias, train=train, rng=rng)

    behavior_logits = linear(H, params.behavior_W, params.behavior_b)
    return ForwardOutput(H, behavior_logits, hba_outputs, tre_bias)


def vanilla_forward(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardOutput:
    """Plain causal transformer over the same parameters, no bias machinery.

    Kept as an independent reference path: with both bias families disabled
    the main forward must match this bit for bit.
    """
    H = embed_sequence(batch, params.tables)
    if train and config.dropout > 0.0:
        H = dropout(H, config.dropout, rng)
    mask = causal_attention_mask(batch.valid_mask)
    for layer in params.layers:
        H = attention_layer(H, layer, config, mask, None, None, train=train, rng=rng)
    return ForwardOutput(H, linear(H, params.behavior_W, params.behavior_b))


# -- loss --------------------------------------------------------------------


def sample_negatives(
    positives: np.ndarray, item_count: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform ids excluding each row's positive, without replacement per row."""
    if item_count <= 1:
        raise ValueError("cannot sample negatives from a catalog of size <= 1")
    if count > item_count - 1:
        raise ValueError(f"cannot draw {count} distinct negatives from {item_count - 1} candidates")
    out = np.empty((positives.shape[0], count), dtype=np.int64)
    for r, pos in enumerate(positives):
        draw = rng.choice(item_count - 1, size=count, replace=False)
        out[r] = draw + (draw >= pos)
    return out


def compute_loss(
    output: ForwardOutput,
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    negative_count: int,
    rng: np.random.Generator,
) -> tuple[Tensor, dict[str, float]]:
    """Sampled-softmax CE for items + full CE for behaviors, averaged over targets."""
    flat_mask = batch.target_mask.reshape(-1)
    pos_idx = np.flatnonzero(flat_mask)
    if pos_idx.size == 0:
        raise ValueError("batch has no valid target positions")
    b, w, d = output.hidden.shape
    hidden_rows = gather_rows(reshape(output.hidden, (b * w, d)), pos_idx)
    positives = batch.target_items.reshape(-1)[pos_idx]
    negatives = sample_negatives(positives, config.item_count, negative_count, rng)
    candidates = np.concatenate([positives[:, None], negatives], axis=1)
    cand_rows = gather_rows(params.tables.item, candidates)  # (n, 1+K, d)
    logits = reshape(
        matmul(reshape(hidden_rows, (pos_idx.size, 1, d)), swapaxes(cand_rows, -1, -2)),
        (pos_idx.size, 1 + negatives.shape[1]),
    )
    pos_logit = reshape(slice_(logits, (slice(None), slice(0, 1))), (pos_idx.size,))
    item_ce = mean_of(sub(logsumexp(logits, axis=-1), pos_logit))

    nb = config.behavior_count
    blogits = gather_rows(reshape(output.behavior_logits, (b * w, nb)), pos_idx)
    true_b = batch.target_behaviors.reshape(-1)[pos_idx]
    true_logit = take_flat(blogits, np.arange(pos_idx.size) * nb + true_b)
    behavior_ce = mean_of(sub(logsumexp(blogits, axis=-1), true_logit))

    loss = add(item_ce, mul(behavior_ce, config.behavior_loss_weight))
    parts = {
        "item_ce": float(item_ce.data),
        "behavior_ce": float(behavior_ce.data),
        "targets": float(pos_idx.size),
    }
    return loss, parts


def mean_of(x: Tensor) -> Tensor:
    return mul(sum_(x), 1.0 / x.size)


# -- inference -----------------------------------------------------------------


def last_valid_rows(states: Tensor, valid_mask: np.ndarray) -> Tensor:
    """Rows at each sequence's most recent real position, shape (batch, d)."""
    b, w, d = states.shape
    if not valid_mask.any(axis=-1).all():
        raise ValueError("every row needs at least one real position")
    last = w - 1 - np.argmax(valid_mask[:, ::-1], axis=-1)
    flat = np.arange(b) * w + last
    return gather_rows(reshape(states, (b * w, d)), flat)


def score_all_items(hidden_rows: Tensor, tables: EmbeddingTables) -> Tensor:
    """Weight-tied catalog scores: hidden @ item_table^T, shape (batch, |V|)."""
    return matmul(hidden_rows, swapaxes(tables.item, 0, 1))


def rank_by_score(scores: np.ndarray) -> np.ndarray:
    """Item ids sorted by descending score; exact ties broken by ascending id."""
    ids = np.arange(scores.shape[-1])
    return np.lexsort((ids, -scores))


def predict_next(
    interactions: tuple[Interaction, ...] | list[Interaction],
    params: ModelParams,
    config: ModelConfig,
    schema: BehaviorSchema,
    top_k: int,
) -> tuple[list[tuple[int, float]], np.ndarray]:
    """Top-k (item, score) for the next step plus the behavior distribution."""
    if len(interactions) == 0:
        raise ValueError("cannot predict from an empty sequence")
    kept = tuple(interactions)[-config.L :]
    items, behaviors, categories, timestamps, valid = sequence_to_arrays(kept, config.L)
    zeros = np.zeros((1, config.L), dtype=np.int64)
    batch = Batch(
        users=(kept[0].user,),
        items=items[None],
        behaviors=behaviors[None],
        categories=categories[None],
        timestamps=timestamps[None],
        valid_mask=valid[None],
        target_items=zeros,
        target_behaviors=zeros.copy(),
        target_mask=np.zeros((1, config.L), dtype=bool),
    )
    with no_grad():
        out = forward(batch, params, config, schema, train=False)
        hidden = last_valid_rows(out.hidden, batch.valid_mask)
        scores = score_all_items(hidden, params.tables).data[0]
        blog = last_valid_rows(out.behavior_logits, batch.valid_mask).data[0]
    order = rank_by_score(scores)[:top_k]
    shifted = np.exp(blog - blog.max())
    return [(int(i), float(scores[i])) for i in order], shifted / shifted.sum()
