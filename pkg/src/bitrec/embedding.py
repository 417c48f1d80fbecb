"""Token embedding: item + behavior + learned absolute position.

A token is the sum of its item row and behavior row, so one item carted
and the same item viewed share the item component and differ exactly by
the two behavior rows.  Category rows are narrower (d_c = ceil(d/4)) and
feed only the transition-context features, not the token itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Batch
from .numerics import ParameterStore, Tensor, add, gather_rows, mul, normal_init


def category_width(d: int) -> int:
    return -(-d // 4)


@dataclass
class EmbeddingTables:
    item: Tensor       # (|V|, d)
    behavior: Tensor   # (|B|, d)
    category: Tensor   # (|C|, d_c)
    position: Tensor   # (L, d)


def init_embeddings(
    store: ParameterStore,
    rng: np.random.Generator,
    item_count: int,
    behavior_count: int,
    category_count: int,
    d: int,
    L: int,
    std: float = 0.02,
) -> EmbeddingTables:
    return EmbeddingTables(
        item=store.add("embed.item", normal_init(rng, (item_count, d), std)),
        behavior=store.add("embed.behavior", normal_init(rng, (behavior_count, d), std)),
        category=store.add("embed.category", normal_init(rng, (category_count, category_width(d)), std)),
        position=store.add("embed.position", normal_init(rng, (L, d), std)),
    )


def position_ids(valid_mask: np.ndarray) -> np.ndarray:
    """0-based index of each real token within its row; pad slots read row 0.

    Anchoring on the real index (not the column) keeps embeddings identical
    when the same sequence is batched with more leading pad slots.
    """
    ids = np.cumsum(valid_mask, axis=-1) - 1
    return np.maximum(ids, 0)


def embed_sequence(batch: Batch, tables: EmbeddingTables) -> Tensor:
    """(batch, width, d) token states; padded positions are exactly zero."""
    width = batch.items.shape[1]
    if width > tables.position.shape[0]:
        raise ValueError(f"batch width {width} exceeds position table {tables.position.shape[0]}")
    if batch.items.max(initial=0) >= tables.item.shape[0]:
        raise IndexError("item id out of range")
    if batch.behaviors.max(initial=0) >= tables.behavior.shape[0]:
        raise IndexError("behavior id out of range")
    x = add(
        add(gather_rows(tables.item, batch.items), gather_rows(tables.behavior, batch.behaviors)),
        gather_rows(tables.position, position_ids(batch.valid_mask)),
    )
    keep = Tensor(batch.valid_mask[:, :, None].astype(tables.item.data.dtype))
    return mul(x, keep)
