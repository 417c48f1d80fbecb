"""Interaction log ingestion, splits, batching, and synthetic funnel data.

File formats
------------
Interactions: UTF-8 TSV with columns
    user_id  item_id  category_id  behavior_name  timestamp_seconds
Lines starting with '#' are skipped.

Catalog: TSV with columns  item_id  category_id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .schema import (
    BehaviorSchema,
    Catalog,
    Interaction,
    UserSequence,
    default_ecommerce_schema,
)


class ParseError(ValueError):
    """Malformed input row; message names the file line."""


@dataclass(frozen=True)
class SplitSpec:
    """Leave-one-out: last interaction tests, second-to-last validates."""

    min_length: int = 3

    def __post_init__(self):
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")


@dataclass(frozen=True)
class EvalTarget:
    """A held-out interaction plus the history prefix that predicts it."""

    user: str
    history: tuple[Interaction, ...]
    target: Interaction


@dataclass(frozen=True)
class SplitViews:
    train: tuple[UserSequence, ...]
    val: tuple[EvalTarget, ...]
    test: tuple[EvalTarget, ...]


@dataclass
class Batch:
    """Left-padded fixed-width id matrices; shapes all (batch, L).

    ``valid_mask`` is False at pad slots; padded positions are excluded
    from attention and loss.  ``target_mask`` marks positions whose
    next-step (item, behavior) pair is observable inside the window.
    """

    users: tuple[str, ...]
    items: np.ndarray
    behaviors: np.ndarray
    categories: np.ndarray
    timestamps: np.ndarray
    valid_mask: np.ndarray
    target_items: np.ndarray
    target_behaviors: np.ndarray
    target_mask: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.items.shape[0]

    @property
    def width(self) -> int:
        return self.items.shape[1]


@dataclass(frozen=True)
class SyntheticConfig:
    user_count: int = 1000
    item_count: int = 200
    category_count: int = 10
    mean_sequence_length: float = 12.0
    conversion_probability: float = 0.8
    conversion_window: int = 5
    mean_inter_event_gap: float = 3600.0
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.user_count, self.item_count, self.category_count) < 1:
            raise ValueError("counts must be >= 1")
        if not (0.0 <= self.conversion_probability <= 1.0):
            raise ValueError("conversion_probability must be in [0, 1]")


# -- loading --------------------------------------------------------------------


def load_catalog(path) -> Catalog:
    pairs: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 tab-separated fields, got {len(fields)}")
            try:
                item, cat = int(fields[0]), int(fields[1])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            if item < 0 or cat < 0:
                raise ParseError(f"{path}:{lineno}: negative id")
            pairs[item] = cat
    if not pairs:
        raise ParseError(f"{path}: empty catalog")
    item_count = max(pairs) + 1
    return Catalog(item_count, tuple(pairs.get(i, 0) for i in range(item_count)))


def load_interactions(path, schema: BehaviorSchema, catalog_path) -> tuple[Catalog, list[UserSequence]]:
    """Parse the interaction log into per-user, time-sorted sequences."""
    catalog = load_catalog(catalog_path)
    name_to_id = {b.name: b.id for b in schema.behaviors}
    per_user: dict[str, list[Interaction]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
            user, item_s, cat_s, bname, ts_s = fields
            try:
                item, cat, ts = int(item_s), int(cat_s), int(ts_s)
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
            if bname not in name_to_id:
                raise ParseError(
                    f"{path}:{lineno}: unknown behavior name {bname!r} "
                    f"(schema has {[b.name for b in schema.behaviors]})"
                )
            if item >= catalog.item_count:
                raise ParseError(f"{path}:{lineno}: item {item} not in catalog")
            per_user.setdefault(user, []).append(Interaction(user, item, cat, name_to_id[bname], ts))
    sequences = [UserSequence.from_unsorted(u, its) for u, its in per_user.items()]
    return catalog, sequences


def save_interactions(path, sequences: list[UserSequence], schema: BehaviorSchema) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# user_id\titem_id\tcategory_id\tbehavior_name\ttimestamp_seconds\n")
        for seq in sequences:
            for it in seq.interactions:
                fh.write(f"{it.user}\t{it.item}\t{it.category}\t{schema.name_of(it.behavior)}\t{it.timestamp}\n")


def save_catalog(path, catalog: Catalog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# item_id\tcategory_id\n")
        for item, cat in enumerate(catalog.category_of):
            fh.write(f"{item}\t{cat}\n")


# -- splitting --------------------------------------------------------------------


def make_splits(sequences: list[UserSequence], spec: SplitSpec) -> SplitViews:
    """Leave-one-out per user; short users contribute to training only."""
    train: list[UserSequence] = []
    val: list[EvalTarget] = []
    test: list[EvalTarget] = []
    for seq in sequences:
        n = len(seq)
        if n >= spec.min_length and n >= 3:
            its = seq.interactions
            train.append(UserSequence(seq.user, its[: n - 2]))
            val.append(EvalTarget(seq.user, its[: n - 2], its[n - 2]))
            test.append(EvalTarget(seq.user, its[: n - 1], its[n - 1]))
        elif n > 0:
            train.append(seq)
    return SplitViews(tuple(train), tuple(val), tuple(test))


# -- batching ---------------------------------------------------------------------


def sequence_to_arrays(interactions: tuple[Interaction, ...], L: int):
    """Left-pad / truncate one sequence to width L; returns id rows + masks."""
    kept = interactions[-L:]
    n = len(kept)
    pad = L - n
    items = np.zeros(L, dtype=np.int64)
    behaviors = np.zeros(L, dtype=np.int64)
    categories = np.zeros(L, dtype=np.int64)
    timestamps = np.zeros(L, dtype=np.int64)
    valid = np.zeros(L, dtype=bool)
    for k, it in enumerate(kept):
        items[pad + k] = it.item
        behaviors[pad + k] = it.behavior
        categories[pad + k] = it.category
        timestamps[pad + k] = it.timestamp
        valid[pad + k] = True
    return items, behaviors, categories, timestamps, valid


def batch_sequences(
    sequences: list[UserSequence] | tuple[UserSequence, ...],
    L: int,
    batch_size: int,
) -> Iterator[Batch]:
    """Stream fixed-width batches; targets are the next kept interaction."""
    if L < 1:
        raise ValueError("L must be >= 1")
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start : start + batch_size]
        b = len(chunk)
        items = np.zeros((b, L), dtype=np.int64)
        behaviors = np.zeros((b, L), dtype=np.int64)
        categories = np.zeros((b, L), dtype=np.int64)
        timestamps = np.zeros((b, L), dtype=np.int64)
        valid = np.zeros((b, L), dtype=bool)
        for r, seq in enumerate(chunk):
            items[r], behaviors[r], categories[r], timestamps[r], valid[r] = sequence_to_arrays(
                seq.interactions, L
            )
        target_items = np.zeros((b, L), dtype=np.int64)
        target_behaviors = np.zeros((b, L), dtype=np.int64)
        target_mask = np.zeros((b, L), dtype=bool)
        # Position t predicts position t+1; the final column has no target.
        target_items[:, :-1] = items[:, 1:]
        target_behaviors[:, :-1] = behaviors[:, 1:]
        target_mask[:, :-1] = valid[:, :-1] & valid[:, 1:]
        yield Batch(
            users=tuple(s.user for s in chunk),
            items=items,
            behaviors=behaviors,
            categories=categories,
            timestamps=timestamps,
            valid_mask=valid,
            target_items=target_items,
            target_behaviors=target_behaviors,
            target_mask=target_mask,
        )


def history_batch(targets: list[EvalTarget] | tuple[EvalTarget, ...], L: int) -> Batch:
    """Batch the history prefixes of held-out targets (no training targets)."""
    b = len(targets)
    items = np.zeros((b, L), dtype=np.int64)
    behaviors = np.zeros((b, L), dtype=np.int64)
    categories = np.zeros((b, L), dtype=np.int64)
    timestamps = np.zeros((b, L), dtype=np.int64)
    valid = np.zeros((b, L), dtype=bool)
    for r, tgt in enumerate(targets):
        items[r], behaviors[r], categories[r], timestamps[r], valid[r] = sequence_to_arrays(
            tgt.history, L
        )
    zeros = np.zeros((b, L), dtype=np.int64)
    return Batch(
        users=tuple(t.user for t in targets),
        items=items,
        behaviors=behaviors,
        categories=categories,
        timestamps=timestamps,
        valid_mask=valid,
        target_items=zeros,
        target_behaviors=zeros.copy(),
        target_mask=np.zeros((b, L), dtype=bool),
    )


# -- synthetic funnel data ------------------------------------------------------------


def generate_synthetic(config: SyntheticConfig) -> tuple[Catalog, list[UserSequence]]:
    """Deterministic funnel-shaped corpus under the default 4-behavior schema.

    Planted structure: a cart of item v converts into a later purchase of v
    (within ``conversion_window`` steps) with probability
    ``conversion_probability``.  The conversion coin is flipped *before*
    emitting the cart, so at probability 1 every cart is followed by its
    purchase, and at probability 0 no purchase events exist at all.
    """
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    schema = default_ecommerce_schema()
    view, click = schema.id_of("view"), schema.id_of("click")
    cart, purchase = schema.id_of("cart"), schema.id_of("purchase")
    n_items, n_cats = config.item_count, config.category_count
    category_of = tuple(i % n_cats for i in range(n_items))

    def sample_item(pref_cat: int) -> int:
        if rng.random() < 0.8:
            per_cat = (n_items - 1 - pref_cat) // n_cats + 1
            return pref_cat + n_cats * int(rng.integers(per_cat))
        return int(rng.integers(n_items))

    sequences: list[UserSequence] = []
    for u in range(config.user_count):
        user = f"u{u}"
        n = max(2, int(rng.poisson(config.mean_sequence_length)))
        pref_cat = int(rng.integers(n_cats))
        scheduled: dict[int, int] = {}
        recent: list[int] = []
        ts = 1_600_000_000
        events: list[Interaction] = []
        for step in range(n):
            ts += max(1, int(round(rng.exponential(config.mean_inter_event_gap))))
            if step in scheduled:
                item = scheduled.pop(step)
                beh = purchase
            elif rng.random() < 0.15:
                # Candidate cart; flip the conversion coin first.
                item = recent[-1] if (recent and rng.random() < 0.8) else sample_item(pref_cat)
                if rng.random() < config.conversion_probability:
                    last = min(step + config.conversion_window, n - 1)
                    free = [s for s in range(step + 1, last + 1) if s not in scheduled]
                    if free:
                        scheduled[free[int(rng.integers(len(free)))]] = item
                        beh = cart
                    else:
                        beh = click  # no room to convert: demote to a click
                else:
                    beh = cart
            else:
                item = sample_item(pref_cat)
                beh = view if rng.random() < 0.5 else click
                recent.append(item)
                if len(recent) > 5:
                    recent.pop(0)
            events.append(Interaction(user, item, category_of[item], beh, ts))
        sequences.append(UserSequence(user, tuple(events)))
    return Catalog(n_items, category_of), sequences


def conversion_stats(
    sequences: list[UserSequence], schema: BehaviorSchema, window: int
) -> tuple[int, int]:
    """(carts, carts followed by a same-item purchase within the window)."""
    cart = schema.id_of("cart")
    purchase = schema.id_of("purchase")
    carts = converted = 0
    for seq in sequences:
        its = seq.interactions
        for k, it in enumerate(its):
            if it.behavior != cart:
                continue
            carts += 1
            tail = its[k + 1 : k + 1 + window]
            if any(t.behavior == purchase and t.item == it.item for t in tail):
                converted += 1
    return carts, converted
