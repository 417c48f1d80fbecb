"""Shared fixtures: hand-built batches with controllable left padding."""

import numpy as np

from bitrec.dataio import Batch


def make_batch(items, behaviors, timestamps=None, categories=None, width=None):
    items = np.asarray(items)
    b, n = items.shape
    width = width or n
    pad = width - n

    def pad_left(a, fill=0):
        out = np.full((b, width), fill, dtype=np.int64)
        out[:, pad:] = a
        return out

    valid = np.zeros((b, width), dtype=bool)
    valid[:, pad:] = True
    if categories is None:
        categories = items % 3
    if timestamps is None:
        timestamps = np.arange(1, n + 1)[None, :].repeat(b, axis=0) * 3600
    zeros = np.zeros((b, width), dtype=np.int64)
    return Batch(
        users=tuple(f"u{r}" for r in range(b)),
        items=pad_left(items),
        behaviors=pad_left(np.asarray(behaviors)),
        categories=pad_left(np.asarray(categories)),
        timestamps=pad_left(np.asarray(timestamps)),
        valid_mask=valid,
        target_items=zeros,
        target_behaviors=zeros.copy(),
        target_mask=np.zeros((b, width), dtype=bool),
    )


def batch_with_targets(items, behaviors, **kw):
    """make_batch plus next-step targets, mirroring the training batcher."""
    batch = make_batch(items, behaviors, **kw)
    batch.target_items[:, :-1] = batch.items[:, 1:]
    batch.target_behaviors[:, :-1] = batch.behaviors[:, 1:]
    batch.target_mask[:, :-1] = batch.valid_mask[:, :-1] & batch.valid_mask[:, 1:]
    return batch
