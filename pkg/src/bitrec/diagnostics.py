"""Self-contained numerical health checks runnable from the command line."""

from __future__ import annotations

import numpy as np

from .dataio import SyntheticConfig, batch_sequences, generate_synthetic
from .model import ModelConfig, compute_loss, forward, init_parameters
from .numerics import grad_check, sample_coords
from .schema import default_ecommerce_schema

TINY_CHECK_CONFIG = ModelConfig(
    item_count=20,
    behavior_count=4,
    category_count=4,
    d=16,
    heads=2,
    layers=1,
    L=8,
    dropout=0.0,
)


def full_model_grad_check(
    config: ModelConfig = TINY_CHECK_CONFIG,
    seed: int = 0,
    coord_count: int = 200,
    h: float = 1e-5,
    negatives: int = 8,
) -> tuple[float, int]:
    """Finite-difference check of the whole model in float64.

    Returns (worst mixed relative error, coordinate count).  The bias gates
    are opened (beta, gamma, transition matrix nonzero) so the aggregation
    and transition branches carry real gradient; at their zero inits those
    parameters would receive exactly zero gradient and the check would pass
    vacuously.
    """
    rng = np.random.default_rng(seed)
    schema = default_ecommerce_schema()
    params = init_parameters(config, rng, dtype=np.float64)
    store = params.store
    for i in range(config.layers):
        store[f"integrate.layer{i}.beta"].data[...] = 0.4
        store[f"integrate.layer{i}.gamma"].data[...] = 0.3
    store["tre.transition"].data[...] = rng.normal(0.0, 0.3, size=store["tre.transition"].shape)

    _, seqs = generate_synthetic(SyntheticConfig(
        user_count=6,
        item_count=config.item_count,
        category_count=config.category_count,
        mean_sequence_length=float(config.L),
        rng_seed=seed + 1,
    ))
    batch = next(batch_sequences(seqs, config.L, batch_size=4))

    def loss_fn():
        out = forward(batch, params, config, schema, train=False)
        neg_rng = np.random.default_rng(29)
        loss, _ = compute_loss(out, batch, params, config, negatives, neg_rng)
        return loss

    coords = sample_coords(store, coord_count, rng)
    worst = grad_check(loss_fn, store, coords, h=h)
    return worst, len(coords)
