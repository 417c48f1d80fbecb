"""
Anatomy of the two attention-bias channels
==========================================

Walks one hand-built shopping funnel through the intensity-stratified
aggregation channel and the transition-relation channel, printing the
stratum masks, fusion gates, and the per-pair bias matrices that get
added to attention scores.
"""

import numpy as np

from bitrec.dataio import batch_sequences
from bitrec.embedding import embed_sequence, init_embeddings
from bitrec.hba import build_intensity_masks, init_hba, run_hba
from bitrec.numerics import ParameterStore, gather_rows
from bitrec.schema import Interaction, UserSequence, default_ecommerce_schema
from bitrec.tre import init_tre, run_tre, temporal_features

np.set_printoptions(precision=3, suppress=True, linewidth=120)

# One user browses item 3, compares item 5, then converts on item 3 a day
# after carting it.  Behaviors with intensity 0 are exploration signals,
# intensity 1 means commitment.
schema = default_ecommerce_schema()
HOUR = 3600
events = [
    ("view", 3, 1, 0),
    ("view", 5, 1, 1 * HOUR),
    ("click", 3, 1, 2 * HOUR),
    ("cart", 3, 1, 3 * HOUR),
    ("view", 7, 2, 4 * HOUR),
    ("purchase", 3, 1, 27 * HOUR),
]
seq = UserSequence("u0", tuple(
    Interaction("u0", item, cat, schema.id_of(name), ts)
    for name, item, cat, ts in events))
L = len(events)
batch = next(iter(batch_sequences([seq], L=L, batch_size=1)))

names = [schema.name_of(b) for b in batch.behaviors[0]]
print("sequence: " + "  ".join(
    f"{n}(item {i})" for n, i in zip(names, batch.items[0])))
print("intensity: " + "  ".join(
    str(schema.intensity_of(b)) for b in batch.behaviors[0]))

# --- Stratified channels -------------------------------------------------
# Each query position runs two masked attentions: one over the exploration
# stratum, one over the commitment stratum, both restricted to the causal
# past.  A blocked pair shows as "." below.
m_low, m_high = build_intensity_masks(batch.behaviors, batch.valid_mask, schema)
for label, mask in (("exploration keys", m_low), ("commitment keys", m_high)):
    print(f"\n{label} (rows = queries, x = attendable):")
    for i in range(L):
        row = "".join("x" if np.isfinite(mask[0, i, j]) else "." for j in range(L))
        print(f"  {names[i]:<9s} {row}")

store = ParameterStore(dtype=np.float64)
rng = np.random.Generator(np.random.PCG64(0))
tables = init_embeddings(store, rng, item_count=10, behavior_count=4,
                         category_count=3, d=16, L=L, std=0.5)
hba = init_hba(store, rng, d=16, prefix="hba")
hba.mlp_b2.data[:] = 0.3  # nonzero offset so the printed map is not all ~0

H = embed_sequence(batch, tables)
out = run_hba(H, batch.behaviors, batch.valid_mask, schema, hba,
              gather_rows(tables.behavior, batch.behaviors),
              gather_rows(tables.item, batch.items))

# The gate decides, per position and coordinate, how much of the fused
# summary comes from the query's own stratum versus the opposite one.
print("\nmean fusion gate per position (1 = all own-stratum):")
for n, g in zip(names, out.gate.data[0].mean(axis=-1)):
    print(f"  {n:<9s} {g:.3f}")

print("\naggregation bias (zero above the diagonal by construction):")
print(out.bias.data[0])

# --- Transition-relation channel -----------------------------------------
# Three elapsed-time views of the 24h cart -> purchase gap, read for the
# purchase query (row 5) against every earlier event.
feats = temporal_features(batch.timestamps.astype(np.float64))
dt_hours = (batch.timestamps[0, -1] - batch.timestamps[0]) / HOUR
print("\npurchase-query temporal features [day-sigmoid, log1p, recency]:")
for j in range(L):
    print(f"  vs {names[j]:<9s} dt {dt_hours[j]:>4.0f}h  {feats[0, -1, j]}")

tre = init_tre(store, rng, d=16, behavior_count=4)
tre.alpha_qk.data[:] = 1.0
tre.alpha_rel.data[:] = 1.0

bias_flat = run_tre(batch, tables, schema, tre, L_norm=L)
print("\nrelation bias with a neutral transition matrix:")
print(bias_flat.data[0])

# Now teach the transition matrix that cart precedes purchase.  Only the
# (purchase row, cart column) entries should move.
tre.transition.data[schema.id_of("purchase"), schema.id_of("cart")] = 4.0
bias_tuned = run_tre(batch, tables, schema, tre, L_norm=L)
delta = bias_tuned.data[0] - bias_flat.data[0]
print("\nbias shift after boosting the cart->purchase transition entry:")
print(delta)
moved = {(i, j) for i, j in zip(*np.nonzero(np.abs(delta) > 1e-12))}
assert moved == {(5, 3)}, moved
print("only the purchase-query/cart-key pair moved, as intended")
