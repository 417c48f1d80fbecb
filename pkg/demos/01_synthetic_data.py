"""
Synthetic multi-behavior data with a planted purchase funnel
============================================================

Builds a small corpus where a cart of item v converts into a later
purchase of the same item with known probability, writes it to the
tab-separated interchange format, reads it back, and splits it for
leave-one-out evaluation.
"""

import os
import tempfile

from bitrec.dataio import (
    SplitSpec,
    SyntheticConfig,
    conversion_stats,
    generate_synthetic,
    load_interactions,
    make_splits,
    save_catalog,
    save_interactions,
)
from bitrec.schema import default_ecommerce_schema, validate_schema

schema = default_ecommerce_schema()
print("behaviors:", ", ".join(
    f"{b.name} ({'commitment' if schema.intensity_of(b.id) else 'exploration'})"
    for b in schema.behaviors))

# The generator flips the conversion coin *before* emitting a cart, so the
# empirical conversion rate tracks the configured probability closely.
config = SyntheticConfig(user_count=500, item_count=100, category_count=8,
                         conversion_probability=0.75, rng_seed=42)
catalog, sequences = generate_synthetic(config)
events = sum(len(s) for s in sequences)
print(f"\ngenerated {len(sequences)} users, {events} interactions, "
      f"{catalog.item_count} items")

carts, converted = conversion_stats(sequences, schema, config.conversion_window)
print(f"carts {carts}, converted within {config.conversion_window} steps: "
      f"{converted} (rate {converted / carts:.3f}, configured "
      f"{config.conversion_probability})")

# Round-trip through the on-disk format: two TSV files, one for the
# interaction log and one for the item -> category catalog.
workdir = tempfile.mkdtemp(prefix="bitrec-demo-")
inter_path = os.path.join(workdir, "interactions.tsv")
cat_path = os.path.join(workdir, "catalog.tsv")
save_interactions(inter_path, sequences, schema)
save_catalog(cat_path, catalog)
catalog2, sequences2 = load_interactions(inter_path, schema, cat_path)
assert sequences2 == sequences and catalog2 == catalog
print(f"\nround trip through {workdir}: exact")

problems = validate_schema(schema, catalog, sequences)
print(f"schema validation: {len(problems)} violations")

# Leave-one-out: last event is the test target, second-to-last validation,
# everything earlier trains.  Users too short to split train only.
views = make_splits(sequences, SplitSpec(min_length=3))
print(f"\nsplits: {len(views.train)} training sequences, "
      f"{len(views.val)} validation targets, {len(views.test)} test targets")
sample = views.test[0]
print(f"example test target: user {sample.user!r} must get item "
      f"{sample.target.item} ({schema.name_of(sample.target.behavior)}) "
      f"after {len(sample.history)} observed events")
