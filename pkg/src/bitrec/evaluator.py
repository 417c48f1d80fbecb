"""Full-catalog ranking metrics, ablation runner, behavior-masking study.

Every held-out target is ranked against the complete catalog (no sampled
candidate sets).  Ties are resolved pessimistically: an item with the same
score and a lower id ranks ahead of the true item.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .dataio import EvalTarget, SplitSpec, history_batch, make_splits
from .model import (
    ModelConfig,
    ModelParams,
    forward,
    last_valid_rows,
    score_all_items,
)
from .numerics import no_grad
from .schema import BehaviorSchema, UserSequence

DEFAULT_CUTOFFS = (10, 50)

ABLATION_VARIANTS: dict[str, dict] = {
    "full": {},
    "no_hba": {"enable_hba": False},
    "no_intensity_split": {"intensity_mode": "none"},
    "purchase_only_high": {"intensity_mode": "purchase_only"},
    "no_tre": {"enable_tre": False},
    "no_behavior_transition": {"use_behavior_transition": False},
    "no_temporal": {"use_temporal": False},
    "no_item_consistency": {"use_item_consistency": False},
    "no_context_match": {"use_context_match": False},
}


@dataclass(frozen=True)
class MetricSlice:
    count: int
    hr: dict[int, float]
    ndcg: dict[int, float]
    mrr: float


@dataclass(frozen=True)
class EvalReport:
    user_count: int
    hr: dict[int, float]
    ndcg: dict[int, float]
    mrr: float
    per_behavior: dict[str, MetricSlice]

    def metric_items(self):
        """Flat (metric_name, value) pairs in a fixed order."""
        for k in sorted(self.hr):
            yield f"hr@{k}", self.hr[k]
        for k in sorted(self.ndcg):
            yield f"ndcg@{k}", self.ndcg[k]
        yield "mrr", self.mrr


def variant_config(base: ModelConfig, variant: str) -> ModelConfig:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(
            f"unknown variant {variant!r}; valid: {', '.join(sorted(ABLATION_VARIANTS))}"
        )
    return dataclasses.replace(base, **ABLATION_VARIANTS[variant])


# -- ranking --------------------------------------------------------------------


def rank_of_true(scores: np.ndarray, true_item: int) -> int:
    """1 + strictly-higher count + equal-score-lower-id count."""
    s = scores
    t = s[true_item]
    higher = int(np.sum(s > t))
    tied_ahead = int(np.sum((s == t) & (np.arange(s.shape[0]) < true_item)))
    return 1 + higher + tied_ahead


def rank_full_catalog(
    params: ModelParams,
    config: ModelConfig,
    schema: BehaviorSchema,
    targets: list[EvalTarget] | tuple[EvalTarget, ...],
    batch_size: int = 256,
) -> np.ndarray:
    """Catalog rank of each target's true item, aligned with ``targets``."""
    ranks = np.empty(len(targets), dtype=np.int64)
    with no_grad():
        for start in range(0, len(targets), batch_size):
            chunk = targets[start : start + batch_size]
            batch = history_batch(chunk, L=config.L)
            out = forward(batch, params, config, schema, train=False)
            scores = score_all_items(last_valid_rows(out.hidden, batch.valid_mask), params.tables).data
            for r, tgt in enumerate(chunk):
                ranks[start + r] = rank_of_true(scores[r], tgt.target.item)
    return ranks


# -- metrics --------------------------------------------------------------------


def _metrics_of(ranks: np.ndarray, cutoffs) -> tuple[dict[int, float], dict[int, float], float]:
    hr = {k: float(np.mean(ranks <= k)) for k in cutoffs}
    ndcg = {
        k: float(np.mean(np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0)))
        for k in cutoffs
    }
    mrr = float(np.mean(1.0 / ranks))
    return hr, ndcg, mrr


def compute_metrics(
    ranks: np.ndarray,
    cutoffs=DEFAULT_CUTOFFS,
    behaviors: np.ndarray | None = None,
    schema: BehaviorSchema | None = None,
) -> EvalReport:
    """Aggregate HR@K / NDCG@K / MRR, optionally sliced by target behavior."""
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("no ranks to aggregate")
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based")
    hr, ndcg, mrr = _metrics_of(ranks, cutoffs)
    per_behavior: dict[str, MetricSlice] = {}
    if behaviors is not None and schema is not None:
        for b in range(schema.num_behaviors):
            sel = ranks[behaviors == b]
            if sel.size == 0:
                continue
            bhr, bndcg, bmrr = _metrics_of(sel, cutoffs)
            per_behavior[schema.name_of(b)] = MetricSlice(int(sel.size), bhr, bndcg, bmrr)
    return EvalReport(int(ranks.size), hr, ndcg, mrr, per_behavior)


def evaluate(
    params: ModelParams,
    config: ModelConfig,
    schema: BehaviorSchema,
    targets: list[EvalTarget] | tuple[EvalTarget, ...],
    cutoffs=DEFAULT_CUTOFFS,
    batch_size: int = 256,
) -> EvalReport:
    ranks = rank_full_catalog(params, config, schema, targets, batch_size=batch_size)
    behaviors = np.array([t.target.behavior for t in targets], dtype=np.int64)
    return compute_metrics(ranks, cutoffs, behaviors, schema)


# -- report files ------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    variant: str
    mask: str
    seed: int
    report: EvalReport


def format_table(rows: list[ReportRow]) -> str:
    """Human-readable TSV: one line per (variant, mask, seed)."""
    if not rows:
        return ""
    metric_names = [name for name, _ in rows[0].report.metric_items()]
    lines = ["\t".join(["variant", "mask", "seed", "users"] + metric_names)]
    for row in rows:
        values = [f"{v:.6f}" for _, v in row.report.metric_items()]
        lines.append(
            "\t".join([row.variant, row.mask or "-", str(row.seed), str(row.report.user_count)] + values)
        )
    return "\n".join(lines) + "\n"


def format_records(rows: list[ReportRow]) -> str:
    """Line-delimited records: variant, mask, metric, value (one per cell)."""
    out = []
    for row in rows:
        for name, value in row.report.metric_items():
            out.append(f"{row.variant}\t{row.mask or '-'}\t{name}\t{value:.6f}")
        for bname, ms in sorted(row.report.per_behavior.items()):
            out.append(f"{row.variant}\t{row.mask or '-'}\tmrr[{bname}]\t{ms.mrr:.6f}")
    return "\n".join(out) + ("\n" if out else "")


def write_reports(rows: list[ReportRow], out_dir, stem: str) -> tuple[str, str]:
    import os

    os.makedirs(out_dir, exist_ok=True)
    table_path = os.path.join(out_dir, f"{stem}.tsv")
    records_path = os.path.join(out_dir, f"{stem}.records")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(format_table(rows))
    with open(records_path, "w", encoding="utf-8") as fh:
        fh.write(format_records(rows))
    return table_path, records_path


# -- studies --------------------------------------------------------------------


def run_ablation(
    variants: list[str],
    train_seqs,
    val_targets,
    test_targets,
    schema: BehaviorSchema,
    model_config: ModelConfig,
    train_config,
    seeds=(0,),
    cutoffs=DEFAULT_CUTOFFS,
    progress=None,
) -> list[ReportRow]:
    """Train every (variant, seed) pair from scratch and evaluate on test."""
    from .trainer import train  # runtime import: trainer depends on this module

    for v in variants:
        variant_config(model_config, v)  # validate names before any training
    rows: list[ReportRow] = []
    for variant in variants:
        cfg = variant_config(model_config, variant)
        for seed in seeds:
            tcfg = dataclasses.replace(train_config, rng_seed=seed)
            started = time.time()
            result = train(train_seqs, schema, cfg, tcfg, val_targets=val_targets)
            params = result.best_params or result.params
            report = evaluate(params, cfg, schema, test_targets, cutoffs=cutoffs)
            rows.append(ReportRow(variant, "", seed, report))
            if progress is not None:
                progress(variant, seed, report, time.time() - started)
    return rows


def mask_behavior(sequences, behavior_id: int) -> list[UserSequence]:
    """Drop every interaction with the given behavior; empty users vanish."""
    out = []
    for seq in sequences:
        kept = tuple(i for i in seq.interactions if i.behavior != behavior_id)
        if kept:
            out.append(UserSequence(seq.user, kept))
    return out


def behavior_masking_eval(
    masks: list[str],
    sequences,
    schema: BehaviorSchema,
    model_config: ModelConfig,
    train_config,
    split_spec: SplitSpec = SplitSpec(),
    cutoffs=DEFAULT_CUTOFFS,
    progress=None,
) -> list[ReportRow]:
    """Train with one behavior removed, test on complete sequences.

    The training and validation splits come from the masked corpus; test
    targets always come from the complete corpus, so the model faces
    behaviors at evaluation it never saw while training.  The mask name
    "none" trains on the full corpus (the comparison baseline).
    """
    from .trainer import train

    complete = make_splits(sequences, split_spec)
    rows: list[ReportRow] = []
    for mask in masks:
        if mask == "none":
            masked_seqs = list(sequences)
        else:
            bid = schema.id_of(mask)
            masked_seqs = mask_behavior(sequences, bid)
            assert all(
                i.behavior != bid for s in masked_seqs for i in s.interactions
            ), "mask filter left masked-behavior interactions behind"
        masked_views = make_splits(masked_seqs, split_spec)
        if not masked_views.train:
            raise ValueError(f"masking {mask!r} empties the training corpus")
        started = time.time()
        result = train(
            masked_views.train, schema, model_config, train_config, val_targets=masked_views.val
        )
        params = result.best_params or result.params
        report = evaluate(params, model_config, schema, complete.test, cutoffs=cutoffs)
        rows.append(ReportRow("full", mask, train_config.rng_seed, report))
        if progress is not None:
            progress("full", mask, report, time.time() - started)
    return rows
