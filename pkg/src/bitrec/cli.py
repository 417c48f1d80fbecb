"""Command-line entry point.

Subcommands: train, eval, ablate, mask-eval, gen-synthetic, grad-check,
predict.  Every run prints its fully resolved configuration first; feeding
that text back via --config reproduces the run.  Options beyond the common
flags are dotted config keys, e.g. ``--model.d 32`` or ``--model.d=32``.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import KNOWN_KEYS, ConfigError, RunConfig, resolve_config
from .dataio import (
    ParseError,
    conversion_stats,
    generate_synthetic,
    load_interactions,
    make_splits,
    save_catalog,
    save_interactions,
)
from .diagnostics import full_model_grad_check
from .evaluator import (
    ReportRow,
    behavior_masking_eval,
    evaluate,
    format_table,
    run_ablation,
    write_reports,
)
from .model import predict_next
from .schema import default_ecommerce_schema, validate_schema
from .trainer import CheckpointError, load_params, save_checkpoint, train

GRAD_CHECK_THRESHOLD = 1e-5

_COMMON_FLAGS = ("config", "seed", "out", "dataset", "catalog", "checkpoint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitrec",
        description="Multi-behavior sequential recommender toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "train": "fit a model, save a checkpoint, report test metrics",
        "eval": "load a checkpoint and compute full-catalog metrics",
        "ablate": "train and evaluate component-removal variants",
        "mask-eval": "train with one behavior masked, test on complete data",
        "gen-synthetic": "write a deterministic synthetic dataset",
        "grad-check": "finite-difference check of the full model gradient",
        "predict": "top-K next-item scores for one user history",
    }
    for name, help_text in commands.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, metavar="PATH")
        sp.add_argument("--seed", default=None, metavar="N")
        sp.add_argument("--out", default=None, metavar="DIR")
        sp.add_argument("--dataset", default=None, metavar="PATH")
        sp.add_argument("--catalog", default=None, metavar="PATH")
        sp.add_argument("--checkpoint", default=None, metavar="PATH")
    return parser


def parse_overrides(rest: list[str]) -> dict[str, str]:
    """Leftover ``--dotted.key value`` / ``--dotted.key=value`` tokens."""
    out: dict[str, str] = {}
    i = 0
    while i < len(rest):
        token = rest[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            key, _, value = body.partition("=")
            i += 1
        else:
            key = body
            if i + 1 >= len(rest):
                raise ConfigError(f"option --{key} needs a value")
            value = rest[i + 1]
            i += 2
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
    return out


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        if not cfg[key]:
            raise ConfigError(f"missing required option {key!r} (pass --{key})")


def _load_corpus(cfg: RunConfig):
    schema = default_ecommerce_schema()
    catalog, seqs = load_interactions(cfg["dataset"], schema, cfg["catalog"])
    violations = validate_schema(schema, catalog, seqs)
    if violations:
        head = "; ".join(f"{v.kind}: {v.detail}" for v in violations[:3])
        raise ParseError(f"{len(violations)} schema violations, first: {head}")
    model_config = cfg.model_config(
        catalog.item_count, schema.num_behaviors, max(1, catalog.category_count))
    return schema, catalog, seqs, model_config


def _print_report(rows: list[ReportRow]) -> None:
    print(format_table(rows), end="")


def cmd_train(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "catalog", "out")
    schema, _, seqs, model_config = _load_corpus(cfg)
    views = make_splits(seqs, cfg.split_spec())
    if not views.train:
        raise ConfigError("dataset yields no training sequences")

    def log_fn(stats):
        val = "-" if stats.val_mrr is None else f"{stats.val_mrr:.4f}"
        print(f"epoch {stats.epoch}: loss {stats.train_loss:.4f}"
              f" val_mrr {val} ({stats.seconds:.1f}s)")

    result = train(views.train, schema, model_config, cfg.train_config(),
                   val_targets=views.val, log_fn=log_fn)
    params = result.best_params or result.params
    os.makedirs(cfg["out"], exist_ok=True)
    ckpt_path = os.path.join(cfg["out"], "model.ckpt")
    save_checkpoint(params.store, ckpt_path)
    print(f"checkpoint: {ckpt_path}")
    if views.test:
        report = evaluate(params, model_config, schema, views.test,
                          cutoffs=cfg["eval.cutoffs"], batch_size=cfg["eval.batch_size"])
        rows = [ReportRow("full", "", cfg["seed"], report)]
        write_reports(rows, cfg["out"], "train_report")
        _print_report(rows)
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "catalog", "checkpoint")
    schema, _, seqs, model_config = _load_corpus(cfg)
    views = make_splits(seqs, cfg.split_spec())
    if not views.test:
        raise ConfigError("dataset yields no test targets")
    params = load_params(cfg["checkpoint"], model_config)
    report = evaluate(params, model_config, schema, views.test,
                      cutoffs=cfg["eval.cutoffs"], batch_size=cfg["eval.batch_size"])
    rows = [ReportRow("full", "", cfg["seed"], report)]
    if cfg["out"]:
        write_reports(rows, cfg["out"], "eval_report")
    _print_report(rows)
    return 0


def _progress_line(variant, tag, report, seconds):
    print(f"[{variant}{'/' + tag if tag else ''}] mrr {report.mrr:.4f} ({seconds:.1f}s)")


def cmd_ablate(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "catalog", "out")
    schema, _, seqs, model_config = _load_corpus(cfg)
    views = make_splits(seqs, cfg.split_spec())
    rows = run_ablation(
        list(cfg["ablation.variants"]), views.train, views.val, views.test,
        schema, model_config, cfg.train_config(),
        seeds=cfg["ablation.seeds"], cutoffs=cfg["eval.cutoffs"],
        progress=lambda v, s, r, t: _progress_line(v, f"seed{s}", r, t),
    )
    write_reports(rows, cfg["out"], "ablation")
    _print_report(rows)
    return 0


def cmd_mask_eval(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "catalog", "out")
    schema, _, seqs, model_config = _load_corpus(cfg)
    rows = behavior_masking_eval(
        list(cfg["mask.behaviors"]), seqs, schema, model_config, cfg.train_config(),
        split_spec=cfg.split_spec(), cutoffs=cfg["eval.cutoffs"],
        progress=lambda v, m, r, t: _progress_line(v, m, r, t),
    )
    write_reports(rows, cfg["out"], "mask_eval")
    _print_report(rows)
    return 0


def cmd_gen_synthetic(cfg: RunConfig) -> int:
    _require(cfg, "out")
    schema = default_ecommerce_schema()
    catalog, seqs = generate_synthetic(cfg.synthetic_config())
    os.makedirs(cfg["out"], exist_ok=True)
    interactions_path = os.path.join(cfg["out"], "interactions.tsv")
    catalog_path = os.path.join(cfg["out"], "catalog.tsv")
    save_interactions(interactions_path, seqs, schema)
    save_catalog(catalog_path, catalog)
    carts, converted = conversion_stats(seqs, schema, cfg["synth.window"])
    total = sum(len(s) for s in seqs)
    print(f"wrote {interactions_path} ({len(seqs)} users, {total} interactions)")
    print(f"wrote {catalog_path} ({catalog.item_count} items)")
    rate = converted / carts if carts else float("nan")
    print(f"carts {carts}, converted {converted} (rate {rate:.3f})")
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    worst, count = full_model_grad_check(seed=cfg["seed"])
    print(f"grad-check: {count} coordinates, max relative error {worst:.3e}"
          f" (threshold {GRAD_CHECK_THRESHOLD:.0e})")
    if worst < GRAD_CHECK_THRESHOLD:
        print("PASS")
        return 0
    print("FAIL")
    return 1


def cmd_predict(cfg: RunConfig) -> int:
    _require(cfg, "dataset", "catalog", "checkpoint")
    schema, _, seqs, model_config = _load_corpus(cfg)
    if len(seqs) != 1:
        raise ConfigError(f"predict expects one user in the file, found {len(seqs)}")
    params = load_params(cfg["checkpoint"], model_config)
    top, behavior_probs = predict_next(
        seqs[0].interactions, params, model_config, schema, cfg["predict.k"])
    print("item\tscore")
    for item, score in top:
        print(f"{item}\t{score:.6f}")
    print("behavior\tprobability")
    for b in range(schema.num_behaviors):
        print(f"{schema.name_of(b)}\t{float(behavior_probs[b]):.6f}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "mask-eval": cmd_mask_eval,
    "gen-synthetic": cmd_gen_synthetic,
    "grad-check": cmd_grad_check,
    "predict": cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(rest)
        for flag in _COMMON_FLAGS:
            if flag == "config":
                continue
            value = getattr(args, flag)
            if value is not None:
                overrides[flag] = value
        cfg = resolve_config(args.config, overrides)
        print("# resolved configuration")
        print(cfg.format(), end="")
        print(f"# command: {args.command}")
        return _COMMANDS[args.command](cfg)
    except (ConfigError, ParseError, CheckpointError, ValueError,
            OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cli_entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
