"""Flat dotted-key run configuration.

One schema of known keys covers model, training, splitting, studies and
paths.  Values can come from a plain-text file (``key = value`` lines,
``#`` comments) and from command-line overrides; precedence is command
line > file > built-in default.  Unknown keys fail loudly wherever they
appear.  ``RunConfig.format()`` prints every key materialized, and that
text parses back into an identical configuration.
"""

from __future__ import annotations

from .dataio import SplitSpec, SyntheticConfig
from .model import ModelConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Bad key, bad value, or unreadable config file."""


_M = ModelConfig(item_count=1, behavior_count=1, category_count=1)
_T = TrainConfig()
_S = SyntheticConfig()

# key -> (kind, default); kinds: int, float, bool, str, int_list, str_list
KNOWN_KEYS: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    "dataset": ("str", ""),
    "catalog": ("str", ""),
    "out": ("str", ""),
    "checkpoint": ("str", ""),
    "model.d": ("int", _M.d),
    "model.heads": ("int", _M.heads),
    "model.layers": ("int", _M.layers),
    "model.L": ("int", _M.L),
    "model.dropout": ("float", _M.dropout),
    "model.enable_hba": ("bool", _M.enable_hba),
    "model.enable_tre": ("bool", _M.enable_tre),
    "model.intensity_mode": ("str", _M.intensity_mode),
    "model.use_context_match": ("bool", _M.use_context_match),
    "model.use_item_consistency": ("bool", _M.use_item_consistency),
    "model.use_behavior_transition": ("bool", _M.use_behavior_transition),
    "model.use_temporal": ("bool", _M.use_temporal),
    "train.learning_rate": ("float", _T.learning_rate),
    "train.epochs": ("int", _T.epochs),
    "train.batch_size": ("int", _T.batch_size),
    "train.weight_decay": ("float", _T.weight_decay),
    "train.warmup_fraction": ("float", _T.warmup_fraction),
    "train.negatives": ("int", _T.negatives),
    "split.min_length": ("int", SplitSpec().min_length),
    "eval.cutoffs": ("int_list", (10, 50)),
    "eval.batch_size": ("int", 256),
    "ablation.variants": ("str_list", ("full", "no_hba", "no_tre")),
    "ablation.seeds": ("int_list", (0,)),
    "mask.behaviors": ("str_list", ("none", "click")),
    "synth.users": ("int", _S.user_count),
    "synth.items": ("int", _S.item_count),
    "synth.categories": ("int", _S.category_count),
    "synth.mean_length": ("float", _S.mean_sequence_length),
    "synth.p_convert": ("float", _S.conversion_probability),
    "synth.window": ("int", _S.conversion_window),
    "synth.gap_seconds": ("float", _S.mean_inter_event_gap),
    "predict.k": ("int", 10),
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def parse_value(key: str, raw: str):
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    kind, _ = KNOWN_KEYS[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "int_list":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if kind == "str_list":
            return tuple(part.strip() for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key!r} (expected {kind})") from None
    raise AssertionError(f"unhandled kind {kind}")


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_config_file(path) -> dict[str, str]:
    """Raw key -> value strings from a config file; unknown key -> error."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = raw.strip()
    return out


class RunConfig:
    """Fully materialized configuration (every known key has a value)."""

    def __init__(self, values: dict):
        unknown = set(values) - set(KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        self._values = {key: values.get(key, default) for key, (_, default) in KNOWN_KEYS.items()}

    def __getitem__(self, key: str):
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self._values == other._values

    def format(self) -> str:
        lines = [f"{key} = {format_value(self._values[key])}" for key in sorted(self._values)]
        return "\n".join(lines) + "\n"

    def model_config(self, item_count: int, behavior_count: int, category_count: int) -> ModelConfig:
        return ModelConfig(
            item_count=item_count,
            behavior_count=behavior_count,
            category_count=category_count,
            d=self["model.d"],
            heads=self["model.heads"],
            layers=self["model.layers"],
            L=self["model.L"],
            dropout=self["model.dropout"],
            enable_hba=self["model.enable_hba"],
            enable_tre=self["model.enable_tre"],
            intensity_mode=self["model.intensity_mode"],
            use_context_match=self["model.use_context_match"],
            use_item_consistency=self["model.use_item_consistency"],
            use_behavior_transition=self["model.use_behavior_transition"],
            use_temporal=self["model.use_temporal"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self["train.learning_rate"],
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            weight_decay=self["train.weight_decay"],
            warmup_fraction=self["train.warmup_fraction"],
            negatives=self["train.negatives"],
            rng_seed=self["seed"],
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(min_length=self["split.min_length"])

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(
            user_count=self["synth.users"],
            item_count=self["synth.items"],
            category_count=self["synth.categories"],
            mean_sequence_length=self["synth.mean_length"],
            conversion_probability=self["synth.p_convert"],
            conversion_window=self["synth.window"],
            mean_inter_event_gap=self["synth.gap_seconds"],
            rng_seed=self["seed"],
        )


def resolve_config(file_path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Materialize every key: command line > config file > default."""
    raw: dict[str, str] = {}
    if file_path:
        raw.update(read_config_file(file_path))
    if overrides:
        for key in overrides:
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
        raw.update(overrides)
    return RunConfig({key: parse_value(key, text) for key, text in raw.items()})
