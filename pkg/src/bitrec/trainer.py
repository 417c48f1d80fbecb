"""Training loop: adaptive moments, cosine schedule, checkpoints.

All randomness derives from one seed through named substreams (init,
batch_order, negatives, dropout), so toggling a model component never
shifts unrelated draws and reruns are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import EvalTarget, batch_sequences
from .evaluator import evaluate
from .model import ModelConfig, ModelParams, compute_loss, forward, init_parameters
from .numerics import ParameterStore
from .schema import BehaviorSchema

CHECKPOINT_MAGIC = b"BITR"
CHECKPOINT_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class CheckpointError(ValueError):
    """Base for unreadable or mismatched checkpoint files."""


class CheckpointFormatError(CheckpointError):
    """Magic bytes or structural fields are wrong."""


class CheckpointVersionError(CheckpointError):
    """File written by an incompatible format version."""


class CheckpointShapeError(CheckpointError):
    """Tensor names/shapes do not match the expected parameter set."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the manifest-declared payload."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    epochs: int = 10
    batch_size: int = 64
    weight_decay: float = 0.01
    warmup_fraction: float = 0.1
    negatives: int = 128
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must be in [0, 1)")
        if min(self.epochs, self.batch_size, self.negatives) < 1:
            raise ValueError("epochs, batch_size, negatives must be >= 1")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one purpose, stable across runs."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))


def lr_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear 0 -> peak over the warmup span, then cosine decay to 0."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = config.warmup_fraction * total_steps
    if step < warmup:
        return config.learning_rate * step / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return config.learning_rate * 0.5 * (1.0 + float(np.cos(np.pi * progress)))


def decays_weight(name: str) -> bool:
    """Scalar gates and normalization parameters are exempt from decay."""
    if ".norm" in name:
        return False
    if name.endswith(".beta") or name.endswith(".gamma"):
        return False
    if name.endswith("alpha_qk") or name.endswith("alpha_rel"):
        return False
    return True


class AdamW:
    """Decoupled weight decay; moments kept in the store's dtype."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, store: ParameterStore, weight_decay: float):
        self.store = store
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.store.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay != 0.0 and decays_weight(name):
                update = update + self.weight_decay * p.data
            p.data -= lr * update


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_mrr: float | None
    seconds: float


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochStats] = field(default_factory=list)
    best_params: ModelParams | None = None
    best_val_mrr: float | None = None


def train(
    train_seqs,
    schema: BehaviorSchema,
    model_config: ModelConfig,
    config: TrainConfig,
    val_targets: list[EvalTarget] | tuple[EvalTarget, ...] | None = None,
    dtype=np.float32,
    log_fn=None,
) -> TrainResult:
    """Fit from scratch; deterministic for a fixed (data, configs, seed)."""
    if not train_seqs:
        raise ValueError("no training sequences")
    params = init_parameters(model_config, substream(config.rng_seed, "init"), dtype=dtype)
    order_rng = substream(config.rng_seed, "batch_order")
    neg_rng = substream(config.rng_seed, "negatives")
    drop_rng = substream(config.rng_seed, "dropout")
    opt = AdamW(params.store, config.weight_decay)

    batches_per_epoch = -(-len(train_seqs) // config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    result = TrainResult(params)
    best_store: ParameterStore | None = None
    step = 0
    for epoch in range(config.epochs):
        started = time.time()
        order = order_rng.permutation(len(train_seqs))
        shuffled = [train_seqs[i] for i in order]
        losses = []
        for batch in batch_sequences(shuffled, model_config.L, config.batch_size):
            params.store.zero_grad()
            out = forward(batch, params, model_config, schema, train=True, rng=drop_rng)
            loss, _ = compute_loss(out, batch, params, model_config, config.negatives, neg_rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite training loss at step {step} (epoch {epoch})"
                )
            loss.backward()
            opt.step(lr_schedule(step, total_steps, config))
            losses.append(value)
            step += 1
        val_mrr = None
        if val_targets:
            val_mrr = evaluate(
                params, model_config, schema, val_targets, cutoffs=(10,)
            ).mrr
            if result.best_val_mrr is None or val_mrr > result.best_val_mrr:
                result.best_val_mrr = val_mrr
                best_store = params.store.clone()
        stats = EpochStats(epoch, float(np.mean(losses)), val_mrr, time.time() - started)
        result.log.append(stats)
        if log_fn is not None:
            log_fn(stats)
    if best_store is not None:
        result.best_params = rebind(best_store, model_config)
    return result


def rebind(store: ParameterStore, config: ModelConfig) -> ModelParams:
    """Fresh ModelParams views over an existing store's tensors."""
    rebuilt = init_parameters(config, substream(0, "rebind"), dtype=store.dtype)
    rebuilt.store.copy_from(store)
    return rebuilt


def load_params(path, config: ModelConfig) -> ModelParams:
    """Read a checkpoint and bind it to the configured model shape."""
    loaded = load_checkpoint(path)
    try:
        return rebind(loaded, config)
    except ValueError as exc:
        raise CheckpointShapeError(
            f"checkpoint does not fit the configured model: {exc}"
        ) from None


# -- checkpoint file -----------------------------------------------------------------


def save_checkpoint(store: ParameterStore, path) -> None:
    """Self-describing binary: magic, version, manifest, raw payloads."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(store)))
        for name, p in store.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", p.ndim))
            for extent in p.shape:
                fh.write(struct.pack("<Q", extent))
            fh.write(struct.pack("<B", _DTYPE_CODES[p.data.dtype]))
        for _, p in store.items():
            fh.write(np.ascontiguousarray(p.data).astype(p.data.dtype.newbyteorder("<")).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(f"file ends inside {what} ({len(buf)}/{n} bytes)")
    return buf


def load_checkpoint(path, expect: ParameterStore | None = None) -> ParameterStore:
    """Read a checkpoint; with ``expect``, names and shapes must match it."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(f"version {version}, expected {CHECKPOINT_VERSION}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        manifest = []
        for k in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, f"name length #{k}"))
            name = _read_exact(fh, name_len, f"name #{k}").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"rank of {name}"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(fh, 8, f"extent of {name}"))[0]
                for _ in range(rank)
            )
            (code,) = struct.unpack("<B", _read_exact(fh, 1, f"dtype of {name}"))
            if code not in _CODE_DTYPES:
                raise CheckpointFormatError(f"unknown dtype code {code} for {name}")
            manifest.append((name, shape, _CODE_DTYPES[code]))
        dtypes = {d for _, _, d in manifest}
        if len(dtypes) > 1:
            raise CheckpointFormatError("mixed dtypes in one checkpoint")
        store = ParameterStore(dtype=dtypes.pop() if manifest else np.float32)
        for name, shape, dtype in manifest:
            n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
            raw = _read_exact(fh, n_bytes, f"payload of {name}")
            data = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)
            store.add(name, data)
        if fh.read(1):
            raise CheckpointFormatError("trailing bytes after declared payload")
    if expect is not None:
        if store.names() != expect.names():
            missing = set(expect.names()) - set(store.names())
            extra = set(store.names()) - set(expect.names())
            raise CheckpointShapeError(
                f"parameter names differ (missing: {sorted(missing)}, extra: {sorted(extra)})"
            )
        for name, p in expect.items():
            if store[name].shape != p.shape:
                raise CheckpointShapeError(
                    f"shape mismatch for {name!r}: file {store[name].shape}, expected {p.shape}"
                )
    return store
