"""Named parameter store with paired gradient buffers.

Parameter names form a stable dotted namespace, documented where the
model registers them (see ``bitrec.model.init_parameters``).  Iteration
is always sorted by name so optimizer sweeps, checkpoints and gradient
reductions are order-deterministic.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Mutable map name -> parameter Tensor (leaf, requires_grad)."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.ascontiguousarray(data, dtype=self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for _, p in self.items():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.items())

    def clone(self) -> "ParameterStore":
        out = ParameterStore(dtype=self.dtype)
        for name, p in self.items():
            out.add(name, p.data.copy())
        return out

    def copy_from(self, other: "ParameterStore") -> None:
        if self.names() != other.names():
            raise ValueError("parameter name sets differ")
        for name, p in self.items():
            src = other[name]
            if src.shape != p.shape:
                raise ValueError(f"shape mismatch for {name!r}: {src.shape} vs {p.shape}")
            p.data[...] = src.data


# -- initializers ---------------------------------------------------------------


def normal_init(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


def xavier_uniform(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniform Xavier for a weight of shape (fan_out, fan_in) or (fan_in, fan_out)."""
    fan_in, fan_out = shape[-1], shape[-2] if len(shape) >= 2 else shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
