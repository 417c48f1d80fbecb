"""Finite-difference gradient oracle.

Central differences (f(p+h) - f(p-h)) / 2h per sampled coordinate,
checked against the tape's analytic gradient.  Run it on a float64
store: float32 rounding alone exceeds any useful tolerance.
"""

from __future__ import annotations

import numpy as np

from .store import ParameterStore
from .tensor import no_grad


def sample_coords(
    store: ParameterStore, n: int, rng: np.random.Generator
) -> list[tuple[str, int]]:
    """At least one coordinate per tensor, remainder weighted by size."""
    names = store.names()
    coords = [(name, int(rng.integers(store[name].size))) for name in names]
    sizes = np.array([store[name].size for name in names], dtype=np.float64)
    probs = sizes / sizes.sum()
    for _ in range(max(0, n - len(coords))):
        name = names[int(rng.choice(len(names), p=probs))]
        coords.append((name, int(rng.integers(store[name].size))))
    return coords


def grad_check(
    loss_fn,
    store: ParameterStore,
    coords: list[tuple[str, int]],
    h: float = 1e-5,
    record: list | None = None,
) -> float:
    """Worst mixed relative/absolute error over ``coords``.

    Per coordinate: |analytic - numeric| / (max(|analytic|, |numeric|) + s),
    with s = 1e-3 * max(1, |loss|).  The additive term is the usual atol of
    a gradcheck in relative disguise: the difference quotient carries
    round-off of order eps * |loss| / h, so a gradient far smaller than that
    cannot be verified relatively by any step size, only absolutely.  For
    healthy magnitudes the term is negligible and this is plain relative
    error.

    ``loss_fn`` must be a deterministic closure over the store's parameters
    returning a scalar Tensor.  Raises on a non-finite loss.
    """
    store.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    loss.backward()
    analytic = {name: p.grad.copy() for name, p in store.items()}
    soft = 1e-3 * max(1.0, abs(float(loss.data)))

    worst = 0.0
    for name, idx in coords:
        buf = store[name].data
        orig = buf.flat[idx]
        with no_grad():
            buf.flat[idx] = orig + h
            f_plus = float(loss_fn().data)
            buf.flat[idx] = orig - h
            f_minus = float(loss_fn().data)
        buf.flat[idx] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise FloatingPointError(f"non-finite loss while perturbing {name}[{idx}]")
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[name].flat[idx])
        err = abs(a - numeric) / (max(abs(a), abs(numeric)) + soft)
        if record is not None:
            record.append((name, idx, a, numeric, err))
        if err > worst:
            worst = err
    return worst
