"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np


def check_power_array(X, name="X", allow_negative=False):
    """Coerce ``X`` to a 1-D float64 array of finite watt values.

    Accepts a :class:`~loadveil.traces.PowerTrace`, a sequence, a 1-D array or
    an ``(n, 1)`` column array (the sklearn convention for a single feature).
    """
    samples = getattr(X, "samples", X)
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must contain at least one sample")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite value at index {bad}")
    if not allow_negative and np.any(arr < 0):
        bad = int(np.flatnonzero(arr < 0)[0])
        raise ValueError(f"{name} contains a negative power {arr[bad]!r} at index {bad}")
    return arr


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_fraction(value, name, open_low=False, open_high=False):
    value = float(value)
    lo_ok = value > 0 if open_low else value >= 0
    hi_ok = value < 1 if open_high else value <= 1
    if not (lo_ok and hi_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return value


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    ``None`` gives fresh OS entropy; an existing Generator is passed through.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {seed!r}")


def seed_key(seed):
    """Integer words identifying ``seed`` (int, None or SeedSequence).

    Child streams are built as ``SeedSequence(seed_key(seed) + [tag])``, which
    keeps spawned sequences apart and gives ``[seed, tag]`` for an int seed.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ent = ss.entropy
    words = [int(x) for x in ent] if isinstance(ent, (list, tuple, np.ndarray)) else [int(ent)]
    return words + [int(k) for k in ss.spawn_key]


def check_same_length(a, b, names=("d", "e")):
    if len(a) != len(b):
        raise ValueError(
            f"length mismatch: {names[0]} has {len(a)} samples, {names[1]} has {len(b)}"
        )
