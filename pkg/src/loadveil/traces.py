"""Power traces, appliance HMMs, CSV/JSON ingestion and preprocessing."""

from __future__ import annotations

import bisect
import csv
import json
import os
import zlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_power_array, check_random_state, seed_key

TIMESTAMP_COLUMNS = frozenset({"timestamp", "time", "datetime", "date"})


@dataclass(frozen=True, eq=False)
class PowerTrace:
    """Uniformly sampled active power in watts."""

    samples: np.ndarray
    step_seconds: float = 1.0
    start_index: int = 0

    def __post_init__(self):
        arr = check_power_array(self.samples, name="samples")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        if not self.step_seconds > 0:
            raise ValueError(f"step_seconds must be positive, got {self.step_seconds!r}")
        object.__setattr__(self, "step_seconds", float(self.step_seconds))
        object.__setattr__(self, "start_index", int(self.start_index))

    def __len__(self):
        return self.samples.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.samples if dtype is None else self.samples.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (
            self.step_seconds == other.step_seconds
            and self.start_index == other.start_index
            and np.array_equal(self.samples, other.samples)
        )

    def with_samples(self, samples):
        return PowerTrace(samples, step_seconds=self.step_seconds, start_index=self.start_index)

    @property
    def duration_seconds(self):
        return len(self) * self.step_seconds


@dataclass(frozen=True, eq=False)
class StateTrace:
    """Per-sample state indices of one appliance."""

    appliance: str
    states: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states)
        if states.ndim != 1:
            raise ValueError("states must be one-dimensional")
        if states.size and (not np.issubdtype(states.dtype, np.integer) or states.min() < 0):
            raise ValueError("states must be nonnegative integers")
        states = states.astype(np.int64)
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.states.shape[0]

    def on_mask(self, model=None):
        """Boolean ON series; without a model any nonzero index counts as ON."""
        if model is None:
            return self.states > 0
        return np.asarray(model.state_powers)[self.states] > 0


@dataclass(frozen=True, eq=False)
class ApplianceModel:
    """Markov model of an appliance; state 0 is OFF and draws no power."""

    name: str
    state_powers: tuple
    transition_matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        powers = tuple(float(p) for p in self.state_powers)
        if not powers:
            raise ValueError(f"{self.name}: at least one state is required")
        if powers[0] != 0.0:
            raise ValueError(f"{self.name}: state 0 must be OFF with power 0, got {powers[0]}")
        if any(p < 0 or not np.isfinite(p) for p in powers):
            raise ValueError(f"{self.name}: state powers must be finite and nonnegative")
        P = np.array(self.transition_matrix, dtype=np.float64)
        n = len(powers)
        if P.shape != (n, n):
            raise ValueError(f"{self.name}: transition matrix must be {n}x{n}, got {P.shape}")
        if np.any(P < 0):
            raise ValueError(f"{self.name}: transition probabilities must be nonnegative")
        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            bad = int(np.argmax(np.abs(rows - 1.0)))
            raise ValueError(f"{self.name}: transition row {bad} sums to {rows[bad]!r}, not 1")
        P.flags.writeable = False
        object.__setattr__(self, "state_powers", powers)
        object.__setattr__(self, "transition_matrix", P)

    @property
    def n_states(self):
        return len(self.state_powers)

    @property
    def on_states(self):
        return frozenset(i for i, p in enumerate(self.state_powers) if p > 0)

    @classmethod
    def from_dwell_times(cls, name, state_powers, dwell_samples, jumps):
        """Build a chain from mean dwell times (in samples) and a jump matrix.

        ``jumps[i]`` gives the distribution of the next *different* state when
        state ``i`` is left; its diagonal is ignored.
        """
        dwell = np.asarray(dwell_samples, dtype=np.float64)
        J = np.array(jumps, dtype=np.float64)
        np.fill_diagonal(J, 0.0)
        J /= J.sum(axis=1, keepdims=True)
        leave = 1.0 / dwell
        P = J * leave[:, None]
        P[np.diag_indices_from(P)] = 1.0 - leave
        return cls(name, state_powers, P)

    def stationary_distribution(self):
        w, v = np.linalg.eig(self.transition_matrix.T)
        pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
        return pi / pi.sum()

    def to_dict(self):
        return {
            "name": self.name,
            "state_powers": list(self.state_powers),
            "transition_matrix": self.transition_matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        missing = {"name", "state_powers", "transition_matrix"} - set(d)
        if missing:
            raise ValueError(f"appliance model is missing fields: {sorted(missing)}")
        return cls(str(d["name"]), d["state_powers"], d["transition_matrix"])


def load_models_json(path):
    """Read appliance models from a JSON list (or ``{"appliances": [...]}``)."""
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = doc.get("appliances", doc.get("models"))
    if not isinstance(doc, list) or not doc:
        raise ValueError(f"{path}: expected a nonempty list of appliance models")
    return [ApplianceModel.from_dict(d) for d in doc]


def save_models_json(models, path):
    with open(path, "w") as fh:
        json.dump([m.to_dict() for m in models], fh, indent=2)


def load_traces_csv(path, schema=None):
    """Read one trace per appliance column.

    The first row names the columns; every following row is one second.
    Timestamp-like columns are skipped. With ``schema`` only the listed
    columns are read and each must be present.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"trace file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if schema is None:
            wanted = [h for h in header if h.lower() not in TIMESTAMP_COLUMNS]
        else:
            wanted = list(schema)
            absent = [c for c in wanted if c not in header]
            if absent:
                raise ValueError(f"{path}: columns not found in header: {absent}")
        if not wanted:
            raise ValueError(f"{path}: no appliance columns")
        cols = [header.index(c) for c in wanted]
        data = [[] for _ in wanted]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}"
                )
            for k, c in enumerate(cols):
                cell = row[c].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {lineno}, column {wanted[k]!r}: not a number: {cell!r}"
                    ) from None
                if not np.isfinite(value) or value < 0:
                    raise ValueError(
                        f"{path}: row {lineno}, column {wanted[k]!r}: "
                        f"power must be finite and nonnegative, got {cell!r}"
                    )
                data[k].append(value)
    if not data[0]:
        raise ValueError(f"{path}: no data rows")
    return {name: PowerTrace(np.array(v), step_seconds=1.0) for name, v in zip(wanted, data)}


def write_traces_csv(traces, path):
    """Write ``{name: PowerTrace}`` in the layout read by :func:`load_traces_csv`."""
    names = list(traces)
    columns = [traces[n].samples for n in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*columns):
            w.writerow([repr(float(x)) for x in row])


def synthesize(model, duration_samples, seed=None, step_seconds=1.0):
    """Sample a power trace and its state path, starting in OFF."""
    if duration_samples < 1:
        raise ValueError(f"duration_samples must be >= 1, got {duration_samples}")
    rng = check_random_state(seed)
    cum = np.cumsum(model.transition_matrix, axis=1)
    cum[:, -1] = 1.0
    rows = [list(r) for r in cum]
    u = rng.random(duration_samples - 1).tolist()
    states = np.empty(duration_samples, dtype=np.int64)
    s = 0
    states[0] = 0
    for t, x in enumerate(u, start=1):
        s = bisect.bisect_right(rows[s], x)
        states[t] = s
    powers = np.asarray(model.state_powers)[states]
    return PowerTrace(powers, step_seconds=step_seconds), StateTrace(model.name, states)


def states_from_power(trace, model):
    """Assign every sample to the state with the nearest power level."""
    levels = np.asarray(model.state_powers)
    idx = np.abs(trace.samples[:, None] - levels[None, :]).argmin(axis=1)
    return StateTrace(model.name, idx)


def aggregate(traces):
    """Sample-wise sum of equally long, equally stepped traces."""
    traces = list(traces)
    if not traces:
        raise ValueError("aggregate needs at least one trace")
    first = traces[0]
    for k, tr in enumerate(traces[1:], start=1):
        if len(tr) != len(first):
            raise ValueError(f"trace {k} has {len(tr)} samples, trace 0 has {len(first)}")
        if tr.step_seconds != first.step_seconds:
            raise ValueError(
                f"trace {k} has step {tr.step_seconds} s, trace 0 has {first.step_seconds} s"
            )
    total = np.sum(np.stack([tr.samples for tr in traces]), axis=0)
    return first.with_samples(total)


def _check_order(order):
    if isinstance(order, bool) or int(order) != order or order < 1 or order % 2 == 0:
        raise ValueError(f"median filter order must be a positive odd integer, got {order!r}")
    return int(order)


def _running_median(x, order):
    h = order // 2
    padded = np.pad(x, h, mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, order), axis=1)


def median_filter(trace, order=5):
    """Sliding-window median with boundary replication (length preserved)."""
    order = _check_order(order)
    if order == 1:
        return trace
    return trace.with_samples(_running_median(trace.samples, order))


class MedianFilter(TransformerMixin, BaseEstimator):
    """Running median preprocessing step.

    Parameters
    ----------
    order : int, default=5
        Odd window length in samples.
    """

    def __init__(self, order=5):
        self.order = order

    def fit(self, X=None, y=None):
        self.order_ = _check_order(self.order)
        return self

    def transform(self, X):
        order = _check_order(self.order)
        arr = check_power_array(X)
        if order == 1:
            return arr.copy()
        return _running_median(arr, order)


# Dwell times (seconds) are hand-chosen so the stationary OFF share of every
# appliance hits a target typical of a measured household (TV .60, coffee .92,
# dishwasher .95, fridge .52, hoover .88, kettle .98, washing machine .43).
# The chains themselves are synthetic.
_SYNTHETIC_HOUSEHOLD = [
    ("TV", [0, 10, 160], [11100, 1800, 5400],
     [[0, 0, 1], [0.7, 0, 0.3], [0.5, 0.5, 0]]),
    ("coffee machine", [0, 1280], [6900, 600], [[0, 1], [1, 0]]),
    ("dishwasher", [0, 1900], [45600, 2400], [[0, 1], [1, 0]]),
    ("fridge", [0, 8, 80, 230], [1320, 300, 900, 20],
     [[0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]),
    ("hoover", [0, 1200], [6600, 900], [[0, 1], [1, 0]]),
    ("water kettle", [0, 1700], [8820, 180], [[0, 1], [1, 0]]),
    ("washing machine", [0, 130, 240, 1920], [4600, 1800, 900, 600],
     [[0, 1, 0, 0], [0.5, 0, 0, 0.5], [0, 0.6, 0, 0.4], [0, 0, 1, 0]]),
]


def synthetic_household(step_seconds=1.0):
    """Seven appliance models with the Table-1 power levels (synthetic dynamics)."""
    return [
        ApplianceModel.from_dwell_times(name, powers, np.asarray(dwell) / step_seconds, jumps)
        for name, powers, dwell, jumps in _SYNTHETIC_HOUSEHOLD
    ]


def synthesize_household(models, duration_samples, seed=None, step_seconds=1.0):
    """Synthesize every appliance with an independent stream derived from ``seed``.

    Returns ``(traces, states)`` as dicts keyed by appliance name.
    """
    key = seed_key(seed)
    traces, states = {}, {}
    for model in models:
        child = np.random.SeedSequence(key + [_name_key(model.name)])
        traces[model.name], states[model.name] = synthesize(
            model, duration_samples, np.random.default_rng(child), step_seconds
        )
    return traces, states


def _name_key(name):
    return zlib.crc32(name.encode("utf-8"))
