"""Privacy and attack-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_power_array, check_same_length


@dataclass(frozen=True)
class AccuracyReport:
    per_appliance: dict
    total: float

    @classmethod
    def from_per_appliance(cls, per_appliance):
        per = {k: float(v) for k, v in per_appliance.items()}
        total = float(np.mean(list(per.values()))) if per else float("nan")
        return cls(per, total)


def rmse(d, e):
    """Root mean squared deviation between net demand ``d`` and metered ``e``."""
    d_arr = check_power_array(d, "d", allow_negative=True)
    e_arr = check_power_array(e, "e", allow_negative=True)
    check_same_length(d_arr, e_arr)
    step_d = getattr(d, "step_seconds", None)
    step_e = getattr(e, "step_seconds", None)
    if step_d is not None and step_e is not None and step_d != step_e:
        raise ValueError(f"step mismatch: {step_d} s vs {step_e} s")
    diff = d_arr - e_arr
    return float(np.sqrt(np.mean(diff * diff)))


def _on(trace):
    states = getattr(trace, "states", trace)
    return np.asarray(states) > 0


def accuracy(estimated, truth):
    """Per-appliance and mean ``(TP + TN) / n``.

    Both arguments map appliance names to state traces (or integer arrays);
    any nonzero state index counts as ON. For ground truth derived from a
    model, index 0 is the only zero-power state, so this is the power > 0
    reduction.
    """
    if set(estimated) != set(truth):
        missing = sorted(set(truth) - set(estimated))
        extra = sorted(set(estimated) - set(truth))
        raise ValueError(f"appliance sets differ: missing {missing}, unexpected {extra}")
    per = {}
    for name in truth:
        est, tru = _on(estimated[name]), _on(truth[name])
        check_same_length(est, tru, (f"estimate[{name}]", f"truth[{name}]"))
        per[name] = float(np.mean(est == tru))
    return AccuracyReport.from_per_appliance(per)


def all_off_reference(truth):
    """Accuracy of the estimator that declares every appliance OFF throughout."""
    return AccuracyReport.from_per_appliance(
        {name: float(np.mean(~_on(tr))) for name, tr in truth.items()}
    )


def energy_turnover_kwh(device_power, step_seconds=1.0):
    """Total absolute energy moved by the hiding device."""
    p = check_power_array(device_power, "device_power", allow_negative=True)
    return float(np.sum(np.abs(p))) * step_seconds / 3.6e6
