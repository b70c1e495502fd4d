"""Battery-based load hiding with the stepping framework (Lazy Stepping 2).

The metered load is pinned to integer multiples of a step ``beta_w``. At
every sample the controller picks the multiple just below or just above the
net demand and the battery absorbs or supplies the difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import battery as bat
from ._validation import check_power_array, check_random_state
from .traces import PowerTrace


@dataclass(frozen=True)
class SteppingConfig:
    beta_w: float
    soc_force_low: float = 0.25
    soc_force_high: float = 0.85

    def __post_init__(self):
        if not self.beta_w > 0:
            raise ValueError(f"beta_w must be positive, got {self.beta_w!r}")
        if not self.soc_force_low < self.soc_force_high:
            raise ValueError("soc_force_low must be below soc_force_high")

    def check_against(self, battery_config):
        if not (battery_config.soc_min < self.soc_force_low
                < self.soc_force_high < battery_config.soc_max):
            raise ValueError(
                f"forcing thresholds {self.soc_force_low}/{self.soc_force_high} must lie "
                f"strictly inside the SOC window "
                f"({battery_config.soc_min}, {battery_config.soc_max})"
            )

    @classmethod
    def for_battery(cls, battery_config, soc_force_low=0.25, soc_force_high=0.85,
                    beta_override_w=None):
        beta = bat.max_power_w(battery_config) if beta_override_w is None else beta_override_w
        cfg = cls(float(beta), soc_force_low, soc_force_high)
        cfg.check_against(battery_config)
        return cfg


@dataclass(frozen=True, eq=False)
class BlhOutput:
    metered: PowerTrace
    battery_power: np.ndarray = field(repr=False)
    soc_series: np.ndarray = field(repr=False)
    fallback_flags: np.ndarray = field(repr=False)

    @property
    def fallback_fraction(self):
        return float(np.mean(self.fallback_flags))


def candidate_levels(net_w, beta_w):
    """The multiples of ``beta_w`` just below and just above ``net_w``."""
    k = math.floor(net_w / beta_w)
    lower = k * beta_w
    if lower == net_w:
        return lower, lower
    return lower, (k + 1) * beta_w


def ls2_choose_level(net_w, prev_metered_w, soc, feasible_range, config, rng):
    """Pick the metered level for one sample.

    Returns ``(metered_w, fallback)``. ``fallback`` is True when neither
    neighbouring level is reachable with the battery's current range, in
    which case the net demand is passed through unchanged.
    """
    lo, hi = feasible_range
    lower, upper = candidate_levels(net_w, config.beta_w)
    lower_ok = lo <= lower - net_w <= hi
    upper_ok = lo <= upper - net_w <= hi

    if soc >= config.soc_force_high:
        if lower_ok:
            return lower, False
        if upper_ok:
            return upper, False
    elif soc <= config.soc_force_low:
        if upper_ok:
            return upper, False
        if lower_ok:
            return lower, False
    else:
        if prev_metered_w == lower and lower_ok:
            return lower, False
        if prev_metered_w == upper and upper_ok:
            return upper, False
        if lower_ok and upper_ok:
            return (upper if rng.random() < 0.5 else lower), False
        if lower_ok:
            return lower, False
        if upper_ok:
            return upper, False
    return net_w, True


def initial_level(net_w, beta_w):
    """Level nearest to ``net_w``; halfway ties go up."""
    return math.floor(net_w / beta_w + 0.5) * beta_w


def run_blh(net, battery_config, stepping_config=None, seed=None):
    """Obfuscate ``net`` sample by sample with Lazy Stepping 2."""
    if not isinstance(net, PowerTrace):
        net = PowerTrace(net)
    if stepping_config is None:
        stepping_config = SteppingConfig.for_battery(battery_config)
    else:
        stepping_config.check_against(battery_config)
    rng = check_random_state(seed)
    dt = net.step_seconds
    n = len(net)
    net_w = net.samples.tolist()
    power = np.empty(n)
    socs = np.empty(n)
    flags = np.zeros(n, dtype=bool)

    state = battery_config.initial_state()
    prev = initial_level(net_w[0], stepping_config.beta_w)
    for t, d in enumerate(net_w):
        rng_range = bat.feasible_power_range(state, battery_config, dt)
        level, fell_back = ls2_choose_level(d, prev, state.soc, rng_range, stepping_config, rng)
        p = level - d
        state = bat.step(state, battery_config, p, dt)
        power[t] = p
        socs[t] = state.soc
        flags[t] = fell_back
        prev = level

    metered = net.with_samples(net.samples + power)
    return BlhOutput(metered, power, socs, flags)


class BatteryLoadHider(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`run_blh`.

    ``transform`` maps a net-demand series to the metered series; use
    :meth:`hide` for the battery power, SOC and fallback diagnostics.

    Parameters
    ----------
    capacity_ah : float, default=100
        Rated battery capacity.
    nominal_voltage_v, c_rate_per_hour, soc_min, soc_max, initial_soc : float
        Battery parameters, see :class:`~loadveil.battery.BatteryConfig`.
    soc_force_low, soc_force_high : float
        SOC levels at which the upper/lower level is forced.
    beta_w : float or None
        Step height; defaults to the battery's rate limit.
    step_seconds : float, default=1.0
        Sample spacing of the input.
    random_state : int, Generator or None
        Seed for the level choice. An int makes every call reproducible.
    """

    def __init__(self, capacity_ah=100.0, nominal_voltage_v=12.0, c_rate_per_hour=0.3,
                 soc_min=0.20, soc_max=0.90, initial_soc=0.55, soc_force_low=0.25,
                 soc_force_high=0.85, beta_w=None, step_seconds=1.0, random_state=None):
        self.capacity_ah = capacity_ah
        self.nominal_voltage_v = nominal_voltage_v
        self.c_rate_per_hour = c_rate_per_hour
        self.soc_min = soc_min
        self.soc_max = soc_max
        self.initial_soc = initial_soc
        self.soc_force_low = soc_force_low
        self.soc_force_high = soc_force_high
        self.beta_w = beta_w
        self.step_seconds = step_seconds
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if X is not None:
            check_power_array(X)
        self.battery_config_ = bat.BatteryConfig(
            rated_capacity_ah=self.capacity_ah,
            nominal_voltage_v=self.nominal_voltage_v,
            soc_min=self.soc_min,
            soc_max=self.soc_max,
            initial_soc=self.initial_soc,
            c_rate_per_hour=self.c_rate_per_hour,
        )
        self.stepping_config_ = SteppingConfig.for_battery(
            self.battery_config_, self.soc_force_low, self.soc_force_high, self.beta_w
        )
        return self

    def hide(self, X):
        check_is_fitted(self, "battery_config_")
        trace = PowerTrace(check_power_array(X), step_seconds=self.step_seconds)
        return run_blh(trace, self.battery_config_, self.stepping_config_, self.random_state)

    def transform(self, X):
        return self.hide(X).metered.samples.copy()
