"""Lossless coulomb-counting battery with SOC window and symmetric rate limit.

Power is signed from the battery's point of view: positive charges, negative
discharges. Voltage is held constant at its nominal value.
"""

from __future__ import annotations

from dataclasses import dataclass

from ._validation import check_fraction, check_positive

SECONDS_PER_HOUR = 3600.0

# Slack for float round-off when checking a requested power against the range.
_POWER_TOL_W = 1e-9


class BatteryLimitError(ValueError):
    """A step requested more power than the battery can currently take or give."""


@dataclass(frozen=True)
class BatteryConfig:
    rated_capacity_ah: float
    nominal_voltage_v: float = 12.0
    soc_min: float = 0.20
    soc_max: float = 0.90
    initial_soc: float = 0.55
    c_rate_per_hour: float = 0.3

    def __post_init__(self):
        check_positive(self.rated_capacity_ah, "rated_capacity_ah")
        check_positive(self.nominal_voltage_v, "nominal_voltage_v")
        check_positive(self.c_rate_per_hour, "c_rate_per_hour")
        for name in ("soc_min", "soc_max", "initial_soc"):
            check_fraction(getattr(self, name), name)
        if not self.soc_min < self.initial_soc < self.soc_max:
            raise ValueError(
                "need soc_min < initial_soc < soc_max, got "
                f"{self.soc_min} / {self.initial_soc} / {self.soc_max}"
            )

    @property
    def depth_of_discharge(self):
        return self.soc_max - self.soc_min

    @property
    def energy_wh(self):
        """Rated energy content at nominal voltage."""
        return self.nominal_voltage_v * self.rated_capacity_ah

    def initial_state(self):
        return BatteryState(self.initial_soc)


@dataclass(frozen=True)
class BatteryState:
    soc: float


def max_power_w(config):
    """Symmetric charge/discharge limit ``V * c_rate * C`` in watts."""
    return config.nominal_voltage_v * config.rated_capacity_ah * config.c_rate_per_hour


def feasible_power_range(state, config, dt_seconds):
    """Return ``(min_w, max_w)`` the battery can sustain for ``dt_seconds``.

    Both ends are limited by the rate cap and by the SOC headroom left in the
    window; the range always contains 0.
    """
    if not dt_seconds > 0:
        raise ValueError(f"dt_seconds must be positive, got {dt_seconds!r}")
    cap = max_power_w(config)
    joules_per_soc = config.energy_wh * SECONDS_PER_HOUR
    up = max(0.0, (config.soc_max - state.soc) * joules_per_soc / dt_seconds)
    down = max(0.0, (state.soc - config.soc_min) * joules_per_soc / dt_seconds)
    return -min(cap, down), min(cap, up)


def step(state, config, power_w, dt_seconds):
    """Advance the SOC by ``power_w`` held for ``dt_seconds``.

    Raises
    ------
    BatteryLimitError
        If ``power_w`` lies outside :func:`feasible_power_range`.
    """
    lo, hi = feasible_power_range(state, config, dt_seconds)
    if power_w > hi + _POWER_TOL_W or power_w < lo - _POWER_TOL_W:
        raise BatteryLimitError(
            f"battery power {power_w:.6g} W outside feasible range "
            f"[{lo:.6g}, {hi:.6g}] W at soc {state.soc:.6g}"
        )
    soc = state.soc + power_w * dt_seconds / (config.energy_wh * SECONDS_PER_HOUR)
    # absorb round-off at the window edges
    soc = min(max(soc, config.soc_min), config.soc_max)
    return BatteryState(soc)
