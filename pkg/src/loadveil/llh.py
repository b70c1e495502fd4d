"""Load-based load hiding: a controllable boiler adds beta-distributed noise.

The boiler runs in random time frames. Within a frame, its power is
``p_max_w * Beta(alpha, b)``, with ``b`` set so that the frame mean is a
chosen expectation. Between frames, a budget controller compares the energy
drawn so far with a constant load that would exactly meet the daily target.
When the shortfall or excess passes ``gap_limit_kwh``, the next expectation
is forced to the side that closes the gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive, check_power_array, check_random_state
from .traces import PowerTrace

WH_PER_KWH = 1000.0
SECONDS_PER_HOUR = 3600.0
SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class LlhConfig:
    daily_target_kwh: float
    p_max_w: float = 1600.0
    alpha: float = 0.9
    gap_limit_kwh: float = 0.5
    frame_max_seconds: float = 3600.0
    frame_min_seconds: float = 60.0
    hold_samples: int = 1

    def __post_init__(self):
        for name in ("daily_target_kwh", "p_max_w", "alpha", "frame_max_seconds",
                     "frame_min_seconds"):
            check_positive(getattr(self, name), name)
        if self.gap_limit_kwh < 0:
            raise ValueError(f"gap_limit_kwh must be nonnegative, got {self.gap_limit_kwh!r}")
        if self.frame_min_seconds > self.frame_max_seconds:
            raise ValueError("frame_min_seconds must not exceed frame_max_seconds")
        if not 0 < self.mu_set_w < self.p_max_w:
            raise ValueError(
                f"a daily target of {self.daily_target_kwh} kWh needs a constant load of "
                f"{self.mu_set_w:.2f} W, which must lie in (0, p_max_w={self.p_max_w})"
            )
        if int(self.hold_samples) != self.hold_samples or self.hold_samples < 1:
            raise ValueError(f"hold_samples must be a positive integer, got {self.hold_samples!r}")

    @property
    def mu_set_w(self):
        """Constant load that meets the daily target exactly."""
        return self.daily_target_kwh * WH_PER_KWH / 24.0


@dataclass
class NoiseBudget:
    mu_set_w: float
    cumulative_gap_wh: float = 0.0

    def consume(self, noise_w, dt_seconds):
        self.cumulative_gap_wh += float(np.sum(np.asarray(noise_w) - self.mu_set_w)) \
            * dt_seconds / SECONDS_PER_HOUR


@dataclass(frozen=True)
class NoiseFrame:
    mu_w: float
    duration_seconds: float
    beta_shape: float
    clamp: int = 0  # -1 forced below mu_set, +1 forced above, 0 free
    gap_at_start_wh: float = 0.0


@dataclass(frozen=True, eq=False)
class LlhOutput:
    metered: PowerTrace
    noise: PowerTrace
    frames: list = field(repr=False)
    frame_starts: np.ndarray = field(repr=False)
    gap_wh: np.ndarray = field(repr=False)
    daily_energy_kwh: np.ndarray

    @property
    def energy_kwh(self):
        return float(np.sum(self.noise.samples)) * self.noise.step_seconds / 3.6e6


def derive_beta(alpha, mu_norm):
    """Second shape parameter giving ``Beta(alpha, b)`` the mean ``mu_norm``."""
    if not 0.0 < mu_norm < 1.0:
        raise ValueError(f"mu_norm must lie in the open interval (0, 1), got {mu_norm!r}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    return (alpha - alpha * mu_norm) / mu_norm


def _open_uniform(rng, lo, hi):
    while True:
        x = rng.uniform(lo, hi)
        if lo < x < hi:
            return x


def next_frame(budget, config, rng):
    """Draw the duration and expectation of the next noise frame."""
    gap = budget.cumulative_gap_wh
    limit = config.gap_limit_kwh * WH_PER_KWH
    duration = rng.uniform(config.frame_min_seconds, config.frame_max_seconds)
    p_max = config.p_max_w
    if gap > limit:
        mu, clamp = _open_uniform(rng, 0.0, budget.mu_set_w), -1
    elif gap < -limit:
        mu, clamp = _open_uniform(rng, budget.mu_set_w, p_max), +1
    else:
        ceiling = rng.uniform(p_max / 4.0, 3.0 * p_max / 4.0)
        mu, clamp = _open_uniform(rng, 0.0, ceiling), 0
    return NoiseFrame(
        mu_w=mu,
        duration_seconds=duration,
        beta_shape=derive_beta(config.alpha, mu / p_max),
        clamp=clamp,
        gap_at_start_wh=gap,
    )


def run_llh(net, config, seed=None):
    """Overlay ``net`` with boiler noise; metered = net + noise."""
    if not isinstance(net, PowerTrace):
        net = PowerTrace(net)
    rng = check_random_state(seed)
    dt = net.step_seconds
    n = len(net)
    hold = int(config.hold_samples)
    budget = NoiseBudget(config.mu_set_w)
    noise = np.empty(n)
    frames, starts = [], []

    t = 0
    while t < n:
        frame = next_frame(budget, config, rng)
        frames.append(frame)
        starts.append(t)
        k = min(n - t, max(1, int(round(frame.duration_seconds / dt))))
        draws = rng.beta(config.alpha, frame.beta_shape, size=-(-k // hold))
        chunk = config.p_max_w * np.repeat(draws, hold)[:k]
        noise[t:t + k] = chunk
        budget.consume(chunk, dt)
        t += k

    gap_wh = np.cumsum(noise - config.mu_set_w) * dt / SECONDS_PER_HOUR
    per_day = int(round(SECONDS_PER_DAY / dt))
    full_days = n // per_day
    daily = noise[: full_days * per_day].reshape(full_days, per_day).sum(axis=1) * dt / 3.6e6
    return LlhOutput(
        metered=net.with_samples(net.samples + noise),
        noise=net.with_samples(noise),
        frames=frames,
        frame_starts=np.asarray(starts, dtype=np.int64),
        gap_wh=gap_wh,
        daily_energy_kwh=daily,
    )


def bound_daily_energy(config):
    """Worst-case realized daily energy ``(min_kwh, max_kwh)``.

    A day can end at most ``gap_limit`` short of target plus one frame spent
    at zero power, or ``gap_limit`` over target plus one frame spent at full
    power. The default 5 kWh case gives about (4.29, 6.89) kWh.
    """
    frame_h = config.frame_max_seconds / SECONDS_PER_HOUR
    mu_set_kwh = config.mu_set_w / WH_PER_KWH
    p_max_kwh = config.p_max_w / WH_PER_KWH
    lo = config.daily_target_kwh - config.gap_limit_kwh - mu_set_kwh * frame_h
    hi = config.daily_target_kwh + config.gap_limit_kwh + (p_max_kwh - mu_set_kwh) * frame_h
    return lo, hi


class BoilerLoadHider(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`run_llh`.

    Parameters
    ----------
    daily_target_kwh : float, default=5.0
    p_max_w : float, default=1600.0
    alpha : float, default=0.9
        First beta shape; the second follows from each frame's expectation.
    gap_limit_kwh : float, default=0.5
    frame_max_seconds, frame_min_seconds : float
        Range of the uniformly drawn frame length.
    hold_samples : int, default=1
        Keep each noise draw for this many samples.
    step_seconds : float, default=1.0
    random_state : int, Generator or None
    """

    def __init__(self, daily_target_kwh=5.0, p_max_w=1600.0, alpha=0.9, gap_limit_kwh=0.5,
                 frame_max_seconds=3600.0, frame_min_seconds=60.0, hold_samples=1,
                 step_seconds=1.0, random_state=None):
        self.daily_target_kwh = daily_target_kwh
        self.p_max_w = p_max_w
        self.alpha = alpha
        self.gap_limit_kwh = gap_limit_kwh
        self.frame_max_seconds = frame_max_seconds
        self.frame_min_seconds = frame_min_seconds
        self.hold_samples = hold_samples
        self.step_seconds = step_seconds
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if X is not None:
            check_power_array(X)
        self.config_ = LlhConfig(
            daily_target_kwh=self.daily_target_kwh,
            p_max_w=self.p_max_w,
            alpha=self.alpha,
            gap_limit_kwh=self.gap_limit_kwh,
            frame_max_seconds=self.frame_max_seconds,
            frame_min_seconds=self.frame_min_seconds,
            hold_samples=self.hold_samples,
        )
        return self

    def hide(self, X):
        check_is_fitted(self, "config_")
        trace = PowerTrace(check_power_array(X), step_seconds=self.step_seconds)
        return run_llh(trace, self.config_, self.random_state)

    def transform(self, X):
        return self.hide(X).metered.samples.copy()
