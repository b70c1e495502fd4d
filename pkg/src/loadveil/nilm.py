"""Particle-filter load disaggregation over a factorial HMM.

Every particle carries one state per appliance. A step propagates each
appliance through its own transition matrix, weights the particle by a
Gaussian likelihood of the residual between the observed power and the
particle's summed state powers, and resamples (systematically) once the
effective sample size drops too far. An appliance is reported ON when the
weight mass of particles holding it in a powered state exceeds a threshold.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_power_array, seed_key
from .traces import ApplianceModel, StateTrace

# Observations are processed in blocks so the per-step uniforms fit in memory.
_CHUNK = 1024


@dataclass(frozen=True)
class FilterConfig:
    particle_count: int = 1000
    likelihood_sigma_w: float = 10.0
    on_probability_threshold: float = 0.5
    resample_ess_fraction: float = 0.5

    def __post_init__(self):
        if int(self.particle_count) != self.particle_count or self.particle_count < 10:
            raise ValueError(f"particle_count must be an integer >= 10, got {self.particle_count!r}")
        if not self.likelihood_sigma_w > 0:
            raise ValueError("likelihood_sigma_w must be positive")
        if not 0 < self.on_probability_threshold < 1:
            raise ValueError("on_probability_threshold must lie in (0, 1)")
        if not 0 <= self.resample_ess_fraction <= 1:
            raise ValueError("resample_ess_fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class DisaggregationResult:
    appliances: list
    on: dict = field(repr=False)
    posterior_on: dict = field(repr=False)
    ess: np.ndarray = field(repr=False)
    resampled: np.ndarray = field(repr=False)
    underflow: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.ess)


def effective_sample_size(weights):
    """``1 / sum(w**2)`` for normalized weights."""
    w = np.asarray(weights, dtype=np.float64)
    sq = float(np.sum(w * w))
    if sq == 0.0:
        raise ValueError("effective sample size is undefined for all-zero weights")
    return 1.0 / sq


@numba.njit(cache=True)
def systematic_resample(weights, u0):
    """Ancestor indices for systematic resampling with offset ``u0`` in [0, 1)."""
    n = weights.shape[0]
    idx = np.empty(n, dtype=np.int64)
    j = 0
    cum = weights[0]
    for k in range(n):
        pos = (u0 + k) / n
        while pos >= cum and j < n - 1:
            j += 1
            cum += weights[j]
        idx[k] = j
    return idx


@numba.njit(cache=True)
def _filter_block(obs, powers, n_states, cum, unif, resample_u, states, weights,
                  inv_two_var, ess_trigger, post, ess_out, resampled_out, underflow_out):
    n_app = powers.shape[0]
    n = weights.shape[0]
    for t in range(obs.shape[0]):
        total = 0.0
        for i in range(n):
            pred = 0.0
            for a in range(n_app):
                s = states[i, a]
                u = unif[a, t, i]
                ns = n_states[a]
                k = 0
                while k < ns - 1 and u >= cum[a, s, k]:
                    k += 1
                states[i, a] = k
                pred += powers[a, k]
            r = obs[t] - pred
            weights[i] *= np.exp(-r * r * inv_two_var)
            total += weights[i]

        if total > 0.0 and np.isfinite(total):
            for i in range(n):
                weights[i] /= total
            underflow_out[t] = False
        else:
            for i in range(n):
                weights[i] = 1.0 / n
            underflow_out[t] = True

        sq = 0.0
        for i in range(n):
            sq += weights[i] * weights[i]
        ess = 1.0 / sq
        ess_out[t] = ess

        for a in range(n_app):
            m = 0.0
            for i in range(n):
                if powers[a, states[i, a]] > 0.0:
                    m += weights[i]
            post[t, a] = min(m, 1.0)

        if ess < ess_trigger:
            idx = systematic_resample(weights, resample_u[t])
            old = states.copy()
            for i in range(n):
                for a in range(n_app):
                    states[i, a] = old[idx[i], a]
                weights[i] = 1.0 / n
            resampled_out[t] = True
        else:
            resampled_out[t] = False


def _model_tables(models):
    n_app = len(models)
    smax = max(m.n_states for m in models)
    powers = np.zeros((n_app, smax))
    n_states = np.zeros(n_app, dtype=np.int64)
    cum = np.ones((n_app, smax, smax))
    for a, m in enumerate(models):
        k = m.n_states
        powers[a, :k] = m.state_powers
        n_states[a] = k
        c = np.cumsum(m.transition_matrix, axis=1)
        c[:, -1] = 1.0
        cum[a, :k, :k] = c
    return powers, n_states, cum


def _check_models(models):
    models = list(models)
    if not models:
        raise ValueError("at least one appliance model is required")
    names = [m.name for m in models]
    if len(set(names)) != len(names):
        raise ValueError(f"appliance names must be unique, got {names}")
    for m in models:
        if not isinstance(m, ApplianceModel):
            raise TypeError(f"expected ApplianceModel, got {type(m).__name__}")
    return models


def _streams(seed, models):
    key = seed_key(seed)
    per_app = [
        np.random.default_rng(np.random.SeedSequence(key + [1, zlib.crc32(m.name.encode())]))
        for m in models
    ]
    resample = np.random.default_rng(np.random.SeedSequence(key + [0]))
    return per_app, resample


def disaggregate(observed, models, config=None, seed=None):
    """Track appliance states behind ``observed`` (already median filtered)."""
    models = _check_models(models)
    config = config or FilterConfig()
    obs = check_power_array(observed, name="observed", allow_negative=True)
    powers, n_states, cum = _model_tables(models)
    n_app, n, T = len(models), int(config.particle_count), obs.shape[0]
    app_rngs, rs_rng = _streams(seed, models)

    states = np.zeros((n, n_app), dtype=np.int64)
    weights = np.full(n, 1.0 / n)
    post = np.empty((T, n_app))
    ess = np.empty(T)
    resampled = np.empty(T, dtype=np.bool_)
    underflow = np.empty(T, dtype=np.bool_)
    inv_two_var = 0.5 / config.likelihood_sigma_w ** 2
    trigger = config.resample_ess_fraction * n

    unif = np.empty((n_app, min(_CHUNK, T), n))
    for start in range(0, T, _CHUNK):
        stop = min(start + _CHUNK, T)
        m = stop - start
        block = unif[:, :m, :]
        for a, rng in enumerate(app_rngs):
            rng.random(out=block[a])
        _filter_block(obs[start:stop], powers, n_states, cum, block, rs_rng.random(m),
                      states, weights, inv_two_var, trigger, post[start:stop],
                      ess[start:stop], resampled[start:stop], underflow[start:stop])

    thr = config.on_probability_threshold
    names = [mdl.name for mdl in models]
    on = {name: StateTrace(name, (post[:, a] > thr).astype(np.int64)) for a, name in enumerate(names)}
    posterior = {name: post[:, a].copy() for a, name in enumerate(names)}
    return DisaggregationResult(names, on, posterior, ess, resampled, underflow)


class ParticleFilterDisaggregator(BaseEstimator):
    """Estimator front end for :func:`disaggregate`.

    The attacker is handed the true appliance models, so ``fit`` only
    validates them; ``predict`` returns a ``(n_samples, n_appliances)``
    ON/OFF matrix and ``predict_proba`` the posterior ON probabilities.
    """

    def __init__(self, models=None, n_particles=1000, sigma_w=10.0, threshold=0.5,
                 ess_fraction=0.5, random_state=None):
        self.models = models
        self.n_particles = n_particles
        self.sigma_w = sigma_w
        self.threshold = threshold
        self.ess_fraction = ess_fraction
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.models is None:
            raise ValueError("ParticleFilterDisaggregator needs appliance models")
        self.models_ = _check_models(self.models)
        self.config_ = FilterConfig(self.n_particles, self.sigma_w, self.threshold,
                                    self.ess_fraction)
        self.appliances_ = [m.name for m in self.models_]
        return self

    def disaggregate(self, X):
        check_is_fitted(self, "config_")
        return disaggregate(X, self.models_, self.config_, self.random_state)

    def predict_proba(self, X):
        res = self.disaggregate(X)
        return np.column_stack([res.posterior_on[a] for a in self.appliances_])

    def predict(self, X):
        res = self.disaggregate(X)
        return np.column_stack([res.on[a].states for a in self.appliances_])
