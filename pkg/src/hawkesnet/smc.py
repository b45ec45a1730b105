"""Sequential Monte Carlo for the latent-background count model.

``pf_forward`` runs a bootstrap filter over the latent states with
log-space weights, adaptive systematic resampling and an injectable
observation density (the default scores counts under the model's link;
tests inject Gaussian densities to compare against closed-form
filters). ``bss_backward`` draws smoothed trajectories by backward
simulation over the stored filtering clouds.

Cloud arrays follow the module convention: index 0 is the pre-data
initial condition, index k >= 1 pairs with counts row k-1.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DomainError
from .statespace import (
    StateSpaceSpec,
    excitation_path,
    latent_drift,
    link_intensity,
    transition_noise_std,
    x0_prior,
)

__all__ = [
    "ParticleCloud",
    "SmoothedPaths",
    "systematic_resample",
    "poisson_obs_loglik",
    "pf_forward",
    "bss_backward",
]

ObsLoglik = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


@dataclasses.dataclass(frozen=True)
class ParticleCloud:
    """Stored filtering approximations.

    ``states[k]`` with normalized ``log_weights[k]`` represent the
    filtering distribution at index k (pre-resampling). ``evidence`` is
    the log marginal likelihood estimate of the scored bins.
    """

    states: np.ndarray  # (K+1, N, m)
    log_weights: np.ndarray  # (K+1, N)
    ess: np.ndarray  # (K+1,)
    resampled: np.ndarray  # (K+1,) bool
    evidence: float
    g_path: np.ndarray  # (K+1, m)
    dt: float


@dataclasses.dataclass(frozen=True)
class SmoothedPaths:
    """Backward-simulated trajectories and their intensities."""

    states: np.ndarray  # (n_s, K+1, m)
    lam: np.ndarray  # (n_s, K, m), row r from index r+1 states
    g_path: np.ndarray  # (K+1, m)
    dt: float


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with one uniform offset and a stratified comb.

    The copy count of particle i is floor or ceil of ``N * weights[i]``.
    """
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    if n == 0:
        raise DomainError("cannot resample an empty weight vector")
    total = weights.sum()
    if not np.isfinite(total) or total <= 0 or np.any(weights < 0):
        raise DomainError("weights must be nonnegative with a positive finite sum")
    positions = (rng.uniform() + np.arange(n)) / n
    cumulative = np.cumsum(weights / total)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="left").clip(0, n - 1)


def poisson_obs_loglik(
    spec: StateSpaceSpec,
) -> ObsLoglik:
    """Default observation density: independent Poisson counts under the
    spec's link."""

    def loglik(obs_row: np.ndarray, x: np.ndarray, g_row: np.ndarray, dt: float) -> np.ndarray:
        lam = link_intensity(spec, x, g_row[None, :])
        lam_dt = lam * dt
        return (
            obs_row[None, :] * np.log(lam_dt) - lam_dt - gammaln(obs_row + 1.0)[None, :]
        ).sum(axis=1)

    return loglik


def pf_forward(
    spec: StateSpaceSpec,
    observations: np.ndarray,
    dt: float,
    n_particles: int,
    seed: int | np.random.SeedSequence,
    obs_loglik: ObsLoglik | None = None,
    g_path: np.ndarray | None = None,
    x0_draws: np.ndarray | None = None,
    resample_threshold: float = 0.5,
) -> ParticleCloud:
    """Bootstrap filter over the latent states.

    ``observations`` has one row per bin. Weights live in log space and
    a systematic resample triggers when the effective sample size drops
    below ``resample_threshold`` times the cloud size. The stored clouds
    keep their pre-resampling weights so downstream smoothing sees
    proper filtering approximations.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2:
        raise DomainError("observations must be a (bins, nodes) array")
    K, m = observations.shape
    if m != spec.n_nodes:
        raise DomainError(f"observations have {m} columns, spec has {spec.n_nodes} nodes")
    if n_particles < 2:
        raise DomainError("need at least two particles")
    if not (0.0 < resample_threshold <= 1.0):
        raise DomainError("resample_threshold must lie in (0, 1]")
    rng = np.random.Generator(np.random.Philox(seed))
    if g_path is None:
        g_path = excitation_path(spec, observations, dt)
    else:
        g_path = np.asarray(g_path, dtype=float)
        if g_path.shape != (K + 1, m):
            raise DomainError(f"g_path must have shape {(K + 1, m)}")
    if obs_loglik is None:
        obs_loglik = poisson_obs_loglik(spec)

    states = np.empty((K + 1, n_particles, m))
    log_weights = np.empty((K + 1, n_particles))
    ess = np.empty(K + 1)
    resampled = np.zeros(K + 1, dtype=bool)

    if x0_draws is None:
        mean, var = x0_prior(spec, dt)
        particles = rng.normal(mean, np.sqrt(var), size=(n_particles, m))
    else:
        particles = np.asarray(x0_draws, dtype=float).copy()
        if particles.shape != (n_particles, m):
            raise DomainError(f"x0_draws must have shape {(n_particles, m)}")
    logw = np.full(n_particles, -np.log(n_particles))
    states[0] = particles
    log_weights[0] = logw
    ess[0] = n_particles

    std = transition_noise_std(spec, dt)
    evidence = 0.0
    for k in range(1, K + 1):
        particles = latent_drift(spec, particles, dt) + std * rng.normal(
            size=(n_particles, m)
        )
        ll = obs_loglik(observations[k - 1], particles, g_path[k], dt)
        evidence += float(logsumexp(logw + ll))
        logw = logw + ll
        norm = logsumexp(logw)
        if not np.isfinite(norm):
            raise DomainError(
                f"all particle weights vanished at index {k}; the model cannot "
                "explain the observation"
            )
        logw = logw - norm
        states[k] = particles
        log_weights[k] = logw
        w = np.exp(logw)
        ess[k] = 1.0 / float(w @ w)
        if ess[k] < resample_threshold * n_particles:
            idx = systematic_resample(w, rng)
            particles = particles[idx]
            logw = np.full(n_particles, -np.log(n_particles))
            resampled[k] = True
    return ParticleCloud(
        states=states,
        log_weights=log_weights,
        ess=ess,
        resampled=resampled,
        evidence=evidence,
        g_path=g_path,
        dt=dt,
    )


def _categorical_rows(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of normalized log weights."""
    cdf = np.cumsum(np.exp(log_w), axis=1)
    cdf[:, -1] = 1.0
    u = rng.uniform(size=log_w.shape[0])
    return (cdf < u[:, None]).sum(axis=1).clip(0, log_w.shape[1] - 1)


def bss_backward(
    cloud: ParticleCloud,
    spec: StateSpaceSpec,
    n_smooth: int,
    seed: int | np.random.SeedSequence,
) -> SmoothedPaths:
    """Backward-simulation smoothing over a stored filtering cloud.

    Endpoints are drawn from the final weights; each earlier index
    reweights the filtered particles by the Gaussian transition density
    toward the already-chosen successor state. A step whose backward
    weights all vanish falls back to the filtered weights (with a
    warning).
    """
    if n_smooth < 1:
        raise DomainError("need at least one smoothed path")
    K = cloud.states.shape[0] - 1
    rng = np.random.Generator(np.random.Philox(seed))
    std = transition_noise_std(spec, cloud.dt)
    var = std * std
    log_norm = -0.5 * np.log(2.0 * np.pi * var)

    xs = np.empty((n_smooth, K + 1, spec.n_nodes))
    end = _categorical_rows(
        np.tile(cloud.log_weights[K], (n_smooth, 1)), rng
    )
    xs[:, K] = cloud.states[K][end]
    degenerate = 0
    for k in range(K - 1, -1, -1):
        drift = latent_drift(spec, cloud.states[k], cloud.dt)  # (N, m)
        diff = xs[:, k + 1][:, None, :] - drift[None, :, :]
        logpdf = (log_norm[None, None, :] - 0.5 * diff * diff / var[None, None, :]).sum(
            axis=2
        )
        logw = cloud.log_weights[k][None, :] + logpdf
        norm = logsumexp(logw, axis=1)
        bad = ~np.isfinite(norm)
        if np.any(bad):
            degenerate += int(bad.sum())
            logw[bad] = cloud.log_weights[k][None, :]
            norm[bad] = 0.0
        chosen = _categorical_rows(logw - norm[:, None], rng)
        xs[:, k] = cloud.states[k][chosen]
    if degenerate:
        warnings.warn(
            f"backward weights degenerated for {degenerate} path-step(s); used "
            "filtered weights there",
            RuntimeWarning,
        )
    lam = link_intensity(spec, xs[:, 1:, :], cloud.g_path[None, 1:, :])
    return SmoothedPaths(states=xs, lam=lam, g_path=cloud.g_path, dt=cloud.dt)
