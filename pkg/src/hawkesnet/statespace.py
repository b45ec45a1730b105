"""Doubly stochastic count model with a latent log-background process.

Each node i carries a latent state x_i following a discretized
mean-reverting diffusion, optionally coupled across nodes, plus a
deterministic count-driven excitation g_i that decays between bins.
Counts are Poisson given the intensity produced by a link function of
(x, g).

Array convention: latent and excitation paths have K+1 rows for K
observed bins. Row 0 is the pre-data initial condition; row k >= 1
pairs with counts row k-1 (it holds the state that generates that bin).
The transition from row k to k+1 feeds in the counts paired with row k,
so events in one bin influence the next bin's excitation, never their
own.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.signal import lfilter

from .errors import DomainError
from .model import CountSeries

__all__ = [
    "StateSpaceSpec",
    "SimulatedStateSpace",
    "latent_drift",
    "transition_noise_std",
    "x0_prior",
    "excitation_path",
    "link_intensity",
    "simulate_statespace",
]

_EXP_CLIP = 700.0


@dataclasses.dataclass(frozen=True)
class StateSpaceSpec:
    """Model parameters.

    ``mu``/``omega1``/``epsilon`` are the per-node reversion level, rate
    and noise scale of the latent state; ``alpha`` (m, m) maps source
    counts into receiver excitation and ``omega2`` (per node) is the
    excitation decay rate. ``eta`` couples the latent states (0 turns
    the coupling off). ``link`` is ``"identity_sum"`` (exp(x) + g) or
    ``"logistic"`` (A / (1 + B exp(-z)) with z = exp(x) + g).
    ``x0_mean``/``x0_var`` override the initial-state prior, which
    defaults to mean ``mu`` and variance ``epsilon * dt``.
    """

    mu: np.ndarray
    omega1: np.ndarray
    epsilon: np.ndarray
    alpha: np.ndarray
    omega2: np.ndarray
    eta: float = 0.0
    link: str = "identity_sum"
    link_A: float | None = None
    link_B: float | None = None
    x0_mean: np.ndarray | None = None
    x0_var: np.ndarray | None = None

    def __post_init__(self) -> None:
        m = np.atleast_1d(np.asarray(self.mu, dtype=float)).shape[0]
        for name in ("mu", "omega1", "epsilon", "omega2"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape == (1,) and m > 1:
                arr = np.repeat(arr, m)
            if arr.shape != (m,):
                raise DomainError(f"{name} must have shape ({m},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim == 0:
            alpha = alpha.reshape(1, 1)
        if alpha.shape != (m, m):
            raise DomainError(f"alpha must have shape ({m}, {m}), got {alpha.shape}")
        if np.any(alpha < 0):
            raise DomainError("alpha entries must be nonnegative")
        object.__setattr__(self, "alpha", alpha)
        if np.any(self.omega1 <= 0) or np.any(self.epsilon <= 0):
            raise DomainError("omega1 and epsilon must be positive")
        if np.any(self.omega2 < 0):
            raise DomainError("omega2 must be nonnegative")
        if not (0.0 <= self.eta <= 1.0):
            raise DomainError(f"eta must lie in [0, 1], got {self.eta}")
        if self.link not in ("identity_sum", "logistic"):
            raise DomainError(f"unknown link {self.link!r}")
        if self.link == "logistic":
            if self.link_A is None or self.link_B is None:
                raise DomainError("logistic link needs link_A and link_B")
            if self.link_A <= 0 or self.link_B <= 0:
                raise DomainError("link_A and link_B must be positive")
        for name in ("x0_mean", "x0_var"):
            val = getattr(self, name)
            if val is not None:
                arr = np.atleast_1d(np.asarray(val, dtype=float))
                if arr.shape == (1,) and m > 1:
                    arr = np.repeat(arr, m)
                if arr.shape != (m,):
                    raise DomainError(f"{name} must have shape ({m},)")
                object.__setattr__(self, name, arr)
        if self.x0_var is not None and np.any(self.x0_var <= 0):
            raise DomainError("x0_var must be positive")

    @property
    def n_nodes(self) -> int:
        return self.mu.shape[0]


@dataclasses.dataclass(frozen=True)
class SimulatedStateSpace:
    series: CountSeries
    x_path: np.ndarray  # (K+1, m)
    g_path: np.ndarray  # (K+1, m)
    lam: np.ndarray  # (K, m)


def _check_rates(spec: StateSpaceSpec, dt: float) -> None:
    if dt <= 0:
        raise DomainError("dt must be positive")
    if np.any(spec.omega1 * dt >= 1.0):
        raise DomainError("omega1 * dt must stay below 1")
    if np.any(spec.omega2 * dt >= 1.0):
        raise DomainError("omega2 * dt must stay below 1")


def latent_drift(spec: StateSpaceSpec, x_prev: np.ndarray, dt: float) -> np.ndarray:
    """Deterministic part of the latent transition.

    Coupling applies before the reversion factor: node i mixes its own
    state with the sum of the others', then the mixture decays toward
    the reversion level. Works on (..., m) arrays.
    """
    x_prev = np.asarray(x_prev, dtype=float)
    if spec.eta > 0.0 and spec.n_nodes > 1:
        others = x_prev.sum(axis=-1, keepdims=True) - x_prev
        mixed = (1.0 - spec.eta) * x_prev + spec.eta * others
    else:
        mixed = x_prev
    return mixed * (1.0 - spec.omega1 * dt) + spec.omega1 * spec.mu * dt


def transition_noise_std(spec: StateSpaceSpec, dt: float) -> np.ndarray:
    return spec.epsilon * np.sqrt(dt)


def x0_prior(spec: StateSpaceSpec, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of the initial-state prior."""
    mean = spec.mu if spec.x0_mean is None else spec.x0_mean
    var = spec.epsilon * dt if spec.x0_var is None else spec.x0_var
    return mean, var


def excitation_path(
    spec: StateSpaceSpec,
    counts: np.ndarray,
    dt: float,
    g0: np.ndarray | None = None,
) -> np.ndarray:
    """Deterministic excitation given the counts, shape (K+1, m).

    ``g[k+1] = (1 - omega2 dt) g[k] + alpha @ counts_paired_with_k``
    where row 0 pairs with a virtual all-zero bin. A unit count in the
    first bin therefore first shows up at index 2 (it governs the second
    observed bin).
    """
    _check_rates(spec, dt)
    counts = np.asarray(counts, dtype=float)
    K, m = counts.shape
    if m != spec.n_nodes:
        raise DomainError(f"counts have {m} columns, spec has {spec.n_nodes} nodes")
    g = np.zeros((K + 1, m))
    g[0] = 0.0 if g0 is None else np.asarray(g0, dtype=float)
    decay = 1.0 - spec.omega2 * dt
    # driving input for index k (>= 2) is alpha @ counts[k-2]
    jumps = counts[: K - 1] @ spec.alpha.T
    for i in range(m):
        z0 = decay[i] * g[0, i]
        g[1, i] = z0
        if K >= 2:
            g[2:, i] = lfilter([1.0], [1.0, -decay[i]], jumps[:, i], zi=[decay[i] * z0])[0]
    return g


def link_intensity(spec: StateSpaceSpec, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Intensity from latent state and excitation, elementwise."""
    z = np.exp(np.clip(x, -_EXP_CLIP, _EXP_CLIP)) + g
    if spec.link == "identity_sum":
        return z
    lam = spec.link_A / (1.0 + spec.link_B * np.exp(np.clip(-z, -_EXP_CLIP, _EXP_CLIP)))
    return lam


def simulate_statespace(
    spec: StateSpaceSpec,
    n_bins: int,
    dt: float,
    seed: int,
    x0: np.ndarray | float | None = None,
    g0: np.ndarray | None = None,
    labels: tuple[str, ...] | None = None,
) -> SimulatedStateSpace:
    """Draw one realization of latent paths, excitation and counts."""
    _check_rates(spec, dt)
    if n_bins < 1:
        raise DomainError("n_bins must be at least 1")
    m = spec.n_nodes
    rng = np.random.Generator(np.random.Philox(seed))
    if x0 is None:
        mean, var = x0_prior(spec, dt)
        x_init = rng.normal(mean, np.sqrt(var))
    else:
        x_init = np.broadcast_to(np.asarray(x0, dtype=float), (m,)).copy()
    x = np.zeros((n_bins + 1, m))
    g = np.zeros((n_bins + 1, m))
    lam = np.zeros((n_bins, m))
    counts = np.zeros((n_bins, m), dtype=np.int64)
    x[0] = x_init
    if g0 is not None:
        g[0] = np.asarray(g0, dtype=float)
    std = transition_noise_std(spec, dt)
    decay = 1.0 - spec.omega2 * dt
    for r in range(n_bins):
        x[r + 1] = latent_drift(spec, x[r], dt) + std * rng.normal(size=m)
        jump = spec.alpha @ counts[r - 1] if r >= 1 else np.zeros(m)
        g[r + 1] = decay * g[r] + jump
        lam[r] = link_intensity(spec, x[r + 1], g[r + 1])
        counts[r] = rng.poisson(lam[r] * dt)
    if labels is None:
        labels = tuple(f"node_{i}" for i in range(m))
    series = CountSeries(counts=counts, dt=dt, labels=labels)
    return SimulatedStateSpace(series=series, x_path=x, g_path=g, lam=lam)
