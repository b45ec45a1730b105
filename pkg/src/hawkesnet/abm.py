"""Agent-based count simulator on a weighted influence graph.

Agents live on the nodes of a directed graph. Each one emits events at
its node's current activity rate, disappears once it has emitted, and
otherwise hops toward more active neighbors. Events pump a decaying
excitation level that feeds back into the activity. The emitted counts
look superficially like a linear self-exciting process but the true
dynamics are not, which makes this a useful stress test for the
estimators in :mod:`hawkesnet.mm` and :mod:`hawkesnet.expkf`.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import DomainError
from .model import CountSeries

__all__ = [
    "AbmConfig",
    "AbmState",
    "abm_step",
    "init_abm_state",
    "movement_probabilities",
    "simulate_abm",
]


def _vector(x, m: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = np.full(m, float(a))
    if a.shape != (m,):
        raise DomainError(f"{name} must be a scalar or length-{m} vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} must be finite")
    return a


@dataclasses.dataclass(frozen=True)
class AbmConfig:
    """Parameters of the agent simulation.

    ``W`` is the influence matrix: ``W[s, s2] > 0`` means events at
    ``s2`` excite node ``s``, and that support set also defines the
    movement neighborhood of ``s``. ``A0`` is the static baseline
    activity, ``omega`` the per-node excitation decay, ``eta`` the
    per-node diffusion mix (0 keeps a node's own level, 1 replaces it
    with the plain sum over its neighborhood), ``Gamma`` the agent
    creation rate. Scalars broadcast to all nodes.
    """

    W: np.ndarray
    A0: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    Gamma: np.ndarray
    dt: float
    seed: int = 0

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DomainError(f"W must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise DomainError("W must be finite and nonnegative")
        m = W.shape[0]
        A0 = _vector(self.A0, m, "A0")
        omega = _vector(self.omega, m, "omega")
        eta = _vector(self.eta, m, "eta")
        Gamma = _vector(self.Gamma, m, "Gamma")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive and finite, got {self.dt}")
        if np.any(A0 <= 0):
            raise DomainError("A0 must be strictly positive")
        if np.any(omega <= 0) or np.any(omega * self.dt >= 1):
            raise DomainError("omega must be positive with omega * dt < 1")
        if np.any(eta < 0) or np.any(eta > 1):
            raise DomainError("eta must lie in [0, 1]")
        if np.any(Gamma < 0):
            raise DomainError("Gamma must be nonnegative")
        for name, val in (("W", W), ("A0", A0), ("omega", omega), ("eta", eta), ("Gamma", Gamma)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_nodes(self) -> int:
        return self.W.shape[0]


@dataclasses.dataclass
class AbmState:
    """Mutable per-step state: excitation level, agents per node, and
    the most recent step's tallies."""

    B: np.ndarray
    occupancy: np.ndarray
    last_events: np.ndarray
    last_born: np.ndarray


def init_abm_state(config: AbmConfig) -> AbmState:
    """Empty starting state: no excitation, no agents."""
    m = config.n_nodes
    return AbmState(
        B=np.zeros(m),
        occupancy=np.zeros(m, dtype=np.int64),
        last_events=np.zeros(m, dtype=np.int64),
        last_born=np.zeros(m, dtype=np.int64),
    )


def movement_probabilities(activity: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Destination distribution over a node's neighborhood.

    Proportional to the neighbors' current activity; uniform as the
    fallback when every neighbor's activity vanishes.
    """
    a = np.asarray(activity, dtype=float)[neighbors]
    total = a.sum()
    if total <= 0:
        return np.full(len(neighbors), 1.0 / len(neighbors))
    return a / total


def _neighbor_lists(W: np.ndarray) -> list[np.ndarray]:
    return [np.nonzero(W[s])[0] for s in range(W.shape[0])]


def abm_step(
    state: AbmState,
    config: AbmConfig,
    rng: np.random.Generator,
    _neighbors: list[np.ndarray] | None = None,
) -> tuple[AbmState, np.ndarray]:
    """Advance one step and return the new state plus event counts.

    Order inside the step is fixed: every agent draws its event count
    from the activity at the start of the step; agents with at least
    one event are removed; the survivors each hop to a neighbor drawn
    proportionally to start-of-step activity (an isolated node's agent
    stays); the excitation is mixed, decayed and bumped by this step's
    events; finally new agents appear.
    """
    m = config.n_nodes
    if _neighbors is None:
        _neighbors = _neighbor_lists(config.W)
    activity = config.A0 + state.B
    n = state.occupancy

    site_of_agent = np.repeat(np.arange(m), n)
    draws = rng.poisson(np.repeat(activity * config.dt, n))
    events = np.bincount(site_of_agent, weights=draws, minlength=m).astype(np.int64)
    removed = np.bincount(site_of_agent[draws > 0], minlength=m)
    survivors = n - removed

    new_occ = np.zeros(m, dtype=np.int64)
    for s in range(m):
        k = int(survivors[s])
        if k == 0:
            continue
        nbrs = _neighbors[s]
        if len(nbrs) == 0:
            new_occ[s] += k
            continue
        moved = rng.multinomial(k, movement_probabilities(activity, nbrs))
        np.add.at(new_occ, nbrs, moved)

    mixed = (1.0 - config.eta) * state.B + config.eta * ((config.W > 0) @ state.B)
    new_B = mixed * (1.0 - config.omega * config.dt) + config.W @ events

    born = rng.poisson(config.Gamma * config.dt)
    new_occ += born

    new_state = AbmState(
        B=new_B,
        occupancy=new_occ,
        last_events=events,
        last_born=born.astype(np.int64),
    )
    return new_state, events


def simulate_abm(
    config: AbmConfig,
    n_steps: int,
    labels: tuple[str, ...] = (),
    init_state: AbmState | None = None,
) -> CountSeries:
    """Run the agent simulation and return the per-step event counts."""
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.seed)))
    state = init_abm_state(config) if init_state is None else init_state
    neighbors = _neighbor_lists(config.W)
    m = config.n_nodes
    counts = np.empty((n_steps, m), dtype=np.int64)
    for k in range(n_steps):
        state, events = abm_step(state, config, rng, _neighbors=neighbors)
        counts[k] = events
    return CountSeries(counts, config.dt, labels=labels)
