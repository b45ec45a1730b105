"""Monte Carlo EM for the latent-background count model.

Each iteration filters the series forward, draws smoothed trajectories
backward, evaluates the exact complete-data objective on them, and then
improves the parameters blockwise: the latent-dynamics block has a
closed-form regression, the observation block (influence matrix, decay,
link shape) is polished with bounded Nelder-Mead restarts that never
accept a value worse than the incumbent on the same smoothed paths.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np
from scipy.optimize import Bounds, lsq_linear, minimize
from scipy.signal import lfilter
from scipy.special import gammaln

from ._parallel import pmap
from .errors import DomainError
from .model import CountSeries
from .smc import SmoothedPaths, bss_backward, pf_forward
from .statespace import (
    StateSpaceSpec,
    excitation_path,
    latent_drift,
    link_intensity,
    x0_prior,
)

__all__ = [
    "EmConfig",
    "EmIterRecord",
    "EmResult",
    "eval_Q",
    "mstep_dynamics",
    "mstep_observation",
    "em_fit",
]

_ESTIMABLE = frozenset(
    {"mu", "omega1", "epsilon", "eta", "alpha", "omega2", "link_A", "link_B"}
)
_EXP_CLIP = 700.0


@dataclasses.dataclass(frozen=True)
class EmConfig:
    """Settings for :func:`em_fit`.

    ``estimate`` names the parameter blocks to update; everything else
    stays frozen at its starting value. ``n_filter``/``n_smooth`` size
    the particle ensembles, ``nm_restarts``/``nm_max_evals`` budget the
    observation-block polish.
    """

    n_filter: int = 400
    n_smooth: int = 100
    max_iters: int = 16
    tol: float = 1e-5
    seed: int = 0
    estimate: frozenset = frozenset({"mu", "omega1", "epsilon", "alpha", "omega2"})
    nm_restarts: int = 3
    nm_max_evals: int = 400
    resample_threshold: float = 0.5

    def __post_init__(self) -> None:
        unknown = set(self.estimate) - _ESTIMABLE
        if unknown:
            raise DomainError(f"unknown parameter names in estimate: {sorted(unknown)}")
        if not self.estimate:
            raise DomainError("estimate must name at least one parameter")
        if self.n_filter < 2 or self.n_smooth < 1:
            raise DomainError("n_filter must be >= 2 and n_smooth >= 1")
        if self.n_smooth > self.n_filter:
            raise DomainError("n_smooth must not exceed n_filter")
        if self.max_iters < 1 or self.tol <= 0:
            raise DomainError("max_iters must be >= 1 and tol positive")
        if not (0.0 < self.resample_threshold <= 1.0):
            raise DomainError("resample_threshold must lie in (0, 1]")
        if self.nm_restarts < 1 or self.nm_max_evals < 10:
            raise DomainError("nm_restarts must be >= 1 and nm_max_evals >= 10")
        object.__setattr__(self, "estimate", frozenset(self.estimate))
        if "eta" in self.estimate and not {"mu", "omega1"} <= self.estimate:
            raise DomainError("estimating eta requires estimating mu and omega1 too")


@dataclasses.dataclass(frozen=True)
class EmIterRecord:
    iteration: int
    rel_change: float
    Q0: float
    Qx: float
    QdN: float


@dataclasses.dataclass(frozen=True)
class EmResult:
    spec: StateSpaceSpec
    trace: tuple[EmIterRecord, ...]
    smoothed: SmoothedPaths
    converged: bool
    n_iters: int


def eval_Q(
    spec: StateSpaceSpec, smoothed: SmoothedPaths, counts: np.ndarray, dt: float
) -> tuple[float, float, float]:
    """Complete-data objective split over the smoothed trajectories.

    Returns the path-averaged exact log densities of the initial state,
    the latent transitions, and the counts. Their sum equals the
    Monte Carlo average of the complete-data log likelihood.
    """
    xs = smoothed.states
    counts = np.asarray(counts, dtype=float)
    n_s = xs.shape[0]
    x0m, x0v = x0_prior(spec, dt)
    d0 = xs[:, 0, :] - x0m[None, :]
    Q0 = float(
        np.sum(-0.5 * np.log(2.0 * np.pi * x0v)[None, :] - 0.5 * d0 * d0 / x0v[None, :])
        / n_s
    )
    drift = latent_drift(spec, xs[:, :-1, :], dt)
    var = (spec.epsilon**2) * dt
    dx = xs[:, 1:, :] - drift
    Qx = float(
        np.sum(-0.5 * np.log(2.0 * np.pi * var)[None, None, :] - 0.5 * dx * dx / var)
        / n_s
    )
    g = excitation_path(spec, counts, dt)
    lam = link_intensity(spec, xs[:, 1:, :], g[None, 1:, :])
    lam_dt = lam * dt
    QdN = float(
        np.sum(counts[None] * np.log(lam_dt) - lam_dt - gammaln(counts + 1.0)[None])
        / n_s
    )
    return Q0, Qx, QdN


def _bounded_fit(F: np.ndarray, y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    res = lsq_linear(F, y, bounds=(lo, hi))
    return res.x


def mstep_dynamics(
    spec: StateSpaceSpec, smoothed: SmoothedPaths, dt: float, estimate: frozenset
) -> StateSpaceSpec:
    """Closed-form update of the latent-dynamics block.

    The transition is linear in its coefficients, so least squares on
    the smoothed (previous state, next state) pairs recovers them;
    coefficient sets that leave the stable region are refit with box
    constraints. The noise scale comes from the residuals under the
    returned (post-freeze) drift.
    """
    wanted = {"mu", "omega1", "epsilon", "eta"} & set(estimate)
    if not wanted:
        return spec
    xs = smoothed.states
    m = spec.n_nodes
    prev = xs[:, :-1, :].reshape(-1, m)
    nxt = xs[:, 1:, :].reshape(-1, m)
    n = prev.shape[0]
    eps_b = 1e-9

    new_mu = spec.mu.copy()
    new_omega1 = spec.omega1.copy()
    new_eta = spec.eta
    fit_mu = "mu" in estimate
    fit_w1 = "omega1" in estimate
    fit_eta = "eta" in estimate and m > 1

    if fit_eta:
        etas = np.empty(m)
        for i in range(m):
            others = prev.sum(axis=1) - prev[:, i]
            F = np.column_stack([prev[:, i], others, np.full(n, dt)])
            b, *_ = np.linalg.lstsq(F, nxt[:, i], rcond=None)
            if not (
                eps_b < b[0] < 1 - eps_b and 0.0 <= b[1] < 1 - eps_b and b[0] + b[1] < 1 - eps_b
            ):
                b = _bounded_fit(
                    F,
                    nxt[:, i],
                    np.array([eps_b, 0.0, -np.inf]),
                    np.array([1 - eps_b, 1 - eps_b, np.inf]),
                )
                if b[0] + b[1] >= 1 - eps_b:
                    scale = (1 - eps_b) / (b[0] + b[1])
                    b[0] *= scale
                    b[1] *= scale
                    warnings.warn(
                        "dynamics regression projected onto the stable region",
                        RuntimeWarning,
                    )
            w1 = (1.0 - b[0] - b[1]) / dt
            etas[i] = b[1] / (b[0] + b[1])
            new_omega1[i] = w1
            new_mu[i] = b[2] / w1
        new_eta = float(etas.mean())
    else:
        for i in range(m):
            if spec.eta > 0.0 and m > 1:
                others = prev.sum(axis=1) - prev[:, i]
                coupled = (1.0 - spec.eta) * prev[:, i] + spec.eta * others
            else:
                coupled = prev[:, i]
            if fit_mu and fit_w1:
                F = np.column_stack([coupled, np.full(n, dt)])
                b, *_ = np.linalg.lstsq(F, nxt[:, i], rcond=None)
                if not (eps_b < b[0] < 1 - eps_b):
                    b = _bounded_fit(
                        F,
                        nxt[:, i],
                        np.array([eps_b, -np.inf]),
                        np.array([1 - eps_b, np.inf]),
                    )
                w1 = (1.0 - b[0]) / dt
                new_omega1[i] = w1
                new_mu[i] = b[1] / w1
            elif fit_mu:
                resid = nxt[:, i] - (1.0 - spec.omega1[i] * dt) * coupled
                new_mu[i] = float(resid.mean()) / (spec.omega1[i] * dt)
            elif fit_w1:
                mu_i = spec.mu[i]
                num = float((coupled - mu_i) @ (nxt[:, i] - mu_i))
                den = float((coupled - mu_i) @ (coupled - mu_i))
                beta = num / den if den > 0 else 1.0 - spec.omega1[i] * dt
                beta = float(np.clip(beta, eps_b, 1 - eps_b))
                new_omega1[i] = (1.0 - beta) / dt

    interim = dataclasses.replace(
        spec, mu=new_mu, omega1=new_omega1, eta=new_eta
    )
    new_epsilon = spec.epsilon
    if "epsilon" in estimate:
        drift = latent_drift(interim, xs[:, :-1, :], dt)
        resid = xs[:, 1:, :] - drift
        ssr = np.sum(resid * resid, axis=(0, 1))
        new_epsilon = np.sqrt(np.maximum(ssr / (n * dt), 1e-24))
    return dataclasses.replace(interim, epsilon=new_epsilon)


def _node_objective_factory(
    spec: StateSpaceSpec,
    exp_x: np.ndarray,
    counts: np.ndarray,
    node: int,
    dt: float,
    layout: list[str],
):
    """Negative count-block objective for one node as a function of the
    packed parameter vector."""
    m = spec.n_nodes
    c_i = counts[:, node].astype(float)
    K = counts.shape[0]
    jump_base = counts[: K - 1].astype(float)  # (K-1, m)
    n_s = exp_x.shape[0]
    logistic = spec.link == "logistic"

    def unpack(vec: np.ndarray):
        pos = 0
        alpha_row = spec.alpha[node]
        omega2 = float(spec.omega2[node])
        A = spec.link_A
        B = spec.link_B
        if "alpha" in layout:
            alpha_row = vec[pos : pos + m]
            pos += m
        if "omega2" in layout:
            omega2 = float(vec[pos])
            pos += 1
        if "link_A" in layout:
            A = float(vec[pos])
            pos += 1
        if "link_B" in layout:
            B = float(vec[pos])
            pos += 1
        return alpha_row, omega2, A, B

    def objective(vec: np.ndarray) -> float:
        alpha_row, omega2, A, B = unpack(vec)
        decay = 1.0 - omega2 * dt
        gs = np.zeros(K)
        if K >= 2:
            jumps = jump_base @ alpha_row
            gs[1:] = lfilter([1.0], [1.0, -decay], jumps)
        z = exp_x + gs[None, :]
        if logistic:
            lam = A / (1.0 + B * np.exp(np.clip(-z, -_EXP_CLIP, _EXP_CLIP)))
        else:
            lam = z
        lam_dt = lam * dt
        val = float(np.sum(c_i[None, :] * np.log(lam_dt) - lam_dt)) / n_s
        return -val

    return objective, unpack


def mstep_observation(
    spec: StateSpaceSpec,
    smoothed: SmoothedPaths,
    counts: np.ndarray,
    dt: float,
    estimate: frozenset,
    rng: np.random.Generator,
    restarts: int = 3,
    max_evals: int = 400,
) -> StateSpaceSpec:
    """Generalized M-step for the count block.

    The intensity of node i depends only on its own influence row,
    decay and the link shape, so nodes are polished independently with
    bounded Nelder-Mead. The incumbent value is always evaluated and
    kept when no restart beats it, so the objective never degrades on
    the given smoothed paths.
    """
    layout = [
        name
        for name in ("alpha", "omega2", "link_A", "link_B")
        if name in estimate
    ]
    if not layout:
        return spec
    m = spec.n_nodes
    if ("link_A" in layout or "link_B" in layout):
        if spec.link != "logistic":
            raise DomainError("link_A/link_B are only estimable under the logistic link")
        if m != 1:
            raise DomainError("link shape estimation is limited to single-node models")
    counts = np.asarray(counts)
    K = counts.shape[0]
    xs = smoothed.states
    new_alpha = spec.alpha.copy()
    new_omega2 = spec.omega2.copy()
    new_A, new_B = spec.link_A, spec.link_B

    for i in range(m):
        exp_x = np.exp(np.clip(xs[:, 1:, i], -_EXP_CLIP, _EXP_CLIP))
        objective, unpack = _node_objective_factory(spec, exp_x, counts, i, dt, layout)
        start = []
        lo: list[float] = []
        hi: list[float] = []
        if "alpha" in layout:
            start.extend(spec.alpha[i].tolist())
            lo.extend([0.0] * m)
            hi.extend([1e4] * m)
        if "omega2" in layout:
            start.append(float(spec.omega2[i]))
            lo.append(0.0)
            hi.append((1.0 - 1e-9) / dt)
        if "link_A" in layout:
            start.append(float(spec.link_A))
            lo.append(1e-9)
            hi.append(1e9)
        if "link_B" in layout:
            start.append(float(spec.link_B))
            lo.append(1e-12)
            hi.append(1e9)
        start = np.asarray(start, dtype=float)
        lo_arr = np.asarray(lo)
        hi_arr = np.asarray(hi)
        best_vec = start
        best_val = objective(start)
        for r in range(restarts):
            if r == 0:
                x0 = start
            else:
                jitter = start * np.exp(rng.normal(0.0, 0.4, start.shape))
                jitter = jitter + (start == 0.0) * rng.uniform(0.0, 0.1, start.shape)
                x0 = np.clip(jitter, lo_arr, hi_arr)
            res = minimize(
                objective,
                x0,
                method="Nelder-Mead",
                bounds=Bounds(lo_arr, hi_arr),
                options={
                    "maxfev": max_evals,
                    "xatol": 1e-7,
                    "fatol": 1e-9,
                },
            )
            if res.fun < best_val:
                best_val = float(res.fun)
                best_vec = np.asarray(res.x, dtype=float)
        alpha_row, omega2, A, B = unpack(best_vec)
        if "alpha" in layout:
            new_alpha[i] = alpha_row
        if "omega2" in layout:
            new_omega2[i] = omega2
        if "link_A" in layout:
            new_A = A
        if "link_B" in layout:
            new_B = B
    return dataclasses.replace(
        spec, alpha=new_alpha, omega2=new_omega2, link_A=new_A, link_B=new_B
    )


def _param_vector(spec: StateSpaceSpec, estimate: frozenset) -> np.ndarray:
    parts = []
    for name in sorted(estimate):
        if name == "eta":
            parts.append(np.atleast_1d(float(spec.eta)))
        elif name in ("link_A", "link_B"):
            parts.append(np.atleast_1d(float(getattr(spec, name))))
        else:
            parts.append(np.asarray(getattr(spec, name), dtype=float).ravel())
    return np.concatenate(parts)


def em_fit(series: CountSeries, init_spec: StateSpaceSpec, config: EmConfig) -> EmResult:
    """Run the Monte Carlo EM loop.

    Every iteration re-draws the initial-state ensemble from the
    current iterate's prior (mean mu, variance epsilon * dt), so any
    explicit prior override on the starting spec is dropped. Stops when
    the largest relative change across the estimated parameters falls
    below ``tol``.
    """
    if len(series.segment_starts) > 1:
        raise DomainError("EM requires a gap-free series (single segment)")
    spec_cur = dataclasses.replace(init_spec, x0_mean=None, x0_var=None)
    if spec_cur.n_nodes != series.n_nodes:
        raise DomainError("spec and series disagree on the number of nodes")
    root = np.random.SeedSequence(config.seed)
    iter_seeds = root.spawn(config.max_iters)
    trace: list[EmIterRecord] = []
    converged = False
    smoothed: SmoothedPaths | None = None
    n_iters = 0
    for it in range(config.max_iters):
        s_pf, s_bss, s_nm = iter_seeds[it].spawn(3)
        cloud = pf_forward(
            spec_cur,
            series.counts,
            series.dt,
            config.n_filter,
            s_pf,
            resample_threshold=config.resample_threshold,
        )
        smoothed = bss_backward(cloud, spec_cur, config.n_smooth, s_bss)
        Q0, Qx, QdN = eval_Q(spec_cur, smoothed, series.counts, series.dt)
        old_vec = _param_vector(spec_cur, config.estimate)
        # the two blocks touch disjoint parameters and the count objective
        # ignores the dynamics block, so both maximizations start from the
        # same iterate and merge positionally
        tasks = (
            lambda: mstep_dynamics(spec_cur, smoothed, series.dt, config.estimate),
            lambda: mstep_observation(
                spec_cur,
                smoothed,
                series.counts,
                series.dt,
                config.estimate,
                np.random.Generator(np.random.Philox(s_nm)),
                restarts=config.nm_restarts,
                max_evals=config.nm_max_evals,
            ),
        )
        spec_dyn, spec_obs = pmap(lambda task: task(), tasks)
        spec_new = dataclasses.replace(
            spec_dyn,
            alpha=spec_obs.alpha,
            omega2=spec_obs.omega2,
            link_A=spec_obs.link_A,
            link_B=spec_obs.link_B,
        )
        new_vec = _param_vector(spec_new, config.estimate)
        rel = float(np.max(np.abs(new_vec - old_vec) / np.maximum(1.0, np.abs(old_vec))))
        trace.append(EmIterRecord(iteration=it, rel_change=rel, Q0=Q0, Qx=Qx, QdN=QdN))
        spec_cur = spec_new
        n_iters = it + 1
        if rel < config.tol:
            converged = True
            break
    assert smoothed is not None
    return EmResult(
        spec=spec_cur,
        trace=tuple(trace),
        smoothed=smoothed,
        converged=converged,
        n_iters=n_iters,
    )
