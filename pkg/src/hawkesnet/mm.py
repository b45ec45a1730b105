"""Batch network estimation by iterative surrogate minimization.

Each sweep minimizes a convex upper bound of the negative log likelihood
that touches it at the current iterate, which yields closed-form updates.
Two modes are provided:

* ``fixed``: the decay is known and shared; baseline rates and the
  influence matrix get multiplicative updates whose excitation weights
  use a small-decay truncation (second order in gamma).
* ``full``: per-pair decays are estimated as well; the linear intensity
  term is bounded by an arithmetic-geometric mean inequality, giving
  quadratic stationarity conditions per pair.

Optional conjugate regularization: a gamma prior on each baseline rate
and, in full mode, a beta prior on each decay whose update solves a
quartic on (0, 1).
"""

from __future__ import annotations

import dataclasses
import math
import warnings

import numpy as np
from scipy.signal import lfilter

from .errors import ConvergenceError, DomainError
from .model import CountSeries, HawkesParams

__all__ = [
    "MmAccumulators",
    "MmConfig",
    "MmResult",
    "mm_precompute",
    "mm_step_fixed",
    "mm_step_full",
    "regularized_mu_update",
    "solve_gamma_quartic",
    "surrogate_value",
    "mm_fit",
]

_MU_FLOOR = float(np.finfo(float).tiny)


def _decay_scan(x: np.ndarray, gamma: float) -> np.ndarray:
    """y[t] = gamma * y[t-1] + x[t] along axis 0, y[-1] = 0."""
    if gamma == 0.0:
        return x.astype(float)
    return lfilter([1.0], [1.0, -gamma], x, axis=0)


@dataclasses.dataclass(frozen=True)
class MmAccumulators:
    """Per-bin decayed-count sums for one shared decay value.

    ``R[k, j]`` collects counts of source j before bin k, discounted by
    the decay's age; ``T[k, j]`` is the same sum with each term weighted
    by its age. ``R_next`` is the hand-off state one step past the data.
    ``excit_inner``/``excit_last`` are the pieces of the excitation
    weight each source accumulates over the window: all counts but the
    last two rows of each segment, and the second-to-last row.
    """

    gamma: float
    R: np.ndarray
    T: np.ndarray
    R_next: np.ndarray
    excit_inner: np.ndarray
    excit_last: np.ndarray


def mm_precompute(series: CountSeries, gamma: float) -> MmAccumulators:
    """Build the decayed-count accumulators for a shared decay value.

    Linear in the series length; segment cuts reset the recursions.
    """
    if not (0.0 <= gamma < 1.0):
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    c = series.counts.astype(float)
    K, m = c.shape
    R = np.zeros((K, m))
    T = np.zeros((K, m))
    inner = np.zeros(m)
    last = np.zeros(m)
    for s, e in series.segment_bounds():
        if e - s >= 2:
            R[s + 1 : e] = _decay_scan(c[s : e - 1], gamma)
            T[s + 1 : e] = _decay_scan(gamma * R[s : e - 1], gamma)
            inner += c[s : e - 2].sum(axis=0)
            last += c[e - 2]
    s_last, e_last = series.segment_bounds()[-1]
    R_next = gamma * R[e_last - 1] + c[e_last - 1]
    return MmAccumulators(
        gamma=float(gamma), R=R, T=T, R_next=R_next, excit_inner=inner, excit_last=last
    )


def _intensities(mu: np.ndarray, alpha: np.ndarray, R: np.ndarray) -> np.ndarray:
    return mu[None, :] + R @ alpha.T


def _nll_value(lam: np.ndarray, counts: np.ndarray, dt: float) -> float:
    lam_dt = lam * dt
    return float(np.sum(lam_dt - counts * np.log(lam_dt)))


def regularized_mu_update(
    weighted_counts: np.ndarray,
    n_bins: int,
    dt: float,
    a: np.ndarray | float | None = None,
    b: float | None = None,
) -> np.ndarray:
    """Baseline update from the per-node weighted count sums.

    ``weighted_counts[i]`` is ``sum_k counts[k,i] * mu[i] / lam[k,i]``.
    With a gamma prior (shape ``a``, rate ``b``) the update becomes
    ``(weighted_counts + a - 1) / (n_bins * dt + b)``; without it the
    denominator is just the scored time. Nonpositive results (possible
    when ``a < 1`` meets empty data) are clamped to a tiny positive
    floor with a warning.
    """
    weighted_counts = np.asarray(weighted_counts, dtype=float)
    if a is None:
        mu_new = weighted_counts / (n_bins * dt)
    else:
        if b is None or b < 0:
            raise DomainError("prior rate b must be a nonnegative number")
        mu_new = (weighted_counts + np.asarray(a, dtype=float) - 1.0) / (n_bins * dt + b)
    bad = mu_new <= 0
    if np.any(bad):
        warnings.warn(
            f"baseline update nonpositive for {int(bad.sum())} node(s); clamped to a "
            "positive floor",
            RuntimeWarning,
        )
        mu_new = np.where(bad, _MU_FLOOR, mu_new)
    return mu_new


def mm_step_fixed(
    params: HawkesParams,
    series: CountSeries,
    acc: MmAccumulators,
    mu_prior: tuple[np.ndarray | float, float] | None = None,
) -> tuple[HawkesParams, float]:
    """One fixed-decay sweep. Returns updated parameters and the negative
    log likelihood at the *input* parameters.

    A source whose excitation weight is zero (silent inside the window)
    gets its whole influence column set to zero with a warning.
    """
    counts = series.counts
    K, m = counts.shape
    lam = _intensities(params.mu, params.alpha, acc.R)
    nll_cur = _nll_value(lam, counts, series.dt)
    W = counts / lam
    weighted = params.mu * W.sum(axis=0)
    if mu_prior is None:
        mu_new = regularized_mu_update(weighted, K, series.dt)
    else:
        mu_new = regularized_mu_update(weighted, K, series.dt, a=mu_prior[0], b=mu_prior[1])
    numer = params.alpha * (W.T @ acc.R)
    denom = series.dt * ((1.0 + acc.gamma) * acc.excit_inner + acc.excit_last)
    silent = denom == 0.0
    if np.any(silent):
        names = [series.labels[j] for j in np.flatnonzero(silent)]
        warnings.warn(
            f"sources with no usable excitation window: {names}; their influence "
            "columns are set to zero",
            RuntimeWarning,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha_new = np.where(silent[None, :], 0.0, numer / np.where(silent, 1.0, denom)[None, :])
    new = HawkesParams(mu=mu_new, alpha=alpha_new, gamma=acc.gamma)
    return new, nll_cur


def _quadratic_root(A: np.ndarray, B: np.ndarray, C: np.ndarray, form: str) -> np.ndarray:
    disc = np.sqrt(B * B + 4.0 * A * C)
    if form == "quadratic":
        return (-B + disc) / (2.0 * A)
    if form == "paper_display":
        return -B + disc / (2.0 * A)
    raise DomainError(f"unknown root form {form!r}")


def _pair_accumulators(
    series: CountSeries, gamma_row: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """R and T for one receiving node whose sources decay at gamma_row."""
    c = series.counts.astype(float)
    K, m = c.shape
    R = np.zeros((K, m))
    T = np.zeros((K, m))
    for s, e in series.segment_bounds():
        if e - s < 2:
            continue
        for j in range(m):
            R[s + 1 : e, j] = _decay_scan(c[s : e - 1, j], gamma_row[j])
            T[s + 1 : e, j] = _decay_scan(gamma_row[j] * R[s : e - 1, j], gamma_row[j])
    return R, T


def mm_step_full(
    params: HawkesParams,
    series: CountSeries,
    root_form: str = "quadratic",
    mu_prior: tuple[np.ndarray | float, float] | None = None,
    gamma_prior: tuple[float, float] | None = None,
    quartic_a: np.ndarray | None = None,
) -> tuple[HawkesParams, float]:
    """One full sweep updating baselines, influences and per-pair decays.

    Requires strictly positive current influences (the stationarity
    coefficients divide by them); pairs whose coefficients vanish are
    frozen for the sweep with a warning. With ``gamma_prior=(c, d)`` the
    decay update solves the prior-penalized quartic instead, using the
    passed-through ``quartic_a`` knob (one value per receiving node).
    """
    counts = series.counts
    K, m = counts.shape
    if not params.pairwise_gamma:
        raise DomainError("full mode needs a per-pair decay matrix")
    gamma = np.asarray(params.gamma, dtype=float)
    alpha = np.asarray(params.alpha, dtype=float)
    dt = series.dt

    inner = np.zeros(m)
    last = np.zeros(m)
    for s, e in series.segment_bounds():
        if e - s >= 2:
            inner += counts[s : e - 2].sum(axis=0).astype(float)
            last += counts[e - 2].astype(float)

    lam = np.empty((K, m))
    Cmat = np.empty((m, m))
    Emat = np.empty((m, m))
    nll_cur = 0.0
    weighted = np.empty(m)
    for i in range(m):
        R_i, T_i = _pair_accumulators(series, gamma[i])
        lam_i = params.mu[i] + R_i @ alpha[i]
        lam[:, i] = lam_i
        lam_dt = lam_i * dt
        nll_cur += float(np.sum(lam_dt - counts[:, i] * np.log(lam_dt)))
        w_i = counts[:, i] / lam_i
        weighted[i] = params.mu[i] * w_i.sum()
        Cmat[i] = alpha[i] * (w_i @ R_i)
        Emat[i] = alpha[i] * (w_i @ T_i)

    if mu_prior is None:
        mu_new = regularized_mu_update(weighted, K, dt)
    else:
        mu_new = regularized_mu_update(weighted, K, dt, a=mu_prior[0], b=mu_prior[1])

    with np.errstate(divide="ignore", invalid="ignore"):
        Amat = dt * inner[None, :] * (1.0 + gamma) / alpha
        Dmat = dt * inner[None, :] * alpha / (1.0 + gamma)
    Bvec = dt * last

    frozen = ~np.isfinite(Amat) | (Amat <= 0.0) | (Dmat <= 0.0)
    if np.any(frozen):
        warnings.warn(
            f"{int(frozen.sum())} influence pair(s) frozen this sweep (vanishing "
            "stationarity coefficients)",
            RuntimeWarning,
        )
    A_safe = np.where(frozen, 1.0, Amat)
    D_safe = np.where(frozen, 1.0, Dmat)
    alpha_new = np.where(
        frozen, alpha, _quadratic_root(A_safe, Bvec[None, :], Cmat, root_form)
    )
    if gamma_prior is None:
        gamma_new = _quadratic_root(D_safe, D_safe, Emat, root_form)
    else:
        c_hyp, d_hyp = gamma_prior
        if quartic_a is None:
            raise DomainError("gamma_prior requires the quartic 'a' knob")
        gamma_new = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                if frozen[i, j]:
                    continue
                gamma_new[i, j] = solve_gamma_quartic(
                    D_safe[i, j], Emat[i, j], c_hyp, d_hyp, float(np.asarray(quartic_a)[i])
                )
    gamma_new = np.where(frozen, gamma, gamma_new)
    gamma_new = np.clip(gamma_new, 0.0, 1.0 - 1e-9)
    alpha_new = np.maximum(alpha_new, 0.0)
    new = HawkesParams(mu=mu_new, alpha=alpha_new, gamma=gamma_new)
    return new, nll_cur


def _quartic_coeffs(D: float, E: float, c: float, d: float, a: float) -> np.ndarray:
    return np.array([-D, 0.0, D + E, c - d - E, -a])


def _quartic_antiderivative(x: float, D: float, E: float, c: float, d: float, a: float) -> float:
    return (
        -(D / 5.0) * x**5 + ((D + E) / 3.0) * x**3 + ((c - d - E) / 2.0) * x**2 - a * x
    )


def solve_gamma_quartic(
    D: float, E: float, c: float, d: float, a: float, n_grid: int = 1024
) -> float:
    """Root of ``-D x^4 + (D+E) x^2 + (c-d-E) x - a`` inside (0, 1).

    Sign-change brackets on a grid are bisected and polished by Newton
    steps. Several interior roots are ranked by the antiderivative (the
    quartic is the gradient of the restricted objective); no interior
    root falls back to the better endpoint, clamped inward, with a
    warning.
    """
    if not (D > 0 and math.isfinite(D)):
        raise DomainError(f"quartic coefficient D must be positive, got {D}")
    for name, v in [("E", E), ("c", c), ("d", d), ("a", a)]:
        if not math.isfinite(v):
            raise DomainError(f"quartic coefficient {name} must be finite")
    coeffs = _quartic_coeffs(D, E, c, d, a)
    scale = max(1.0, float(np.max(np.abs(coeffs))))

    def q(x: float) -> float:
        return float(np.polyval(coeffs, x))

    def dq(x: float) -> float:
        return float(np.polyval(np.polyder(coeffs), x))

    lo, hi = 1e-12, 1.0 - 1e-12
    xs = np.linspace(lo, hi, n_grid)
    vals = np.polyval(coeffs, xs)
    roots: list[float] = []
    for t in range(n_grid - 1):
        va, vb = vals[t], vals[t + 1]
        if va == 0.0:
            roots.append(float(xs[t]))
            continue
        if va * vb < 0.0:
            x0, x1 = float(xs[t]), float(xs[t + 1])
            f0 = va
            for _ in range(200):
                mid = 0.5 * (x0 + x1)
                fm = q(mid)
                if fm == 0.0 or (x1 - x0) < 1e-15:
                    x0 = x1 = mid
                    break
                if f0 * fm < 0.0:
                    x1 = mid
                else:
                    x0, f0 = mid, fm
            root = 0.5 * (x0 + x1)
            for _ in range(5):  # Newton polish
                slope = dq(root)
                if slope == 0.0:
                    break
                step = q(root) / slope
                if not math.isfinite(step):
                    break
                cand = root - step
                if lo <= cand <= hi:
                    root = cand
            roots.append(root)
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))

    deduped: list[float] = []
    for r in sorted(roots):
        if not deduped or abs(r - deduped[-1]) > 1e-9:
            deduped.append(r)
    if not deduped:
        warnings.warn(
            "decay quartic has no root inside (0, 1); using the better endpoint",
            RuntimeWarning,
        )
        cands = [1e-6, 1.0 - 1e-6]
        return max(cands, key=lambda x: _quartic_antiderivative(x, D, E, c, d, a))
    best = max(deduped, key=lambda x: _quartic_antiderivative(x, D, E, c, d, a))
    if abs(q(best)) >= 1e-10 * scale:
        raise ConvergenceError(
            f"quartic root residual {abs(q(best)):.3e} exceeds tolerance for scale {scale:.3e}"
        )
    return best


def surrogate_value(
    eval_params: HawkesParams, ref_params: HawkesParams, series: CountSeries
) -> float:
    """Upper bound of the negative log likelihood, anchored at ``ref_params``.

    Equals ``nll(ref_params, series)`` when evaluated at the anchor and
    dominates ``nll(eval_params, series)`` everywhere else. Exposed for
    verification; the sweeps never need it.
    """
    m = ref_params.n_nodes
    counts = series.counts
    dt = series.dt
    ref_gamma = (
        np.asarray(ref_params.gamma)
        if ref_params.pairwise_gamma
        else np.tile(ref_params.node_gamma()[:, None], (1, m))
    )
    eval_gamma = (
        np.asarray(eval_params.gamma)
        if eval_params.pairwise_gamma
        else np.tile(eval_params.node_gamma()[:, None], (1, m))
    )
    total = 0.0
    for i in range(m):
        R_ref, T_ref = _pair_accumulators(series, ref_gamma[i])
        lam_ref = ref_params.mu[i] + R_ref @ ref_params.alpha[i]
        R_eval, _ = _pair_accumulators(series, eval_gamma[i])
        lam_eval = eval_params.mu[i] + R_eval @ eval_params.alpha[i]
        total += dt * float(lam_eval.sum())

        w = counts[:, i] / lam_ref
        log_lam_ref = np.log(lam_ref * dt)
        # baseline share of the bound
        total -= float(
            np.sum(
                w
                * ref_params.mu[i]
                * (log_lam_ref + math.log(eval_params.mu[i] / ref_params.mu[i]))
            )
        )
        # excitation share, one term per source
        for j in range(m):
            phi_sum = ref_params.alpha[i, j] * R_ref[:, j]
            if not np.any(phi_sum):
                # zero-weight component: drops out of the bound
                continue
            if eval_params.alpha[i, j] == 0.0:
                return math.inf
            log_ratio_alpha = math.log(eval_params.alpha[i, j] / ref_params.alpha[i, j])
            total -= float(np.sum(w * phi_sum * (log_lam_ref + log_ratio_alpha)))
            if eval_gamma[i, j] != ref_gamma[i, j]:
                age_weight = float(np.sum(w * ref_params.alpha[i, j] * T_ref[:, j]))
                if age_weight > 0.0 and eval_gamma[i, j] == 0.0:
                    return math.inf
                if age_weight > 0.0:
                    total -= age_weight * math.log(eval_gamma[i, j] / ref_gamma[i, j])
    return total


@dataclasses.dataclass(frozen=True)
class MmConfig:
    """Settings for :func:`mm_fit`.

    ``mode`` is ``"fixed"`` (known shared decay in ``gamma``) or
    ``"full"`` (per-pair decays estimated; ``gamma`` is the starting
    value). ``mu_prior`` may be ``None``, an ``(a, b)`` pair, or
    ``"auto"`` for the data rule a_i = half the node's total count and
    b = number of bins. ``gamma_prior`` (full mode) takes ``(c, d)``
    hyperparameters, with ``quartic_a`` passed through to the decay
    quartic (``"auto"`` reuses the baseline prior shape).
    ``strict_monotone=None`` aborts on a likelihood increase only when
    the decay is small enough (<= 0.05) for the truncated excitation
    weights to be near exact; True/False force the choice.
    """

    mode: str = "fixed"
    gamma: float | np.ndarray = 0.15
    init_mu: np.ndarray | None = None
    init_alpha: np.ndarray | float = 0.1
    tol: float = 1e-6
    max_iters: int = 500
    mu_prior: tuple[np.ndarray | float, float] | str | None = None
    gamma_prior: tuple[float, float] | None = None
    quartic_a: np.ndarray | float | str = "auto"
    root_form: str = "quadratic"
    strict_monotone: bool | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "full"):
            raise DomainError(f"mode must be 'fixed' or 'full', got {self.mode!r}")
        if self.root_form not in ("quadratic", "paper_display"):
            raise DomainError(f"unknown root_form {self.root_form!r}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise DomainError("tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")


@dataclasses.dataclass(frozen=True)
class MmResult:
    """Fit output.

    ``params`` is the final iterate. ``best_params``/``best_nll`` track
    the lowest scored likelihood along the way; in fixed mode the two
    coincide for practical purposes, but the full-decay sweeps are not
    guaranteed descent steps (their decay map can drift to the clip),
    so the incumbent is kept explicitly. ``nll_trace[n]`` is the value
    at the parameters entering sweep ``n``.
    """

    params: HawkesParams
    nll_trace: np.ndarray
    converged: bool
    n_iters: int
    monotone_violations: tuple[tuple[int, float], ...]
    best_params: HawkesParams
    best_nll: float


def _auto_mu_prior(series: CountSeries) -> tuple[np.ndarray, float]:
    K = series.n_bins
    a = 0.5 * series.counts.mean(axis=0) * K
    return a, float(K)


def mm_fit(series: CountSeries, config: MmConfig) -> MmResult:
    """Iterate surrogate sweeps until the likelihood stalls.

    Stops when the relative change of the negative log likelihood drops
    below ``config.tol`` or the sweep budget runs out. An increase of
    the likelihood is a bug indicator when the truncated excitation
    weights are essentially exact, so it aborts in that regime (see
    ``strict_monotone``); otherwise increases are recorded in
    ``monotone_violations`` and warned about once at the end.
    """
    m = series.n_nodes
    K = series.n_bins
    counts = series.counts

    if config.init_mu is not None:
        mu = np.asarray(config.init_mu, dtype=float)
    else:
        mu = 0.5 * counts.mean(axis=0) / series.dt
        mu = np.maximum(mu, 1e-3)
    alpha = np.asarray(config.init_alpha, dtype=float)
    if alpha.ndim == 0:
        alpha = np.full((m, m), float(alpha))

    mu_prior: tuple[np.ndarray | float, float] | None
    if config.mu_prior == "auto":
        mu_prior = _auto_mu_prior(series)
    else:
        mu_prior = config.mu_prior  # type: ignore[assignment]

    if config.mode == "fixed":
        gamma = np.asarray(config.gamma, dtype=float)
        if gamma.ndim != 0:
            raise DomainError("fixed mode takes a single shared decay value")
        gamma = float(gamma)
        acc = mm_precompute(series, gamma)
        params = HawkesParams(mu=mu, alpha=alpha, gamma=gamma)
        if config.strict_monotone is None:
            strict = gamma <= 0.05
        else:
            strict = config.strict_monotone
    else:
        gamma = np.asarray(config.gamma, dtype=float)
        if gamma.ndim == 0:
            gamma = np.full((m, m), float(gamma))
        if np.any(alpha <= 0):
            raise DomainError("full mode needs strictly positive starting influences")
        params = HawkesParams(mu=mu, alpha=alpha, gamma=gamma)
        strict = False if config.strict_monotone is None else config.strict_monotone

    quartic_a: np.ndarray | None = None
    if config.gamma_prior is not None:
        if config.mode != "full":
            raise DomainError("gamma_prior applies to full mode only")
        if isinstance(config.quartic_a, str):
            if config.quartic_a != "auto":
                raise DomainError(f"unknown quartic_a setting {config.quartic_a!r}")
            quartic_a = _auto_mu_prior(series)[0]
        else:
            quartic_a = np.broadcast_to(np.asarray(config.quartic_a, dtype=float), (m,)).copy()

    trace: list[float] = []
    violations: list[tuple[int, float]] = []
    converged = False
    n_iters = 0
    best_nll = math.inf
    best_params = params
    for it in range(config.max_iters):
        if config.mode == "fixed":
            params_new, nll_cur = mm_step_fixed(params, series, acc, mu_prior=mu_prior)
        else:
            params_new, nll_cur = mm_step_full(
                params,
                series,
                root_form=config.root_form,
                mu_prior=mu_prior,
                gamma_prior=config.gamma_prior,
                quartic_a=quartic_a,
            )
        if nll_cur < best_nll:
            best_nll = nll_cur
            best_params = params
        if trace:
            rise = nll_cur - trace[-1]
            rel_rise = rise / max(1.0, abs(trace[-1]))
            if rel_rise > 1e-12:
                violations.append((it, float(rel_rise)))
                if strict and rel_rise > 1e-6:
                    raise ConvergenceError(
                        f"likelihood rose by relative {rel_rise:.3e} at sweep {it} in a "
                        "regime where sweeps are exact descent; this indicates a bug"
                    )
            if abs(rise) <= config.tol * max(1.0, abs(trace[-1])):
                trace.append(nll_cur)
                params = params_new
                n_iters = it + 1
                converged = True
                break
        trace.append(nll_cur)
        params = params_new
        n_iters = it + 1
    if violations:
        worst = max(v for _, v in violations)
        warnings.warn(
            f"likelihood rose during {len(violations)} sweep(s); worst relative rise "
            f"{worst:.3e}",
            RuntimeWarning,
        )
    if trace and trace[-1] > best_nll + 1e-9 * max(1.0, abs(best_nll)):
        warnings.warn(
            "final iterate scores worse than an earlier one; best_params holds the "
            "incumbent",
            RuntimeWarning,
        )
    return MmResult(
        params=params,
        nll_trace=np.asarray(trace),
        converged=converged,
        n_iters=n_iters,
        monotone_violations=tuple(violations),
        best_params=best_params,
        best_nll=best_nll,
    )
