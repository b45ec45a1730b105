"""Discrete-time multivariate Hawkes model on binned event counts.

The model tracks one conditional intensity per node. Within a bin of width
``dt`` the count of node ``i`` is Poisson with mean ``lam[k, i] * dt``, and
the intensity decays geometrically toward the baseline while past counts
excite it through a nonnegative influence matrix:

    lam[0]  = mu
    lam[k]  = mu + (lam[k - 1] - mu) * gamma + alpha @ counts[k - 1]

so the intensity paired with bin ``k`` depends only on bins before ``k``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import ConvergenceError, DomainError

__all__ = [
    "CountSeries",
    "HawkesParams",
    "IntensityPath",
    "intensity_path",
    "closed_form_intensity",
    "nll",
    "nll_by_node",
    "simulate_hawkes",
    "stationary_mean",
    "stability_margin",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True)
class CountSeries:
    """Binned event counts: one row per bin, one column per node.

    ``segment_starts`` marks rows where the series restarts after a cut
    (for example after gap filtering). Estimators reset decayed state at
    each segment start instead of carrying excitation across the cut.
    """

    counts: np.ndarray
    dt: float
    labels: tuple[str, ...] = ()
    segment_starts: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise DomainError(f"counts must be 2-d (bins x nodes), got shape {c.shape}")
        if c.shape[0] == 0 or c.shape[1] == 0:
            raise DomainError("series must contain at least one bin and one node")
        if c.size and (not np.issubdtype(c.dtype, np.number) or not np.all(np.isfinite(c))):
            raise DomainError("counts must be finite numbers")
        if np.any(c < 0) or np.any(c != np.floor(c)):
            raise DomainError("counts must be nonnegative integers")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive and finite, got {self.dt}")
        labels = tuple(self.labels) if self.labels else tuple(f"node_{j}" for j in range(c.shape[1]))
        if len(labels) != c.shape[1]:
            raise DomainError(f"{len(labels)} labels for {c.shape[1]} nodes")
        if len(set(labels)) != len(labels):
            raise DomainError("node labels must be unique")
        segs = tuple(int(s) for s in self.segment_starts)
        if not segs or segs[0] != 0 or list(segs) != sorted(set(segs)):
            raise DomainError("segment_starts must be sorted, unique and begin with 0")
        if segs[-1] >= max(c.shape[0], 1):
            raise DomainError("segment start beyond last bin")
        object.__setattr__(self, "counts", _readonly(c.astype(np.int64)))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "segment_starts", segs)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.counts.shape[1]

    def segment_bounds(self) -> list[tuple[int, int]]:
        """Half-open (start, stop) row ranges of the contiguous segments."""
        starts = list(self.segment_starts)
        return list(zip(starts, starts[1:] + [self.n_bins]))


def _normalize_gamma(gamma, m: int) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        g = np.full(m, float(g))
    if g.shape not in ((m,), (m, m)):
        raise DomainError(f"gamma must be scalar, ({m},) or ({m},{m}), got shape {g.shape}")
    if not np.all(np.isfinite(g)) or np.any(g < 0) or np.any(g >= 1):
        raise DomainError("gamma entries must lie in [0, 1)")
    return g


@dataclasses.dataclass(frozen=True)
class HawkesParams:
    """Baseline rates ``mu``, influence matrix ``alpha`` and decay ``gamma``.

    ``alpha[i, j]`` is the jump added to node i's intensity per event at
    node j. ``gamma`` may be a scalar, one value per receiving node, or a
    full per-pair matrix.
    """

    mu: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray | float

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        if mu.ndim != 1:
            raise DomainError(f"mu must be 1-d, got shape {mu.shape}")
        m = mu.shape[0]
        if alpha.shape != (m, m):
            raise DomainError(f"alpha must be ({m},{m}), got {alpha.shape}")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise DomainError("mu entries must be positive and finite")
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise DomainError("alpha entries must be nonnegative and finite")
        g = _normalize_gamma(self.gamma, m)
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "alpha", _readonly(alpha))
        object.__setattr__(self, "gamma", _readonly(g))

    @property
    def n_nodes(self) -> int:
        return self.mu.shape[0]

    @property
    def pairwise_gamma(self) -> bool:
        return self.gamma.ndim == 2

    def node_gamma(self) -> np.ndarray:
        """Per-node decay; rejects per-pair parameterizations."""
        if self.pairwise_gamma:
            raise DomainError("operation requires scalar or per-node gamma")
        return self.gamma


@dataclasses.dataclass(frozen=True)
class IntensityPath:
    """Conditional intensity per bin, aligned row for row with the counts."""

    lam: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", _readonly(np.asarray(self.lam, dtype=float)))


def _check_dims(params: HawkesParams, series: CountSeries) -> None:
    if params.n_nodes != series.n_nodes:
        raise DomainError(
            f"parameter dimension {params.n_nodes} does not match {series.n_nodes} nodes"
        )


def intensity_path(params: HawkesParams, series: CountSeries) -> IntensityPath:
    """Run the intensity recursion over the whole series.

    Row k of the result is the intensity governing bin k, so it depends
    only on counts in earlier bins. The recursion restarts from ``mu`` at
    every segment start.
    """
    _check_dims(params, series)
    counts = series.counts
    K, m = counts.shape
    lam = np.empty((K, m), dtype=float)
    if params.pairwise_gamma:
        gmat = params.gamma
        for start, stop in series.segment_bounds():
            state = np.zeros((m, m))  # decayed counts per (receiver, source) pair
            for k in range(start, stop):
                lam[k] = params.mu + np.sum(params.alpha * state, axis=1)
                state = gmat * state + counts[k][None, :]
    else:
        g = params.node_gamma()
        for start, stop in series.segment_bounds():
            lam[start] = params.mu
            for k in range(start + 1, stop):
                lam[k] = params.mu + (lam[k - 1] - params.mu) * g + params.alpha @ counts[k - 1]
    return IntensityPath(lam=lam, dt=series.dt)


def closed_form_intensity(params: HawkesParams, series: CountSeries, k: int) -> np.ndarray:
    """Intensity at bin ``k`` as an explicit geometric sum over past counts.

    Valid for 0 <= k <= n_bins; ``k == n_bins`` gives the one-step-ahead
    value after the last bin. Exists mainly as a slow cross-check of
    :func:`intensity_path`; cost is O(k * m^2).
    """
    _check_dims(params, series)
    K, m = series.counts.shape
    if not 0 <= k <= K:
        raise DomainError(f"k must lie in [0, {K}], got {k}")
    bounds = series.segment_bounds()
    seg = None
    for start, stop in bounds:
        if start <= k < stop:
            seg = (start, stop)
            break
    if seg is None:  # k == K: continuation of the final segment
        seg = bounds[-1]
    start = seg[0]
    lam = params.mu.astype(float).copy()
    gmat = params.gamma if params.pairwise_gamma else None
    g = None if params.pairwise_gamma else params.node_gamma()
    for l in range(start, k):
        if gmat is not None:
            lam += np.sum(params.alpha * series.counts[l][None, :] * gmat ** (k - 1 - l), axis=1)
        else:
            lam += g ** (k - 1 - l) * (params.alpha @ series.counts[l])
    return lam


def _path_or_error(params: HawkesParams, series: CountSeries) -> np.ndarray:
    lam = intensity_path(params, series).lam
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        k, i = np.argwhere((lam <= 0) | ~np.isfinite(lam))[0]
        raise DomainError(f"nonpositive intensity at bin {k}, node {i}")
    return lam


def nll_by_node(params: HawkesParams, series: CountSeries) -> np.ndarray:
    """Per-node negative log likelihood, factorial terms dropped.

    Node i contributes ``sum_k lam[k,i]*dt - counts[k,i]*log(lam[k,i]*dt)``.
    """
    _check_dims(params, series)
    lam = _path_or_error(params, series)
    lam_dt = lam * series.dt
    return np.sum(lam_dt - series.counts * np.log(lam_dt), axis=0)


def nll(params: HawkesParams, series: CountSeries) -> float:
    """Total negative log likelihood of the count series (constant dropped)."""
    return float(np.sum(nll_by_node(params, series)))


def simulate_hawkes(
    params: HawkesParams,
    n_bins: int,
    dt: float,
    seed: int,
    labels: tuple[str, ...] = (),
) -> tuple[CountSeries, IntensityPath]:
    """Draw a count series from the model.

    Alternates the intensity recursion with Poisson draws: bin k's counts
    are Poisson(lam[k] * dt) given earlier bins. Returns the counts and
    the latent intensity path that generated them. The generator is
    counter-based (Philox) keyed on ``seed``, so identical seeds give
    identical output regardless of thread count.
    """
    if n_bins <= 0:
        raise DomainError(f"n_bins must be positive, got {n_bins}")
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be positive and finite, got {dt}")
    if stability_margin(params, dt) >= 1.0:
        raise DomainError("unstable parameters: stability margin >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    m = params.n_nodes
    lam = np.empty((n_bins, m), dtype=float)
    counts = np.empty((n_bins, m), dtype=np.int64)
    if params.pairwise_gamma:
        state = np.zeros((m, m))
        for k in range(n_bins):
            lam[k] = params.mu + np.sum(params.alpha * state, axis=1)
            counts[k] = rng.poisson(lam[k] * dt)
            state = params.gamma * state + counts[k][None, :]
    else:
        g = params.node_gamma()
        cur = params.mu.astype(float).copy()
        for k in range(n_bins):
            lam[k] = cur
            counts[k] = rng.poisson(cur * dt)
            cur = params.mu + (cur - params.mu) * g + params.alpha @ counts[k]
    series = CountSeries(counts=counts, dt=dt, labels=labels)
    return series, IntensityPath(lam=lam, dt=dt)


def stationary_mean(params: HawkesParams, dt: float) -> np.ndarray:
    """Long-run mean intensity ``(1-gamma) * ((1-gamma)I - alpha*dt)^-1 mu``.

    Requires scalar or per-node gamma and a stable parameter set.
    """
    g = params.node_gamma()
    m = params.n_nodes
    lhs = np.diag(1.0 - g) - params.alpha * dt
    try:
        lam_bar = np.linalg.solve(lhs, (1.0 - g) * params.mu)
    except np.linalg.LinAlgError as exc:
        raise DomainError("stationary mean undefined: system is singular") from exc
    if np.any(lam_bar <= 0):
        raise DomainError("stationary mean undefined: parameters are not stable")
    return lam_bar


def _power_iteration_radius(mat: np.ndarray, tol: float = 1e-13, max_iter: int = 20000) -> float:
    m = mat.shape[0]
    if not np.any(mat):
        return 0.0
    # Shift by the identity: adding I moves every eigenvalue of a nonnegative
    # matrix by exactly +1 and makes the iteration converge on periodic
    # structures (for example pure cycles) as well.
    shifted = mat + np.eye(m)
    v = np.full(m, 1.0 / math.sqrt(m))
    prev = 0.0
    residual = math.inf
    for _ in range(max_iter):
        w = shifted @ v
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
        residual = abs(est - prev)
        if residual <= tol * max(1.0, est):
            return est - 1.0
        prev = est
    raise ConvergenceError(
        f"power iteration did not settle within {max_iter} steps (last step change "
        f"{residual:.3e}); the growth-rate estimate converges slowly when the "
        "dominant eigenvalue is defective"
    )


def stability_margin(params: HawkesParams, dt: float) -> float:
    """Spectral radius of ``dt * diag(1/(1-gamma)) @ alpha``.

    The process is stable when the margin is below one. With per-pair
    decay, each receiving node uses its largest decay value, which is the
    conservative choice (slowest forgetting).
    """
    if not (math.isfinite(dt) and dt > 0):
        raise DomainError(f"dt must be positive and finite, got {dt}")
    if params.pairwise_gamma:
        g = np.max(params.gamma, axis=1)
    else:
        g = params.node_gamma()
    mat = dt * (params.alpha / (1.0 - g)[:, None])
    return _power_iteration_radius(mat)
