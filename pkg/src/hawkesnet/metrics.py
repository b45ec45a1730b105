"""Error measures and network post-processing for estimated matrices.

The two matrix errors normalize both arguments to unit total mass before
comparing, so they measure pattern mismatch rather than scale mismatch;
``*_raw`` variants skip the normalization. ``edge_threshold`` turns a
weight matrix into a ranked edge list.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import DomainError

__all__ = [
    "EvalReport",
    "edge_threshold",
    "evaluate",
    "frobenius_error",
    "frobenius_error_raw",
    "hellinger_distance",
    "hellinger_distance_raw",
    "normalize_matrix",
    "relative_error",
]


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """Summary comparison of an estimated matrix against a reference.

    ``frobenius`` and ``hellinger`` compare the mass-normalized
    matrices; ``relative_error`` compares raw entries as a flat vector;
    ``edges`` lists the raw estimated entries above the report's
    threshold, heaviest first.
    """

    frobenius: float
    hellinger: float
    relative_error: float
    edges: list[tuple[int, int, float]]

    def __post_init__(self) -> None:
        if not (self.frobenius >= 0.0):
            raise DomainError("frobenius must be nonnegative")
        if not (0.0 <= self.hellinger <= 1.0):
            raise DomainError("hellinger must lie in [0, 1]")
        if not (self.relative_error >= 0.0):
            raise DomainError("relative_error must be nonnegative")


def _as_matrix(W: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(W, dtype=float)
    if arr.ndim != 2:
        raise DomainError(f"{name} must be a 2-d matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _check_same_shape(W1: np.ndarray, W2: np.ndarray) -> None:
    if W1.shape != W2.shape:
        raise DomainError(f"shape mismatch: {W1.shape} vs {W2.shape}")


def normalize_matrix(W: np.ndarray) -> np.ndarray:
    """Scale a nonnegative matrix so its entries sum to one."""
    arr = _as_matrix(W, "W")
    if np.any(arr < 0):
        raise DomainError("matrix entries must be nonnegative")
    total = arr.sum()
    if total == 0.0:
        raise DomainError("cannot normalize an all-zero matrix")
    return arr / total


def frobenius_error_raw(W1: np.ndarray, W2: np.ndarray) -> float:
    """Frobenius norm of the elementwise difference, no normalization."""
    a = _as_matrix(W1, "W1")
    b = _as_matrix(W2, "W2")
    _check_same_shape(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


def frobenius_error(W1: np.ndarray, W2: np.ndarray) -> float:
    """Frobenius distance between the mass-normalized matrices."""
    return frobenius_error_raw(normalize_matrix(W1), normalize_matrix(W2))


def hellinger_distance_raw(W1: np.ndarray, W2: np.ndarray) -> float:
    """Hellinger formula on nonnegative matrices as given, no normalization.

    Equals (1/sqrt(2)) * ||sqrt(W1) - sqrt(W2)||_F; only bounded by 1
    when both inputs sum to one.
    """
    a = _as_matrix(W1, "W1")
    b = _as_matrix(W2, "W2")
    _check_same_shape(a, b)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("matrix entries must be nonnegative")
    return float(np.sqrt(np.sum((np.sqrt(a) - np.sqrt(b)) ** 2) / 2.0))


def hellinger_distance(W1: np.ndarray, W2: np.ndarray) -> float:
    """Hellinger distance in [0, 1] between the mass-normalized matrices."""
    d = hellinger_distance_raw(normalize_matrix(W1), normalize_matrix(W2))
    # the exact value lies in [0, 1]; clamp out float round-off
    return min(max(d, 0.0), 1.0)


def relative_error(est: np.ndarray, truth: np.ndarray) -> float:
    """2-norm of the difference divided by the 2-norm of the reference."""
    e = np.asarray(est, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise DomainError(f"shape mismatch: {e.shape} vs {t.shape}")
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(t))):
        raise DomainError("inputs must be finite")
    denom = float(np.linalg.norm(t.ravel()))
    if denom == 0.0:
        raise DomainError("reference vector has zero norm")
    return float(np.linalg.norm((e - t).ravel()) / denom)


def edge_threshold(
    W: np.ndarray, tau: float = 0.15, include_self_loops: bool = True
) -> list[tuple[int, int, float]]:
    """Entries of ``W`` strictly above ``tau`` as (row, col, weight) edges.

    Sorted by weight descending, ties broken by (row, col) so the order
    is deterministic. Diagonal entries are kept unless
    ``include_self_loops`` is false.
    """
    arr = _as_matrix(W, "W")
    if not (tau >= 0.0):
        raise DomainError("tau must be nonnegative")
    edges: list[tuple[int, int, float]] = []
    n_rows, n_cols = arr.shape
    for i in range(n_rows):
        for j in range(n_cols):
            if not include_self_loops and i == j:
                continue
            w = float(arr[i, j])
            if w > tau:
                edges.append((i, j, w))
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))
    return edges


def evaluate(
    est: np.ndarray,
    truth: np.ndarray,
    tau: float = 0.15,
    include_self_loops: bool = True,
) -> EvalReport:
    """Full comparison report of an estimated matrix against a reference."""
    e = _as_matrix(est, "est")
    t = _as_matrix(truth, "truth")
    _check_same_shape(e, t)
    return EvalReport(
        frobenius=frobenius_error(e, t),
        hellinger=hellinger_distance(e, t),
        relative_error=relative_error(e.ravel(), t.ravel()),
        edges=edge_threshold(e, tau, include_self_loops=include_self_loops),
    )
