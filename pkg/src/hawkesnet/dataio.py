"""File formats and ingestion: event logs, count CSVs, parameter JSON.

Formats
-------
* Event log CSV: header ``timestamp,node`` with an optional third
  ``receiver`` column that is read and ignored. Timestamps are plain
  reals or ISO-8601 strings (converted to seconds since the epoch;
  naive stamps are taken as UTC).
* Count series CSV: header ``t,<label_0>,...,<label_{m-1}>``, one row
  per bin with the bin start time and integer counts, plus a JSON
  sidecar at ``<path>.json`` holding ``dt``, ``nodes``, and — when the
  series has cuts — ``segment_starts``.
* Parameter/config JSON: plain field-for-field objects. Reals survive a
  write/read round trip exactly (shortest-repr float encoding).

All readers raise :class:`~hawkesnet.errors.SchemaError` with the line
or field that violated the layout.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from .abm import AbmConfig
from .em import EmConfig
from .errors import DomainError, SchemaError
from .model import CountSeries, HawkesParams
from .statespace import StateSpaceSpec

__all__ = [
    "EventLog",
    "EventRecord",
    "GapReport",
    "aggregate_timestamps",
    "gap_filter",
    "read_abm_config",
    "read_count_series",
    "read_em_config",
    "read_em_init_spec",
    "read_event_log",
    "read_hawkes_params",
    "read_statespace_spec",
    "sidecar_path",
    "write_abm_config",
    "write_count_series",
    "write_em_config",
    "write_event_log",
    "write_hawkes_params",
    "write_statespace_spec",
]

logger = logging.getLogger("hawkesnet.dataio")


# --------------------------------------------------------------------------
# Event logs


@dataclasses.dataclass(frozen=True)
class EventRecord:
    """One event: when it happened and at which node."""

    timestamp: float
    node: str


@dataclasses.dataclass(frozen=True)
class EventLog:
    """A flat list of events, order-insensitive for aggregation."""

    records: tuple[EventRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def n_events(self) -> int:
        return len(self.records)


def _parse_timestamp(raw: str, line_no: int) -> float:
    text = raw.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
        stamp = datetime.datetime.fromisoformat(iso)
    except ValueError as exc:
        raise SchemaError(
            f"line {line_no}: unparseable timestamp {raw!r} "
            "(expected a real number or ISO-8601)"
        ) from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=datetime.timezone.utc)
    return stamp.timestamp()


def read_event_log(path: str | os.PathLike) -> EventLog:
    """Load an event log CSV (header ``timestamp,node[,receiver]``)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError("line 1: empty file, expected a header row")
    header = [h.strip() for h in lines[0].split(",")]
    if header not in (["timestamp", "node"], ["timestamp", "node", "receiver"]):
        raise SchemaError(
            f"line 1: header must be 'timestamp,node[,receiver]', got {lines[0]!r}"
        )
    n_cols = len(header)
    records: list[EventRecord] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_cols:
            raise SchemaError(
                f"line {line_no}: expected {n_cols} fields, got {len(cells)}"
            )
        node = cells[1].strip()
        if not node:
            raise SchemaError(f"line {line_no}: empty node label")
        records.append(EventRecord(_parse_timestamp(cells[0], line_no), node))
    return EventLog(tuple(records))


def write_event_log(log: EventLog, path: str | os.PathLike) -> None:
    lines = ["timestamp,node"]
    for rec in log.records:
        lines.append(f"{rec.timestamp!r},{rec.node}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def aggregate_timestamps(
    log: EventLog,
    bin_width: float,
    t0: float,
    t1: float,
    nodes: tuple[str, ...] | None = None,
    allow_new_nodes: bool = False,
) -> CountSeries:
    """Bin an event log into a count series over ``[t0, t1)``.

    Bins are half-open ``[t0 + k*w, t0 + (k+1)*w)``, so an event exactly
    on a boundary lands in the later bin. Events outside ``[t0, t1)``
    are dropped and their number logged as a warning.

    When ``nodes`` is given it fixes the column order; labels not in it
    are an error unless ``allow_new_nodes`` is set, in which case the
    extras are appended in sorted order. Without ``nodes``, columns are
    the sorted distinct labels of the log. Column order never depends on
    record order, so aggregation is invariant to shuffling the log.
    """
    if not (math.isfinite(bin_width) and bin_width > 0):
        raise DomainError(f"bin_width must be positive and finite, got {bin_width}")
    if not (math.isfinite(t0) and math.isfinite(t1) and t0 < t1):
        raise DomainError(f"need t0 < t1, got [{t0}, {t1})")
    seen = sorted({rec.node for rec in log.records})
    if nodes is None:
        labels = tuple(seen) if seen else ("node_0",)
    else:
        labels = tuple(nodes)
        unknown = [s for s in seen if s not in set(labels)]
        if unknown and not allow_new_nodes:
            raise DomainError(
                f"unknown node labels {unknown[:5]!r}; pass allow_new_nodes to add them"
            )
        labels = labels + tuple(unknown)
    index = {label: j for j, label in enumerate(labels)}
    n_bins = max(1, int(math.ceil((t1 - t0) / bin_width - 1e-9)))
    counts = np.zeros((n_bins, len(labels)), dtype=np.int64)
    dropped = 0
    for rec in log.records:
        if not (t0 <= rec.timestamp < t1):
            dropped += 1
            continue
        k = min(int((rec.timestamp - t0) // bin_width), n_bins - 1)
        counts[k, index[rec.node]] += 1
    if dropped:
        logger.warning("dropped %d events outside [%s, %s)", dropped, t0, t1)
    return CountSeries(counts=counts, dt=bin_width, labels=labels)


# --------------------------------------------------------------------------
# Gap filtering


@dataclasses.dataclass(frozen=True)
class GapReport:
    """What :func:`gap_filter` removed.

    ``removed`` holds half-open ``(start, stop)`` bin ranges in the
    original series' indexing.
    """

    removed: tuple[tuple[int, int], ...]
    n_bins_removed: int
    original_n_bins: int


def gap_filter(
    series: CountSeries, max_zero_run: int
) -> tuple[CountSeries, GapReport]:
    """Drop maximal all-node zero runs longer than ``max_zero_run`` bins.

    Surviving bins are concatenated unchanged; each removal point
    becomes a segment boundary so estimators reset decayed excitation
    instead of splicing history across the gap. Existing boundaries of
    the input are preserved. Total count is unchanged (only zero rows
    are removed).
    """
    if max_zero_run < 1:
        raise DomainError(f"max_zero_run must be >= 1, got {max_zero_run}")
    is_zero = ~np.any(series.counts != 0, axis=1)
    K = series.n_bins
    removed: list[tuple[int, int]] = []
    k = 0
    while k < K:
        if is_zero[k]:
            start = k
            while k < K and is_zero[k]:
                k += 1
            if k - start > max_zero_run:
                removed.append((start, k))
        else:
            k += 1
    if not removed:
        return series, GapReport(removed=(), n_bins_removed=0, original_n_bins=K)
    keep = np.ones(K, dtype=bool)
    for start, stop in removed:
        keep[start:stop] = False
    if not keep.any():
        raise DomainError("gap filtering would remove every bin")
    new_index = np.cumsum(keep) - 1  # original bin -> filtered bin (where kept)
    cuts = {0}
    for start in series.segment_starts:
        surviving = np.flatnonzero(keep[start:])
        if surviving.size:
            cuts.add(int(new_index[start + surviving[0]]))
    for _, stop in removed:
        if stop < K and keep[stop]:
            cuts.add(int(new_index[stop]))
    filtered = CountSeries(
        counts=series.counts[keep],
        dt=series.dt,
        labels=series.labels,
        segment_starts=tuple(sorted(cuts)),
    )
    report = GapReport(
        removed=tuple(removed),
        n_bins_removed=int((~keep).sum()),
        original_n_bins=K,
    )
    return filtered, report


# --------------------------------------------------------------------------
# Count series CSV


def sidecar_path(path: str | os.PathLike) -> Path:
    """Location of the JSON sidecar accompanying a count CSV."""
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_count_series(series: CountSeries, path: str | os.PathLike) -> None:
    """Write a count CSV plus its JSON sidecar (``<path>.json``)."""
    lines = ["t," + ",".join(series.labels)]
    for k in range(series.n_bins):
        t = k * series.dt
        lines.append(f"{t!r}," + ",".join(str(int(c)) for c in series.counts[k]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta: dict[str, object] = {"dt": series.dt, "nodes": list(series.labels)}
    if len(series.segment_starts) > 1:
        meta["segment_starts"] = list(series.segment_starts)
    sidecar_path(path).write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )


def read_count_series(path: str | os.PathLike) -> CountSeries:
    """Read a count CSV; uses the sidecar when present, else infers ``dt``.

    Without a sidecar the bin width is taken from the spacing of the
    ``t`` column (which requires at least two rows).
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise SchemaError("line 1: empty file, expected a header row")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2 or header[0] != "t":
        raise SchemaError(
            f"line 1: header must be 't,<label>,...' with >= 1 node column, got {lines[0]!r}"
        )
    labels = tuple(header[1:])
    n_cols = len(header)
    times: list[float] = []
    rows: list[list[int]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_cols:
            raise SchemaError(
                f"line {line_no}: expected {n_cols} fields, got {len(cells)}"
            )
        try:
            times.append(float(cells[0]))
        except ValueError as exc:
            raise SchemaError(
                f"line {line_no}, field 1: unparseable time {cells[0]!r}"
            ) from exc
        row: list[int] = []
        for j, cell in enumerate(cells[1:], start=2):
            try:
                value = int(cell)
            except ValueError as exc:
                raise SchemaError(
                    f"line {line_no}, field {j}: count must be an integer, got {cell!r}"
                ) from exc
            if value < 0:
                raise SchemaError(
                    f"line {line_no}, field {j}: negative count {value}"
                )
            row.append(value)
        rows.append(row)
    if not rows:
        raise SchemaError("line 2: no data rows")
    side = sidecar_path(path)
    dt: float | None = None
    segment_starts: tuple[int, ...] = (0,)
    if side.exists():
        meta = _load_json(side)
        dt = float(_field(meta, "dt", side))
        nodes = _field(meta, "nodes", side)
        if tuple(nodes) != labels:
            raise SchemaError(
                f"{side.name}: sidecar nodes {nodes!r} do not match CSV header {list(labels)!r}"
            )
        if "segment_starts" in meta:
            segment_starts = tuple(int(s) for s in meta["segment_starts"])
    else:
        if len(times) < 2:
            raise SchemaError(
                "cannot infer dt from a single row; provide the JSON sidecar"
            )
        dt = times[1] - times[0]
        if dt <= 0:
            raise SchemaError("line 3: time column must be strictly increasing")
    try:
        return CountSeries(
            counts=np.array(rows, dtype=np.int64),
            dt=dt,
            labels=labels,
            segment_starts=segment_starts,
        )
    except DomainError as exc:
        raise SchemaError(f"{Path(path).name}: {exc}") from exc


# --------------------------------------------------------------------------
# JSON helpers


def _load_json(path: str | os.PathLike) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{Path(path).name}: invalid JSON at line {exc.lineno}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{Path(path).name}: top level must be a JSON object")
    return data


def _field(data: dict, name: str, path: str | os.PathLike):
    if name not in data:
        raise SchemaError(f"{Path(path).name}: missing field {name!r}")
    return data[name]


def _dump_json(payload: dict, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _build(cls, kwargs: dict, path: str | os.PathLike):
    try:
        return cls(**kwargs)
    except DomainError as exc:
        raise SchemaError(f"{Path(path).name}: {exc}") from exc


# --------------------------------------------------------------------------
# Hawkes parameter JSON


def _check_gamma_interval(gamma, path: str | os.PathLike) -> None:
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0) or np.any(g >= 1):
        raise SchemaError(
            f"{Path(path).name}: field 'gamma' entries must lie strictly in (0, 1)"
        )


def write_hawkes_params(params: HawkesParams, path: str | os.PathLike) -> None:
    """Write ``{"mu", "alpha", "gamma"}``; gamma must lie in (0, 1)."""
    _check_gamma_interval(params.gamma, path)
    gamma = params.gamma
    payload = {
        "mu": [float(v) for v in params.mu],
        "alpha": [[float(v) for v in row] for row in params.alpha],
        "gamma": float(gamma[0]) if gamma.ndim == 1 and np.all(gamma == gamma[0])
        else gamma.tolist(),
    }
    _dump_json(payload, path)


def read_hawkes_params(path: str | os.PathLike) -> HawkesParams:
    data = _load_json(path)
    mu = _field(data, "mu", path)
    alpha = _field(data, "alpha", path)
    gamma = _field(data, "gamma", path)
    _check_gamma_interval(gamma, path)
    return _build(
        HawkesParams,
        {"mu": np.asarray(mu, dtype=float), "alpha": np.asarray(alpha, dtype=float), "gamma": gamma},
        path,
    )


# --------------------------------------------------------------------------
# Agent config JSON


def write_abm_config(config: AbmConfig, path: str | os.PathLike) -> None:
    payload = {
        "W": [[float(v) for v in row] for row in config.W],
        "A0": [float(v) for v in config.A0],
        "omega": [float(v) for v in config.omega],
        "eta": [float(v) for v in config.eta],
        "Gamma": [float(v) for v in config.Gamma],
        "dt": config.dt,
        "seed": config.seed,
    }
    _dump_json(payload, path)


def read_abm_config(path: str | os.PathLike) -> AbmConfig:
    data = _load_json(path)
    kwargs = {name: _field(data, name, path) for name in ("W", "A0", "omega", "eta", "Gamma", "dt")}
    kwargs["W"] = np.asarray(kwargs["W"], dtype=float)
    kwargs["seed"] = int(data.get("seed", 0))
    return _build(AbmConfig, kwargs, path)


# --------------------------------------------------------------------------
# EM config JSON


def write_em_config(config: EmConfig, path: str | os.PathLike) -> None:
    payload = {
        "n_filter": config.n_filter,
        "n_smooth": config.n_smooth,
        "max_iters": config.max_iters,
        "tol": config.tol,
        "seed": config.seed,
        "estimate": sorted(config.estimate),
        "nm_restarts": config.nm_restarts,
        "nm_max_evals": config.nm_max_evals,
        "resample_threshold": config.resample_threshold,
    }
    _dump_json(payload, path)


def read_em_config(path: str | os.PathLike) -> EmConfig:
    data = _load_json(path)
    kwargs = dict(data)
    kwargs.pop("init", None)  # optional co-located starting spec, read separately
    if "estimate" in kwargs:
        kwargs["estimate"] = frozenset(kwargs["estimate"])
    unknown = set(kwargs) - {f.name for f in dataclasses.fields(EmConfig)}
    if unknown:
        raise SchemaError(f"{Path(path).name}: unknown fields {sorted(unknown)}")
    return _build(EmConfig, kwargs, path)


# --------------------------------------------------------------------------
# State-space spec JSON


def write_statespace_spec(spec: StateSpaceSpec, path: str | os.PathLike) -> None:
    payload: dict[str, object] = {
        "mu": [float(v) for v in spec.mu],
        "omega1": [float(v) for v in spec.omega1],
        "epsilon": [float(v) for v in spec.epsilon],
        "alpha": [[float(v) for v in row] for row in spec.alpha],
        "omega2": [float(v) for v in spec.omega2],
        "eta": spec.eta,
        "link": spec.link,
    }
    if spec.link == "logistic":
        payload["link_A"] = spec.link_A
        payload["link_B"] = spec.link_B
    if spec.x0_mean is not None:
        payload["x0_mean"] = [float(v) for v in spec.x0_mean]
    if spec.x0_var is not None:
        payload["x0_var"] = [float(v) for v in spec.x0_var]
    _dump_json(payload, path)


def _spec_from_mapping(data: dict, path: str | os.PathLike) -> StateSpaceSpec:
    kwargs: dict[str, object] = {}
    for name in ("mu", "omega1", "epsilon", "omega2"):
        kwargs[name] = np.asarray(_field(data, name, path), dtype=float)
    kwargs["alpha"] = np.asarray(_field(data, "alpha", path), dtype=float)
    for name in ("eta", "link", "link_A", "link_B"):
        if name in data:
            kwargs[name] = data[name]
    for name in ("x0_mean", "x0_var"):
        if name in data:
            kwargs[name] = np.asarray(data[name], dtype=float)
    return _build(StateSpaceSpec, kwargs, path)


def read_statespace_spec(path: str | os.PathLike) -> StateSpaceSpec:
    return _spec_from_mapping(_load_json(path), path)


def read_em_init_spec(path: str | os.PathLike) -> StateSpaceSpec:
    """Read the starting model from an EM config file's ``init`` object."""
    data = _load_json(path)
    init = _field(data, "init", path)
    if not isinstance(init, dict):
        raise SchemaError(f"{Path(path).name}: field 'init' must be an object")
    return _spec_from_mapping(init, path)
