"""Command-line interface: one executable exposing every pipeline stage.

Exit codes: 0 on success, 1 when the input data or configuration is
invalid (domain/schema/convergence errors, missing files), 2 on usage
errors (unknown flags, missing required arguments). Diagnostics go to
standard error; data is written only to the declared output paths.

Every run assembles a :class:`RunManifest` describing exactly how to
repeat it — subcommand, resolved configuration, seed, package versions,
input file digests, wall-clock time, and output paths. The manifest is
written to ``--manifest PATH`` when given, otherwise logged to standard
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, dataio, metrics
from ._parallel import set_thread_cap
from .em import em_fit
from .errors import HawkesnetError
from .experiments import EXPERIMENT_NAMES, reproduce_experiment
from .expkf import ExpkfConfig, profile_decay, run_filter
from .mm import MmConfig, mm_fit
from .model import HawkesParams, simulate_hawkes
from .abm import simulate_abm

__all__ = ["RunManifest", "build_parser", "dispatch", "main"]

logger = logging.getLogger("hawkesnet.cli")


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Everything needed to re-run one invocation bit-identically."""

    subcommand: str
    config: dict
    seed: int | None
    versions: dict
    input_digests: dict
    wall_clock_s: float
    outputs: list[str]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import scipy

    return {
        "hawkesnet": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from exc


def _pair(text: str):
    if text == "auto":
        return "auto"
    values = _float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated reals, got {text!r}")
    return (values[0], values[1])


def _write_csv(path: str | Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(c) if isinstance(c, float) else str(c) for c in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Subcommand handlers: each returns (config dict, input paths, output paths)


def _cmd_simulate_hawkes(args) -> tuple[dict, list, list]:
    params = dataio.read_hawkes_params(args.params)
    series, _ = simulate_hawkes(params, args.bins, args.dt, seed=args.seed)
    dataio.write_count_series(series, args.out)
    config = {"params": args.params, "bins": args.bins, "dt": args.dt}
    return config, [args.params], [args.out, str(dataio.sidecar_path(args.out))]


def _cmd_simulate_abm(args) -> tuple[dict, list, list]:
    config = dataio.read_abm_config(args.config)
    config = dataclasses.replace(config, seed=args.seed)
    series = simulate_abm(config, args.steps)
    dataio.write_count_series(series, args.out)
    resolved = {"config": args.config, "steps": args.steps}
    return resolved, [args.config], [args.out, str(dataio.sidecar_path(args.out))]


def _cmd_fit_mm(args) -> tuple[dict, list, list]:
    series = dataio.read_count_series(args.counts)
    config = MmConfig(
        mode=args.mode,
        gamma=args.gamma,
        tol=args.tol,
        max_iters=args.max_iters,
        mu_prior=args.reg_gamma,
        gamma_prior=args.reg_beta,
    )
    result = mm_fit(series, config)
    dataio.write_hawkes_params(result.best_params, args.out)
    outputs = [args.out]
    if args.trace:
        _write_csv(
            args.trace,
            ["iteration", "nll"],
            [[i, float(v)] for i, v in enumerate(result.nll_trace)],
        )
        outputs.append(args.trace)
    for sweep, rel_rise in result.monotone_violations:
        logger.warning("objective rose at sweep %d by %.3e relative", sweep, rel_rise)
    logger.info(
        "mm fit: %d sweeps, converged=%s, final nll %.6f",
        result.n_iters, result.converged, float(result.nll_trace[-1]),
    )
    resolved = {
        "mode": args.mode, "gamma": args.gamma, "tol": args.tol,
        "max_iters": args.max_iters, "reg_gamma": args.reg_gamma,
        "reg_beta": args.reg_beta,
    }
    return resolved, [args.counts], outputs


def _expkf_params(result, gamma: float) -> HawkesParams:
    theta = result.state.theta
    return HawkesParams(mu=np.exp(theta[:, 0]), alpha=np.exp(theta[:, 1:]), gamma=gamma)


def _cmd_fit_expkf(args) -> tuple[dict, list, list]:
    series = dataio.read_count_series(args.counts)
    gamma = args.gamma
    profile = None
    if args.profile_gamma:
        profile = profile_decay(series, args.profile_gamma, p0=args.p0, q=args.q)
        gamma = profile.best_gamma
        logger.info("profiled decay grid %s -> %s", args.profile_gamma, gamma)
    if gamma is None:
        raise HawkesnetError("provide --gamma or --profile-gamma")
    result = run_filter(series, ExpkfConfig(gamma=gamma, p0=args.p0, q=args.q))
    dataio.write_hawkes_params(_expkf_params(result, gamma), args.out)
    outputs = [args.out]
    if args.traj:
        m = series.n_nodes
        header = ["k", "node", "mu_hat"] + [f"alpha_hat_{j + 1}" for j in range(m)] + ["pred_loglik"]
        rows = []
        for k in range(series.n_bins):
            for i in range(m):
                theta = result.theta_traj[k, i]
                rows.append(
                    [k, i, float(np.exp(theta[0]))]
                    + [float(v) for v in np.exp(theta[1:])]
                    + [float(result.pred_loglik[k, i])]
                )
        _write_csv(args.traj, header, rows)
        outputs.append(args.traj)
    resolved = {
        "gamma": gamma, "p0": args.p0, "q": args.q,
        "profile_gamma": args.profile_gamma,
    }
    return resolved, [args.counts], outputs


_EM_MODELS = ("lgcp", "lgcp-logistic", "lgcp-network")


def _cmd_fit_em(args) -> tuple[dict, list, list]:
    series = dataio.read_count_series(args.counts)
    config = dataio.read_em_config(args.config)
    config = dataclasses.replace(config, seed=args.seed)
    init = dataio.read_em_init_spec(args.config)
    if args.model == "lgcp-logistic" and init.link != "logistic":
        raise HawkesnetError("model lgcp-logistic requires a logistic-link init spec")
    if args.model != "lgcp-logistic" and init.link == "logistic":
        raise HawkesnetError(f"model {args.model} requires an identity-link init spec")
    if args.model == "lgcp-network" and init.n_nodes < 2:
        raise HawkesnetError("model lgcp-network requires at least two nodes")
    result = em_fit(series, init, config)
    dataio.write_statespace_spec(result.spec, args.out)
    outputs = [args.out]
    if args.intensity_ensemble:
        lam = result.smoothed.lam  # (n_s, K, m)
        rows = []
        for p in range(lam.shape[0]):
            for k in range(lam.shape[1]):
                for i in range(lam.shape[2]):
                    rows.append([p, k, i, float(lam[p, k, i])])
        _write_csv(args.intensity_ensemble, ["path_id", "k", "node", "lambda"], rows)
        outputs.append(args.intensity_ensemble)
    logger.info(
        "em fit: %d iterations, converged=%s", result.n_iters, result.converged
    )
    resolved = {"model": args.model, "config": args.config}
    return resolved, [args.counts, args.config], outputs


def _cmd_profile_gamma(args) -> tuple[dict, list, list]:
    series = dataio.read_count_series(args.counts)
    profile = profile_decay(
        series, args.grid, p0=args.p0, q=args.q, burn_in=args.burn_in
    )
    _write_csv(
        args.out,
        ["gamma", "mean_pred_loglik"],
        [[float(g), float(s)] for g, s in zip(profile.gammas, profile.mean_loglik)],
    )
    logger.info("best decay on the grid: %s", profile.best_gamma)
    resolved = {
        "grid": list(args.grid), "p0": args.p0, "q": args.q, "burn_in": args.burn_in,
        "best_gamma": profile.best_gamma,
    }
    return resolved, [args.counts], [args.out]


def _parse_time(text: str) -> float:
    return dataio._parse_timestamp(text, 0)


def _cmd_aggregate(args) -> tuple[dict, list, list]:
    log = dataio.read_event_log(args.events)
    nodes = tuple(args.nodes.split(",")) if args.nodes else None
    series = dataio.aggregate_timestamps(
        log, args.bin, _parse_time(args.t0), _parse_time(args.t1),
        nodes=nodes, allow_new_nodes=args.allow_new_nodes,
    )
    dataio.write_count_series(series, args.out)
    resolved = {
        "bin": args.bin, "t0": args.t0, "t1": args.t1,
        "nodes": args.nodes, "allow_new_nodes": args.allow_new_nodes,
    }
    return resolved, [args.events], [args.out, str(dataio.sidecar_path(args.out))]


def _cmd_gapfilter(args) -> tuple[dict, list, list]:
    series = dataio.read_count_series(args.counts)
    filtered, report = dataio.gap_filter(series, args.max_zero_run)
    dataio.write_count_series(filtered, args.out)
    payload = {
        "segment_starts": list(filtered.segment_starts),
        "removed": [list(r) for r in report.removed],
        "n_bins_removed": report.n_bins_removed,
        "original_n_bins": report.original_n_bins,
    }
    Path(args.segments).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info(
        "removed %d bins across %d gaps", report.n_bins_removed, len(report.removed)
    )
    resolved = {"max_zero_run": args.max_zero_run}
    outputs = [args.out, str(dataio.sidecar_path(args.out)), args.segments]
    return resolved, [args.counts], outputs


def _read_alpha(path: str) -> np.ndarray:
    data = dataio._load_json(path)
    return np.asarray(dataio._field(data, "alpha", path), dtype=float)


def _cmd_eval(args) -> tuple[dict, list, list]:
    est = _read_alpha(args.est)
    truth = _read_alpha(args.truth)
    report = metrics.evaluate(
        est, truth, tau=args.threshold, include_self_loops=not args.no_self_loops
    )
    payload = dataclasses.asdict(report)
    payload["edges"] = [[i, j, w] for i, j, w in report.edges]
    payload["threshold"] = args.threshold
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    resolved = {"threshold": args.threshold, "no_self_loops": args.no_self_loops}
    return resolved, [args.est, args.truth], [args.out]


def _cmd_reproduce(args) -> tuple[dict, list, list]:
    reproduce_experiment(args.name, args.out_dir)
    outputs = sorted(str(p) for p in Path(args.out_dir).iterdir())
    return {"name": args.name, "out_dir": args.out_dir}, [], outputs


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted both before and after the subcommand; the
    # SUPPRESS defaults keep a pre-subcommand value from being clobbered
    # when the flag is absent after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="cap on worker threads for parallel sections")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed; required by stochastic subcommands")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--manifest", default=argparse.SUPPRESS,
                        help="write the run manifest JSON to this path")

    parser = argparse.ArgumentParser(
        prog="hawkesnet",
        description="Influence-network estimation from binned event counts.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_parser(name: str, help: str):
        return sub.add_parser(name, help=help, parents=[common])

    p = add_parser("simulate-hawkes", "draw counts from a fitted or synthetic model")
    p.add_argument("--params", required=True, help="model JSON (mu, alpha, gamma)")
    p.add_argument("--bins", type=int, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--out", required=True, help="output counts CSV")
    p.set_defaults(handler=_cmd_simulate_hawkes, stochastic=True)

    p = add_parser("simulate-abm", "run the agent-based simulator")
    p.add_argument("--config", required=True, help="agent config JSON")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="output counts CSV")
    p.set_defaults(handler=_cmd_simulate_abm, stochastic=True)

    p = add_parser("fit-mm", "batch surrogate-descent fit")
    p.add_argument("--counts", required=True)
    p.add_argument("--mode", choices=["fixed", "full"], default="fixed")
    p.add_argument("--gamma", type=float, default=0.15,
                   help="decay value (fixed mode) or starting value (full mode)")
    p.add_argument("--reg-gamma", type=_pair, default=None, metavar="A,B",
                   help="gamma-distribution prior on baselines, or 'auto'")
    p.add_argument("--reg-beta", type=_pair, default=None, metavar="C,D",
                   help="beta prior on estimated decays (full mode)")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--out", required=True, help="output params JSON")
    p.add_argument("--trace", default=None, help="objective trace CSV")
    p.set_defaults(handler=_cmd_fit_mm, stochastic=False)

    p = add_parser("fit-expkf", "sequential second-order filter fit")
    p.add_argument("--counts", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--profile-gamma", type=_float_list, default=None, metavar="G1,G2,...",
                   help="profile the decay over this grid and fit at the best value")
    p.add_argument("--p0", type=float, default=1e-4)
    p.add_argument("--q", type=float, default=1e-5)
    p.add_argument("--out", required=True, help="output params JSON")
    p.add_argument("--traj", default=None,
                   help="per-bin trajectory CSV (k, node, mu_hat, alpha_hat_1..m, pred_loglik)")
    p.set_defaults(handler=_cmd_fit_expkf, stochastic=False)

    p = add_parser("fit-em", "ensemble EM fit of a latent-state model")
    p.add_argument("--counts", required=True)
    p.add_argument("--model", choices=list(_EM_MODELS), required=True)
    p.add_argument("--config", required=True,
                   help="EM settings JSON with an 'init' starting-model object")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--intensity-ensemble", default=None,
                   help="smoothed intensity CSV (path_id, k, node, lambda)")
    p.set_defaults(handler=_cmd_fit_em, stochastic=True)

    p = add_parser("profile-gamma", "predictive-likelihood decay profile")
    p.add_argument("--counts", required=True)
    p.add_argument("--grid", type=_float_list, required=True, metavar="G1,G2,...")
    p.add_argument("--burn-in", type=float, default=0.25,
                   help="leading fraction of bins excluded from scoring")
    p.add_argument("--p0", type=float, default=1e-4)
    p.add_argument("--q", type=float, default=1e-5)
    p.add_argument("--out", required=True, help="output profile CSV")
    p.set_defaults(handler=_cmd_profile_gamma, stochastic=False)

    p = add_parser("aggregate", "bin an event log into counts")
    p.add_argument("--events", required=True, help="CSV: timestamp,node[,receiver]")
    p.add_argument("--bin", type=float, required=True, help="bin width")
    p.add_argument("--t0", required=True, help="window start (real or ISO-8601)")
    p.add_argument("--t1", required=True, help="window end (real or ISO-8601)")
    p.add_argument("--nodes", default=None, help="comma-separated column order")
    p.add_argument("--allow-new-nodes", action="store_true")
    p.add_argument("--out", required=True, help="output counts CSV")
    p.set_defaults(handler=_cmd_aggregate, stochastic=False)

    p = add_parser("gapfilter", "drop long all-zero runs, marking segments")
    p.add_argument("--counts", required=True)
    p.add_argument("--max-zero-run", type=int, required=True)
    p.add_argument("--out", required=True, help="output counts CSV")
    p.add_argument("--segments", required=True, help="output segment report JSON")
    p.set_defaults(handler=_cmd_gapfilter, stochastic=False)

    p = add_parser("eval", "compare an estimated matrix against a reference")
    p.add_argument("--est", required=True, help="JSON with an 'alpha' matrix")
    p.add_argument("--truth", required=True, help="JSON with an 'alpha' matrix")
    p.add_argument("--threshold", type=float, default=0.15)
    p.add_argument("--no-self-loops", action="store_true",
                   help="exclude diagonal entries from the edge list")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(handler=_cmd_eval, stochastic=False)

    p = add_parser("reproduce", "run a named frozen benchmark end to end")
    p.add_argument("--name", required=True, choices=list(EXPERIMENT_NAMES))
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_reproduce, stochastic=False)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    """Parse arguments, run the chosen subcommand, and emit a manifest."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return int(exc.code or 0)
    # global flags carry SUPPRESS defaults (so a pre-subcommand value is
    # not clobbered); absent flags are filled in here instead
    for name, default in (
        ("threads", None), ("seed", None), ("log_level", "WARNING"), ("manifest", None),
    ):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=getattr(logging, args.log_level), stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads is not None:
        try:
            set_thread_cap(args.threads)
        except HawkesnetError as exc:
            print(f"hawkesnet: {exc}", file=sys.stderr)
            return 1
    if args.stochastic and args.seed is None:
        print(
            f"hawkesnet {args.subcommand}: --seed is required (no silent entropy)",
            file=sys.stderr,
        )
        return 2
    start = time.monotonic()
    try:
        config, inputs, outputs = args.handler(args)
    except HawkesnetError as exc:
        print(f"hawkesnet {args.subcommand}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = getattr(exc, "filename", None)
        where = f" ({name})" if name else ""
        print(f"hawkesnet {args.subcommand}: {exc.strerror or exc}{where}", file=sys.stderr)
        return 1
    finally:
        if args.threads is not None:
            set_thread_cap(None)
    manifest = RunManifest(
        subcommand=args.subcommand,
        config=config,
        seed=args.seed,
        versions=_versions(),
        input_digests={str(p): _sha256(p) for p in inputs},
        wall_clock_s=time.monotonic() - start,
        outputs=[str(p) for p in outputs],
    )
    if args.manifest:
        Path(args.manifest).write_text(manifest.to_json() + "\n", encoding="utf-8")
    else:
        logger.info("manifest: %s", manifest.to_json())
    return 0


def main() -> None:
    sys.exit(dispatch())
