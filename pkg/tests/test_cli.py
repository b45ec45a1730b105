"""Command-line tests: exit codes, file plumbing, manifests, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from hawkesnet import (
    CountSeries,
    StateSpaceSpec,
    read_count_series,
    read_hawkes_params,
    simulate_statespace,
    write_count_series,
)
from hawkesnet.cli import build_parser, dispatch

SUBCOMMANDS = [
    "simulate-hawkes",
    "simulate-abm",
    "fit-mm",
    "fit-expkf",
    "fit-em",
    "profile-gamma",
    "aggregate",
    "gapfilter",
    "eval",
    "reproduce",
]


def write_truth(path, mu=(1.0, 0.8), gamma=0.3):
    payload = {
        "mu": list(mu),
        "alpha": [[0.4, 0.1], [0.0, 0.35]],
        "gamma": gamma,
    }
    path.write_text(json.dumps(payload))
    return path


def simulate_counts(tmp_path, bins=800, seed=5):
    truth = write_truth(tmp_path / "truth.json")
    out = tmp_path / "counts.csv"
    rc = dispatch(
        ["simulate-hawkes", "--params", str(truth), "--bins", str(bins),
         "--dt", "1.0", "--seed", str(seed), "--out", str(out)]
    )
    assert rc == 0
    return truth, out


def test_help_exits_zero_everywhere(capsys):
    assert dispatch(["--help"]) == 0
    for name in SUBCOMMANDS:
        assert dispatch([name, "--help"]) == 0, name
        capsys.readouterr()


def test_usage_errors_exit_two(capsys):
    assert dispatch(["no-such-command"]) == 2
    assert dispatch(["fit-mm", "--bogus-flag", "x"]) == 2
    assert dispatch(["fit-mm"]) == 2  # missing required arguments
    assert dispatch(["reproduce", "--name", "exp-bogus", "--out-dir", "d"]) == 2
    capsys.readouterr()


def test_missing_seed_on_stochastic_commands(tmp_path, capsys):
    truth = write_truth(tmp_path / "t.json")
    rc = dispatch(
        ["simulate-hawkes", "--params", str(truth), "--bins", "10",
         "--dt", "1.0", "--out", str(tmp_path / "c.csv")]
    )
    assert rc == 2
    assert "--seed is required" in capsys.readouterr().err


def test_missing_input_file_exits_one(tmp_path, capsys):
    rc = dispatch(
        ["fit-mm", "--counts", str(tmp_path / "absent.csv"),
         "--out", str(tmp_path / "o.json")]
    )
    assert rc == 1
    assert "absent.csv" in capsys.readouterr().err


def test_domain_error_exits_one(tmp_path, capsys):
    bad = tmp_path / "params.json"
    bad.write_text(json.dumps({"mu": [1.0], "alpha": [[0.1]], "gamma": 1.5}))
    rc = dispatch(
        ["simulate-hawkes", "--params", str(bad), "--bins", "10", "--dt", "1.0",
         "--seed", "1", "--out", str(tmp_path / "c.csv")]
    )
    assert rc == 1
    assert "gamma" in capsys.readouterr().err


def test_global_flags_accepted_in_both_positions(tmp_path):
    truth = write_truth(tmp_path / "t.json")
    out1 = tmp_path / "c1.csv"
    out2 = tmp_path / "c2.csv"
    rc = dispatch(
        ["--seed", "9", "simulate-hawkes", "--params", str(truth),
         "--bins", "50", "--dt", "1.0", "--out", str(out1)]
    )
    assert rc == 0
    rc = dispatch(
        ["simulate-hawkes", "--params", str(truth), "--bins", "50",
         "--dt", "1.0", "--out", str(out2), "--seed", "9"]
    )
    assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_manifest_contents(tmp_path):
    truth = write_truth(tmp_path / "t.json")
    out = tmp_path / "c.csv"
    manifest_path = tmp_path / "m.json"
    rc = dispatch(
        ["simulate-hawkes", "--params", str(truth), "--bins", "20", "--dt", "0.5",
         "--seed", "3", "--out", str(out), "--manifest", str(manifest_path)]
    )
    assert rc == 0
    manifest = json.loads(manifest_path.read_text())
    assert manifest["subcommand"] == "simulate-hawkes"
    assert manifest["seed"] == 3
    assert str(truth) in manifest["input_digests"]
    assert len(manifest["input_digests"][str(truth)]) == 64  # sha256 hex
    assert str(out) in manifest["outputs"]
    assert manifest["versions"]["hawkesnet"]
    assert manifest["wall_clock_s"] >= 0.0


def test_simulate_hawkes_deterministic_and_seed_sensitive(tmp_path):
    truth = write_truth(tmp_path / "t.json")
    outs = []
    for name, seed in (("a.csv", 11), ("b.csv", 11), ("c.csv", 12)):
        out = tmp_path / name
        rc = dispatch(
            ["simulate-hawkes", "--params", str(truth), "--bins", "400",
             "--dt", "1.0", "--seed", str(seed), "--out", str(out)]
        )
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_simulate_abm_runs_and_is_deterministic(tmp_path):
    config = tmp_path / "abm.json"
    config.write_text(
        json.dumps(
            {
                "W": [[0.0, 1.0], [0.5, 0.0]],
                "A0": [0.5, 0.5],
                "omega": [5.0, 5.0],
                "eta": [0.25, 0.25],
                "Gamma": [3.0, 3.0],
                "dt": 0.05,
            }
        )
    )
    out1, out2 = tmp_path / "c1.csv", tmp_path / "c2.csv"
    for out in (out1, out2):
        rc = dispatch(
            ["simulate-abm", "--config", str(config), "--steps", "300",
             "--seed", "7", "--out", str(out)]
        )
        assert rc == 0
    assert out1.read_bytes() == out2.read_bytes()
    series = read_count_series(out1)
    assert series.counts.shape == (300, 2)


def test_fit_mm_outputs(tmp_path):
    _, counts = simulate_counts(tmp_path)
    out = tmp_path / "est.json"
    trace = tmp_path / "trace.csv"
    rc = dispatch(
        ["fit-mm", "--counts", str(counts), "--mode", "fixed", "--gamma", "0.3",
         "--reg-gamma", "auto", "--tol", "1e-6", "--max-iters", "300",
         "--out", str(out), "--trace", str(trace)]
    )
    assert rc == 0
    params = read_hawkes_params(out)
    assert params.alpha.shape == (2, 2)
    header, *rows = trace.read_text().splitlines()
    assert header == "iteration,nll"
    assert len(rows) >= 2
    # objective trace is non-increasing for the regularized fixed fit
    values = [float(r.split(",")[1]) for r in rows]
    assert all(b <= a + 1e-8 * abs(a) for a, b in zip(values, values[1:]))


def test_fit_expkf_outputs_and_traj_format(tmp_path):
    _, counts = simulate_counts(tmp_path, bins=300)
    out = tmp_path / "est.json"
    traj = tmp_path / "traj.csv"
    rc = dispatch(
        ["fit-expkf", "--counts", str(counts), "--gamma", "0.3",
         "--out", str(out), "--traj", str(traj)]
    )
    assert rc == 0
    header, *rows = traj.read_text().splitlines()
    assert header == "k,node,mu_hat,alpha_hat_1,alpha_hat_2,pred_loglik"
    assert len(rows) == 300 * 2
    first = rows[0].split(",")
    assert first[0] == "0" and first[1] in ("0", "1")
    assert float(first[2]) > 0  # intensities are positive


def test_fit_expkf_profile_flag_picks_grid_value(tmp_path):
    _, counts = simulate_counts(tmp_path, bins=600)
    out = tmp_path / "est.json"
    rc = dispatch(
        ["fit-expkf", "--counts", str(counts),
         "--profile-gamma", "0.1,0.3,0.5", "--out", str(out)]
    )
    assert rc == 0
    assert read_hawkes_params(out).gamma[0] in (0.1, 0.3, 0.5)


def test_fit_expkf_requires_some_gamma(tmp_path, capsys):
    _, counts = simulate_counts(tmp_path, bins=50)
    rc = dispatch(
        ["fit-expkf", "--counts", str(counts), "--out", str(tmp_path / "o.json")]
    )
    assert rc == 1
    assert "gamma" in capsys.readouterr().err


def test_profile_gamma_writes_table(tmp_path):
    _, counts = simulate_counts(tmp_path, bins=600)
    out = tmp_path / "profile.csv"
    rc = dispatch(
        ["profile-gamma", "--counts", str(counts), "--grid", "0.1,0.3,0.5",
         "--out", str(out)]
    )
    assert rc == 0
    header, *rows = out.read_text().splitlines()
    assert header == "gamma,mean_pred_loglik"
    assert [float(r.split(",")[0]) for r in rows] == [0.1, 0.3, 0.5]


def test_aggregate_and_gapfilter_pipeline(tmp_path):
    events = tmp_path / "events.csv"
    events.write_text(
        "timestamp,node\n0.1,a\n0.2,b\n0.3,a\n"
        + "".join(f"{40.0 + i / 10.0},a\n" for i in range(5))
    )
    counts = tmp_path / "counts.csv"
    rc = dispatch(
        ["aggregate", "--events", str(events), "--bin", "1.0",
         "--t0", "0", "--t1", "50", "--out", str(counts)]
    )
    assert rc == 0
    series = read_count_series(counts)
    assert series.counts.shape == (50, 2)
    assert series.counts.sum() == 8
    cleaned = tmp_path / "cleaned.csv"
    segs = tmp_path / "segs.json"
    rc = dispatch(
        ["gapfilter", "--counts", str(counts), "--max-zero-run", "5",
         "--out", str(cleaned), "--segments", str(segs)]
    )
    assert rc == 0
    report = json.loads(segs.read_text())
    assert report["n_bins_removed"] > 0
    filtered = read_count_series(cleaned)
    assert filtered.counts.sum() == 8
    assert tuple(report["segment_starts"]) == filtered.segment_starts


def test_eval_report(tmp_path):
    est = tmp_path / "est.json"
    truth = tmp_path / "truth.json"
    est.write_text(json.dumps({"alpha": [[0.5, 0.0], [0.1, 0.4]]}))
    truth.write_text(json.dumps({"alpha": [[0.5, 0.0], [0.0, 0.5]]}))
    out = tmp_path / "report.json"
    rc = dispatch(
        ["eval", "--est", str(est), "--truth", str(truth),
         "--threshold", "0.15", "--out", str(out)]
    )
    assert rc == 0
    report = json.loads(out.read_text())
    assert set(report) == {"frobenius", "hellinger", "relative_error", "edges", "threshold"}
    assert report["edges"][0] == [0, 0, 0.5]


def _write_em_inputs(tmp_path, n_bins=120):
    truth = StateSpaceSpec(
        mu=np.array([1.0]), omega1=np.array([0.5]), epsilon=np.array([0.8]),
        alpha=np.array([[0.4]]), omega2=np.array([1.5]),
    )
    sim = simulate_statespace(truth, n_bins, 0.1, seed=21)
    counts = tmp_path / "counts.csv"
    write_count_series(sim.series, counts)
    config = tmp_path / "em.json"
    config.write_text(
        json.dumps(
            {
                "n_filter": 60,
                "n_smooth": 15,
                "max_iters": 2,
                "tol": 1e-5,
                "init": {
                    "mu": [1.5], "omega1": [0.4], "epsilon": [1.0],
                    "alpha": [[0.2]], "omega2": [1.0],
                },
            }
        )
    )
    return counts, config


def test_fit_em_runs_and_is_thread_invariant(tmp_path):
    counts, config = _write_em_inputs(tmp_path)
    outputs = []
    for tag, threads in (("a", "1"), ("b", "8")):
        out = tmp_path / f"est_{tag}.json"
        ens = tmp_path / f"ens_{tag}.csv"
        rc = dispatch(
            ["fit-em", "--counts", str(counts), "--model", "lgcp",
             "--config", str(config), "--seed", "4", "--out", str(out),
             "--intensity-ensemble", str(ens), "--threads", threads]
        )
        assert rc == 0
        outputs.append((out.read_bytes(), ens.read_bytes()))
    assert outputs[0] == outputs[1]
    header = (tmp_path / "ens_a.csv").read_text().splitlines()[0]
    assert header == "path_id,k,node,lambda"


def test_fit_em_model_mismatch(tmp_path, capsys):
    counts, config = _write_em_inputs(tmp_path)
    rc = dispatch(
        ["fit-em", "--counts", str(counts), "--model", "lgcp-logistic",
         "--config", str(config), "--seed", "4", "--out", str(tmp_path / "o.json")]
    )
    assert rc == 1
    assert "logistic" in capsys.readouterr().err
    rc = dispatch(
        ["fit-em", "--counts", str(counts), "--model", "lgcp-network",
         "--config", str(config), "--seed", "4", "--out", str(tmp_path / "o.json")]
    )
    assert rc == 1


def test_pipeline_beats_uniform_baseline(tmp_path):
    from hawkesnet.experiments import NINE_NODE_GAMMA, nine_node_params
    from hawkesnet import write_hawkes_params

    truth_params = nine_node_params(1)
    truth = tmp_path / "truth.json"
    write_hawkes_params(truth_params, truth)
    counts = tmp_path / "counts.csv"
    rc = dispatch(
        ["simulate-hawkes", "--params", str(truth), "--bins", "2000", "--dt", "1.0",
         "--seed", "9101", "--out", str(counts)]
    )
    assert rc == 0
    est = tmp_path / "est.json"
    rc = dispatch(
        ["fit-expkf", "--counts", str(counts), "--gamma", str(NINE_NODE_GAMMA),
         "--out", str(est)]
    )
    assert rc == 0
    uniform = tmp_path / "uniform.json"
    uniform.write_text(
        json.dumps({"mu": [1.0] * 9, "alpha": [[0.1] * 9] * 9, "gamma": 0.5})
    )
    reports = {}
    for name, source in (("est", est), ("uniform", uniform)):
        out = tmp_path / f"report_{name}.json"
        rc = dispatch(
            ["eval", "--est", str(source), "--truth", str(truth), "--out", str(out)]
        )
        assert rc == 0
        reports[name] = json.loads(out.read_text())
    assert reports["est"]["frobenius"] < reports["uniform"]["frobenius"]


def test_module_entrypoint_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "hawkesnet", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "simulate-hawkes" in proc.stdout


def test_parser_declares_every_subcommand():
    parser = build_parser()
    actions = [a for a in parser._actions if hasattr(a, "choices") and a.choices]
    subs = next(a.choices for a in actions if "fit-mm" in a.choices)
    assert set(SUBCOMMANDS) <= set(subs)
