"""Frozen-benchmark tests: fixture integrity, prefix rules, reproduction runs."""

import math

import numpy as np
import pytest

from hawkesnet import DomainError, relative_error, simulate_hawkes, stability_margin
from hawkesnet.experiments import (
    ABM_CASE_SEEDS,
    ABM_DT,
    NINE_NODE_DT,
    NINE_NODE_GAMMA,
    NINE_NODE_LENGTHS,
    NINE_NODE_SEEDS,
    abm_case_config,
    abm_influence,
    lgcp_1d_init,
    lgcp_1d_truth,
    lgcp_logistic_truth,
    lgcp_network_init,
    lgcp_network_truth,
    nine_node_alpha,
    nine_node_params,
    reproduce_experiment,
    series_prefix,
    theta_univariate,
)


def test_nine_node_patterns_are_stable():
    for pattern in (1, 2, 3):
        margin = stability_margin(nine_node_params(pattern), NINE_NODE_DT)
        assert margin < 1.0, f"pattern {pattern} margin {margin}"


def test_nine_node_pattern_shapes():
    a1 = nine_node_alpha(1)
    assert np.array_equal(a1, np.diag(np.diag(a1)))
    a2 = nine_node_alpha(2)
    off_band = np.triu(a2, 2) + np.tril(a2, -2)
    assert not off_band.any()
    assert np.all(np.diag(a2) == 0.25)
    a3 = nine_node_alpha(3)
    assert np.count_nonzero(a3) == 17  # 9 self-loops + 8 scattered links
    assert np.all(np.diag(a3) > 0)
    with pytest.raises(DomainError):
        nine_node_alpha(4)


def test_nine_node_lengths_and_seeds_frozen():
    assert NINE_NODE_LENGTHS == (2000, 4000, 8000, 20000)
    assert NINE_NODE_SEEDS == {1: 9101, 2: 9201, 3: 9303}
    assert NINE_NODE_GAMMA == 0.175


def test_simulation_prefix_property():
    params = nine_node_params(1)
    short, _ = simulate_hawkes(params, 300, NINE_NODE_DT, seed=NINE_NODE_SEEDS[1])
    longer, _ = simulate_hawkes(params, 600, NINE_NODE_DT, seed=NINE_NODE_SEEDS[1])
    assert np.array_equal(longer.counts[:300], short.counts)
    cut = series_prefix(longer, 300)
    assert np.array_equal(cut.counts, short.counts)
    assert cut.dt == longer.dt


def test_series_prefix_validation():
    params = nine_node_params(1)
    series, _ = simulate_hawkes(params, 50, NINE_NODE_DT, seed=1)
    with pytest.raises(DomainError):
        series_prefix(series, 0)
    with pytest.raises(DomainError):
        series_prefix(series, 51)
    from hawkesnet import CountSeries

    segmented = CountSeries(series.counts, series.dt, segment_starts=(0, 10))
    with pytest.raises(DomainError):
        series_prefix(segmented, 20)


def test_abm_influence_structure():
    w = abm_influence(1.0)
    assert w.shape == (64, 64)
    row_degrees = (w > 0).sum(axis=1)
    counts = {d: int((row_degrees == d).sum()) for d in (1, 2, 3)}
    assert counts == {1: 45, 2: 13, 3: 6}
    assert np.array_equal(abm_influence(3.0), 3.0 * w)
    # the successor ring is always present
    for s in range(64):
        assert w[s, (s + 1) % 64] == 1.0
    with pytest.raises(DomainError):
        abm_influence(0.0)


def test_abm_case_configs():
    c1 = abm_case_config(1)
    assert c1.eta[0] == 0.25 and c1.Gamma[0] == 3.0 and c1.dt == ABM_DT
    assert c1.seed == ABM_CASE_SEEDS[1]
    assert c1.W.max() == 3.0
    c2 = abm_case_config(2)
    assert c2.eta[0] == 1.0 and c2.Gamma[0] == 0.5
    assert c2.W.max() == 0.5
    with pytest.raises(DomainError):
        abm_case_config(3)


def test_lgcp_fixture_values():
    truth = theta_univariate(lgcp_1d_truth())
    assert truth.tolist() == [1.5, 0.5, 2.5, 0.5, 1.5]
    init = theta_univariate(lgcp_1d_init())
    assert init.tolist() == [3.0, 0.25, 1.25, 0.25, 0.75]
    # starting distance used by the convergence checks: sqrt(4.5 / 11.25)
    assert relative_error(init, truth) == pytest.approx(math.sqrt(0.4), rel=1e-12)
    logistic = theta_univariate(lgcp_logistic_truth())
    assert logistic.tolist() == [0.5, 0.5, 0.25, 9.0, 0.5, 12.0, 4.0]
    net = lgcp_network_truth()
    assert np.count_nonzero(net.alpha) == 4
    assert net.alpha[0, 2] == 0.9
    assert np.all(lgcp_network_init().alpha == 0.9)


def test_theta_univariate_rejects_multinode():
    with pytest.raises(DomainError):
        theta_univariate(lgcp_network_truth())


def test_reproduce_unknown_name(tmp_path):
    with pytest.raises(DomainError, match="unknown experiment"):
        reproduce_experiment("exp-bogus", tmp_path)


def test_reproduce_lgcp_1d_byte_identical(tmp_path):
    dir1 = tmp_path / "run1"
    dir2 = tmp_path / "run2"
    tables = reproduce_experiment("exp-lgcp-1d", dir1)
    reproduce_experiment("exp-lgcp-1d", dir2)
    names = sorted(p.name for p in dir1.iterdir())
    assert names == sorted(p.name for p in dir2.iterdir())
    assert "exp-lgcp-1d-summary.csv" in names
    for name in names:
        assert (dir1 / name).read_bytes() == (dir2 / name).read_bytes(), name
    (K, err0, err1, iters), = tables["summary"]
    assert K == 4000 and err1 < err0
