import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

from netrecon.config import RunConfig
from netrecon.experiments import (NoiseSpec, SweepSettings, dcsbm_sample, density_matched_q, detectability_threshold,
                                  effective_sbm_probability, planted_partition_probabilities,
                                  planted_partition_sample, run_sweep, simulate_measurement, write_rows)
from netrecon.experiments import _pair_from_index, _pair_index
from netrecon.graph import AdjacencyView
from netrecon.measurement import measurement_summaries

FAST = RunConfig(sweeps=40, burn_in=40, init="mixture", init_partition="spectral", observables=False)


@pytest.fixture(scope="module")
def sbm_graph():
    return dcsbm_sample(300, 3, 8, rng=5)[0]


class _Counts:
    def __init__(self, N, E):
        self.node_count, self.edge_count = N, E


# -- measurement simulation ------------------------------------------------------


def test_pair_index_roundtrip():
    N = 37
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    k = np.array([_pair_index(i, j, N) for i, j in pairs])
    assert list(k) == list(range(len(pairs)))
    i, j = _pair_from_index(k, N)
    assert list(zip(i.tolist(), j.tolist())) == pairs


def test_noiseless_measurement(sbm_graph):
    D = simulate_measurement(sbm_graph, NoiseSpec(n=3), rng=0)
    assert D.default_n == 3
    assert {e for e, (n, x) in D.overrides.items() if x} == sbm_graph.edges
    assert all(v == (3, 3) for v in D.overrides.values())


def test_total_erasure(sbm_graph):
    D = simulate_measurement(sbm_graph, NoiseSpec(p=1.0, n=2), rng=0)
    assert all(x == 0 for _, x in D.overrides.values())


def test_single_edge_binomial_mean():
    A = AdjacencyView.from_edges(2, [(0, 1)])
    rng = np.random.default_rng(1)
    xs = [simulate_measurement(A, NoiseSpec(p=0.3, n=10), rng).get(0, 1)[1] for _ in range(10_000)]
    assert abs(np.mean(xs) - 7) <= 3 * math.sqrt(10 * 0.3 * 0.7 / 10_000)


@pytest.mark.parametrize("p,q,n", [(0.2, 0.01, 1), (0.4, 0.003, 3)])
def test_expected_positive_count(sbm_graph, p, q, n):
    rng = np.random.default_rng(2)
    E = sbm_graph.edge_count
    P = 300 * 299 // 2
    xs, ts = [], []
    for _ in range(200):
        s = measurement_summaries(simulate_measurement(sbm_graph, NoiseSpec(p=p, q=q, n=n), rng), sbm_graph)
        xs.append(s.X)
        ts.append(s.T)
    want = (1 - p) * n * E + q * n * (P - E)
    var = n * E * p * (1 - p) + n * (P - E) * q * (1 - q)
    assert abs(np.mean(xs) - want) <= 3 * math.sqrt(var / 200)
    assert abs(np.mean(ts) - (1 - p) * n * E) <= 3 * math.sqrt(n * E * p * (1 - p) / 200)


def test_density_matching_preserves_edge_count(sbm_graph):
    rng = np.random.default_rng(3)
    q = density_matched_q(sbm_graph, 0.3)
    E = sbm_graph.edge_count
    got = [measurement_summaries(simulate_measurement(sbm_graph, NoiseSpec(p=0.3, q=q), rng), sbm_graph).X
           for _ in range(200)]
    var = E * 0.3 * 0.7 + (300 * 299 // 2 - E) * q * (1 - q)
    assert abs(np.mean(got) - E) <= 3 * math.sqrt(var / 200)


def test_hiding_edges_and_nonedges(sbm_graph):
    E = sbm_graph.edge_count
    D = simulate_measurement(sbm_graph, NoiseSpec(n=2, f=0.25, hide="edges"), rng=4)
    hidden = {e for e, (n, _) in D.overrides.items() if n == 0}
    assert len(hidden) == round(0.25 * E) and hidden <= sbm_graph.edges
    D = simulate_measurement(sbm_graph, NoiseSpec(n=2, q=0.01, f=0.25, hide="nonedges"), rng=4)
    hidden = {e for e, (n, _) in D.overrides.items() if n == 0}
    assert len(hidden) == round(0.25 * E) and not hidden & sbm_graph.edges


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(p=1.5)
    with pytest.raises(ValueError):
        NoiseSpec(n=-1)
    with pytest.raises(ValueError):
        NoiseSpec(hide="pairs")


def test_density_matched_q_examples(karate):
    assert density_matched_q(karate, 0.0) == 0.0
    assert density_matched_q(karate, 0.5) == pytest.approx(39 / 483)
    # only the node and edge counts of the political blogs network matter
    assert density_matched_q(_Counts(1222, 16714), 0.41) == pytest.approx(0.0094, abs=5e-5)
    with pytest.raises(ValueError):
        density_matched_q(AdjacencyView.from_edges(2, [(0, 1)]), 0.1)


# -- planted partitions and thresholds ---------------------------------------------


def test_planted_partition_disconnected_blocks():
    A, b = planted_partition_sample(400, 4, 6, eps=4 * 6, rng=0)
    assert all(b[i] == b[j] for i, j in A.edges)
    assert planted_partition_probabilities(400, 4, 6, 24)[1] == 0.0


def test_planted_partition_mean_degree():
    N, avg = 2000, 10
    A, b = planted_partition_sample(N, 2, avg, eps=6.0, rng=1)
    assert list(np.bincount(b)) == [1000, 1000]
    w_in, w_out = planted_partition_probabilities(N, 2, avg, 6.0)
    var = 2 * 1000 * 999 / 2 * w_in * (1 - w_in) + 1000 * 1000 * w_out * (1 - w_out)
    assert abs(2 * A.edge_count / N - avg) <= 3 * 2 * math.sqrt(var) / N


def test_planted_partition_errors():
    with pytest.raises(ValueError):
        planted_partition_sample(101, 2, 5, 1.0)
    with pytest.raises(ValueError):
        planted_partition_probabilities(100, 2, 5, 50.0)


def test_threshold_values():
    assert detectability_threshold(2000, 2, 10) == pytest.approx(2 * math.sqrt(10))
    assert detectability_threshold(2000, 2, 10, p=0.5) == pytest.approx(4 * math.sqrt(5))
    with pytest.raises(ValueError):
        detectability_threshold(2000, 2, 10, p=0.6, q=0.4)


@pytest.mark.parametrize("p,q", [(0.1, 0.001), (0.3, 0.01), (0.01, 0.2)])
def test_noise_raises_threshold(p, q):
    assert detectability_threshold(1000, 3, 8, p, q) > detectability_threshold(1000, 3, 8)


def test_effective_sbm_examples():
    assert effective_sbm_probability(0.3, 0.0, 0.0) == 0.3
    assert effective_sbm_probability(0.7, 0.6, 0.4) == pytest.approx(0.4)
    assert effective_sbm_probability(0.3, 0.1, 0.05) == pytest.approx(0.305)
    with pytest.raises(ValueError):
        effective_sbm_probability(1.2, 0, 0)


def test_single_measurement_is_an_effective_sbm():
    N, p, q = 2000, 0.3, 0.002
    A, b = planted_partition_sample(N, 2, 10, eps=8.0, rng=7)
    w_in, w_out = planted_partition_probabilities(N, 2, 10, 8.0)
    D = simulate_measurement(A, NoiseSpec(p=p, q=q), rng=8)
    inside = sum(1 for (i, j), (_, x) in D.overrides.items() if x and b[i] == b[j])
    across = sum(1 for (i, j), (_, x) in D.overrides.items() if x and b[i] != b[j])
    for count, pairs, w in ((inside, 2 * 1000 * 999 // 2, w_in), (across, 1000 * 1000, w_out)):
        # marginally each pair is Bernoulli(w'); the count has the matching variance
        wp = effective_sbm_probability(w, p, q)
        assert abs(count - pairs * wp) <= 3 * math.sqrt(pairs * wp * (1 - wp))


def test_dcsbm_sample_structure():
    A, b = dcsbm_sample(800, 4, 10, rng=0)
    inside = np.mean([b[i] == b[j] for i, j in A.edges])
    assert 0.85 < inside < 0.95
    assert A.edge_count == 4000
    k = np.bincount(A.edge_array().ravel(), minlength=800)
    assert k.max() > 4 * k.mean()


# -- sweeps --------------------------------------------------------------------------


def test_fig5_noiseless_recovers_network():
    cfg = RunConfig(sweeps=200, burn_in=100, init="mixture", init_partition="spectral", observables=False)
    rows = run_sweep("fig5", SweepSettings(N=150, B=3, avg_k=6, values=(0.0,)), cfg, rng=1)
    assert rows[0]["similarity_mmp"] >= 0.99
    assert rows[0]["q"] == 0.0


def test_fig8_no_hiding_recovers_network():
    cfg = RunConfig(sweeps=150, burn_in=100, init="mixture", init_partition="spectral", observables=False)
    rows = run_sweep("fig8", SweepSettings(N=150, B=3, avg_k=6, values=(0.0,), ns=(2,), mode="edge-complete"),
                     cfg, rng=1)
    assert rows[0]["similarity_mmp"] >= 0.99
    assert rows[0]["mode"] == "edge-complete"


def test_fig5_similarity_decreases_with_noise():
    rows = run_sweep("fig5", SweepSettings(N=150, B=3, avg_k=6, values=(0.0, 0.2, 0.4, 0.6), replicates=2),
                     FAST, rng=1)
    tau, pval = stats.kendalltau([r["value"] for r in rows], [r["similarity"] for r in rows])
    assert tau < 0 and pval < 0.05


def test_fig9_far_above_threshold():
    rows = run_sweep("fig9", SweepSettings(N=400, B=2, avg_k=10, values=(3.0,), relative_eps=True), FAST, rng=2)
    r = rows[0]
    assert r["eps"] == pytest.approx(3 * detectability_threshold(400, 2, 10))
    assert r["nmi"] > 0.9


def test_sweep_is_deterministic():
    s = SweepSettings(N=80, B=2, avg_k=5, values=(0.2, 0.1))
    cfg = RunConfig(sweeps=10, burn_in=5, observables=False)
    a = run_sweep("fig6", s, cfg, rng=11)
    b = run_sweep("fig6", s, cfg, rng=11)
    assert a == b
    assert [r["value"] for r in a] == [0.1, 0.2]


def test_sweep_unknown_protocol_and_mode():
    with pytest.raises(ValueError):
        run_sweep("fig7", SweepSettings())
    with pytest.raises(ValueError):
        run_sweep("fig8", SweepSettings(N=40, B=2, values=(0.1,), mode="shuffle"),
                  RunConfig(sweeps=1, burn_in=0))


def test_write_rows(tmp_path):
    rows = [{"value": 0.1, "similarity": 0.9}, {"value": 0.2, "similarity": 0.8, "nmi": 0.5}]
    path = tmp_path / "out.csv"
    write_rows(rows, path, metadata={"config": RunConfig(), "network": AdjacencyView(3), "seed": np.int64(4)})
    with open(path) as fh:
        back = list(csv.DictReader(fh))
    assert back[0].keys() == {"value", "similarity", "nmi"}
    assert back[1]["nmi"] == "0.5"
    meta = json.loads((tmp_path / "out.csv.json").read_text())
    assert meta["seed"] == 4 and meta["network"] == {"nodes": 3, "edges": 0}
    assert meta["config"]["prior"] == "hdcsbm"
