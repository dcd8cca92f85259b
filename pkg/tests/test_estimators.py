import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from netrecon.estimators import (MarginalAccumulator, UndefinedObservable, average_clustering, compute_observable,
                                 degree_assortativity, degree_distribution_estimate, degree_histogram,
                                 effective_groups, kl_divergence, mmp_estimate, normalized_mutual_information,
                                 posterior_scalar)
from netrecon.graph import AdjacencyView, hamming_distance

N3_PAIRS = [(0, 1), (0, 2), (1, 2)]


def _acc(N, samples):
    acc = MarginalAccumulator(N)
    for edges in samples:
        acc.add_edges(sorted(i * N + j for i, j in edges))
    return acc


def _nx(A):
    g = nx.Graph()
    g.add_nodes_from(range(A.node_count))
    g.add_edges_from(A.edges)
    return g


def _random_graph(rng, N, p):
    return AdjacencyView(N, frozenset((i, j) for i in range(N) for j in range(i + 1, N) if rng.random() < p))


batches = st.lists(st.lists(st.sets(st.sampled_from([(i, j) for i in range(5) for j in range(i + 1, 5)])),
                            min_size=1, max_size=6), min_size=3, max_size=3)


# -- accumulator -----------------------------------------------------------------


def test_marginals_are_frequencies():
    acc = _acc(3, [[(0, 1)], [(0, 1), (1, 2)], [], [(0, 1)]])
    assert acc.pi(0, 1) == 0.75
    assert acc.pi(2, 1) == 0.25
    assert acc.pi(0, 2) == 0.0
    i, j, pi = acc.marginals()
    assert np.all((0 <= pi) & (pi <= 1))


def test_empty_accumulator_has_no_marginals():
    with pytest.raises(ValueError):
        MarginalAccumulator(3).marginals()


@given(batches)
def test_merge_is_associative_and_commutative(bs):
    a, b, c = (_acc(5, x) for x in bs)
    whole = _acc(5, bs[0] + bs[1] + bs[2])
    left = a.merge(b).merge(c)
    right = a.merge(b.merge(c))
    swapped = c.merge(a).merge(b)
    for x in (left, right, swapped):
        assert x.samples == whole.samples
        for i, j in itertools.combinations(range(5), 2):
            assert x.pi(i, j) == pytest.approx(whole.pi(i, j), abs=1e-12)


def test_merge_concatenates_scalars():
    a, b = MarginalAccumulator(2), MarginalAccumulator(2)
    a.add_scalar("edges", 1)
    b.add_scalar("edges", 3)
    b.add_scalar("nmi", 0.5)
    m = a.merge(b)
    assert list(m.scalar("edges")) == [1, 3]
    assert list(m.scalar("nmi")) == [0.5]
    with pytest.raises(ValueError):
        a.merge(MarginalAccumulator(3))


def test_counts_survive_flush():
    acc = _acc(4, [[(0, 1)]] * 3)
    acc._flush()
    acc.add_edges([1, 2])
    assert acc.pi(0, 1) == 1.0
    assert acc.pi(0, 2) == 0.25


def test_save_load_roundtrip(tmp_path):
    acc = MarginalAccumulator(4, keep_samples=True)
    acc.add_edges([1, 6])
    acc.kept.append(np.array([1, 6]))
    acc.add_edges([1])
    acc.kept.append(np.array([1]))
    acc.add_scalar("similarity", 0.8)
    acc.save(tmp_path / "acc.npz")
    back = MarginalAccumulator.load(tmp_path / "acc.npz")
    assert back.samples == 2
    assert back.pi(0, 1) == 1.0 and back.pi(1, 2) == 0.5
    assert list(back.scalar("similarity")) == [0.8]
    assert [g.edges for g in back.sample_graphs()] == [{(0, 1), (1, 2)}, {(0, 1)}]


def test_sample_graphs_need_keep():
    with pytest.raises(ValueError):
        MarginalAccumulator(3).sample_graphs()


def test_error_rate_summary_combines_spreads():
    acc = MarginalAccumulator(2)
    for m, v in ((0.1, 0.01), (0.3, 0.03)):
        acc.add_scalar("p_mean", m)
        acc.add_scalar("p_var", v)
    p, sd = acc.error_rate_summary()["p"]
    assert p == pytest.approx(0.2)
    assert sd == pytest.approx(math.sqrt(0.02 + 0.01))
    assert all(math.isnan(x) for x in acc.error_rate_summary()["q"])


# -- MMP ---------------------------------------------------------------------------


def test_mmp_threshold():
    acc = _acc(3, [[(0, 1), (1, 2)]] * 7 + [[(1, 2)]] * 3)
    assert acc.pi(0, 1) == pytest.approx(0.7)
    assert mmp_estimate(acc).edges == {(0, 1), (1, 2)}
    acc = _acc(3, [[(0, 1)]] * 2 + [[]] * 8)
    assert mmp_estimate(acc).edges == frozenset()


def test_mmp_tie_is_absent():
    assert mmp_estimate(_acc(2, [[(0, 1)], []])).edges == frozenset()


@pytest.mark.parametrize("seed", range(10))
def test_mmp_minimises_expected_distance(seed):
    rng = np.random.default_rng(seed)
    all_graphs = [frozenset(c) for r in range(4) for c in itertools.combinations(N3_PAIRS, r)]
    samples = [all_graphs[k] for k in rng.integers(0, len(all_graphs), size=rng.integers(1, 12))]
    acc = _acc(3, samples)
    post = [AdjacencyView(3, g) for g in samples]

    def risk(g):
        return np.mean([hamming_distance(AdjacencyView(3, g), A) for A in post])

    best = min(risk(g) for g in all_graphs)
    assert risk(mmp_estimate(acc).edges) == pytest.approx(best, abs=1e-12)


# -- posterior scalars ----------------------------------------------------------------


def test_posterior_scalar_constant_and_two_point():
    g = [AdjacencyView.from_edges(3, [(0, 1)])] * 4
    assert posterior_scalar(g, lambda A: A.edge_count) == (1.0, 0.0)
    two = [AdjacencyView(3), AdjacencyView.from_edges(3, [(0, 1)])]
    m, sd = posterior_scalar(two, lambda A: A.edge_count)
    assert m == 0.5
    assert sd == pytest.approx(math.sqrt(0.5))
    with pytest.raises(ValueError):
        posterior_scalar([], len)


def test_posterior_mean_differs_from_mmp_value():
    # a triangle half the time, a path the other half: the MMP graph is
    # the triangle, with clustering 1, while the posterior mean is 1/2
    tri = [(0, 1), (1, 2), (0, 2)]
    samples = [tri, tri, tri, [(0, 1), (1, 2)], [(0, 1), (0, 2)], [(0, 2), (1, 2)]]
    graphs = [AdjacencyView.from_edges(3, s) for s in samples]
    mean, _ = posterior_scalar(graphs, average_clustering)
    assert mean == pytest.approx(0.5)
    assert average_clustering(mmp_estimate(_acc(3, samples))) == 1.0


# -- degree distribution and KL --------------------------------------------------------


def test_degree_distribution_two_nodes():
    A = AdjacencyView.from_edges(2, [(0, 1)])
    p = degree_distribution_estimate([A, A], K=1)
    assert p == pytest.approx([0.25, 0.75])


def test_degree_distribution_empty_graph():
    p = degree_distribution_estimate([AdjacencyView(5)])
    assert p[0] == pytest.approx(6 / 10)
    assert p[1:] == pytest.approx([1 / 10] * 4)


def test_degree_distribution_large_n_limit():
    A = AdjacencyView.from_edges(10_000, nx.fast_gnp_random_graph(10_000, 3 / 10_000, seed=0).edges())
    h = degree_histogram(A)
    p = degree_distribution_estimate([A], K=len(h) - 1)
    big = h >= 100
    assert big.sum() >= 4
    assert np.all(np.abs(p[big] / (h[big] / 10_000) - 1) < 0.01)


def test_degree_distribution_rejects_small_k():
    with pytest.raises(ValueError):
        degree_distribution_estimate([AdjacencyView.from_edges(3, [(0, 1), (0, 2)])], K=1)


@given(st.lists(st.sets(st.sampled_from([(i, j) for i in range(6) for j in range(i + 1, 6)])), min_size=1, max_size=5))
def test_degree_distribution_is_a_distribution(samples):
    graphs = [AdjacencyView(6, frozenset(s)) for s in samples]
    for g in graphs:
        p = degree_distribution_estimate([g])
        assert np.all(p > 0) and p.sum() == pytest.approx(1.0)
    assert degree_distribution_estimate(graphs).sum() == pytest.approx(1.0)


def test_kl_examples():
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf
    with pytest.raises(ValueError):
        kl_divergence([1], [0.5, 0.5])


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.floats(0.01, 1), min_size=len(a), max_size=len(a)))))
def test_kl_nonnegative(pair):
    p, q = (np.array(v) / sum(v) for v in pair)
    assert kl_divergence(p, q) >= -1e-12


# -- observables ---------------------------------------------------------------------------


def test_clustering_examples():
    assert average_clustering(AdjacencyView.from_edges(3, [(0, 1), (1, 2), (0, 2)])) == 1.0
    assert average_clustering(AdjacencyView.from_edges(5, [(0, k) for k in range(1, 5)])) == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_observables_match_networkx(seed):
    A = _random_graph(np.random.default_rng(seed), 60, 0.08)
    g = _nx(A)
    assert average_clustering(A) == pytest.approx(nx.average_clustering(g), abs=1e-12)
    assert degree_assortativity(A) == pytest.approx(nx.degree_pearson_correlation_coefficient(g), abs=1e-10)
    assert list(degree_histogram(A)) == nx.degree_histogram(g)


def test_observables_on_karate(karate):
    g = nx.karate_club_graph()
    assert karate.edge_count == 78
    assert average_clustering(karate) == pytest.approx(nx.average_clustering(g), abs=1e-12)
    assert degree_assortativity(karate) == pytest.approx(nx.degree_pearson_correlation_coefficient(g), abs=1e-10)


def test_assortativity_undefined():
    with pytest.raises(UndefinedObservable):
        degree_assortativity(AdjacencyView(4))
    with pytest.raises(UndefinedObservable):
        degree_assortativity(AdjacencyView.from_edges(4, [(0, 1), (2, 3)]))


def test_effective_groups():
    assert effective_groups([0, 0, 0]) == 1.0
    assert effective_groups([0, 1, 2, 3]) == pytest.approx(4.0)
    assert effective_groups([0, 0, 1, 1]) == pytest.approx(2.0)
    A = AdjacencyView(4)
    assert compute_observable(A, "effective_groups", [0, 1, 0, 1]) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        compute_observable(A, "effective_groups")
    with pytest.raises(ValueError):
        compute_observable(A, "diameter")


# -- NMI --------------------------------------------------------------------------------------


def test_nmi_identity_and_relabel():
    b = np.array([0, 0, 1, 1, 2, 2, 2])
    assert normalized_mutual_information(b, b) == 1.0
    assert normalized_mutual_information(b, (b + 1) % 3 + 5) == pytest.approx(1.0)
    assert normalized_mutual_information([0, 0, 0], [0, 0, 0]) == 1.0
    with pytest.raises(ValueError):
        normalized_mutual_information([0, 1], [0, 1, 1])


def test_nmi_independent_labels():
    rng = np.random.default_rng(1)
    assert normalized_mutual_information(rng.integers(0, 4, 10_000), rng.integers(0, 4, 10_000)) < 0.05


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=1, max_size=40))
def test_nmi_matches_sklearn(pairs):
    a, b = (np.array(v) for v in zip(*pairs))
    want = normalized_mutual_info_score(a, b, average_method="arithmetic")
    assert normalized_mutual_information(a, b) == pytest.approx(want, abs=1e-9)
