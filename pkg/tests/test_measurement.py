import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from netrecon.graph import AdjacencyView, MeasurementData
from netrecon.measurement import (ErrorHyperParams, ExtrinsicUncertainty, delta_log_likelihood_uniform,
                                  edge_error_conditionals_hetero, error_rate_posterior_uniform,
                                  log_likelihood_extrinsic, log_likelihood_fixed_rates, log_likelihood_hetero,
                                  log_likelihood_uniform, log_likelihood_uniform_flat, mean_uncertainty,
                                  measurement_summaries, posterior_mean_error_rates_uniform,
                                  sample_error_rates_uniform)

FLAT = ErrorHyperParams()


@st.composite
def instances(draw, max_n=6, max_meas=4):
    N = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    default_n = draw(st.integers(0, max_meas))
    ov = {}
    for p in draw(st.lists(st.sampled_from(pairs), unique=True)):
        n = draw(st.integers(0, max_meas))
        ov[p] = (n, draw(st.integers(0, n)))
    A = AdjacencyView(N, frozenset(draw(st.lists(st.sampled_from(pairs), unique=True))))
    return MeasurementData(N, default_n, ov), A


hypers = st.builds(ErrorHyperParams, *[st.floats(0.1, 20)] * 4)


# -- summaries --------------------------------------------------------------


def test_summaries_empty_network():
    D = MeasurementData(3, 1, {(0, 1): (1, 1)})
    s = measurement_summaries(D, AdjacencyView(3))
    assert (s.E, s.T) == (0, 0)


def test_summaries_perfect_agreement():
    D = MeasurementData(4, 1, {(0, 1): (1, 1), (2, 3): (1, 1)})
    s = measurement_summaries(D, D.positive_pairs())
    assert s.T == s.X == s.E == 2 and s.M == 6


def test_summaries_hand_count():
    D = MeasurementData(3, 2, {(0, 1): (3, 1), (0, 2): (0, 0)})
    A = AdjacencyView.from_edges(3, [(0, 1), (1, 2)])
    s = measurement_summaries(D, A)
    assert (s.M, s.X, s.E, s.T) == (5, 1, 5, 1)


@given(instances())
def test_summary_bounds(case):
    D, A = case
    s = measurement_summaries(D, A)
    assert s.T <= min(s.X, s.E) and s.E <= s.M and s.X <= s.M


# -- uniform model ----------------------------------------------------------


def test_uniform_single_pair_examples():
    D = MeasurementData(2, 1, {(0, 1): (1, 1)})
    assert log_likelihood_uniform(D, AdjacencyView.from_edges(2, [(0, 1)])) == pytest.approx(math.log(0.5))
    assert log_likelihood_uniform(D, AdjacencyView(2)) == pytest.approx(math.log(0.5))


@given(instances())
def test_uniform_equals_binomial_form(case):
    D, A = case
    assert log_likelihood_uniform(D, A) == pytest.approx(log_likelihood_uniform_flat(D, A), abs=1e-10)


@settings(max_examples=15)
@given(instances(max_n=4, max_meas=2), st.builds(ErrorHyperParams, *[st.floats(1, 6)] * 4))
def test_uniform_matches_numerical_integration(case, h):
    D, A = case

    def integrand(q, p):
        lp = math.log(p) * (h.alpha - 1) + math.log1p(-p) * (h.beta - 1) - math.lgamma(h.alpha) - math.lgamma(h.beta)
        lp += math.lgamma(h.alpha + h.beta)
        lq = math.log(q) * (h.mu - 1) + math.log1p(-q) * (h.nu - 1) - math.lgamma(h.mu) - math.lgamma(h.nu)
        lq += math.lgamma(h.mu + h.nu)
        return math.exp(log_likelihood_fixed_rates(D, A, p, q) + lp + lq)

    v, err = integrate.dblquad(integrand, 0, 1, 0, 1, epsabs=1e-12, epsrel=1e-9)
    assert math.log(v) == pytest.approx(log_likelihood_uniform(D, A, h), abs=1e-5)


def test_uniform_strong_prior_limit_is_fixed_rates():
    D = MeasurementData(4, 2, {(0, 1): (2, 2), (1, 2): (2, 1), (0, 3): (1, 0)})
    A = AdjacencyView.from_edges(4, [(0, 1), (2, 3)])
    target = log_likelihood_fixed_rates(D, A, 0.1, 0.1)
    errs = []
    for scale in (1e2, 1e4, 1e6):
        h = ErrorHyperParams(0.1 * scale, 0.9 * scale, 0.1 * scale, 0.9 * scale)
        errs.append(abs(log_likelihood_uniform(D, A, h) - target))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4


@pytest.mark.parametrize("n", [0, 1, 2, 3])
@pytest.mark.parametrize("model", ["uniform", "hetero"])
def test_likelihood_normalised_over_outcomes(n, model):
    f = log_likelihood_uniform if model == "uniform" else log_likelihood_hetero
    h = ErrorHyperParams(2.0, 0.5, 0.7, 3.0)
    for A in (AdjacencyView(2), AdjacencyView.from_edges(2, [(0, 1)])):
        total = sum(math.exp(f(MeasurementData(2, 0, {(0, 1): (n, x)}), A, h)) for x in range(n + 1))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_uniform_normalised_on_three_pairs():
    pairs = [(0, 1), (0, 2), (1, 2)]
    A = AdjacencyView.from_edges(3, [(0, 1)])
    total = 0.0
    for xs in itertools.product(range(3), repeat=3):
        D = MeasurementData(3, 0, {p: (2, x) for p, x in zip(pairs, xs)})
        total += math.exp(log_likelihood_uniform(D, A))
    assert total == pytest.approx(1.0, abs=1e-9)


@given(instances(), st.permutations(range(6)))
def test_uniform_relabelling_invariant(case, perm):
    D, A = case
    N = D.node_count
    perm = [p for p in perm if p < N]
    D2 = MeasurementData(N, D.default_n, {(perm[i], perm[j]): v for (i, j), v in D.overrides.items()})
    A2 = AdjacencyView.from_edges(N, [(perm[i], perm[j]) for i, j in A.edges])
    assert log_likelihood_uniform(D, A) == pytest.approx(log_likelihood_uniform(D2, A2), abs=1e-10)


@given(instances(), hypers, st.data())
def test_uniform_delta_matches_recompute(case, h, data):
    D, A = case
    N = D.node_count
    i, j = data.draw(st.sampled_from([(i, j) for i in range(N) for j in range(i + 1, N)]))
    B = AdjacencyView(N, A.edges ^ {(i, j)})
    d = delta_log_likelihood_uniform(D, A, h, (i, j))
    assert d == pytest.approx(log_likelihood_uniform(D, B, h) - log_likelihood_uniform(D, A, h), abs=1e-9)
    assert d + delta_log_likelihood_uniform(D, B, h, (j, i)) == pytest.approx(0.0, abs=1e-9)


def test_unmeasured_flip_only_moves_edge_term():
    D = MeasurementData(3, 0, {(0, 1): (2, 2)})
    A = AdjacencyView.from_edges(3, [(0, 1)])
    B = AdjacencyView.from_edges(3, [(0, 1), (1, 2)])
    sa, sb = measurement_summaries(D, A), measurement_summaries(D, B)
    assert (sa.M, sa.X, sa.E, sa.T) == (sb.M, sb.X, sb.E, sb.T)
    assert delta_log_likelihood_uniform(D, A, FLAT, (1, 2)) == 0.0


def test_hyperparams_must_be_positive():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            ErrorHyperParams(alpha=bad)


# -- heterogeneous model ------------------------------------------------------


@given(instances())
def test_hetero_flat_prior_ignores_network(case):
    D, A = case
    assert log_likelihood_hetero(D, A) == pytest.approx(log_likelihood_hetero(D, AdjacencyView(D.node_count)),
                                                        abs=1e-10)


@given(instances(max_meas=1), hypers)
def test_hetero_single_measurements_reduce_to_fixed_rates(case, h):
    D, A = case
    D = MeasurementData(D.node_count, 1, {p: (1, x) for p, (_, x) in D.overrides.items()})
    want = log_likelihood_fixed_rates(D, A, h.prior_p, h.prior_q)
    assert log_likelihood_hetero(D, A, h) == pytest.approx(want, abs=1e-10)


def test_hetero_single_pair_value():
    D = MeasurementData(2, 0, {(0, 1): (2, 2)})
    A = AdjacencyView.from_edges(2, [(0, 1)])
    # binomial coefficient 1 times B(1, 3) / B(1, 1)
    assert log_likelihood_hetero(D, A) == pytest.approx(math.log(1 / 3), abs=1e-12)


def test_hetero_conditionals():
    h = ErrorHyperParams(2.0, 3.0, 4.0, 5.0)
    assert edge_error_conditionals_hetero(4, 1, 0, h)[0] == (2.0, 3.0)
    assert edge_error_conditionals_hetero(10, 10, 1, h)[0] == (2.0, 13.0)
    assert edge_error_conditionals_hetero(10, 3, 1, h)[1] == (4.0, 5.0)
    assert edge_error_conditionals_hetero(10, 3, 0, h)[1] == (7.0, 12.0)
    with pytest.raises(ValueError):
        edge_error_conditionals_hetero(2, 3, 1, h)


# -- extrinsic model -------------------------------------------------------------


def test_extrinsic_constant_q_is_flat():
    Q = ExtrinsicUncertainty(4, {}, 0.3)
    for edges in ([], [(0, 1)], [(0, 1), (2, 3), (1, 2)]):
        assert log_likelihood_extrinsic(Q, AdjacencyView.from_edges(4, edges)) == pytest.approx(0.0, abs=1e-12)


def test_extrinsic_hand_value():
    Q = ExtrinsicUncertainty(3, {(0, 1): 0.9, (0, 2): 0.1, (1, 2): 0.5})
    assert Q.mean == pytest.approx(0.5)
    want = math.log(0.9 / 0.5) + math.log(0.9 / 0.5) + 0.0
    assert log_likelihood_extrinsic(Q, AdjacencyView.from_edges(3, [(0, 1)])) == pytest.approx(want)


def test_extrinsic_certain_values():
    Q = ExtrinsicUncertainty(3, {(0, 1): 1.0, (0, 2): 0.0, (1, 2): 0.0})
    pairs = [(0, 1), (0, 2), (1, 2)]
    finite = []
    for mask in itertools.product((0, 1), repeat=3):
        A = AdjacencyView.from_edges(3, [p for p, m in zip(pairs, mask) if m])
        if math.isfinite(log_likelihood_extrinsic(Q, A)):
            finite.append(A)
    assert finite == [AdjacencyView.from_edges(3, [(0, 1)])]


def test_extrinsic_mean():
    assert mean_uncertainty(ExtrinsicUncertainty(5, {}, 0.5)) == 0.5
    assert mean_uncertainty(ExtrinsicUncertainty(3, {(0, 1): 0.2, (0, 2): 0.4, (1, 2): 0.6})) == pytest.approx(0.4)
    zero = ExtrinsicUncertainty(3, {(0, 1): 0.0, (0, 2): 0.0, (1, 2): 0.0})
    assert mean_uncertainty(zero) == 0.0
    with pytest.raises(ValueError):
        log_likelihood_extrinsic(zero, AdjacencyView(3))


def test_extrinsic_validation():
    with pytest.raises(ValueError):
        ExtrinsicUncertainty(3, {(0, 1): 1.5}, 0.5)
    with pytest.raises(ValueError):
        ExtrinsicUncertainty(3, {(0, 1): 0.5})


# -- error-rate posteriors ------------------------------------------------------


def test_posterior_mean_with_exact_data():
    N, n = 8, 3
    A = AdjacencyView.from_edges(N, [(0, 1), (1, 2), (2, 3), (5, 7)])
    D = MeasurementData(N, n, {e: (n, n) for e in A.edges})
    h = ErrorHyperParams(1.5, 2.0, 1.0, 1.0)
    p, _ = posterior_mean_error_rates_uniform(D, A, h)
    assert p == pytest.approx(h.alpha / (n * A.edge_count + h.alpha + h.beta))


def test_posterior_without_data_is_prior():
    h = ErrorHyperParams(2.0, 5.0, 3.0, 4.0)
    D = MeasurementData(4, 0)
    A = AdjacencyView.from_edges(4, [(0, 1)])
    assert error_rate_posterior_uniform(D, A, h) == ((2.0, 5.0), (3.0, 4.0))


def test_posterior_draws_match_beta_mean():
    D = MeasurementData(6, 2, {(0, 1): (2, 2), (1, 2): (2, 1), (3, 4): (2, 1), (2, 5): (2, 2)})
    A = AdjacencyView.from_edges(6, [(0, 1), (1, 2), (4, 5)])
    h = ErrorHyperParams()
    rng = np.random.default_rng(0)
    draws = np.array([sample_error_rates_uniform(D, A, h, rng) for _ in range(100_000)])
    (a, b), (c, d) = error_rate_posterior_uniform(D, A, h)
    for col, (u, v) in enumerate(((a, b), (c, d))):
        m = u / (u + v)
        sd = math.sqrt(u * v / ((u + v) ** 2 * (u + v + 1)))
        assert abs(draws[:, col].mean() - m) < 3 * sd / math.sqrt(len(draws))
