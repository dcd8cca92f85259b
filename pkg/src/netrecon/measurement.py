"""Measurement likelihoods given a candidate network.

Three noise models are covered: uniform unknown error rates with Beta
priors integrated out, per-pair error rates with shared Beta
hyperparameters, and externally supplied edge probabilities.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from .graph import AdjacencyView, LatentMultigraph, MeasurementData, canonical, collapse_multigraph


@dataclass(frozen=True)
class ErrorHyperParams:
    """Beta hyperparameters; ``(alpha, beta)`` for missing edges, ``(mu, nu)``
    for spurious ones.  All ones is the noninformative choice."""

    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "mu", "nu"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def as_tuple(self):
        return (self.alpha, self.beta, self.mu, self.nu)

    @property
    def prior_p(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def prior_q(self):
        return self.mu / (self.mu + self.nu)


@dataclass(frozen=True)
class MeasurementSummaries:
    M: int
    X: int
    E: int
    T: int


@dataclass
class ExtrinsicUncertainty:
    """Edge probabilities ``Q_ij`` from an outside source.

    Pairs absent from ``values`` take ``default_q``; leaving ``default_q``
    unset requires every pair to be listed.
    """

    node_count: int
    values: dict = field(default_factory=dict)
    default_q: float | None = None

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("need at least two nodes")
        clean = {}
        for (i, j), q in self.values.items():
            i, j = canonical(i, j)
            if i == j or not (0 <= i and j < self.node_count):
                raise ValueError(f"invalid pair ({i}, {j})")
            q = float(q)
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"Q out of range for pair ({i}, {j}): {q}")
            clean[(i, j)] = q
        self.values = clean
        P = self.pair_count
        if self.default_q is None:
            if len(clean) < P:
                raise ValueError("a default Q is needed when not every pair is listed")
        elif not 0.0 < self.default_q < 1.0:
            raise ValueError(f"default Q must lie in (0, 1), got {self.default_q}")
        s = sum(clean.values())
        if self.default_q is not None:
            s += (P - len(clean)) * self.default_q
        self.mean = s / P

    @property
    def pair_count(self):
        return self.node_count * (self.node_count - 1) // 2

    def get(self, i, j):
        q = self.values.get(canonical(i, j))
        return self.default_q if q is None else q


def _adjacency(A):
    if isinstance(A, LatentMultigraph):
        return collapse_multigraph(A)
    return A


def _check_sizes(D, A):
    if D.node_count != A.node_count:
        raise ValueError(f"node counts differ ({D.node_count} != {A.node_count})")


def measurement_summaries(D, A):
    """Total measurements, positives, measurements on edges and positives on edges."""
    A = _adjacency(A)
    _check_sizes(D, A)
    ov = D.overrides
    M = D.default_n * (D.pair_count - len(ov)) + sum(n for n, _ in ov.values())
    X = sum(x for _, x in ov.values())
    E = 0
    T = 0
    for e in A.edges:
        n, x = ov.get(e, (D.default_n, 0))
        E += n
        T += x
    return MeasurementSummaries(int(M), int(X), int(E), int(T))


def log_binomial_constant(D):
    """``sum ln C(n_ij, x_ij)``; zero for defaulted pairs."""
    return float(sum(gammaln(n + 1) - gammaln(x + 1) - gammaln(n - x + 1) for n, x in D.overrides.values()))


def _uniform_from_summaries(s, h):
    return (betaln(s.E - s.T + h.alpha, s.T + h.beta) - betaln(h.alpha, h.beta)
            + betaln(s.X - s.T + h.mu, s.M - s.X - s.E + s.T + h.nu) - betaln(h.mu, h.nu))


def log_likelihood_uniform(D, A, h=ErrorHyperParams()):
    """``ln P(x | n, A)`` with uniform error rates integrated over their Beta priors."""
    s = measurement_summaries(D, A)
    return log_binomial_constant(D) + float(_uniform_from_summaries(s, h))


def log_likelihood_uniform_flat(D, A):
    """The noninformative case written with binomial coefficients only."""
    s = measurement_summaries(D, A)

    def lnb(n, k):
        return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)

    return float(log_binomial_constant(D) - lnb(s.E, s.T) - math.log(s.E + 1)
                 - lnb(s.M - s.E, s.X - s.T) - math.log(s.M - s.E + 1))


def delta_log_likelihood_uniform(D, A, h, flip):
    """Change of :func:`log_likelihood_uniform` when the pair ``flip`` toggles."""
    A = _adjacency(A)
    s = measurement_summaries(D, A)
    i, j = canonical(*flip)
    if i == j:
        raise ValueError("cannot flip a self-pair")
    n, x = D.get(i, j)
    sign = -1 if (i, j) in A.edges else 1
    t = MeasurementSummaries(s.M, s.X, s.E + sign * n, s.T + sign * x)
    return float(_uniform_from_summaries(t, h) - _uniform_from_summaries(s, h))


def log_likelihood_fixed_rates(D, A, p, q):
    """``ln P(x | n, A)`` at known missing rate ``p`` and spurious rate ``q``."""
    s = measurement_summaries(D, A)

    def xlogy(a, b):
        return 0.0 if a == 0 else a * math.log(b)

    return (log_binomial_constant(D) + xlogy(s.T, 1 - p) + xlogy(s.E - s.T, p)
            + xlogy(s.X - s.T, q) + xlogy(s.M - s.X - s.E + s.T, 1 - q))


def hetero_pair_term(n, x, a, h):
    """Per-pair log-likelihood (without the binomial coefficient) with the
    pair's own error rates integrated out."""
    if a:
        return float(betaln(n - x + h.alpha, x + h.beta) - betaln(h.alpha, h.beta))
    return float(betaln(x + h.mu, n - x + h.nu) - betaln(h.mu, h.nu))


def measurement_classes(D, A):
    """Counter of ``(n, x, A_ij)`` over all pairs."""
    A = _adjacency(A)
    _check_sizes(D, A)
    c = Counter()
    for e, (n, x) in D.overrides.items():
        c[(n, x, int(e in A.edges))] += 1
    dflt_edges = sum(1 for e in A.edges if e not in D.overrides)
    rest = D.pair_count - len(D.overrides)
    c[(D.default_n, 0, 1)] += dflt_edges
    c[(D.default_n, 0, 0)] += rest - dflt_edges
    return c


def log_likelihood_hetero(D, A, h=ErrorHyperParams()):
    """``ln P(x | n, A)`` with independent per-pair error rates drawn from
    ``Beta(alpha, beta)`` and ``Beta(mu, nu)``."""
    total = log_binomial_constant(D)
    for (n, x, a), c in measurement_classes(D, A).items():
        if c:
            total += c * hetero_pair_term(n, x, a, h)
    return total


def log_likelihood_extrinsic(Q, A):
    """``ln P(Q | A)`` up to an ``A``-independent constant."""
    A = _adjacency(A)
    if Q.node_count != A.node_count:
        raise ValueError("node counts differ")
    qbar = Q.mean
    if not 0.0 < qbar < 1.0:
        raise ValueError("mean Q must lie strictly between 0 and 1")
    t1, t0 = extrinsic_terms(Q)
    total = 0.0
    listed = set(Q.values)
    for e, q in Q.values.items():
        total += t1[e] if e in A.edges else t0[e]
    if Q.default_q is not None:
        d1 = math.log(Q.default_q / qbar)
        d0 = math.log((1 - Q.default_q) / (1 - qbar))
        ne = sum(1 for e in A.edges if e not in listed)
        total += ne * d1 + (Q.pair_count - len(listed) - ne) * d0
    return total


def extrinsic_terms(Q):
    """Per-listed-pair log ratios for ``A_ij = 1`` and ``A_ij = 0``."""
    qbar = Q.mean
    t1 = {}
    t0 = {}
    for e, q in Q.values.items():
        t1[e] = math.log(q / qbar) if q > 0 else -math.inf
        t0[e] = math.log((1 - q) / (1 - qbar)) if q < 1 else -math.inf
    return t1, t0


def mean_uncertainty(Q):
    return Q.mean


def error_rate_posterior_uniform(D, A, h=ErrorHyperParams()):
    """Beta parameters of ``p`` and ``q`` conditioned on ``A``."""
    s = measurement_summaries(D, A)
    return ((s.E - s.T + h.alpha, s.T + h.beta),
            (s.X - s.T + h.mu, s.M - s.X - s.E + s.T + h.nu))


def posterior_mean_error_rates_uniform(D, A, h=ErrorHyperParams()):
    (a, b), (c, d) = error_rate_posterior_uniform(D, A, h)
    return a / (a + b), c / (c + d)


def sample_error_rates_uniform(D, A, h, rng):
    """Draw ``(p, q)`` from their conditional posteriors."""
    (a, b), (c, d) = error_rate_posterior_uniform(D, A, h)
    return float(rng.beta(a, b)), float(rng.beta(c, d))


def edge_error_conditionals_hetero(n, x, a, h):
    """Beta parameters of ``(p_ij, q_ij)`` given one pair's data and ``A_ij``."""
    if not 0 <= x <= n:
        raise ValueError("need 0 <= x <= n")
    a = int(bool(a))
    return ((a * (n - x) + h.alpha, a * x + h.beta),
            ((1 - a) * x + h.mu, (1 - a) * (n - x) + h.nu))
