"""Reductions of posterior samples: edge marginals, the maximum marginal
network, posterior means of observables, degree distributions and
partition comparisons."""

import math

import numpy as np
import scipy.sparse as sp

from .graph import AdjacencyView, HierarchicalPartition, LatentMultigraph, collapse_multigraph, similarity


class UndefinedObservable(ValueError):
    """Raised when an observable has no value for a graph (e.g. assortativity
    of a regular graph)."""


class MarginalAccumulator:
    """Streaming tallies over posterior samples.

    Edge occurrences are kept as sorted integer keys ``i * N + j`` with
    counts, so pairs never seen are exact zeros.  Scalars are stored as
    per-sample streams.  Merging concatenates the streams and adds counts.

    With ``reference`` every sample's similarity to that network is
    recorded, with ``truth`` (a node partition) the NMI of the sampled
    level-0 partition, and with ``keep_samples`` the edge set of every
    sample is retained.
    """

    def __init__(self, node_count, observables=False, reference=None, truth=None, keep_samples=False):
        self.node_count = int(node_count)
        self.samples = 0
        self.observables = observables
        self.reference = reference
        self.truth = None if truth is None else np.asarray(truth)
        self.kept = [] if keep_samples else None
        self._keys = np.zeros(0, dtype=np.int64)
        self._counts = np.zeros(0, dtype=np.int64)
        self._pending = []
        self._pending_size = 0
        self.scalars = {}

    # -- accumulation ----------------------------------------------------

    def add_edges(self, keys):
        keys = np.asarray(keys, dtype=np.int64)
        self._pending.append(keys)
        self._pending_size += len(keys)
        self.samples += 1
        if self._pending_size > 4_000_000:
            self._flush()

    def add_scalar(self, name, value):
        self.scalars.setdefault(name, []).append(float(value))

    def add(self, state):
        """Record one chain state (anything with ``edge_keys`` and friends)."""
        keys = np.asarray(state.edge_keys(), dtype=np.int64)
        self.add_edges(keys)
        if self.kept is not None:
            self.kept.append(keys)
        self.add_scalar("edges", len(keys))
        self.add_scalar("log_posterior", state.log_posterior())
        pm, pv, qm, qv = state.error_rate_moments()
        if not math.isnan(pm) or not math.isnan(qm):
            self.add_scalar("p_mean", pm)
            self.add_scalar("p_var", pv)
            self.add_scalar("q_mean", qm)
            self.add_scalar("q_var", qv)
        if state.model == "hetero":
            for name, v in zip(("alpha", "beta", "mu", "nu"), state.hyper.as_tuple()):
                self.add_scalar(name, v)
        b = state.partition()
        self.add_scalar("groups", b.group_count(0))
        self.add_scalar("effective_groups", effective_groups(b.levels[0]))
        if self.truth is not None:
            self.add_scalar("nmi", normalized_mutual_information(b.levels[0], self.truth))
        A = None
        if self.reference is not None:
            A = AdjacencyView.from_keys(self.node_count, keys)
            self.add_scalar("similarity", similarity(A, self.reference))
        if self.observables:
            if A is None:
                A = AdjacencyView.from_keys(self.node_count, keys)
            self.add_scalar("clustering", compute_observable(A, "clustering"))
            try:
                self.add_scalar("assortativity", compute_observable(A, "assortativity"))
            except UndefinedObservable:
                self.add_scalar("assortativity", math.nan)

    def _flush(self):
        if not self._pending:
            return
        allk = np.concatenate([self._keys] + self._pending)
        w = np.concatenate([self._counts] + [np.ones(len(p), dtype=np.int64) for p in self._pending])
        u, inv = np.unique(allk, return_inverse=True)
        self._keys = u
        self._counts = np.bincount(inv, weights=w, minlength=len(u)).astype(np.int64)
        self._pending = []
        self._pending_size = 0

    def merge(self, other):
        """New accumulator holding both sample sets."""
        if other.node_count != self.node_count:
            raise ValueError("node counts differ")
        self._flush()
        other._flush()
        out = MarginalAccumulator(self.node_count, self.observables, self.reference, self.truth)
        if self.kept is not None and other.kept is not None:
            out.kept = self.kept + other.kept
        out.samples = self.samples + other.samples
        allk = np.concatenate([self._keys, other._keys])
        w = np.concatenate([self._counts, other._counts])
        u, inv = np.unique(allk, return_inverse=True)
        out._keys = u
        out._counts = np.bincount(inv, weights=w, minlength=len(u)).astype(np.int64)
        for name in sorted(set(self.scalars) | set(other.scalars)):
            out.scalars[name] = self.scalars.get(name, []) + other.scalars.get(name, [])
        return out

    def sample_graphs(self):
        """Kept samples as :class:`AdjacencyView` objects."""
        if self.kept is None:
            raise ValueError("samples were not kept")
        return [AdjacencyView.from_keys(self.node_count, k) for k in self.kept]

    def save(self, path):
        """Store counts, scalar streams and any kept samples in an ``.npz`` file."""
        self._flush()
        arrays = {"node_count": np.array(self.node_count), "samples": np.array(self.samples),
                  "keys": self._keys, "counts": self._counts}
        for name, v in self.scalars.items():
            arrays[f"scalar_{name}"] = np.asarray(v, dtype=float)
        if self.kept is not None:
            arrays["kept_offsets"] = np.cumsum([0] + [len(k) for k in self.kept])
            arrays["kept_keys"] = np.concatenate(self.kept) if self.kept else np.zeros(0, np.int64)
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            out = cls(int(z["node_count"]))
            out.samples = int(z["samples"])
            out._keys = z["keys"].astype(np.int64)
            out._counts = z["counts"].astype(np.int64)
            for name in z.files:
                if name.startswith("scalar_"):
                    out.scalars[name[7:]] = z[name].tolist()
            if "kept_offsets" in z.files:
                off = z["kept_offsets"]
                kk = z["kept_keys"].astype(np.int64)
                out.kept = [kk[off[i]:off[i + 1]] for i in range(len(off) - 1)]
        return out

    # -- queries -----------------------------------------------------------

    def marginals(self):
        """``(i, j, pi)`` arrays over pairs seen at least once."""
        self._flush()
        N = self.node_count
        if self.samples == 0:
            raise ValueError("no samples")
        return self._keys // N, self._keys % N, self._counts / self.samples

    def pi(self, i, j):
        self._flush()
        i, j = min(i, j), max(i, j)
        k = np.searchsorted(self._keys, i * self.node_count + j)
        if k < len(self._keys) and self._keys[k] == i * self.node_count + j:
            return self._counts[k] / self.samples
        return 0.0

    def scalar(self, name):
        return np.asarray(self.scalars.get(name, []), dtype=float)

    def summary(self, name):
        """Posterior mean and standard deviation of a recorded scalar."""
        v = self.scalar(name)
        v = v[~np.isnan(v)]
        if len(v) == 0:
            return math.nan, math.nan
        return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0

    def error_rate_summary(self):
        """Posterior mean and sd of ``p`` and ``q``, combining the spread of
        conditional means with the average conditional variance."""
        out = {}
        for r in ("p", "q"):
            m = self.scalar(f"{r}_mean")
            v = self.scalar(f"{r}_var")
            if len(m) == 0:
                out[r] = (math.nan, math.nan)
                continue
            between = m.var() if len(m) > 1 else 0.0
            out[r] = (float(m.mean()), float(math.sqrt(v.mean() + between)))
        return out


def mmp_estimate(acc):
    """Network with every pair whose marginal exceeds one half."""
    i, j, pi = acc.marginals()
    keep = pi > 0.5
    return AdjacencyView(acc.node_count, frozenset(zip(i[keep].tolist(), j[keep].tolist())))


def posterior_scalar(samples, f):
    """Mean and standard deviation of ``f`` over samples."""
    vals = np.array([f(A) for A in samples], dtype=float)
    if len(vals) == 0:
        raise ValueError("no samples")
    sd = float(vals.std(ddof=1)) if len(vals) > 1 else math.nan
    return float(vals.mean()), sd


def _csr(A):
    if isinstance(A, LatentMultigraph):
        A = collapse_multigraph(A)
    N = A.node_count
    e = A.edge_array()
    if len(e) == 0:
        return sp.csr_matrix((N, N))
    r = np.concatenate([e[:, 0], e[:, 1]])
    c = np.concatenate([e[:, 1], e[:, 0]])
    return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(N, N))


def degree_histogram(A):
    k = _csr(A).sum(axis=1).A1.astype(np.int64)
    return np.bincount(k, minlength=1)


def average_clustering(A):
    M = _csr(A)
    k = M.sum(axis=1).A1
    tri = (M @ M).multiply(M).sum(axis=1).A1 / 2
    c = np.zeros_like(k)
    ok = k >= 2
    c[ok] = 2 * tri[ok] / (k[ok] * (k[ok] - 1))
    return float(c.mean())


def degree_assortativity(A):
    M = _csr(A)
    k = M.sum(axis=1).A1
    coo = sp.triu(M, 1).tocoo()
    if coo.nnz == 0:
        raise UndefinedObservable("assortativity of an empty graph")
    x = np.concatenate([k[coo.row], k[coo.col]])
    y = np.concatenate([k[coo.col], k[coo.row]])
    if x.std() == 0:
        raise UndefinedObservable("assortativity with zero degree variance")
    return float(np.corrcoef(x, y)[0, 1])


def effective_groups(b):
    b = np.asarray(b)
    n = np.bincount(b)
    n = n[n > 0] / len(b)
    return float(math.exp(-(n * np.log(n)).sum()))


def compute_observable(A, kind, b=None):
    """``clustering``, ``assortativity``, ``effective_groups`` (needs ``b``)
    or ``degree_histogram``."""
    if kind == "clustering":
        return average_clustering(A)
    if kind == "assortativity":
        return degree_assortativity(A)
    if kind == "effective_groups":
        if b is None:
            raise ValueError("effective_groups needs a partition")
        if isinstance(b, HierarchicalPartition):
            b = b.levels[0]
        return effective_groups(b)
    if kind == "degree_histogram":
        return degree_histogram(A)
    raise ValueError(f"unknown observable {kind!r}")


def degree_distribution_estimate(samples, K=None):
    """Posterior mean of the smoothed degree distribution ``(n_k + 1) / (N + K + 1)``."""
    total = None
    count = 0
    for A in samples:
        N = A.node_count
        Kmax = N - 1 if K is None else K
        h = degree_histogram(A)
        if len(h) - 1 > Kmax:
            raise ValueError(f"observed degree {len(h) - 1} exceeds K = {Kmax}")
        n = np.zeros(Kmax + 1)
        n[:len(h)] = h
        p = (n + 1) / (N + Kmax + 1)
        total = p if total is None else total + p
        count += 1
    if count == 0:
        raise ValueError("no samples")
    return total / count


def kl_divergence(p, phat):
    """``sum_k p_k ln(p_k / phat_k)``; infinite when ``phat`` misses support of ``p``."""
    p = np.asarray(p, dtype=float)
    phat = np.asarray(phat, dtype=float)
    if p.shape != phat.shape:
        raise ValueError("distributions differ in length")
    s = p > 0
    if np.any(phat[s] <= 0):
        return math.inf
    return float((p[s] * np.log(p[s] / phat[s])).sum())


def normalized_mutual_information(b1, b2):
    """Mutual information over the mean of the two entropies."""
    b1 = np.asarray(b1)
    b2 = np.asarray(b2)
    if b1.shape != b2.shape:
        raise ValueError("partitions differ in size")
    N = len(b1)
    _, x = np.unique(b1, return_inverse=True)
    _, y = np.unique(b2, return_inverse=True)
    C = sp.coo_matrix((np.ones(N), (x, y))).toarray() / N
    px = C.sum(1)
    py = C.sum(0)
    hx = -(px[px > 0] * np.log(px[px > 0])).sum()
    hy = -(py[py > 0] * np.log(py[py > 0])).sum()
    nz = C > 0
    mi = (C[nz] * np.log(C[nz] / np.outer(px, py)[nz])).sum()
    if hx + hy == 0:
        return 1.0
    return float(min(1.0, max(0.0, 2 * mi / (hx + hy))))
