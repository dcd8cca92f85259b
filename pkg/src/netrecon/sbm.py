"""Marginal likelihoods of the degree-corrected SBM on latent multigraphs.

The free functions here evaluate every quantity from scratch in pure Python
and serve as the reference for the incremental kernels.  :class:`BlockState`
is the incremental counterpart used by the sampler.
"""

import math
import threading
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, spence

from . import _kernels as K
from ._state import KernelState
from .graph import AdjacencyView, HierarchicalPartition, LatentMultigraph, collapse_multigraph, compact_labels

LN2 = math.log(2.0)


class QCountCache:
    """Memoised number of partitions of ``m`` into at most ``n`` parts.

    Values are exact Python integers.  The table grows on demand and is
    shared; insertion is serialised by a lock so concurrent readers see
    either a missing entry or a complete one.
    """

    def __init__(self):
        self._rows = {0: [1]}
        self._lock = threading.Lock()

    def value(self, m, n):
        if m < 0 or n < 0:
            raise ValueError("q(m, n) needs m, n >= 0")
        if m == 0:
            return 1
        if n == 0:
            return 0
        n = min(n, m)
        row = self._rows.get(m)
        if row is None or len(row) <= n:
            with self._lock:
                self._fill(m, n)
            row = self._rows[m]
        return row[n]

    def _fill(self, m, n):
        # q(m', k) for m' <= m and k <= n, row by row
        for mm in range(1, m + 1):
            row = self._rows.get(mm)
            need = min(n, mm)
            if row is not None and len(row) > need:
                continue
            row = [0] if row is None else row
            for k in range(len(row), need + 1):
                rest = mm - k
                if rest == 0:
                    below = 1
                else:
                    r = self._rows[rest]
                    below = r[min(k, rest)]
                row.append(row[k - 1] + below)
            self._rows[mm] = row


_QCACHE = QCountCache()

# beyond this many edge ends the exact recursion is replaced by its
# asymptotic form
EXACT_Q_LIMIT = 3000


def q_count(m, n):
    """Exact ``q(m, n)`` as an integer."""
    return _QCACHE.value(int(m), int(n))


def log_q_asymptotic(m, n):
    """Saddle-point approximation of ``ln q(m, n)`` for large ``m``."""
    n = min(n, m)
    if n <= m ** 0.25:
        return float(gammaln(m) - gammaln(n) - gammaln(m - n + 1) - gammaln(n + 1))
    u = n / math.sqrt(m)
    v = u
    for _ in range(500):
        nv = u * math.sqrt(spence(math.exp(-v)))
        if abs(nv - v) < 1e-12:
            v = nv
            break
        v = nv
    lf = (math.log(v) - 0.5 * math.log1p(-math.exp(-v) * (1 + u * u / 2))
          - 1.5 * LN2 - math.log(u) - math.log(math.pi))
    g = 2 * v / u - u * math.log1p(-math.exp(-v))
    return lf - math.log(m) + math.sqrt(m) * g


def log_q_count(m, n):
    """``ln q(m, n)``: exact below ``EXACT_Q_LIMIT`` edge ends, asymptotic above."""
    if m == 0:
        return 0.0
    if n == 0:
        return -math.inf
    if m <= EXACT_Q_LIMIT:
        return math.log(q_count(m, n))
    return log_q_asymptotic(m, n)


def _lf(x):
    return math.lgamma(x + 1)


def _lnbinom(n, k):
    return _lf(n) - _lf(k) - _lf(n - k)


def _lnms(n, m):
    if m == 0:
        return 0.0
    if n == 0:
        return -math.inf
    return math.lgamma(n + m) - math.lgamma(m + 1) - math.lgamma(n)


def log_prior_partition(b, N=None):
    """Log prior of a single-level partition with labels ``0..B-1``.

    Uniform over the number of groups, then over group sizes, then over
    labelings with those sizes.
    """
    b = np.asarray(b, dtype=np.int64)
    if N is None:
        N = len(b)
    if len(b) != N:
        raise ValueError("partition length differs from N")
    if N == 0:
        raise ValueError("empty partition")
    nr = np.bincount(b)
    if b.min() < 0 or np.any(nr == 0):
        raise ValueError("partition has empty groups")
    B = len(nr)
    return (sum(_lf(int(x)) for x in nr) - _lf(N) - _lnbinom(N - 1, B - 1) - math.log(N))


def log_prior_edge_count_flat(E, B, fixed_edges=None):
    """Geometric edge-count prior with mean ``E / (B (B + 1) / 2)``.

    With ``fixed_edges`` the mean is frozen at that value instead of
    following the current ``E``."""
    D = B * (B + 1) // 2
    lam = (E if fixed_edges is None else fixed_edges) / D
    if E == 0:
        return -D * math.log1p(lam)
    return E * math.log(lam) - (E + D) * math.log1p(lam)


def _group_edge_counts(pairs, labels):
    e = defaultdict(int)
    for (i, j), m in pairs:
        r, s = labels[i], labels[j]
        if r > s:
            r, s = s, r
        e[(r, s)] += m
    return e


def _resolve(state, partition, nested, fixed_edges):
    if isinstance(state, BlockState):
        return state.multigraph(), state.partition(), state.nested, state.fixed_edges
    return state, partition, nested, fixed_edges


def log_prior_edge_counts_nested(state, partition=None, fixed_edges=None):
    """Hierarchical edge-count prior, including partition priors above level 0.

    ``state`` is a :class:`BlockState`, or a :class:`LatentMultigraph`
    together with ``partition``.
    """
    G, part, _, fixed_edges = _resolve(state, partition, True, fixed_edges)
    E = G.edge_count
    pairs = [(p, m) for p, m in G.items()]
    labels = part.levels[0]
    L = part.depth
    total = 0.0
    # count matrix at each level, keyed by unordered group pairs; the
    # diagonal stores the number of internal edges
    e = _group_edge_counts(pairs, labels)
    for l in range(1, L):
        up = part.levels[l]
        nu = np.bincount(up, minlength=part.group_count(l))
        child = _group_edge_counts([((r, s), m) for (r, s), m in e.items()], up)
        # P(e^{l-1} | e^l)
        for (u, w), m in child.items():
            if u == w:
                total -= _lnms(int(nu[u]) * (int(nu[u]) + 1) // 2, m)
            else:
                total -= _lnms(int(nu[u]) * int(nu[w]), m)
        total += log_prior_partition(up, part.group_count(l - 1))
        e = child
    total += log_prior_edge_count_flat(E, part.group_count(L - 1), fixed_edges)
    return total


def log_marginal_multigraph_dcsbm(state, partition=None, nested=False, fixed_edges=None):
    """``ln P(G | b)`` for the degree-corrected SBM with edge-count and degree
    priors integrated out.

    ``state`` is a :class:`BlockState`, or a :class:`LatentMultigraph`
    together with ``partition``.  With ``nested`` the edge counts follow the
    hierarchical prior, otherwise the flat geometric prior (``partition``
    then needs a single level).
    """
    G, part, nested, fixed_edges = _resolve(state, partition, nested, fixed_edges)
    if not nested and part.depth != 1:
        raise ValueError("the flat model takes a single-level partition")
    N = G.node_count
    b = part.levels[0]
    B = part.group_count(0)
    if len(b) != N:
        raise ValueError("partition does not match the graph")
    items = G.items()
    k = G.degrees
    e = _group_edge_counts(items, b)
    er = np.zeros(B, dtype=np.int64)
    for (r, s), m in e.items():
        er[r] += m
        er[s] += m
    nr = np.bincount(b, minlength=B)
    total = 0.0
    # P(G | k, e, b)
    for (r, s), m in e.items():
        if r == s:
            total += m * LN2 + _lf(m)
        else:
            total += _lf(m)
    total += sum(_lf(int(x)) for x in k)
    for (i, j), m in items:
        if i == j:
            total -= m * LN2 + _lf(m)
        else:
            total -= _lf(m)
    total -= sum(_lf(int(x)) for x in er)
    # P(k | eta) P(eta | e, b)
    eta = defaultdict(int)
    for i in range(N):
        eta[(int(b[i]), int(k[i]))] += 1
    total += sum(_lf(c) for c in eta.values())
    for r in range(B):
        total -= _lf(int(nr[r])) + log_q_count(int(er[r]), int(nr[r]))
    # P(e | b)
    if nested:
        total += log_prior_edge_counts_nested(G, part, fixed_edges)
        total -= sum(log_prior_partition(part.levels[l], part.group_count(l - 1)) for l in range(1, part.depth))
    else:
        total += log_prior_edge_count_flat(G.edge_count, B, fixed_edges)
    return total


def log_prior_joint(state, partition=None, nested=False, fixed_edges=None):
    """``ln P(G, b)`` over labelled partitions at every level."""
    G, part, nested, fixed_edges = _resolve(state, partition, nested, fixed_edges)
    total = log_marginal_multigraph_dcsbm(G, part, nested, fixed_edges)
    total += log_prior_partition(part.levels[0], G.node_count)
    if nested:
        total += sum(log_prior_partition(part.levels[l], part.group_count(l - 1)) for l in range(1, part.depth))
    return total


def log_prior_er(A):
    """Uniform prior over the edge count, then over graphs with that count."""
    if isinstance(A, LatentMultigraph):
        A = collapse_multigraph(A)
    N = A.node_count
    P = N * (N - 1) // 2
    return -_lnbinom(P, A.edge_count) - math.log(P + 1)


@dataclass(frozen=True)
class NodeMove:
    """Move an element of ``level`` (a node for level 0, a level-``level - 1``
    group otherwise) into group ``target``; ``None`` opens a new group."""

    node: int
    target: int | None
    level: int = 0


@dataclass(frozen=True)
class EntryMove:
    """Change ``G_ij`` by ``delta`` (+1 or -1)."""

    i: int
    j: int
    delta: int


class BlockState(KernelState):
    """Latent multigraph with a (nested) partition and cached block counts.

    Parameters
    ----------
    G : LatentMultigraph
    partition : HierarchicalPartition, optional
        Defaults to a single group.
    nested : bool
        Hierarchical edge-count prior if true, flat geometric prior otherwise.
    depth : int, optional
        Number of hierarchy levels kept internally (levels with one group
        cost nothing).
    fixed_edges : int, optional
        Freeze the mean of the flat edge-count prior at this edge count.
    max_groups : int, optional
        Upper bound on the number of level-0 groups.

    Notes
    -----
    Labels exposed by :meth:`partition` and accepted by :class:`NodeMove`
    are compacted to ``0..B_l - 1``.
    """

    def __init__(self, G, partition=None, nested=False, depth=None, fixed_edges=None, max_groups=None,
                 multiplicity_cap=None):
        if partition is None:
            partition = HierarchicalPartition([np.zeros(G.node_count, dtype=np.int64)])
        self.fixed_edges = fixed_edges
        super().__init__(G, partition, nested, depth, fixed_edges, max_groups, multiplicity_cap)

    @property
    def group_counts(self):
        return [int(x) for x in self.P.nocc]

    def group_sizes(self, l=0):
        u = self.occupied(l)
        return self.P.nr[l, u].copy()

    def edge_counts(self, l=0):
        u = self.occupied(l)
        return self.P.ers[l][np.ix_(u, u)].copy()

    def degree_counts(self):
        """``eta[r, k]``: number of nodes of degree ``k`` in group ``r``."""
        return self.P.eta[self.occupied(0)].copy()

    def log_prior(self):
        """Cached ``ln P(G, b)`` over labelled partitions."""
        return float(self.fv[K.LP_]) - self.labelling_term()

    def _node_apply(self, move):
        lev = move.level
        L = int(self.iv[K.L_]) if self.nested else 1
        if lev < 0 or lev >= max(1, L - 1):
            raise ValueError(f"level {lev} cannot be moved")
        self.ensure()
        P = self.P
        if lev == 0:
            if not 0 <= move.node < self.node_count:
                raise ValueError("node out of range")
            v = move.node
        else:
            v = self.kernel_label(lev - 1, move.node)
        r = int(P.b0[v]) if lev == 0 else int(P.bu[lev, v])
        if move.target is None:
            if P.nr[lev, r] == 1:
                return None
            s = int(P.free[lev, P.nfree[lev] - 1])
        else:
            s = self.kernel_label(lev, move.target)
        if s == r:
            return None
        m, wself, ktot = K.gather(self.Gr, P, self.iv, lev, v)
        dp, lpf, lpr, r = K.node_eval(self.Gr, P, self.iv, self.fv, lev, v, s, m, wself, ktot)
        if dp == -math.inf:
            raise ValueError("emptying a group into one with a different parent is not supported")
        return dp, (lev, v, r, s, m, wself, ktot), lpf, lpr

    def _node_undo(self, info):
        lev, v, r, s, m, wself, ktot = info
        K.apply_node(self.Gr, self.P, self.iv, lev, v, s, r, m, wself, ktot)

    def _entry_apply(self, move):
        i, j = sorted((int(move.i), int(move.j)))
        if move.delta not in (1, -1):
            raise ValueError("entry moves change a multiplicity by one")
        if not (0 <= i and j < self.node_count):
            raise ValueError("pair out of range")
        gij = int(K.g_get(self.Gr, i, j))
        if gij + move.delta < 0:
            raise ValueError("multiplicity would become negative")
        self.ensure()
        dp, dl = K.entry_eval(self.Gr, self.P, self.M, self.iv, self.fv, i, j, move.delta, self.ekg, self.ekk)
        return dp, dl, (i, j, gij, move.delta)

    def _entry_undo(self, info):
        i, j, _, delta = info
        K.apply_entry(self.Gr, self.P, self.iv, i, j, -delta)

    def apply(self, move):
        """Apply a move and return the change in :meth:`log_prior`."""
        B_before = self.labelling_term()
        if isinstance(move, NodeMove):
            out = self._node_apply(move)
            if out is None:
                return 0.0
            dp = out[0]
        elif isinstance(move, EntryMove):
            dp, _, _ = self._entry_apply(move)
        else:
            raise TypeError("unknown move")
        self.fv[K.LP_] += dp
        return dp - (self.labelling_term() - B_before)


def delta_log_prior(state, move):
    """Change in ``ln P(G, b)`` caused by ``move``, leaving ``state`` untouched."""
    B_before = state.labelling_term()
    if isinstance(move, NodeMove):
        out = state._node_apply(move)
        if out is None:
            return 0.0
        dp, info, _, _ = out
        B_after = state.labelling_term()
        state._node_undo(info)
    elif isinstance(move, EntryMove):
        dp, _, info = state._entry_apply(move)
        B_after = B_before
        state._entry_undo(info)
    else:
        raise TypeError("unknown move")
    return dp - (B_after - B_before)


def spectral_partition(A, B, rng=None):
    """Node labels from k-means on the leading eigenvectors of the
    degree-regularized normalized adjacency of ``A``.

    A cheap starting point for the sampler; labels are compacted so that
    every group is occupied."""
    from scipy.cluster.vq import kmeans2
    from scipy.sparse.linalg import eigsh

    if isinstance(A, LatentMultigraph):
        A = collapse_multigraph(A)
    N = A.node_count
    if B <= 1 or N <= B:
        return np.zeros(N, dtype=np.int64) if B <= 1 else np.arange(N, dtype=np.int64)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    e = A.edge_array()
    if len(e) == 0:
        return np.zeros(N, dtype=np.int64)
    r = np.concatenate([e[:, 0], e[:, 1]])
    c = np.concatenate([e[:, 1], e[:, 0]])
    M = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(N, N))
    k = np.asarray(M.sum(axis=1)).ravel()
    d = 1.0 / np.sqrt(k + k.mean())
    L = sp.diags(d) @ M @ sp.diags(d)
    v0 = rng.standard_normal(N)
    _, vec = eigsh(L, k=min(B, N - 2), which="LA", v0=v0)
    vec /= np.maximum(np.linalg.norm(vec, axis=1, keepdims=True), 1e-12)
    _, lab = kmeans2(vec, B, minit="++", seed=rng)
    return compact_labels(lab)
