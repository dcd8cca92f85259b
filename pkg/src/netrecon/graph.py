"""Core network types: latent multigraphs, simple graphs, measurements and
nested partitions, plus the Hamming distance and similarity between graphs."""

from dataclasses import dataclass, field

import numpy as np


def canonical(i, j):
    i = int(i)
    j = int(j)
    return (i, j) if i <= j else (j, i)


class LatentMultigraph:
    """Undirected multigraph with self-loops.

    Parameters
    ----------
    node_count : int
    multiplicities : mapping, optional
        ``{(i, j): G_ij}``; pairs are canonicalised, zero entries dropped.

    Notes
    -----
    Degrees count self-loops twice, ``k_i = sum_j G_ij + G_ii``.
    """

    def __init__(self, node_count, multiplicities=None):
        if node_count < 1:
            raise ValueError("node_count must be positive")
        self.node_count = int(node_count)
        self._m = {}
        self._deg = np.zeros(self.node_count, dtype=np.int64)
        for (i, j), m in (multiplicities or {}).items():
            self.add(i, j, m)

    def _check(self, i, j):
        if not (0 <= i < self.node_count and 0 <= j < self.node_count):
            raise IndexError(f"pair ({i}, {j}) out of range")

    def get(self, i, j):
        return self._m.get(canonical(i, j), 0)

    def add(self, i, j, delta=1):
        """Change ``G_ij`` by ``delta``; the result must stay nonnegative."""
        self._check(i, j)
        key = canonical(i, j)
        m = self._m.get(key, 0) + int(delta)
        if m < 0:
            raise ValueError(f"multiplicity of {key} would become negative")
        if m == 0:
            self._m.pop(key, None)
        else:
            self._m[key] = m
        a, b = key
        if a == b:
            self._deg[a] += 2 * delta
        else:
            self._deg[a] += delta
            self._deg[b] += delta

    def set(self, i, j, m):
        self.add(i, j, int(m) - self.get(i, j))

    @property
    def degrees(self):
        return self._deg.copy()

    @property
    def edge_count(self):
        return int(sum(self._m.values()))

    def items(self):
        return sorted(self._m.items())

    def copy(self):
        return LatentMultigraph(self.node_count, dict(self._m))

    def __eq__(self, other):
        return (isinstance(other, LatentMultigraph) and self.node_count == other.node_count
                and self._m == other._m)

    def __repr__(self):
        return f"LatentMultigraph(N={self.node_count}, E={self.edge_count})"

    @classmethod
    def from_adjacency(cls, A):
        return cls(A.node_count, {e: 1 for e in A.edges})


@dataclass(frozen=True)
class AdjacencyView:
    """Simple undirected graph: a set of distinct unordered pairs."""

    node_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        clean = set()
        for i, j in self.edges:
            i, j = canonical(i, j)
            if i == j:
                raise ValueError("self-pairs are not allowed in a simple graph")
            if not (0 <= i and j < self.node_count):
                raise IndexError(f"pair ({i}, {j}) out of range")
            clean.add((i, j))
        object.__setattr__(self, "edges", frozenset(clean))

    @classmethod
    def from_edges(cls, node_count, edges):
        return cls(node_count, frozenset(canonical(i, j) for i, j in edges))

    @classmethod
    def from_keys(cls, node_count, keys):
        """Build from integer keys ``i * N + j``."""
        keys = np.asarray(keys, dtype=np.int64)
        return cls(node_count, frozenset(zip((keys // node_count).tolist(), (keys % node_count).tolist())))

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M)
        i, j = np.nonzero(np.triu(M, 1))
        return cls(M.shape[0], frozenset(zip(i.tolist(), j.tolist())))

    @property
    def edge_count(self):
        return len(self.edges)

    def has_edge(self, i, j):
        return canonical(i, j) in self.edges

    def keys(self):
        """Sorted integer keys ``i * N + j`` with ``i < j``."""
        N = self.node_count
        return np.array(sorted(i * N + j for i, j in self.edges), dtype=np.int64)

    def edge_array(self):
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.edges), dtype=np.int64)

    def to_dense(self):
        M = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        for i, j in self.edges:
            M[i, j] = M[j, i] = 1
        return M

    def degrees(self):
        k = np.zeros(self.node_count, dtype=np.int64)
        for i, j in self.edges:
            k[i] += 1
            k[j] += 1
        return k


@dataclass
class MeasurementData:
    """Per-pair measurement counts.

    ``overrides`` maps a canonical pair ``(i, j)``, ``i < j``, to ``(n_ij, x_ij)``.
    Every other pair was measured ``default_n`` times with no positive outcome.
    """

    node_count: int
    default_n: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        if self.default_n < 0:
            raise ValueError("default_n must be nonnegative")
        clean = {}
        for (i, j), (n, x) in self.overrides.items():
            i, j = canonical(i, j)
            if i == j:
                raise ValueError("measurements are defined for distinct pairs only")
            if not (0 <= i and j < self.node_count):
                raise IndexError(f"pair ({i}, {j}) out of range")
            n = int(n)
            x = int(x)
            if n < 0 or x < 0:
                raise ValueError("counts must be nonnegative")
            if x > n:
                raise ValueError(f"x exceeds n for pair ({i}, {j})")
            clean[(i, j)] = (n, x)
        self.overrides = clean

    @property
    def pair_count(self):
        N = self.node_count
        return N * (N - 1) // 2

    def get(self, i, j):
        return self.overrides.get(canonical(i, j), (self.default_n, 0))

    def arrays(self):
        """Sorted keys and the matching ``n`` and ``x`` arrays for the overrides."""
        N = self.node_count
        items = sorted(self.overrides.items())
        keys = np.array([i * N + j for (i, j), _ in items], dtype=np.int64)
        n = np.array([v[0] for _, v in items], dtype=np.int64)
        x = np.array([v[1] for _, v in items], dtype=np.int64)
        return keys, n, x

    def positive_pairs(self):
        return AdjacencyView(self.node_count, frozenset(p for p, (_, x) in self.overrides.items() if x > 0))


@dataclass
class HierarchicalPartition:
    """Nested partitions.

    ``levels[0]`` labels the nodes, ``levels[l]`` labels the groups of level
    ``l - 1``.  Labels at each level are ``0..B_l - 1``, all occupied.  With
    more than one level the last level has a single group; a single level
    is a flat partition.
    """

    levels: list

    def __post_init__(self):
        if not self.levels:
            raise ValueError("a hierarchy needs at least one level")
        self.levels = [np.asarray(b, dtype=np.int64) for b in self.levels]
        for l, b in enumerate(self.levels):
            if l > 0 and len(b) != self.group_count(l - 1):
                raise ValueError(f"level {l} must label the {self.group_count(l - 1)} groups below it")
            if len(b) and (b.min() < 0 or len(np.unique(b)) != b.max() + 1):
                raise ValueError(f"labels at level {l} must be 0..B-1 and all occupied")
        if len(self.levels) > 1 and self.group_count(len(self.levels) - 1) != 1:
            raise ValueError("the top level must have exactly one group")

    @classmethod
    def flat(cls, b):
        """Single-level partition, as used by the flat model."""
        return cls([compact_labels(b)])

    @property
    def depth(self):
        return len(self.levels)

    @property
    def node_count(self):
        return len(self.levels[0])

    def group_count(self, l):
        b = self.levels[l]
        return int(b.max()) + 1 if len(b) else 0

    def group_sizes(self, l):
        return np.bincount(self.levels[l], minlength=self.group_count(l))

    def node_labels(self, l):
        """Level-``l`` group of every node."""
        b = self.levels[0]
        for k in range(1, l + 1):
            b = self.levels[k][b]
        return b


def compact_labels(b):
    """Relabel to ``0..B-1`` in order of first appearance."""
    b = np.asarray(b, dtype=np.int64)
    _, first, inv = np.unique(b, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv].astype(np.int64)


def collapse_multigraph(G):
    """Simple graph with ``A_ij = 1`` iff ``G_ij > 0`` and ``i != j``."""
    return AdjacencyView(G.node_count, frozenset(p for p, m in G.items() if p[0] != p[1] and m > 0))


def _edge_set(A):
    if isinstance(A, AdjacencyView):
        return A.node_count, A.edges
    if isinstance(A, LatentMultigraph):
        return A.node_count, collapse_multigraph(A).edges
    raise TypeError(f"expected a graph, got {type(A).__name__}")


def hamming_distance(A, B):
    """Number of pairs on which two simple graphs disagree."""
    na, ea = _edge_set(A)
    nb, eb = _edge_set(B)
    if na != nb:
        raise ValueError(f"node counts differ ({na} != {nb})")
    return len(ea ^ eb)


def similarity(A, B):
    """``1 - d(A, B) / (E_A + E_B)``; two empty graphs count as identical."""
    na, ea = _edge_set(A)
    nb, eb = _edge_set(B)
    if na != nb:
        raise ValueError(f"node counts differ ({na} != {nb})")
    tot = len(ea) + len(eb)
    if tot == 0:
        return 1.0
    return 1.0 - len(ea ^ eb) / tot
