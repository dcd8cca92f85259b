"""Allocation, growth and extraction of the array state used by the kernels."""

import math
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .graph import HierarchicalPartition, LatentMultigraph


@lru_cache(maxsize=1)
def log_q_table():
    return K.q_table(K.QMAX)


def default_depth(N):
    return int(min(16, max(2, 1 + math.ceil(math.log2(max(N, 2))))))


def empty_meas():
    z = np.zeros(0, dtype=np.int64)
    return K.Meas(z, z.copy(), z.copy(), z.copy(), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64),
                  np.zeros((1, 2), dtype=np.int64), z.copy(), np.zeros(0), np.zeros(0))


def _pow2(x):
    return 1 << max(2, int(x - 1).bit_length())


def build_graph(G):
    N = G.node_count
    nbrs = [[] for _ in range(N)]
    loops = np.zeros(N, dtype=np.int64)
    for (i, j), m in G.items():
        if i == j:
            loops[i] = m
        else:
            nbrs[i].append((j, m))
            nbrs[j].append((i, m))
    cap = np.array([_pow2(2 * len(x) + 1) for x in nbrs], dtype=np.int64)
    start = np.zeros(N, dtype=np.int64)
    start[1:] = np.cumsum(cap)[:-1]
    top = int(cap.sum())
    size = 2 * top + 16 * int(cap.max()) + 1024
    nbr = np.zeros(size, dtype=np.int64)
    mul = np.zeros(size, dtype=np.int64)
    rev = np.zeros(size, dtype=np.int64)
    length = np.array([len(x) for x in nbrs], dtype=np.int64)
    where = {}
    for i in range(N):
        for x, (j, m) in enumerate(nbrs[i]):
            p = start[i] + x
            nbr[p] = j
            mul[p] = m
            where[(i, j)] = p
    for (i, j), p in where.items():
        rev[p] = where[(j, i)]
    Gr = K.Graph(start, cap, length, nbr, mul, rev, loops, G.degrees.astype(np.int64))
    return Gr, top, int(cap.max())


def alloc_blocks(N, L, C, Kdeg):
    return K.Blocks(
        b0=np.zeros(N, dtype=np.int64),
        bu=np.zeros((L, C), dtype=np.int64),
        ers=np.zeros((L, C, C), dtype=np.int64),
        er=np.zeros((L, C), dtype=np.int64),
        nr=np.zeros((L, C), dtype=np.int64),
        nocc=np.zeros(L, dtype=np.int64),
        occ=np.zeros((L, C), dtype=np.int64),
        occ_pos=np.zeros((L, C), dtype=np.int64),
        free=np.zeros((L, C), dtype=np.int64),
        nfree=np.zeros(L, dtype=np.int64),
        eta=np.zeros((C, Kdeg), dtype=np.int64),
        perm=np.zeros(N, dtype=np.int64),
        pos=np.zeros(N, dtype=np.int64),
        seg=np.zeros(C + 1, dtype=np.int64),
        fen=np.zeros(N + 1, dtype=np.int64),
        lq=log_q_table(),
        sh=np.zeros(N + C, dtype=np.int64),
        sw=np.zeros(N + C, dtype=np.int64),
        st=np.zeros(N + C, dtype=np.int64),
        ca=np.zeros(L, dtype=np.int64),
        cb=np.zeros(L, dtype=np.int64),
    )


class KernelState:
    """Owns the arrays of one latent multigraph plus its block structure."""

    def __init__(self, G, partition, nested, depth=None, fixed_edges=None, max_groups=None,
                 multiplicity_cap=None):
        N = G.node_count
        self.nested = bool(nested)
        if self.nested:
            L = max(depth or default_depth(N), partition.depth)
        else:
            if partition.depth != 1:
                raise ValueError("the flat model takes a single-level partition")
            L = 1
        Gr, top, maxcap = build_graph(G)
        deg = Gr.deg
        maxdeg = int(deg.max()) if N else 0
        bmax_all = max(partition.group_count(l) for l in range(partition.depth))
        C = min(N + 1, max(16, _pow2(2 * bmax_all + 1)))
        if max_groups:
            C = min(N + 1, max(C, int(max_groups) + 2))
        P = alloc_blocks(N, L, C, maxdeg + 8)
        P.b0[:] = partition.levels[0]
        for l in range(1, L):
            if l < partition.depth:
                P.bu[l, :len(partition.levels[l])] = partition.levels[l]
            else:
                P.bu[l, :] = 0
        self.Gr = Gr
        self.P = P
        self.M = empty_meas()
        self.iv = np.zeros(K.NIV, dtype=np.int64)
        self.fv = np.zeros(K.NFV)
        iv = self.iv
        iv[K.N_] = N
        iv[K.L_] = L
        iv[K.C_] = C
        iv[K.K_] = P.eta.shape[1]
        iv[K.E_] = G.edge_count
        iv[K.TOP_] = top
        iv[K.MAXCAP_] = maxcap
        iv[K.MAXDEG_] = maxdeg
        iv[K.NESTED_] = 1 if self.nested else 0
        iv[K.BMAX_] = int(max_groups) if max_groups else 0
        iv[K.MCAP_] = -1 if multiplicity_cap is None else int(multiplicity_cap)
        iv[K.EFIX_] = -1 if fixed_edges is None else int(fixed_edges)
        self.fv[K.D_] = 0.01
        self.fv[K.EPS_] = 1.0
        self.acc = np.zeros(K.NACC, dtype=np.int64)
        self.ekg = np.zeros(8, dtype=np.int64)
        self.ekk = np.zeros(8, dtype=np.int64)
        K.rebuild_blocks(self.Gr, self.P, self.iv)
        self.fv[K.LP_] = K.logprior_full(self.Gr, self.P, self.iv)

    # -- growth ----------------------------------------------------------

    def ensure(self):
        while True:
            st = K.needs_growth(self.P, self.Gr, self.iv)
            if st == K.OK:
                return
            self.grow(st)

    def grow(self, status):
        if status == K.GROW_POOL:
            if 2 * int(self.Gr.cap.sum()) < int(self.iv[K.TOP_]):
                self._compact_pool()
                return
            n = self.Gr.nbr.shape[0]
            new = max(2 * n, n + 8 * int(self.iv[K.MAXCAP_]) + 1024)
            fields = {}
            for name in ("nbr", "mul", "rev"):
                a = np.zeros(new, dtype=np.int64)
                a[:n] = getattr(self.Gr, name)
                fields[name] = a
            self.Gr = self.Gr._replace(**fields)
        elif status == K.GROW_ETA:
            C, Kd = self.P.eta.shape
            eta = np.zeros((C, max(2 * Kd, int(self.iv[K.MAXDEG_]) + 8)), dtype=np.int64)
            eta[:, :Kd] = self.P.eta
            self.P = self.P._replace(eta=eta)
            self.iv[K.K_] = eta.shape[1]
        elif status == K.GROW_LABELS:
            self._grow_labels()
        else:
            raise RuntimeError(f"unknown growth request {status}")

    def _compact_pool(self):
        G = self.multigraph()
        Gr, top, maxcap = build_graph(G)
        self.Gr = Gr
        self.iv[K.TOP_] = top
        self.iv[K.MAXCAP_] = maxcap

    def _grow_labels(self):
        P = self.P
        N = self.iv[K.N_]
        L, C = P.bu.shape
        C2 = min(N + 1, 2 * C)
        if C2 <= C:
            raise RuntimeError("label space exhausted")
        Q = alloc_blocks(N, L, C2, P.eta.shape[1])
        Q.b0[:] = P.b0
        Q.bu[:, :C] = P.bu
        self.P = Q
        self.iv[K.C_] = C2
        K.rebuild_blocks(self.Gr, self.P, self.iv)

    def step_counts(self, entry_ratio=1.0):
        """Move counts per sweep sized from the current state: one node move
        per element at each movable level and ``entry_ratio * max(E, N)``
        entry updates."""
        N = self.node_count
        L = int(self.iv[K.L_]) if self.nested else 1
        node = np.zeros(max(1, L - 1), dtype=np.int64)
        node[0] = N
        for l in range(1, len(node)):
            node[l] = max(1, int(self.P.nocc[l - 1]))
        return node, int(entry_ratio * max(self.edge_count, N))

    def sweeps(self, rng, count, node_steps, entry_steps):
        """Run ``count`` sweeps, growing arrays whenever the kernel asks."""
        phase = index = done = 0
        node_steps = np.asarray(node_steps, dtype=np.int64)
        while True:
            st, done, phase, index = K.run_sweeps(
                self.Gr, self.P, self.M, self.iv, self.fv, rng, self.acc, count, node_steps, int(entry_steps),
                phase, index, done, self.ekg, self.ekk)
            if st == K.OK:
                return
            self.grow(st)

    # -- extraction ------------------------------------------------------

    @property
    def node_count(self):
        return int(self.iv[K.N_])

    @property
    def edge_count(self):
        return int(self.iv[K.E_])

    def multigraph(self):
        ent = K.multi_entries(self.Gr, self.iv)
        return LatentMultigraph(self.node_count, {(int(i), int(j)): int(m) for i, j, m in ent})

    def edge_keys(self):
        return K.edge_keys(self.Gr, self.iv)

    def occupied(self, l):
        return np.sort(self.P.occ[l, :self.P.nocc[l]])

    def partition(self):
        """Current partition with labels compacted in increasing kernel-label order.

        For the nested model the hierarchy is cut at the first level with a
        single group."""
        b0 = self.P.b0
        u = self.occupied(0)
        levels = [np.searchsorted(u, b0).astype(np.int64)]
        if not self.nested:
            return HierarchicalPartition(levels)
        L = int(self.iv[K.L_])
        prev = u
        for l in range(1, L):
            if len(prev) == 1:
                break
            cur = self.occupied(l)
            levels.append(np.searchsorted(cur, self.P.bu[l, prev]).astype(np.int64))
            prev = cur
        return HierarchicalPartition(levels)

    def kernel_label(self, l, label):
        return int(self.occupied(l)[label])

    def compact_label(self, l, klabel):
        return int(np.searchsorted(self.occupied(l), klabel))

    def labelling_term(self):
        L = int(self.iv[K.L_]) if self.nested else 1
        return sum(math.lgamma(int(self.P.nocc[l]) + 1) for l in range(L))

    def log_prior_full(self):
        return float(K.logprior_full(self.Gr, self.P, self.iv))

    def check(self):
        """Compare cached block counts with a rebuild; raises on mismatch."""
        P = self.P
        Q = P._replace(**{f: np.array(getattr(P, f)) for f in P._fields if f != "lq"})
        K.rebuild_blocks(self.Gr, Q, self.iv)
        for f in ("ers", "er", "nr", "eta"):
            if not np.array_equal(getattr(P, f), getattr(Q, f)):
                raise AssertionError(f"cached {f} is inconsistent")
        for l in range(P.nocc.shape[0]):
            if set(P.occ[l, :P.nocc[l]].tolist()) != set(Q.occ[l, :Q.nocc[l]].tolist()):
                raise AssertionError(f"occupied labels at level {l} are inconsistent")
        N = self.node_count
        w = self.Gr.deg[P.perm] + 1
        if not all(K.fen_prefix(P.fen, p + 1) - K.fen_prefix(P.fen, p) == w[p] for p in range(N)):
            raise AssertionError("node weights are inconsistent")
        for r in self.occupied(0):
            members = P.perm[P.seg[r]:P.seg[r + 1]]
            if not np.all(P.b0[members] == r) or len(members) != P.nr[0, r]:
                raise AssertionError(f"segment of group {r} is inconsistent")
        deg = np.zeros(N, dtype=np.int64)
        for i, j, m in K.multi_entries(self.Gr, self.iv):
            deg[i] += m
            deg[j] += m
        if not np.array_equal(deg, self.Gr.deg):
            raise AssertionError("cached degrees are inconsistent")
