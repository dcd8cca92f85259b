"""Compiled sampler kernels.

All chain state lives in plain numpy arrays grouped into three named tuples
(``Graph``, ``Blocks``, ``Meas``) plus two scalar vectors ``iv`` (int64) and
``fv`` (float64).  The Python layer in :mod:`netrecon.mcmc` owns allocation
and growth; the functions here only mutate arrays in place.

Conventions
-----------
* ``ers[l, r, s]`` counts edge ends between level-``l`` groups, with the
  diagonal holding twice the number of internal edges.
* ``nr[l, r]`` is the number of occupied level ``l-1`` elements (nodes for
  ``l = 0``) in group ``r``.
* ``bu[l, g]`` (``l >= 1``) is the level-``l`` group of level-``l-1`` group ``g``.
* Level-0 nodes are kept in a permutation where each group occupies a
  contiguous segment; a Fenwick tree over that permutation holds ``k_i + 1``
  to draw nodes inside a group in ``O(log N)``.
"""

import math
from collections import namedtuple

import numpy as np
from numba import njit

Graph = namedtuple("Graph", ["start", "cap", "length", "nbr", "mul", "rev", "loops", "deg"])
Blocks = namedtuple(
    "Blocks",
    ["b0", "bu", "ers", "er", "nr", "nocc", "occ", "occ_pos", "free", "nfree",
     "eta", "perm", "pos", "seg", "fen", "lq", "sh", "sw", "st", "ca", "cb"],
)
Meas = namedtuple(
    "Meas", ["keys", "ov_n", "ov_x", "ov_cls", "cls_n", "cls_x", "cls_cnt", "q_keys", "q_t1", "q_t0"]
)

# iv slots
N_ = 0
L_ = 1
C_ = 2
K_ = 3
E_ = 4
TOP_ = 5
MAXCAP_ = 6
MAXDEG_ = 7
NESTED_ = 8
BMAX_ = 9
MCAP_ = 10
MODE_ = 11
DEFN_ = 12
DEFCLS_ = 13
ECAL_ = 14
TCAL_ = 15
MCAL_ = 16
XCAL_ = 17
EFIX_ = 18
NCLS_ = 19
NIV = 20

# fv slots
ALPHA_ = 0
BETA_ = 1
MU_ = 2
NU_ = 3
D_ = 4
EPS_ = 5
LP_ = 6
LL_ = 7
BINC_ = 8
T1D_ = 9
T0D_ = 10
HSTEP_ = 11
HLO_ = 12
HHI_ = 13
NFV = 14

MODE_NONE = 0
MODE_UNIFORM = 1
MODE_HETERO = 2
MODE_EXTRINSIC = 3

# status codes returned by sweep functions
OK = 0
GROW_LABELS = 1
GROW_POOL = 2
GROW_ETA = 3

# acceptance counters
NODE_TRY = 0
NODE_ACC = 1
ENTRY_TRY = 2
ENTRY_ACC = 3
HYPER_TRY = 4
HYPER_ACC = 5
NODE_NULL = 6
NACC = 7

LN2 = math.log(2.0)
NEG_INF = -np.inf

QMAX = 1024


# ---------------------------------------------------------------------------
# special functions


@njit(cache=True)
def lgam(x):
    return math.lgamma(x)


@njit(cache=True)
def lnbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def lnbinom(n, k):
    if k < 0 or k > n:
        return NEG_INF
    return math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)


@njit(cache=True)
def lnms(n, m):
    """log of the multiset coefficient ((n, m)) = C(n + m - 1, m)."""
    if m == 0:
        return 0.0
    if n == 0:
        return NEG_INF
    return math.lgamma(n + m) - math.lgamma(m + 1.0) - math.lgamma(n)


@njit(cache=True)
def _li2_series(x):
    s = 0.0
    t = x
    k = 1
    while True:
        term = t / (k * k)
        s += term
        if term < 1e-17 * s:
            break
        k += 1
        t *= x
    return s


@njit(cache=True)
def dilog(x):
    """Li2(x) for 0 <= x <= 1."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return math.pi * math.pi / 6.0
    if x > 0.5:
        return math.pi * math.pi / 6.0 - math.log(x) * math.log(1.0 - x) - _li2_series(1.0 - x)
    return _li2_series(x)


@njit(cache=True)
def log_q_approx(m, n):
    """Asymptotic log q(m, n) for large m (Szekeres' saddle point)."""
    if n <= m ** 0.25:
        return (math.lgamma(m) - math.lgamma(n) - math.lgamma(m - n + 1.0)) - math.lgamma(n + 1.0)
    u = n / math.sqrt(m)
    v = u
    for _ in range(500):
        nv = u * math.sqrt(dilog(1.0 - math.exp(-v)))
        if abs(nv - v) < 1e-12:
            v = nv
            break
        v = nv
    lf = (math.log(v) - 0.5 * math.log1p(-math.exp(-v) * (1.0 + u * u / 2.0))
          - 1.5 * LN2 - math.log(u) - math.log(math.pi))
    g = 2.0 * v / u - u * math.log1p(-math.exp(-v))
    return lf - math.log(m) + math.sqrt(m) * g


@njit(cache=True)
def q_table(qmax):
    q = np.zeros((qmax + 1, qmax + 1))
    q[0, :] = 1.0
    for n in range(1, qmax + 1):
        for m in range(1, qmax + 1):
            v = q[m, n - 1]
            if m >= n:
                v += q[m - n, n]
            q[m, n] = v
    out = np.empty_like(q)
    for m in range(qmax + 1):
        for n in range(qmax + 1):
            out[m, n] = math.log(q[m, n]) if q[m, n] > 0 else NEG_INF
    return out


@njit(cache=True)
def log_q(lq, m, n):
    if n > m:
        n = m
    if m < lq.shape[0]:
        return lq[m, n]
    if n == 0:
        return NEG_INF
    return log_q_approx(m, n)


# ---------------------------------------------------------------------------
# Fenwick tree over node positions


@njit(cache=True)
def fen_add(fen, i, delta):
    i += 1
    n = fen.shape[0] - 1
    while i <= n:
        fen[i] += delta
        i += i & (-i)


@njit(cache=True)
def fen_prefix(fen, i):
    s = 0
    while i > 0:
        s += fen[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def fen_find(fen, target):
    n = fen.shape[0] - 1
    pos = 0
    rem = target
    step = 1
    while step * 2 <= n:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= n and fen[nxt] <= rem:
            pos = nxt
            rem -= fen[nxt]
        step //= 2
    return pos


@njit(cache=True)
def swap_positions(P, deg, p, q):
    if p == q:
        return
    u = P.perm[p]
    w = P.perm[q]
    wu = deg[u] + 1
    ww = deg[w] + 1
    P.perm[p] = w
    P.perm[q] = u
    P.pos[w] = p
    P.pos[u] = q
    fen_add(P.fen, p, ww - wu)
    fen_add(P.fen, q, wu - ww)


@njit(cache=True)
def seg_move(P, deg, v, r, s):
    if r < s:
        for l in range(r, s):
            last = P.seg[l + 1] - 1
            swap_positions(P, deg, P.pos[v], last)
            P.seg[l + 1] -= 1
    elif r > s:
        for l in range(r, s, -1):
            first = P.seg[l]
            swap_positions(P, deg, P.pos[v], first)
            P.seg[l] += 1


@njit(cache=True)
def sample_in_group(P, r, rng):
    lo = P.seg[r]
    hi = P.seg[r + 1]
    base = fen_prefix(P.fen, lo)
    tot = fen_prefix(P.fen, hi) - base
    u = rng.integers(0, tot)
    p = fen_find(P.fen, base + u)
    return P.perm[p]


# ---------------------------------------------------------------------------
# latent multigraph storage


@njit(cache=True)
def g_find(Gr, i, j):
    """Position of the (i, j) entry inside i's slab, or -1."""
    if Gr.length[i] <= Gr.length[j]:
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            if Gr.nbr[p] == j:
                return p
        return -1
    a = Gr.start[j]
    for p in range(a, a + Gr.length[j]):
        if Gr.nbr[p] == i:
            return Gr.rev[p]
    return -1


@njit(cache=True)
def g_get(Gr, i, j):
    if i == j:
        return Gr.loops[i]
    p = g_find(Gr, i, j)
    if p < 0:
        return 0
    return Gr.mul[p]


@njit(cache=True)
def slab_relocate(Gr, iv, i):
    newcap = max(4, 2 * Gr.cap[i])
    top = iv[TOP_]
    a = Gr.start[i]
    for x in range(Gr.length[i]):
        p = a + x
        q = top + x
        Gr.nbr[q] = Gr.nbr[p]
        Gr.mul[q] = Gr.mul[p]
        o = Gr.rev[p]
        Gr.rev[q] = o
        Gr.rev[o] = q
    Gr.start[i] = top
    Gr.cap[i] = newcap
    iv[TOP_] = top + newcap
    if newcap > iv[MAXCAP_]:
        iv[MAXCAP_] = newcap


@njit(cache=True)
def slab_append(Gr, iv, i, j, m):
    if Gr.length[i] == Gr.cap[i]:
        slab_relocate(Gr, iv, i)
    p = Gr.start[i] + Gr.length[i]
    Gr.nbr[p] = j
    Gr.mul[p] = m
    Gr.length[i] += 1
    return p


@njit(cache=True)
def slab_remove(Gr, i, p):
    last = Gr.start[i] + Gr.length[i] - 1
    if p != last:
        Gr.nbr[p] = Gr.nbr[last]
        Gr.mul[p] = Gr.mul[last]
        o = Gr.rev[last]
        Gr.rev[p] = o
        Gr.rev[o] = p
    Gr.length[i] -= 1


@njit(cache=True)
def g_change(Gr, iv, i, j, delta):
    if i == j:
        Gr.loops[i] += delta
        Gr.deg[i] += 2 * delta
    else:
        p = g_find(Gr, i, j)
        if p >= 0:
            q = Gr.rev[p]
            m = Gr.mul[p] + delta
            if m > 0:
                Gr.mul[p] = m
                Gr.mul[q] = m
            else:
                slab_remove(Gr, i, p)
                slab_remove(Gr, j, q)
        else:
            p = slab_append(Gr, iv, i, j, delta)
            q = slab_append(Gr, iv, j, i, delta)
            Gr.rev[p] = q
            Gr.rev[q] = p
        Gr.deg[i] += delta
        Gr.deg[j] += delta
    iv[E_] += delta
    if Gr.deg[i] > iv[MAXDEG_]:
        iv[MAXDEG_] = Gr.deg[i]
    if Gr.deg[j] > iv[MAXDEG_]:
        iv[MAXDEG_] = Gr.deg[j]


# ---------------------------------------------------------------------------
# label bookkeeping


@njit(cache=True)
def occ_add(P, l, r):
    k = P.nocc[l]
    P.occ[l, k] = r
    P.occ_pos[l, r] = k
    P.nocc[l] = k + 1


@njit(cache=True)
def occ_remove(P, l, r):
    k = P.occ_pos[l, r]
    last = P.nocc[l] - 1
    w = P.occ[l, last]
    P.occ[l, k] = w
    P.occ_pos[l, w] = k
    P.nocc[l] = last


@njit(cache=True)
def take_label(P, l, r):
    """Remove a specific label from the free stack of level l."""
    nf = P.nfree[l]
    if P.free[l, nf - 1] != r:
        for x in range(nf):
            if P.free[l, x] == r:
                P.free[l, x] = P.free[l, nf - 1]
                P.free[l, nf - 1] = r
                break
    P.nfree[l] = nf - 1


# ---------------------------------------------------------------------------
# measurement lookups


@njit(cache=True)
def pair_index(keys, key):
    k = np.searchsorted(keys, key)
    if k < keys.shape[0] and keys[k] == key:
        return k
    return -1


@njit(cache=True)
def ll_uniform(iv, fv, E, T):
    a = fv[ALPHA_]
    b = fv[BETA_]
    mu = fv[MU_]
    nu = fv[NU_]
    M = iv[MCAL_]
    X = iv[XCAL_]
    return (lnbeta(E - T + a, T + b) - lnbeta(a, b)
            + lnbeta(X - T + mu, M - X - E + T + nu) - lnbeta(mu, nu))


@njit(cache=True)
def hetero_term(n, x, A, a, b, mu, nu):
    if A == 1:
        return lnbeta(n - x + a, x + b) - lnbeta(a, b)
    return lnbeta(x + mu, n - x + nu) - lnbeta(mu, nu)


@njit(cache=True)
def ll_hetero(M, iv, a, b, mu, nu):
    s = 0.0
    for c in range(iv[NCLS_]):
        n = M.cls_n[c]
        x = M.cls_x[c]
        c1 = M.cls_cnt[c, 1]
        c0 = M.cls_cnt[c, 0]
        if c1 > 0:
            s += c1 * hetero_term(n, x, 1, a, b, mu, nu)
        if c0 > 0:
            s += c0 * hetero_term(n, x, 0, a, b, mu, nu)
    return s


@njit(cache=True)
def lik_flip_delta(M, iv, fv, i, j, up):
    """Change in log-likelihood when A_ij flips (up: 0 -> 1)."""
    mode = iv[MODE_]
    if mode == MODE_NONE:
        return 0.0
    N = iv[N_]
    key = i * N + j
    sg = 1 if up else -1
    if mode == MODE_UNIFORM:
        k = pair_index(M.keys, key)
        if k >= 0:
            n = M.ov_n[k]
            x = M.ov_x[k]
        else:
            n = iv[DEFN_]
            x = 0
        if n == 0:
            return 0.0
        E0 = iv[ECAL_]
        T0 = iv[TCAL_]
        return ll_uniform(iv, fv, E0 + sg * n, T0 + sg * x) - ll_uniform(iv, fv, E0, T0)
    if mode == MODE_HETERO:
        k = pair_index(M.keys, key)
        c = M.ov_cls[k] if k >= 0 else iv[DEFCLS_]
        n = M.cls_n[c]
        x = M.cls_x[c]
        a = fv[ALPHA_]
        b = fv[BETA_]
        mu = fv[MU_]
        nu = fv[NU_]
        d = hetero_term(n, x, 1, a, b, mu, nu) - hetero_term(n, x, 0, a, b, mu, nu)
        return d if up else -d
    k = pair_index(M.q_keys, key)
    if k >= 0:
        t1 = M.q_t1[k]
        t0 = M.q_t0[k]
    else:
        t1 = fv[T1D_]
        t0 = fv[T0D_]
    if up:
        return t1 - t0
    return t0 - t1


@njit(cache=True)
def lik_flip_commit(M, iv, i, j, up):
    mode = iv[MODE_]
    if mode == MODE_UNIFORM:
        N = iv[N_]
        k = pair_index(M.keys, i * N + j)
        if k >= 0:
            n = M.ov_n[k]
            x = M.ov_x[k]
        else:
            n = iv[DEFN_]
            x = 0
        sg = 1 if up else -1
        iv[ECAL_] += sg * n
        iv[TCAL_] += sg * x
    elif mode == MODE_HETERO:
        N = iv[N_]
        k = pair_index(M.keys, i * N + j)
        c = M.ov_cls[k] if k >= 0 else iv[DEFCLS_]
        if up:
            M.cls_cnt[c, 1] += 1
            M.cls_cnt[c, 0] -= 1
        else:
            M.cls_cnt[c, 1] -= 1
            M.cls_cnt[c, 0] += 1


@njit(cache=True)
def loglik_full(M, iv, fv):
    mode = iv[MODE_]
    if mode == MODE_UNIFORM:
        return fv[BINC_] + ll_uniform(iv, fv, iv[ECAL_], iv[TCAL_])
    if mode == MODE_HETERO:
        return fv[BINC_] + ll_hetero(M, iv, fv[ALPHA_], fv[BETA_], fv[MU_], fv[NU_])
    if mode == MODE_EXTRINSIC:
        return fv[LL_]
    return 0.0


# ---------------------------------------------------------------------------
# prior terms


@njit(cache=True)
def eq47(E, B, efix):
    D = B * (B + 1) // 2
    if efix >= 0:
        lam = efix / D
    else:
        lam = E / D
    if E == 0:
        return -(D * math.log1p(lam))
    return E * math.log(lam) - (E + D) * math.log1p(lam)


@njit(cache=True)
def dc_pair(P, u, a):
    if u == a:
        h = P.ers[0, u, u] // 2
        return h * LN2 + math.lgamma(h + 1.0)
    return math.lgamma(P.ers[0, u, a] + 1.0)


@njit(cache=True)
def ms_pair(P, l, u, a):
    nu_ = P.nr[l, u]
    if u == a:
        return -lnms(nu_ * (nu_ + 1) // 2, P.ers[l, u, u] // 2)
    return -lnms(nu_ * P.nr[l, a], P.ers[l, u, a])


@njit(cache=True)
def group_scalar(P, u):
    e = P.er[0, u]
    n = P.nr[0, u]
    return -math.lgamma(e + 1.0) - math.lgamma(n + 1.0) - log_q(P.lq, e, n)


@njit(cache=True)
def part_level(P, iv, l):
    if l == 0:
        Nl = iv[N_]
    else:
        Nl = P.nocc[l - 1]
    Bl = P.nocc[l]
    s = 0.0
    for a in range(Bl):
        s += math.lgamma(P.nr[l, P.occ[l, a]] + 1.0)
    s -= math.lgamma(Nl + 1.0)
    s -= lnbinom(Nl - 1.0, Bl - 1.0)
    s -= math.log(Nl)
    # labelled-partition multiplicity: the chain moves between unlabelled
    # partitions, each standing for B! labelled ones
    s += math.lgamma(Bl + 1.0)
    return s


@njit(cache=True)
def logprior_full(Gr, P, iv):
    """Full log prior from the cached block counts."""
    N = iv[N_]
    L = iv[L_]
    s = 0.0
    B0 = P.nocc[0]
    for a in range(B0):
        u = P.occ[0, a]
        for c in range(a, B0):
            w = P.occ[0, c]
            s += dc_pair(P, u, w)
        s += group_scalar(P, u)
        for k in range(P.eta.shape[1]):
            if P.eta[u, k] > 0:
                s += math.lgamma(P.eta[u, k] + 1.0)
    for i in range(N):
        s += math.lgamma(Gr.deg[i] + 1.0)
        lp = Gr.loops[i]
        s -= lp * LN2 + math.lgamma(lp + 1.0)
        a0 = Gr.start[i]
        for p in range(a0, a0 + Gr.length[i]):
            if Gr.nbr[p] > i:
                s -= math.lgamma(Gr.mul[p] + 1.0)
    if iv[NESTED_] == 1:
        for l in range(1, L):
            Bl = P.nocc[l]
            for a in range(Bl):
                u = P.occ[l, a]
                for c in range(a, Bl):
                    s += ms_pair(P, l, u, P.occ[l, c])
        s += eq47(iv[E_], 1, iv[EFIX_])
        for l in range(L):
            s += part_level(P, iv, l)
    else:
        s += eq47(iv[E_], B0, iv[EFIX_])
        s += part_level(P, iv, 0)
    return s


@njit(cache=True)
def dc_rows(P, r, s, kv):
    t = 0.0
    B0 = P.nocc[0]
    for a in range(B0):
        t += dc_pair(P, r, P.occ[0, a])
    if s != r:
        for a in range(B0):
            w = P.occ[0, a]
            if w != r:
                t += dc_pair(P, s, w)
    t += group_scalar(P, r) + math.lgamma(P.eta[r, kv] + 1.0)
    if s != r:
        t += group_scalar(P, s) + math.lgamma(P.eta[s, kv] + 1.0)
    return t


@njit(cache=True)
def ms_rows(P, l, u, w):
    t = 0.0
    Bl = P.nocc[l]
    for a in range(Bl):
        t += ms_pair(P, l, u, P.occ[l, a])
    if w != u:
        for a in range(Bl):
            x = P.occ[l, a]
            if x != u:
                t += ms_pair(P, l, w, x)
    return t


@njit(cache=True)
def node_local(Gr, P, iv, lev, kv):
    """Every prior term that a move at level ``lev`` between the groups
    recorded in ``P.ca`` / ``P.cb`` can change."""
    L = iv[L_]
    t = 0.0
    if lev == 0:
        t += dc_rows(P, P.ca[0], P.cb[0], kv)
    if iv[NESTED_] == 1:
        for l in range(max(lev, 1), L):
            t += ms_rows(P, l, P.ca[l], P.cb[l])
        t += part_level(P, iv, lev)
        if lev + 1 < L:
            t += part_level(P, iv, lev + 1)
    else:
        t += eq47(iv[E_], P.nocc[0], iv[EFIX_])
        t += part_level(P, iv, 0)
    return t


@njit(cache=True)
def entry_local(Gr, P, iv, i, j, gij, ekg, ekk, nk):
    r = P.b0[i]
    s = P.b0[j]
    t = dc_pair(P, r, s)
    t += -math.lgamma(P.er[0, r] + 1.0) - log_q(P.lq, P.er[0, r], P.nr[0, r])
    if s != r:
        t += -math.lgamma(P.er[0, s] + 1.0) - log_q(P.lq, P.er[0, s], P.nr[0, s])
    t += math.lgamma(Gr.deg[i] + 1.0)
    if j != i:
        t += math.lgamma(Gr.deg[j] + 1.0)
        t -= math.lgamma(gij + 1.0)
    else:
        t -= gij * LN2 + math.lgamma(gij + 1.0)
    for x in range(nk):
        t += math.lgamma(P.eta[ekg[x], ekk[x]] + 1.0)
    if iv[NESTED_] == 1:
        u = r
        w = s
        for l in range(1, iv[L_]):
            u = P.bu[l, u]
            w = P.bu[l, w]
            t += ms_pair(P, l, u, w)
        t += eq47(iv[E_], 1, iv[EFIX_])
    else:
        t += eq47(iv[E_], P.nocc[0], iv[EFIX_])
    return t


# ---------------------------------------------------------------------------
# entry (latent multigraph) updates


@njit(cache=True)
def apply_entry(Gr, P, iv, i, j, delta):
    r = P.b0[i]
    s = P.b0[j]
    ki = Gr.deg[i]
    if i == j:
        P.eta[r, ki] -= 1
        P.eta[r, ki + 2 * delta] += 1
    else:
        kj = Gr.deg[j]
        P.eta[r, ki] -= 1
        P.eta[r, ki + delta] += 1
        P.eta[s, kj] -= 1
        P.eta[s, kj + delta] += 1
    g_change(Gr, iv, i, j, delta)
    if i == j:
        fen_add(P.fen, P.pos[i], 2 * delta)
    else:
        fen_add(P.fen, P.pos[i], delta)
        fen_add(P.fen, P.pos[j], delta)
    L = iv[L_] if iv[NESTED_] == 1 else 1
    u = r
    w = s
    for l in range(L):
        if l > 0:
            u = P.bu[l, u]
            w = P.bu[l, w]
        if u == w:
            P.ers[l, u, u] += 2 * delta
        else:
            P.ers[l, u, w] += delta
            P.ers[l, w, u] += delta
        P.er[l, u] += delta
        P.er[l, w] += delta


@njit(cache=True)
def log_psel(Gr, P, iv, i, j):
    r = P.b0[i]
    s = P.b0[j]
    B = P.nocc[0]
    Z = iv[E_] + B * (B + 1) // 2
    if r == s:
        e = P.ers[0, r, r] // 2
    else:
        e = P.ers[0, r, s]
    lp = math.log(e + 1.0) - math.log(Z)
    lp += math.log(Gr.deg[i] + 1.0) - math.log(P.er[0, r] + P.nr[0, r])
    lp += math.log(Gr.deg[j] + 1.0) - math.log(P.er[0, s] + P.nr[0, s])
    if r == s and i != j:
        lp += LN2
    return lp


@njit(cache=True)
def random_edge_groups(Gr, P, iv, rng):
    """Groups of the endpoints of a uniformly chosen latent edge.

    A half-edge is drawn through the node weights ``k + 1`` (redrawing on
    the extra unit) and followed to its other end."""
    N = iv[N_]
    tot = fen_prefix(P.fen, N)
    while True:
        u = rng.integers(0, tot)
        p = fen_find(P.fen, u)
        v = P.perm[p]
        off = u - fen_prefix(P.fen, p)
        if off >= Gr.deg[v]:
            continue
        a = Gr.start[v]
        for q in range(a, a + Gr.length[v]):
            off -= Gr.mul[q]
            if off < 0:
                return P.b0[v], P.b0[Gr.nbr[q]]
        return P.b0[v], P.b0[v]


@njit(cache=True)
def sample_group_pair(P, iv, rng, Gr):
    """Group pair ``(r, s)`` with probability ``(e_rs + 1) / (E + B(B+1)/2)``:
    either the groups of a random edge or a uniform unordered pair."""
    B = P.nocc[0]
    D = B * (B + 1) // 2
    U = rng.integers(0, iv[E_] + D)
    if U < iv[E_]:
        u, w = random_edge_groups(Gr, P, iv, rng)
        return u, w
    t = U - iv[E_]
    # unordered pair index t -> (a <= c), rows of decreasing length
    a = int((2 * B + 1 - math.sqrt((2 * B + 1) ** 2 - 8.0 * t)) // 2)
    if a < 0:
        a = 0
    while a > 0 and a * B - a * (a - 1) // 2 > t:
        a -= 1
    while (a + 1) * B - (a + 1) * a // 2 <= t:
        a += 1
    c = a + (t - (a * B - a * (a - 1) // 2))
    return P.occ[0, a], P.occ[0, c]


@njit(cache=True)
def add_key(ekg, ekk, nk, g, k):
    for x in range(nk):
        if ekg[x] == g and ekk[x] == k:
            return nk
    ekg[nk] = g
    ekk[nk] = k
    return nk + 1


@njit(cache=True)
def entry_eval(Gr, P, M, iv, fv, i, j, delta, ekg, ekk):
    """Prior and likelihood change of G_ij += delta, leaving the state
    modified (caller undoes on rejection).  Returns (dprior, dlik)."""
    r = P.b0[i]
    s = P.b0[j]
    ki = Gr.deg[i]
    kj = Gr.deg[j]
    nk = 0
    if i == j:
        nk = add_key(ekg, ekk, nk, r, ki)
        nk = add_key(ekg, ekk, nk, r, ki + 2 * delta)
    else:
        nk = add_key(ekg, ekk, nk, r, ki)
        nk = add_key(ekg, ekk, nk, r, ki + delta)
        nk = add_key(ekg, ekk, nk, s, kj)
        nk = add_key(ekg, ekk, nk, s, kj + delta)
    gij = g_get(Gr, i, j)
    dl = 0.0
    if i != j:
        if gij == 0 and delta > 0:
            dl = lik_flip_delta(M, iv, fv, i, j, True)
        elif gij == 1 and delta < 0:
            dl = lik_flip_delta(M, iv, fv, i, j, False)
    before = entry_local(Gr, P, iv, i, j, gij, ekg, ekk, nk)
    apply_entry(Gr, P, iv, i, j, delta)
    after = entry_local(Gr, P, iv, i, j, gij + delta, ekg, ekk, nk)
    return after - before, dl


@njit(cache=True)
def entry_commit(M, iv, fv, i, j, gij_old, delta, dp, dl):
    if i != j:
        if gij_old == 0 and delta > 0:
            lik_flip_commit(M, iv, i, j, True)
        elif gij_old == 1 and delta < 0:
            lik_flip_commit(M, iv, i, j, False)
    fv[LP_] += dp
    if iv[MODE_] == MODE_EXTRINSIC:
        fv[LL_] += dl
    else:
        fv[LL_] = loglik_full(M, iv, fv)


@njit(cache=True)
def entry_propose(Gr, P, iv, rng):
    r, s = sample_group_pair(P, iv, rng, Gr)
    i = sample_in_group(P, r, rng)
    j = sample_in_group(P, s, rng)
    if i > j:
        t = i
        i = j
        j = t
    gij = g_get(Gr, i, j)
    if gij == 0:
        delta = 1
    elif rng.random() < 0.5:
        delta = 1
    else:
        delta = -1
    return i, j, gij, delta


@njit(cache=True)
def entry_move(Gr, P, M, iv, fv, rng, acc, ekg, ekk):
    i, j, gij, delta = entry_propose(Gr, P, iv, rng)
    acc[ENTRY_TRY] += 1
    if iv[MCAP_] >= 0 and gij + delta > iv[MCAP_]:
        return
    lpf = log_psel(Gr, P, iv, i, j)
    if gij > 0:
        lpf -= LN2
    dp, dl = entry_eval(Gr, P, M, iv, fv, i, j, delta, ekg, ekk)
    lpr = log_psel(Gr, P, iv, i, j)
    if gij + delta > 0:
        lpr -= LN2
    la = dp + dl + lpr - lpf
    if la >= 0.0 or math.log(rng.random()) < la:
        entry_commit(M, iv, fv, i, j, gij, delta, dp, dl)
        acc[ENTRY_ACC] += 1
    else:
        apply_entry(Gr, P, iv, i, j, -delta)


# ---------------------------------------------------------------------------
# node (membership) moves


@njit(cache=True)
def gather(Gr, P, iv, lev, v):
    """Fill P.sh / P.sw with the other ends and weights of v's edges at
    level ``lev`` and P.st with their current level-``lev`` groups.
    Returns (count, self weight, total weight)."""
    m = 0
    ktot = 0
    if lev == 0:
        a = Gr.start[v]
        for p in range(a, a + Gr.length[v]):
            h = Gr.nbr[p]
            w = Gr.mul[p]
            P.sh[m] = h
            P.sw[m] = w
            P.st[m] = P.b0[h]
            m += 1
            ktot += w
        wself = 2 * Gr.loops[v]
    else:
        below = lev - 1
        Bb = P.nocc[below]
        wself = P.ers[below, v, v]
        for a in range(Bb):
            h = P.occ[below, a]
            if h == v:
                continue
            w = P.ers[below, v, h]
            if w == 0:
                continue
            P.sh[m] = h
            P.sw[m] = w
            P.st[m] = P.bu[lev, h]
            m += 1
            ktot += w
    return m, wself, ktot + wself


@njit(cache=True)
def target_prob(P, lev, m, wself, ktot, own, s, eps):
    """Existing-group part of the node-move kernel, without the (1-d)."""
    B = P.nocc[lev]
    if ktot == 0:
        return 1.0 / B
    tot = 0.0
    for x in range(m):
        t = P.st[x]
        tot += P.sw[x] * (P.ers[lev, t, s] + eps) / (P.er[lev, t] + eps * B)
    if wself > 0:
        tot += wself * (P.ers[lev, own, s] + eps) / (P.er[lev, own] + eps * B)
    return tot / ktot


@njit(cache=True)
def sample_target(P, lev, m, wself, ktot, own, eps, rng):
    B = P.nocc[lev]
    if ktot == 0:
        return P.occ[lev, rng.integers(0, B)]
    u = rng.integers(0, ktot)
    t = own
    if u >= wself:
        u -= wself
        for x in range(m):
            u -= P.sw[x]
            if u < 0:
                t = P.st[x]
                break
    et = P.er[lev, t]
    if rng.random() * (et + eps * B) < eps * B:
        return P.occ[lev, rng.integers(0, B)]
    u = rng.integers(0, et)
    for a in range(B):
        s = P.occ[lev, a]
        u -= P.ers[lev, t, s]
        if u < 0:
            return s
    return P.occ[lev, B - 1]


@njit(cache=True)
def apply_node(Gr, P, iv, lev, v, r, s, m, wself, ktot):
    """Move element v of level ``lev`` from group r to group s.

    If s is currently unoccupied it is taken from the free stack and
    attached to r's parent.  Uses the other-end lists left by ``gather``."""
    L = iv[L_] if iv[NESTED_] == 1 else 1
    if P.nr[lev, s] == 0:
        take_label(P, lev, s)
        occ_add(P, lev, s)
        if lev + 1 < L:
            par = P.bu[lev + 1, r]
            P.bu[lev + 1, s] = par
            P.nr[lev + 1, par] += 1
    if lev == 0:
        kv = Gr.deg[v]
        P.eta[r, kv] -= 1
        P.eta[s, kv] += 1
        P.b0[v] = s
        seg_move(P, Gr.deg, v, r, s)
    else:
        P.bu[lev, v] = s
    # ancestors of the other ends, climbed alongside a and b
    for x in range(m):
        P.sh[x] = P.st[x]
    a = r
    b = s
    l = lev
    while True:
        for x in range(m):
            t = P.sh[x]
            w = P.sw[x]
            P.ers[l, a, t] -= w
            P.ers[l, t, a] -= w
        P.ers[l, a, a] -= wself
        P.er[l, a] -= ktot
        for x in range(m):
            t = P.sh[x]
            w = P.sw[x]
            P.ers[l, b, t] += w
            P.ers[l, t, b] += w
        P.ers[l, b, b] += wself
        P.er[l, b] += ktot
        l += 1
        if l >= L:
            break
        a = P.bu[l, a]
        b = P.bu[l, b]
        if a == b:
            break
        for x in range(m):
            P.sh[x] = P.bu[l, P.sh[x]]
    P.nr[lev, r] -= 1
    P.nr[lev, s] += 1
    if P.nr[lev, r] == 0:
        occ_remove(P, lev, r)
        P.free[lev, P.nfree[lev]] = r
        P.nfree[lev] += 1
        if lev + 1 < L:
            P.nr[lev + 1, P.bu[lev + 1, r]] -= 1
    return s


@njit(cache=True)
def set_chains(P, iv, lev, r, s, s_new):
    L = iv[L_] if iv[NESTED_] == 1 else 1
    P.ca[lev] = r
    P.cb[lev] = s
    for l in range(lev + 1, L):
        P.ca[l] = P.bu[l, P.ca[l - 1]]
        if s_new and l == lev + 1:
            P.cb[l] = P.ca[l]
        else:
            P.cb[l] = P.bu[l, P.cb[l - 1]]


@njit(cache=True)
def node_eval(Gr, P, iv, fv, lev, v, s, m, wself, ktot):
    """Apply v -> s at level lev and return (dprior, log forward, log
    reverse, r).  Returns dprior = -inf for forbidden moves (state
    untouched)."""
    L = iv[L_] if iv[NESTED_] == 1 else 1
    r = P.b0[v] if lev == 0 else P.bu[lev, v]
    d = fv[D_]
    eps = fv[EPS_]
    s_new = P.nr[lev, s] == 0
    if s_new:
        lpf = math.log(d)
    else:
        lpf = math.log1p(-d) + math.log(target_prob(P, lev, m, wself, ktot, r, s, eps))
        if P.nr[lev, r] == 1 and lev + 1 < L and P.bu[lev + 1, r] != P.bu[lev + 1, s]:
            return NEG_INF, lpf, 0.0, r
    kv = Gr.deg[v] if lev == 0 else 0
    set_chains(P, iv, lev, r, s, s_new)
    before = node_local(Gr, P, iv, lev, kv)
    apply_node(Gr, P, iv, lev, v, r, s, m, wself, ktot)
    after = node_local(Gr, P, iv, lev, kv)
    if P.nr[lev, r] == 0:
        lpr = math.log(d)
    else:
        lpr = math.log1p(-d) + math.log(target_prob(P, lev, m, wself, ktot, s, r, eps))
    return after - before, lpf, lpr, r


@njit(cache=True)
def node_choose(Gr, P, iv, fv, lev, v, rng):
    """Draw a target for v.  Returns (s, m, wself, ktot) with s = -2 for a
    null move."""
    r = P.b0[v] if lev == 0 else P.bu[lev, v]
    m, wself, ktot = gather(Gr, P, iv, lev, v)
    if rng.random() < fv[D_]:
        if P.nr[lev, r] == 1:
            return -2, m, wself, ktot
        if lev == 0 and iv[BMAX_] > 0 and P.nocc[0] >= iv[BMAX_]:
            return -2, m, wself, ktot
        s = P.free[lev, P.nfree[lev] - 1]
        return s, m, wself, ktot
    s = sample_target(P, lev, m, wself, ktot, r, fv[EPS_], rng)
    if s == r:
        return -2, m, wself, ktot
    return s, m, wself, ktot


@njit(cache=True)
def node_move(Gr, P, M, iv, fv, lev, v, rng, acc):
    acc[NODE_TRY] += 1
    s, m, wself, ktot = node_choose(Gr, P, iv, fv, lev, v, rng)
    if s == -2:
        acc[NODE_NULL] += 1
        return
    dp, lpf, lpr, r = node_eval(Gr, P, iv, fv, lev, v, s, m, wself, ktot)
    if dp == NEG_INF:
        return
    la = dp + lpr - lpf
    if la >= 0.0 or math.log(rng.random()) < la:
        fv[LP_] += dp
        acc[NODE_ACC] += 1
    else:
        # other-end groups at level lev are unchanged by the move itself
        apply_node(Gr, P, iv, lev, v, s, r, m, wself, ktot)


# ---------------------------------------------------------------------------
# hyperparameters (heterogeneous model)


@njit(cache=True)
def reflect(u, lo, hi):
    w = hi - lo
    if w <= 0:
        return lo
    for _ in range(1000):
        if u < lo:
            u = 2 * lo - u
        elif u > hi:
            u = 2 * hi - u
        else:
            return u
    return min(max(u, lo), hi)


@njit(cache=True)
def hyper_propose(fv, k, rng):
    x = math.log(fv[ALPHA_ + k])
    step = fv[HSTEP_]
    if step == 0.0:
        return fv[ALPHA_ + k]
    y = reflect(x + step * rng.standard_normal(), math.log(fv[HLO_]), math.log(fv[HHI_]))
    return math.exp(y)


@njit(cache=True)
def hyper_logratio(M, iv, fv, k, new):
    h = np.empty(4)
    for x in range(4):
        h[x] = fv[ALPHA_ + x]
    old = h[k]
    before = ll_hetero(M, iv, h[0], h[1], h[2], h[3])
    h[k] = new
    after = ll_hetero(M, iv, h[0], h[1], h[2], h[3])
    # log-space random walk: proposal density ratio contributes new/old
    return after - before + math.log(new) - math.log(old), after - before


@njit(cache=True)
def hyper_moves(M, iv, fv, rng, acc):
    for k in range(4):
        acc[HYPER_TRY] += 1
        new = hyper_propose(fv, k, rng)
        la, dl = hyper_logratio(M, iv, fv, k, new)
        if la >= 0.0 or math.log(rng.random()) < la:
            fv[ALPHA_ + k] = new
            fv[LL_] = loglik_full(M, iv, fv)
            acc[HYPER_ACC] += 1


# ---------------------------------------------------------------------------
# sweeps


@njit(cache=True)
def needs_growth(P, Gr, iv):
    L = iv[L_] if iv[NESTED_] == 1 else 1
    for l in range(max(1, L - 1)):
        if P.nfree[l] < 1:
            return GROW_LABELS
    if Gr.nbr.shape[0] - iv[TOP_] < 4 * iv[MAXCAP_] + 16:
        return GROW_POOL
    if P.eta.shape[1] < iv[MAXDEG_] + 4:
        return GROW_ETA
    return OK


@njit(cache=True)
def run_sweeps(Gr, P, M, iv, fv, rng, acc, nsweeps, node_steps, entry_steps, phase, index, done, ekg, ekk):
    """Run up to ``nsweeps`` sweeps starting at (phase, index) of sweep
    ``done``.  ``node_steps[l]`` node moves are attempted at each movable
    level l and ``entry_steps`` entry updates after them; both are fixed
    in advance so that every sweep leaves the posterior invariant.
    Returns (status, sweeps done, phase, index)."""
    N = iv[N_]
    L = iv[L_] if iv[NESTED_] == 1 else 1
    nmove = max(1, L - 1)
    while done < nsweeps:
        while phase < nmove:
            lev = phase
            nel = N if lev == 0 else P.nocc[lev - 1]
            while index < node_steps[lev]:
                if nel > 1:
                    st = needs_growth(P, Gr, iv)
                    if st != OK:
                        return st, done, phase, index
                    if lev == 0:
                        v = rng.integers(0, N)
                    else:
                        v = P.occ[lev - 1, rng.integers(0, nel)]
                    node_move(Gr, P, M, iv, fv, lev, v, rng, acc)
                index += 1
            phase += 1
            index = 0
        if phase == nmove:
            while index < entry_steps:
                st = needs_growth(P, Gr, iv)
                if st != OK:
                    return st, done, phase, index
                entry_move(Gr, P, M, iv, fv, rng, acc, ekg, ekk)
                index += 1
            phase += 1
            index = 0
        if iv[MODE_] == MODE_HETERO:
            hyper_moves(M, iv, fv, rng, acc)
        done += 1
        phase = 0
        index = 0
    return OK, done, 0, 0


# ---------------------------------------------------------------------------
# Erdos-Renyi prior acting directly on A (dense)


@njit(cache=True)
def er_logprior(N, E):
    P = N * (N - 1) // 2
    return -lnbinom(P, E) - math.log(P + 1.0)


@njit(cache=True)
def er_sweeps(A, M, iv, fv, rng, acc, nsweeps, nsteps):
    N = iv[N_]
    for _ in range(nsweeps):
        for _ in range(nsteps):
            i = rng.integers(0, N)
            j = rng.integers(0, N - 1)
            if j >= i:
                j += 1
            if i > j:
                t = i
                i = j
                j = t
            acc[ENTRY_TRY] += 1
            up = A[i, j] == 0
            E = iv[E_]
            E2 = E + 1 if up else E - 1
            dp = er_logprior(N, E2) - er_logprior(N, E)
            dl = lik_flip_delta(M, iv, fv, i, j, up)
            la = dp + dl
            if la >= 0.0 or math.log(rng.random()) < la:
                A[i, j] = 1 if up else 0
                A[j, i] = A[i, j]
                iv[E_] = E2
                lik_flip_commit(M, iv, i, j, up)
                fv[LP_] += dp
                if iv[MODE_] == MODE_EXTRINSIC:
                    fv[LL_] += dl
                else:
                    fv[LL_] = loglik_full(M, iv, fv)
                acc[ENTRY_ACC] += 1
        if iv[MODE_] == MODE_HETERO:
            hyper_moves(M, iv, fv, rng, acc)


# ---------------------------------------------------------------------------
# state construction and inspection


@njit(cache=True)
def rebuild_blocks(Gr, P, iv):
    """Recompute every cached block count from G, b0 and bu."""
    N = iv[N_]
    L = iv[L_] if iv[NESTED_] == 1 else 1
    C = iv[C_]
    P.ers[:] = 0
    P.er[:] = 0
    P.nr[:] = 0
    P.eta[:] = 0
    for i in range(N):
        r = P.b0[i]
        P.nr[0, r] += 1
        P.eta[r, Gr.deg[i]] += 1
        P.ers[0, r, r] += 2 * Gr.loops[i]
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            P.ers[0, r, P.b0[Gr.nbr[p]]] += Gr.mul[p]
    for r in range(C):
        s = 0
        for t in range(C):
            s += P.ers[0, r, t]
        P.er[0, r] = s
    for l in range(1, L):
        for g in range(C):
            if P.nr[l - 1, g] == 0:
                continue
            u = P.bu[l, g]
            P.nr[l, u] += 1
            for h in range(C):
                if P.nr[l - 1, h] == 0:
                    continue
                P.ers[l, u, P.bu[l, h]] += P.ers[l - 1, g, h]
        for r in range(C):
            s = 0
            for t in range(C):
                s += P.ers[l, r, t]
            P.er[l, r] = s
    for l in range(P.nocc.shape[0]):
        P.nocc[l] = 0
        P.nfree[l] = 0
        for r in range(C - 1, -1, -1):
            if P.nr[l, r] > 0:
                pass
            else:
                P.free[l, P.nfree[l]] = r
                P.nfree[l] += 1
        for r in range(C):
            if P.nr[l, r] > 0:
                occ_add(P, l, r)
    # segments ordered by label
    fill = np.zeros(C + 1, dtype=np.int64)
    for i in range(N):
        fill[P.b0[i] + 1] += 1
    for r in range(C):
        fill[r + 1] += fill[r]
    for r in range(C + 1):
        P.seg[r] = fill[r]
    cur = fill.copy()
    for i in range(N):
        r = P.b0[i]
        p = cur[r]
        cur[r] += 1
        P.perm[p] = i
        P.pos[i] = p
    P.fen[:] = 0
    for p in range(N):
        fen_add(P.fen, p, Gr.deg[P.perm[p]] + 1)


@njit(cache=True)
def edge_keys(Gr, iv):
    """Sorted keys i*N + j (i < j) of the collapsed simple graph."""
    N = iv[N_]
    n = 0
    for i in range(N):
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            if Gr.nbr[p] > i:
                n += 1
    out = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(N):
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            j = Gr.nbr[p]
            if j > i:
                out[k] = i * N + j
                k += 1
    out.sort()
    return out


@njit(cache=True)
def multi_entries(Gr, iv):
    """All nonzero entries (i, j, G_ij) with i <= j."""
    N = iv[N_]
    n = 0
    for i in range(N):
        if Gr.loops[i] > 0:
            n += 1
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            if Gr.nbr[p] > i:
                n += 1
    out = np.empty((n, 3), dtype=np.int64)
    k = 0
    for i in range(N):
        if Gr.loops[i] > 0:
            out[k, 0] = i
            out[k, 1] = i
            out[k, 2] = Gr.loops[i]
            k += 1
        a = Gr.start[i]
        for p in range(a, a + Gr.length[i]):
            j = Gr.nbr[p]
            if j > i:
                out[k, 0] = i
                out[k, 1] = j
                out[k, 2] = Gr.mul[p]
                k += 1
    return out


@njit(cache=True)
def er_edge_keys(A):
    N = A.shape[0]
    n = 0
    for i in range(N):
        for j in range(i + 1, N):
            if A[i, j]:
                n += 1
    out = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(N):
        for j in range(i + 1, N):
            if A[i, j]:
                out[k] = i * N + j
                k += 1
    return out
