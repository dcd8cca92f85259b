"""Metropolis-Hastings sampling of the joint posterior over the latent
multigraph, the partition and (for the heterogeneous model) the error
hyperparameters."""

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .config import RunConfig
from .graph import AdjacencyView, HierarchicalPartition, LatentMultigraph, MeasurementData
from .measurement import (ErrorHyperParams, ExtrinsicUncertainty, extrinsic_terms, log_binomial_constant,
                          log_likelihood_extrinsic, log_likelihood_hetero, log_likelihood_uniform)
from .sbm import BlockState, EntryMove, NodeMove, log_prior_er, log_prior_joint, spectral_partition

HYPER_BOUNDS = (1e-3, 1e4)
_MODE = {"none": K.MODE_NONE, "uniform": K.MODE_UNIFORM, "hetero": K.MODE_HETERO,
         "extrinsic": K.MODE_EXTRINSIC}


@dataclass(frozen=True)
class HyperMove:
    values: tuple


@dataclass
class ProposalOutcome:
    """A proposed move with its log proposal probabilities.

    ``delta`` is the change in log posterior; ``None`` marks a null move
    (state unchanged whatever the decision)."""

    move: object
    log_forward: float
    log_reverse: float
    delta: float | None
    accepted: bool = False
    _info: object = field(default=None, repr=False)
    _version: int = field(default=-1, repr=False)

    @property
    def log_ratio(self):
        if self.delta is None:
            return 0.0
        return self.delta + self.log_reverse - self.log_forward


class _DenseState:
    """Simple-graph state for the fully random prior."""

    nested = False

    def __init__(self, A):
        N = A.node_count
        self.A = A.to_dense()
        self.iv = np.zeros(K.NIV, dtype=np.int64)
        self.fv = np.zeros(K.NFV)
        self.iv[K.N_] = N
        self.iv[K.E_] = A.edge_count
        self.acc = np.zeros(K.NACC, dtype=np.int64)
        self.fv[K.LP_] = K.er_logprior(N, A.edge_count)

    @property
    def node_count(self):
        return int(self.iv[K.N_])

    @property
    def edge_count(self):
        return int(self.iv[K.E_])

    def edge_keys(self):
        return K.er_edge_keys(self.A)

    def labelling_term(self):
        return 0.0

    def log_prior_full(self):
        return float(K.er_logprior(self.node_count, self.edge_count))

    def ensure(self):
        pass

    def step_counts(self, entry_ratio=1.0):
        return np.zeros(1, dtype=np.int64), int(entry_ratio * max(self.edge_count, self.node_count))


def _init_adjacency(data, model, init):
    N = data.node_count
    if init == "empty" or model == "none":
        return AdjacencyView(N)
    if model == "extrinsic":
        if data.default_q is not None and data.default_q > 0.5:
            return AdjacencyView(N, frozenset((i, j) for i in range(N) for j in range(i + 1, N)
                                              if data.get(i, j) > 0.5))
        return AdjacencyView(N, frozenset(e for e, q in data.values.items() if q > 0.5))
    if init == "majority":
        return AdjacencyView(N, frozenset(e for e, (n, x) in data.overrides.items() if 2 * x > n))
    if init == "mixture":
        keep = mixture_classes(data)
        return AdjacencyView(N, frozenset(e for e, nx in data.overrides.items() if nx in keep))
    return data.positive_pairs()


def mixture_classes(data, iterations=500, tol=1e-10):
    """Outcome classes ``(n, x)`` assigned to the edge component of a binomial mixture.

    Pairs are pooled by their counts, the two-component mixture is fitted by
    EM starting from "edge iff x > 0", and a class is kept when its edge
    responsibility exceeds one half.  Unmeasured pairs form the class
    ``(default_n, 0)``.  Two binomial components are only identifiable with
    at least three trials, so without any such class this falls back to
    the strict majority rule ``2x > n`` (which is "x > 0" for single
    measurements).
    """
    classes = Counter(data.overrides.values())
    rest = data.pair_count - len(data.overrides)
    if rest:
        classes[(data.default_n, 0)] += rest
    if max(n for n, _ in classes) < 3:
        return {k for k in classes if 2 * k[1] > k[0]}
    keys = list(classes)
    w = np.array([classes[k] for k in keys], dtype=float)
    n = np.array([k[0] for k in keys], dtype=float)
    x = np.array([k[1] for k in keys], dtype=float)
    r = (x > 0).astype(float)
    for _ in range(iterations):
        wr, wq = w * r, w * (1 - r)
        pi = (wr.sum() + 1) / (w.sum() + 2)
        p = ((wr * x).sum() + 1) / ((wr * n).sum() + 2)
        q = ((wq * x).sum() + 1) / ((wq * n).sum() + 2)
        a = np.log(pi) + x * np.log(p) + (n - x) * np.log1p(-p)
        b = np.log1p(-pi) + x * np.log(q) + (n - x) * np.log1p(-q)
        new = 1 / (1 + np.exp(np.clip(b - a, -700, 700)))
        if np.max(np.abs(new - r)) < tol:
            r = new
            break
        r = new
    if p < q:
        r = 1 - r
    return {k for k, v in zip(keys, r) if v > 0.5}


class ChainState:
    """One Markov chain.

    Parameters
    ----------
    data : MeasurementData, ExtrinsicUncertainty or None
    model : {"uniform", "hetero", "extrinsic", "none"}
        ``"none"`` samples the prior alone; ``data`` then only needs a
        ``node_count`` (an integer is accepted).
    prior : {"er", "cm", "dcsbm", "hdcsbm"}
    hyper : ErrorHyperParams
        Fixed for the uniform model, the starting point for the
        heterogeneous one.
    rng : numpy.random.Generator or int
    d, eps : float
        New-group probability and smoothing of node moves.
    init : {"data", "majority", "mixture", "empty"} or LatentMultigraph
        Starting multigraph: one edge wherever a positive measurement was
        seen (``Q > 1/2`` for extrinsic data), wherever more than half of
        the measurements were positive, wherever a two-component binomial
        mixture fitted to the counts favours an edge (see
        :func:`mixture_classes`), none, or a given graph.
    partition : HierarchicalPartition or {"single", "spectral"}, optional
        Starting partition.  ``"single"`` (the default) puts every node in
        one group; ``"spectral"`` clusters the starting graph into 1, 2, 4,
        ... groups (capped by ``max_groups``) and keeps the candidate with
        the highest log posterior.
    """

    def __init__(self, data, model="uniform", prior="hdcsbm", hyper=ErrorHyperParams(), rng=None, d=0.01,
                 eps=1.0, init="data", partition=None, max_groups=None, multiplicity_cap=None,
                 fixed_edges=None, depth=None, hyper_step=0.2, hyper_bounds=HYPER_BOUNDS):
        if model not in _MODE:
            raise ValueError(f"unknown model {model!r}")
        if isinstance(data, int):
            data = MeasurementData(data)
        if model in ("uniform", "hetero") and not isinstance(data, MeasurementData):
            raise TypeError(f"the {model} model needs MeasurementData")
        if model == "extrinsic" and not isinstance(data, ExtrinsicUncertainty):
            raise TypeError("the extrinsic model needs ExtrinsicUncertainty")
        if not 0 < d < 1 or not eps > 0:
            raise ValueError("need 0 < d < 1 and eps > 0")
        self.data = data
        self.model = model
        self.prior = prior
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.version = 0
        N = data.node_count
        if isinstance(init, LatentMultigraph):
            G = init.copy()
        else:
            G = LatentMultigraph.from_adjacency(_init_adjacency(data, model, init))
        if isinstance(partition, str):
            partition = self._initial_partition(partition, G, locals())
        if prior == "er":
            self.s = _DenseState(AdjacencyView(N, frozenset(p for p, m in G.items() if p[0] != p[1])))
        elif prior in ("cm", "dcsbm", "hdcsbm"):
            if prior == "cm":
                max_groups = 1
            self.s = BlockState(G, partition, nested=(prior == "hdcsbm"), depth=depth, fixed_edges=fixed_edges,
                                max_groups=max_groups, multiplicity_cap=multiplicity_cap)
        else:
            raise ValueError(f"unknown prior {prior!r}")
        iv, fv = self.s.iv, self.s.fv
        fv[K.D_] = d
        fv[K.EPS_] = eps
        fv[K.ALPHA_:K.NU_ + 1] = hyper.as_tuple()
        fv[K.HSTEP_] = hyper_step
        fv[K.HLO_], fv[K.HHI_] = hyper_bounds
        if model == "hetero":
            lo, hi = hyper_bounds
            if not all(lo <= v <= hi for v in hyper.as_tuple()):
                raise ValueError("initial hyperparameters lie outside the allowed domain")
        iv[K.MODE_] = _MODE[model]
        self.s.M = self._build_meas(self.adjacency())
        fv[K.LL_] = self._fresh_loglik()
        self.refresh_step_counts()
        if not math.isfinite(self.log_posterior()):
            raise FloatingPointError("log posterior is not finite at the initial state")

    # -- construction ----------------------------------------------------

    @staticmethod
    def _initial_partition(kind, G, args):
        if kind == "single" or args["prior"] in ("er", "cm"):
            return None
        if kind != "spectral":
            raise ValueError(f"unknown initial partition {kind!r}")
        N = G.node_count
        cap = min(args["max_groups"] or N, max(1, N // 2))
        sizes = [b for b in (1, 2, 4, 8, 16, 32, 64) if b <= cap]
        if cap not in sizes and cap <= 64:
            sizes.append(cap)
        rng = np.random.default_rng(args["self"].rng.integers(2 ** 63))
        nested = args["prior"] == "hdcsbm"
        best, best_lp = None, -math.inf
        # cluster the measured network even when the chain starts elsewhere
        H = _init_adjacency(args["data"], args["model"], "data") if args["model"] != "none" else G
        for B in sizes:
            b = spectral_partition(H, B, rng)
            nb = int(b.max()) + 1
            part = HierarchicalPartition([b, np.zeros(nb, dtype=np.int64)] if nested else [b])
            trial = ChainState(args["data"], model=args["model"], prior=args["prior"], hyper=args["hyper"],
                               rng=0, init=G, partition=part, max_groups=args["max_groups"],
                               multiplicity_cap=args["multiplicity_cap"], fixed_edges=args["fixed_edges"],
                               depth=args["depth"])
            lp = trial.log_posterior()
            if lp > best_lp:
                best, best_lp = part, lp
        return best

    def _build_meas(self, A):
        iv, fv = self.s.iv, self.s.fv
        N = self.data.node_count
        z = np.zeros(0, dtype=np.int64)
        if self.model in ("uniform", "hetero"):
            D = self.data
            keys, n, x = D.arrays()
            iv[K.DEFN_] = D.default_n
            fv[K.BINC_] = log_binomial_constant(D)
            classes = {}
            ov_cls = np.zeros(len(keys), dtype=np.int64)
            for k in range(len(keys)):
                ov_cls[k] = classes.setdefault((int(n[k]), int(x[k])), len(classes))
            dc = classes.setdefault((D.default_n, 0), len(classes))
            iv[K.DEFCLS_] = dc
            iv[K.NCLS_] = len(classes)
            cls_n = np.zeros(len(classes), dtype=np.int64)
            cls_x = np.zeros(len(classes), dtype=np.int64)
            for (cn, cx), c in classes.items():
                cls_n[c] = cn
                cls_x[c] = cx
            cnt = np.zeros((len(classes), 2), dtype=np.int64)
            akeys = A.keys()
            hit = np.isin(keys, akeys)
            np.add.at(cnt, (ov_cls, hit.astype(np.int64)), 1)
            n_dflt = D.pair_count - len(keys)
            e_dflt = len(akeys) - int(hit.sum())
            cnt[dc, 1] += e_dflt
            cnt[dc, 0] += n_dflt - e_dflt
            iv[K.MCAL_] = D.default_n * n_dflt + int(n.sum())
            iv[K.XCAL_] = int(x.sum())
            iv[K.ECAL_] = int(n[hit].sum()) + D.default_n * e_dflt
            iv[K.TCAL_] = int(x[hit].sum())
            return K.Meas(keys, n, x, ov_cls, cls_n, cls_x, cnt, z, np.zeros(0), np.zeros(0))
        meas = list(K.Meas(z, z, z, z, np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64),
                           np.zeros((1, 2), dtype=np.int64), z, np.zeros(0), np.zeros(0)))
        if self.model == "extrinsic":
            Q = self.data
            if not 0 < Q.mean < 1:
                raise ValueError("mean Q must lie strictly between 0 and 1")
            t1, t0 = extrinsic_terms(Q)
            items = sorted(Q.values)
            meas[7] = np.array([i * N + j for i, j in items], dtype=np.int64)
            meas[8] = np.array([t1[e] for e in items])
            meas[9] = np.array([t0[e] for e in items])
            if Q.default_q is not None:
                fv[K.T1D_] = math.log(Q.default_q / Q.mean)
                fv[K.T0D_] = math.log((1 - Q.default_q) / (1 - Q.mean))
        return K.Meas(*meas)

    def _fresh_loglik(self):
        if self.model == "none":
            return 0.0
        A = self.adjacency()
        if self.model == "uniform":
            return log_likelihood_uniform(self.data, A, self.hyper)
        if self.model == "hetero":
            return log_likelihood_hetero(self.data, A, self.hyper)
        return log_likelihood_extrinsic(self.data, A)

    # -- views -------------------------------------------------------------

    @property
    def node_count(self):
        return self.data.node_count

    @property
    def hyper(self):
        return ErrorHyperParams(*map(float, self.s.fv[K.ALPHA_:K.NU_ + 1]))

    @property
    def latent_edge_count(self):
        return self.s.edge_count

    def edge_keys(self):
        return self.s.edge_keys()

    def adjacency(self):
        return AdjacencyView.from_keys(self.node_count, self.edge_keys())

    def multigraph(self):
        if self.prior == "er":
            return LatentMultigraph.from_adjacency(self.adjacency())
        return self.s.multigraph()

    def partition(self):
        if self.prior == "er":
            return HierarchicalPartition([np.zeros(self.node_count, dtype=np.int64)])
        return self.s.partition()

    def group_counts(self):
        return [int(b.max()) + 1 for b in self.partition().levels]

    def log_prior(self):
        """Cached log prior over labelled partitions."""
        return float(self.s.fv[K.LP_]) - self.s.labelling_term()

    def log_likelihood(self):
        iv, fv = self.s.iv, self.s.fv
        return float(K.loglik_full(self.s.M, iv, fv))

    def log_posterior(self):
        """Cached ``ln P(A-or-G, b | data)`` up to the evidence."""
        return self.log_prior() + self.log_likelihood()

    def recompute_log_posterior(self, reference=False):
        """Full recomputation; ``reference=True`` uses the pure-Python oracles."""
        A = self.adjacency()
        lik = self._fresh_loglik()
        if self.prior == "er":
            return log_prior_er(A) + lik
        if reference:
            return log_prior_joint(self.s.multigraph(), self.s.partition(), self.s.nested, self.s.fixed_edges) + lik
        return self.s.log_prior_full() - self.s.labelling_term() + lik

    def state_hash(self):
        """Digest of the latent graph, the partition (up to labels) and the hyperparameters."""
        h = hashlib.sha256()
        for (i, j), m in self.multigraph().items():
            h.update(f"{i},{j},{m};".encode())
        for b in self.partition().levels:
            h.update(b.tobytes())
        h.update(np.asarray(self.hyper.as_tuple()).tobytes())
        return h.hexdigest()

    def error_rate_moments(self):
        """Conditional posterior mean and variance of the error rates
        ``(p_mean, p_var, q_mean, q_var)`` given the current network.

        For the heterogeneous model these refer to the averages of
        ``p_ij`` over edges and ``q_ij`` over non-edges."""
        iv, fv = self.s.iv, self.s.fv
        a0, b0, m0, n0 = fv[K.ALPHA_:K.NU_ + 1]
        if self.model == "uniform":
            E, T, M, X = iv[K.ECAL_], iv[K.TCAL_], iv[K.MCAL_], iv[K.XCAL_]
            return _beta_moments(E - T + a0, T + b0) + _beta_moments(X - T + m0, M - X - E + T + n0)
        if self.model == "hetero":
            Ms = self.s.M
            nc = iv[K.NCLS_]
            cnt = Ms.cls_cnt[:nc]
            n, x = Ms.cls_n[:nc], Ms.cls_x[:nc]
            pm, pv = _beta_moments(n - x + a0, x + b0)
            qm, qv = _beta_moments(x + m0, n - x + n0)
            ne, nn = cnt[:, 1].sum(), cnt[:, 0].sum()
            out = []
            for m, v, c, tot in ((pm, pv, cnt[:, 1], ne), (qm, qv, cnt[:, 0], nn)):
                if tot == 0:
                    out += [math.nan, math.nan]
                else:
                    out += [float((m * c).sum() / tot), float((v * c).sum() / tot ** 2)]
            return tuple(out)
        return (math.nan,) * 4

    @property
    def acceptance(self):
        a = self.s.acc
        rate = lambda acc, tr: float(acc) / tr if tr else math.nan
        return {"node": rate(a[K.NODE_ACC], a[K.NODE_TRY]), "entry": rate(a[K.ENTRY_ACC], a[K.ENTRY_TRY]),
                "hyper": rate(a[K.HYPER_ACC], a[K.HYPER_TRY])}

    # -- sweeping ----------------------------------------------------------

    def refresh_step_counts(self, entry_ratio=1.0):
        """Size sweeps from the current state (see :meth:`sweep`)."""
        self.node_steps, self.entry_steps = self.s.step_counts(entry_ratio)

    def sweep(self, count=1):
        """Run ``count`` sweeps: ``node_steps[l]`` node moves at every movable
        level, then ``entry_steps`` entry updates, then hyperparameter moves
        for the heterogeneous model.

        The counts stay fixed between calls to :meth:`refresh_step_counts`;
        sizing a sweep from the state it starts in would bias the samples."""
        self.version += 1
        if self.prior == "er":
            K.er_sweeps(self.s.A, self.s.M, self.s.iv, self.s.fv, self.rng, self.s.acc, count, self.entry_steps)
        else:
            self.s.sweeps(self.rng, count, self.node_steps, self.entry_steps)


def _beta_moments(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    s = a + b
    m = a / s
    v = a * b / (s * s * (s + 1))
    if m.ndim == 0:
        return float(m), float(v)
    return m, v


# ---------------------------------------------------------------------------
# single proposals


def _require_sbm(state):
    if state.prior == "er":
        raise ValueError("node moves need a block-model prior")


def propose_node_move(state, i, level=0, rng=None):
    """Draw a target group for element ``i`` of ``level`` and evaluate the move.

    The state is left unchanged; pass the outcome to :func:`mh_accept`."""
    _require_sbm(state)
    rng = state.rng if rng is None else rng
    s = state.s
    L = int(s.iv[K.L_]) if s.nested else 1
    if not 0 <= level < max(1, L - 1):
        raise ValueError(f"level {level} cannot be moved")
    s.ensure()
    P = s.P
    v = int(i) if level == 0 else s.kernel_label(level - 1, int(i))
    r = int(P.b0[v]) if level == 0 else int(P.bu[level, v])
    tgt, m, wself, ktot = K.node_choose(s.Gr, P, s.iv, s.fv, level, v, rng)
    if tgt == -2:
        s.acc[K.NODE_TRY] += 1
        s.acc[K.NODE_NULL] += 1
        return ProposalOutcome(NodeMove(int(i), s.compact_label(level, r), level), 0.0, 0.0, None,
                               _version=state.version)
    new = P.nr[level, tgt] == 0
    s.acc[K.NODE_TRY] += 1
    dp, lpf, lpr, r = K.node_eval(s.Gr, P, s.iv, s.fv, level, v, tgt, m, wself, ktot)
    move = NodeMove(int(i), None if new else s.compact_label(level, tgt), level)
    if dp == -math.inf:
        return ProposalOutcome(move, lpf, -math.inf, -math.inf, _version=state.version)
    K.apply_node(s.Gr, P, s.iv, level, v, tgt, r, m, wself, ktot)
    info = ("node", level, v, r, tgt, m, wself, ktot, dp)
    if new:
        move = NodeMove(int(i), None, level)
    return ProposalOutcome(move, float(lpf), float(lpr), float(dp), _info=info, _version=state.version)


def propose_entry_update(state, rng=None):
    """Draw a pair and a unit change of its multiplicity and evaluate it.

    Under the block-model priors pairs are chosen through the current block
    structure; under the fully random prior a uniformly chosen pair is
    toggled."""
    rng = state.rng if rng is None else rng
    s = state.s
    s.acc[K.ENTRY_TRY] += 1
    if state.prior == "er":
        N = state.node_count
        i = int(rng.integers(0, N))
        j = int(rng.integers(0, N - 1))
        j += j >= i
        i, j = min(i, j), max(i, j)
        up = s.A[i, j] == 0
        E = s.edge_count
        dp = K.er_logprior(N, E + (1 if up else -1)) - K.er_logprior(N, E)
        dl = K.lik_flip_delta(s.M, s.iv, s.fv, i, j, up)
        return ProposalOutcome(EntryMove(i, j, 1 if up else -1), 0.0, 0.0, float(dp + dl),
                               _info=("er", i, j, up, dp, dl), _version=state.version)
    s.ensure()
    i, j, gij, delta = K.entry_propose(s.Gr, s.P, s.iv, rng)
    move = EntryMove(int(i), int(j), int(delta))
    cap = s.iv[K.MCAP_]
    lpf = K.log_psel(s.Gr, s.P, s.iv, i, j) - (math.log(2) if gij > 0 else 0.0)
    if cap >= 0 and gij + delta > cap:
        return ProposalOutcome(move, float(lpf), -math.inf, -math.inf, _version=state.version)
    dp, dl = K.entry_eval(s.Gr, s.P, s.M, s.iv, s.fv, i, j, delta, s.ekg, s.ekk)
    lpr = K.log_psel(s.Gr, s.P, s.iv, i, j) - (math.log(2) if gij + delta > 0 else 0.0)
    K.apply_entry(s.Gr, s.P, s.iv, i, j, -delta)
    return ProposalOutcome(move, float(lpf), float(lpr), float(dp + dl),
                           _info=("entry", i, j, gij, delta, dp, dl), _version=state.version)


def propose_hyperparams(state, rng=None):
    """Log-space random walk on all four hyperparameters, reflected at the
    domain bounds.  Proposal densities are reported with respect to the
    hyperparameters themselves."""
    if state.model != "hetero":
        raise ValueError("hyperparameter moves need the heterogeneous model")
    rng = state.rng if rng is None else rng
    fv = state.s.fv
    state.s.acc[K.HYPER_TRY] += 1
    old = np.array(fv[K.ALPHA_:K.NU_ + 1])
    lo, hi = math.log(fv[K.HLO_]), math.log(fv[K.HHI_])
    step = fv[K.HSTEP_]
    if step == 0:
        new = old.copy()
    else:
        new = np.array([math.exp(K.reflect(math.log(v) + step * rng.standard_normal(), lo, hi)) for v in old])
    before = K.ll_hetero(state.s.M, state.s.iv, *old)
    after = K.ll_hetero(state.s.M, state.s.iv, *new)
    return ProposalOutcome(HyperMove(tuple(map(float, new))), float(-np.log(new).sum()),
                           float(-np.log(old).sum()), float(after - before),
                           _info=("hyper", new), _version=state.version)


def mh_accept(state, outcome, rng=None):
    """Metropolis-Hastings decision; applies the move on acceptance."""
    if outcome._version != state.version:
        raise RuntimeError("outcome was proposed for an earlier state")
    rng = state.rng if rng is None else rng
    if outcome.delta is None:
        outcome.accepted = True
        return True
    la = outcome.log_ratio
    if not (la >= 0 or math.log(rng.random()) < la):
        outcome.accepted = False
        return False
    s = state.s
    info = outcome._info
    kind = info[0]
    if kind == "node":
        _, level, v, r, tgt, m, wself, ktot, dp = info
        m2, w2, k2 = K.gather(s.Gr, s.P, s.iv, level, v)
        K.apply_node(s.Gr, s.P, s.iv, level, v, r, tgt, m2, w2, k2)
        s.fv[K.LP_] += dp
        s.acc[K.NODE_ACC] += 1
    elif kind == "entry":
        _, i, j, gij, delta, dp, dl = info
        K.apply_entry(s.Gr, s.P, s.iv, i, j, delta)
        K.entry_commit(s.M, s.iv, s.fv, i, j, gij, delta, dp, dl)
        s.acc[K.ENTRY_ACC] += 1
    elif kind == "er":
        _, i, j, up, dp, dl = info
        s.A[i, j] = s.A[j, i] = 1 if up else 0
        s.iv[K.E_] += 1 if up else -1
        K.lik_flip_commit(s.M, s.iv, i, j, up)
        s.fv[K.LP_] += dp
        if s.iv[K.MODE_] == K.MODE_EXTRINSIC:
            s.fv[K.LL_] += dl
        else:
            s.fv[K.LL_] = K.loglik_full(s.M, s.iv, s.fv)
        s.acc[K.ENTRY_ACC] += 1
    elif kind == "hyper":
        s.fv[K.ALPHA_:K.NU_ + 1] = info[1]
        s.fv[K.LL_] = K.loglik_full(s.M, s.iv, s.fv)
        s.acc[K.HYPER_ACC] += 1
    state.version += 1
    outcome.accepted = True
    return True


# ---------------------------------------------------------------------------
# chains


@dataclass
class ChainDiagnostics:
    burn_in: int
    sweeps: int
    converged: bool
    acceptance: dict
    trace: list
    log_posterior: float
    accumulator: object = None


def _trace_row(state, sweep, acc_before):
    a = state.s.acc - acc_before
    rate = lambda x, t: float(x) / t if t else math.nan
    return {"sweep": sweep, "log_posterior": state.log_posterior(),
            "accept_node": rate(a[K.NODE_ACC], a[K.NODE_TRY]),
            "accept_entry": rate(a[K.ENTRY_ACC], a[K.ENTRY_TRY]),
            "accept_hyper": rate(a[K.HYPER_ACC], a[K.HYPER_TRY]),
            "groups": ";".join(map(str, state.group_counts())), "latent_edges": state.latent_edge_count}


def burn_in(state, window=50, max_sweeps=5000, entry_ratio=1.0, trace=None, fixed=None):
    """Discard the start of the chain.

    With ``fixed`` that many sweeps are run.  Otherwise sweeps run in windows
    of ``window`` until the mean log posterior of the last window differs
    from the previous one by less than twice their pooled standard error, or
    ``max_sweeps`` is reached.  Returns ``(sweeps, converged)``."""
    done = 0
    prev = None
    target = fixed if fixed is not None else max_sweeps
    while done < target:
        step = min(window, target - done)
        vals = []
        state.refresh_step_counts(entry_ratio)
        for _ in range(step):
            before = state.s.acc.copy()
            state.sweep(1)
            done += 1
            vals.append(state.log_posterior())
            if trace is not None:
                trace.append(_trace_row(state, -(done), before))
        if fixed is not None:
            continue
        cur = np.array(vals)
        if prev is not None and len(cur) > 1:
            se = math.sqrt(prev.var(ddof=1) / len(prev) + cur.var(ddof=1) / len(cur))
            if abs(cur.mean() - prev.mean()) < 2 * se:
                return done, True
        prev = cur
    return done, fixed is not None


def make_chain(config, data, chain=0):
    """Build the chain for ``config`` with an independent stream per chain index."""
    seed = np.random.SeedSequence([int(config.seed), int(chain)])
    return ChainState(data, model=config.model, prior=config.prior, hyper=config.hyper,
                      rng=np.random.default_rng(seed), d=config.d, eps=config.eps, init=config.init,
                      partition=config.init_partition,
                      max_groups=config.max_groups, multiplicity_cap=config.multiplicity_cap,
                      fixed_edges=config.fixed_edges, depth=config.depth, hyper_step=config.hyper_step)


def run_chain(config, data, sink=None, chain=0, state=None, **sink_options):
    """Burn in, then sample ``config.sweeps`` sweeps and hand every
    ``config.thin``-th state to ``sink.add``.

    ``sink`` defaults to a fresh :class:`~netrecon.estimators.MarginalAccumulator`
    built with ``sink_options`` (``reference``, ``truth``, ``keep_samples``).
    """
    from .estimators import MarginalAccumulator

    if isinstance(config, dict):
        config = RunConfig(**config)
    if state is None:
        state = make_chain(config, data, chain)
    if sink is None:
        sink = MarginalAccumulator(state.node_count, observables=config.observables, **sink_options)
    trace = []
    fixed = None if config.burn_in == "auto" else int(config.burn_in)
    b, converged = burn_in(state, config.burn_window, config.burn_max, config.entry_ratio, trace, fixed)
    state.refresh_step_counts(config.entry_ratio)
    acc0 = state.s.acc.copy()
    for k in range(config.sweeps):
        before = state.s.acc.copy()
        state.sweep(1)
        trace.append(_trace_row(state, k, before))
        if k % config.thin == 0:
            sink.add(state)
    a = state.s.acc - acc0
    rate = lambda x, t: float(x) / t if t else math.nan
    acceptance = {"node": rate(a[K.NODE_ACC], a[K.NODE_TRY]), "entry": rate(a[K.ENTRY_ACC], a[K.ENTRY_TRY]),
                  "hyper": rate(a[K.HYPER_ACC], a[K.HYPER_TRY])}
    return ChainDiagnostics(b, config.sweeps, converged, acceptance, trace, state.log_posterior(), sink)


def _chain_job(args):
    config, data, chain, options = args
    return run_chain(config, data, chain=chain, **options)


def run_chains(config, data, jobs=1, **sink_options):
    """Run ``config.chains`` chains and merge their accumulators in chain order.

    With ``jobs > 1`` chains run in worker processes; results do not depend
    on ``jobs`` since every chain owns its random stream."""
    work = [(config, data, c, sink_options) for c in range(config.chains)]
    if jobs > 1 and config.chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(jobs, config.chains)) as ex:
            diags = list(ex.map(_chain_job, work))
    else:
        diags = [_chain_job(w) for w in work]
    acc = diags[0].accumulator
    for d in diags[1:]:
        acc = acc.merge(d.accumulator)
    return acc, diags
