"""Synthetic protocols: noisy measurement of a known network, planted
partitions, detectability thresholds and grid sweeps that write CSV tables."""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .config import RunConfig
from .estimators import UndefinedObservable, compute_observable, mmp_estimate
from .graph import AdjacencyView, MeasurementData, similarity


@dataclass(frozen=True)
class NoiseSpec:
    """Missing rate ``p``, spurious rate ``q`` and ``n`` measurements per pair.

    A fraction ``f`` of ``round(f * E)`` pairs of class ``hide`` (``"edges"``
    or ``"nonedges"``) is left unmeasured."""

    p: float = 0.0
    q: float = 0.0
    n: int = 1
    f: float = 0.0
    hide: str = "edges"

    def __post_init__(self):
        for name in ("p", "q", "f"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.hide not in ("edges", "nonedges"):
            raise ValueError("hide must be 'edges' or 'nonedges'")


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _pair_index(i, j, N):
    # position of (i < j) in row-major upper-triangle order
    return i * (2 * N - i - 1) // 2 + (j - i - 1)


def _pair_from_index(k, N):
    k = np.asarray(k, dtype=np.int64)
    i = (2 * N - 1 - np.sqrt((2 * N - 1) ** 2 - 8 * k.astype(float))) // 2
    i = i.astype(np.int64)
    # fix rounding at row boundaries
    for _ in range(2):
        start = _pair_index(i, i + 1, N)
        i = np.where(start > k, i - 1, i)
        nxt = _pair_index(i + 1, i + 2, N)
        i = np.where((nxt <= k) & (i + 1 < N - 1), i + 1, i)
    j = k - _pair_index(i, i + 1, N) + i + 1
    return i, j


def _sample_nonedges(N, edge_idx, count, rng, exclude=None):
    """``count`` distinct pair indices that are not edges (nor in ``exclude``)."""
    P = N * (N - 1) // 2
    taken = set(edge_idx.tolist())
    if exclude is not None:
        taken |= set(exclude.tolist())
    avail = P - len(taken)
    if count > avail:
        raise ValueError("not enough nonedges")
    if count > avail // 4:
        allk = np.setdiff1d(np.arange(P, dtype=np.int64), np.fromiter(taken, np.int64, len(taken)))
        return rng.choice(allk, size=count, replace=False)
    out = set()
    while len(out) < count:
        cand = rng.integers(0, P, size=2 * (count - len(out)) + 8)
        for c in cand.tolist():
            if c not in taken and c not in out:
                out.add(c)
                if len(out) == count:
                    break
    return np.fromiter(out, np.int64, count)


def _positive_binomial(n, q, size, rng):
    """Binomial(n, q) draws conditioned on being positive."""
    out = rng.binomial(n, q, size=size)
    bad = out == 0
    while bad.any():
        out[bad] = rng.binomial(n, q, size=int(bad.sum()))
        bad = out == 0
    return out


def simulate_measurement(Astar, spec, rng=None):
    """Noisy measurements of ``Astar``: ``x ~ Bin(n, 1 - p)`` on edges and
    ``x ~ Bin(n, q)`` elsewhere, after hiding the selected pairs.

    Only pairs with ``x > 0`` or ``n`` differing from the default are stored,
    so the cost is linear in the number of edges and spurious hits."""
    rng = _rng(rng)
    N = Astar.node_count
    n = int(spec.n)
    edges = Astar.edge_array()
    E = len(edges)
    eidx = _pair_index(edges[:, 0], edges[:, 1], N) if E else np.zeros(0, np.int64)
    nh = int(round(spec.f * E))
    hidden_e = np.zeros(0, np.int64)
    hidden_n = np.zeros(0, np.int64)
    if nh:
        if spec.hide == "edges":
            hidden_e = rng.choice(eidx, size=nh, replace=False)
        else:
            hidden_n = _sample_nonedges(N, eidx, nh, rng)
    ov = {}
    hid = set(hidden_e.tolist())
    x_e = rng.binomial(n, 1.0 - spec.p, size=E)
    for (i, j), k, x in zip(edges.tolist(), eidx.tolist(), x_e.tolist()):
        if k in hid:
            ov[(i, j)] = (0, 0)
        elif x:
            ov[(i, j)] = (n, x)
    for k in hidden_n.tolist():
        i, j = _pair_from_index(np.array([k]), N)
        ov[(int(i[0]), int(j[0]))] = (0, 0)
    if spec.q > 0 and n > 0:
        free = N * (N - 1) // 2 - E - len(hidden_n)
        hit = 1.0 - (1.0 - spec.q) ** n
        K = int(rng.binomial(free, hit))
        if K:
            idx = _sample_nonedges(N, eidx, K, rng, exclude=hidden_n)
            xs = _positive_binomial(n, spec.q, K, rng)
            ii, jj = _pair_from_index(idx, N)
            for i, j, x in zip(ii.tolist(), jj.tolist(), xs.tolist()):
                ov[(i, j)] = (n, x)
    return MeasurementData(N, n, ov)


def density_matched_q(Astar, p):
    """Spurious rate that keeps the expected measured edge count at ``E``."""
    N = Astar.node_count
    E = Astar.edge_count
    P = N * (N - 1) // 2
    if E >= P:
        raise ValueError("density matching is undefined for a complete graph")
    return p * E / (P - E)


def _check_prob(name, v):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"infeasible parameters: {name} = {v} outside [0, 1]")


def planted_partition_probabilities(N, B, avg_k, eps):
    """``(w_in, w_out)`` with ``N (w_in - w_out) = eps`` and mean degree ``avg_k``."""
    w_out = (avg_k - eps / B) / N
    w_in = w_out + eps / N
    _check_prob("w_in", w_in)
    _check_prob("w_out", w_out)
    return w_in, w_out


def _bernoulli_block(n1, n2, w, rng, same):
    P = n1 * (n1 - 1) // 2 if same else n1 * n2
    m = int(rng.binomial(P, w))
    if m == 0:
        return np.zeros((0, 2), np.int64)
    k = rng.choice(P, size=m, replace=False) if m < P else np.arange(P)
    if same:
        i, j = _pair_from_index(k, n1)
        return np.column_stack([i, j])
    return np.column_stack([k // n2, k % n2])


def planted_partition_sample(N, B, avg_k, eps, rng=None):
    """Planted partition graph with ``B`` equal groups; returns ``(A, b)``."""
    if N % B:
        raise ValueError("N must be divisible by B")
    rng = _rng(rng)
    w_in, w_out = planted_partition_probabilities(N, B, avg_k, eps)
    n = N // B
    b = np.repeat(np.arange(B), n)
    parts = []
    for r in range(B):
        for s in range(r, B):
            e = _bernoulli_block(n, n, w_in if r == s else w_out, rng, r == s)
            parts.append(e + np.array([r * n, s * n]))
    e = np.concatenate(parts) if parts else np.zeros((0, 2), np.int64)
    return AdjacencyView.from_edges(N, map(tuple, e.tolist())), b


def dcsbm_sample(N, B, avg_k, rng=None, assortativity=0.9, degree_shape=1.5):
    """Degree-corrected SBM graph with ``B`` equal groups and Pareto-like
    degree propensities, with exactly ``round(avg_k * N / 2)`` edges.

    Edges are drawn by picking a block pair and then one endpoint in each
    block in proportion to its propensity; repeated pairs and self-loops
    are discarded and redrawn until the target count is met.  Returns
    ``(A, b)``."""
    rng = _rng(rng)
    b = np.repeat(np.arange(B), -(-N // B))[:N]
    theta = (1.0 + rng.pareto(degree_shape, size=N))
    for r in range(B):
        m = b == r
        theta[m] /= theta[m].sum()
    target = int(round(avg_k * N / 2))
    if target > N * (N - 1) // 2:
        raise ValueError("avg_k too large for a simple graph")
    # a fraction `assortativity` of the edges falls inside groups
    if B == 1:
        w = np.ones((1, 1))
    else:
        w = np.full((B, B), (1 - assortativity) / (B * (B - 1) / 2))
        np.fill_diagonal(w, assortativity / B)
    iu = np.triu_indices(B)
    wb = w[iu] / w[iu].sum()
    members = [np.flatnonzero(b == r) for r in range(B)]
    pairs = set()
    while len(pairs) < target:
        counts = rng.multinomial(target - len(pairs), wb)
        for r, s, m in zip(iu[0].tolist(), iu[1].tolist(), counts.tolist()):
            if m == 0:
                continue
            u = rng.choice(members[r], size=m, p=theta[members[r]])
            v = rng.choice(members[s], size=m, p=theta[members[s]])
            for i, j in zip(u.tolist(), v.tolist()):
                if i != j:
                    pairs.add((min(i, j), max(i, j)))
    return AdjacencyView(N, frozenset(pairs)), b


def detectability_threshold(N, B, avg_k, p=0.0, q=0.0):
    """Critical ``N |w_in - w_out|`` below which planted groups cannot be found."""
    g = 1.0 - p - q
    if g <= 0:
        raise ValueError("need p + q < 1")
    return B * math.sqrt(g * avg_k + q * N) / g


def effective_sbm_probability(omega, p, q):
    """Connection probability seen through one noisy measurement."""
    for name, v in (("omega", omega), ("p", p), ("q", q)):
        _check_prob(name, v)
    return (1.0 - p - q) * omega + q


# ---------------------------------------------------------------------------
# reconstruction and sweeps


def reconstruct(data, config, reference=None, truth=None, jobs=1):
    """Run the chains of ``config`` on ``data``; returns ``(accumulator, diagnostics)``.

    ``reference`` and ``truth`` make the accumulator track per-sample
    similarity to a known network and NMI to a known partition."""
    from .mcmc import run_chains

    return run_chains(config, data, jobs=jobs, reference=reference, truth=truth)


def _observables(A):
    out = {"clustering": compute_observable(A, "clustering")}
    try:
        out["assortativity"] = compute_observable(A, "assortativity")
    except UndefinedObservable:
        out["assortativity"] = math.nan
    return out


def _row_for(Astar, D, config, b=None):
    acc, diags = reconstruct(D, config, reference=Astar, truth=b)
    e_mean, e_sd = acc.summary("edges")
    er = acc.error_rate_summary()
    row = {"similarity_mmp": similarity(mmp_estimate(acc), Astar),
           "similarity": acc.summary("similarity")[0], "similarity_sd": acc.summary("similarity")[1],
           "similarity_data": similarity(D.positive_pairs(), Astar),
           "edges_true": Astar.edge_count, "edges_mean": e_mean, "edges_sd": e_sd,
           "p_hat": er["p"][0], "p_sd": er["p"][1], "q_hat": er["q"][0], "q_sd": er["q"][1],
           "groups_mean": acc.summary("groups")[0], "burn_in": sum(d.burn_in for d in diags)}
    if b is not None:
        row["nmi"], row["nmi_sd"] = acc.summary("nmi")
    if config.observables:
        for k, v in _observables(Astar).items():
            row[f"{k}_true"] = v
            row[f"{k}_mean"], row[f"{k}_sd"] = acc.summary(k)
    return row


@dataclass
class SweepSettings:
    """Grid and scale for :func:`run_sweep`.

    ``network`` is the true graph for the fig5/fig6/fig8 protocols; when it
    is ``None`` a DC-SBM graph of ``N`` nodes, ``B`` groups and mean degree
    ``avg_k`` is drawn.  ``values`` is the swept parameter (``p`` for
    fig5/fig6 and the de-noising modes of fig8, ``f`` for completion,
    ``eps`` for fig9), ``ns`` the measurement counts."""

    N: int = 500
    B: int = 4
    avg_k: float = 10.0
    values: tuple = (0.1, 0.2, 0.3)
    ns: tuple = (1,)
    replicates: int = 1
    mode: str = "edge-denoise"
    p: float = 0.0
    q: float = 0.0
    relative_eps: bool = False
    known_groups: bool = True
    network: object = None


PROTOCOLS = ("fig5", "fig6", "fig8", "fig9")
FIG8_MODES = ("edge-denoise", "nonedge-denoise", "edge-complete", "nonedge-complete")


def _fig8_spec(Astar, mode, v, n):
    if mode == "edge-denoise":
        return NoiseSpec(p=v, q=0.0, n=n)
    if mode == "nonedge-denoise":
        # same expected number of affected nonedges as edges at missing rate v
        return NoiseSpec(p=0.0, q=density_matched_q(Astar, v), n=n)
    if mode == "edge-complete":
        return NoiseSpec(n=n, f=v, hide="edges")
    if mode == "nonedge-complete":
        return NoiseSpec(n=n, f=v, hide="nonedges")
    raise ValueError(f"unknown fig8 mode {mode!r}; expected one of {FIG8_MODES}")


def run_sweep(protocol, settings, config=None, rng=None):
    """Run one protocol over its grid; returns a list of row dicts sorted by grid key.

    fig5 and fig6 sweep ``p`` with density-matched ``q`` over ``ns``; fig8
    covers de-noising and completion (``settings.mode``); fig9 samples
    planted partitions over ``eps`` at noise ``(settings.p, settings.q)``
    and records NMI.  Every grid point draws its own network and data from
    a child of ``rng``, so rows do not depend on evaluation order."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    config = config or RunConfig()
    root = np.random.SeedSequence(int(rng) if rng is not None and not isinstance(rng, np.random.Generator)
                                  else int(_rng(rng).integers(2 ** 63)))
    grid = [(v, n, r) for v in settings.values for n in settings.ns for r in range(settings.replicates)]
    children = root.spawn(len(grid))
    rows = []
    for (v, n, r), ss in zip(grid, children):
        g = np.random.default_rng(ss)
        cfg = replace(config, seed=int(g.integers(2 ** 31)))
        b = None
        if protocol == "fig9":
            thr = detectability_threshold(settings.N, settings.B, settings.avg_k)
            eps = v * thr if settings.relative_eps else v
            Astar, b = planted_partition_sample(settings.N, settings.B, settings.avg_k, eps, g)
            spec = NoiseSpec(p=settings.p, q=settings.q, n=n)
            if settings.known_groups:
                cfg = replace(cfg, max_groups=settings.B)
        else:
            Astar = settings.network
            if Astar is None:
                Astar, _ = dcsbm_sample(settings.N, settings.B, settings.avg_k, g)
            if protocol == "fig8":
                spec = _fig8_spec(Astar, settings.mode, v, n)
            else:
                spec = NoiseSpec(p=v, q=density_matched_q(Astar, v), n=n)
        D = simulate_measurement(Astar, spec, g)
        row = {"protocol": protocol, "value": v, "n": n, "replicate": r, "p": spec.p, "q": spec.q,
               "f": spec.f, "seed": cfg.seed}
        if protocol == "fig8":
            row["mode"] = settings.mode
        if protocol == "fig9":
            row["eps"] = eps
            row["threshold"] = thr
            row["threshold_noisy"] = detectability_threshold(settings.N, settings.B, settings.avg_k,
                                                             settings.p, settings.q)
        row.update(_row_for(Astar, D, cfg, b))
        rows.append(row)
    rows.sort(key=lambda r: (r["value"], r["n"], r["replicate"]))
    return rows


def write_rows(rows, path, metadata=None):
    """Write rows as CSV and ``metadata`` next to it as ``<path>.json``."""
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)
    if metadata is not None:
        with open(os.fspath(path) + ".json", "w") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, AdjacencyView):
        return {"nodes": o.node_count, "edges": o.edge_count}
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    if isinstance(o, np.generic):
        return o.item()
    return str(o)
