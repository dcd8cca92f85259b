"""``netrecon`` command line: reconstruct, simulate, sweep and estimate.

Exit codes are 0 on success, 1 for usage errors, 2 for data errors and 3
for numerical failures.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import fields

import numpy as np

from . import experiments as ex
from .config import RunConfig, coerce
from .estimators import MarginalAccumulator, degree_distribution_estimate, mmp_estimate
from .graph import AdjacencyView, similarity
from .io import DataError, parse_measurement_file, parse_q_file, read_graph, write_measurement_file
from .mcmc import run_chains

log = logging.getLogger("netrecon")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_flags(p):
    p.add_argument("--config", help="key = value file; flags override it")
    for f in fields(RunConfig):
        if f.name in ("extra", "data", "output"):
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type is bool:
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent chains")


def _config(args, **extra):
    over = {f.name: getattr(args, f.name, None) for f in fields(RunConfig) if f.name not in ("extra",)}
    over.update(extra)
    try:
        if args.config:
            return RunConfig.from_file(args.config, **over)
        return RunConfig(**coerce({k: v for k, v in over.items() if v is not None}))
    except (ValueError, TypeError) as e:
        raise UsageError(f"invalid configuration: {e}") from None


def build_parser():
    p = _Parser(prog="netrecon", description="Network reconstruction from noisy measurements.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("reconstruct", help="sample the posterior and write marginals and a report")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="measurement file")
    src.add_argument("--q-file", help="edge-probability file (extrinsic model)")
    r.add_argument("--output", "-o", default=".", help="output directory")
    r.add_argument("--save-samples", action="store_true", help="keep every sampled edge set in samples.npz")
    _add_config_flags(r)

    s = sub.add_parser("simulate", help="simulate noisy measurements of a graph")
    s.add_argument("--graph", required=True, help="graph file of the true network")
    s.add_argument("--p", type=float, default=0.0)
    s.add_argument("--q", type=float, default=None, help="spurious rate; density-matched to p when omitted")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--f", type=float, default=0.0, help="fraction of unmeasured pairs")
    s.add_argument("--hide", choices=("edges", "nonedges"), default="edges")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", "-o", required=True, help="measurement file to write")

    w = sub.add_parser("sweep", help="run a synthetic protocol over a parameter grid")
    w.add_argument("--protocol", choices=ex.PROTOCOLS, required=True)
    w.add_argument("--graph", help="true network (fig5/fig6/fig8); a DC-SBM graph is drawn otherwise")
    w.add_argument("--N", type=int, default=500)
    w.add_argument("--B", type=int, default=4)
    w.add_argument("--avg-k", type=float, default=10.0)
    w.add_argument("--values", type=float, nargs="+", default=[0.1, 0.2, 0.3])
    w.add_argument("--ns", type=int, nargs="+", default=[1])
    w.add_argument("--replicates", type=int, default=1)
    w.add_argument("--mode", choices=ex.FIG8_MODES, default="edge-denoise")
    w.add_argument("--noise-p", type=float, default=0.0, help="fig9 missing rate")
    w.add_argument("--noise-q", type=float, default=0.0, help="fig9 spurious rate")
    w.add_argument("--relative-eps", action="store_true", help="fig9 values are multiples of the threshold")
    w.add_argument("--free-groups", action="store_true", help="fig9 without the known-B cap")
    w.add_argument("--output", "-o", required=True, help="CSV file to write")
    _add_config_flags(w)

    e = sub.add_parser("estimate", help="re-reduce a saved samples.npz")
    e.add_argument("--samples", required=True)
    e.add_argument("--discard", type=int, default=0, help="drop this many leading kept samples")
    e.add_argument("--output", "-o", default=".")
    return p


# ---------------------------------------------------------------------------
# outputs


def write_marginals(acc, path):
    i, j, pi = acc.marginals()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "pi"])
        for a, b, v in zip(i.tolist(), j.tolist(), pi.tolist()):
            w.writerow([a, b, repr(v)])


def write_trace(diags, path):
    cols = ["chain", "sweep", "log_posterior", "accept_node", "accept_entry", "accept_hyper", "groups",
            "latent_edges"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for c, d in enumerate(diags):
            for row in d.trace:
                w.writerow({"chain": c, **{k: _fmt(v) for k, v in row.items()}})


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _clean(o):
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, np.generic):
        return _clean(o.item())
    return o


def _mean_sd(acc, name):
    m, s = acc.summary(name)
    return {"mean": m, "sd": s}


def build_report(acc, config=None, diags=(), reference=None):
    """Posterior means and sds of the recorded quantities plus the MMP network."""
    A = mmp_estimate(acc)
    er = acc.error_rate_summary()
    est = {"edges": _mean_sd(acc, "edges"), "effective_groups": _mean_sd(acc, "effective_groups"),
           "groups": _mean_sd(acc, "groups"),
           "p": {"mean": er["p"][0], "sd": er["p"][1]}, "q": {"mean": er["q"][0], "sd": er["q"][1]}}
    for name in ("similarity", "clustering", "assortativity", "alpha", "beta", "mu", "nu"):
        if name in acc.scalars:
            est[name] = _mean_sd(acc, name)
    report = {"samples": acc.samples, "estimated": est,
              "mmp": {"edge_count": A.edge_count, "edges": sorted(map(list, A.edges))}}
    if reference is not None:
        report["mmp"]["similarity_to_input"] = similarity(A, reference)
    if config is not None:
        report["config"] = config.to_dict()
    if diags:
        report["chains"] = [{"burn_in": d.burn_in, "converged": d.converged, "sweeps": d.sweeps,
                             "acceptance": d.acceptance, "final_log_posterior": d.log_posterior} for d in diags]
    return _clean(report)


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands


def _input_network(data):
    if hasattr(data, "positive_pairs"):
        return data.positive_pairs()
    keep = frozenset(p for p, q in data.values.items() if q > 0.5)
    if data.default_q is not None and data.default_q > 0.5:
        N = data.node_count
        keep = frozenset((i, j) for i in range(N) for j in range(i + 1, N) if data.values.get((i, j), 1) > 0.5)
    return AdjacencyView(data.node_count, keep)


def cmd_reconstruct(args):
    try:
        data = parse_q_file(args.q_file) if args.q_file else parse_measurement_file(args.data)
    except OSError as e:
        raise DataError(str(e)) from None
    model = "extrinsic" if args.q_file else None
    config = _config(args, model=model or args.model, data=args.q_file or args.data, output=args.output)
    if (config.model == "extrinsic") != bool(args.q_file):
        raise UsageError("the extrinsic model takes --q-file, the others --data")
    if config.model == "hetero" and not any(n > 1 for n, _ in data.overrides.values()) and data.default_n <= 1:
        log.warning("the heterogeneous model is uninformative without pairs measured more than once")
    reference = _input_network(data)
    acc, diags = run_chains(config, data, jobs=args.jobs, reference=reference, keep_samples=args.save_samples)
    os.makedirs(args.output, exist_ok=True)
    write_marginals(acc, os.path.join(args.output, "marginals.csv"))
    write_trace(diags, os.path.join(args.output, "trace.csv"))
    _write_json(build_report(acc, config, diags, reference), os.path.join(args.output, "report.json"))
    acc.save(os.path.join(args.output, "samples.npz"))
    return EXIT_OK


def cmd_simulate(args):
    try:
        A = read_graph(args.graph)
    except OSError as e:
        raise DataError(str(e)) from None
    q = ex.density_matched_q(A, args.p) if args.q is None else args.q
    spec = ex.NoiseSpec(p=args.p, q=q, n=args.n, f=args.f, hide=args.hide)
    D = ex.simulate_measurement(A, spec, np.random.default_rng(args.seed))
    write_measurement_file(D, args.output)
    return EXIT_OK


def cmd_sweep(args):
    config = _config(args)
    network = None
    if args.graph:
        try:
            network = read_graph(args.graph)
        except OSError as e:
            raise DataError(str(e)) from None
    settings = ex.SweepSettings(N=args.N, B=args.B, avg_k=args.avg_k, values=tuple(args.values),
                                ns=tuple(args.ns), replicates=args.replicates, mode=args.mode,
                                p=args.noise_p, q=args.noise_q, relative_eps=args.relative_eps,
                                known_groups=not args.free_groups, network=network)
    rows = ex.run_sweep(args.protocol, settings, config, rng=config.seed)
    meta = {"protocol": args.protocol, "settings": settings, "config": config.to_dict()}
    ex.write_rows(rows, args.output, metadata=meta)
    return EXIT_OK


def cmd_estimate(args):
    try:
        acc = MarginalAccumulator.load(args.samples)
    except (OSError, KeyError, ValueError) as e:
        raise DataError(f"cannot read samples: {e}") from None
    if args.discard:
        if acc.kept is None:
            raise UsageError("--discard needs samples saved with --save-samples")
        acc = _reaccumulate(acc, args.discard)
    os.makedirs(args.output, exist_ok=True)
    write_marginals(acc, os.path.join(args.output, "marginals.csv"))
    report = build_report(acc)
    if acc.kept:
        report["degree_distribution"] = degree_distribution_estimate(acc.sample_graphs()).tolist()
    _write_json(report, os.path.join(args.output, "report.json"))
    return EXIT_OK


def _reaccumulate(acc, discard):
    if discard >= len(acc.kept):
        raise UsageError("--discard removes every sample")
    out = MarginalAccumulator(acc.node_count, keep_samples=True)
    for k in acc.kept[discard:]:
        out.add_edges(k)
        out.kept.append(k)
    for name, v in acc.scalars.items():
        if len(v) == len(acc.kept):
            out.scalars[name] = v[discard:]
    return out


COMMANDS = {"reconstruct": cmd_reconstruct, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "estimate": cmd_estimate}


def main(argv=None):
    logging.basicConfig(format="netrecon: %(levelname)s: %(message)s", level=logging.INFO)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.DEBUG)
        return COMMANDS[args.command](args)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except FloatingPointError as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC
    except (DataError, ValueError, TypeError) as e:
        log.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
