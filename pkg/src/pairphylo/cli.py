"""Command-line interface: ``pairphylo simulate | fit | evaluate | gof | diag``."""

import argparse
import logging
import math
import os
import sys
import warnings

import numpy as np

from . import __version__
from . import io as pio
from .inference import gof_rb, psrf, reconstruction_errors, summarize
from .model import Hyperparameters
from .phylogeny import format_tree, parse_tree
from .sampler import run
from .simulate import SimulationSpec, simulate

EXIT_USAGE = 2
EXIT_DATA = 3

log = logging.getLogger("pairphylo")


class UsageError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _out_path(args, default_name):
    """``--out`` names a directory for multi-file commands, else a file."""
    return args.out if args.out else default_name


def _merged(args, names, base):
    """Config precedence: explicit flags over the config file over `base`."""
    values = dict(base)
    if args.config:
        values.update(pio.read_config(args.config))
    for key, attr in names.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return values


# -- commands -----------------------------------------------------------------

SIM_FLAGS = {"K": "K", "C": "C", "n_samples": "samples", "depth_mean": "depth",
             "depth_sd": "depth_sd", "v2": "v2", "v3": "v3", "d1": "d1",
             "beta": "beta", "lam": "lam", "tree": "tree"}


def cmd_simulate(args):
    values = _merged(args, SIM_FLAGS, {})
    if "tree" in values and isinstance(values["tree"], str):
        values["tree"] = parse_tree(values["tree"])
    try:
        spec = pio.dataclass_from_mapping(SimulationSpec, values, "simulation")
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid simulation spec: {exc}") from None
    truth, counts = simulate(spec)
    os.makedirs(args.out, exist_ok=True)
    counts_path = os.path.join(args.out, "counts.tsv")
    truth_path = os.path.join(args.out, "truth.json")
    pio.write_counts(counts_path, counts)
    effective = {k: v for k, v in vars(spec).items() if k not in ("Z", "w", "depth")}
    pio.write_truth(truth_path, truth.tree, truth.state, {"config": _clean(effective)})
    print(f"wrote {counts_path} and {truth_path} (tree {format_tree(truth.tree)})")


FIT_FLAGS = {"n_iter": "n_iter", "burn_in": "burn_in", "c_min": "c_min", "c_max": "c_max"}


def _empty_report(hyper):
    return {"n_draws": 0, "trees": [], "mode": None, "ties": [], "map": None,
            "p_tilde_interval": None, "config": _clean(hyper.to_dict()), "acceptance": {}}


def cmd_fit(args):
    values = _merged(args, FIT_FLAGS, {})
    if "burn_in" not in values and "n_iter" in values:
        values["burn_in"] = min(Hyperparameters().burn_in, values["n_iter"] * 3 // 8)
    try:
        hyper = pio.dataclass_from_mapping(Hyperparameters, values)
        hyper.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    counts = pio.read_counts(args.counts)
    os.makedirs(args.out, exist_ok=True)
    output = run(counts, hyper)
    meta = {"config": _clean(hyper.to_dict())}
    pio.write_trace(os.path.join(args.out, "trace.csv"), output.trace, meta)
    pio.save_draws(os.path.join(args.out, "draws.npz"), output)
    report_path = os.path.join(args.out, "report.json")
    if output.n_draws == 0:
        pio.write_json(report_path, _empty_report(hyper))
        print("no posterior draws; wrote empty report")
        return
    report = summarize(output, counts=counts)
    doc = report.to_dict()
    doc["config"] = meta["config"]
    doc["acceptance"] = _clean(output.acceptance)
    doc["sample_ids"] = counts.sample_ids
    doc["pair_ids"] = counts.pair_ids
    pio.write_json(report_path, _clean(doc))
    p = report.tree_probs[report.mode]
    print(f"modal tree {format_tree(report.tree)} (C={report.C}, posterior {p:.3f})")


def _report_estimate(path):
    doc = pio.read_json(path)
    if not doc.get("map") or not doc.get("mode"):
        raise pio.DataError(f"{path}: report has no MAP estimate")
    try:
        tree = parse_tree(doc["mode"]["tree"])
        Z = np.asarray(doc["map"]["Z_codes"], dtype=np.int8).reshape(-1, len(tree))
        w = np.asarray(doc["map"]["w"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise pio.DataError(f"{path}: malformed report ({exc})") from None
    return tree, Z, w


def cmd_evaluate(args):
    tree, state = pio.read_truth(args.truth)
    est_tree, Z, w = _report_estimate(args.report)
    try:
        e = reconstruction_errors(tree, state, est_tree, Z, w)
    except ValueError as exc:
        raise pio.DataError(str(exc)) from None
    header = ("c_err", "t_err", "z_err", "w_err", "z_err_snv", "size_mismatched")
    row = (e.c_err, e.t_err, e.z_err, e.w_err, e.z_err_snv, int(e.size_mismatched))
    path = _out_path(args, "metrics.csv")
    pio.write_table(path, header, [row], {"truth": args.truth, "report": args.report})
    print(",".join(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row[:4]))


def cmd_gof(args):
    counts = pio.read_counts(args.counts)
    d = pio.load_draws(args.draws)
    if len(d["states"]) == 0:
        raise pio.DataError(f"{args.draws}: no posterior draws")
    if args.all_trees:
        states = d["states"]
    else:
        idx, freq = np.unique(d["tree_index"], return_counts=True)
        mode = idx[np.argmax(freq)]
        states = [s for s, j in zip(d["states"], d["tree_index"]) if j == mode]
    s0 = states[0]
    if s0.Z.shape[0] != counts.K or s0.w.shape[0] != counts.n_samples:
        raise pio.DataError(
            f"draws are for {s0.w.shape[0]} samples x {s0.Z.shape[0]} pairs but counts have "
            f"{counts.n_samples} x {counts.K}"
        )
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        g = gof_rb(counts, states, level=args.level)
    rb, theo = g.qq()
    path = _out_path(args, "gof.csv")
    meta = {"exceedance": g.exceedance, "threshold": g.threshold, "skipped": g.skipped,
            "n_draws": len(rb)}
    pio.write_table(path, ("rb_sorted", "chi2_7_quantile"), zip(rb, theo), meta)
    print(f"exceedance {g.exceedance:.4f} (threshold {g.threshold:.3f}, {len(rb)} draws)")


def cmd_diag(args):
    if len(args.traces) < 2:
        raise UsageError("diag needs at least two trace files")
    series = [pio.read_trace(p, args.column)[args.burn_in:] for p in args.traces]
    n = min(len(s) for s in series)
    try:
        value = psrf([s[:n] for s in series])
    except ValueError as exc:
        raise pio.DataError(str(exc)) from None
    if args.out:
        pio.write_table(args.out, ("psrf",), [(value,)], {"traces": args.traces})
    print(f"{value:.6f}")


# -- parser -------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags take precedence)")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true", help="progress logging")

    p = argparse.ArgumentParser(prog="pairphylo", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate truth and read counts")
    s.add_argument("--C", type=int, help="number of subclones including the normal clone")
    s.add_argument("--K", type=int, help="number of mutation pairs")
    s.add_argument("--samples", type=int, help="number of samples")
    s.add_argument("--depth", type=float, help="mean read depth")
    s.add_argument("--depth-sd", type=float, help="depth standard deviation (default depth/5)")
    s.add_argument("--v2", type=float, help="left-missing rate")
    s.add_argument("--v3", type=float, help="right-missing rate")
    s.add_argument("--d1", type=float, help="noise Dirichlet concentration")
    s.add_argument("--beta", type=float, help="tree prior exponent")
    s.add_argument("--lam", type=float, help="Poisson mean of gains per column")
    s.add_argument("--tree", help="fixed parent vector, e.g. 0,1,1")
    s.set_defaults(func=cmd_simulate, needs_out=True)

    f = sub.add_parser("fit", parents=[common], help="run the sampler on a counts file")
    f.add_argument("counts")
    f.add_argument("--n-iter", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--c-min", type=int)
    f.add_argument("--c-max", type=int)
    f.set_defaults(func=cmd_fit, needs_out=True)

    e = sub.add_parser("evaluate", parents=[common], help="score a report against the truth")
    e.add_argument("truth")
    e.add_argument("report")
    e.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("gof", parents=[common], help="Bayesian chi-square goodness of fit")
    g.add_argument("counts")
    g.add_argument("draws", help="draws.npz written by fit")
    g.add_argument("--level", type=float, default=0.95)
    g.add_argument("--all-trees", action="store_true", help="use draws of every tree, not just the mode")
    g.set_defaults(func=cmd_gof)

    d = sub.add_parser("diag", parents=[common], help="PSRF of several trace files")
    d.add_argument("traces", nargs="+")
    d.add_argument("--column", default="logpost")
    d.add_argument("--burn-in", type=int, default=0, help="leading rows to drop")
    d.set_defaults(func=cmd_diag)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "needs_out", False) and not args.out:
        parser.error(f"{args.command}: --out is required")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"pairphylo {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pio.DataError, OSError, ValueError) as exc:
        print(f"pairphylo {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
