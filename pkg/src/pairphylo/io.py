"""File formats: counts TSV, truth/report/config JSON, trace and metrics CSV, draw archives."""

import csv
import json
from dataclasses import fields

import numpy as np

from .model import ModelState, ReadCounts
from .phylogeny import format_tree, parse_tree

COUNT_COLUMNS = ("n00", "n01", "n10", "n11", "nm0", "nm1", "n0m", "n1m")
COUNTS_HEADER = ("sample_id", "pair_id") + COUNT_COLUMNS
TRACE_COLUMNS = ("iteration", "logpost", "C", "tree")


class DataError(ValueError):
    """Malformed or inconsistent input file."""


def dumps(obj):
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


# -- counts -------------------------------------------------------------------

def write_counts(path, counts):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, delimiter="\t", lineterminator="\n")
        out.writerow(COUNTS_HEADER)
        for t, s in enumerate(counts.sample_ids):
            for k, p in enumerate(counts.pair_ids):
                out.writerow([s, p, *(int(x) for x in counts.n[t, k])])


def read_counts(path):
    """Parse a counts TSV into `ReadCounts`.

    Samples and pairs keep their order of first appearance.  Every
    (sample, pair) combination must appear exactly once.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and not r[0].startswith("#")]
    if not rows:
        return ReadCounts(np.zeros((0, 0, 8), dtype=np.int64))
    line, header = rows[0]
    if tuple(h.strip() for h in header) != COUNTS_HEADER:
        raise DataError(f"{path}: line {line}: expected header {' '.join(COUNTS_HEADER)}")
    samples, pairs, cells = {}, {}, {}
    for line, r in rows[1:]:
        if len(r) != len(COUNTS_HEADER):
            raise DataError(f"{path}: line {line}: expected {len(COUNTS_HEADER)} fields, got {len(r)}")
        s, p = r[0].strip(), r[1].strip()
        try:
            values = [int(x) for x in r[2:]]
        except ValueError:
            raise DataError(f"{path}: line {line}: counts must be integers") from None
        if any(v < 0 for v in values):
            raise DataError(f"{path}: line {line}: counts must be non-negative")
        if (s, p) in cells:
            raise DataError(f"{path}: line {line}: duplicate entry for sample {s}, pair {p}")
        samples.setdefault(s, len(samples))
        pairs.setdefault(p, len(pairs))
        cells[s, p] = values
    if len(cells) != len(samples) * len(pairs):
        missing = next((s, p) for s in samples for p in pairs if (s, p) not in cells)
        raise DataError(
            f"{path}: ragged table, {len(cells)} rows for {len(samples)} samples x "
            f"{len(pairs)} pairs (first missing: sample {missing[0]}, pair {missing[1]})"
        )
    n = np.zeros((len(samples), len(pairs), 8), dtype=np.int64)
    for (s, p), values in cells.items():
        n[samples[s], pairs[p]] = values
    return ReadCounts(n, list(samples), list(pairs))


# -- truth --------------------------------------------------------------------

def truth_to_dict(tree, state, extra=None):
    out = {
        "tree": format_tree(tree),
        "C": len(tree),
        "Z_codes": np.asarray(state.Z).astype(int).tolist(),
        "w": np.asarray(state.w).tolist(),
        "rho": np.asarray(state.rho).tolist(),
    }
    if extra:
        out.update(extra)
    return out


def truth_from_dict(obj):
    try:
        tree = parse_tree(obj["tree"])
        state = ModelState(np.asarray(obj["Z_codes"], dtype=np.int8).reshape(-1, len(tree)),
                           np.asarray(obj["w"], dtype=float),
                           np.asarray(obj["rho"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid truth document: {exc}") from None
    state.check(tree)
    return tree, state


def write_truth(path, tree, state, extra=None):
    write_json(path, truth_to_dict(tree, state, extra))


def read_truth(path):
    return truth_from_dict(read_json(path))


# -- configuration ------------------------------------------------------------

def dataclass_from_mapping(cls, values, what="configuration"):
    """Build `cls` from a flat mapping, rejecting keys it does not define."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise DataError(f"unknown {what} keys: {', '.join(unknown)}")
    return cls(**values)


def read_config(path):
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise DataError(f"{path}: configuration must be a JSON object")
    return obj


# -- traces, metrics, draws ---------------------------------------------------

def _comment(fh, meta):
    if meta is not None:
        fh.write("# " + json.dumps(meta, sort_keys=True, allow_nan=False) + "\n")


def write_trace(path, trace, meta=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _comment(fh, meta)
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for row in zip(*(trace[c] for c in TRACE_COLUMNS)):
            it, lp, C, tree = row
            out.writerow([int(it), repr(float(lp)), int(C), int(tree)])


def read_trace(path, column="logpost"):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or column not in reader.fieldnames:
        raise DataError(f"{path}: no '{column}' column in trace")
    try:
        return np.array([float(r[column]) for r in reader])
    except (TypeError, ValueError):
        raise DataError(f"{path}: non-numeric value in column '{column}'") from None


def write_table(path, header, rows, meta=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _comment(fh, meta)
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def save_draws(path, output):
    """Store post-burn-in draws; columns beyond each draw's C are zero-padded."""
    n, cmax = output.n_draws, output.space.c_max
    K = output.Z[0].shape[0] if n else 0
    T = output.w[0].shape[0] if n else 0
    Z = np.zeros((n, K, cmax), dtype=np.int8)
    w = np.zeros((n, T, cmax + 1))
    C = np.zeros(n, dtype=np.int64)
    for i in range(n):
        c = output.Z[i].shape[1]
        C[i] = c
        Z[i, :, :c] = output.Z[i]
        w[i, :, :c + 1] = output.w[i]
    np.savez(
        path, tree_index=output.tree_index, C=C, Z=Z, w=w, rho=output.rho,
        loglik=output.loglik, logprior=output.logprior,
        trees=np.array([format_tree(t) for t in output.space.trees]),
    )


def load_draws(path):
    """Inverse of `save_draws`: a dict with per-draw trees and `ModelState` objects."""
    try:
        with np.load(path) as f:
            data = {k: f[k] for k in f.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read draws ({exc})") from None
    trees = [parse_tree(str(s)) for s in data["trees"]]
    states = [
        ModelState(data["Z"][i, :, :c], data["w"][i, :, :c + 1], data["rho"][i])
        for i, c in enumerate(data["C"])
    ]
    return {"trees": trees, "tree_index": data["tree_index"], "states": states,
            "loglik": data["loglik"], "logprior": data["logprior"]}
