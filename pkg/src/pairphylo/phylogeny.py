"""Parent-vector trees over subclones.

A tree with ``C`` nodes is a tuple ``parent`` of length ``C`` using 1-based
node labels: ``parent[0] == 0`` (the normal clone is the root) and node
``c`` (1-based) has parent ``parent[c-1]`` with ``1 <= parent[c-1] < c``.
Every rooted topology has such a labeling, which makes the space of trees
for bounded ``C`` finite and easy to enumerate.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


def validate_tree(parent):
    """Return `parent` as a tuple of ints, raising ``ValueError`` if malformed."""
    parent = tuple(int(p) for p in parent)
    if not parent or parent[0] != 0:
        raise ValueError(f"tree root must have parent 0: {parent}")
    for c, p in enumerate(parent[1:], start=2):
        if not 1 <= p < c:
            raise ValueError(f"node {c} has parent {p}; need 1 <= parent < {c}")
    return parent


def parse_tree(text):
    """Parse the comma separated form, e.g. ``"0,1,1,2"``."""
    try:
        return validate_tree(int(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ValueError(f"bad tree string {text!r}: {exc}") from None


def format_tree(parent):
    return ",".join(str(p) for p in parent)


def depth(parent, c):
    """Number of edges between node `c` (1-based) and the root."""
    parent = validate_tree(parent)
    if not 1 <= c <= len(parent):
        raise IndexError(f"node {c} out of range for a tree with {len(parent)} nodes")
    d = 0
    while parent[c - 1] != 0:
        c = parent[c - 1]
        d += 1
    return d


def depths(parent):
    out = np.zeros(len(parent), dtype=int)
    for c in range(1, len(parent)):
        out[c] = out[parent[c] - 1] + 1
    return out


def _log_tree_weight(parent, beta):
    return -beta * np.log1p(depths(parent)).sum()


def trees_with(C):
    """All canonical parent vectors with `C` nodes, in lexicographic order."""
    if C < 1:
        raise ValueError("a tree needs at least one node")
    ranges = [range(1, c) for c in range(2, C + 1)]
    return [(0,) + rest for rest in itertools.product(*ranges)]


def log_prior_tree(parent, beta):
    """log p(T | C), normalized over the trees with the same number of nodes."""
    parent = validate_tree(parent)
    logz = logsumexp([_log_tree_weight(t, beta) for t in trees_with(len(parent))])
    return _log_tree_weight(parent, beta) - logz


def log_prior_C(C, alpha, c_min, c_max):
    """Geometric prior on the number of subclones, renormalized to [c_min, c_max]."""
    if not c_min <= C <= c_max:
        raise ValueError(f"C={C} outside [{c_min}, {c_max}]")
    support = np.arange(c_min, c_max + 1)
    logmass = (support - 1) * np.log1p(-alpha) + np.log(alpha)
    return float(logmass[C - c_min] - logsumexp(logmass))


@dataclass(frozen=True)
class TreeSpace:
    """Every tree with ``c_min <= C <= c_max``, ordered by C then lexicographically."""

    c_min: int
    c_max: int
    trees: tuple = field(repr=False)

    def __len__(self):
        return len(self.trees)

    def index(self, parent):
        return self.trees.index(tuple(parent))

    def log_prior(self, alpha, beta):
        """log p(T, C) for every tree of the space, as an array."""
        return np.array([
            log_prior_C(len(t), alpha, self.c_min, self.c_max) + log_prior_tree(t, beta)
            for t in self.trees
        ])


def enumerate_tree_space(c_min, c_max):
    if not 2 <= c_min <= c_max:
        raise ValueError(f"need 2 <= c_min <= c_max, got ({c_min}, {c_max})")
    if c_max > 8:
        raise ValueError("c_max > 8 gives more than 5040 trees per C; refusing")
    trees = tuple(t for C in range(c_min, c_max + 1) for t in trees_with(C))
    return TreeSpace(c_min, c_max, trees)


def propose_tree_uniform(space, rng):
    """Draw an index of `space` uniformly; returns ``(index, parent)``."""
    j = int(rng.integers(len(space)))
    return j, space.trees[j]
