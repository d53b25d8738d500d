"""Genotype algebra for mutation pairs.

A mutation pair in one subclone is a 2x2 binary matrix ``m[j][r]`` where
``j`` indexes the two alleles (columns) and ``r`` the two loci.  Because
allele order is not observable, matrices that differ by a column swap are
merged into one of ten canonical codes.  Codes are 1-based (1..10) and read
types are 1-based (1..8) throughout the package; the lookup tables below are
indexed with ``code - 1`` / ``g - 1``.
"""

from fractions import Fraction

import numpy as np

#: Canonical representative of each code, as a pair of alleles
#: ``((locus1, locus2), (locus1, locus2))`` sorted lexicographically.
REPRESENTATIVES = (
    ((0, 0), (0, 0)),
    ((0, 0), (0, 1)),
    ((0, 0), (1, 0)),
    ((0, 0), (1, 1)),
    ((0, 1), (0, 1)),
    ((0, 1), (1, 0)),
    ((1, 0), (1, 0)),
    ((0, 1), (1, 1)),
    ((1, 0), (1, 1)),
    ((1, 1), (1, 1)),
)

N_CODES = len(REPRESENTATIVES)
FULL_CODE = 10

#: Observed locus values of the eight read types; ``None`` is a missing locus.
READ_TYPES = (
    (0, 0), (0, 1), (1, 0), (1, 1),
    (None, 0), (None, 1),
    (0, None), (1, None),
)
READ_LABELS = ("00", "01", "10", "11", "-0", "-1", "0-", "1-")
N_READ_TYPES = len(READ_TYPES)

#: Slices of the read-type axis for complete, left-missing, right-missing reads.
BLOCKS = (slice(0, 4), slice(4, 6), slice(6, 8))

_CODE_OF = {rep: q + 1 for q, rep in enumerate(REPRESENTATIVES)}


def _alleles(m):
    """Normalize a genotype given as ``m[j][r]`` into a tuple of allele tuples."""
    m = np.asarray(m, dtype=int)
    if m.shape != (2, 2) or not np.isin(m, (0, 1)).all():
        raise ValueError(f"genotype matrix must be 2x2 binary, got {m.tolist()}")
    return tuple(tuple(int(v) for v in allele) for allele in m)


def representative(q):
    """Return the canonical 2x2 matrix (alleles as rows of the array) for code `q`."""
    _check_code(q)
    return np.array(REPRESENTATIVES[q - 1], dtype=np.int8)


def canonicalize(m):
    """Map a raw genotype matrix to its canonical code.

    Parameters
    ----------
    m : array_like, shape (2, 2)
        ``m[j][r]`` is the mutation indicator of allele ``j`` at locus ``r``.

    Returns
    -------
    int
        Code in 1..10.  Column-swapped inputs give the same code.
    """
    return _CODE_OF[tuple(sorted(_alleles(m)))]


def _check_code(q):
    if not 1 <= int(q) <= N_CODES:
        raise ValueError(f"genotype code must be in 1..{N_CODES}, got {q}")


def num_mutations(q):
    """Number of variant entries of code `q` (0..4)."""
    _check_code(q)
    return sum(sum(allele) for allele in REPRESENTATIVES[q - 1])


def single_mutation_children(q):
    """Distribution of the child code after one uniformly placed new mutation.

    Every unmutated position of the representative is equally likely; after
    the flip the result is canonicalized, so codes reachable through several
    positions accumulate their probabilities.

    Returns
    -------
    dict
        ``{child_code: Fraction}`` summing to exactly 1.
    """
    _check_code(q)
    rep = [list(allele) for allele in REPRESENTATIVES[q - 1]]
    free = [(j, r) for j in range(2) for r in range(2) if rep[j][r] == 0]
    if not free:
        raise ValueError("code 10 has no unmutated position")
    out = {}
    for j, r in free:
        child = [allele[:] for allele in rep]
        child[j][r] = 1
        c = canonicalize(child)
        out[c] = out.get(c, Fraction(0)) + Fraction(1, len(free))
    return dict(sorted(out.items()))


def emission_raw(g, m):
    """Read-emission probability computed directly on a raw genotype matrix."""
    obs = READ_TYPES[g - 1]
    total = 0.0
    for allele in _alleles(m):
        match = all(o is None or o == a for o, a in zip(obs, allele))
        total += 0.5 * match
    return total


def emission_A(g, q):
    """Probability that a read of type `g` is drawn from a subclone with code `q`.

    Each allele is picked with probability 1/2 and a missing read locus
    matches any allele value, so the result is 0, 0.5 or 1.
    """
    if not 1 <= int(g) <= N_READ_TYPES:
        raise ValueError(f"read type must be in 1..{N_READ_TYPES}, got {g}")
    _check_code(q)
    return float(EMISSION[g - 1, q - 1])


def _build_tables():
    emission = np.array(
        [[emission_raw(g, REPRESENTATIVES[q]) for q in range(N_CODES)]
         for g in range(1, N_READ_TYPES + 1)]
    )
    trans = np.zeros((N_CODES, N_CODES))
    for q in range(1, N_CODES):
        for c, p in single_mutation_children(q).items():
            trans[q - 1, c - 1] = float(p)
    nmut = np.array([num_mutations(q) for q in range(1, N_CODES + 1)])
    return emission, trans, nmut


#: ``EMISSION[g-1, q-1]`` = A(s^(g), z^(q)), shape (8, 10).
#: ``TRANSITION[p-1, c-1]`` = single-mutation probability p -> c, shape (10, 10);
#: the row for code 10 is all zero.
#: ``N_MUTATIONS[q-1]`` = number of mutations of code q.
EMISSION, TRANSITION, N_MUTATIONS = _build_tables()
EMISSION.flags.writeable = False
TRANSITION.flags.writeable = False
N_MUTATIONS.flags.writeable = False


def locus_dosage(q, locus):
    """Count of variant alleles of code `q` at `locus` (1 or 2)."""
    _check_code(q)
    return sum(allele[locus - 1] for allele in REPRESENTATIVES[q - 1])


#: ``LOCUS1_DOSAGE[q-1]``: variant alleles at the first locus, used by the
#: marginal-SNV genotype error.
LOCUS1_DOSAGE = np.array([locus_dosage(q, 1) for q in range(1, N_CODES + 1)])
LOCUS1_DOSAGE.flags.writeable = False
