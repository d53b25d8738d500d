"""Synthetic ground truth and read counts from the generative model."""

from dataclasses import dataclass

import numpy as np

from .model import (
    ModelState,
    ReadCounts,
    sample_dirichlet,
    sample_rho_prior,
    sample_Z_prior,
    tilde_p_all,
)
from .phylogeny import log_prior_tree, trees_with, validate_tree

#: Default Dirichlet concentrations of the non-background clones, by C.
WEIGHT_BASES = {
    2: (15, 10),
    3: (15, 10, 5),
    4: (15, 10, 8, 5),
    5: (15, 10, 8, 5, 3),
    6: (15, 10, 8, 5, 3, 2),
    7: (15, 10, 8, 5, 3, 2, 1),
}


@dataclass
class SimulationSpec:
    """Design of one synthetic dataset.

    ``depth_sd`` defaults to ``depth_mean / 5``.  ``v2`` and ``v3`` (left- and
    right-missing rates) may be scalars or ``(n_samples, K)`` arrays.  Any of
    ``tree``, ``Z``, ``w``, ``depth`` can be fixed to replicate a known
    configuration instead of drawing it.
    """

    K: int = 100
    C: int = 3
    n_samples: int = 5
    depth_mean: float = 200.0
    depth_sd: float = None
    weight_base: tuple = None
    background_conc: float = 0.01
    permute: bool = True
    v2: object = 0.3
    v3: object = 0.3
    d1: float = 1.0
    beta: float = 0.5
    lam: float = None
    seed: int = 0
    tree: tuple = None
    Z: np.ndarray = None
    w: np.ndarray = None
    depth: np.ndarray = None

    def __post_init__(self):
        if self.depth_sd is None:
            self.depth_sd = self.depth_mean / 5.0
        if self.weight_base is None and self.w is None:
            if self.C not in WEIGHT_BASES:
                raise ValueError(f"no default weight concentrations for C={self.C}")
            self.weight_base = WEIGHT_BASES[self.C]
        self.validate()

    def validate(self):
        if self.K < 1 or self.C < 1 or self.n_samples < 1:
            raise ValueError("K, C and n_samples must be positive")
        if self.depth is None:
            if not self.depth_mean > 0:
                raise ValueError("mean depth must be positive")
            if not self.depth_sd ** 2 > self.depth_mean:
                raise ValueError(
                    "negative-binomial depth needs sd^2 > mean "
                    f"(got mean={self.depth_mean}, sd={self.depth_sd})"
                )
        v2, v3 = self.missing_rates()
        if (v2 < 0).any() or (v3 < 0).any() or (v2 + v3 > 1 + 1e-12).any():
            raise ValueError("missing rates need v2, v3 >= 0 and v2 + v3 <= 1")
        if self.weight_base is not None and len(self.weight_base) != self.C:
            raise ValueError("weight_base needs one concentration per subclone")

    def missing_rates(self):
        shape = (self.n_samples, self.K)
        return (np.broadcast_to(np.asarray(self.v2, dtype=float), shape),
                np.broadcast_to(np.asarray(self.v3, dtype=float), shape))

    @property
    def lam_value(self):
        return self.lam if self.lam is not None else 2.0 * self.K / self.C


@dataclass
class Truth:
    tree: tuple
    state: ModelState

    @property
    def C(self):
        return len(self.tree)

    def tilde_p(self):
        s = self.state
        return tilde_p_all(s.Z, s.w, s.rho)


def negative_binomial_params(mean, sd):
    """``(r, p)`` of numpy's negative binomial with the given mean and sd."""
    var = sd * sd
    if not var > mean:
        raise ValueError("negative-binomial depth needs sd^2 > mean")
    p = mean / var
    return mean * p / (1.0 - p), p


def gen_truth(spec, rng=None):
    """Draw (tree, Z, w, rho) following the prior-based simulation design."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    C = spec.C
    if spec.tree is not None:
        tree = validate_tree(spec.tree)
        if len(tree) != C:
            raise ValueError("fixed tree does not have C nodes")
    else:
        trees = trees_with(C)
        p = np.exp([log_prior_tree(t, spec.beta) for t in trees])
        tree = trees[int(rng.choice(len(trees), p=p / p.sum()))]
    if spec.Z is not None:
        Z = np.asarray(spec.Z, dtype=np.int8)
    else:
        Z = sample_Z_prior(tree, spec.K, spec.lam_value, rng)
    if spec.w is not None:
        w = np.asarray(spec.w, dtype=float)
    else:
        base = np.asarray(spec.weight_base, dtype=float)
        w = np.empty((spec.n_samples, C + 1))
        for t in range(spec.n_samples):
            conc = rng.permutation(base) if spec.permute else base
            w[t] = sample_dirichlet(np.concatenate(([spec.background_conc], conc)), rng)
    rho = sample_rho_prior(spec.d1, rng)
    state = ModelState(Z, w, rho)
    state.check(tree)
    return Truth(tree, state)


def category_probabilities(truth, spec):
    """Unconditional read-type probabilities ``(T, K, 8)`` including missingness."""
    v2, v3 = spec.missing_rates()
    v1 = 1.0 - v2 - v3
    p = truth.tilde_p()
    scale = np.concatenate([np.repeat(v1[..., None], 4, axis=2),
                            np.repeat(v2[..., None], 2, axis=2),
                            np.repeat(v3[..., None], 2, axis=2)], axis=2)
    return p * scale


def gen_counts(truth, spec, rng=None):
    """Draw depths and multinomial read-type counts for `truth`."""
    rng = np.random.default_rng([spec.seed, 1]) if rng is None else rng
    shape = (spec.n_samples, spec.K)
    if spec.depth is not None:
        depth = np.asarray(spec.depth, dtype=np.int64)
        if depth.shape != shape:
            raise ValueError(f"depth table must have shape {shape}")
    else:
        r, p = negative_binomial_params(spec.depth_mean, spec.depth_sd)
        depth = rng.negative_binomial(r, p, size=shape)
    probs = category_probabilities(truth, spec)
    probs /= probs.sum(axis=2, keepdims=True)
    n = rng.multinomial(depth, probs)
    return ReadCounts(n)


def simulate(spec):
    """Convenience wrapper: ``(truth, counts)`` from one seed."""
    truth = gen_truth(spec, np.random.default_rng([spec.seed, 0]))
    return truth, gen_counts(truth, spec, np.random.default_rng([spec.seed, 1]))


def marginalize_to_snv(counts, keep_second_locus=False):
    """View mutation-pair reads as unphased single-SNV reads.

    Every read observing the first locus (complete and right-missing reads)
    is moved into the right-missing block according to its first-locus value.
    Reads observing only the second locus are dropped, unless
    `keep_second_locus` is set, in which case they stay in the left-missing
    block and the total per (sample, pair) is preserved.
    """
    n = counts.n
    out = np.zeros_like(n)
    # first-locus reference: 00, 01, 0- ; first-locus variant: 10, 11, 1-
    out[..., 6] = n[..., 0] + n[..., 1] + n[..., 6]
    out[..., 7] = n[..., 2] + n[..., 3] + n[..., 7]
    if keep_second_locus:
        out[..., 4:6] = n[..., 4:6]
    return ReadCounts(out, counts.sample_ids, counts.pair_ids)

