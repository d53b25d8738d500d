"""Densities of the subclone model.

Shapes used throughout:

* read counts ``n``: ``(n_samples, K, 8)`` integers, read types in the order
  00, 01, 10, 11, -0, -1, 0-, 1-;
* genotypes ``Z``: ``(K, C)`` codes in 1..10, column 0 is the normal clone;
* weights ``w``: ``(n_samples, C + 1)``, column 0 is the background clone and
  column 1 the normal clone;
* noise ``rho``: ``(8,)`` with each missingness block summing to one.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import gammaln

from . import genotype as gt
from .phylogeny import validate_tree

#: Smallest log term used where a finite value is required (matrix products).
LOG_FLOOR = -745.0


@dataclass
class ReadCounts:
    """Per-sample, per-pair counts of the eight read types."""

    n: np.ndarray
    sample_ids: list = None
    pair_ids: list = None

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        if self.n.ndim != 3 or self.n.shape[2] != gt.N_READ_TYPES:
            raise ValueError(f"counts must have shape (samples, pairs, 8), got {self.n.shape}")
        if (self.n < 0).any():
            raise ValueError("read counts must be non-negative")
        if self.sample_ids is None:
            self.sample_ids = [f"s{t + 1}" for t in range(self.n.shape[0])]
        if self.pair_ids is None:
            self.pair_ids = [f"p{k + 1}" for k in range(self.n.shape[1])]
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.pair_ids = [str(p) for p in self.pair_ids]
        if len(self.sample_ids) != self.n.shape[0] or len(self.pair_ids) != self.n.shape[1]:
            raise ValueError("id lists do not match the count dimensions")

    @property
    def n_samples(self):
        return self.n.shape[0]

    @property
    def K(self):
        return self.n.shape[1]

    @property
    def depth(self):
        return self.n.sum(axis=2)

    def block_fractions(self):
        """Empirical fractions of complete / left-missing / right-missing reads, ``(T, K, 3)``.

        Cells with zero depth get fractions of zero.
        """
        totals = np.stack([self.n[..., b].sum(axis=2) for b in gt.BLOCKS], axis=2)
        depth = totals.sum(axis=2, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(depth > 0, totals / np.maximum(depth, 1), 0.0)


@dataclass
class ModelState:
    """One parameter point ``(Z, w, rho)`` for a given tree."""

    Z: np.ndarray
    w: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.int8)
        self.w = np.asarray(self.w, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)

    @property
    def C(self):
        return self.Z.shape[1]

    def copy(self):
        return ModelState(self.Z.copy(), self.w.copy(), self.rho.copy())

    def check(self, parent=None, atol=1e-9):
        """Raise ``ValueError`` if any state invariant is violated."""
        Z, w, rho = self.Z, self.w, self.rho
        if Z.ndim != 2 or w.shape != (w.shape[0], Z.shape[1] + 1) or rho.shape != (8,):
            raise ValueError("inconsistent state shapes")
        if not ((Z >= 1) & (Z <= gt.N_CODES)).all():
            raise ValueError("genotype codes must be in 1..10")
        if (Z[:, 0] != 1).any():
            raise ValueError("normal clone must carry no mutation")
        if not (w > 0).all() or not np.allclose(w.sum(axis=1), 1.0, atol=atol):
            raise ValueError("weight rows must be positive and sum to one")
        if not (rho > 0).all() or not all(
            abs(rho[b].sum() - 1.0) < atol for b in gt.BLOCKS
        ):
            raise ValueError("rho blocks must be positive and sum to one")
        if parent is not None and not np.isfinite(log_prior_Z(Z, parent, 1.0)):
            raise ValueError("genotypes are not consistent with the tree")


def _default_ladder():
    return tuple(float(x) for x in np.geomspace(1.0, 0.3, 4))


@dataclass
class Hyperparameters:
    """Prior settings and MCMC controls.

    ``lam``, ``a_p`` and ``b_p`` may be left as ``None`` to use the rules
    ``lam = 2K/C``, ``a_p = d`` and ``b_p = d0 + (C - 1) d``.
    """

    alpha: float = 0.5
    beta: float = 0.5
    lam: float = None
    d: float = 0.5
    d0: float = 0.03
    d1: float = 1.0
    a_p: float = None
    b_p: float = None
    c_min: int = 2
    c_max: int = 5
    b_train: float = 0.95
    n_iter: int = 8000
    burn_in: int = 3000
    temperatures: tuple = field(default_factory=_default_ladder)
    swap_period: int = 1
    n_inner: int = 5
    n_warm: int = 400
    tree_move_period: int = 1
    w_step: float = 300.0
    rho_step: float = 300.0
    adapt: bool = True
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        self.temperatures = tuple(float(x) for x in self.temperatures)
        self.validate()

    def validate(self):
        for name in ("alpha", "beta", "d", "d0", "d1", "w_step", "rho_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        for name in ("lam", "a_p", "b_p"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if not 2 <= self.c_min <= self.c_max:
            raise ValueError("need 2 <= c_min <= c_max")
        if not 0 < self.b_train < 1:
            raise ValueError("b_train must lie in (0, 1)")
        if self.n_iter < 0 or not 0 <= self.burn_in <= self.n_iter:
            raise ValueError("need 0 <= burn_in <= n_iter")
        temps = self.temperatures
        if not temps or temps[0] != 1.0 or any(b <= 0 for b in temps):
            raise ValueError("temperature ladder must start at 1 and stay positive")
        if any(a < b for a, b in zip(temps, temps[1:])):
            raise ValueError("temperature ladder must be non-increasing")
        if self.n_warm < 0:
            raise ValueError("n_warm must be >= 0")
        for name in ("swap_period", "n_inner", "tree_move_period", "log_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def lam_for(self, C, K):
        return self.lam if self.lam is not None else 2.0 * K / C

    def a_p_for(self, C):
        return self.a_p if self.a_p is not None else self.d

    def b_p_for(self, C):
        return self.b_p if self.b_p is not None else self.d0 + (C - 1) * self.d

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["temperatures"] = list(self.temperatures)
        return out

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**values)


# -- likelihood ---------------------------------------------------------------

def tilde_p_all(Z, w, rho):
    """Conditional read-type probabilities for every (sample, pair), ``(T, K, 8)``."""
    E = gt.EMISSION[:, np.asarray(Z) - 1]  # (8, K, C)
    p = np.einsum("gkc,tc->tkg", E, w[:, 1:])
    return p + w[:, 0, None, None] * rho[None, None, :]


def tilde_p(t, k, g, state):
    """Probability of read type `g` (1-based) for sample `t`, pair `k` (0-based)."""
    Z, w, rho = state.Z, state.w, state.rho
    return float(
        np.dot(w[t, 1:], gt.EMISSION[g - 1, Z[k] - 1]) + w[t, 0] * rho[g - 1]
    )


def loglik_terms(n, p):
    """Elementwise ``n * log p`` with ``0 * log 0 = 0`` and ``-inf`` for impossible reads."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        return np.where(n > 0, n * logp, 0.0)


def log_likelihood(counts, state, power=1.0):
    """Multinomial log-likelihood up to data-only constants, raised to `power`.

    The three missingness classes are conditioned on, so missingness
    probabilities drop out.  ``power`` implements fractional training/test
    likelihoods.
    """
    n = counts.n if isinstance(counts, ReadCounts) else np.asarray(counts)
    if not n.any():
        return 0.0
    p = tilde_p_all(state.Z, state.w, state.rho)
    return power * float(loglik_terms(n, p).sum())


# -- genotype prior given a tree ----------------------------------------------

def enumerate_valid_rows(parent):
    """All tree-consistent genotype rows, as an int8 array ``(n_rows, C)``.

    Node 1 carries code 1 and each child either copies its parent's code or
    gains exactly one mutation.  Rows are ordered depth-first with the
    "no gain" option first, then children in increasing code order.
    """
    parent = validate_tree(parent)
    options = [[q] + sorted(gt.single_mutation_children(q)) if q != gt.FULL_CODE else [q]
               for q in range(1, gt.N_CODES + 1)]
    rows = [[1]]
    for c in range(1, len(parent)):
        rows = [r + [q] for r in rows for q in options[r[parent[c] - 1] - 1]]
    return np.array(rows, dtype=np.int8)


def log_trunc_poisson_norm(lam, upper):
    """``log sum_{i=1..upper} lam^i / i!``; ``-inf`` when ``upper < 1``."""
    if upper < 1:
        return -math.inf
    i = np.arange(1, upper + 1)
    terms = i * math.log(lam) - gammaln(i + 1)
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum()))


def log_trunc_poisson(m, lam, upper):
    if not 1 <= m <= upper:
        return -math.inf
    return m * math.log(lam) - math.lgamma(m + 1) - log_trunc_poisson_norm(lam, upper)


def log_binom(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_prior_Z(Z, parent, lam):
    """log p(Z | T, C) at the level of canonical codes.

    For each non-root column the number of gaining pairs is truncated
    Poisson on ``[1, |L|]`` (``L`` = pairs of the parent with fewer than
    four mutations), the gaining set is uniform among subsets of ``L`` of
    that size, and each gain moves the parent code to a child code with the
    single-mutation transition probability.  Inconsistent ``Z`` gives ``-inf``.
    """
    parent = validate_tree(parent)
    Z = np.asarray(Z, dtype=int)
    if Z.ndim != 2 or Z.shape[1] != len(parent):
        raise ValueError("Z must have one column per tree node")
    if (Z[:, 0] != 1).any():
        return -math.inf
    total = 0.0
    for c in range(1, len(parent)):
        par = Z[:, parent[c] - 1]
        child = Z[:, c]
        gain = gt.N_MUTATIONS[child - 1] - gt.N_MUTATIONS[par - 1]
        if ((gain != 0) & (gain != 1)).any() or (child[gain == 0] != par[gain == 0]).any():
            return -math.inf
        trans = gt.TRANSITION[par[gain == 1] - 1, child[gain == 1] - 1]
        if (trans == 0).any():
            return -math.inf
        m = int(gain.sum())
        upper = int((gt.N_MUTATIONS[par - 1] < 4).sum())
        lp = log_trunc_poisson(m, lam, upper)
        if lp == -math.inf:
            return -math.inf
        total += lp - log_binom(upper, m) + float(np.log(trans).sum())
    return total


def gain_count_table(K, lam):
    """``F[L, m] = log TruncPois(m; lam, [1, L]) - log C(L, m)``; ``-inf`` off support.

    Shape ``(K + 1, K + 1)``.  The per-column factor of the genotype prior is
    ``F[L, m]`` times the single-mutation transition masses of the gains.
    """
    F = np.full((K + 1, K + 1), -np.inf)
    for L in range(1, K + 1):
        m = np.arange(1, L + 1)
        F[L, 1:L + 1] = (m * math.log(lam) - gammaln(m + 1) - log_trunc_poisson_norm(lam, L)
                         - (gammaln(L + 1) - gammaln(m + 1) - gammaln(L - m + 1)))
    return F


# -- weight and noise priors --------------------------------------------------

def log_dirichlet(x, a):
    """Dirichlet log density; ``-inf`` on or outside the simplex boundary."""
    x = np.asarray(x, dtype=float)
    a = np.broadcast_to(np.asarray(a, dtype=float), x.shape)
    if not ((x > 0) & (x < 1)).all() and not (x.size == 1 and x[0] == 1):
        return -math.inf
    return float(gammaln(a.sum()) - gammaln(a).sum() + ((a - 1) * np.log(x)).sum())


def log_prior_w(w_row, a_p, b_p, d, d0):
    """Beta-Dirichlet log density of one weight row ``(w0, w1, ..., wC)``.

    ``w1 ~ Be(a_p, b_p)`` and ``(w0, w2, ..., wC) / (1 - w1) ~ Dir(d0, d, ..., d)``,
    including the Jacobian of the rescaling.
    """
    w_row = np.asarray(w_row, dtype=float)
    if not ((w_row > 0) & (w_row < 1)).all():
        return -math.inf
    w1 = w_row[1]
    C = w_row.size - 1
    rest = np.concatenate(([w_row[0]], w_row[2:])) / (1.0 - w1)
    conc = np.full(rest.size, d, dtype=float)
    conc[0] = d0
    log_beta = ((a_p - 1) * math.log(w1) + (b_p - 1) * math.log1p(-w1)
                - (math.lgamma(a_p) + math.lgamma(b_p) - math.lgamma(a_p + b_p)))
    return log_beta + log_dirichlet(rest, conc) - (C - 1) * math.log1p(-w1)


def rho_concentrations(d1):
    return np.array([d1] * 4 + [2 * d1] * 4, dtype=float)


def log_prior_rho(rho, d1):
    """Independent Dirichlet priors on the complete, left- and right-missing blocks."""
    rho = np.asarray(rho, dtype=float)
    a = rho_concentrations(d1)
    return sum(log_dirichlet(rho[b], a[b]) for b in gt.BLOCKS)


def log_prior_state(state, parent, hyper, K=None):
    """log p(Z | T) + sum_t log p(w_t) + log p(rho) for a tree with C nodes."""
    C = len(parent)
    K = state.Z.shape[0] if K is None else K
    lp = log_prior_Z(state.Z, parent, hyper.lam_for(C, K))
    a_p, b_p = hyper.a_p_for(C), hyper.b_p_for(C)
    lp += sum(log_prior_w(row, a_p, b_p, hyper.d, hyper.d0) for row in state.w)
    return lp + log_prior_rho(state.rho, hyper.d1)


# -- prior draws ---------------------------------------------------------------

def _truncated_poisson_draw(lam, upper, rng):
    m = np.arange(1, upper + 1)
    logp = m * math.log(lam) - gammaln(m + 1)
    p = np.exp(logp - logp.max())
    return int(rng.choice(m, p=p / p.sum()))


def sample_Z_prior(parent, K, lam, rng):
    """Draw a genotype matrix from p(Z | T, C)."""
    parent = validate_tree(parent)
    C = len(parent)
    Z = np.ones((K, C), dtype=np.int8)
    for c in range(1, C):
        par = Z[:, parent[c] - 1]
        open_rows = np.flatnonzero(gt.N_MUTATIONS[par - 1] < 4)
        if open_rows.size == 0:
            raise ValueError("parent subclone is fully mutated; the tree is infeasible")
        m = _truncated_poisson_draw(lam, open_rows.size, rng)
        chosen = np.sort(rng.choice(open_rows, size=m, replace=False))
        child = par.copy()
        for k in chosen:
            probs = gt.TRANSITION[par[k] - 1]
            child[k] = rng.choice(gt.N_CODES, p=probs) + 1
        Z[:, c] = child
    return Z


def sample_dirichlet(alpha, rng, size=None):
    """Dirichlet draw that never returns exact zeros (redraws via log-gamma)."""
    alpha = np.asarray(alpha, dtype=float)
    for _ in range(100):
        x = rng.dirichlet(alpha, size=size)
        if (x > 0).all():
            return x
    # Log-space fallback for very small concentrations.
    shape = alpha.shape if size is None else (size,) + alpha.shape
    logg = np.log(rng.gamma(alpha + 1.0, size=shape)) + np.log(rng.uniform(size=shape)) / alpha
    logg -= logg.max(axis=-1, keepdims=True)
    x = np.exp(logg)
    x = np.maximum(x / x.sum(axis=-1, keepdims=True), np.finfo(float).tiny)
    return x / x.sum(axis=-1, keepdims=True)


def sample_w_prior(n_samples, C, a_p, b_p, d, d0, rng):
    w = np.empty((n_samples, C + 1))
    conc = np.full(C, d, dtype=float)
    conc[0] = d0
    for t in range(n_samples):
        w1 = rng.beta(a_p, b_p)
        w1 = min(max(w1, 1e-12), 1 - 1e-12)
        rest = sample_dirichlet(conc, rng) * (1.0 - w1)
        w[t, 0] = rest[0]
        w[t, 1] = w1
        w[t, 2:] = rest[1:]
    return w


def sample_rho_prior(d1, rng):
    a = rho_concentrations(d1)
    rho = np.empty(8)
    for b in gt.BLOCKS:
        rho[b] = sample_dirichlet(a[b], rng)
    return rho


def sample_state_prior(parent, n_samples, K, hyper, rng):
    C = len(parent)
    Z = sample_Z_prior(parent, K, hyper.lam_for(C, K), rng)
    w = sample_w_prior(n_samples, C, hyper.a_p_for(C), hyper.b_p_for(C), hyper.d, hyper.d0, rng)
    return ModelState(Z, w, sample_rho_prior(hyper.d1, rng))
