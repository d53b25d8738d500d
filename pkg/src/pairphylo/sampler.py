"""Posterior simulation over trees, genotypes, weights and noise.

Within a tree, genotype rows are Gibbs-updated and weights/noise get
Dirichlet-proposal Metropolis-Hastings steps; a ladder of tempered replicas
is run for the tree the cold chain currently sits in.  Trees are changed by
a uniform proposal whose parameter proposal comes from a persistent chain
targeting the training-fraction posterior of the proposed tree; acceptance
uses the held-out fraction of the likelihood only.

Replica states are kept per tree, so the hot rungs of a tree resume where
they were left whenever the cold chain comes back to that tree.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import genotype as gt
from ._kernels import gibbs_scan
from .model import (
    ModelState,
    ReadCounts,
    gain_count_table,
    enumerate_valid_rows,
    log_prior_state,
    log_prior_w,
    rho_concentrations,
    sample_state_prior,
)
from .phylogeny import TreeSpace, enumerate_tree_space, propose_tree_uniform

log = logging.getLogger(__name__)

#: Additive floor of the Dirichlet proposal concentrations.
PROPOSAL_FLOOR = 0.01
ADAPT_WINDOW = 50
KAPPA_BOUNDS = (1.0, 1e7)


class TreeTables:
    """Per-tree candidate rows and the lookup tables of the Gibbs update."""

    def __init__(self, parent, K, lam):
        self.parent = tuple(parent)
        self.C = len(parent)
        self.K = K
        self.lam = lam
        rows = enumerate_valid_rows(parent)
        self.rows = rows
        par0 = np.array([0] + [p - 1 for p in parent[1:]], dtype=np.int64)
        self.parent0 = par0
        nmut = gt.N_MUTATIONS[rows - 1]
        gain = nmut - nmut[:, par0]
        gain[:, 0] = 0
        self.gain = np.ascontiguousarray(gain, dtype=np.int64)
        self.notfull = np.ascontiguousarray(nmut < 4, dtype=np.int64)
        trans = gt.TRANSITION[rows[:, par0] - 1, rows - 1]
        with np.errstate(divide="ignore"):
            self.logtrans = np.where(self.gain == 1, np.log(trans), 0.0).sum(axis=1)
        # (R, 8, C): emission of every candidate row.
        self.emission = np.ascontiguousarray(gt.EMISSION[:, rows - 1].transpose(1, 0, 2))
        self.F = gain_count_table(K, lam)
        self._keys = {tuple(int(q) for q in r): i for i, r in enumerate(rows)}

    def row_index(self, Z):
        return np.array([self._keys[tuple(int(q) for q in row)] for row in Z], dtype=np.int64)


@dataclass
class ChainState:
    """One replica: its current tree and parameters plus its own tuning and stream."""

    tree: int
    x: ModelState
    idx: np.ndarray
    power: float
    rng: np.random.Generator
    w_kappa: np.ndarray
    rho_kappa: np.ndarray
    loglik: float = math.nan
    counts: dict = field(default_factory=lambda: {
        "w": [0, 0], "rho": [0, 0], "w_window": None, "rho_window": None, "scans": 0,
    })

    def __post_init__(self):
        T = self.x.w.shape[0]
        self.counts["w_window"] = np.zeros((T, 2), dtype=np.int64)
        self.counts["rho_window"] = np.zeros((3, 2), dtype=np.int64)

    def take(self, other):
        """Adopt the tree and parameter point of `other` (tuning stays)."""
        self.tree = other.tree
        self.x = other.x.copy()
        self.idx = other.idx.copy()
        self.loglik = other.loglik

    def swap_with(self, other):
        self.tree, other.tree = other.tree, self.tree
        self.x, other.x = other.x, self.x
        self.idx, other.idx = other.idx, self.idx
        self.loglik, other.loglik = other.loglik, self.loglik


@dataclass
class ChainOutput:
    """Cold-chain draws after burn-in plus per-iteration traces."""

    space: TreeSpace
    hyper: object
    tree_index: np.ndarray
    Z: list
    w: list
    rho: np.ndarray
    loglik: np.ndarray
    logprior: np.ndarray
    trace: dict
    acceptance: dict

    @property
    def n_draws(self):
        return len(self.tree_index)

    def draw(self, i):
        return self.space.trees[self.tree_index[i]], ModelState(self.Z[i], self.w[i], self.rho[i])


class _Data:
    """Read counts rearranged for the kernels."""

    def __init__(self, counts):
        self.n = counts.n.astype(float)
        self.T, self.K = counts.n.shape[:2]
        # (K, T * 8) so that row log-likelihoods are one matrix product
        self.flat = np.ascontiguousarray(self.n.transpose(1, 0, 2).reshape(self.K, -1))
        self.empty = not counts.n.any()


def _logdir(x, a):
    return (math.lgamma(a.sum()) - sum(math.lgamma(v) for v in a)
            + float(((a - 1.0) * np.log(x)).sum()))


def _state_loglik(data, x):
    if data.empty:
        return 0.0
    E = gt.EMISSION[:, x.Z - 1]
    p = np.einsum("gkc,tc->tkg", E, x.w[:, 1:]) + x.w[:, 0, None, None] * x.rho
    return float((data.n * np.log(np.maximum(p, 1e-300))).sum())


def _candidate_loglik(data, tables, x):
    """``(K, R)`` log-likelihood of every pair under every candidate row."""
    R = len(tables.rows)
    if data.empty:
        return np.zeros((data.K, R))
    P = (np.einsum("rgc,tc->rtg", tables.emission, x.w[:, 1:])
         + (x.w[:, 0, None] * x.rho[None, :])[None])
    logP = np.log(np.maximum(P, 1e-300)).reshape(R, -1)
    return data.flat @ logP.T


def gibbs_update_rows(chain, data, tables, power=None):
    """Systematic-scan Gibbs update of every genotype row of `chain`."""
    power = chain.power if power is None else power
    loglik = _candidate_loglik(data, tables, chain.x)
    u = chain.rng.uniform(size=data.K)
    gibbs_scan(chain.idx, loglik, power, tables.gain, tables.notfull,
               tables.parent0, tables.logtrans, tables.F, u)
    chain.x.Z = tables.rows[chain.idx]


def row_conditional(k, chain, data, tables, power=None):
    """Normalized conditional distribution of row `k` over the candidate rows."""
    power = chain.power if power is None else power
    ll = _candidate_loglik(data, tables, chain.x)[k]
    others = np.delete(chain.idx, k)
    m = tables.gain[others].sum(axis=0)
    L = tables.notfull[others].sum(axis=0)
    lp = power * ll + tables.logtrans
    for c in range(1, tables.C):
        pc = tables.parent0[c]
        lp = lp + tables.F[L[pc] + tables.notfull[:, pc], m[c] + tables.gain[:, c]]
    p = np.exp(lp - lp.max())
    return p / p.sum()


def gibbs_update_row(k, chain, data, tables, power=None):
    """Resample row `k` exactly from its full conditional."""
    p = row_conditional(k, chain, data, tables, power)
    r = int(chain.rng.choice(len(p), p=p))
    chain.idx[k] = r
    chain.x.Z = tables.rows[chain.idx]
    return r


def _sample_loglik(data, E, w_t, rho, t):
    p = E @ w_t[1:] + w_t[0] * rho  # E is (K, 8, C)
    return float((data.n[t] * np.log(np.maximum(p, 1e-300))).sum())


def w_log_ratio(t, x, prop, data, hyper, kappa, E, power):
    """MH log ratio for replacing weight row `t` of state `x` by `prop`."""
    C = x.C
    w = x.w[t]
    a_p, b_p = hyper.a_p_for(C), hyper.b_p_for(C)
    lp_new = log_prior_w(prop, a_p, b_p, hyper.d, hyper.d0)
    if lp_new == -math.inf:
        return -math.inf
    lp_old = log_prior_w(w, a_p, b_p, hyper.d, hyper.d0)
    a_fwd = kappa * w + PROPOSAL_FLOOR
    a_bwd = kappa * prop + PROPOSAL_FLOOR
    log_r = lp_new - lp_old + _logdir(w, a_bwd) - _logdir(prop, a_fwd)
    if not data.empty:
        log_r += power * (_sample_loglik(data, E, prop, x.rho, t)
                          - _sample_loglik(data, E, w, x.rho, t))
    return log_r


def mh_update_w(t, chain, data, hyper, E=None, power=None):
    """Dirichlet-proposal MH update of the weight row of sample `t`.

    Returns True when the proposal is accepted.
    """
    power = chain.power if power is None else power
    x = chain.x
    if E is None:
        E = gt.EMISSION[:, x.Z - 1].transpose(1, 0, 2)  # (K, 8, C)
    kappa = chain.w_kappa[t]
    prop = chain.rng.dirichlet(kappa * x.w[t] + PROPOSAL_FLOOR)
    accept = False
    if (prop > 0).all():
        log_r = w_log_ratio(t, x, prop, data, hyper, kappa, E, power)
        if log_r > -math.inf:
            accept = math.log(chain.rng.uniform()) < log_r
    if accept:
        x.w[t] = prop
    chain.counts["w"][0] += accept
    chain.counts["w"][1] += 1
    chain.counts["w_window"][t] += (accept, 1)
    return accept


def _rho_base(data, x, E):
    return np.einsum("kgc,tc->tkg", E, x.w[:, 1:]) if not data.empty else None


def rho_log_ratio(i, x, prop, data, hyper, kappa, base, power):
    """MH log ratio for replacing noise block `i` of `x` by `prop`."""
    b = gt.BLOCKS[i]
    cur = x.rho[b]
    conc = rho_concentrations(hyper.d1)[b]
    a_fwd = kappa * cur + PROPOSAL_FLOOR
    a_bwd = kappa * prop + PROPOSAL_FLOOR
    log_r = (_logdir(prop, conc) - _logdir(cur, conc)
             + _logdir(cur, a_bwd) - _logdir(prop, a_fwd))
    if not data.empty:
        w0 = x.w[:, 0, None, None]
        n_b = data.n[..., b]
        new = np.log(np.maximum(base[..., b] + w0 * prop, 1e-300))
        old = np.log(np.maximum(base[..., b] + w0 * cur, 1e-300))
        log_r += power * float((n_b * (new - old)).sum())
    return log_r


def mh_update_rho(chain, data, hyper, E=None, power=None):
    """Blockwise Dirichlet-proposal MH updates of the noise probabilities.

    Returns the number of accepted block proposals.
    """
    power = chain.power if power is None else power
    x = chain.x
    if E is None:
        E = gt.EMISSION[:, x.Z - 1].transpose(1, 0, 2)
    base = _rho_base(data, x, E)
    n_acc = 0
    for i, b in enumerate(gt.BLOCKS):
        kappa = chain.rho_kappa[i]
        prop = chain.rng.dirichlet(kappa * x.rho[b] + PROPOSAL_FLOOR)
        accept = False
        if (prop > 0).all():
            log_r = rho_log_ratio(i, x, prop, data, hyper, kappa, base, power)
            accept = math.log(chain.rng.uniform()) < log_r
        if accept:
            x.rho[b] = prop
        n_acc += accept
        chain.counts["rho"][0] += accept
        chain.counts["rho"][1] += 1
        chain.counts["rho_window"][i] += (accept, 1)
    return n_acc


def _adapt(chain):
    lo, hi = KAPPA_BOUNDS
    for kappa, window in ((chain.w_kappa, chain.counts["w_window"]),
                          (chain.rho_kappa, chain.counts["rho_window"])):
        rate = window[:, 0] / np.maximum(window[:, 1], 1)
        kappa[rate < 0.2] *= 2.0
        kappa[rate > 0.4] /= 2.0
        np.clip(kappa, lo, hi, out=kappa)
        window[:] = 0


def scan(chain, data, tables, hyper, adapting=False):
    """One full sweep: all genotype rows, every weight row, then the noise blocks."""
    gibbs_update_rows(chain, data, tables)
    E = gt.EMISSION[:, chain.x.Z - 1].transpose(1, 0, 2)  # (K, 8, C)
    for t in range(data.T):
        mh_update_w(t, chain, data, hyper, E=E)
    mh_update_rho(chain, data, hyper, E)
    chain.loglik = _state_loglik(data, chain.x)
    chain.counts["scans"] += 1
    if adapting and hyper.adapt and chain.counts["scans"] % ADAPT_WINDOW == 0:
        _adapt(chain)


def swap_log_ratio(beta_i, beta_j, loglik_i, loglik_j):
    return (beta_i - beta_j) * (loglik_j - loglik_i)


def tree_move_log_ratio(b, loglik_new, loglik_old, logprior_new, logprior_old):
    """Held-out likelihood ratio at power ``1 - b`` times the tree prior ratio."""
    return (1.0 - b) * (loglik_new - loglik_old) + logprior_new - logprior_old


def pt_sweep(ladder, data, tables, hyper, sweep, rng, adapting=False, swap_stats=None):
    """Advance each rung one scan, then try adjacent swaps every `swap_period` sweeps."""
    for chain in ladder:
        scan(chain, data, tables, hyper, adapting)
    if len(ladder) > 1 and (sweep + 1) % hyper.swap_period == 0:
        for i in range(len(ladder) - 1):
            a, b = ladder[i], ladder[i + 1]
            log_r = swap_log_ratio(a.power, b.power, a.loglik, b.loglik)
            accept = log_r >= 0 or math.log(rng.uniform()) < log_r
            if accept:
                a.swap_with(b)
            if swap_stats is not None:
                swap_stats[i] += (accept, 1)
    return ladder


class Sampler:
    """Holds every replica and cache of one posterior run."""

    def __init__(self, counts, hyper):
        self.counts = counts
        self.hyper = hyper
        self.data = _Data(counts)
        self.space = enumerate_tree_space(hyper.c_min, hyper.c_max)
        K = counts.K
        self.tables = [TreeTables(t, K, hyper.lam_for(len(t), K)) for t in self.space.trees]
        self.log_prior_tree = self.space.log_prior(hyper.alpha, hyper.beta)
        seed = int(hyper.seed)
        self.rng = np.random.default_rng([seed, 0])
        T = counts.n_samples
        self.feasible = np.ones(len(self.space), dtype=bool)
        self.train = []
        for j, parent in enumerate(self.space.trees):
            chain = self._new_chain(j, hyper.b_train, np.random.default_rng([seed, 3, j]))
            if chain is None:
                self.feasible[j] = False
            self.train.append(chain)
        if not self.feasible.any():
            raise ValueError("no tree in the space admits a genotype matrix for this K")
        self.log_prior_tree = np.where(self.feasible, self.log_prior_tree, -np.inf)
        self.hot = {}
        if hyper.n_warm:
            for j in np.flatnonzero(self.feasible):
                self._warm_up(int(j))
        p = np.exp(self.log_prior_tree - self.log_prior_tree.max())
        start = int(self.rng.choice(len(self.space), p=p / p.sum()))
        self.cold = self._new_chain(start, 1.0, np.random.default_rng([seed, 1, 0]))
        if hyper.n_warm:
            self.cold.take(self.train[start])
        self.swap_stats = np.zeros((len(hyper.temperatures) - 1, 2), dtype=np.int64)
        self.tree_stats = [0, 0]
        self.T = T

    def _new_chain(self, j, power, rng):
        parent = self.space.trees[j]
        try:
            x = sample_state_prior(parent, self.counts.n_samples, self.counts.K, self.hyper, rng)
        except ValueError:
            return None
        tables = self.tables[j]
        chain = ChainState(
            tree=j, x=x, idx=tables.row_index(x.Z), power=power, rng=rng,
            w_kappa=np.full(self.counts.n_samples, self.hyper.w_step),
            rho_kappa=np.full(3, self.hyper.rho_step),
        )
        chain.loglik = _state_loglik(self.data, x)
        return chain

    def _warm_up(self, j):
        """Tempered burn-in of tree `j`'s training chain.

        The chain runs `n_warm` sweeps of a ladder at powers ``b_train * beta``;
        the hot rungs are then re-powered to the plain ladder and kept as the
        starting replicas of tree `j`.
        """
        hyper = self.hyper
        seed = int(hyper.seed)
        hot = [
            self._new_chain(j, hyper.b_train * beta, np.random.default_rng([seed, 2, j, i]))
            for i, beta in enumerate(hyper.temperatures[1:], start=1)
        ]
        ladder = [self.train[j]] + hot
        rng = np.random.default_rng([seed, 4, j])
        for sweep in range(hyper.n_warm):
            pt_sweep(ladder, self.data, self.tables[j], hyper, sweep, rng, adapting=True)
        for chain, beta in zip(hot, hyper.temperatures[1:]):
            chain.power = beta
            chain.loglik = _state_loglik(self.data, chain.x)
        self.hot[j] = hot

    def ladder(self):
        j = self.cold.tree
        if j not in self.hot:
            seed = int(self.hyper.seed)
            self.hot[j] = [
                self._new_chain(j, beta, np.random.default_rng([seed, 2, j, i]))
                for i, beta in enumerate(self.hyper.temperatures[1:], start=1)
            ]
        return [self.cold] + self.hot[j]

    def tree_move(self, adapting=False):
        """Propose a tree uniformly and accept on the held-out likelihood fraction."""
        hyper = self.hyper
        j, _ = propose_tree_uniform(self.space, self.rng)
        if not self.feasible[j]:
            self.tree_stats[1] += 1
            return False
        train = self.train[j]
        for _ in range(hyper.n_inner):
            scan(train, self.data, self.tables[j], hyper, adapting)
        log_r = tree_move_log_ratio(hyper.b_train, train.loglik, self.cold.loglik,
                                    self.log_prior_tree[j], self.log_prior_tree[self.cold.tree])
        accept = log_r >= 0 or math.log(self.rng.uniform()) < log_r
        if accept:
            # The state being left is a posterior draw for its tree; it
            # re-seeds that tree's training chain, which otherwise mixes
            # only through its few inner scans per proposal.
            left = self.train[self.cold.tree]
            old = ChainState(tree=self.cold.tree, x=self.cold.x, idx=self.cold.idx,
                             power=left.power, rng=left.rng, w_kappa=left.w_kappa,
                             rho_kappa=left.rho_kappa, loglik=self.cold.loglik)
            self.cold.take(train)
            left.take(old)
        self.tree_stats[0] += accept
        self.tree_stats[1] += 1
        return accept

    def log_posterior(self, chain):
        parent = self.space.trees[chain.tree]
        lp = log_prior_state(chain.x, parent, self.hyper, self.counts.K)
        return chain.loglik + lp + self.log_prior_tree[chain.tree], lp

    def iterate(self, it, adapting):
        ladder = self.ladder()
        pt_sweep(ladder, self.data, self.tables[self.cold.tree], self.hyper, it,
                 self.rng, adapting, self.swap_stats)
        if (it + 1) % self.hyper.tree_move_period == 0:
            self.tree_move(adapting)


def run(counts, hyper):
    """Run the full sampler and return the cold-chain output."""
    if not isinstance(counts, ReadCounts):
        counts = ReadCounts(counts)
    hyper.validate()
    space = enumerate_tree_space(hyper.c_min, hyper.c_max)
    n_keep = hyper.n_iter - hyper.burn_in
    trace = {k: [] for k in ("iteration", "logpost", "loglik", "C", "tree")}
    draws = {k: [] for k in ("tree", "Z", "w", "rho", "loglik", "logprior")}
    if hyper.n_iter == 0:
        return _finish(space, hyper, trace, draws, {})
    sampler = Sampler(counts, hyper)
    for it in range(hyper.n_iter):
        adapting = it < hyper.burn_in
        sampler.iterate(it, adapting)
        cold = sampler.cold
        logpost, lp_x = sampler.log_posterior(cold)
        trace["iteration"].append(it + 1)
        trace["logpost"].append(logpost)
        trace["loglik"].append(cold.loglik)
        trace["C"].append(cold.x.C)
        trace["tree"].append(cold.tree)
        if not adapting:
            draws["tree"].append(cold.tree)
            draws["Z"].append(cold.x.Z.copy())
            draws["w"].append(cold.x.w.copy())
            draws["rho"].append(cold.x.rho.copy())
            draws["loglik"].append(cold.loglik)
            draws["logprior"].append(lp_x + sampler.log_prior_tree[cold.tree])
        if (it + 1) % hyper.log_every == 0:
            acc = _acceptance(sampler)
            log.info(
                "iter %d logpost %.2f C=%d tree=%d acc w=%.2f rho=%.2f tree=%.3f",
                it + 1, logpost, cold.x.C, cold.tree, acc["w"], acc["rho"], acc["tree"],
            )
    assert len(draws["tree"]) == n_keep
    return _finish(space, hyper, trace, draws, _acceptance(sampler))


def _acceptance(sampler):
    def rate(pair):
        return pair[0] / pair[1] if pair[1] else math.nan

    cold = sampler.cold
    return {
        "w": rate(cold.counts["w"]),
        "rho": rate(cold.counts["rho"]),
        "tree": rate(sampler.tree_stats),
        "swap": [rate(s) for s in sampler.swap_stats],
    }


def _finish(space, hyper, trace, draws, acceptance):
    trace = {
        "iteration": np.asarray(trace["iteration"], dtype=np.int64),
        "logpost": np.asarray(trace["logpost"], dtype=float),
        "loglik": np.asarray(trace["loglik"], dtype=float),
        "C": np.asarray(trace["C"], dtype=np.int64),
        "tree": np.asarray(trace["tree"], dtype=np.int64),
    }
    return ChainOutput(
        space=space,
        hyper=hyper,
        tree_index=np.asarray(draws["tree"], dtype=np.int64),
        Z=draws["Z"],
        w=draws["w"],
        rho=np.asarray(draws["rho"], dtype=float).reshape(-1, 8),
        loglik=np.asarray(draws["loglik"], dtype=float),
        logprior=np.asarray(draws["logprior"], dtype=float),
        trace=trace,
        acceptance=acceptance,
    )
