"""Point estimates, error metrics, convergence and goodness-of-fit summaries."""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import genotype as gt
from .model import ModelState, tilde_p_all
from .phylogeny import format_tree


@dataclass
class FitReport:
    """Posterior summary conditional on the modal tree."""

    trees: tuple
    tree_probs: dict
    mode: int
    ties: list
    map_draw: int
    Z: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    map_loglik: float
    map_logpost: float
    n_draws: int
    n_mode_draws: int
    interval_level: float = 0.95
    p_lower: np.ndarray = None
    p_upper: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def tree(self):
        return self.trees[self.mode]

    @property
    def C(self):
        return len(self.tree)

    def tilde_p(self):
        return tilde_p_all(self.Z, self.w, self.rho)

    def ranked_trees(self):
        return sorted(self.tree_probs.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self):
        Z = np.asarray(self.Z)
        return {
            "n_draws": int(self.n_draws),
            "trees": [
                {"index": int(j), "tree": format_tree(self.trees[j]),
                 "C": len(self.trees[j]), "probability": float(p)}
                for j, p in self.ranked_trees()
            ],
            "mode": {"index": int(self.mode), "tree": format_tree(self.tree), "C": self.C,
                     "draws": int(self.n_mode_draws)},
            "ties": [format_tree(self.trees[j]) for j in self.ties],
            "map": {
                "draw": int(self.map_draw),
                "loglik": _num(self.map_loglik),
                "logpost": _num(self.map_logpost),
                "Z_codes": Z.astype(int).tolist(),
                "Z_matrices": [[gt.representative(int(q)).tolist() for q in row] for row in Z],
                "w": np.asarray(self.w).tolist(),
                "rho": np.asarray(self.rho).tolist(),
            },
            "p_tilde_interval": None if self.p_lower is None else {
                "level": self.interval_level,
                "lower": self.p_lower.tolist(),
                "upper": self.p_upper.tolist(),
            },
            **self.extra,
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def summarize(output, level=0.95, counts=None):
    """Modal tree, MAP draw within it, and credible intervals of the read probabilities.

    With `counts`, the R^B goodness-of-fit summary over the modal-tree draws
    is attached under ``extra["gof"]``.
    """
    if output.n_draws == 0:
        raise ValueError("cannot summarize an empty chain")
    idx = output.tree_index
    visited, freq = np.unique(idx, return_counts=True)
    probs = {int(j): c / output.n_draws for j, c in zip(visited, freq)}
    # Ties go to the smallest index, i.e. smaller C first (space order).
    best = freq.max()
    tied = [int(j) for j in visited[freq == best]]
    mode = tied[0]
    draws = np.flatnonzero(idx == mode)
    score = output.loglik[draws] + output.logprior[draws]
    l_hat = int(draws[np.argmax(score)])
    _, state = output.draw(l_hat)

    tail = (1.0 - level) / 2.0
    P = np.stack([
        tilde_p_all(output.Z[i], output.w[i], output.rho[i]) for i in draws
    ])
    lo, hi = np.quantile(P, [tail, 1.0 - tail], axis=0)
    extra = {}
    if counts is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = gof_rb(counts, draws_for(output, mode))
        extra["gof"] = g.summary()
    return FitReport(
        trees=output.space.trees,
        tree_probs=probs,
        mode=mode,
        ties=tied if len(tied) > 1 else [],
        map_draw=l_hat,
        Z=state.Z,
        w=state.w,
        rho=state.rho,
        map_loglik=float(output.loglik[l_hat]),
        map_logpost=float(score.max()),
        n_draws=output.n_draws,
        n_mode_draws=len(draws),
        interval_level=level,
        p_lower=lo,
        p_upper=hi,
        extra=extra,
    )


@dataclass
class ErrorMetrics:
    c_err: int
    t_err: int
    z_err: float
    w_err: float
    z_err_snv: float
    size_mismatched: bool = False
    matching: tuple = None

    def as_row(self):
        return (self.c_err, self.t_err, self.z_err, self.w_err)


def _matchings(C_true, C_est):
    """Injective maps of non-normal columns of the smaller side into the larger.

    Yields ``(truth_cols, est_cols)`` index arrays of equal length that
    always start with the normal column 0.
    """
    small = min(C_true, C_est)
    if C_true <= C_est:
        for perm in itertools.permutations(range(1, C_est), small - 1):
            yield np.arange(small), np.array((0,) + perm, dtype=int)
    else:
        for perm in itertools.permutations(range(1, C_true), small - 1):
            yield np.array((0,) + perm, dtype=int), np.arange(small)


def _same_tree(tree, est_tree, relabel):
    """Whether `tree`, with column c renamed ``relabel[c]``, equals `est_tree`."""
    if len(tree) != len(est_tree):
        return False
    return all(est_tree[relabel[c]] - 1 == relabel[tree[c] - 1] for c in range(1, len(tree)))


def reconstruction_errors(truth_tree, truth_state, est_tree, est_Z, est_w):
    """Error rates of an estimate against the simulation truth.

    Column labels are matched by the permutation of non-normal subclones that
    minimizes genotype mismatches (ties broken by weight error); the same
    permutation is applied to the weights.  When the number of subclones
    differs, the best injective matching of the smaller into the larger set
    is used and the result is flagged.

    Parent vectors that differ only by a relabeling of subclones describe the
    same phylogeny, so the trees are compared after relabeling the truth by
    the matching: among the genotype-optimal matchings one that maps the true
    tree onto the estimated tree is preferred.
    """
    Z, w = np.asarray(truth_state.Z), np.asarray(truth_state.w)
    Zh, wh = np.asarray(est_Z), np.asarray(est_w)
    if Z.shape[0] != Zh.shape[0]:
        raise ValueError(f"K mismatch: truth has {Z.shape[0]} pairs, estimate {Zh.shape[0]}")
    if w.shape[0] != wh.shape[0]:
        raise ValueError("sample count mismatch between truth and estimate")
    K, C = Z.shape
    Ch = Zh.shape[1]
    T = w.shape[0]
    small = min(C, Ch)
    denom_z = K * (small - 1)
    best, best_snv = None, math.inf
    dose, dose_h = gt.LOCUS1_DOSAGE[Z - 1], gt.LOCUS1_DOSAGE[Zh - 1]
    for cols, cols_h in _matchings(C, Ch):
        mism = int((Z[:, cols] != Zh[:, cols_h]).sum())
        werr = float(np.abs(w[:, cols + 1] - wh[:, cols_h + 1]).sum()) / (T * small)
        t_bad = C != Ch or not _same_tree(truth_tree, est_tree, cols_h)
        key = (mism, t_bad, werr)
        if best is None or key < best[0]:
            best = (key, cols, cols_h)
        best_snv = min(best_snv, int((dose[:, cols] != dose_h[:, cols_h]).sum()))
    (mism, t_bad, werr), cols, cols_h = best
    z_err = mism / denom_z if denom_z else 0.0
    z_snv = best_snv / denom_z if denom_z else 0.0
    return ErrorMetrics(
        c_err=int(C != Ch),
        t_err=int(t_bad),
        z_err=z_err,
        w_err=werr,
        z_err_snv=z_snv,
        size_mismatched=C != Ch,
        matching=(tuple(int(c) for c in cols), tuple(int(c) for c in cols_h)),
    )


def report_errors(truth, report):
    """`reconstruction_errors` for a simulation truth and a `FitReport`."""
    return reconstruction_errors(truth.tree, truth.state, report.tree, report.Z, report.w)


def psrf(traces):
    """Potential scale reduction factor of scalar traces from several chains."""
    traces = [np.asarray(t, dtype=float) for t in traces]
    if len(traces) < 2:
        raise ValueError("need at least two chains")
    n = len(traces[0])
    if n < 2 or any(len(t) != n for t in traces):
        raise ValueError("chains must have equal length >= 2")
    x = np.stack(traces)
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else math.inf
    V = (n - 1) / n * W + B / n
    return float(np.sqrt(V / W))


def coverage_check(true_p, lower, upper):
    """Fraction of read-type probabilities covered by the credible intervals."""
    true_p = np.asarray(true_p)
    if true_p.shape != np.shape(lower) or true_p.shape != np.shape(upper):
        raise ValueError("truth and interval tables must have the same shape")
    inside = (true_p >= lower) & (true_p <= upper)
    return float(inside.mean())


@dataclass
class GofResult:
    rb: np.ndarray
    exceedance: float
    threshold: float
    skipped: int

    def summary(self):
        return {"n": len(self.rb), "mean": float(self.rb.mean()),
                "median": float(np.median(self.rb)), "exceedance": self.exceedance,
                "threshold": self.threshold, "skipped": self.skipped}

    def qq(self):
        """Sorted statistics paired with chi-square(7) quantiles of their ranks."""
        L = len(self.rb)
        theo = stats.chi2.ppf((np.arange(1, L + 1) - 0.5) / L, df=gt.N_READ_TYPES - 1)
        return np.sort(self.rb), theo


def expected_pooled(counts, state):
    """``N q_g``: pooled expected counts per read type, with empirical missingness."""
    n = counts.n
    block_tot = np.concatenate(
        [np.repeat(n[..., b].sum(axis=2, keepdims=True), b.stop - b.start, axis=2)
         for b in gt.BLOCKS], axis=2)
    return (block_tot * tilde_p_all(state.Z, state.w, state.rho)).sum(axis=(0, 1))


def gof_rb(counts, draws, level=0.95):
    """Bayesian chi-square statistic of each draw and the exceedance proportion.

    Parameters
    ----------
    counts : ReadCounts
    draws : iterable of ModelState
    level : float
        Quantile of chi-square(7) used as the exceedance threshold.
    """
    draws = list(draws)
    if not draws:
        raise ValueError("goodness of fit needs at least one posterior draw")
    M = counts.n.sum(axis=(0, 1)).astype(float)
    skipped = 0
    rb = np.empty(len(draws))
    for i, state in enumerate(draws):
        if state.Z.shape[0] != counts.K or state.w.shape[0] != counts.n_samples:
            raise ValueError("posterior draws do not match the count dimensions")
        Nq = expected_pooled(counts, state)
        ok = Nq > 0
        skipped += int((~ok).sum())
        rb[i] = float((((M - Nq) ** 2)[ok] / Nq[ok]).sum())
    if skipped:
        warnings.warn(f"{skipped} zero-probability categories skipped in R^B")
    threshold = float(stats.chi2.ppf(level, df=gt.N_READ_TYPES - 1))
    return GofResult(rb=rb, exceedance=float((rb > threshold).mean()),
                     threshold=threshold, skipped=skipped)


def draws_for(output, tree_index=None):
    """Posterior draws (as `ModelState`) of `output`, optionally of one tree."""
    for i in range(output.n_draws):
        if tree_index is None or output.tree_index[i] == tree_index:
            yield ModelState(output.Z[i], output.w[i], output.rho[i])
