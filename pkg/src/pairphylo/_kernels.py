"""Compiled inner loop of the genotype Gibbs scan."""

import numpy as np
from numba import njit


@njit(cache=True)
def gibbs_scan(idx, loglik, power, gain, notfull, parent0, logtrans, F, u):
    """Resample every row index of `idx` in place, in order k = 0..K-1.

    Parameters
    ----------
    idx : int64 (K,)
        Current candidate-row index of each mutation pair.
    loglik : float64 (K, R)
        Log-likelihood of pair k under candidate row r.
    power : float
        Likelihood exponent (inverse temperature or training fraction).
    gain, notfull : int64 (R, C)
        Per candidate row: 1 if column c gains a mutation over its parent /
        1 if column c has fewer than four mutations.
    parent0 : int64 (C,)
        0-based parent column of each column (entry 0 unused).
    logtrans : float64 (R,)
        Sum of log single-mutation transition masses of the row's gains.
    F : float64 (K + 1, K + 1)
        Column factor table indexed by [open pairs of parent, gains].
    u : float64 (K,)
        Uniform variates, one per pair.
    """
    K, R = loglik.shape
    C = gain.shape[1]
    m = np.zeros(C, np.int64)
    L = np.zeros(C, np.int64)
    for k in range(K):
        r = idx[k]
        for c in range(C):
            m[c] += gain[r, c]
            L[c] += notfull[r, c]
    logp = np.empty(R)
    for k in range(K):
        r0 = idx[k]
        for c in range(C):
            m[c] -= gain[r0, c]
            L[c] -= notfull[r0, c]
        best = -np.inf
        for r in range(R):
            lp = power * loglik[k, r] + logtrans[r]
            for c in range(1, C):
                pc = parent0[c]
                lp += F[L[pc] + notfull[r, pc], m[c] + gain[r, c]]
            logp[r] = lp
            if lp > best:
                best = lp
        chosen = r0
        if best > -np.inf:
            total = 0.0
            for r in range(R):
                logp[r] = np.exp(logp[r] - best)
                total += logp[r]
            target = u[k] * total
            acc = 0.0
            chosen = R - 1
            for r in range(R):
                acc += logp[r]
                if acc > target and logp[r] > 0.0:
                    chosen = r
                    break
            while logp[chosen] == 0.0:
                chosen -= 1
        idx[k] = chosen
        for c in range(C):
            m[c] += gain[chosen, c]
            L[c] += notfull[chosen, c]
    return idx
