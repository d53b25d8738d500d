import itertools
import math

import numpy as np
import pytest

from pairphylo import model as md
from pairphylo import sampler as sp
from pairphylo.simulate import SimulationSpec, simulate


def make_chain(parent, counts, hyper, seed=0, power=1.0):
    K, T = counts.K, counts.n_samples
    rng = np.random.default_rng(seed)
    tables = sp.TreeTables(parent, K, hyper.lam_for(len(parent), K))
    x = md.sample_state_prior(parent, T, K, hyper, rng)
    chain = sp.ChainState(tree=0, x=x, idx=tables.row_index(x.Z), power=power, rng=rng,
                          w_kappa=np.full(T, hyper.w_step), rho_kappa=np.full(3, hyper.rho_step))
    data = sp._Data(counts)
    chain.loglik = sp._state_loglik(data, x)
    return chain, data, tables


@pytest.fixture(scope="module")
def small_problem():
    # K = 2 pairs, C = 3 subclones; few reads so the joint over Z stays diffuse
    rng = np.random.default_rng(7)
    n = rng.integers(0, 2, size=(2, 2, 8))
    counts = md.ReadCounts(n)
    hyper = md.Hyperparameters(lam=1.5)
    return counts, hyper, (0, 1, 2)


def exact_joint(chain, counts, tables, hyper, parent):
    """p(Z | w, rho, n) over all valid Z, by exhaustive enumeration."""
    rows = tables.rows
    Zs = list(itertools.product(range(len(rows)), repeat=counts.K))
    logp = []
    for combo in Zs:
        Z = rows[list(combo)]
        x = md.ModelState(Z, chain.x.w, chain.x.rho)
        lp = md.log_prior_Z(Z, parent, hyper.lam_for(len(parent), counts.K))
        logp.append(lp + md.log_likelihood(counts, x) if lp > -math.inf else -math.inf)
    logp = np.array(logp)
    p = np.exp(logp - logp.max())
    return Zs, p / p.sum()


def test_row_conditional_matches_enumeration(small_problem):
    counts, hyper, parent = small_problem
    chain, data, tables = make_chain(parent, counts, hyper, seed=1)
    Zs, joint = exact_joint(chain, counts, tables, hyper, parent)
    R = len(tables.rows)
    other = chain.idx[1]
    cond = np.array([joint[Zs.index((r, other))] for r in range(R)])
    np.testing.assert_allclose(sp.row_conditional(0, chain, data, tables), cond / cond.sum(),
                               atol=1e-12)


def test_gibbs_kernel_joint_total_variation(small_problem):
    counts, hyper, parent = small_problem
    chain, data, tables = make_chain(parent, counts, hyper, seed=2)
    Zs, joint = exact_joint(chain, counts, tables, hyper, parent)
    index = {z: i for i, z in enumerate(Zs)}
    freq = np.zeros(len(Zs))
    n_draws = 100_000
    for _ in range(n_draws):
        sp.gibbs_update_rows(chain, data, tables)
        freq[index[tuple(int(i) for i in chain.idx)]] += 1
    tv = 0.5 * np.abs(freq / n_draws - joint).sum()
    assert tv < 0.02


def test_gibbs_respects_tree(small_problem):
    counts, hyper, parent = small_problem
    chain, data, tables = make_chain(parent, counts, hyper, seed=3)
    for _ in range(50):
        sp.gibbs_update_rows(chain, data, tables)
        assert np.isfinite(md.log_prior_Z(chain.x.Z, parent, 1.0))


@pytest.fixture(scope="module")
def sim_problem():
    spec = SimulationSpec(K=12, C=3, n_samples=2, depth_mean=60, seed=3)
    truth, counts = simulate(spec)
    return truth, counts


def test_w_detailed_balance(sim_problem):
    truth, counts = sim_problem
    hyper = md.Hyperparameters()
    data = sp._Data(counts)
    x = truth.state.copy()
    E = md.gt.EMISSION[:, x.Z - 1].transpose(1, 0, 2)
    rng = np.random.default_rng(0)
    for kappa in (5.0, 300.0):
        for _ in range(20):
            prop = md.sample_dirichlet(kappa * x.w[1] + sp.PROPOSAL_FLOOR, rng)
            fwd = sp.w_log_ratio(1, x, prop, data, hyper, kappa, E, 0.7)
            y = x.copy()
            y.w[1] = prop
            bwd = sp.w_log_ratio(1, y, x.w[1], data, hyper, kappa, E, 0.7)
            assert fwd + bwd == pytest.approx(0.0, abs=1e-8)
    assert sp.w_log_ratio(0, x, x.w[0].copy(), data, hyper, 300.0, E, 1.0) == pytest.approx(0.0)


def test_rho_detailed_balance(sim_problem):
    truth, counts = sim_problem
    hyper = md.Hyperparameters()
    data = sp._Data(counts)
    x = truth.state.copy()
    E = md.gt.EMISSION[:, x.Z - 1].transpose(1, 0, 2)
    base = sp._rho_base(data, x, E)
    rng = np.random.default_rng(1)
    for i, b in enumerate(md.gt.BLOCKS):
        prop = md.sample_dirichlet(50 * x.rho[b] + sp.PROPOSAL_FLOOR, rng)
        fwd = sp.rho_log_ratio(i, x, prop, data, hyper, 50.0, base, 1.0)
        y = x.copy()
        y.rho[b] = prop
        bwd = sp.rho_log_ratio(i, y, x.rho[b], data, hyper, 50.0, base, 1.0)
        assert fwd + bwd == pytest.approx(0.0, abs=1e-8)
        assert sp.rho_log_ratio(i, x, x.rho[b].copy(), data, hyper, 50.0, base, 1.0) == \
            pytest.approx(0.0)


def test_mh_updates_leave_prior_invariant():
    # With no reads the MH steps must sample the prior; compare means.
    counts = md.ReadCounts(np.zeros((1, 4, 8), dtype=int))
    hyper = md.Hyperparameters()
    chain, data, tables = make_chain((0, 1, 1), counts, hyper, seed=5)
    chain.w_kappa[:] = 3.0
    chain.rho_kappa[:] = 3.0
    w, rho = [], []
    for _ in range(40000):
        sp.mh_update_w(0, chain, data, hyper)
        sp.mh_update_rho(chain, data, hyper)
        w.append(chain.x.w[0].copy())
        rho.append(chain.x.rho.copy())
    w, rho = np.array(w)[2000:], np.array(rho)[2000:]
    conc = np.array([hyper.d0, hyper.d, hyper.d, hyper.d])
    np.testing.assert_allclose(w.mean(axis=0), conc / conc.sum(), atol=0.03)
    np.testing.assert_allclose(rho.mean(axis=0), [0.25] * 4 + [0.5] * 4, atol=0.03)


def test_swap_ratio():
    assert sp.swap_log_ratio(0.5, 0.5, -10.0, -3.0) == 0.0
    assert sp.swap_log_ratio(1.0, 0.5, -10.0, -3.0) == pytest.approx(3.5)


def test_equal_temperatures_always_swap(sim_problem):
    _, counts = sim_problem
    hyper = md.Hyperparameters(temperatures=(1.0, 1.0, 1.0))
    chains = [make_chain((0, 1, 1), counts, hyper, seed=s)[0] for s in range(3)]
    data = sp._Data(counts)
    tables = sp.TreeTables((0, 1, 1), counts.K, hyper.lam_for(3, counts.K))
    stats = np.zeros((2, 2), dtype=np.int64)
    rng = np.random.default_rng(0)
    for sweep in range(10):
        sp.pt_sweep(chains, data, tables, hyper, sweep, rng, swap_stats=stats)
    np.testing.assert_array_equal(stats[:, 0], stats[:, 1])


def test_tree_move_ratio_identity():
    assert sp.tree_move_log_ratio(0.95, -100.0, -100.0, -2.0, -2.0) == 0.0
    assert sp.tree_move_log_ratio(0.9, -90.0, -100.0, -2.0, -3.0) == pytest.approx(2.0)


def test_adaptation_frozen_after_burn_in(sim_problem):
    _, counts = sim_problem
    hyper = md.Hyperparameters()
    chain, data, tables = make_chain((0, 1, 1), counts, hyper)
    for _ in range(sp.ADAPT_WINDOW):
        sp.scan(chain, data, tables, hyper, adapting=True)
    before = chain.w_kappa.copy(), chain.rho_kappa.copy()
    for _ in range(2 * sp.ADAPT_WINDOW):
        sp.scan(chain, data, tables, hyper, adapting=False)
    np.testing.assert_array_equal(chain.w_kappa, before[0])
    np.testing.assert_array_equal(chain.rho_kappa, before[1])


@pytest.fixture(scope="module")
def short_run(sim_problem):
    _, counts = sim_problem
    hyper = md.Hyperparameters(n_iter=150, burn_in=50, c_max=4, n_warm=20, seed=9)
    return counts, hyper, sp.run(counts, hyper)


def test_run_records_valid_draws(short_run):
    counts, hyper, out = short_run
    assert out.n_draws == 100
    assert len(out.trace["logpost"]) == 150
    for i in range(out.n_draws):
        parent, x = out.draw(i)
        x.check(parent)
        assert out.loglik[i] == pytest.approx(md.log_likelihood(counts, x))
        lp = md.log_prior_state(x, parent, hyper, counts.K)
        assert out.logprior[i] == pytest.approx(lp + out.space.log_prior(0.5, 0.5)[out.tree_index[i]])
    acc = out.acceptance
    assert 0 < acc["w"] < 1 and 0 < acc["tree"] < 1
    assert all(0 <= s <= 1 for s in acc["swap"])


def test_run_is_deterministic(short_run):
    counts, hyper, out = short_run
    again = sp.run(counts, hyper)
    np.testing.assert_array_equal(out.tree_index, again.tree_index)
    np.testing.assert_array_equal(out.trace["logpost"], again.trace["logpost"])
    for a, b in zip(out.w, again.w):
        np.testing.assert_array_equal(a, b)


def test_zero_iterations():
    counts = md.ReadCounts(np.zeros((0, 0, 8), dtype=int))
    out = sp.run(counts, md.Hyperparameters(n_iter=0, burn_in=0))
    assert out.n_draws == 0


def test_logging(sim_problem, caplog):
    _, counts = sim_problem
    hyper = md.Hyperparameters(n_iter=20, burn_in=10, c_max=3, n_warm=0, log_every=10)
    with caplog.at_level("INFO", logger="pairphylo.sampler"):
        sp.run(counts, hyper)
    lines = [r.getMessage() for r in caplog.records]
    assert len(lines) == 2 and lines[0].startswith("iter 10 logpost")
