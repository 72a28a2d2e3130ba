import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpamp.amp import amp_run, se_fixed_point, se_run
from mpamp.col_mp import Schedule, cmp_fixed_point_check, cmp_run, cmp_se_run
from mpamp.denoise import channel_expectation, eta, eta_prime
from mpamp.model import LinearProblem, SignalPrior, make_problem, noise_var_from_snr, partition_cols
from mpamp.netsim import DOWN, UP, Network

from conftest import zscore


def test_schedule():
    assert Schedule.constant(3, 2).inner == (2, 2, 2)
    assert Schedule.increasing(3).inner == (1, 2, 3)
    s = Schedule((1, 2))
    assert s.outer == 2 and s.total_inner == 3
    assert s.steps() == [(1, 0), (2, 0), (2, 1)]
    with pytest.raises(ValueError):
        Schedule(())
    with pytest.raises(ValueError):
        Schedule((1, 0))


def test_single_node_equals_amp(bg_prior):
    pb = make_problem(800, 500, bg_prior, 0.01, seed=3)
    ref, mse = amp_run(pb, bg_prior, 12, keep_path=True)
    res = cmp_run(pb, partition_cols(800, [800]), bg_prior, Schedule((12,)), keep_history=True)
    xs = [h["x_next"] for h in res.history]
    for a, b in zip(ref.path[1:], xs):
        assert np.max(np.abs(a - b)) <= 1e-10
    assert np.allclose(res.mse, mse, rtol=0, atol=1e-12)


def test_r_update_identity_and_conservation(bg_prior):
    pb = make_problem(300, 200, bg_prior, 0.01, seed=8)
    part = partition_cols(300, [100, 120, 80])
    res = cmp_run(pb, part, bg_prior, Schedule((1, 3, 2)), keep_history=True)
    assert res.x.shape == (300,)
    A = pb.A
    for h in res.history:
        A_p = A[:, part.blocks()[h["p"]]]
        z = pb.y - h["g"] - (h["r"] - h["r0"])
        assert np.array_equal(z, h["z"])
        f = h["x"] + A_p.T @ z
        r = A_p @ eta(f, h["tau2"], bg_prior) - (z / 200) * np.sum(eta_prime(f, h["tau2"], bg_prior))
        assert np.allclose(h["r_next"], r, rtol=0, atol=1e-12)
    last = {h["p"]: h["x_next"] for h in res.history}
    assert np.array_equal(res.x, np.concatenate([last[p] for p in range(3)]))


def test_worker_order_and_threads_do_not_matter(bg_prior):
    pb = make_problem(300, 150, bg_prior, 0.01, seed=1)
    part = partition_cols(300, [100] * 3)
    sched = Schedule((2, 2, 1))
    a = cmp_run(pb, part, bg_prior, sched)
    b = cmp_run(pb, part, bg_prior, sched, network=Network(3, order=[2, 0, 1]))
    c = cmp_run(pb, part, bg_prior, sched, network=Network(3, threads=3))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.x, c.x)
    assert a.ledger.rows() == b.ledger.rows()


def test_ledger(bg_prior):
    pb = make_problem(300, 150, bg_prior, 0.01, seed=1)
    res = cmp_run(pb, partition_cols(300, [150, 150]), bg_prior, Schedule((1, 2, 3)))
    assert res.ledger.bits(direction=UP) == 3 * 2 * 150 * 32
    assert res.ledger.bits(direction=DOWN) == 3 * 2 * 150 * 32


def test_single_inner_step_equals_centralized_se(bg_prior):
    for sizes in ([1 / 3] * 3, [0.5, 0.25, 0.25], [0.1, 0.9]):
        kp = [0.4 / s for s in sizes]
        tr = cmp_se_run(kp, 0.02, bg_prior, Schedule.constant(12, 1))
        ref = se_run(0.4, 0.02, bg_prior, 11)
        assert np.allclose(tr.tau2[:, 0], ref.tau2, rtol=1e-14, atol=0)
        assert np.allclose(tr.predicted_mse, ref.predicted_mse, rtol=1e-13, atol=0)


def test_single_node_se_reduces(bg_prior):
    tr = cmp_se_run([0.7], 0.01, bg_prior, Schedule((9,)))
    ref = se_run(0.7, 0.01, bg_prior, 8)
    assert np.allclose(tr.tau2[:, 0], ref.tau2, rtol=1e-14)


def test_equal_split_traces_coincide(bg_prior):
    tr = cmp_se_run([0.9] * 3, 0.01, bg_prior, Schedule.increasing(4))
    assert np.allclose(tr.tau2, tr.tau2[:, :1], rtol=1e-14, atol=0)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(0.5, 5.0), min_size=1, max_size=4),
       st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_se_structure_invariant(kappa_p, inner):
    prior = SignalPrior(0.1)
    tr = cmp_se_run(kappa_p, 0.01, prior, Schedule(tuple(inner)))
    expected = 0.01 + tr.sigma2_outer0.sum(axis=1, keepdims=True) + (tr.sigma2 - tr.sigma2_outer0)
    assert np.allclose(tr.tau2, np.maximum(expected, 0), rtol=1e-13)
    assert np.allclose(tr.weights.sum(), 1.0)
    assert np.allclose(tr.predicted_mse, tr.node_mse @ tr.weights)


@pytest.mark.parametrize("sizes", [[1 / 3] * 3, [0.5, 0.25, 0.25], [0.2, 0.8]])
@pytest.mark.parametrize("inner", [1, 3])
def test_fixed_point_matches_centralized(sizes, inner):
    prior = SignalPrior(0.1)
    kp = [0.5 / s for s in sizes]
    nv = noise_var_from_snr(15, 1, 0.5, prior.second_moment)
    tau2, ok = cmp_fixed_point_check(kp, nv, prior, tol=1e-8, inner=inner)
    s, _ = se_fixed_point(0.5, nv, prior, tol=1e-14)
    assert ok
    assert tau2 == pytest.approx(nv + s, abs=1e-8)
    # no worse than the centralized (worst) fixed point
    assert tau2 <= nv + s + 1e-8


def test_fixed_point_exact_recovery():
    tau2, ok = cmp_fixed_point_check([1.5, 1.5], 0.0, SignalPrior(0.1))
    assert ok and tau2 < 1e-10
    with pytest.raises(ValueError):
        cmp_fixed_point_check([1.0], 0.01, SignalPrior(0.1), tol=0)


def test_se_rejects_bad_kappa(bg_prior):
    with pytest.raises(ValueError):
        cmp_se_run([1.0, 0.0], 0.01, bg_prior, Schedule((1,)))


def test_errors(bg_prior):
    pb = make_problem(100, 50, bg_prior, 0.01, seed=0)
    with pytest.raises(ValueError):
        cmp_run(pb, partition_cols(90, [90]), bg_prior, Schedule((1,)))
    with pytest.raises(ValueError):
        cmp_run(LinearProblem(pb.A, pb.x_true, None, pb.y[:3], 0.01), partition_cols(100, [100]),
                bg_prior, Schedule((1,)))
    with pytest.raises(ValueError):
        cmp_run(pb, partition_cols(100, [50, 50]), bg_prior, Schedule((1,)), network=Network(3))


def test_per_node_functionals_track_se():
    """Per-node MSE and mean |x| against their SE expectations at every (s, t, p)."""
    prior = SignalPrior(0.1)
    N, M, P, trials = 3000, 900, 3, 50
    nv = noise_var_from_snr(15, N, M, prior.second_moment)
    part = partition_cols(N, [1000] * 3)
    sched = Schedule((1, 2, 3))
    se = cmp_se_run(part.kappas(M), nv, prior, sched)
    mse, mabs = [], []
    for t in range(trials):
        r = cmp_run(make_problem(N, M, prior, nv, seed=5000 + t), part, prior, sched)
        mse.append(r.node_mse)
        mabs.append(r.node_abs)
    exp_abs = np.array([[channel_expectation(lambda a, x: np.abs(a), t2, prior) for t2 in row]
                        for row in se.tau2])
    assert np.all(np.abs(zscore(mse, se.node_mse)) < 3)
    assert np.all(np.abs(zscore(mabs, exp_abs)) < 3)
