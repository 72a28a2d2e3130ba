import warnings

import numpy as np
import pytest

from mpamp.amp import se_fixed_point, se_run
from mpamp.model import SignalPrior
from mpamp.rate_dp import (
    CodingRatePlan,
    DpGrid,
    GridTooCoarseError,
    UnreachableTargetError,
    asymptotic_growth_rate,
    distortion_ratio_check,
    dp_optimize,
    emse_db,
    exhaustive_optimize,
    plan_cost,
    pseudo_data_variance,
    rd_distortion,
    tail_growth_rate,
    theta,
)

# mpmath: derivative of the scalar MSE at the fixed-point channel, rho=0.2, kappa=1, noise 0.01
THETA_FIG1 = 0.3529130797573564
SIGMA_INF2_FIG1 = 0.004761446149330407

# toy problems: (rho, kappa, noise_var, P, b, target dB)
TOYS = [
    (0.1, 1.0, 0.05, 2, 1.0, 1.0),
    (0.1, 1.0, 0.05, 4, 0.5, 0.5),
    (0.05, 1.0, 0.1, 3, 2.0, 0.3),
    (0.1, 1.0, 0.05, 4, 0.2, 0.5),
    (0.1, 1.0, 0.05, 8, 0.1, 1.0),
]
TOY_GRID = DpGrid(n_states=2000, rate_step=1.0, rate_max=4.0, max_iters=3)


@pytest.mark.parametrize("rho,kappa,nv,P,b,target", TOYS)
def test_dp_matches_exhaustive_search(rho, kappa, nv, P, b, target):
    prior = SignalPrior(rho)
    best, _ = exhaustive_optimize(kappa, nv, prior, P, b, [0, 1, 2, 3, 4], 3, target_emse_db=target)
    plan = dp_optimize(kappa, nv, prior, P, b, target_emse_db=target, grid=TOY_GRID)
    assert plan.total_cost == pytest.approx(best)
    assert plan.terminal_emse_db <= target


def test_theta_and_growth_oracle(bg_prior):
    assert theta(1.0, bg_prior, 0.01 + SIGMA_INF2_FIG1) == pytest.approx(THETA_FIG1, rel=1e-7)
    assert asymptotic_growth_rate(THETA_FIG1) == pytest.approx(0.7513075971, abs=1e-9)


def test_growth_rate_domain():
    assert asymptotic_growth_rate(1.0) == 0.0
    assert asymptotic_growth_rate(0.25) == pytest.approx(1.0)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            asymptotic_growth_rate(bad)


def test_theta_flags_non_contractive():
    # below the phase transition the fixed point is not stable
    prior = SignalPrior(0.3)
    with pytest.warns(RuntimeWarning):
        th = theta(0.05, prior, 0.3)
    assert th >= 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        theta(1.0, SignalPrior(0.2), 0.0147)


def test_rd_models():
    r = np.array([0.0, 1.0, 3.0])
    assert np.allclose(rd_distortion("gaussian", 2.0, r), 2.0 * 4.0 ** -r)
    ecsq = rd_distortion("ecsq", 2.0, r)
    assert np.all(ecsq >= rd_distortion("gaussian", 2.0, r) - 1e-12)
    with pytest.raises(ValueError):
        rd_distortion("lattice", 1.0, r)
    assert pseudo_data_variance(SignalPrior(0.2), 10, 0.5) == pytest.approx((0.02 + 0.5) / 10)


def test_emse_db():
    assert emse_db(2.0, 1.0) == pytest.approx(10 * np.log10(2))
    assert emse_db(1.0, 1.0) == 0.0


def _mid_problem():
    # a mid-size instance that plans in a couple of seconds
    return dict(kappa=1.0, noise_var=0.01, prior=SignalPrior(0.2), P=10,
                target_emse_db=0.05, grid=DpGrid(n_states=300, rate_step=0.05, rate_max=10))


def test_plan_meets_target_and_is_consistent():
    kw = _mid_problem()
    plan = dp_optimize(b=0.5, **kw)
    assert plan.terminal_emse_db <= 0.05
    assert plan.total_cost == pytest.approx(plan_cost(plan.rates, 0.5))
    assert plan.horizon == len(plan.distortions) == len(plan.se)
    sig, mmse = se_fixed_point(1.0, 0.01, kw["prior"], tol=1e-14)
    assert emse_db(plan.se.predicted_mse[-1], mmse) == pytest.approx(plan.terminal_emse_db)
    # distortions follow from rates through the RD model
    src = pseudo_data_variance(kw["prior"], 10, 0.01 + sig)
    assert np.allclose(plan.distortions, rd_distortion("ecsq", src, plan.rates))


def test_horizon_nonincreasing_in_b():
    kw = _mid_problem()
    horizons = [dp_optimize(b=b, **kw).horizon for b in (0.1, 0.5, 2.0, 8.0)]
    assert horizons == sorted(horizons, reverse=True)


def test_large_b_gives_minimal_horizon():
    kw = _mid_problem()
    plan = dp_optimize(b=1e3, **kw)
    sig, mmse = se_fixed_point(1.0, 0.01, kw["prior"], tol=1e-14)
    tr = se_run(1.0, 0.01, kw["prior"], 200)
    lossless_T = int(np.argmax(emse_db(tr.predicted_mse, mmse) <= 0.05)) + 1
    assert plan.horizon == lossless_T
    assert plan.rates[-1] > 3


def test_rates_grow_in_the_tail():
    plan = dp_optimize(b=0.5, **_mid_problem())
    assert np.all(np.diff(plan.rates[-4:]) > 0)


def test_gaussian_model_cheaper_than_ecsq():
    kw = _mid_problem()
    g = dp_optimize(b=0.5, rd_model="gaussian", **kw)
    e = dp_optimize(b=0.5, rd_model="ecsq", **kw)
    assert g.total_cost <= e.total_cost + 1e-9


def test_tracking_source_variance_runs():
    plan = dp_optimize(b=0.5, source_variance="tracking", **_mid_problem())
    assert plan.terminal_emse_db <= 0.05
    assert plan.source_var[0] > plan.source_var[-1]


def test_errors():
    prior = SignalPrior(0.2)
    with pytest.raises(UnreachableTargetError):
        dp_optimize(1.0, 0.01, prior, 10, 0.5, target_emse_db=0.005, grid=DpGrid(max_iters=2))
    with pytest.raises(GridTooCoarseError):
        dp_optimize(1.0, 0.01, prior, 10, 0.5, target_emse_db=0.05,
                    grid=DpGrid(n_states=100, rate_step=0.1, rate_max=0.5))
    with pytest.raises(ValueError):
        dp_optimize(1.0, 0.01, prior, 10, 0.5, target_emse_db=0.0)
    with pytest.raises(ValueError):
        dp_optimize(1.0, 0.01, prior, 10, -1.0)
    with pytest.raises(ValueError):
        dp_optimize(1.0, 0.01, prior, 10, 0.5, rd_model="nope")
    with pytest.raises(UnreachableTargetError):
        dp_optimize(0.5, 0.0, SignalPrior(0.1), 2, 0.5)
    with pytest.raises(ValueError):
        DpGrid(n_states=1)


def test_distortion_ratios():
    plan = CodingRatePlan(rates=[1, 2, 3, 4], distortions=[1.0, 0.5, 0.2, 0.1], b=1.0)
    assert np.allclose(distortion_ratio_check(plan), [0.5, 0.4, 0.5])
    lossless = CodingRatePlan(rates=[32, 32], distortions=[0.0, 0.0], b=1.0)
    assert distortion_ratio_check(lossless).size == 0


def test_tail_growth_rate():
    assert tail_growth_rate(np.arange(10) * 0.5) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        tail_growth_rate([1, 2, 3])


def test_plan_roundtrip():
    plan = CodingRatePlan(rates=[0.0, 1.5], distortions=[0.1, 0.01], b=0.7)
    again = CodingRatePlan.from_dict(plan.to_dict())
    assert np.array_equal(again.rates, plan.rates) and again.b == 0.7
    with pytest.raises(ValueError):
        CodingRatePlan(rates=[1.0], distortions=[0.1, 0.2], b=1.0)
    with pytest.raises(ValueError):
        CodingRatePlan(rates=[-1.0], distortions=[0.1], b=1.0)
