import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpamp.quantize import (
    QuantizerSpec,
    dithered_step,
    ecsq_distortion_at_rate,
    ecsq_model,
    empirical_entropy,
    gaussian_rd,
    quantize,
    step_for_distortion,
)

# high-rate gap of uniform ECSQ to the Gaussian R(D): 0.5 log2(pi e / 6)
HIGH_RATE_GAP = 0.5 * np.log2(np.pi * np.e / 6)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuantizerSpec(0.0)
    with pytest.raises(ValueError):
        quantize(np.array([]), QuantizerSpec(1.0))


def test_entropy_of_known_distributions():
    assert empirical_entropy(np.zeros(10, dtype=int)) == 0.0
    assert empirical_entropy(np.arange(8)) == pytest.approx(3.0)
    assert empirical_entropy(np.array([0, 0, 1, 1])) == pytest.approx(1.0)


def test_undithered_midtread():
    q = quantize(np.array([0.49, 0.51, -1.49, 2.0]), QuantizerSpec(1.0, dithered=False))
    assert q.indices.tolist() == [0, 1, -1, 2]
    assert np.array_equal(q.recon, q.indices.astype(float))


def test_dither_reproducible_by_seed():
    v = np.random.default_rng(0).normal(size=100)
    a = quantize(v, QuantizerSpec(0.3), seed=5)
    b = quantize(v, QuantizerSpec(0.3), seed=5)
    c = quantize(v, QuantizerSpec(0.3), seed=6)
    assert np.array_equal(a.recon, b.recon) and not np.array_equal(a.recon, c.recon)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 0.5), st.integers(0, 10_000))
def test_dithered_error_is_uniform(D, seed):
    v = np.random.default_rng(seed).normal(scale=2.0, size=50_000)
    q = quantize(v, QuantizerSpec(dithered_step(D)), seed=seed + 1)
    err = v - q.recon
    assert np.max(np.abs(err)) <= dithered_step(D) / 2 + 1e-12
    # variance of U(-d/2, d/2) sample mean squared: sd = d^2 / (6 sqrt(5 n))
    assert q.distortion == pytest.approx(D, abs=5 * dithered_step(D) ** 2 / (6 * np.sqrt(5 * len(v))))


def test_infinite_step_sends_nothing():
    v = np.arange(5.0)
    q = quantize(v, QuantizerSpec(np.inf))
    assert q.rate_bits_per_symbol == 0.0 and np.all(q.recon == 0)
    assert ecsq_model(2.0, np.inf) == (0.0, 2.0)


def test_model_matches_simulation():
    step = 0.7
    rng = np.random.default_rng(1)
    v = rng.normal(scale=1.5, size=2_000_000)
    q = quantize(v, QuantizerSpec(step, dithered=False))
    R, D = ecsq_model(1.5**2, step)
    assert q.rate_bits_per_symbol == pytest.approx(R, abs=2e-3)
    assert q.distortion == pytest.approx(D, rel=3e-3)


def test_fine_step_limits():
    R, D = ecsq_model(1.0, 0.01)
    assert D == pytest.approx(0.01**2 / 12, rel=1e-3)
    assert R - gaussian_rd(1.0, D) == pytest.approx(HIGH_RATE_GAP, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 30.0), st.floats(0.1, 10.0))
def test_model_dominates_shannon_bound(step, var):
    R, D = ecsq_model(var, step)
    if D < var:
        assert R >= gaussian_rd(var, D) - 1e-9


def test_envelope_monotone_and_scaled():
    r = np.linspace(0, 12, 200)
    d = ecsq_distortion_at_rate(1.0, r)
    assert d[0] == pytest.approx(1.0)
    assert np.all(np.diff(d) <= 0)
    assert np.all(r[1:] >= 0.5 * np.log2(1.0 / d[1:]) - 1e-9)
    assert np.allclose(ecsq_distortion_at_rate(3.0, r), 3.0 * d)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(1e-4, 0.9))
def test_step_for_distortion_inverts_model(var, frac):
    D = frac * var
    step = step_for_distortion(var, D)
    assert ecsq_model(var, step)[1] == pytest.approx(D, rel=1e-4)


def test_step_for_distortion_edges():
    assert step_for_distortion(1.0, 1.0) == np.inf
    with pytest.raises(ValueError):
        step_for_distortion(1.0, 2.0)
    with pytest.raises(ValueError):
        step_for_distortion(0.0, 0.1)
    with pytest.raises(ValueError):
        gaussian_rd(1.0, 0.0)
    with pytest.raises(ValueError):
        dithered_step(-1.0)
