"""Uniform entropy-coded scalar quantization (ECSQ) of inter-node messages.

Rates are accounted as the zeroth-order entropy of the quantizer indices,
which is what an ideal entropy coder would spend; no bitstream is produced.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .model import as_generator

__all__ = [
    "QuantizerSpec",
    "QuantizedVector",
    "quantize",
    "empirical_entropy",
    "gaussian_rd",
    "ecsq_model",
    "ecsq_rd_curve",
    "ecsq_distortion_at_rate",
    "step_for_distortion",
    "dithered_step",
]


@dataclass(frozen=True)
class QuantizerSpec:
    step: float
    dithered: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"quantizer step must be positive, got {self.step}")


@dataclass
class QuantizedVector:
    indices: np.ndarray
    recon: np.ndarray
    rate_bits_per_symbol: float
    distortion: float


def empirical_entropy(indices: np.ndarray) -> float:
    """Zeroth-order entropy in bits/symbol of an integer sequence."""
    _, counts = np.unique(indices, return_counts=True)
    if len(counts) <= 1:
        return 0.0
    p = counts / counts.sum()
    return float(-(p @ np.log2(p)))


def quantize(v, spec: QuantizerSpec, seed=None) -> QuantizedVector:
    """Mid-tread uniform quantization, with subtractive dither when ``spec.dithered``.

    The dither is drawn uniform on ``[-step/2, step/2)`` from ``seed`` and is
    shared knowledge between encoder and decoder, so it is removed on
    reconstruction.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot quantize an empty vector")
    step = spec.step
    if np.isinf(step):
        indices = np.zeros(v.shape, dtype=np.int64)
        recon = np.zeros_like(v)
    else:
        if spec.dithered:
            dither = (as_generator(seed).random(v.shape) - 0.5) * step
        else:
            dither = 0.0
        indices = np.floor((v + dither) / step + 0.5).astype(np.int64)
        recon = indices * step - dither
    err = v - recon
    return QuantizedVector(
        indices=indices,
        recon=recon,
        rate_bits_per_symbol=empirical_entropy(indices),
        distortion=float(err @ err) / v.size if v.ndim == 1 else float(np.mean(err**2)),
    )


def gaussian_rd(source_var: float, D: float) -> float:
    """Shannon rate-distortion function of a Gaussian source, bits/symbol."""
    if not source_var > 0 or not D > 0:
        raise ValueError(f"need positive source_var and D, got {source_var}, {D}")
    return max(0.0, 0.5 * np.log2(source_var / D))


def _bin_terms(step: float, sigma: float):
    """Per-bin probabilities and squared errors for a Gaussian source."""
    kmax = int(np.ceil(12.0 * sigma / step)) + 1
    k = np.arange(-kmax, kmax + 1)
    a = (k - 0.5) * step / sigma
    b = (k + 0.5) * step / sigma
    c = k * step / sigma
    a[0], b[-1] = -np.inf, np.inf
    Pa, Pb = ndtr(a), ndtr(b)
    fa = np.where(np.isfinite(a), a, 0.0)
    fb = np.where(np.isfinite(b), b, 0.0)
    pa = np.where(np.isfinite(a), np.exp(-0.5 * fa * fa) / np.sqrt(2 * np.pi), 0.0)
    pb = np.where(np.isfinite(b), np.exp(-0.5 * fb * fb) / np.sqrt(2 * np.pi), 0.0)
    a_pa = fa * pa
    b_pb = fb * pb
    mass = Pb - Pa
    # truncated moments of a standard normal over [a, b]
    m1 = pa - pb
    m2 = mass + a_pa - b_pb
    sq_err = (m2 - 2 * c * m1 + c * c * mass) * sigma**2
    return mass, sq_err


def ecsq_model(source_var: float, step: float) -> tuple[float, float]:
    """Model ``(rate, distortion)`` of mid-tread ECSQ on ``N(0, source_var)``.

    Exact bin masses and truncated second moments; no dither.
    """
    if not source_var > 0:
        raise ValueError(f"source_var must be positive, got {source_var}")
    if np.isinf(step):
        return 0.0, float(source_var)
    mass, sq_err = _bin_terms(step, np.sqrt(source_var))
    p = mass[mass > 0]
    rate = float(-(p @ np.log2(p)))
    return max(rate, 0.0), float(sq_err.sum())


def ecsq_rd_curve(source_var: float, step_grid) -> list[tuple[float, float]]:
    steps = np.asarray(step_grid, dtype=float)
    if steps.size == 0 or np.any(~(steps > 0)):
        raise ValueError("step grid must be nonempty and positive")
    return [ecsq_model(source_var, s) for s in steps]


@lru_cache(maxsize=1)
def _unit_envelope():
    """Lower envelope of unit-variance ECSQ: distortion as a function of rate."""
    steps = np.geomspace(1e-2, 40.0, 2000)
    rd = np.array([ecsq_model(1.0, s) for s in steps])
    order = np.argsort(rd[:, 0], kind="stable")
    rates, dists = rd[order, 0], rd[order, 1]
    dists = np.minimum.accumulate(dists)
    rates = np.concatenate([[0.0], rates])
    dists = np.concatenate([[1.0], np.minimum(dists, 1.0)])
    keep = np.concatenate([[True], np.diff(rates) > 1e-12])
    return rates[keep], np.log(dists[keep])


def ecsq_distortion_at_rate(source_var: float, rate) -> np.ndarray:
    """Smallest ECSQ model distortion reachable at ``rate`` bits for a Gaussian source.

    Above the tabulated range the high-rate law ``D ~ 2^{-2R}`` extends the table.
    """
    rates, log_d = _unit_envelope()
    rate = np.asarray(rate, dtype=float)
    top = rates[-1]
    inside = np.interp(np.minimum(rate, top), rates, log_d)
    extra = np.maximum(rate - top, 0.0) * (-2.0 * np.log(2.0))
    return source_var * np.exp(inside + extra)


def step_for_distortion(source_var: float, target_D: float, rtol: float = 1e-6) -> float:
    """Step whose model ECSQ distortion equals ``target_D`` (``inf`` at ``source_var``).

    Bisection in log-step over the branch where distortion increases with step.
    """
    if not source_var > 0:
        raise ValueError(f"source_var must be positive, got {source_var}")
    if not (0 < target_D <= source_var):
        raise ValueError(f"target distortion {target_D} outside (0, {source_var}]")
    if target_D >= source_var * (1 - 1e-12):
        return np.inf
    sigma = np.sqrt(source_var)
    guess = sigma * np.sqrt(12.0 * target_D / source_var)
    lo, hi = guess / 4.0, guess * 4.0
    while ecsq_model(source_var, lo)[1] > target_D:
        lo /= 2.0
    while ecsq_model(source_var, hi)[1] < target_D:
        hi *= 2.0
        if hi > 1e3 * sigma:
            return np.inf
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if ecsq_model(source_var, mid)[1] < target_D:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < rtol:
            break
    return float(np.sqrt(lo * hi))


def dithered_step(target_D: float) -> float:
    """Step giving distortion ``target_D`` under subtractive dither (``step^2 / 12``)."""
    if not target_D >= 0:
        raise ValueError(f"target distortion must be >= 0, got {target_D}")
    return float(np.sqrt(12.0 * target_D))
