"""Centralized AMP with the Bayes-optimal Bernoulli-Gaussian denoiser, and its
state evolution.

Variance conventions used throughout the package:

* ``sigma2`` is the SE variance excluding measurement noise, ``sigma_0^2 =
  E[X^2] / kappa`` and ``sigma_{t+1}^2 = scalar_mse(tau_t^2) / kappa``;
* ``tau2 = noise_var + sigma2`` is the variance of the equivalent scalar
  channel the denoiser sees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoise import eta, eta_prime, scalar_mse
from .model import LinearProblem, SignalPrior

__all__ = [
    "DivergenceError",
    "AmpState",
    "SeTrace",
    "amp_run",
    "se_run",
    "se_fixed_point",
    "check_divergence",
    "track_mse",
]

MAX_FIXED_POINT_ITERS = 10_000


class DivergenceError(RuntimeError):
    """Raised when an iterate blows up; ``iteration`` is the offending index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class AmpState:
    x: np.ndarray
    z: np.ndarray
    t: int
    sigma2_hat: float
    path: list[np.ndarray] | None = field(default=None, repr=False)


@dataclass
class SeTrace:
    """Per-iteration SE record; entry ``t`` describes the channel feeding ``x_{t+1}``."""

    sigma2: np.ndarray
    tau2: np.ndarray
    predicted_mse: np.ndarray

    def __len__(self):
        return len(self.sigma2)


def check_divergence(t: int, x: np.ndarray, mse: float, second_moment: float) -> None:
    if not np.all(np.isfinite(x)) or not np.isfinite(mse):
        raise DivergenceError(t, "non-finite estimate")
    if mse > 1e3 * max(second_moment, np.finfo(float).tiny):
        raise DivergenceError(t, f"MSE {mse:.3g} exceeds 1e3 * E[X^2]")


def track_mse(t: int, x: np.ndarray, truth: np.ndarray | None, prior: SignalPrior) -> float:
    """Empirical MSE against ``truth`` (NaN when unknown), with divergence checks."""
    if truth is None:
        if not np.all(np.isfinite(x)):
            raise DivergenceError(t, "non-finite estimate")
        return np.nan
    err = x - truth
    mse = float(err @ err) / len(x)
    check_divergence(t, x, mse, prior.second_moment)
    return mse


def _check_problem(problem: LinearProblem) -> None:
    A, y, x = problem.A, problem.y, problem.x_true
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError(f"dimension mismatch: A {A.shape}, y {y.shape}")
    if x is not None and x.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: A {A.shape}, x_true {x.shape}")


def amp_run(
    problem: LinearProblem,
    prior: SignalPrior,
    iters: int,
    keep_path: bool = False,
):
    """Run ``iters`` AMP iterations from ``x_0 = 0, z_0 = 0``.

    The denoiser at each step is calibrated with ``||z_t||^2 / M``.  Returns
    ``(state, mse)`` where ``mse[t] = ||x_{t+1} - x_true||^2 / N`` (NaN when
    ``problem.x_true`` is None).
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    _check_problem(problem)
    A, y = problem.A, problem.y
    M, N = A.shape
    inv_kappa = N / M
    truth = problem.x_true

    x = np.zeros(N)
    z_prev = np.zeros(M)
    g_prev = 0.0
    mse = np.empty(iters)
    path = [x] if keep_path else None
    for t in range(iters):
        z = y - A @ x + inv_kappa * g_prev * z_prev
        tau2 = float(z @ z) / M
        f = x + A.T @ z
        x = eta(f, tau2, prior)
        g_prev = float(np.mean(eta_prime(f, tau2, prior)))
        z_prev = z
        mse[t] = track_mse(t, x, truth, prior)
        if keep_path:
            path.append(x)
    return AmpState(x=x, z=z_prev, t=iters, sigma2_hat=tau2, path=path), mse


def se_run(kappa: float, noise_var: float, prior: SignalPrior, iters: int) -> SeTrace:
    """Centralized state evolution, ``iters + 1`` entries starting at ``sigma_0^2``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    sigma2 = np.empty(iters + 1)
    tau2 = np.empty(iters + 1)
    pred = np.empty(iters + 1)
    s2 = prior.second_moment / kappa
    for t in range(iters + 1):
        sigma2[t] = s2
        tau2[t] = noise_var + s2
        pred[t] = scalar_mse(tau2[t], prior)
        s2 = pred[t] / kappa
    return SeTrace(sigma2, tau2, pred)


def se_fixed_point(
    kappa: float,
    noise_var: float,
    prior: SignalPrior,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """Iterate SE from ``sigma_0^2`` to its (worst) fixed point.

    Returns ``(sigma_inf2, mmse)`` with ``mmse = scalar_mse(noise_var + sigma_inf2)``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    s2 = prior.second_moment / kappa
    # absolute floor so noiseless exact recovery (sigma2 -> 0) terminates
    floor = 1e-12 * max(s2, np.finfo(float).tiny)
    for _ in range(MAX_FIXED_POINT_ITERS):
        nxt = scalar_mse(noise_var + s2, prior) / kappa
        if abs(nxt - s2) < tol * max(s2, floor):
            return nxt, scalar_mse(noise_var + nxt, prior)
        s2 = nxt
    raise RuntimeError(
        f"state evolution did not converge in {MAX_FIXED_POINT_ITERS} iterations"
    )
