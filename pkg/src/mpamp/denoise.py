"""Bayes-optimal scalar denoiser for the Bernoulli-Gaussian prior.

The scalar channel is ``U = X + tau * Z`` with ``Z ~ N(0, 1)``.  ``eta`` is the
conditional mean ``E[X | U = u]`` and ``scalar_mse`` its mean squared error,
both in closed form up to a one-dimensional Gauss-Hermite integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.special import expit, log_expit

from .model import SignalPrior

__all__ = [
    "ScalarChannel",
    "eta",
    "eta_prime",
    "posterior_nonzero",
    "scalar_mse",
    "scalar_mse_derivative",
    "channel_expectation",
]

GH_ORDER = 201


@dataclass(frozen=True)
class ScalarChannel:
    tau2: float

    def __post_init__(self):
        if not self.tau2 >= 0:
            raise ValueError(f"channel variance must be >= 0, got {self.tau2}")


def _tau2(channel) -> float:
    tau2 = channel.tau2 if isinstance(channel, ScalarChannel) else float(channel)
    if not tau2 >= 0:
        raise ValueError(f"channel variance must be >= 0, got {tau2}")
    return tau2


@lru_cache(maxsize=8)
def _hermite_rule(order: int):
    # probabilists' Hermite: weight exp(-z^2/2), normalised to a N(0,1) expectation
    z, w = np.polynomial.hermite_e.hermegauss(order)
    return z, w / np.sqrt(2.0 * np.pi)


def posterior_nonzero(u, channel, prior: SignalPrior):
    """P(X != 0 | U = u), evaluated through a logistic of the log-likelihood ratio."""
    tau2 = _tau2(channel)
    u = np.asarray(u, dtype=float)
    if tau2 == 0.0 and prior.rho > 0.0:
        return np.ones_like(u)
    return posterior_nonzero_array(u, tau2, prior)


def eta(u, channel, prior: SignalPrior):
    """Conditional mean ``E[X | X + tau Z = u]``; identity when ``tau2 == 0``."""
    tau2 = _tau2(channel)
    u = np.asarray(u, dtype=float)
    if tau2 == 0.0:
        return u.copy()
    v = prior.nonzero_variance
    return posterior_nonzero(u, tau2, prior) * u * (v / (v + tau2))


def eta_prime(u, channel, prior: SignalPrior):
    """Derivative of :func:`eta` with respect to ``u``."""
    tau2 = _tau2(channel)
    u = np.asarray(u, dtype=float)
    if tau2 == 0.0:
        return np.ones_like(u)
    v = prior.nonzero_variance
    s = v + tau2
    pi = posterior_nonzero(u, tau2, prior)
    dlogit = u * (v / (tau2 * s))
    return (v / s) * (pi + u * pi * (1.0 - pi) * dlogit)


def scalar_mse(channel, prior: SignalPrior, order: int = GH_ORDER):
    """``E[(eta(X + tau Z) - X)^2]`` with the matched denoiser.

    The expectation over X splits over the two mixture components.  Given a
    nonzero X the pair (X, U) is jointly Gaussian, so the conditional variance
    ``v tau^2 / (v + tau^2)`` is exact and only the shrinkage error
    ``(v/s)^2 u^2 (1 - pi(u))^2`` needs quadrature.  That term lives on the
    scale of tau rather than sqrt(v + tau^2), so both pieces are integrated in
    ``z = u / tau``, with the density ratio folded into the weights.

    ``channel`` may be an array of variances; the result then has its shape.
    """
    if isinstance(channel, ScalarChannel):
        channel = channel.tau2
    tau2 = np.asarray(channel, dtype=float)
    if np.any(~(tau2 >= 0)):
        raise ValueError("channel variance must be >= 0")
    if tau2.ndim == 0:
        return float(_mse_array(tau2.reshape(1), prior, order)[0])
    return _mse_array(tau2.ravel(), prior, order).reshape(tau2.shape)


def _mse_array(tau2: np.ndarray, prior: SignalPrior, order: int, chunk: int = 4096):
    z, w = _hermite_rule(order)
    rho, v = prior.rho, prior.nonzero_variance
    out = np.zeros(tau2.shape)
    pos = np.flatnonzero(tau2 > 0)
    for lo in range(0, len(pos), chunk):
        idx = pos[lo : lo + chunk]
        t2 = tau2[idx][:, None]
        s = v + t2
        mse = np.zeros(len(idx))
        if rho < 1.0:
            u = np.sqrt(t2) * z
            e0 = posterior_nonzero_array(u, t2, prior) * u * (v / s)
            mse += (1.0 - rho) * ((e0 * e0) @ w)
        if rho > 0.0:
            shrink_err = 0.0
            if rho < 1.0:
                zz = z * z
                logit = np.log(rho) - np.log1p(-rho) + 0.5 * np.log(t2 / s) + 0.5 * zz * (v / s)
                # log of (1 - pi)^2 * N(u; 0, s) * tau / N(z; 0, 1)
                log_g = 2.0 * log_expit(-logit) + 0.5 * np.log(t2 / s) + 0.5 * zz * (v / s)
                shrink_err = (v / s[:, 0]) ** 2 * t2[:, 0] * ((zz * np.exp(log_g)) @ w)
            mse += rho * (v * t2[:, 0] / s[:, 0] + shrink_err)
        out[idx] = mse
    return out


def posterior_nonzero_array(u, tau2, prior: SignalPrior):
    """:func:`posterior_nonzero` with a broadcastable array of positive variances."""
    if prior.rho == 0.0:
        return np.zeros(np.broadcast(u, tau2).shape)
    if prior.rho == 1.0:
        return np.ones(np.broadcast(u, tau2).shape)
    v = prior.nonzero_variance
    s = v + tau2
    logit = (
        np.log(prior.rho)
        - np.log1p(-prior.rho)
        + 0.5 * np.log(tau2 / s)
        + 0.5 * u * u * (v / (tau2 * s))
    )
    return expit(logit)


def scalar_mse_derivative(sigma2: float, prior: SignalPrior, rel_step: float = 1e-4) -> float:
    """Slope of :func:`scalar_mse` in the channel variance, by central differences."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    h = rel_step * sigma2
    return (scalar_mse(sigma2 + h, prior) - scalar_mse(sigma2 - h, prior)) / (2.0 * h)


def channel_expectation(fn, channel, prior: SignalPrior, points_per_tau: int = 60) -> float:
    """``E[fn(eta(X + tau Z), X)]`` for a vectorized ``fn(a, x)``.

    The outer integral over ``u`` uses Simpson's rule on a grid fine enough to
    resolve the posterior step (width of order tau).  Given ``u`` and a
    nonzero ``X``, ``X`` is Gaussian and is integrated by Gauss-Hermite.
    """
    tau2 = _tau2(channel)
    rho, v = prior.rho, prior.nonzero_variance
    if tau2 == 0.0:
        raise ValueError("channel_expectation needs a positive channel variance")
    tau, s = np.sqrt(tau2), v + tau2
    half = 10.0 * np.sqrt(s)
    n = int(min(max(2 * half / tau * points_per_tau, 2001), 400_001)) | 1
    u = np.linspace(-half, half, n)
    a = eta(u, tau2, prior)
    total = 0.0
    if rho < 1.0:
        dens0 = np.exp(-0.5 * u * u / tau2) / np.sqrt(2 * np.pi * tau2)
        vals0 = np.broadcast_to(fn(a, np.zeros_like(u)), u.shape)
        total += (1.0 - rho) * simpson(vals0 * dens0, x=u)
    if rho > 0.0:
        z, w = _hermite_rule(61)
        x = u[:, None] * (v / s) + np.sqrt(v * tau2 / s) * z
        inner = np.broadcast_to(fn(a[:, None], x), x.shape) @ w
        dens1 = np.exp(-0.5 * u * u / s) / np.sqrt(2 * np.pi * s)
        total += rho * simpson(inner * dens1, x=u)
    return float(total)
