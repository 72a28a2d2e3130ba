"""Coding-rate sequences for lossy R-MP-AMP chosen by dynamic programming.

The planner minimizes ``b * T + sum_t R_t`` over the number of iterations
``T`` and the per-iteration rates, subject to lossy state evolution reaching a
target excess MSE ``10 log10(1 + EMSE / MMSE)`` (dB).  States are the SE
variance, discretized on a grid that is log-spaced in the distance to the
fixed point; the value function is linearly interpolated between grid
points, and the plan itself is rolled out on exact (unprojected) states.
The set of states that can still reach the target in ``k`` iterations is
tracked exactly (bisection at the largest rate), so plans that ride the
feasibility boundary are not lost to interpolation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .amp import se_fixed_point
from .denoise import scalar_mse, scalar_mse_derivative
from .model import SignalPrior
from .quantize import ecsq_distortion_at_rate
from .row_mp import LossySeTrace, lossy_se_run

__all__ = [
    "CodingRatePlan",
    "DpGrid",
    "DpError",
    "UnreachableTargetError",
    "GridTooCoarseError",
    "emse_db",
    "pseudo_data_variance",
    "rd_distortion",
    "dp_optimize",
    "plan_cost",
    "exhaustive_optimize",
    "theta",
    "asymptotic_growth_rate",
    "tail_growth_rate",
    "distortion_ratio_check",
]

RD_MODELS = ("ecsq", "gaussian")
SOURCE_MODELS = ("fixed_point", "tracking")


class DpError(RuntimeError):
    pass


class UnreachableTargetError(DpError):
    """Even lossless SE cannot meet the target within the iteration cap."""


class GridTooCoarseError(DpError):
    """The rolled-out plan misses the target although lossless SE meets it."""


@dataclass
class DpGrid:
    n_states: int = 1000
    rate_step: float = 0.01
    rate_max: float = 12.0
    max_iters: int = 100

    def __post_init__(self):
        if self.n_states < 2 or not self.rate_step > 0 or not self.rate_max > 0:
            raise ValueError("DP grid needs >= 2 states and a positive rate grid")

    def rates(self) -> np.ndarray:
        n = int(round(self.rate_max / self.rate_step))
        return np.arange(n + 1) * self.rate_step


@dataclass
class CodingRatePlan:
    """Per-iteration coding rates (bits/symbol) and planned per-node distortions."""

    rates: np.ndarray
    distortions: np.ndarray
    b: float
    source_var: np.ndarray | None = None
    terminal_emse_db: float | None = None
    se: LossySeTrace | None = field(default=None, repr=False)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.distortions = np.asarray(self.distortions, dtype=float)
        if self.rates.shape != self.distortions.shape:
            raise ValueError("rates and distortions must have the same length")
        if np.any(self.rates < 0):
            raise ValueError("rates must be >= 0")

    @property
    def horizon(self) -> int:
        return len(self.rates)

    @property
    def total_cost(self) -> float:
        return plan_cost(self.rates, self.b)

    def to_dict(self) -> dict:
        return {
            "b": float(self.b),
            "rates": [float(r) for r in self.rates],
            "distortions": [float(d) for d in self.distortions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodingRatePlan":
        return cls(rates=d["rates"], distortions=d["distortions"], b=d.get("b", 0.0))


def plan_cost(rates, b: float) -> float:
    rates = np.asarray(rates, dtype=float)
    return b * len(rates) + float(rates.sum())


def emse_db(mse: float, mmse: float) -> float:
    """``10 log10(1 + EMSE / MMSE)`` with ``EMSE = mse - mmse``."""
    return 10.0 * np.log10(mse / mmse)


def pseudo_data_variance(prior: SignalPrior, P: int, tau2) -> np.ndarray:
    """Per-entry variance of one node's pseudo-data, ``(E[X^2]/P + tau^2) / P``.

    Node ``p`` sees ``x / P`` plus its own share of the channel noise, and the
    shares of ``P`` nodes add up to a channel of variance ``tau^2``.
    """
    return (prior.second_moment / P + np.asarray(tau2, dtype=float)) / P


def rd_distortion(rd_model: str, source_var, rates) -> np.ndarray:
    """Distortion reached at ``rates`` for a Gaussian source of variance ``source_var``."""
    rates = np.asarray(rates, dtype=float)
    if rd_model == "gaussian":
        return np.asarray(source_var) * 2.0 ** (-2.0 * rates)
    if rd_model == "ecsq":
        return ecsq_distortion_at_rate(1.0, rates) * np.asarray(source_var)
    raise ValueError(f"unknown RD model {rd_model!r}; expected one of {RD_MODELS}")


def _checked_inputs(kappa, noise_var, prior, P, b, rd_model, target_emse_db, source_variance):
    if not kappa > 0 or noise_var < 0 or P < 1 or b < 0:
        raise ValueError("need kappa > 0, noise_var >= 0, P >= 1, b >= 0")
    if not target_emse_db > 0:
        raise ValueError(f"target EMSE must be positive (dB), got {target_emse_db}")
    if rd_model not in RD_MODELS:
        raise ValueError(f"unknown RD model {rd_model!r}; expected one of {RD_MODELS}")
    if source_variance not in SOURCE_MODELS:
        raise ValueError(f"unknown source model {source_variance!r}; expected {SOURCE_MODELS}")
    sigma_inf2, mmse = se_fixed_point(kappa, noise_var, prior, tol=1e-14)
    if not mmse > 1e-12 * prior.second_moment:
        raise UnreachableTargetError("MMSE is zero; an EMSE target in dB is undefined")
    return sigma_inf2, mmse


def _source_var(prior, P, tau2, noise_var, sigma_inf2, source_variance):
    if source_variance == "fixed_point":
        return np.broadcast_to(pseudo_data_variance(prior, P, noise_var + sigma_inf2), np.shape(tau2))
    return pseudo_data_variance(prior, P, tau2)


def dp_optimize(
    kappa: float,
    noise_var: float,
    prior: SignalPrior,
    P: int,
    b: float,
    rd_model: str = "ecsq",
    target_emse_db: float = 0.005,
    grid: DpGrid | None = None,
    source_variance: str = "fixed_point",
) -> CodingRatePlan:
    """Optimal coding-rate sequence for lossy R-MP-AMP.

    ``source_variance`` selects the pseudo-data variance fed to the RD model:
    ``"fixed_point"`` uses its value at the SE fixed point for every
    iteration (one fixed R(D) relation), ``"tracking"`` recomputes it from
    the current SE state.
    """
    grid = grid or DpGrid()
    sigma_inf2, mmse = _checked_inputs(
        kappa, noise_var, prior, P, b, rd_model, target_emse_db, source_variance
    )
    limit = mmse * 10.0 ** (target_emse_db / 10.0)
    sigma0 = prior.second_moment / kappa

    def terminal(s2):
        return kappa * np.asarray(s2) <= limit

    # lossless reachability within the iteration cap
    s2 = sigma0
    for _ in range(grid.max_iters):
        s2 = scalar_mse(noise_var + s2, prior) / kappa
        if terminal(s2):
            break
    else:
        raise UnreachableTargetError(
            f"lossless SE does not reach {target_emse_db} dB EMSE in {grid.max_iters} iterations"
        )

    e_term = limit / kappa - sigma_inf2
    if not e_term > 0:
        raise UnreachableTargetError("target is below the numerical resolution of the fixed point")
    e_max = max(sigma0 - sigma_inf2, 10.0 * e_term)
    excess = np.geomspace(e_term, e_max, grid.n_states)
    log_e = np.log(excess)
    rates = grid.rates()

    def successors(e):
        s2 = sigma_inf2 + np.asarray(e, dtype=float)
        tau2 = noise_var + s2
        src = _source_var(prior, P, tau2, noise_var, sigma_inf2, source_variance)
        D = rd_distortion(rd_model, src[..., None], rates)
        nxt = scalar_mse(tau2[..., None] + P * D, prior) / kappa
        return nxt - sigma_inf2, D

    big = 1e300

    def best_next(e):
        # successor under the largest rate, the most favourable action
        tau2 = noise_var + sigma_inf2 + e
        src = _source_var(prior, P, np.array(tau2), noise_var, sigma_inf2, source_variance)
        D = float(rd_distortion(rd_model, src, rates[-1]))
        return scalar_mse(tau2 + P * D, prior) / kappa - sigma_inf2

    def frontier(e_prev):
        """Largest excess whose best successor lands at or below ``e_prev``."""
        if best_next(excess[-1]) <= e_prev:
            return excess[-1]
        if best_next(e_term) > e_prev:
            return e_term
        lo, hi = np.log(e_term), np.log(excess[-1])
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if best_next(np.exp(mid)) <= e_prev:
                lo = mid
            else:
                hi = mid
        return float(np.exp(lo))

    def lookup(V, e_star, e_next):
        # V is finite exactly up to the feasibility frontier e_star; grid
        # points past it are filled with the last finite value so that states
        # between that point and the frontier are not mistaken for infeasible.
        finite = V < big
        filled = np.where(finite, V, V[finite][-1])
        out = np.interp(np.log(np.maximum(e_next, 1e-300)), log_e, filled)
        out[e_next > e_star] = big
        out[e_next <= e_term] = 0.0
        return out

    # values[k], frontiers[k]: cost-to-go and feasible region with k steps left
    e_next, _ = successors(excess)
    V = np.where(excess <= e_term, 0.0, big)
    values, frontiers = [V], [e_term]
    for _ in range(grid.max_iters):
        e_star = frontier(frontiers[-1])
        Q = b + rates + lookup(V, frontiers[-1], e_next)
        V_new = np.minimum(Q.min(axis=1), big)
        V_new[excess <= e_term] = 0.0
        V_new[excess > e_star] = big
        converged = np.array_equal(V_new, V) and e_star == frontiers[-1]
        V = V_new
        values.append(V)
        frontiers.append(e_star)
        if converged:
            break

    chosen, planned_D, src_seq = [], [], []
    e = sigma0 - sigma_inf2
    while not terminal(sigma_inf2 + e):
        left = grid.max_iters - len(chosen) - 1
        if left < 0:
            raise GridTooCoarseError(
                f"rolled-out plan did not reach the target within {grid.max_iters} iterations"
            )
        k = min(left, len(values) - 1)
        nxt, D = successors(np.array([e]))
        q = b + rates + lookup(values[k], frontiers[k], nxt[0])
        best = q.min()
        if best >= big:
            raise GridTooCoarseError("no action leads to a state with finite cost")
        # ties go to the smallest rate
        j = int(np.flatnonzero(q <= best + 1e-12 * max(abs(best), 1.0))[0])
        chosen.append(rates[j])
        planned_D.append(D[0, j])
        src_seq.append(float(_source_var(prior, P, np.array(noise_var + sigma_inf2 + e), noise_var,
                                         sigma_inf2, source_variance)))
        e = nxt[0, j]

    se = lossy_se_run(kappa, noise_var, prior, P, planned_D)
    final_db = emse_db(kappa * se.sigma2_final, mmse)
    if final_db > target_emse_db * (1 + 1e-9):
        raise GridTooCoarseError(
            f"plan reaches {final_db:.6g} dB EMSE, above the {target_emse_db} dB target"
        )
    return CodingRatePlan(
        rates=np.array(chosen),
        distortions=np.array(planned_D),
        b=b,
        source_var=np.array(src_seq),
        terminal_emse_db=final_db,
        se=se,
    )


def exhaustive_optimize(
    kappa: float,
    noise_var: float,
    prior: SignalPrior,
    P: int,
    b: float,
    rate_choices,
    horizon: int,
    rd_model: str = "ecsq",
    target_emse_db: float = 0.005,
    source_variance: str = "fixed_point",
):
    """Brute-force minimum cost over all rate sequences of length <= ``horizon``.

    Returns ``(cost, rates)`` or ``(inf, None)`` when nothing is feasible.
    Intended for cross-checking :func:`dp_optimize` on toy problems.
    """
    import itertools

    sigma_inf2, mmse = _checked_inputs(
        kappa, noise_var, prior, P, b, rd_model, target_emse_db, source_variance
    )
    limit = mmse * 10.0 ** (target_emse_db / 10.0)
    best = (np.inf, None)
    for T in range(1, horizon + 1):
        for seq in itertools.product(rate_choices, repeat=T):
            s2 = prior.second_moment / kappa
            for R in seq:
                tau2 = noise_var + s2
                src = _source_var(prior, P, np.array(tau2), noise_var, sigma_inf2, source_variance)
                D = float(rd_distortion(rd_model, src, R))
                s2 = scalar_mse(tau2 + P * D, prior) / kappa
            if kappa * s2 <= limit:
                cost = plan_cost(seq, b)
                if cost < best[0]:
                    best = (cost, list(seq))
    return best


def theta(kappa: float, prior: SignalPrior, tau_inf2: float) -> float:
    """Contraction factor ``MSE'(tau_inf^2) / kappa`` of SE at its fixed point.

    ``tau_inf2`` is the fixed-point channel variance, measurement noise
    included.  Values >= 1 mean the fixed point is not contractive and are
    flagged with a warning.
    """
    th = scalar_mse_derivative(tau_inf2, prior) / kappa
    if th >= 1.0:
        warnings.warn(f"theta = {th:.4g} >= 1: fixed point is not contractive", RuntimeWarning)
    return th


def asymptotic_growth_rate(theta_value: float) -> float:
    """Limiting per-iteration rate increase ``0.5 log2(1/theta)`` in bits."""
    if not 0.0 < theta_value <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta_value}")
    return 0.5 * np.log2(1.0 / theta_value)


def tail_growth_rate(rates, window: int = 6) -> float:
    """Average rate increase over the last ``window`` iterations."""
    rates = np.asarray(getattr(rates, "rates", rates), dtype=float)
    if len(rates) <= window:
        raise ValueError(f"need more than {window} rates, got {len(rates)}")
    return float(rates[-1] - rates[-1 - window]) / window


def distortion_ratio_check(plan, se: LossySeTrace | None = None) -> np.ndarray:
    """Consecutive ratios ``D_{t+1} / D_t``; pairs touching a zero distortion are dropped."""
    D = np.asarray(se.distortion if se is not None else getattr(plan, "distortions", plan), dtype=float)
    if len(D) < 2:
        return np.empty(0)
    prev, nxt = D[:-1], D[1:]
    ok = (prev > 0) & (nxt > 0)
    return nxt[ok] / prev[ok]
