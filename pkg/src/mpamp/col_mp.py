"""Column-partitioned multi-processor AMP (C-MP-AMP).

Node ``p`` owns the columns ``A^p`` and the matching block ``x^p``.  In outer
iteration ``s`` the fusion center sums the nodes' measurement-space vectors
``r^u`` into ``g_s`` and sends it back; every node then runs ``t_s`` inner
AMP iterations against the equivalent measurements
``y - g_s - (r^p_{s,t} - r^p_{s,0})`` without further communication.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .amp import se_fixed_point, track_mse
from .denoise import eta, eta_prime, scalar_mse
from .model import ColPartition, LinearProblem, SignalPrior
from .netsim import GlobalResidualSum, Network, ResidualContribution, raw_bits

__all__ = [
    "Schedule",
    "ColNodeState",
    "CmpResult",
    "CmpSeTrace",
    "cmp_run",
    "cmp_se_run",
    "cmp_fixed_point_check",
]

MAX_OUTER_ITERS = 100_000


@dataclass(frozen=True)
class Schedule:
    """Inner-iteration counts ``t_s`` for outer iterations ``s = 1..len(inner)``."""

    inner: tuple[int, ...]

    def __post_init__(self):
        inner = tuple(int(t) for t in self.inner)
        if len(inner) < 1:
            raise ValueError("schedule needs at least one outer iteration")
        if any(t < 1 for t in inner):
            raise ValueError(f"inner iteration counts must be >= 1, got {inner}")
        object.__setattr__(self, "inner", inner)

    @property
    def outer(self) -> int:
        return len(self.inner)

    @property
    def total_inner(self) -> int:
        return sum(self.inner)

    @classmethod
    def constant(cls, outer: int, inner: int = 1) -> "Schedule":
        return cls((inner,) * outer)

    @classmethod
    def increasing(cls, outer: int) -> "Schedule":
        """``t_s = s``."""
        return cls(tuple(range(1, outer + 1)))

    def steps(self) -> list[tuple[int, int]]:
        """(s, t) pairs in execution order, 1-based ``s`` and 0-based ``t``."""
        return [(s, t) for s, ts in enumerate(self.inner, start=1) for t in range(ts)]


@dataclass
class ColNodeState:
    x: np.ndarray
    r: np.ndarray
    z: np.ndarray


@dataclass
class CmpResult:
    """Rows are (s, t) steps; row ``k`` describes ``x_{s,t+1}``."""

    x: np.ndarray
    steps: list[tuple[int, int]]
    mse: np.ndarray
    node_mse: np.ndarray
    node_abs: np.ndarray
    tau2_hat: np.ndarray
    ledger: object
    history: list | None = field(default=None, repr=False)


@dataclass
class CmpSeTrace:
    """Per-step, per-node SE; ``tau2[k, p]`` is the channel producing ``x^p_{s,t+1}``."""

    steps: list[tuple[int, int]]
    sigma2: np.ndarray
    sigma2_outer0: np.ndarray
    tau2: np.ndarray
    node_mse: np.ndarray
    predicted_mse: np.ndarray
    sigma2_final: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.steps)


def _check_partition(problem: LinearProblem, partition: ColPartition):
    N = problem.A.shape[1]
    if partition.P != len(partition.ranges) or sum(partition.sizes) != N:
        raise ValueError(f"column partition sizes {partition.sizes} do not sum to N={N}")
    start = 0
    for r in partition.ranges:
        if r.start != start or len(r) < 1:
            raise ValueError("column partition must be contiguous and non-empty")
        start = r.stop


def cmp_run(
    problem: LinearProblem,
    partition: ColPartition,
    prior: SignalPrior,
    schedule: Schedule,
    network: Network | None = None,
    keep_history: bool = False,
) -> CmpResult:
    """Run C-MP-AMP; the output concatenates the nodes' final estimates."""
    A, y = problem.A, problem.y
    if A.ndim != 2 or y.shape != (A.shape[0],):
        raise ValueError(f"dimension mismatch: A {A.shape}, y {y.shape}")
    M, N = A.shape
    truth = problem.x_true
    if truth is not None and truth.shape != (N,):
        raise ValueError(f"dimension mismatch: A {A.shape}, x_true {truth.shape}")
    _check_partition(problem, partition)
    P = partition.P
    net = network if network is not None else Network(P)
    if net.P != P:
        raise ValueError(f"network has {net.P} workers but partition has {P} nodes")

    blocks = partition.blocks()
    A_p = [A[:, b] for b in blocks]
    x_p_true = [None if truth is None else truth[b] for b in blocks]
    states = [ColNodeState(np.zeros(len(r)), np.zeros(M), np.zeros(M)) for r in partition.ranges]

    steps = schedule.steps()
    K = len(steps)
    mse = np.empty(K)
    node_mse = np.full((K, P), np.nan)
    node_abs = np.empty((K, P))
    tau2_hat = np.empty((K, P))
    history = [] if keep_history else None

    k0 = 0
    for s, ts in enumerate(schedule.inner, start=1):

        def make_worker(p):
            return lambda: ResidualContribution(raw_bits(M), node=p, r=states[p].r)

        def center(messages):
            g = messages[0].r.copy()
            for m in messages[1:]:
                g += m.r
            return GlobalResidualSum(raw_bits(M), g=g)

        _, reply = net.run_round(s - 1, [make_worker(p) for p in range(P)], center)
        g = reply.g

        for p in net._execution_order():
            st = states[p]
            r0 = st.r.copy()
            for t in range(ts):
                z = y - g - (st.r - r0)
                tau2 = float(z @ z) / M
                f = st.x + A_p[p].T @ z
                x_new = eta(f, tau2, prior)
                onsager = float(np.sum(eta_prime(f, tau2, prior)))
                r_new = A_p[p] @ x_new - (z / M) * onsager
                if keep_history:
                    history.append(
                        dict(s=s, t=t, p=p, x=st.x, r=st.r, r0=r0, g=g, z=z, tau2=tau2,
                             x_next=x_new, r_next=r_new)
                    )
                st.x, st.r, st.z = x_new, r_new, z
                k = k0 + t
                tau2_hat[k, p] = tau2
                node_abs[k, p] = float(np.mean(np.abs(x_new)))
                if x_p_true[p] is not None:
                    err = x_new - x_p_true[p]
                    node_mse[k, p] = float(err @ err) / len(err)

        sizes = np.asarray(partition.sizes, dtype=float)
        for k in range(k0, k0 + ts):
            mse[k] = np.nan if truth is None else float(node_mse[k] @ sizes) / N
        k0 += ts

    x = np.concatenate([st.x for st in states])
    if truth is not None:
        track_mse(K - 1, x, truth, prior)
    elif not np.all(np.isfinite(x)):
        track_mse(K - 1, x, None, prior)
    return CmpResult(
        x=x,
        steps=steps,
        mse=mse,
        node_mse=node_mse,
        node_abs=node_abs,
        tau2_hat=tau2_hat,
        ledger=net.ledger,
        history=history,
    )


def cmp_se_run(
    kappa_p: Sequence[float],
    noise_var: float,
    prior: SignalPrior,
    schedule: Schedule,
) -> CmpSeTrace:
    """C-MP-AMP state evolution over the whole schedule."""
    kp = np.asarray(kappa_p, dtype=float)
    if kp.ndim != 1 or len(kp) < 1 or np.any(~(kp > 0)):
        raise ValueError(f"all kappa_p must be positive, got {kappa_p}")
    inv = 1.0 / kp
    weights = inv / inv.sum()
    steps = schedule.steps()
    K, P = len(steps), len(kp)
    sigma2 = np.empty((K, P))
    sig0 = np.empty((K, P))
    tau2 = np.empty((K, P))
    node_mse = np.empty((K, P))

    cur = inv * prior.second_moment
    k = 0
    for ts in schedule.inner:
        start = cur.copy()
        common = noise_var + start.sum()
        for _ in range(ts):
            sigma2[k] = cur
            sig0[k] = start
            tau2[k] = np.maximum(common + (cur - start), 0.0)
            node_mse[k] = scalar_mse(tau2[k], prior)
            cur = inv * node_mse[k]
            k += 1
    return CmpSeTrace(
        steps=steps,
        sigma2=sigma2,
        sigma2_outer0=sig0,
        tau2=tau2,
        node_mse=node_mse,
        predicted_mse=node_mse @ weights,
        sigma2_final=cur,
        weights=weights,
    )


def _outer_step(inv, noise_var, prior, inner, sigma_start):
    """One outer iteration of C-MP-AMP SE started from ``sigma_start``."""
    cur = sigma_start.copy()
    common = noise_var + sigma_start.sum()
    for _ in range(inner):
        cur = inv * scalar_mse(np.maximum(common + (cur - sigma_start), 0.0), prior)
    return cur


def cmp_fixed_point_check(
    kappa_p: Sequence[float],
    noise_var: float,
    prior: SignalPrior,
    tol: float = 1e-8,
    inner: int = 2,
    rtol: float = 1e-13,
):
    """Run C-MP-AMP SE to stationarity and compare with the centralized fixed point.

    Returns ``(tau2_star, matches_centralized)``.  A match needs
    ``|tau2_star - tau2_central| <= tol`` and ``tau2_star`` to solve the
    centralized fixed-point equation to within ``tol``.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    kp = np.asarray(kappa_p, dtype=float)
    if kp.ndim != 1 or len(kp) < 1 or np.any(~(kp > 0)):
        raise ValueError(f"all kappa_p must be positive, got {kappa_p}")
    inv = 1.0 / kp
    kappa = 1.0 / inv.sum()
    sigma = inv * prior.second_moment
    tau2 = noise_var + sigma.sum()
    # absolute floor so the exact-recovery case (tau2 -> 0) terminates
    floor = 1e-12 * tau2
    for _ in range(MAX_OUTER_ITERS):
        sigma = _outer_step(inv, noise_var, prior, inner, sigma)
        nxt = noise_var + sigma.sum()
        done = abs(nxt - tau2) <= rtol * max(tau2, floor)
        tau2 = nxt
        if done:
            break
    else:
        raise RuntimeError(f"C-MP-AMP SE did not settle in {MAX_OUTER_ITERS} outer iterations")

    residual = abs(tau2 - (noise_var + scalar_mse(tau2, prior) / kappa))
    sigma_inf2, _ = se_fixed_point(kappa, noise_var, prior, tol=1e-14)
    tau2_central = noise_var + sigma_inf2
    matches = abs(tau2 - tau2_central) <= tol and residual <= tol
    return tau2, bool(matches)
