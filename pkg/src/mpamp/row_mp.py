"""Row-partitioned multi-processor AMP (R-MP-AMP).

Each node holds ``M/P`` rows of ``A`` and the matching measurements.  Per
iteration a node forms its residual ``z_t^p`` and pseudo-data
``f_t^p = x_t / P + (a^p)^T z_t^p``; the fusion center sums the pseudo-data,
denoises, and broadcasts ``x_{t+1}`` and the Onsager scalar ``g_t``.  In the
lossy variant the pseudo-data are ECSQ-quantized before transmission.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .amp import _check_problem, track_mse
from .denoise import eta, eta_prime, scalar_mse
from .model import LinearProblem, RowPartition, SignalPrior, spawn_seeds
from .netsim import Broadcast, ByteLedger, Network, PseudoData, raw_bits
from .quantize import QuantizerSpec, dithered_step, quantize, step_for_distortion

__all__ = [
    "LossySeTrace",
    "RowMpResult",
    "estimate_sigma2",
    "rmp_lossless_run",
    "rmp_lossy_run",
    "lossy_se_run",
    "proportional_distortions",
]


@dataclass
class LossySeTrace:
    """Lossy SE; entry ``t`` is the channel ``tau2 + P D_t`` that produces ``x_{t+1}``."""

    sigma2: np.ndarray
    tau2: np.ndarray
    distortion: np.ndarray
    effective_tau2: np.ndarray
    predicted_mse: np.ndarray
    sigma2_final: float

    def __len__(self):
        return len(self.sigma2)


@dataclass
class RowMpResult:
    x: np.ndarray
    mse: np.ndarray
    rates: np.ndarray
    distortions: np.ndarray
    quant_noise_var: np.ndarray
    tau2_hat: np.ndarray
    total_bits: float
    ledger: ByteLedger
    path: list[np.ndarray] | None = field(default=None, repr=False)


def estimate_sigma2(z, M: int | None = None) -> float:
    """``||z||^2 / M``; ``M`` defaults to ``len(z)`` and lets node blocks be summed."""
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        raise ValueError("residual is empty")
    return float(z @ z) / (len(z) if M is None else M)


def lossy_se_run(
    kappa: float,
    noise_var: float,
    prior: SignalPrior,
    P: int,
    D_seq: Sequence[float],
) -> LossySeTrace:
    """SE with quantization noise ``P D_t`` added to the channel at each iteration."""
    D = np.asarray(D_seq, dtype=float)
    if np.any(~(D >= 0)):
        raise ValueError("distortions must be >= 0")
    T = len(D)
    sigma2 = np.empty(T)
    tau2 = np.empty(T)
    eff = np.empty(T)
    pred = np.empty(T)
    s2 = prior.second_moment / kappa
    for t in range(T):
        sigma2[t] = s2
        tau2[t] = noise_var + s2
        eff[t] = tau2[t] + P * D[t]
        pred[t] = scalar_mse(eff[t], prior)
        s2 = pred[t] / kappa
    return LossySeTrace(sigma2, tau2, D.copy(), eff, pred, s2)


def proportional_distortions(
    kappa: float,
    noise_var: float,
    prior: SignalPrior,
    P: int,
    iters: int,
    ratio: float,
) -> np.ndarray:
    """Per-node distortions ``D_t = ratio * sigma_t^2 / P`` along lossy SE.

    ``sigma_t^2`` is the SE state reached under the earlier ``D``'s, so the
    normalized distortion ``P D_t / sigma_t^2`` equals ``ratio`` throughout.
    """
    if not ratio >= 0 or iters < 1 or P < 1:
        raise ValueError("need ratio >= 0, iters >= 1 and P >= 1")
    D = np.empty(iters)
    s2 = prior.second_moment / kappa
    for t in range(iters):
        D[t] = ratio * s2 / P
        s2 = scalar_mse(noise_var + s2 + P * D[t], prior) / kappa
    return D


class _RowNode:
    def __init__(self, p: int, A_p: np.ndarray, y_p: np.ndarray, P: int, inv_kappa: float):
        self.p = p
        self.A_p = A_p
        self.y_p = y_p
        self.P = P
        self.inv_kappa = inv_kappa
        self.z = np.zeros(len(y_p))

    def pseudo_data(self, x: np.ndarray, g_prev: float):
        z = self.y_p - self.A_p @ x + self.inv_kappa * g_prev * self.z
        self.z = z
        f = x / self.P + self.A_p.T @ z
        return f, float(z @ z)


def _resolve_distortions(plan, iters):
    if plan is None:
        return None
    D = getattr(plan, "distortions", plan)
    D = np.asarray(D, dtype=float)
    if iters is not None and len(D) != iters:
        raise ValueError(f"plan has {len(D)} entries but {iters} iterations were requested")
    return D


def _run(
    problem: LinearProblem,
    partition: RowPartition,
    prior: SignalPrior,
    iters: int,
    distortions=None,
    steps=None,
    seed=None,
    dithered: bool = True,
    network: Network | None = None,
    keep_path: bool = False,
) -> RowMpResult:
    _check_problem(problem)
    M, N = problem.A.shape
    if partition.ranges[-1].stop != M or sum(len(r) for r in partition.ranges) != M:
        raise ValueError("row partition does not match the problem")
    P = partition.P
    inv_kappa = N / M
    net = network if network is not None else Network(P)
    if net.P != P:
        raise ValueError(f"network has {net.P} workers but partition has {P} nodes")
    nodes = [
        _RowNode(p, problem.A[b], problem.y[b], P, inv_kappa)
        for p, b in enumerate(partition.blocks())
    ]
    lossy = distortions is not None or steps is not None
    if lossy:
        node_seeds = [spawn_seeds(s, P) for s in spawn_seeds(seed, iters)]

    x = np.zeros(N)
    g = 0.0
    mse = np.empty(iters)
    rates = np.zeros(iters)
    dists = np.zeros(iters)
    qvar = np.zeros(iters)
    tau2_hat = np.empty(iters)
    path = [x] if keep_path else None

    for t in range(iters):

        def make_worker(node: _RowNode, x=x, g=g, t=t):
            def work():
                f, zz = node.pseudo_data(x, g)
                if not lossy:
                    return PseudoData(raw_bits(N), node=node.p, vector=f, tau2_part=zz), None
                step = _node_step(t, f, distortions, steps, dithered)
                if step == 0.0:
                    return PseudoData(raw_bits(N), node=node.p, vector=f, tau2_part=zz), None
                q = quantize(f, QuantizerSpec(step, dithered), node_seeds[t][node.p])
                msg = PseudoData(
                    N * q.rate_bits_per_symbol,
                    node=node.p,
                    vector=q.recon,
                    tau2_part=zz,
                    distortion=q.distortion,
                    rate=q.rate_bits_per_symbol,
                )
                return msg, q.recon - f

            return work

        side = {}

        def center(messages):
            f_sum = messages[0].vector.copy()
            for m in messages[1:]:
                f_sum += m.vector
            tau2 = sum(m.tau2_part for m in messages) / M
            channel = tau2 + sum(m.distortion for m in messages)
            x_new = eta(f_sum, channel, prior)
            g_new = float(np.mean(eta_prime(f_sum, channel, prior)))
            side["tau2"], side["messages"] = tau2, messages
            return Broadcast(raw_bits(N), x=x_new, g=g_new)

        extras, reply = net.run_round(t, [make_worker(n) for n in nodes], center)
        x, g = reply.x, reply.g
        tau2_hat[t] = side["tau2"]
        if lossy:
            node_msgs = side["messages"]
            rates[t] = np.mean([m.payload_bits / N if m.rate is None else m.rate for m in node_msgs])
            dists[t] = np.mean([m.distortion for m in node_msgs])
            errs = [e for e in extras if e is not None]
            if errs:
                n_t = errs[0].copy()
                for e in errs[1:]:
                    n_t += e
                qvar[t] = float(n_t @ n_t) / N
        mse[t] = track_mse(t, x, problem.x_true, prior)
        if keep_path:
            path.append(x)

    return RowMpResult(
        x=x,
        mse=mse,
        rates=rates,
        distortions=dists,
        quant_noise_var=qvar,
        tau2_hat=tau2_hat,
        total_bits=net.ledger.bits(direction="node->center"),
        ledger=net.ledger,
        path=path,
    )


def _node_step(t, f, distortions, steps, dithered) -> float:
    """Quantizer step for one node; 0 means send unquantized."""
    if steps is not None:
        return float(steps[t])
    D = float(distortions[t])
    if D <= 0.0:
        return 0.0
    if dithered:
        return dithered_step(D)
    var = float(np.mean(f * f))
    if var <= 0.0 or D >= var:
        return np.inf
    return step_for_distortion(var, D)


def rmp_lossless_run(
    problem: LinearProblem,
    partition: RowPartition,
    prior: SignalPrior,
    iters: int,
    network: Network | None = None,
    keep_path: bool = False,
) -> RowMpResult:
    """Lossless R-MP-AMP; the fusion-center sum runs in node order."""
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    return _run(problem, partition, prior, iters, network=network, keep_path=keep_path)


def rmp_lossy_run(
    problem: LinearProblem,
    partition: RowPartition,
    prior: SignalPrior,
    plan=None,
    seed=None,
    *,
    steps: Sequence[float] | None = None,
    dithered: bool = True,
    network: Network | None = None,
    keep_path: bool = False,
) -> RowMpResult:
    """Lossy R-MP-AMP.

    ``plan`` is a :class:`~mpamp.rate_dp.CodingRatePlan` or a per-iteration
    sequence of per-node distortions; a zero distortion means the node sends
    that iteration's pseudo-data unquantized.  Alternatively ``steps`` gives
    the quantizer step directly.  With dithering the step realizing
    distortion ``D`` is ``sqrt(12 D)``; without, it is found from the ECSQ
    model against the node's empirical pseudo-data variance.
    """
    if (plan is None) == (steps is None):
        raise ValueError("give exactly one of plan or steps")
    D = _resolve_distortions(plan, None)
    iters = len(D) if D is not None else len(steps)
    if iters < 1:
        raise ValueError("plan must cover at least one iteration")
    return _run(
        problem,
        partition,
        prior,
        iters,
        distortions=D,
        steps=steps,
        seed=seed,
        dithered=dithered,
        network=network,
        keep_path=keep_path,
    )
