"""Problem instances: Bernoulli-Gaussian signals, Gaussian matrices, AWGN
measurements and the row/column partitions used by the multi-processor
solvers.

All stochastic functions take an explicit seed.  A seed may be an int, a
``numpy.random.SeedSequence`` or a ``numpy.random.Generator``; ints and
sequences are turned into a fresh PCG64 stream, so the same seed always
gives bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SignalPrior",
    "LinearProblem",
    "RowPartition",
    "ColPartition",
    "as_generator",
    "spawn_seeds",
    "gen_signal",
    "gen_matrix",
    "measure",
    "noise_var_from_snr",
    "partition_rows",
    "partition_cols",
    "make_problem",
]


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Split ``seed`` into ``n`` independent child seed sequences.

    A :class:`~numpy.random.SeedSequence` argument is copied first, so
    repeated calls with the same object return the same children.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    else:
        ss = np.random.SeedSequence(seed)
    return ss.spawn(n)


@dataclass(frozen=True)
class SignalPrior:
    """Bernoulli-Gaussian prior ``rho * N(0, nonzero_variance) + (1 - rho) * delta_0``."""

    rho: float
    nonzero_variance: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.rho <= 1.0) or not np.isfinite(self.rho):
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.nonzero_variance > 0 or not np.isfinite(self.nonzero_variance):
            raise ValueError(
                f"nonzero_variance must be positive, got {self.nonzero_variance}"
            )

    @property
    def second_moment(self) -> float:
        return self.rho * self.nonzero_variance


@dataclass
class RowPartition:
    P: int
    ranges: list[range]

    def blocks(self):
        return [slice(r.start, r.stop) for r in self.ranges]


@dataclass
class ColPartition:
    P: int
    ranges: list[range]

    @property
    def sizes(self) -> list[int]:
        return [len(r) for r in self.ranges]

    def kappas(self, M: int) -> list[float]:
        return [M / n for n in self.sizes]

    def blocks(self):
        return [slice(r.start, r.stop) for r in self.ranges]


@dataclass
class LinearProblem:
    """A ground-truth instance of ``y = A x_true + w``."""

    A: np.ndarray
    x_true: np.ndarray | None
    w: np.ndarray | None
    y: np.ndarray
    noise_var: float
    prior: SignalPrior | None = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def kappa(self) -> float:
        return self.M / self.N


def gen_signal(prior: SignalPrior, N: int, seed) -> np.ndarray:
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rng = as_generator(seed)
    support = rng.random(N) < prior.rho
    values = rng.standard_normal(N) * np.sqrt(prior.nonzero_variance)
    return np.where(support, values, 0.0)


def gen_matrix(M: int, N: int, seed) -> np.ndarray:
    """i.i.d. ``N(0, 1/M)`` entries, so columns have unit expected norm."""
    if M < 1 or N < 1:
        raise ValueError(f"matrix dimensions must be positive, got {M}x{N}")
    rng = as_generator(seed)
    A = rng.standard_normal((M, N))
    A *= 1.0 / np.sqrt(M)
    return A


def measure(A: np.ndarray, x: np.ndarray, noise_var: float, seed):
    """Return ``(y, w)`` with ``w ~ N(0, noise_var)`` i.i.d. and ``y = A x + w``."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, x is {x.shape}")
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    rng = as_generator(seed)
    if noise_var == 0:
        w = np.zeros(A.shape[0])
    else:
        w = rng.standard_normal(A.shape[0]) * np.sqrt(noise_var)
    return A @ x + w, w


def noise_var_from_snr(snr_db: float, N: int, M: int, second_moment: float) -> float:
    """Noise variance for ``SNR = 10 log10(N E[X^2] / (M noise_var))``."""
    return (N * second_moment) / (M * 10.0 ** (snr_db / 10.0))


def partition_rows(M: int, P: int) -> RowPartition:
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    if M % P:
        raise ValueError(f"row count M={M} is not divisible by P={P}")
    m = M // P
    return RowPartition(P, [range(p * m, (p + 1) * m) for p in range(P)])


def partition_cols(N: int, sizes) -> ColPartition:
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ValueError("need at least one column block")
    if any(s < 1 for s in sizes):
        raise ValueError(f"column block sizes must be positive, got {sizes}")
    if sum(sizes) != N:
        raise ValueError(f"column block sizes {sizes} do not sum to N={N}")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return ColPartition(
        len(sizes), [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    )


def make_problem(
    N: int,
    M: int,
    prior: SignalPrior,
    noise_var: float,
    seed,
) -> LinearProblem:
    """Draw signal, matrix and noise from three independent substreams of ``seed``."""
    s_x, s_a, s_w = spawn_seeds(seed, 3)
    x = gen_signal(prior, N, s_x)
    A = gen_matrix(M, N, s_a)
    y, w = measure(A, x, noise_var, s_w)
    return LinearProblem(A=A, x_true=x, w=w, y=y, noise_var=noise_var, prior=prior)
