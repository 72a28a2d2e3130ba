"""scikit-learn style wrappers.

``fit(A, y)`` recovers the sparse coefficient vector of ``y = A x + w`` and
stores it in ``coef_``; ``predict(A)`` returns ``A @ coef_``.  Passing
``x_true`` to ``fit`` additionally records the per-iteration MSE.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .amp import amp_run
from .col_mp import Schedule, cmp_run
from .model import LinearProblem, SignalPrior, partition_cols, partition_rows
from .row_mp import rmp_lossless_run, rmp_lossy_run

__all__ = ["AMPRegressor", "RowMPAMPRegressor", "ColumnMPAMPRegressor"]


class _AmpBase(RegressorMixin, BaseEstimator):
    def _prior(self) -> SignalPrior:
        return SignalPrior(self.rho, self.nonzero_variance)

    def _problem(self, A, y, x_true):
        A, y = check_X_y(A, y, dtype=np.float64, y_numeric=True)
        if x_true is not None:
            x_true = np.asarray(x_true, dtype=float)
            if x_true.shape != (A.shape[1],):
                raise ValueError(f"x_true has shape {x_true.shape}, expected ({A.shape[1]},)")
        self.n_features_in_ = A.shape[1]
        return LinearProblem(A=A, x_true=x_true, w=None, y=y, noise_var=0.0)

    def predict(self, A):
        check_is_fitted(self, "coef_")
        A = check_array(A, dtype=np.float64)
        if A.shape[1] != self.n_features_in_:
            raise ValueError(f"A has {A.shape[1]} columns, expected {self.n_features_in_}")
        return A @ self.coef_


class AMPRegressor(_AmpBase):
    """Centralized AMP with the Bernoulli-Gaussian conditional-mean denoiser."""

    def __init__(self, rho=0.1, nonzero_variance=1.0, n_iter=20):
        self.rho = rho
        self.nonzero_variance = nonzero_variance
        self.n_iter = n_iter

    def fit(self, A, y, x_true=None):
        problem = self._problem(A, y, x_true)
        state, mse = amp_run(problem, self._prior(), self.n_iter)
        self.coef_ = state.x
        self.mse_path_ = mse
        return self


class RowMPAMPRegressor(_AmpBase):
    """Row-partitioned MP-AMP; lossy when ``distortions`` is given.

    ``distortions`` is the per-iteration, per-node quantization distortion
    (or a :class:`~mpamp.rate_dp.CodingRatePlan`); its length overrides
    ``n_iter``.
    """

    def __init__(self, rho=0.1, nonzero_variance=1.0, n_iter=20, n_nodes=2,
                 distortions=None, dithered=True, random_state=None):
        self.rho = rho
        self.nonzero_variance = nonzero_variance
        self.n_iter = n_iter
        self.n_nodes = n_nodes
        self.distortions = distortions
        self.dithered = dithered
        self.random_state = random_state

    def fit(self, A, y, x_true=None):
        problem = self._problem(A, y, x_true)
        partition = partition_rows(problem.M, self.n_nodes)
        if self.distortions is None:
            res = rmp_lossless_run(problem, partition, self._prior(), self.n_iter)
        else:
            res = rmp_lossy_run(problem, partition, self._prior(), self.distortions,
                                seed=self.random_state, dithered=self.dithered)
        self.coef_ = res.x
        self.mse_path_ = res.mse
        self.rates_ = res.rates
        self.total_bits_ = res.total_bits
        return self


class ColumnMPAMPRegressor(_AmpBase):
    """Column-partitioned MP-AMP.

    ``schedule`` is a sequence of inner-iteration counts, one per outer
    iteration.  ``n_nodes`` splits the columns as evenly as possible unless
    ``node_sizes`` is given.
    """

    def __init__(self, rho=0.1, nonzero_variance=1.0, schedule=(1,) * 10,
                 n_nodes=2, node_sizes=None):
        self.rho = rho
        self.nonzero_variance = nonzero_variance
        self.schedule = schedule
        self.n_nodes = n_nodes
        self.node_sizes = node_sizes

    def fit(self, A, y, x_true=None):
        problem = self._problem(A, y, x_true)
        N = problem.N
        sizes = self.node_sizes
        if sizes is None:
            sizes = [len(b) for b in np.array_split(np.arange(N), self.n_nodes)]
        sched = self.schedule if isinstance(self.schedule, Schedule) else Schedule(tuple(self.schedule))
        res = cmp_run(problem, partition_cols(N, sizes), self._prior(), sched)
        self.coef_ = res.x
        self.mse_path_ = res.mse
        return self
