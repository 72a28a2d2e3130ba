"""Multi-processor approximate message passing with state evolution, lossy
message compression and coding-rate planning."""

from .amp import AmpState, DivergenceError, SeTrace, amp_run, se_fixed_point, se_run
from .col_mp import CmpResult, CmpSeTrace, Schedule, cmp_fixed_point_check, cmp_run, cmp_se_run
from .denoise import ScalarChannel, channel_expectation, eta, eta_prime, scalar_mse
from .estimators import AMPRegressor, ColumnMPAMPRegressor, RowMPAMPRegressor
from .model import (
    ColPartition,
    LinearProblem,
    RowPartition,
    SignalPrior,
    make_problem,
    noise_var_from_snr,
    partition_cols,
    partition_rows,
)
from .netsim import ByteLedger, Network
from .quantize import QuantizerSpec, ecsq_model, quantize
from .rate_dp import (
    CodingRatePlan,
    DpGrid,
    asymptotic_growth_rate,
    distortion_ratio_check,
    dp_optimize,
    theta,
)
from .row_mp import lossy_se_run, proportional_distortions, rmp_lossless_run, rmp_lossy_run

__version__ = "0.1.0"
