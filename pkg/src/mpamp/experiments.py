"""Monte-Carlo experiment driver behind the command line.

Each run writes, into its output directory:

``trace.csv``
    ``case, iteration, outer, inner, empirical_mse_mean, empirical_mse_stderr,
    se_predicted_mse, rate_bits, distortion``; one row per iteration (per
    (s, t) step for C-MP-AMP).  Empirical columns are empty when nothing is
    simulated.
``ledger.csv``
    ``case, iteration, direction, bits``; bits per round averaged over trials.
``summary.csv``
    sweep results (C-MP-AMP final MSE vs MMSE) or the plan summary (dp-plan).
``plan.csv``
    dp-plan only: ``iteration, rate_bits, distortion, se_predicted_mse, emse_db``.
``config.yaml``
    the resolved configuration.

Output is a pure function of the config: trial seeds are spawned from
``problem.seed``, trials are aggregated in index order, and floats are
written with ``repr``.
"""

from __future__ import annotations

import csv
import itertools
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .amp import amp_run, se_fixed_point, se_run
from .col_mp import Schedule, cmp_run, cmp_se_run
from .model import SignalPrior, make_problem, partition_cols, partition_rows, spawn_seeds
from .netsim import RAW_BITS_PER_ENTRY, Network
from .rate_dp import (
    DpGrid,
    asymptotic_growth_rate,
    distortion_ratio_check,
    dp_optimize,
    emse_db,
    tail_growth_rate,
    theta,
)
from .row_mp import lossy_se_run, proportional_distortions, rmp_lossless_run, rmp_lossy_run

__all__ = ["OUTPUT_ENV", "TRACE_COLUMNS", "resolve_output_dir", "run_experiment"]

OUTPUT_ENV = "MPAMP_OUTPUT_DIR"
TRACE_COLUMNS = [
    "case", "iteration", "outer", "inner", "empirical_mse_mean", "empirical_mse_stderr",
    "se_predicted_mse", "rate_bits", "distortion",
]


def resolve_output_dir(cfg: dict, cli_output: str | None = None) -> str:
    """``--output`` beats ``$MPAMP_OUTPUT_DIR`` beats ``output`` in the config."""
    if cli_output:
        return cli_output
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return os.path.join(env, cfg.get("name", "run"))
    return cfg.get("output") or os.path.join("mpamp_out", cfg.get("name", "run"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


@dataclass
class _Setup:
    prior: SignalPrior
    N: int | None
    M: int | None
    kappa: float
    P: int
    noise_var: float
    trials: int
    seed: int
    node_sizes: list | None


def _setup(prob: dict, kappa=None, snr_db=None) -> _Setup:
    prior = SignalPrior(prob["rho"], prob.get("nonzero_variance", 1.0))
    N = prob.get("N")
    M = prob.get("M")
    if kappa is None:
        kappa = prob.get("kappa")
    if M is None and kappa is not None and N is not None:
        M = int(round(kappa * N))
    if M is not None and N is not None:
        kappa = M / N
    snr = prob.get("snr_db", snr_db)
    if snr is not None:
        noise_var = prior.second_moment / (kappa * 10.0 ** (snr / 10.0))
    else:
        noise_var = float(prob["noise_var"])
    return _Setup(prior, N, M, float(kappa), int(prob.get("P", 1)), noise_var,
                  int(prob.get("trials", 1)), int(prob.get("seed", 0)), prob.get("node_sizes"))


def _schedule(spec) -> Schedule:
    if isinstance(spec, dict):
        inner = spec.get("inner", 1)
        if inner == "increasing":
            return Schedule.increasing(spec["outer"])
        return Schedule.constant(spec["outer"], inner)
    return Schedule(tuple(spec))


def _network(P, params) -> Network:
    return Network(P, order=params.get("worker_order", "natural"), threads=params.get("threads", 1))


def _map_trials(fn, seeds, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def _mean_stderr(rows):
    a = np.asarray(rows, dtype=float)
    mean = a.mean(axis=0)
    if a.shape[0] < 2:
        return mean, np.full(mean.shape, np.nan)
    return mean, a.std(axis=0, ddof=1) / np.sqrt(a.shape[0])


def _mean_ledger(ledgers):
    acc = defaultdict(float)
    for led in ledgers:
        for it, d, b in led.rows():
            acc[(it, d)] += b
    return [(it, d, b / len(ledgers)) for (it, d), b in sorted(acc.items())]


@dataclass
class _Case:
    label: str
    trace: list = field(default_factory=list)
    ledger: list = field(default_factory=list)


def _run_simulated(algo, st: _Setup, params, label="main") -> tuple[_Case, dict]:
    prior, N, M, P = st.prior, st.N, st.M, st.P
    jobs = params.get("jobs", 1)
    trial_seeds = spawn_seeds(st.seed, st.trials)
    case = _Case(label)
    extra = {}

    if algo in ("amp", "row-lossless", "row-lossy"):
        if algo == "row-lossy":
            plan = params.get("plan")
            if plan is None:
                dp = _dp_plan(st, params)
                D = dp.distortions
            elif isinstance(plan, dict) and "normalized_distortion" in plan:
                D = proportional_distortions(st.kappa, st.noise_var, prior, P, params["iters"],
                                             plan["normalized_distortion"])
            else:
                D = np.asarray(plan["distortions"] if isinstance(plan, dict) else plan, dtype=float)
            iters = len(D)
            se_pred = lossy_se_run(st.kappa, st.noise_var, prior, P, D).predicted_mse
        else:
            iters = params["iters"]
            se_pred = se_run(st.kappa, st.noise_var, prior, iters).predicted_mse[:iters]

        def trial(seed):
            s_prob, s_quant = spawn_seeds(seed, 2)
            pb = make_problem(N, M, prior, st.noise_var, s_prob)
            if algo == "amp":
                _, mse = amp_run(pb, prior, iters)
                return mse, np.full(iters, float(RAW_BITS_PER_ENTRY)), np.zeros(iters), None
            net = _network(P, params)
            part = partition_rows(M, P)
            if algo == "row-lossless":
                r = rmp_lossless_run(pb, part, prior, iters, network=net)
                return r.mse, np.full(iters, float(RAW_BITS_PER_ENTRY)), np.zeros(iters), net.ledger
            r = rmp_lossy_run(pb, part, prior, D, seed=s_quant,
                              dithered=params.get("dithered", True), network=net)
            return r.mse, r.rates, r.distortions, net.ledger

        results = _map_trials(trial, trial_seeds, jobs)
        mean, se = _mean_stderr([r[0] for r in results])
        rates = np.mean([r[1] for r in results], axis=0)
        dists = np.mean([r[2] for r in results], axis=0)
        for t in range(iters):
            case.trace.append([label, t + 1, None, None, mean[t], se[t], se_pred[t], rates[t], dists[t]])
        ledgers = [r[3] for r in results if r[3] is not None]
        if ledgers:
            case.ledger = [[label, *row] for row in _mean_ledger(ledgers)]
        extra["final_mse"] = [r[0][-1] for r in results]
        extra["se_final"] = se_pred[-1]
        return case, extra
    raise ValueError(f"unsupported simulated algorithm {algo}")


def _run_col(st: _Setup, params, sched: Schedule, label) -> tuple[_Case, dict]:
    prior, N, M, P = st.prior, st.N, st.M, st.P
    sizes = st.node_sizes or [len(b) for b in np.array_split(np.arange(N), P)]
    part = partition_cols(N, sizes)
    se = cmp_se_run(part.kappas(M), st.noise_var, prior, sched)

    def trial(seed):
        pb = make_problem(N, M, prior, st.noise_var, spawn_seeds(seed, 1)[0])
        net = _network(P, params)
        r = cmp_run(pb, part, prior, sched, network=net)
        return r.mse, net.ledger

    results = _map_trials(trial, spawn_seeds(st.seed, st.trials), params.get("jobs", 1))
    mean, err = _mean_stderr([r[0] for r in results])
    case = _Case(label)
    for k, (s, t) in enumerate(se.steps):
        case.trace.append([label, k + 1, s, t + 1, mean[k], err[k], se.predicted_mse[k], None, None])
    case.ledger = [[label, *row] for row in _mean_ledger([r[1] for r in results])]
    return case, {"final_mse": [r[0][-1] for r in results], "se_final": se.predicted_mse[-1]}


def _dp_plan(st: _Setup, params):
    grid = DpGrid(**params.get("grid", {}))
    return dp_optimize(
        st.kappa, st.noise_var, st.prior, st.P, params["b"],
        rd_model=params.get("rd_model", "ecsq"),
        target_emse_db=params["target_emse_db"],
        grid=grid,
        source_variance=params.get("source_variance", "fixed_point"),
    )


def run_experiment(cfg: dict, out_dir: str) -> dict[str, str]:
    """Execute a validated config; returns ``{artifact: path}``."""
    os.makedirs(out_dir, exist_ok=True)
    algo = cfg["algorithm"]
    prob = cfg["problem"]
    params = cfg.get("params", {}) or {}
    written = {}
    cases: list[_Case] = []

    def path(name):
        p = os.path.join(out_dir, name)
        written[name] = p
        return p

    if algo == "dp-plan":
        st = _setup(prob)
        plan = _dp_plan(st, params)
        sigma_inf2, mmse = se_fixed_point(st.kappa, st.noise_var, st.prior)
        th = theta(st.kappa, st.prior, st.noise_var + sigma_inf2)
        se = plan.se
        emse = [emse_db(m, mmse) for m in se.predicted_mse]
        _write_csv(path("plan.csv"), ["iteration", "rate_bits", "distortion", "se_predicted_mse", "emse_db"],
                   [[t + 1, plan.rates[t], plan.distortions[t], se.predicted_mse[t], emse[t]]
                    for t in range(plan.horizon)])
        growth = tail_growth_rate(plan) if plan.horizon > 6 else np.nan
        ratios = distortion_ratio_check(plan)
        tail_ratio = float(np.mean(ratios[-4:])) if len(ratios) else np.nan
        _write_csv(path("summary.csv"),
                   ["horizon", "total_cost", "terminal_emse_db", "theta", "asymptotic_growth_rate",
                    "tail_growth_rate", "tail_distortion_ratio", "mmse"],
                   [[plan.horizon, plan.total_cost, plan.terminal_emse_db, th,
                     asymptotic_growth_rate(min(th, 1.0)), growth, tail_ratio, mmse]])
        case = _Case("main")
        for t in range(plan.horizon):
            case.trace.append(["main", t + 1, None, None, None, None, se.predicted_mse[t],
                               plan.rates[t], plan.distortions[t]])
        cases.append(case)
    elif algo == "se-only":
        st = _setup(prob)
        plan = params.get("plan")
        case = _Case("main")
        if plan is not None:
            if isinstance(plan, dict) and "normalized_distortion" in plan:
                D = proportional_distortions(st.kappa, st.noise_var, st.prior, st.P, params["iters"],
                                             plan["normalized_distortion"])
            else:
                D = np.asarray(plan["distortions"] if isinstance(plan, dict) else plan, dtype=float)
            pred = lossy_se_run(st.kappa, st.noise_var, st.prior, st.P, D).predicted_mse
        else:
            D = np.zeros(params["iters"])
            pred = se_run(st.kappa, st.noise_var, st.prior, params["iters"]).predicted_mse[:-1]
        for t in range(len(D)):
            case.trace.append(["main", t + 1, None, None, None, None, pred[t], None, D[t]])
        cases.append(case)
    elif algo == "col":
        sweep = cfg.get("sweep")
        if "schedules" in params:
            scheds = [(str(k), _schedule(v)) for k, v in params["schedules"].items()]
        else:
            scheds = [("main", _schedule(params["schedule"]))]
        if sweep:
            kappas = sweep.get("kappa", [None])
            snrs = sweep.get("snr_db", [None])
            summary = []
            for kappa, snr in itertools.product(kappas, snrs):
                st = _setup(prob, kappa=kappa, snr_db=snr)
                sigma_inf2, mmse = se_fixed_point(st.kappa, st.noise_var, st.prior)
                for slabel, sched in scheds:
                    label = f"kappa={st.kappa:g};snr_db={prob.get('snr_db', snr)}"
                    if len(scheds) > 1:
                        label += f";schedule={slabel}"
                    case, extra = _run_col(st, params, sched, label)
                    cases.append(case)
                    m, e = _mean_stderr(np.asarray(extra["final_mse"])[:, None])
                    summary.append([label, st.kappa, prob.get("snr_db", snr), st.N, st.M, st.noise_var,
                                    m[0], e[0], extra["se_final"], mmse,
                                    10 * np.log10(m[0] / mmse)])
            _write_csv(path("summary.csv"),
                       ["case", "kappa", "snr_db", "N", "M", "noise_var", "final_mse_mean",
                        "final_mse_stderr", "se_final_mse", "mmse", "gap_db"], summary)
        else:
            st = _setup(prob)
            for slabel, sched in scheds:
                cases.append(_run_col(st, params, sched, slabel)[0])
    else:
        st = _setup(prob)
        cases.append(_run_simulated(algo, st, params)[0])

    _write_csv(path("trace.csv"), TRACE_COLUMNS, [row for c in cases for row in c.trace])
    _write_csv(path("ledger.csv"), ["case", "iteration", "direction", "bits"],
               [row for c in cases for row in c.ledger])
    with open(path("config.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
    return written
