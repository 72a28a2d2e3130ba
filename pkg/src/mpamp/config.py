"""Experiment configuration: YAML loading, static validation and built-in presets.

A config is a mapping with the sections below; only ``algorithm`` and
``problem`` are always required::

    name: fig2-desk
    algorithm: col          # amp | row-lossless | row-lossy | col | dp-plan | se-only
    problem:
      N: 3000
      M: 900                # or kappa
      P: 3
      rho: 0.1
      snr_db: 15            # or noise_var
      seed: 2024
      trials: 50
    params:
      iters: 20
      schedules: {"1": [1, 1, 1]}
    output: results/fig2

Diagnostics carry the dotted field path and, when the config came from a
file, the line number of the offending entry.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

__all__ = [
    "ALGORITHMS",
    "PRESETS",
    "Diagnostic",
    "ConfigError",
    "load_config",
    "validate_config",
    "apply_overrides",
    "preset_config",
]

ALGORITHMS = ("amp", "row-lossless", "row-lossy", "col", "dp-plan", "se-only")

_TOP_KEYS = {"name", "description", "algorithm", "problem", "params", "output", "sweep"}
_PROBLEM_KEYS = {"N", "M", "kappa", "P", "rho", "nonzero_variance", "snr_db", "noise_var",
                 "seed", "trials", "node_sizes"}
_PARAM_KEYS = {"iters", "schedule", "schedules", "plan", "b", "target_emse_db", "rd_model",
               "source_variance", "grid", "dithered", "worker_order", "threads", "jobs"}
_PLAN_KEYS = {"distortions", "normalized_distortion"}
_GRID_KEYS = {"n_states", "rate_step", "rate_max", "max_iters"}
_SWEEP_KEYS = {"kappa", "snr_db"}


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.field}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def _line_map(node, prefix="", out=None) -> dict[str, int]:
    """Dotted key path -> 1-based line number, from a composed YAML node tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    return out


def load_config(path):
    """Parse a YAML config file; returns ``(config, line_map)``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        node = yaml.compose(text)
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError([Diagnostic("<file>", f"YAML parse error: {exc}", line)]) from None
    if not isinstance(cfg, dict):
        raise ConfigError([Diagnostic("<file>", "top level must be a mapping", 1)])
    return cfg, _line_map(node)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _schedule_ok(v) -> bool:
    if isinstance(v, dict):
        return set(v) <= {"outer", "inner"} and _is_int(v.get("outer")) and v["outer"] >= 1 and (
            v.get("inner", 1) == "increasing" or (_is_int(v.get("inner", 1)) and v.get("inner", 1) >= 1)
        )
    return isinstance(v, list) and len(v) >= 1 and all(_is_int(t) and t >= 1 for t in v)


def validate_config(cfg: dict, lines: dict | None = None) -> list[Diagnostic]:
    """Full static check of a config; an empty list means it can run."""
    lines = lines or {}
    diags: list[Diagnostic] = []

    def bad(field, msg):
        diags.append(Diagnostic(field, msg, lines.get(field)))

    if not isinstance(cfg, dict):
        return [Diagnostic("<root>", "config must be a mapping")]
    for k in sorted(set(cfg) - _TOP_KEYS):
        bad(k, "unknown key")
    algo = cfg.get("algorithm")
    if algo not in ALGORITHMS:
        bad("algorithm", f"must be one of {', '.join(ALGORITHMS)}; got {algo!r}")

    prob = cfg.get("problem")
    if not isinstance(prob, dict):
        bad("problem", "missing or not a mapping")
        prob = {}
    params = cfg.get("params", {}) or {}
    if not isinstance(params, dict):
        bad("params", "must be a mapping")
        params = {}
    for k in sorted(set(prob) - _PROBLEM_KEYS):
        bad(f"problem.{k}", "unknown key")
    for k in sorted(set(params) - _PARAM_KEYS):
        bad(f"params.{k}", "unknown key")

    simulated = algo in ("amp", "row-lossless", "row-lossy", "col")
    sweep = cfg.get("sweep")

    # sizes
    for key in ("N", "M"):
        if key in prob and not (_is_int(prob[key]) and prob[key] >= 1):
            bad(f"problem.{key}", "must be a positive integer")
    if "kappa" in prob and not (_is_num(prob["kappa"]) and prob["kappa"] > 0):
        bad("problem.kappa", "must be positive")
    if simulated:
        if "N" not in prob:
            bad("problem.N", "required for simulated algorithms")
        if "M" not in prob and "kappa" not in prob and not (sweep and "kappa" in sweep):
            bad("problem.M", "give M or kappa")
    elif algo is not None:
        if not ({"M", "kappa"} & set(prob)) or ("M" in prob and "N" not in prob):
            bad("problem.kappa", "give kappa, or both N and M")
    if "M" in prob and "kappa" in prob:
        bad("problem.kappa", "give M or kappa, not both")

    P = prob.get("P", 1)
    if not (_is_int(P) and P >= 1):
        bad("problem.P", "must be a positive integer")
        P = 1
    if algo in ("row-lossless", "row-lossy") and _is_int(prob.get("M")) and prob["M"] % P:
        bad("problem.P", f"M={prob['M']} is not divisible by P={P}")

    rho = prob.get("rho")
    if not (_is_num(rho) and 0 <= rho <= 1):
        bad("problem.rho", "required, in [0, 1]")
    if "nonzero_variance" in prob and not (_is_num(prob["nonzero_variance"]) and prob["nonzero_variance"] > 0):
        bad("problem.nonzero_variance", "must be positive")
    has_snr = "snr_db" in prob or (sweep and "snr_db" in sweep)
    if has_snr == ("noise_var" in prob):
        bad("problem.snr_db", "give exactly one of snr_db or noise_var")
    if "snr_db" in prob and not _is_num(prob["snr_db"]):
        bad("problem.snr_db", "must be a number")
    if "noise_var" in prob and not (_is_num(prob["noise_var"]) and prob["noise_var"] >= 0):
        bad("problem.noise_var", "must be >= 0")

    if "trials" in prob or simulated:
        t = prob.get("trials", 1)
        if not (_is_int(t) and t >= 1):
            bad("problem.trials", "must be an integer >= 1")
    if "seed" in prob and not (_is_int(prob["seed"]) and prob["seed"] >= 0):
        bad("problem.seed", "must be a non-negative integer")
    if "node_sizes" in prob:
        ns = prob["node_sizes"]
        if not (isinstance(ns, list) and all(_is_int(n) and n >= 1 for n in ns)):
            bad("problem.node_sizes", "must be a list of positive integers")
        elif _is_int(prob.get("N")) and sum(ns) != prob["N"]:
            bad("problem.node_sizes", f"sizes sum to {sum(ns)}, not N={prob['N']}")
        elif len(ns) != P:
            bad("problem.node_sizes", f"{len(ns)} sizes given for P={P}")

    # algorithm parameters
    if algo in ("amp", "row-lossless", "se-only"):
        it = params.get("iters")
        if not (_is_int(it) and it >= 1):
            bad("params.iters", f"required for {algo}: integer >= 1")
    if algo == "col":
        if ("schedule" in params) == ("schedules" in params):
            bad("params.schedule", "give exactly one of schedule or schedules")
        if "schedule" in params and not _schedule_ok(params["schedule"]):
            bad("params.schedule", "list of positive integers or {outer, inner}")
        if "schedules" in params:
            sch = params["schedules"]
            if not (isinstance(sch, dict) and sch):
                bad("params.schedules", "must be a non-empty mapping label -> schedule")
            else:
                for label, v in sch.items():
                    if not _schedule_ok(v):
                        bad(f"params.schedules.{label}", "list of positive integers or {outer, inner}")
    if algo == "row-lossy":
        plan = params.get("plan")
        has_dp = "b" in params or "target_emse_db" in params
        if plan is None and not has_dp:
            bad("params.plan", "row-lossy needs a plan or both b and target_emse_db")
        if plan is not None and has_dp:
            bad("params.plan", "give a plan or (b, target_emse_db), not both")
        if plan is not None:
            _check_plan(plan, params, bad)
    if algo == "dp-plan" or (algo == "row-lossy" and "plan" not in params):
        if algo == "dp-plan" or "b" in params or "target_emse_db" in params:
            if not (_is_num(params.get("b")) and params["b"] >= 0):
                bad("params.b", "required: number >= 0")
            if not (_is_num(params.get("target_emse_db")) and params["target_emse_db"] > 0):
                bad("params.target_emse_db", "required: positive number (dB)")
        if params.get("rd_model", "ecsq") not in ("ecsq", "gaussian"):
            bad("params.rd_model", "must be ecsq or gaussian")
        if params.get("source_variance", "fixed_point") not in ("fixed_point", "tracking"):
            bad("params.source_variance", "must be fixed_point or tracking")
        grid = params.get("grid", {})
        if not isinstance(grid, dict):
            bad("params.grid", "must be a mapping")
        else:
            for k in sorted(set(grid) - _GRID_KEYS):
                bad(f"params.grid.{k}", "unknown key")
            for k, v in grid.items():
                if k in _GRID_KEYS and not (_is_num(v) and v > 0):
                    bad(f"params.grid.{k}", "must be positive")
    if algo == "se-only" and "plan" in params:
        _check_plan(params["plan"], params, bad)

    order = params.get("worker_order", "natural")
    if isinstance(order, list):
        if sorted(order) != list(range(P)):
            bad("params.worker_order", f"must be a permutation of 0..{P - 1}")
    elif order not in ("natural", "reversed"):
        bad("params.worker_order", "natural, reversed or a permutation list")
    for k in ("threads", "jobs"):
        if k in params and not (_is_int(params[k]) and params[k] >= 1):
            bad(f"params.{k}", "must be an integer >= 1")
    if "dithered" in params and not isinstance(params["dithered"], bool):
        bad("params.dithered", "must be true or false")

    if sweep is not None:
        if algo != "col":
            bad("sweep", "sweeps are supported for the col algorithm only")
        elif not isinstance(sweep, dict) or not sweep:
            bad("sweep", "must be a non-empty mapping")
        else:
            for k in sorted(set(sweep) - _SWEEP_KEYS):
                bad(f"sweep.{k}", "unknown key")
            for k in _SWEEP_KEYS & set(sweep):
                v = sweep[k]
                if not (isinstance(v, list) and v and all(_is_num(a) for a in v)):
                    bad(f"sweep.{k}", "must be a non-empty list of numbers")
                elif k in prob:
                    bad(f"sweep.{k}", f"also set in problem.{k}")
            if "kappa" in sweep and "M" in prob:
                bad("sweep.kappa", "cannot sweep kappa with a fixed problem.M")

    if "output" in cfg and not isinstance(cfg["output"], str):
        bad("output", "must be a path string")
    return diags


def _check_plan(plan, params, bad):
    if isinstance(plan, list):
        if not plan or not all(_is_num(d) and d >= 0 for d in plan):
            bad("params.plan", "distortion list must be non-empty and >= 0")
        return
    if not isinstance(plan, dict):
        bad("params.plan", "a distortion list or a mapping")
        return
    for k in sorted(set(plan) - _PLAN_KEYS):
        bad(f"params.plan.{k}", "unknown key")
    if ("distortions" in plan) == ("normalized_distortion" in plan):
        bad("params.plan", "give exactly one of distortions or normalized_distortion")
    if "distortions" in plan:
        _check_plan(plan["distortions"], params, bad)
    if "normalized_distortion" in plan:
        c = plan["normalized_distortion"]
        if not (_is_num(c) and c >= 0):
            bad("params.plan.normalized_distortion", "must be >= 0")
        if not (_is_int(params.get("iters")) and params["iters"] >= 1):
            bad("params.iters", "normalized_distortion plans need iters >= 1")


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values are parsed as YAML scalars/lists."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError([Diagnostic(item, "override must look like key.path=value")])
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = cfg
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError([Diagnostic(path, f"{k} is not a mapping")])
        node[keys[-1]] = yaml.safe_load(raw)
    return cfg


PRESETS: dict[str, dict] = {
    "fig1": {
        "name": "fig1",
        "description": "optimal coding-rate sequence and its tail growth rate (P=100, kappa=1)",
        "algorithm": "dp-plan",
        "problem": {"kappa": 1.0, "P": 100, "rho": 0.2, "noise_var": 0.01},
        "params": {"b": 0.782, "target_emse_db": 0.005, "rd_model": "ecsq"},
    },
    "fig2-desk": {
        "name": "fig2-desk",
        "description": "C-MP-AMP empirical MSE against SE for three schedules (N=3000)",
        "algorithm": "col",
        "problem": {"N": 3000, "M": 900, "P": 3, "rho": 0.1, "snr_db": 15,
                    "seed": 2024, "trials": 50},
        "params": {
            "schedules": {
                "const1": {"outer": 10, "inner": 1},
                "const2": {"outer": 6, "inner": 2},
                "increasing": {"outer": 4, "inner": "increasing"},
            }
        },
    },
    "fig3-desk": {
        "name": "fig3-desk",
        "description": "C-MP-AMP final MSE vs MMSE over measurement rate and SNR (N=3000)",
        "algorithm": "col",
        "problem": {"N": 3000, "P": 3, "rho": 0.1, "seed": 3033, "trials": 10},
        "params": {"schedule": {"outer": 15, "inner": 2}},
        "sweep": {"kappa": [0.2, 0.3, 0.4, 0.5], "snr_db": [10, 15]},
    },
    "amp-desk": {
        "name": "amp-desk",
        "description": "centralized AMP against SE (N=3000, kappa=0.3)",
        "algorithm": "amp",
        "problem": {"N": 3000, "M": 900, "rho": 0.1, "snr_db": 15, "seed": 7, "trials": 10},
        "params": {"iters": 20},
    },
    "row-lossy-desk": {
        "name": "row-lossy-desk",
        "description": "lossy R-MP-AMP at normalized distortion 0.1 against lossy SE",
        "algorithm": "row-lossy",
        "problem": {"N": 3000, "M": 3000, "P": 10, "rho": 0.2, "noise_var": 0.01,
                    "seed": 11, "trials": 10},
        "params": {"iters": 12, "plan": {"normalized_distortion": 0.1}},
    },
}


def preset_config(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
