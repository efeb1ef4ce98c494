"""``edbosonic`` command line: optimize | simulate | sweep | budget | verify.

Configs are JSON. Physical quantities carry a unit suffix:
frequencies "1 MHz" (the value divided by 2 pi; multiplied back here),
durations "2 us" / "4 ns" / "10 ms", rates "0.0005 /us", "0.5 /ms" or
"500 /s". Every run writes a manifest.json next to its outputs.

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 check failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import hashlib
import json
import logging
import math
import re
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from . import budget as bd
from . import dynamics as dyn
from . import grape as gr
from . import library
from . import qec
from .fockspace import HilbertDims
from .model import MHZ, US, ControlPulse, SystemParams, read_pulse, write_pulse

log = logging.getLogger("edbosonic")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CHECK = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    pass


_NUMERIC_ERRORS = (dyn.IntegrationError, dyn.DegenerateChannelError, qec.FitError,
                   bd.BudgetError, np.linalg.LinAlgError, FloatingPointError)


# ------------------------------------------------------------------ units

_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}
_FREQ = {"Hz": 2 * math.pi, "kHz": 2 * math.pi * 1e3, "MHz": MHZ, "GHz": 2 * math.pi * 1e9}
_QTY = re.compile(r"^\s*([-+0-9.eE]+)\s*(/?)\s*([A-Za-zµ]+)\s*$")


def parse_quantity(value: Any, kind: str, where: str) -> float:
    """Parse "<number> <unit>" into SI (seconds, rad/s, 1/s)."""
    if isinstance(value, bool) or not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string with a {kind} unit, got {value!r}")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(f"{where}: cannot parse {value!r}")
    try:
        num = float(m.group(1))
    except ValueError:
        raise ConfigError(f"{where}: bad number in {value!r}") from None
    slash, unit = m.group(2), m.group(3)
    if kind == "time" and not slash and unit in _TIME:
        return num * _TIME[unit]
    if kind == "freq" and not slash and unit in _FREQ:
        return num * _FREQ[unit]
    if kind == "rate" and slash and unit in _TIME:
        return num / _TIME[unit]
    raise ConfigError(f"{where}: {value!r} is not a valid {kind} (unit {slash}{unit})")


def _block(cfg: dict, name: str, required=True) -> dict:
    if name not in cfg:
        if required:
            raise ConfigError(f"missing '{name}' block")
        return {}
    b = cfg[name]
    if not isinstance(b, dict):
        raise ConfigError(f"'{name}' block must be an object")
    return b


def _num(b: dict, key: str, where: str, default=None, kind=float, positive=False):
    if key not in b:
        if default is None:
            raise ConfigError(f"{where}.{key} is required")
        return default
    v = b[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    v = kind(v)
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key} must be positive")
    return v


def _check_keys(b: dict, allowed: set, where: str):
    extra = set(b) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


_PARAM_KINDS = {"chi_e": "freq", "chi_f": "freq", "E_c": "freq", "chi_e2": "freq",
                "chi_f2": "freq", "kappa": "rate", "kappa_e": "rate", "kappa_f": "rate",
                "kappa2": "rate", "dephasing": "rate"}


def parse_params(cfg: dict) -> SystemParams:
    b = _block(cfg, "params")
    _check_keys(b, set(_PARAM_KINDS), "params")
    kw = {k: parse_quantity(v, _PARAM_KINDS[k], f"params.{k}") for k, v in b.items()}
    try:
        return SystemParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None


def parse_dims(cfg: dict) -> HilbertDims:
    b = _block(cfg, "dims", required=False)
    _check_keys(b, {"cavity_dim"}, "dims")
    try:
        return HilbertDims(cavity_dim=_num(b, "cavity_dim", "dims", 12, int))
    except ValueError as exc:
        raise ConfigError(f"dims: {exc}") from None


_OPT_FIELDS = {"gates", "threshold", "max_iterations", "method", "n_segments", "dt", "amp_max",
               "smoothing", "init_scale", "leakage_weight", "guard_levels", "learning_rate",
               "evaluate"}


def parse_optimizer(cfg: dict, seed: int) -> tuple[list[str], gr.OptimizerConfig]:
    b = _block(cfg, "optimizer")
    _check_keys(b, _OPT_FIELDS, "optimizer")
    gates = b.get("gates")
    if not isinstance(gates, list) or not gates:
        raise ConfigError("optimizer.gates must be a non-empty list")
    for g in gates:
        if g not in library.SPECS and g != "ancilla_pi":
            raise ConfigError(f"optimizer.gates: unknown gate {g!r}; "
                              f"known: {sorted(library.SPECS) + ['ancilla_pi']}")
    base = library.GATE_CONFIG
    kw: dict = {"seed": seed}
    for key in ("threshold", "smoothing", "init_scale", "leakage_weight", "learning_rate"):
        if key in b:
            kw[key] = _num(b, key, "optimizer")
    for key in ("max_iterations", "n_segments", "guard_levels"):
        if key in b:
            kw[key] = _num(b, key, "optimizer", kind=int)
    if "method" in b:
        kw["method"] = b["method"]
    if "dt" in b:
        kw["dt"] = parse_quantity(b["dt"], "time", "optimizer.dt")
    if "amp_max" in b:
        a = b["amp_max"]
        vals = a if isinstance(a, list) else [a]
        kw["amp_max"] = tuple(parse_quantity(v, "freq", "optimizer.amp_max") for v in vals)
        if len(vals) == 1:
            kw["amp_max"] = kw["amp_max"][0]
    try:
        return list(gates), gr.with_config(base, **kw)
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from None


@dataclass
class ScheduleSpec:
    runs: list[tuple[str, qec.CycleSchedule]]
    n_cycles: int
    fit_t_max: float | None
    ratio_time: float
    pulses: str | None


def parse_schedule(cfg: dict) -> ScheduleSpec:
    """Strategies x cycle intervals; ``t_int`` may be one value or a list."""
    b = _block(cfg, "schedule")
    _check_keys(b, {"strategies", "t_int", "t_w", "N_PM", "t_PM", "t_QEC", "n_cycles",
                    "fit_t_max", "ratio_time", "pulses"}, "schedule")
    strategies = b.get("strategies", ["ED-A"])
    if not isinstance(strategies, list) or not strategies:
        raise ConfigError("schedule.strategies must be a non-empty list")
    t_pm = parse_quantity(b.get("t_PM", "2 us"), "time", "schedule.t_PM")
    t_qec = parse_quantity(b.get("t_QEC", "2 us"), "time", "schedule.t_QEC")
    n_pm = b.get("N_PM", {})
    if not isinstance(n_pm, (dict, int)) or isinstance(n_pm, bool):
        raise ConfigError("schedule.N_PM must be an integer or a per-strategy object")
    t_ints = b.get("t_int", "92 us")
    t_ints = t_ints if isinstance(t_ints, list) else [t_ints]
    runs = []
    for s in strategies:
        try:
            tag = qec.StrategyTag(s)
        except ValueError:
            raise ConfigError(f"schedule.strategies: unknown strategy {s!r}") from None
        if tag is qec.StrategyTag.NONE:
            continue
        default_n = 1 if tag is qec.StrategyTag.ED_A else 3
        n = n_pm.get(s, default_n) if isinstance(n_pm, dict) else n_pm
        try:
            if "t_w" in b:
                t_w = parse_quantity(b["t_w"], "time", "schedule.t_w")
                runs.append((s, qec.CycleSchedule(n, t_w, t_pm, t_qec)))
                continue
            for t in t_ints:
                t_int = parse_quantity(t, "time", "schedule.t_int")
                runs.append((s, qec.CycleSchedule.for_interval(t_int, n, t_pm, t_qec)))
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from None
    n_cycles = _num(b, "n_cycles", "schedule", 110, int, positive=True)
    fit_t_max = parse_quantity(b["fit_t_max"], "time", "schedule.fit_t_max") \
        if "fit_t_max" in b else None
    ratio_t = parse_quantity(b.get("ratio_time", "2375 us"), "time", "schedule.ratio_time")
    pulses = b.get("pulses")
    if pulses is not None and not isinstance(pulses, str):
        raise ConfigError("schedule.pulses must be 'library' or a directory path")
    return ScheduleSpec(runs, n_cycles, fit_t_max, ratio_t, pulses)


_BUDGET_TIME = {"t_w", "t_PM", "t_QEC"}
_BUDGET_RATE = {"kappa", "kappa_e", "kappa_f"}
_BUDGET_NUM = {"alpha", "alpha_W", "alpha_PMQ", "alpha_PM", "alpha_QEC", "alpha_PMB",
               "alpha_QECB", "nbar"}


def parse_budget(cfg: dict) -> tuple[bd.BudgetParams, list[float], float]:
    b = _block(cfg, "budget")
    _check_keys(b, _BUDGET_TIME | _BUDGET_RATE | _BUDGET_NUM | {"N_PM", "lifetimes",
                                                                 "kappa_f_ratio"}, "budget")
    kw: dict = {}
    for k in _BUDGET_TIME & set(b):
        kw[k] = parse_quantity(b[k], "time", f"budget.{k}") / US
    for k in _BUDGET_RATE & set(b):
        kw[k] = parse_quantity(b[k], "rate", f"budget.{k}") * US
        if k == "kappa" and kw[k] <= 0:
            raise ConfigError("budget.kappa must be positive")
    for k in _BUDGET_NUM & set(b):
        kw[k] = _num(b, k, "budget")
    if "N_PM" in b:
        kw["N_PM"] = _num(b, "N_PM", "budget", kind=int, positive=True)
    try:
        p = bd.BudgetParams(**kw)
    except bd.BudgetError as exc:
        raise ConfigError(f"budget: {exc}") from None
    grid = b.get("lifetimes", {"start": "5 us", "stop": "2000 us", "num": 41})
    lifetimes = parse_grid(grid, "time", "budget.lifetimes")
    lifetimes = [t / US for t in lifetimes]
    ratio = _num(b, "kappa_f_ratio", "budget", 2.0, positive=True)
    return p, lifetimes, ratio


def parse_grid(grid, kind: str, where: str) -> list[float]:
    if isinstance(grid, list):
        if not grid:
            raise ConfigError(f"{where}: empty grid")
        return [parse_quantity(v, kind, where) for v in grid]
    if isinstance(grid, dict):
        lo = parse_quantity(grid.get("start"), kind, f"{where}.start")
        hi = parse_quantity(grid.get("stop"), kind, f"{where}.stop")
        num = grid.get("num")
        if not isinstance(num, int) or num < 1:
            raise ConfigError(f"{where}.num must be a positive integer")
        if lo <= 0 or hi < lo:
            raise ConfigError(f"{where}: need 0 < start <= stop")
        return list(np.geomspace(lo, hi, num)) if grid.get("log", True) else \
            list(np.linspace(lo, hi, num))
    raise ConfigError(f"{where}: grid must be a list or a start/stop/num object")


def canonical(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical(cfg).encode("utf-8")).hexdigest()


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


# --------------------------------------------------------------- manifest


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


@dataclass
class Manifest:
    command: str
    config_hash: str
    seed: int
    out: Path
    jobs: list[dict] = field(default_factory=list)
    files: list[str] = field(default_factory=list)

    def add(self, path: Path):
        rel = str(Path(path).relative_to(self.out))
        if rel not in self.files:
            self.files.append(rel)

    def write(self) -> Path:
        data = {"command": self.command, "config_hash": self.config_hash,
                "version": __version__, "seed": self.seed, "jobs": self.jobs,
                "files": sorted(self.files)}
        path = self.out / "manifest.json"
        path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
        return path


def _run_jobs(manifest: Manifest, jobs: list[tuple[str, Callable, tuple]], workers: int):
    """Run named jobs (possibly in worker processes); record status and timing."""
    results = {}
    failures = []

    def record(name, t0, outcome, err=None):
        entry = {"name": name, "status": "ok" if err is None else "failed",
                 "seconds": round(time.perf_counter() - t0, 3)}
        if err is not None:
            entry["error"] = err
            failures.append((name, err))
        else:
            results[name] = outcome
            for p in outcome.get("files", []):
                manifest.add(Path(p))
        manifest.jobs.append(entry)

    if workers <= 1 or len(jobs) <= 1:
        for name, fn, args in jobs:
            t0 = time.perf_counter()
            try:
                record(name, t0, fn(*args))
            except KeyboardInterrupt:
                record(name, t0, None, "interrupted")
                break
            except Exception as exc:  # recorded in the manifest, re-raised below
                log.debug(traceback.format_exc())
                record(name, t0, None, f"{type(exc).__name__}: {exc}")
                results[name] = exc
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            t0 = time.perf_counter()
            futs = {pool.submit(fn, *args): name for name, fn, args in jobs}
            done = {}
            for fut in cf.as_completed(futs):
                done[futs[fut]] = fut
            for name, _, _ in jobs:
                fut = done[name]
                exc = fut.exception()
                if exc is None:
                    record(name, t0, fut.result())
                else:
                    record(name, t0, None, f"{type(exc).__name__}: {exc}")
                    results[name] = exc
    manifest.jobs.sort(key=lambda j: [n for n, _, _ in jobs].index(j["name"]))
    return results, failures


def _raise_first(results: dict, failures: list):
    if not failures:
        return
    for name, _ in failures:
        exc = results.get(name)
        if isinstance(exc, BaseException):
            raise exc
    raise RuntimeError(f"job {failures[0][0]} failed: {failures[0][1]}")


# ---------------------------------------------------------------- optimize


def _target(name: str, params, dims):
    if name == "ancilla_pi":
        return gr.ancilla_flip_target(dims), "gf"
    spec = library.SPECS[name]
    return library.target_for(spec, dims, params), spec.ancilla_mode


def _rows_for(name: str, pulse, target, params, dims, mode):
    if library.SPECS.get(name) and library.SPECS[name].kind == "ParityMap":
        rows = []
        for sub in gr.parity_rows_targets(dims, mode):
            r = gr.evaluate_open(pulse, sub, params, dims=dims, ancilla_mode=mode,
                                 with_unselected=False)
            rows.append(r)
        return rows
    return [gr.evaluate_open(pulse, target, params, dims=dims, ancilla_mode=mode,
                             name=name)]


def _optimize_job(name: str, cfg: gr.OptimizerConfig, params: SystemParams, dims: HilbertDims,
                  out: Path, evaluate: bool) -> dict:
    target, mode = _target(name, params, dims)
    if name == "ancilla_pi":
        cfg = gr.with_config(cfg, enabled=gr.ANCILLA_CHANNELS)
    elif mode == "ge":
        cfg = gr.with_config(cfg, amp_max=library.GE_AMP_MAX)
    res = gr.optimize(target, cfg, params, dims, mode)
    pdir = out / "pulses"
    pdir.mkdir(parents=True, exist_ok=True)
    ppath = write_pulse(res.pulse, pdir / f"{name}.pulse")
    lpath = write_csv(out / "logs" / f"{name}.csv",
                      ["iteration", "fidelity", "objective", "best_fidelity", "step"],
                      [[e["iteration"], e["fidelity"], e["objective"], e["best_fidelity"],
                        e["step"]] for e in res.log])
    rows = []
    if evaluate:
        rows = [(r.name, r.f_without, r.f_with, r.p_success)
                for r in _rows_for(name, res.pulse, target, params, dims, mode)]
    return {"files": [str(ppath), str(lpath)], "fidelity": res.fidelity,
            "converged": res.converged, "rows": rows}


def cmd_optimize(cfg: dict, out: Path, seed: int, workers: int) -> Manifest:
    params, dims = parse_params(cfg), parse_dims(cfg)
    gates, ocfg = parse_optimizer(cfg, seed)
    evaluate = _block(cfg, "optimizer").get("evaluate", True)
    if not isinstance(evaluate, bool):
        raise ConfigError("optimizer.evaluate must be true or false")
    man = Manifest("optimize", config_hash(cfg), seed, out)
    jobs = [(g, _optimize_job, (g, gr.with_config(ocfg, seed=seed + i), params, dims, out,
                                evaluate)) for i, g in enumerate(gates)]
    results, failures = _run_jobs(man, jobs, workers)
    rows, summary = [], []
    for g in gates:
        r = results.get(g)
        if isinstance(r, dict):
            rows.extend(r["rows"])
            summary.append([g, r["fidelity"], int(r["converged"])])
    man.add(write_csv(out / "table1.csv", ["operation", "f_without_ps", "f_with_ps", "p_succ"],
                      [list(r) for r in rows]))
    man.add(write_csv(out / "closed_fidelity.csv", ["operation", "phi", "converged"], summary))
    man.write()
    _raise_first(results, failures)
    return man


# ---------------------------------------------------------------- simulate


def _pulse_set(strategy: str, sched: qec.CycleSchedule, source: str | None, ideal: bool,
               params, dims) -> qec.PulseSet | str:
    if ideal:
        return "ideal"
    if source is None:
        raise ConfigError("schedule.pulses is required unless --ideal-unitaries is given")
    tag = qec.StrategyTag(strategy)
    mode = "ge" if tag is qec.StrategyTag.ED_B else "gf"
    suffix = "_ge" if mode == "ge" else ""
    tau = sched.no_jump_time / US
    names = {"parity": "ParityMap" + suffix, "qec_code": f"QEC_code_{tau:g}us{suffix}"}
    if tag is qec.StrategyTag.ED_A:
        names["qec_error"] = "QEC_error"
    directory = None if source == "library" else Path(source)
    if directory is not None and not directory.is_dir():
        raise ConfigError(f"schedule.pulses: {source} is not a directory")
    pulses = {}
    for role, n in names.items():
        try:
            pulses[role] = library.load(n, directory)
        except FileNotFoundError as exc:
            raise ConfigError(f"schedule.pulses: {exc}") from None
    return qec.PulseSet.from_pulses(pulses, mode)


def _simulate_job(strategy: str, sched: qec.CycleSchedule, pulses, params, dims,
                  spec: ScheduleSpec, out: Path, tag: str) -> dict:
    res = qec.run_cycles(strategy, sched, pulses, params, spec.n_cycles, dims, fit=False)
    try:
        res.fitted(spec.fit_t_max)
    except qec.FitError as exc:
        # a flat series (no loss) has no decay time; keep the data, skip the fit
        log.warning("%s: %s", tag, exc)
    path = qec.write_lifetime(out / f"lifetime_{tag}.csv", res)
    files = [str(path)]
    fit = path.with_name(path.stem + "_fit.csv")
    if fit.exists():
        files.append(str(fit))
    return {"files": files, "result": res}


def _tag(strategy: str, sched: qec.CycleSchedule) -> str:
    return f"{strategy}_{sched.t_int / US:g}us"


def cmd_simulate(cfg: dict, out: Path, seed: int, workers: int, ideal: bool) -> Manifest:
    params, dims = parse_params(cfg), parse_dims(cfg)
    spec = parse_schedule(cfg)
    man = Manifest("simulate", config_hash(cfg), seed, out)
    jobs = []
    for s, sched in spec.runs:
        pulses = _pulse_set(s, sched, spec.pulses, ideal, params, dims)
        jobs.append((_tag(s, sched), _simulate_job,
                     (s, sched, pulses, params, dims, spec, out, _tag(s, sched))))
    out.mkdir(parents=True, exist_ok=True)
    phys = None
    if params.kappa > 0:
        phys = qec.physical_baseline(params)
        man.add(qec.write_lifetime(out / "lifetime_physical.csv", phys))
        man.add(out / "lifetime_physical_fit.csv")
    results, failures = _run_jobs(man, jobs, workers)
    rows = [] if phys is None else [["physical", "", phys.T1 / US, 1.0, "", "", "", 1.0]]
    for s, sched in spec.runs:
        r = results.get(_tag(s, sched))
        if not isinstance(r, dict):
            continue
        res = r["result"]
        t1 = res.T1 / US if res.fit else None
        if phys is None:
            rows.append([s, sched.t_int / US, t1, None, None, None, None, res.success[-1]])
            continue
        ratio = qec.infidelity_ratio_series(res, params)
        ratio[0] = np.nan
        k = int(np.nanargmax(ratio))
        at = qec.infidelity_ratio(res, phys, spec.ratio_time) \
            if res.times[-1] >= spec.ratio_time else None
        gain = qec.gain_breakeven(res, phys) if res.fit else None
        rows.append([s, sched.t_int / US, t1, gain, at, ratio[k], res.times[k] / US,
                     res.success[-1]])
    man.add(write_csv(out / "gains.csv",
                      ["strategy", "t_int_us", "T1_us", "gain_breakeven", "ratio_at_t",
                       "peak_ratio", "peak_time_us", "final_p_succ"], rows))
    man.write()
    _raise_first(results, failures)
    return man


# ------------------------------------------------------------------- sweep

_SWEEP_KINDS = {"t_int": "time", "kappa": "rate", "kappa_e": "rate", "kappa_f": "rate"}


def cmd_sweep(cfg: dict, out: Path, seed: int, workers: int, ideal: bool) -> Manifest:
    """Repeat the simulate job over a grid of one parameter."""
    params, dims = parse_params(cfg), parse_dims(cfg)
    spec = parse_schedule(cfg)
    b = _block(cfg, "sweep")
    name = b.get("parameter")
    if name not in _SWEEP_KINDS:
        raise ConfigError(f"sweep.parameter must be one of {sorted(_SWEEP_KINDS)}")
    grid = parse_grid(b.get("grid"), _SWEEP_KINDS[name], "sweep.grid")
    man = Manifest("sweep", config_hash(cfg), seed, out)
    jobs, meta = [], []
    for i, v in enumerate(grid):
        p = params if name == "t_int" else params.replace(**{name: v})
        for s, sched in spec.runs:
            if name == "t_int":
                try:
                    sched = qec.CycleSchedule.for_interval(v, sched.N_PM, sched.t_PM,
                                                           sched.t_QEC)
                except ValueError as exc:
                    raise ConfigError(f"sweep.grid: {exc}") from None
            pulses = "ideal" if ideal else _pulse_set(s, sched, spec.pulses, False, p, dims)
            tag = f"{s}_{name}{i}"
            jobs.append((tag, _simulate_job, (s, sched, pulses, p, dims, spec, out, tag)))
            meta.append((tag, s, v))
    results, failures = _run_jobs(man, jobs, workers)
    rows = []
    for tag, s, v in meta:
        r = results.get(tag)
        if isinstance(r, dict):
            res = r["result"]
            p = params if name == "t_int" else params.replace(**{name: v})
            gain = qec.gain_breakeven(res, qec.physical_baseline(p)) \
                if res.fit and p.kappa > 0 else None
            rows.append([s, v, res.T1 / US if res.fit else None, gain, res.success[-1]])
    man.add(write_csv(out / "sweep.csv", ["strategy", name, "T1_us", "gain_breakeven",
                                          "final_p_succ"], rows))
    man.write()
    _raise_first(results, failures)
    return man


# ------------------------------------------------------------------ budget


def cmd_budget(cfg: dict, out: Path, seed: int, workers: int) -> Manifest:
    p, lifetimes, ratio = parse_budget(cfg)
    man = Manifest("budget", config_hash(cfg), seed, out)
    t0 = time.perf_counter()
    terms = bd.budget_terms(p)
    summary = [["gain_budget", bd.gain_budget(p)], ["t_int_us", p.t_int],
               ["E_W", terms["E_W"]], ["E_PM", terms["E_PM"]], ["E_QEC", terms["E_QEC"]],
               ["cubic", terms["cubic"]],
               ["critical_lifetime_us", bd.critical_lifetime(p.kappa)],
               ["saturation_gain", bd.saturation_gain(p.kappa)]]
    man.add(write_csv(out / "budget_summary.csv", ["quantity", "value"], summary))
    for strategy in ("AB", "B"):
        rows = bd.lifetime_sweep(p, lifetimes, strategy, ratio=ratio)
        man.add(bd.write_sweep(out / f"gain_vs_lifetime_{strategy}.csv", rows))
    man.jobs.append({"name": "budget", "status": "ok",
                     "seconds": round(time.perf_counter() - t0, 3)})
    man.write()
    return man


# ------------------------------------------------------------------ verify


def _check_decay(tol):
    from .fockspace import fock
    from .model import default_collapse_set, device_params
    p = device_params()
    dims = HilbertDims()
    rho = np.zeros((dims.total, dims.total), complex)
    i = 1 * 3  # |1, g>
    rho[i, i] = 1
    out = dyn.idle(rho, 100 * US, p, default_collapse_set(p, dims), dims)
    err = abs(out[i, i].real - math.exp(-p.kappa * 100 * US))
    return err <= tol, err


def _check_cascade(tol):
    from .model import default_collapse_set, device_params
    p = device_params()
    dims = HilbertDims()
    rho = np.zeros((dims.total, dims.total), complex)
    rho[2, 2] = 1  # |0, f>
    t = 10 * US
    out = dyn.idle(rho, t, p, default_collapse_set(p, dims), dims)
    kf, ke = p.kappa_f, p.kappa_e
    pf = math.exp(-kf * t)
    pe = kf * (math.exp(-ke * t) - math.exp(-kf * t)) / (kf - ke)
    err = max(abs(out[2, 2].real - pf), abs(out[1, 1].real - pe),
              abs(out[0, 0].real - (1 - pf - pe)))
    return err <= tol, err


def _check_gradient(tol):
    from .model import device_params
    p = device_params()
    dims = HilbertDims()
    target = gr.hadamard_target(dims)
    rng = np.random.default_rng(7)
    scale = np.array([40, 40, 5, 5]) * MHZ
    amps = rng.uniform(-0.5, 0.5, (20, 4)) * scale
    pulse = ControlPulse(40e-9, amps)
    g = gr.gradient(pulse, target, p, dims)
    fd = np.zeros_like(g)
    for k in range(20):
        for c in range(4):
            h = 1e-6 * scale[c]
            a1, a2 = amps.copy(), amps.copy()
            a1[k, c] += h
            a2[k, c] -= h
            fd[k, c] = (gr.gate_fidelity(ControlPulse(pulse.dt, a1), target, p, dims)
                        - gr.gate_fidelity(ControlPulse(pulse.dt, a2), target, p, dims)) / (2 * h)
    err = float(np.abs(g - fd).max() / np.abs(fd).max())
    return err <= tol, err


def _check_cptp(tol):
    from .model import default_collapse_set, device_params
    p = device_params()
    dims = HilbertDims()
    rng = np.random.default_rng(3)
    pulse = ControlPulse(4e-9, rng.uniform(-1, 1, (50, 4)) * np.array([20, 20, 2, 2]) * MHZ)
    frame = qec.BinomialCode().frame(dims)
    col = default_collapse_set(p, dims)
    ch = dyn.channel_from_pulse(pulse, p, col, frame, dims=dims)
    ps = dyn.channel_from_pulse(pulse, p, col, frame, dyn.DISCARD_E, dims)
    worst = max(-ch.choi_min_eigenvalue(), -ps.choi_min_eigenvalue(), 0.0)
    tp = float(np.max(np.abs(np.trace(ch.outputs, axis1=-2, axis2=-1) - np.eye(2))))
    ok = worst <= tol and tp <= tol and ps.is_trace_nonincreasing(tol)
    return ok, max(worst, tp)


def _check_budget(tol):
    p = bd.BudgetParams()
    errs = [abs(bd.critical_lifetime(1 / 2000) - 91.2) / 91.2,
            abs(bd.saturation_gain(1 / 2000) - 38.7) / 38.7,
            abs(bd.e_waiting(1.27, 1 / 2000, 30) - 2.8575e-4) / 2.8575e-4,
            abs(bd.e_qec(0.0, 0, 0, 1 / 2000, 2.0) - 5e-4) / 5e-4]
    hand = p.alpha * p.kappa * p.t_int / (
        p.N_PM * (bd.e_waiting(p.alpha_W, p.kappa, p.t_w)
                  + bd.e_parity(p.alpha_PMQ, p.alpha_PM, p.kappa_f, p.kappa_e, p.kappa, p.t_PM))
        + bd.e_qec(p.alpha_QEC, p.kappa_f, p.kappa_e, p.kappa, p.t_QEC, p.nbar)
        + (p.kappa * p.t_int) ** 3)
    errs.append(abs(bd.gain_budget(p) - hand) / hand)
    err = max(errs)
    return err <= tol, err


def _check_ptm_identity(tol):
    err = float(np.abs(dyn.ptm_from_unitary(np.eye(2)) - np.eye(4)).max())
    return err <= tol, err


def _check_depolarizing(tol):
    paulis = dyn.pauli_basis(2)
    kraus = [0.5 * p for p in paulis]
    f = dyn.process_fidelity(dyn.ptm_from_kraus(kraus), np.eye(4))
    err = abs(f - 0.25)
    return err <= tol, err


def _check_baseline(tol):
    from .model import device_params
    res = qec.physical_baseline(device_params())
    err = abs(res.T1 - 3.35e-3) / 3.35e-3
    return err <= tol, err


CHECKS: dict[str, tuple[Callable, float]] = {
    "analytic_decay": (_check_decay, 1e-6),
    "cascade": (_check_cascade, 1e-6),
    "fd_gradient": (_check_gradient, 1e-5),
    "cptp": (_check_cptp, 1e-8),
    "budget_regression": (_check_budget, 2e-3),
    "ptm_identity": (_check_ptm_identity, 1e-12),
    "depolarizing_floor": (_check_depolarizing, 1e-12),
    "physical_baseline": (_check_baseline, 0.02),
}


def cmd_verify(cfg: dict, out: Path, seed: int, workers: int) -> Manifest:
    b = _block(cfg, "verify", required=False)
    _check_keys(b, {"checks", "tolerances"}, "verify")
    names = b.get("checks", list(CHECKS))
    if not isinstance(names, list):
        raise ConfigError("verify.checks must be a list")
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"verify.checks: unknown check(s) {unknown}")
    tols = b.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("verify.tolerances must be an object")
    man = Manifest("verify", config_hash(cfg), seed, out)
    rows, failed = [], []
    for name in names:
        fn, tol = CHECKS[name]
        if name in tols:
            tol = _num(tols, name, "verify.tolerances")
        t0 = time.perf_counter()
        try:
            ok, value = fn(tol)
            detail = ""
        except Exception as exc:
            ok, value, detail = False, float("nan"), f"{type(exc).__name__}: {exc}"
        rows.append([name, int(bool(ok)), value, tol, detail])
        man.jobs.append({"name": name, "status": "ok" if ok else "failed",
                         "seconds": round(time.perf_counter() - t0, 3)})
        print(f"{'PASS' if ok else 'FAIL'} {name}: value={value:.3e} tol={tol:.1e} {detail}")
        if not ok:
            failed.append(name)
    out.mkdir(parents=True, exist_ok=True)
    man.add(write_csv(out / "verify.csv", ["check", "passed", "value", "tolerance", "detail"],
                      rows))
    man.write()
    if failed:
        raise CheckFailure(f"failed checks: {failed}")
    return man


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edbosonic", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("optimize", "simulate", "sweep", "budget", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "verify", help="JSON run config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        if name in ("simulate", "sweep"):
            p.add_argument("--ideal-unitaries", action="store_true",
                           help="replace shaped pulses by ideal unitaries")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        out = Path(args.out or cfg.get("output", f"edbosonic_{args.command}"))
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "optimize":
            man = cmd_optimize(cfg, out, seed, args.workers)
        elif args.command == "simulate":
            man = cmd_simulate(cfg, out, seed, args.workers, args.ideal_unitaries)
        elif args.command == "sweep":
            man = cmd_sweep(cfg, out, seed, args.workers, args.ideal_unitaries)
        elif args.command == "budget":
            man = cmd_budget(cfg, out, seed, args.workers)
        else:
            man = cmd_verify(cfg, out, seed, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RuntimeError, KeyboardInterrupt) as exc:
        print(f"job failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out / 'manifest.json'} ({len(man.files)} files)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
