"""Repetitive error-detected QEC on the binomial code.

One QEC cycle ends with every kept branch measured and its ancilla reset to
|g>, so the cycle acts as a linear map on cavity operators alone. That map is
built once by propagating a Hermitian basis of cavity operators through the
cycle, and the lifetime curve follows from its powers.

Strategies:
  ED-A   wait, parity map, measure ancilla (e: discard, g: recover no-jump
         distortion, f: reset and recover the error word).
  ED-AB  N_PM rounds of wait, parity map, keep only g; then recover.
  ED-B   as ED-AB with a g-e ancilla; only odd parity (ancilla e) is
         discarded and ancilla decay goes unflagged.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize as sopt

from . import dynamics as dyn
from . import grape as gr
from .codes import BinomialCode, fock_frame
from .fockspace import E, F, G, HilbertDims, product_ket
from .model import (US, CollapseSet, ControlPulse, SystemParams, control_system,
                    default_collapse_set)

__all__ = ["BinomialCode", "CycleSchedule", "StrategyTag", "LifetimeResult", "FitResult",
           "FitError", "MissingPulseError", "Operation", "PulseSet", "physical_baseline",
           "physical_fidelity", "run_cycles", "cycle_map", "fit_decay", "gain_breakeven",
           "infidelity_ratio", "recovery_target", "write_lifetime", "read_lifetime"]


class FitError(RuntimeError):
    def __init__(self, msg: str, residual: float = float("nan")):
        super().__init__(f"{msg} (residual norm {residual:.3e})")
        self.residual = residual


class MissingPulseError(KeyError):
    pass


class StrategyTag(str, enum.Enum):
    ED_A = "ED-A"
    ED_AB = "ED-AB"
    ED_B = "ED-B"
    NONE = "NONE"


@dataclass(frozen=True)
class CycleSchedule:
    """Durations in seconds."""

    N_PM: int = 1
    t_w: float = 88 * US
    t_PM: float = 2 * US
    t_QEC: float = 2 * US

    def __post_init__(self):
        if self.N_PM < 1 or int(self.N_PM) != self.N_PM:
            raise ValueError("N_PM must be a positive integer")
        if min(self.t_w, self.t_PM, self.t_QEC) < 0:
            raise ValueError("durations must be non-negative")

    @property
    def t_int(self) -> float:
        return self.N_PM * (self.t_w + self.t_PM) + self.t_QEC

    @property
    def no_jump_time(self) -> float:
        """Accumulated waiting plus parity time since the last recovery."""
        return self.N_PM * (self.t_w + self.t_PM)

    @classmethod
    def for_interval(cls, t_int: float, N_PM: int = 1, t_PM: float = 2 * US,
                     t_QEC: float = 2 * US) -> "CycleSchedule":
        t_w = (t_int - t_QEC) / N_PM - t_PM
        if t_w < 0:
            raise ValueError(f"interval {t_int} too short for N_PM={N_PM}")
        return cls(N_PM, t_w, t_PM, t_QEC)


def recovery_target(code: BinomialCode, tau: float, dims: HilbertDims,
                    kappa: float) -> gr.TargetIsometry:
    """Isometry undoing the no-jump distortion accumulated over ``tau`` seconds."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return gr.recovery_code_target(dims, kappa * tau, code)


# ------------------------------------------------------------------ baseline


def physical_fidelity(kappa: float, times) -> np.ndarray:
    """Process fidelity of a Fock {0,1} qubit under amplitude damping."""
    t = np.asarray(times, float)
    out = []
    for ti in np.atleast_1d(t):
        ptm = dyn.ptm_from_kraus(dyn.amplitude_damping_kraus(1 - math.exp(-kappa * ti)))
        out.append(dyn.process_fidelity(ptm, np.eye(4)))
    return np.array(out).reshape(t.shape)


@dataclass
class FitResult:
    A: float
    T1: float
    cov: np.ndarray
    residual: float

    @property
    def T1_err(self) -> float:
        return float(math.sqrt(max(self.cov[1, 1], 0.0)))


def _decay(t, a, t1):
    return a * np.exp(-t / t1) + 0.25


def fit_decay(times, fidelity, floor: float = 0.25) -> FitResult:
    """Least-squares fit of F = A exp(-t/T1) + floor (floor fixed)."""
    t = np.asarray(times, float)
    f = np.asarray(fidelity, float)
    if t.size < 4 or t.size != f.size:
        raise FitError("need at least 4 matching points")
    drop = f[0] - f[-1]
    spread = np.ptp(f)
    if spread < 1e-12 or drop <= 0:
        raise FitError("series shows no decay", float(np.linalg.norm(f - f.mean())))
    model = lambda tt, a, t1: a * np.exp(-tt / t1) + floor
    y = np.clip(f - floor, 1e-300, None)
    a0 = max(f[0] - floor, 1e-6)
    slope = np.polyfit(t, np.log(y), 1)[0]
    t0 = -1 / slope if slope < 0 else (t[-1] - t[0]) * 10
    try:
        popt, pcov, info, msg, ier = sopt.curve_fit(model, t, f, p0=(a0, t0), full_output=True,
                                                   maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"fit did not converge: {exc}") from exc
    resid = float(np.linalg.norm(info["fvec"]))
    if not np.all(np.isfinite(popt)) or popt[1] <= 0 or ier not in (1, 2, 3, 4):
        raise FitError(f"fit did not converge: {msg}", resid)
    return FitResult(float(popt[0]), float(popt[1]), pcov, resid)


# ------------------------------------------------------------------ results


@dataclass
class LifetimeResult:
    strategy: str
    times: np.ndarray  # seconds
    fidelity: np.ndarray
    success: np.ndarray
    fit: FitResult | None = None
    schedule: CycleSchedule | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times_us(self) -> np.ndarray:
        return self.times / US

    @property
    def T1(self) -> float:
        if self.fit is None:
            raise ValueError("result has not been fitted")
        return self.fit.T1

    def fitted(self, t_max: float | None = None) -> "LifetimeResult":
        sel = slice(None) if t_max is None else self.times <= t_max * (1 + 1e-12)
        self.fit = fit_decay(self.times[sel], self.fidelity[sel])
        return self


def physical_baseline(params: SystemParams, times=None) -> LifetimeResult:
    """Idle Fock {0,1} qubit; default grid 0-10 ms, 41 points."""
    t = np.linspace(0, 10e-3, 41) if times is None else np.asarray(times, float)
    if params.kappa <= 0:
        raise ValueError("kappa must be positive")
    f = physical_fidelity(params.kappa, t)
    res = LifetimeResult(StrategyTag.NONE.value, t, f, np.ones_like(t))
    return res.fitted()


def gain_breakeven(logical: LifetimeResult, physical: LifetimeResult) -> float:
    return logical.T1 / physical.T1


def infidelity_ratio(logical: LifetimeResult, physical: LifetimeResult, t: float) -> float:
    """(1 - F_phys(t)) / (1 - F_log(t)) by linear interpolation."""
    for r in (logical, physical):
        if t < r.times[0] - 1e-15 or t > r.times[-1] + 1e-15:
            raise ValueError(f"t={t} outside the {r.strategy} time grid")
    fl = np.interp(t, logical.times, logical.fidelity)
    fp = np.interp(t, physical.times, physical.fidelity)
    return float((1 - fp) / (1 - fl))


def infidelity_ratio_series(logical: LifetimeResult, params: SystemParams) -> np.ndarray:
    """Ratio at every logical grid point against the exact physical curve."""
    fp = physical_fidelity(params.kappa, logical.times)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1 - fp) / (1 - logical.fidelity)


# --------------------------------------------------------------- operations


def _complete_unitary(target: gr.TargetIsometry) -> np.ndarray:
    """A unitary on the full space agreeing with the isometry on its inputs."""
    d, k = target.inputs.shape
    eye = np.eye(d)

    def full(basis):
        q, _ = np.linalg.qr(np.column_stack([basis, eye]))
        q = q[:, :d]
        # QR may flip the phase of the leading columns; put the basis back exactly
        q[:, :k] = basis
        return q

    return full(target.outputs) @ full(target.inputs).conj().T


@dataclass
class Operation:
    """A timed step: a shaped pulse, or an ideal unitary after idling."""

    name: str
    duration: float
    pulse: ControlPulse | None = None
    unitary: np.ndarray | None = None
    ancilla_mode: str = "gf"

    @classmethod
    def ideal(cls, name: str, target: gr.TargetIsometry, duration: float, ancilla_mode="gf"):
        return cls(name, duration, unitary=_complete_unitary(target), ancilla_mode=ancilla_mode)

    def apply(self, batch: np.ndarray, params: SystemParams, collapse: CollapseSet,
              dims: HilbertDims) -> np.ndarray:
        system = control_system(params, dims, self.ancilla_mode)
        if self.pulse is not None:
            return dyn.propagate_lindblad(batch, self.pulse, system, collapse)
        out = dyn.idle(batch, self.duration, system, collapse) if self.duration > 0 else batch
        u = self.unitary
        return u @ out @ u.conj().T


@dataclass
class PulseSet:
    """Operations used by a strategy, keyed by role."""

    parity: Operation | None = None
    qec_code: Operation | None = None
    qec_error: Operation | None = None

    def require(self, *roles):
        for r in roles:
            if getattr(self, r) is None:
                raise MissingPulseError(f"missing pulse for {r}")

    @classmethod
    def from_pulses(cls, pulses: Mapping[str, ControlPulse], ancilla_mode="gf") -> "PulseSet":
        ops = {}
        for role in ("parity", "qec_code", "qec_error"):
            p = pulses.get(role)
            if p is not None:
                ops[role] = Operation(role, p.duration, pulse=p, ancilla_mode=ancilla_mode)
        return cls(**ops)

    @classmethod
    def ideal(cls, schedule: CycleSchedule, params: SystemParams, dims: HilbertDims,
              ancilla_mode="gf", code: BinomialCode | None = None) -> "PulseSet":
        code = code or BinomialCode()
        rec = recovery_target(code, schedule.no_jump_time, dims, params.kappa)
        return cls(
            Operation.ideal("parity", gr.parity_target(dims, ancilla_mode=ancilla_mode),
                            schedule.t_PM, ancilla_mode),
            Operation.ideal("qec_code", rec, schedule.t_QEC, ancilla_mode),
            Operation.ideal("qec_error", gr.recovery_error_target(dims, code),
                            schedule.t_QEC, ancilla_mode))


def _ancilla_diag(dims: HilbertDims, level: int) -> np.ndarray:
    m = np.zeros(3)
    m[level] = 1
    return np.kron(np.ones(dims.cavity_dim), m)


def _measure(batch: np.ndarray, dims: HilbertDims, keep: Sequence[int]) -> list[np.ndarray]:
    """Ancilla outcome branches for the kept levels, each reset to g."""
    out = []
    c = dims.cavity_dim
    for lvl in keep:
        r = batch.reshape(-1, c, 3, c, 3)[:, :, lvl, :, lvl]
        full = np.zeros_like(batch).reshape(-1, c, 3, c, 3)
        full[:, :, G, :, G] = r
        out.append(full.reshape(batch.shape))
    return out


def _keep_reset(batch, dims, keep):
    branches = _measure(batch, dims, keep)
    return sum(branches[1:], branches[0])


def _cavity_basis(dims: HilbertDims):
    c = dims.cavity_dim
    frame = dyn.LogicalFrame(np.column_stack([product_ket(dims, np.eye(c)[n], G)
                                              for n in range(c)]))
    return dyn.hermitian_basis(frame)


def cycle_map(strategy: StrategyTag | str, schedule: CycleSchedule, pulses: PulseSet,
              params: SystemParams, dims: HilbertDims | None = None,
              collapse: CollapseSet | None = None) -> np.ndarray:
    """Cycle superoperator on cavity operators, row-major vec, shape (c^2, c^2)."""
    strategy = StrategyTag(strategy)
    dims = dims or HilbertDims()
    collapse = collapse or default_collapse_set(params, dims)
    c = dims.cavity_dim
    ops, coeff = _cavity_basis(dims)
    system = control_system(params, dims)

    def wait(b):
        return dyn.idle(b, schedule.t_w, system, collapse) if schedule.t_w > 0 else b

    def run(op: Operation, b):
        return op.apply(b, params, collapse, dims)

    b = ops.astype(complex)
    if strategy is StrategyTag.ED_A:
        if schedule.N_PM != 1:
            raise ValueError("ED-A uses one parity measurement per cycle")
        pulses.require("parity", "qec_code", "qec_error")
        b = run(pulses.parity, wait(b))
        even, odd = _measure(b, dims, (G, F))
        b = _keep_reset(run(pulses.qec_code, even), dims, (G, F)) \
            + _keep_reset(run(pulses.qec_error, odd), dims, (G, F))
    elif strategy in (StrategyTag.ED_AB, StrategyTag.ED_B):
        pulses.require("parity", "qec_code")
        for _ in range(schedule.N_PM):
            b = run(pulses.parity, wait(b))
            b = _keep_reset(b, dims, (G,))
        b = run(pulses.qec_code, b)
        # ED-B does not discard on the ancilla after recovery
        b = _keep_reset(b, dims, (G, F) if strategy is StrategyTag.ED_AB else (G, E, F))
    else:
        raise ValueError(f"no cycle for strategy {strategy.value}")
    cav = b.reshape(-1, c, 3, c, 3)[:, :, G, :, G]  # (c^2 basis, c, c)
    images = np.einsum("ijm,mab->ijab", coeff, cav)  # image of |i><j|
    return images.reshape(c * c, c * c).T


def _default_pulses(strategy: StrategyTag, schedule: CycleSchedule, params, dims) -> PulseSet:
    from . import library
    tau_us = schedule.no_jump_time / US
    mode = "ge" if strategy is StrategyTag.ED_B else "gf"
    suffix = "_ge" if mode == "ge" else ""
    code_name = f"QEC_code_{tau_us:g}us{suffix}"
    if code_name not in library.SPECS:
        raise MissingPulseError(f"no standard recovery pulse for tau = {tau_us:g} us")
    names = {"parity": "ParityMap" + suffix, "qec_code": code_name}
    if strategy is StrategyTag.ED_A:
        names["qec_error"] = "QEC_error"
    return PulseSet.from_pulses({k: library.get(v, params, dims) for k, v in names.items()}, mode)


def run_cycles(strategy: StrategyTag | str, schedule: CycleSchedule,
               pulses: PulseSet | Mapping[str, ControlPulse] | str | None, params: SystemParams,
               n_cycles: int, dims: HilbertDims | None = None,
               collapse: CollapseSet | None = None, code: BinomialCode | None = None,
               fit: bool = True, fit_t_max: float | None = None) -> LifetimeResult:
    """Logical process fidelity and success probability at cycle boundaries.

    ``pulses`` may be a PulseSet, a role->pulse mapping, "ideal" for ideal
    unitaries, or None for the shipped pulse library.
    """
    strategy = StrategyTag(strategy)
    dims = dims or HilbertDims()
    code = code or BinomialCode()
    mode = "ge" if strategy is StrategyTag.ED_B else "gf"
    if pulses is None:
        pulses = _default_pulses(strategy, schedule, params, dims)
    elif isinstance(pulses, str):
        if pulses != "ideal":
            raise ValueError(f"unknown pulse source {pulses!r}")
        pulses = PulseSet.ideal(schedule, params, dims, mode, code)
    elif not isinstance(pulses, PulseSet):
        pulses = PulseSet.from_pulses(pulses, mode)
    m = cycle_map(strategy, schedule, pulses, params, dims, collapse)
    res = evolve_logical(m, code, dims.cavity_dim, n_cycles, schedule.t_int)
    res.strategy = strategy.value
    res.schedule = schedule
    if fit:
        res.fitted(fit_t_max)
    return res


def evolve_logical(m: np.ndarray, code: BinomialCode, c: int, n_cycles: int,
                   t_int: float) -> LifetimeResult:
    """Apply a cycle map repeatedly to the logical basis and record the series."""
    words = code.cavity_words(c)
    basis = np.einsum("ai,bj->ijab", words, words.conj()).reshape(4, c * c)
    cards = dyn.cardinal_states(2)
    fid, succ = [], []
    state = basis.T.copy()  # columns are vec(|i><j|)
    for n in range(n_cycles + 1):
        if n:
            state = m @ state
        imgs = state.T.reshape(2, 2, c, c)
        traces = np.trace(imgs, axis1=-2, axis2=-1)
        p = float(np.mean([np.sum(r * traces).real for r in cards]))
        logical = np.einsum("ai,xyab,bj->xyij", words.conj(), imgs, words)
        ch = dyn.ChannelMap(dyn.LogicalFrame(np.eye(2)), logical, trace_preserving=False)
        if p <= 1e-14:
            raise dyn.DegenerateChannelError("success probability vanished")
        ptm = dyn.ptm_of(ch, renormalize=False) / p
        fid.append(dyn.process_fidelity(ptm, np.eye(4)))
        succ.append(p)
    times = np.arange(n_cycles + 1) * t_int
    return LifetimeResult("", times, np.array(fid), np.array(succ))


# ------------------------------------------------------------------- file I/O


def write_lifetime(path: str | Path, result: LifetimeResult) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_us", "fidelity", "success_prob"])
        for t, f, p in zip(result.times_us, result.fidelity, result.success):
            w.writerow([f"{t:.17g}", f"{f:.17g}", f"{p:.17g}"])
    if result.fit is not None:
        fit_path = path.with_name(path.stem + "_fit.csv")
        with fit_path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "A", "T1_us", "T1_err_us", "residual"])
            w.writerow([result.strategy, f"{result.fit.A:.17g}", f"{result.fit.T1 / US:.17g}",
                        f"{result.fit.T1_err / US:.17g}", f"{result.fit.residual:.17g}"])
    return path


def read_lifetime(path: str | Path, strategy: str = "") -> LifetimeResult:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return LifetimeResult(strategy, data[:, 0] * US, data[:, 1], data[:, 2])
