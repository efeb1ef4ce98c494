"""Closed-form QEC gain budget.

All durations are in microseconds and all rates in 1/us. The gain of an
error-detected cycle of length t_int is

    G = alpha kappa t_int / [N_PM (E_W + E_PM) + E_QEC + (kappa t_int)^3]

with the per-step error terms below. ``strategy="B"`` swaps the ancilla
terms for a g-e ancilla, whose decay during a step is not flagged and so
enters at first order in kappa_e.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ALPHA = 0.6
ALPHA_W = 1.27
NBAR = 2.0


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class BudgetParams:
    alpha: float = ALPHA
    alpha_W: float = ALPHA_W
    # from calibrate() on the shipped parity and recovery pulses (tau = 90 us)
    alpha_PMQ: float = 0.0159
    alpha_PM: float = 1.64
    alpha_QEC: float = 0.701
    alpha_PMB: float = 0.0677
    alpha_QECB: float = 0.991
    nbar: float = NBAR
    kappa: float = 1 / 2000
    kappa_e: float = 1 / 40
    kappa_f: float = 1 / 20
    t_w: float = 28.0
    t_PM: float = 2.0
    t_QEC: float = 2.0
    N_PM: int = 3

    def __post_init__(self):
        vals = {k: v for k, v in self.__dict__.items()}
        neg = [k for k, v in vals.items() if v < 0]
        if neg:
            raise BudgetError(f"negative budget fields: {neg}")
        if self.alpha <= 0 or self.alpha_W <= 0:
            raise BudgetError("alpha and alpha_W must be positive")
        if self.N_PM < 1 or int(self.N_PM) != self.N_PM:
            raise BudgetError("N_PM must be a positive integer")
        if self.kappa <= 0:
            raise BudgetError("kappa must be positive")

    @property
    def t_int(self) -> float:
        return self.N_PM * (self.t_w + self.t_PM) + self.t_QEC

    def replace(self, **kw) -> "BudgetParams":
        return replace(self, **kw)

    def with_ancilla_lifetime(self, t_e: float, ratio: float = 2.0) -> "BudgetParams":
        """Set 1/kappa_e = t_e and kappa_f = ratio * kappa_e."""
        return replace(self, kappa_e=1 / t_e, kappa_f=ratio / t_e)


def simple_gain(alpha: float, alpha_W: float, eps_op: float) -> float:
    if eps_op <= 0:
        raise BudgetError("eps_op must be positive")
    return alpha / (2 * math.sqrt(alpha_W * eps_op))


def error_rate(t: float, alpha_W: float, kappa: float, eps_op: float) -> float:
    """Logical error rate eps_op / t + alpha_W kappa^2 t for correction every t."""
    return eps_op / t + alpha_W * kappa ** 2 * t


def optimal_interval(alpha_W: float, kappa: float, eps_op: float) -> float:
    if min(alpha_W, kappa, eps_op) <= 0:
        raise BudgetError("optimal_interval needs positive inputs")
    return math.sqrt(eps_op / (alpha_W * kappa ** 2))


def e_waiting(alpha_W: float, kappa: float, t_w: float) -> float:
    return alpha_W * (kappa * t_w) ** 2


def e_parity(alpha_PMQ: float, alpha_PM: float, kappa_f: float, kappa_e: float, kappa: float,
             t_PM: float) -> float:
    return alpha_PMQ * kappa_f * kappa_e * t_PM ** 2 + alpha_PM * (kappa * t_PM) ** 2


def e_qec(alpha_QEC: float, kappa_f: float, kappa_e: float, kappa: float, t_QEC: float,
          nbar: float = NBAR) -> float:
    return (alpha_QEC * kappa_f * kappa_e * t_QEC ** 2 + nbar * kappa * t_QEC) / 4


def e_parity_b(alpha_PMB: float, alpha_PM: float, kappa_e: float, kappa: float,
               t_PM: float) -> float:
    return alpha_PMB * kappa_e * t_PM + alpha_PM * (kappa * t_PM) ** 2


def e_qec_b(alpha_QECB: float, kappa_e: float, kappa: float, t_QEC: float,
            nbar: float = NBAR) -> float:
    return (alpha_QECB * kappa_e * t_QEC + nbar * kappa * t_QEC) / 4


def budget_terms(p: BudgetParams, strategy: str = "AB") -> dict[str, float]:
    ew = e_waiting(p.alpha_W, p.kappa, p.t_w)
    if strategy == "AB":
        epm = e_parity(p.alpha_PMQ, p.alpha_PM, p.kappa_f, p.kappa_e, p.kappa, p.t_PM)
        eq = e_qec(p.alpha_QEC, p.kappa_f, p.kappa_e, p.kappa, p.t_QEC, p.nbar)
    elif strategy == "B":
        epm = e_parity_b(p.alpha_PMB, p.alpha_PM, p.kappa_e, p.kappa, p.t_PM)
        eq = e_qec_b(p.alpha_QECB, p.kappa_e, p.kappa, p.t_QEC, p.nbar)
    else:
        raise BudgetError(f"unknown strategy {strategy!r}")
    return {"E_W": ew, "E_PM": epm, "E_QEC": eq, "cubic": (p.kappa * p.t_int) ** 3}


def gain_budget(p: BudgetParams, strategy: str = "AB") -> float:
    e = budget_terms(p, strategy)
    den = p.N_PM * (e["E_W"] + e["E_PM"]) + e["E_QEC"] + e["cubic"]
    if den <= 0:
        raise BudgetError("zero error budget: gain diverges")
    return p.alpha * p.kappa * p.t_int / den


def default_tw_grid(lo: float = 0.1, hi: float = 200.0, n: int = 200) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class GainOptimum:
    params: BudgetParams
    gain: float

    @property
    def t_w(self) -> float:
        return self.params.t_w

    @property
    def N_PM(self) -> int:
        return self.params.N_PM


def maximize_gain(p: BudgetParams, t_w_grid: Sequence[float] | None = None,
                  n_pm: Iterable[int] = range(1, 11), strategy: str = "AB") -> GainOptimum:
    """Exhaustive search over the (t_w, N_PM) grid; ties keep the first point."""
    tws = default_tw_grid() if t_w_grid is None else np.asarray(t_w_grid, float)
    nps = list(n_pm)
    if tws.size == 0 or not nps:
        raise BudgetError("empty search domain")
    best = None
    for n in nps:
        for tw in tws:
            q = replace(p, t_w=float(tw), N_PM=int(n))
            g = gain_budget(q, strategy)
            if best is None or g > best.gain:
                best = GainOptimum(q, g)
    return best


def critical_lifetime(kappa: float) -> float:
    """1/kappa_e at the crossover, in us, for kappa in 1/us."""
    if kappa <= 0:
        raise BudgetError("kappa must be positive")
    return 1.0 / (1.74 * kappa ** (2 / 3))


def saturation_gain(kappa: float) -> float:
    if kappa <= 0:
        raise BudgetError("kappa must be positive")
    k = kappa  # kappa times the 1 us reference time
    return 1.0 / (3.8 * k + 3.8 * k ** (2 / 3))


@dataclass
class SweepRow:
    lifetime_us: float
    g_max: float
    best_t_w: float
    best_n_pm: int


def lifetime_sweep(p: BudgetParams, lifetimes_us: Sequence[float], strategy: str = "AB",
                   t_w_grid=None, n_pm=range(1, 11), ratio: float = 2.0) -> list[SweepRow]:
    """G_max against ancilla lifetime 1/kappa_e (kappa_f = ratio * kappa_e)."""
    rows = []
    for t in lifetimes_us:
        if t <= 0:
            raise BudgetError("lifetimes must be positive")
        opt = maximize_gain(p.with_ancilla_lifetime(t, ratio), t_w_grid, n_pm, strategy)
        rows.append(SweepRow(float(t), opt.gain, opt.t_w, opt.N_PM))
    return rows


def write_sweep(path: str | Path, rows: Sequence[SweepRow]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lifetime_us", "G_max", "best_t_w", "best_N_PM"])
        for r in rows:
            w.writerow([f"{r.lifetime_us:.17g}", f"{r.g_max:.17g}", f"{r.best_t_w:.17g}",
                        r.best_n_pm])
    return path


def read_sweep(path: str | Path) -> list[SweepRow]:
    with Path(path).open(encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        return [SweepRow(float(r["lifetime_us"]), float(r["G_max"]), float(r["best_t_w"]),
                         int(r["best_N_PM"])) for r in rd]


def second_difference(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, float)
    return v[2:] - 2 * v[1:-1] + v[:-2]


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class Calibration:
    """Budget coefficients inferred from simulated pulse infidelities."""

    alpha_PMQ: float
    alpha_PM: float
    alpha_QEC: float
    alpha_PMB: float
    alpha_QECB: float
    errors: dict

    def apply(self, p: BudgetParams) -> BudgetParams:
        return replace(p, alpha_PMQ=self.alpha_PMQ, alpha_PM=self.alpha_PM,
                       alpha_QEC=self.alpha_QEC, alpha_PMB=self.alpha_PMB,
                       alpha_QECB=self.alpha_QECB)


def _excess_error(pulse, target, params, keep, mode, dims, which):
    """Infidelity added by one loss channel on top of the lossless pulse.

    Branches ending in odd photon parity are dropped too: the next parity
    check flags them, so they are not part of the undetected step error.
    """
    from . import grape as gr
    from .dynamics import PostSelection

    discard = tuple(l for l in "gef" if l not in keep)
    ps = PostSelection(discard, parity="even")
    zero = {"kappa": 0.0, "kappa_e": 0.0, "kappa_f": 0.0}
    lossy = params.replace(**{**zero, **{k: getattr(params, k) for k in which}})
    f0 = gr.evaluate_open(pulse, target, params.lossless(), ps, dims, ancilla_mode=mode,
                          with_unselected=False).f_with
    f1 = gr.evaluate_open(pulse, target, lossy, ps, dims, ancilla_mode=mode,
                          with_unselected=False).f_with
    return max(f0 - f1, 0.0)


def calibrate(params=None, dims=None, tau_us: float = 90.0, pulses: dict | None = None,
              ) -> Calibration:
    """Fit the ancilla and cavity coefficients of the step errors.

    Each coefficient is the excess process infidelity of the shipped pulse
    with only the matching loss channel switched on, divided by the rate
    product it multiplies. Parity maps keep only the expected g outcome of
    a code-space input; recovery keeps g and f (f is reset, e discarded)
    for the g-f ancilla and keeps everything for the g-e ancilla. In all
    cases odd-parity branches are left to the following parity check.
    """
    from . import grape as gr
    from . import library as lib
    from .fockspace import HilbertDims
    from .model import device_params

    params = params or device_params()
    dims = dims or HilbertDims()
    pulses = dict(pulses or {})
    names = {"pm": "ParityMap", "pm_ge": "ParityMap_ge",
             "qec": f"QEC_code_{tau_us:g}us", "qec_ge": f"QEC_code_{tau_us:g}us_ge"}
    got = {k: pulses.get(k) or lib.get(n, params, dims) for k, n in names.items()}
    code_gf, _ = gr.parity_rows_targets(dims, "gf")
    code_ge, _ = gr.parity_rows_targets(dims, "ge")
    rec = gr.recovery_code_target(dims, params.kappa * tau_us * 1e-6)

    t_pm, t_qec = got["pm"].duration, got["qec"].duration
    k, ke, kf = params.kappa, params.kappa_e, params.kappa_f
    err = {
        "PM_ancilla": _excess_error(got["pm"], code_gf, params, "g", "gf", dims,
                                    ("kappa_e", "kappa_f")),
        "PM_cavity": _excess_error(got["pm"], code_gf, params, "g", "gf", dims, ("kappa",)),
        "QEC_ancilla": _excess_error(got["qec"], rec, params, "gf", "gf", dims,
                                     ("kappa_e", "kappa_f")),
        "PMB_ancilla": _excess_error(got["pm_ge"], code_ge, params, "g", "ge", dims,
                                     ("kappa_e",)),
        "QECB_ancilla": _excess_error(got["qec_ge"], rec, params, "gef", "ge", dims,
                                      ("kappa_e",)),
    }
    t_pm_ge, t_qec_ge = got["pm_ge"].duration, got["qec_ge"].duration
    return Calibration(
        alpha_PMQ=err["PM_ancilla"] / (kf * ke * t_pm ** 2),
        alpha_PM=err["PM_cavity"] / (k * t_pm) ** 2,
        alpha_QEC=4 * err["QEC_ancilla"] / (kf * ke * t_qec ** 2),
        alpha_PMB=err["PMB_ancilla"] / (ke * t_pm_ge),
        alpha_QECB=4 * err["QECB_ancilla"] / (ke * t_qec_ge),
        errors=err)


def main(argv=None):
    import argparse
    ap = argparse.ArgumentParser(description="calibrate budget coefficients from the pulse library")
    ap.add_argument("--tau-us", type=float, default=90.0)
    args = ap.parse_args(argv)
    cal = calibrate(tau_us=args.tau_us)
    for key in ("alpha_PMQ", "alpha_PM", "alpha_QEC", "alpha_PMB", "alpha_QECB"):
        print(f"{key} = {getattr(cal, key):.6g}")
    for key, v in cal.errors.items():
        print(f"# {key} excess infidelity {v:.4e}")
    p = cal.apply(BudgetParams())
    print(f"# G (ED-AB, t_int={p.t_int:g} us) = {gain_budget(p):.4f}")


if __name__ == "__main__":
    main()
