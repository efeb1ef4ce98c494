"""Gradient ascent pulse engineering over piecewise-constant controls.

The objective is the closed-system subspace overlap

    Phi = |sum_k <t_k| U |in_k>|^2 / K^2

with exact gradients from the eigendecomposition of each segment Hamiltonian.
Optional penalties discourage population in the top Fock levels (truncation
guard) and rough waveforms. Optimisation runs in amplitudes normalised by the
per-channel bound, so clipping is a box constraint on [-1, 1].
"""
from __future__ import annotations

import cmath
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize as sopt

from . import dynamics as dyn
from .codes import BinomialCode, two_mode_code_frame
from .fockspace import F, G, HilbertDims, product_ket
from .model import (DEFAULT_AMP_MAX, DEFAULT_DT, MHZ, ControlPulse, ControlSystem,
                    SystemParams, control_system, default_collapse_set)

log = logging.getLogger(__name__)

LABELS = ("H", "T", "CZ", "Encode", "Decode", "ParityMap", "QECRecovery", "Custom")


@dataclass(frozen=True, eq=False)
class TargetIsometry:
    """Maps the columns of ``inputs`` onto the columns of ``outputs``."""

    inputs: np.ndarray  # (d, K)
    outputs: np.ndarray  # (d, K)
    label: str = "Custom"
    name: str = ""

    def __post_init__(self):
        inp = np.array(self.inputs, dtype=complex)
        out = np.array(self.outputs, dtype=complex)
        if inp.ndim == 1:
            inp, out = inp[:, None], out[:, None]
        if inp.shape != out.shape:
            raise ValueError(f"inputs {inp.shape} and outputs {out.shape} differ")
        for name, m in (("inputs", inp), ("outputs", out)):
            err = np.abs(m.conj().T @ m - np.eye(m.shape[1])).max()
            if err > 1e-12:
                raise ValueError(f"{name} not orthonormal (error {err:.2e})")
        if self.label not in LABELS:
            raise ValueError(f"unknown target label {self.label!r}")
        inp.setflags(write=False)
        out.setflags(write=False)
        object.__setattr__(self, "inputs", inp)
        object.__setattr__(self, "outputs", out)
        if not self.name:
            object.__setattr__(self, "name", self.label)

    @property
    def size(self) -> int:
        return self.inputs.shape[1]

    @property
    def dim(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_kets(cls, inputs: Sequence[np.ndarray], outputs: Sequence[np.ndarray],
                  label="Custom", name="") -> "TargetIsometry":
        return cls(np.column_stack(inputs), np.column_stack(outputs), label, name)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 2000
    learning_rate: float = 0.02  # initial step, as a fraction of amp_max
    amp_max: float | tuple[float, ...] = (DEFAULT_AMP_MAX, DEFAULT_AMP_MAX, 10 * MHZ, 10 * MHZ)
    smoothing: float = 1e-6
    threshold: float = 0.999
    seed: int = 0
    n_segments: int = 500
    dt: float = DEFAULT_DT
    method: str = "adaptive"  # or "lbfgs"
    init_scale: float = 0.01
    leakage_weight: float = 0.1
    guard_levels: int = 2
    enabled: tuple[str, ...] | None = None  # None = every channel
    min_step: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 0 or self.n_segments <= 0:
            raise ValueError("max_iterations must be >= 0 and n_segments > 0")
        if not (self.learning_rate > 0 and self.dt > 0 and self.init_scale >= 0):
            raise ValueError("learning_rate and dt must be positive")
        if np.any(np.asarray(self.amp_max) <= 0):
            raise ValueError("amp_max must be positive")
        if self.smoothing < 0 or self.leakage_weight < 0:
            raise ValueError("penalty weights must be non-negative")
        if not 0 <= self.threshold < 1:
            raise ValueError("threshold must lie in [0, 1)")
        if self.method not in ("adaptive", "lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")

    def bounds(self, channels: Sequence[str]) -> np.ndarray:
        a = np.asarray(self.amp_max, float)
        if a.ndim == 0:
            return np.full(len(channels), float(a))
        if len(a) == len(channels):
            return a.copy()
        # single-mode bounds extended to a second cavity
        if len(a) == 4 and len(channels) == 6:
            return np.concatenate([a, a[2:]])
        raise ValueError(f"{len(a)} amplitude bounds for {len(channels)} channels")

    def mask(self, channels: Sequence[str]) -> np.ndarray:
        if self.enabled is None:
            return np.ones(len(channels), bool)
        unknown = set(self.enabled) - set(channels)
        if unknown:
            raise ValueError(f"unknown channels {sorted(unknown)}")
        return np.array([c in self.enabled for c in channels])


@dataclass
class OptimizationResult:
    pulse: ControlPulse
    fidelity: float
    converged: bool
    log: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    target: str = ""


# ------------------------------------------------------------------- kernels


def _system(params, dims, target: TargetIsometry, ancilla_mode="gf") -> ControlSystem:
    if isinstance(params, ControlSystem):
        return params
    if dims is None:
        dims = _dims_for(target.dim)
    return control_system(params, dims, ancilla_mode)


def _dims_for(d: int) -> HilbertDims:
    if d % 3:
        raise ValueError(f"cannot infer dims from total dimension {d}")
    return HilbertDims(cavity_dim=d // 3)


def _leak_diag(dims: HilbertDims, guard: int) -> np.ndarray | None:
    if guard <= 0:
        return None
    masks = []
    for label, n in dims.factors:
        m = np.zeros(n)
        if label != "ancilla":
            m[n - guard:] = 1.0
        masks.append(m)
    # occupation of the top levels of any cavity mode
    total = np.zeros(dims.total)
    for i, (label, _) in enumerate(dims.factors):
        if label == "ancilla":
            continue
        parts = [masks[i] if j == i else np.ones(n) for j, (_, n) in enumerate(dims.factors)]
        v = parts[0]
        for p in parts[1:]:
            v = np.kron(v, p)
        total = np.maximum(total, v)
    return total


def _sweep(system: ControlSystem, amps: np.ndarray, dt: float, target: TargetIsometry,
           leak: np.ndarray | None = None, leak_weight: float = 0.0, want_grad=True):
    """Phi, leakage and d(Phi - w*leak)/d(amps) for amplitudes in rad/s."""
    us, evals, evecs = dyn.segment_propagators(system, amps, dt)
    n, d = us.shape[0], us.shape[1]
    k = target.size
    xs = np.empty((n + 1, d, k), complex)
    xs[0] = target.inputs
    for j in range(n):
        xs[j + 1] = us[j] @ xs[j]
    g = np.trace(target.outputs.conj().T @ xs[n])
    phi = abs(g) ** 2 / k ** 2
    use_leak = leak is not None and leak_weight > 0
    p_leak = 0.0
    if leak is not None:
        p_leak = float(np.einsum("i,nik->", leak, np.abs(xs[1:]) ** 2).real) / (n * k)
    if not want_grad:
        return phi, p_leak, None

    alpha = 2 * g / k ** 2
    beta = leak_weight * 2 / (n * k)
    cs = np.empty((n, d, k), complex)
    c = alpha * target.outputs
    if use_leak:
        c = c - beta * leak[:, None] * xs[n]
    cs[n - 1] = c
    for j in range(n - 1, 0, -1):
        c = us[j].conj().T @ c
        if use_leak:
            c = c - beta * leak[:, None] * xs[j]
        cs[j - 1] = c

    vh = evecs.conj().transpose(0, 2, 1)
    a = vh @ xs[:n]
    b = vh @ cs
    w = a @ b.conj().transpose(0, 2, 1)
    half = 0.5 * dt
    delta = (evals[:, :, None] - evals[:, None, :]) * half
    sigma = (evals[:, :, None] + evals[:, None, :]) * half
    gam = -1j * dt * np.exp(-1j * sigma) * np.sinc(delta / np.pi)
    q = gam * w.transpose(0, 2, 1)
    z = evecs.conj() @ q @ evecs.transpose(0, 2, 1)
    s = np.einsum("mab,nab->nm", system.ops, z).real
    jac = system.coefficient_jacobian(amps)
    grad = np.einsum("nm,nmc->nc", s, jac)
    return phi, p_leak, grad


def gate_fidelity(pulse: ControlPulse, target: TargetIsometry, params,
                  dims: HilbertDims | None = None, ancilla_mode="gf") -> float:
    system = _system(params, dims, target, ancilla_mode)
    dyn._check_channels(pulse, system)
    return float(_sweep(system, pulse.amplitudes, pulse.dt, target, want_grad=False)[0])


def gradient(pulse: ControlPulse, target: TargetIsometry, params,
             dims: HilbertDims | None = None, ancilla_mode="gf") -> np.ndarray:
    """dPhi/d(amplitude), shape (segments, channels), in 1/(rad/s)."""
    system = _system(params, dims, target, ancilla_mode)
    dyn._check_channels(pulse, system)
    return _sweep(system, pulse.amplitudes, pulse.dt, target)[2]


def _smooth_penalty(x: np.ndarray, weight: float):
    if weight == 0 or x.shape[0] < 2:
        return 0.0, np.zeros_like(x)
    diff = np.diff(x, axis=0)
    grad = np.zeros_like(x)
    grad[1:] += 2 * diff
    grad[:-1] -= 2 * diff
    return weight * float(np.sum(diff ** 2)), weight * grad


class _Objective:
    """J(x) = Phi - w_leak * leak - w_s * roughness, x normalised by amp_max."""

    def __init__(self, system, target, config: OptimizerConfig):
        self.system, self.target, self.config = system, target, config
        self.scale = config.bounds(system.channels)
        self.mask = config.mask(system.channels)
        self.leak = _leak_diag(system.dims, config.guard_levels)
        self.cache: dict = {}

    def __call__(self, x: np.ndarray):
        key = x.tobytes()
        if key in self.cache:
            return self.cache[key]
        amps = x * self.scale
        phi, leak, g = _sweep(self.system, amps, self.config.dt, self.target,
                              self.leak, self.config.leakage_weight)
        rough, g_s = _smooth_penalty(x, self.config.smoothing)
        j = phi - self.config.leakage_weight * leak - rough
        grad = g * self.scale - g_s
        grad[:, ~self.mask] = 0.0
        self.cache = {key: (j, grad, phi)}
        return j, grad, phi


def initial_amplitudes(config: OptimizerConfig, channels: Sequence[str]) -> np.ndarray:
    """Uniform random normalised amplitudes in +-init_scale, seeded."""
    rng = np.random.default_rng(config.seed)
    x = rng.uniform(-config.init_scale, config.init_scale, (config.n_segments, len(channels)))
    x[:, ~config.mask(channels)] = 0.0
    return x


def optimize(target: TargetIsometry, config: OptimizerConfig, params,
             dims: HilbertDims | None = None, ancilla_mode="gf",
             initial: ControlPulse | None = None) -> OptimizationResult:
    system = _system(params, dims, target, ancilla_mode)
    obj = _Objective(system, target, config)
    channels = system.channels
    if initial is not None:
        dyn._check_channels(initial, system)
        x0 = np.clip(initial.amplitudes / obj.scale, -1, 1)
        x0[:, ~obj.mask] = 0.0
    else:
        x0 = initial_amplitudes(config, channels)
    t0 = time.perf_counter()
    if config.method == "adaptive":
        x, phi, converged, hist = _ascent(obj, x0, config)
    else:
        x, phi, converged, hist = _lbfgs(obj, x0, config)
    pulse = ControlPulse(config.dt, x * obj.scale, channels, system.params.digest())
    dt = time.perf_counter() - t0
    log.info("%s: Phi=%.6f after %d iterations (%.1fs)", target.name, phi, len(hist) - 1, dt)
    return OptimizationResult(pulse, float(phi), bool(converged), hist, dt, target.name)


def _entry(it, phi, j, best, step):
    return {"iteration": it, "fidelity": float(phi), "objective": float(j),
            "best_fidelity": float(best), "step": float(step)}


def _ascent(obj: _Objective, x: np.ndarray, cfg: OptimizerConfig):
    j, g, phi = obj(x)
    step = cfg.learning_rate
    best = phi
    hist = [_entry(0, phi, j, best, step)]
    it = 0
    while phi < cfg.threshold and it < cfg.max_iterations and step >= cfg.min_step:
        it += 1
        gmax = np.abs(g).max()
        if gmax == 0:
            break
        trial = np.clip(x + step * g / gmax, -1.0, 1.0)
        j_t, g_t, phi_t = obj(trial)
        if j_t > j:
            x, j, g, phi = trial, j_t, g_t, phi_t
            step = min(2 * step, 1.0)
        else:
            step *= 0.5
        best = max(best, phi)
        hist.append(_entry(it, phi, j, best, step))
    return x, phi, phi >= cfg.threshold, hist


class _Converged(Exception):
    pass


def _lbfgs(obj: _Objective, x0: np.ndarray, cfg: OptimizerConfig):
    shape = x0.shape
    j0, _, phi0 = obj(x0)
    hist = [_entry(0, phi0, j0, phi0, 0.0)]
    if phi0 >= cfg.threshold or cfg.max_iterations == 0:
        return x0, phi0, phi0 >= cfg.threshold, hist
    state = {"x": x0, "phi": phi0, "j": j0, "best": phi0}

    def fun(v):
        j, g, _ = obj(v.reshape(shape))
        return -j, -g.ravel()

    def callback(intermediate_result):
        x = intermediate_result.x.reshape(shape)
        j, _, phi = obj(x)
        if j >= state["j"]:
            state.update(x=x.copy(), phi=phi, j=j)
        state["best"] = max(state["best"], phi)
        hist.append(_entry(len(hist), phi, j, state["best"], 0.0))
        if phi >= cfg.threshold:
            raise StopIteration

    bounds = [(-1.0, 1.0) if m else (0.0, 0.0) for m in np.broadcast_to(obj.mask, shape).ravel()]
    res = sopt.minimize(fun, x0.ravel(), jac=True, method="L-BFGS-B", bounds=bounds,
                        callback=callback,
                        options={"maxiter": cfg.max_iterations, "maxcor": 20,
                                 "ftol": 1e-15, "gtol": 1e-12})
    x = res.x.reshape(shape)
    j, _, phi = obj(x)
    if j >= state["j"]:
        state.update(x=x, phi=phi, j=j)
    return state["x"], state["phi"], state["phi"] >= cfg.threshold, hist


# ------------------------------------------------------- open-system evaluation


@dataclass(frozen=True)
class OpenRow:
    """Process fidelity without and with post-selection, and success probability."""

    name: str
    f_without: float | None
    f_with: float
    p_success: float

    def as_percent(self) -> tuple:
        wo = None if self.f_without is None else 100 * self.f_without
        return (self.name, wo, 100 * self.f_with, self.p_success)


def evaluate_open(pulse: ControlPulse, target: TargetIsometry, params: SystemParams,
                  postselect: dyn.PostSelection = dyn.DISCARD_E,
                  dims: HilbertDims | None = None, collapse=None,
                  columns: Sequence[int] | None = None, name: str | None = None,
                  ancilla_mode="gf", with_unselected=True) -> OpenRow:
    """Lossy channel from the pulse, compared with the ideal map of ``target``.

    ``columns`` restricts the comparison to a subset of the target's input
    vectors (for instance the code or the error block of a parity map). The
    reference is the identity between the input frame and the target frame,
    so an exact target implementation scores 1.
    """
    dims = dims or _dims_for(target.dim)
    collapse = collapse or default_collapse_set(params, dims)
    cols = list(range(target.size)) if columns is None else list(columns)
    frame_in = dyn.LogicalFrame(target.inputs[:, cols])
    frame_out = dyn.LogicalFrame(target.outputs[:, cols])
    k = len(cols)
    ideal = np.eye(k * k)
    sys_ = control_system(params, dims, ancilla_mode)

    def run(ps):
        ch = dyn.channel_from_pulse(pulse, sys_, collapse, frame_in, ps, dims)
        p = dyn.success_probability(ch)
        ptm = dyn.ptm_of(ch, frame_out, renormalize=ps.active)
        return dyn.process_fidelity(ptm, ideal), p

    f_ps, p_succ = run(postselect)
    f_wo = run(dyn.NO_POSTSELECTION)[0] if with_unselected else None
    return OpenRow(name or target.name, f_wo, f_ps, p_succ)


# ------------------------------------------------------------------- targets


def code_frame(dims: HilbertDims, code: BinomialCode | None = None) -> dyn.LogicalFrame:
    return (code or BinomialCode()).frame(dims)


def logical_gate_target(u: np.ndarray, dims: HilbertDims, label="Custom", name="",
                        code: BinomialCode | None = None) -> TargetIsometry:
    """Apply a logical unitary ``u`` to the code words (ancilla in g)."""
    vecs = code_frame(dims, code).vectors
    return TargetIsometry(vecs, vecs @ np.asarray(u, complex), label, name)


HADAMARD = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
T_GATE = np.diag([1, cmath.exp(1j * math.pi / 4)])
CZ_GATE = np.diag([1, 1, 1, -1]).astype(complex)


def hadamard_target(dims: HilbertDims) -> TargetIsometry:
    return logical_gate_target(HADAMARD, dims, "H")


def t_target(dims: HilbertDims) -> TargetIsometry:
    return logical_gate_target(T_GATE, dims, "T")


def encode_target(dims: HilbertDims, code: BinomialCode | None = None) -> TargetIsometry:
    """Ancilla qubit (g, f) with the cavity in vacuum onto the code words."""
    vac = np.array([1.0])
    inputs = [product_ket(dims, vac, G), product_ket(dims, vac, F)]
    return TargetIsometry(np.column_stack(inputs), code_frame(dims, code).vectors,
                          "Encode")


def decode_target(dims: HilbertDims, code: BinomialCode | None = None) -> TargetIsometry:
    enc = encode_target(dims, code)
    return TargetIsometry(enc.outputs, enc.inputs, "Decode")


def parity_target(dims: HilbertDims, levels: int = 5, ancilla_mode="gf") -> TargetIsometry:
    """|n,g> -> |n,g> for even n and |n,x> for odd n (x = f, or e for a ge ancilla)."""
    flag = F if ancilla_mode == "gf" else 1
    eye = np.eye(levels)
    inputs = [product_ket(dims, eye[n], G) for n in range(levels)]
    outputs = [product_ket(dims, eye[n], G if n % 2 == 0 else flag) for n in range(levels)]
    return TargetIsometry.from_kets(inputs, outputs, "ParityMap")




def parity_rows_targets(dims: HilbertDims, ancilla_mode="gf", code=None):
    """Code and error sub-targets of the parity map for open evaluation."""
    code = code or BinomialCode()
    flag = F if ancilla_mode == "gf" else 1
    cw = [product_ket(dims, w, G) for w in code.code_words()]
    ew = code.error_words()
    code_t = TargetIsometry.from_kets(cw, cw, "ParityMap", "Parity (code)")
    err_t = TargetIsometry.from_kets([product_ket(dims, w, G) for w in ew],
                                     [product_ket(dims, w, flag) for w in ew],
                                     "ParityMap", "Parity (error)")
    return code_t, err_t


def recovery_code_target(dims: HilbertDims, kappa_tau: float,
                         code: BinomialCode | None = None) -> TargetIsometry:
    """Undo the no-jump distortion exp(-kappa tau n/2) of the code words."""
    code = code or BinomialCode()
    words = code.no_jump_words(dims.cavity_dim, kappa_tau)
    inputs = [product_ket(dims, words[:, k], G) for k in range(2)]
    return TargetIsometry.from_kets(inputs, list(code.frame(dims).vectors.T),
                                    "QECRecovery", "QEC (code)")


def recovery_error_target(dims: HilbertDims, code: BinomialCode | None = None) -> TargetIsometry:
    """Error words (after the ancilla is reset to g) back onto the code words."""
    code = code or BinomialCode()
    return TargetIsometry(code.frame(dims, "error").vectors, code.frame(dims).vectors,
                          "QECRecovery", "QEC (error)")


def cz_target(dims: HilbertDims, code: BinomialCode | None = None) -> TargetIsometry:
    if not dims.two_mode:
        raise ValueError("CZ needs two-mode dims")
    vecs = two_mode_code_frame(dims, code).vectors
    return TargetIsometry(vecs, vecs @ CZ_GATE, "CZ")


def ancilla_flip_target(dims: HilbertDims) -> TargetIsometry:
    """g <-> f pi rotation with the cavity in vacuum."""
    vac = np.array([1.0])
    g, f = product_ket(dims, vac, G), product_ket(dims, vac, F)
    return TargetIsometry.from_kets([g, f], [f, g], "Custom", "ancilla pi")


ANCILLA_CHANNELS = ("omega_x", "omega_y")


def with_config(config: OptimizerConfig, **kw) -> OptimizerConfig:
    return replace(config, **kw)
