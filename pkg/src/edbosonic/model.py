"""Physical parameters, control pulses and the composite-system Hamiltonian.

All quantities are SI: seconds, angular frequencies in rad/s and decay rates
in 1/s. The ancilla control term is the effective two-photon-drive model

    H_A = sqrt(2) (Oy^2 - Ox^2) / (2 Ec) * sx_gf  -  sqrt(2) Ox Oy / Ec * sy_gf

and the full Hamiltonian adds the dispersive drift and a linear cavity drive.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fockspace as fs
from .fockspace import ANCILLA, CAVITY, CAVITY2, E, F, G, HilbertDims

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6  # angular frequency of 1 MHz, rad/s
US = 1e-6

SINGLE_MODE_CHANNELS = ("omega_x", "omega_y", "omega_rx", "omega_ry")
TWO_MODE_CHANNELS = SINGLE_MODE_CHANNELS + ("omega_rx2", "omega_ry2")

DEFAULT_DT = 4e-9
DEFAULT_AMP_MAX = 40 * MHZ


@dataclass(frozen=True)
class SystemParams:
    chi_e: float = 1 * MHZ
    chi_f: float | None = None
    E_c: float = 400 * MHZ
    kappa: float = 1 / 2e-3
    kappa_e: float = 1 / 40e-6
    kappa_f: float = 1 / 20e-6
    chi_e2: float | None = None
    chi_f2: float | None = None
    kappa2: float | None = None
    dephasing: float = 0.0

    def __post_init__(self):
        if self.chi_f is None:
            object.__setattr__(self, "chi_f", 2 * self.chi_e)
        if self.chi_e2 is not None and self.chi_f2 is None:
            object.__setattr__(self, "chi_f2", 2 * self.chi_e2)
        if self.E_c <= 0:
            raise ValueError("E_c must be positive")
        for name in ("kappa", "kappa_e", "kappa_f", "kappa2", "dephasing"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    def replace(self, **kw) -> "SystemParams":
        d = asdict(self)
        d.update(kw)
        return SystemParams(**d)

    def lossless(self) -> "SystemParams":
        return self.replace(kappa=0.0, kappa_e=0.0, kappa_f=0.0,
                            kappa2=None if self.kappa2 is None else 0.0, dephasing=0.0)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def device_params() -> SystemParams:
    """Device parameters used for the gate-set and QEC simulations."""
    return SystemParams()


@dataclass(frozen=True, eq=False)
class ControlPulse:
    dt: float
    amplitudes: np.ndarray
    channels: tuple[str, ...] = SINGLE_MODE_CHANNELS
    params_hash: str = ""

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=float)
        if amps.ndim == 1:
            amps = amps[:, None]
        if amps.ndim != 2:
            raise ValueError("amplitudes must be a (segments, channels) array")
        if not self.channels:
            raise ValueError("pulse needs at least one channel")
        if amps.shape[1] != len(self.channels):
            raise ValueError(f"{amps.shape[1]} amplitude columns for {len(self.channels)} channels")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_segments(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def duration(self) -> float:
        return self.dt * self.n_segments

    def channel(self, name: str) -> np.ndarray:
        return self.amplitudes[:, self.channels.index(name)]

    def within(self, amp_max) -> bool:
        return bool(np.all(np.abs(self.amplitudes) <= np.asarray(amp_max) * (1 + 1e-12)))

    def then(self, other: "ControlPulse") -> "ControlPulse":
        if other.channels != self.channels or not math.isclose(other.dt, self.dt, rel_tol=1e-12):
            raise ValueError("can only concatenate pulses with equal dt and channels")
        return ControlPulse(self.dt, np.vstack([self.amplitudes, other.amplitudes]),
                            self.channels, self.params_hash)

    @classmethod
    def zeros(cls, n_segments: int, dt: float = DEFAULT_DT,
              channels: Sequence[str] = SINGLE_MODE_CHANNELS) -> "ControlPulse":
        return cls(dt, np.zeros((n_segments, len(channels))), tuple(channels))


@dataclass(frozen=True, eq=False)
class CollapseSet:
    """Lindblad operators with their rates; the dissipator uses sqrt(rate) * L."""

    ops: tuple[np.ndarray, ...] = ()
    rates: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.ops) != len(self.rates):
            raise ValueError("ops and rates differ in length")
        if any(r < 0 for r in self.rates):
            raise ValueError("collapse rates must be non-negative")

    def __len__(self):
        return len(self.ops)

    def scaled(self) -> list[np.ndarray]:
        return [math.sqrt(r) * np.asarray(op) for op, r in zip(self.ops, self.rates) if r > 0]


# ---------------------------------------------------------------- Hamiltonians


def ancilla_drive_hamiltonian(params: SystemParams, omega_x: float, omega_y: float) -> fs.Operator:
    sx, sy = fs.sigma_gf()
    cx = math.sqrt(2) * (omega_y ** 2 - omega_x ** 2) / (2 * params.E_c)
    cy = -math.sqrt(2) * omega_x * omega_y / params.E_c
    return sx * cx + sy * cy


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """Drift plus control operators on the full space.

    H(theta) = drift + sum_m coeff_m(theta) * ops[m]; the coefficients are
    linear in the cavity drives and quadratic in the two-photon ancilla drive.
    """

    dims: HilbertDims
    params: SystemParams
    drift: np.ndarray
    ops: np.ndarray  # (m, d, d)
    channels: tuple[str, ...]
    ancilla_mode: str = "gf"

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def coefficients(self, amps: np.ndarray) -> np.ndarray:
        amps = np.atleast_2d(amps)
        if amps.shape[-1] != len(self.channels):
            raise ValueError(f"expected {len(self.channels)} channels, got {amps.shape[-1]}")
        ox, oy = amps[:, 0], amps[:, 1]
        if self.ancilla_mode == "gf":
            ec = self.params.E_c
            cx = math.sqrt(2) * (oy ** 2 - ox ** 2) / (2 * ec)
            cy = -math.sqrt(2) * ox * oy / ec
            return np.column_stack([cx, cy, amps[:, 2:]])
        return amps.copy()

    def coefficient_jacobian(self, amps: np.ndarray) -> np.ndarray:
        """d coeff_m / d amp_c for every segment, shape (n, m, c)."""
        amps = np.atleast_2d(amps)
        n, c = amps.shape
        jac = np.zeros((n, c, c))
        idx = np.arange(c)
        jac[:, idx, idx] = 1.0
        if self.ancilla_mode == "gf":
            ox, oy = amps[:, 0], amps[:, 1]
            ec = self.params.E_c
            r2 = math.sqrt(2)
            jac[:, 0, 0] = -r2 * ox / ec
            jac[:, 0, 1] = r2 * oy / ec
            jac[:, 1, 0] = -r2 * oy / ec
            jac[:, 1, 1] = -r2 * ox / ec
        return jac

    def hamiltonians(self, amps: np.ndarray) -> np.ndarray:
        coeff = self.coefficients(amps)
        return self.drift[None] + np.einsum("nm,mab->nab", coeff, self.ops)

    def hamiltonian(self, segment_amplitudes) -> np.ndarray:
        return self.hamiltonians(np.asarray(segment_amplitudes, float)[None])[0]


def _cavity_drive_ops(dims: HilbertDims, label: str) -> tuple[np.ndarray, np.ndarray]:
    n = dims.cavity2_dim if label == CAVITY2 else dims.cavity_dim
    a = fs.annihilation(n, label)
    rx = (a + a.dag()) * 0.5
    ry = (a.dag() * 1j - a * 1j) * 0.5
    return fs.embed(rx, dims).mat, fs.embed(ry, dims).mat


def drift_hamiltonian(params: SystemParams, dims: HilbertDims) -> np.ndarray:
    pe, pf = fs.ancilla_projectors()[E], fs.ancilla_projectors()[F]
    h = -params.chi_e * fs.tensor(fs.number(dims.cavity_dim), pe) \
        - params.chi_f * fs.tensor(fs.number(dims.cavity_dim), pf)
    h = fs.embed(h, dims) if dims.two_mode else h
    mat = h.mat
    if dims.two_mode:
        chi_e2 = params.chi_e if params.chi_e2 is None else params.chi_e2
        chi_f2 = params.chi_f if params.chi_f2 is None else params.chi_f2
        n2 = fs.number(dims.cavity2_dim, CAVITY2)
        mat = mat - chi_e2 * fs.embed(fs.tensor(n2, pe), dims).mat \
                  - chi_f2 * fs.embed(fs.tensor(n2, pf), dims).mat
    return mat


def control_system(params: SystemParams, dims: HilbertDims | None = None,
                   ancilla_mode: str = "gf") -> ControlSystem:
    """Build drift and control operators.

    ``ancilla_mode="gf"`` drives g<->f through the effective two-photon term;
    ``"ge"`` is a conventional g-e qubit with a direct drive
    (Ox sx_ge + Oy sy_ge)/2, used for the parity-only baseline.
    """
    dims = dims or HilbertDims()
    if ancilla_mode not in ("gf", "ge"):
        raise ValueError(f"unknown ancilla_mode {ancilla_mode!r}")
    if ancilla_mode == "gf":
        sx, sy = fs.sigma_gf()
    else:
        sx, sy = fs.sigma_ge()
        sx, sy = sx * 0.5, sy * 0.5
    ops = [fs.embed(sx, dims).mat, fs.embed(sy, dims).mat, *_cavity_drive_ops(dims, CAVITY)]
    channels = SINGLE_MODE_CHANNELS
    if dims.two_mode:
        ops.extend(_cavity_drive_ops(dims, CAVITY2))
        channels = TWO_MODE_CHANNELS
    return ControlSystem(dims, params, drift_hamiltonian(params, dims), np.array(ops),
                         channels, ancilla_mode)


def composite_hamiltonian(params: SystemParams, segment_amplitudes,
                          dims: HilbertDims | None = None) -> fs.Operator:
    dims = dims or HilbertDims()
    sys_ = control_system(params, dims)
    amps = np.asarray(segment_amplitudes, float)
    if amps.shape != (len(sys_.channels),):
        raise ValueError(f"expected {len(sys_.channels)} channel amplitudes, got shape {amps.shape}")
    return fs.Operator(sys_.hamiltonian(amps), dims.factors)


def default_collapse_set(params: SystemParams, dims: HilbertDims | None = None) -> CollapseSet:
    """Cavity loss plus the ancilla cascade f -> e -> g (no direct f -> g)."""
    dims = dims or HilbertDims()
    ops = [fs.embed(fs.annihilation(dims.cavity_dim), dims).mat,
           fs.embed(fs.ancilla_transition(G, E), dims).mat,
           fs.embed(fs.ancilla_transition(E, F), dims).mat]
    rates = [params.kappa, params.kappa_e, params.kappa_f]
    if dims.two_mode:
        ops.append(fs.embed(fs.annihilation(dims.cavity2_dim, CAVITY2), dims).mat)
        rates.append(params.kappa if params.kappa2 is None else params.kappa2)
    if params.dephasing > 0:
        ops.append(fs.embed(fs.Operator(np.diag([0.0, 1.0, 2.0]), ((ANCILLA, 3),)), dims).mat)
        rates.append(params.dephasing)
    return CollapseSet(tuple(ops), tuple(rates))


# ------------------------------------------------------------------ pulse file


class PulseFormatError(ValueError):
    pass


_MAGIC = "# edbosonic-pulse v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_pulse(pulse: ControlPulse) -> str:
    buf = io.StringIO()
    buf.write(_MAGIC + "\n")
    buf.write(f"# dt_s = {_fmt(pulse.dt)}\n")
    buf.write(f"# channels = {','.join(pulse.channels)}\n")
    buf.write(f"# segments = {pulse.n_segments}\n")
    buf.write(f"# params_hash = {pulse.params_hash}\n")
    buf.write("# units = rad/s\n")
    for row in pulse.amplitudes:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def loads_pulse(text: str) -> ControlPulse:
    lines = text.splitlines()
    if not lines or lines[0].strip() != _MAGIC:
        raise PulseFormatError("line 1: missing pulse file header")
    header = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, sep, value = lines[i][1:].partition("=")
        if not sep:
            raise PulseFormatError(f"line {i + 1}: malformed header entry {lines[i]!r}")
        header[key.strip()] = value.strip()
        i += 1
    for key in ("dt_s", "channels", "segments"):
        if key not in header:
            raise PulseFormatError(f"header: missing field {key!r}")
    try:
        dt = float(header["dt_s"])
        n_seg = int(header["segments"])
    except ValueError as exc:
        raise PulseFormatError(f"header: {exc}") from None
    channels = tuple(c for c in header["channels"].split(",") if c)
    if not channels:
        raise PulseFormatError("header field 'channels': empty channel list")
    rows = []
    for j, line in enumerate(lines[i:], start=i + 1):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(channels):
            raise PulseFormatError(f"line {j}: expected {len(channels)} fields, got {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise PulseFormatError(f"line {j}: non-numeric amplitude in {line!r}") from None
    if len(rows) != n_seg:
        raise PulseFormatError(f"expected {n_seg} segment rows, found {len(rows)} (truncated file?)")
    amps = np.array(rows, float).reshape(n_seg, len(channels))
    try:
        return ControlPulse(dt, amps, channels, header.get("params_hash", ""))
    except ValueError as exc:
        raise PulseFormatError(str(exc)) from None


def write_pulse(pulse: ControlPulse, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_pulse(pulse), encoding="utf-8")
    return path


def read_pulse(path: str | Path) -> ControlPulse:
    return loads_pulse(Path(path).read_text(encoding="utf-8"))
