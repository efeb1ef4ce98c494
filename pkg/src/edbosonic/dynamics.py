"""Unitary and Lindblad time evolution, post-selection and channel metrics.

Post-selected evolution is deterministic: branches are projected and their
traces carried along as success probabilities. A :class:`ChannelMap` stores
the image of every operator basis element |i><j| of an input frame, which is
enough to build Choi matrices, Pauli transfer matrices and fidelities.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import sparse

from . import fockspace as fs
from .fockspace import E, F, G, HilbertDims
from .model import CollapseSet, ControlPulse, ControlSystem, SystemParams, control_system


class IntegrationError(RuntimeError):
    pass


class DegenerateChannelError(ValueError):
    pass


def as_system(params_or_system, dims: HilbertDims | None = None,
              ancilla_mode: str = "gf") -> ControlSystem:
    if isinstance(params_or_system, ControlSystem):
        return params_or_system
    return control_system(params_or_system, dims, ancilla_mode)


def _check_channels(pulse: ControlPulse, system: ControlSystem):
    if pulse.channels != system.channels:
        raise ValueError(f"pulse channels {pulse.channels} do not match system {system.channels}")


# -------------------------------------------------------------------- unitary


def segment_propagators(system: ControlSystem, amps: np.ndarray, dt: float):
    """Eigen-decomposed segment propagators exp(-i H_k dt).

    Returns (U, evals, evecs) with U of shape (n, d, d).
    """
    hs = system.hamiltonians(amps)
    evals, evecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * evals * dt)
    us = (evecs * phases[:, None, :]) @ evecs.conj().transpose(0, 2, 1)
    return us, evals, evecs


def propagate_unitary(pulse: ControlPulse, params, dims: HilbertDims | None = None) -> np.ndarray:
    system = as_system(params, dims)
    _check_channels(pulse, system)
    u = np.eye(system.dim, dtype=complex)
    if pulse.n_segments == 0:
        return u
    us, _, _ = segment_propagators(system, pulse.amplitudes, pulse.dt)
    for uk in us:
        u = uk @ u
    return u


# -------------------------------------------------------------------- Lindblad


class _Dissipator:
    """Hamiltonian-independent pieces of the generator for one collapse set."""

    def __init__(self, collapse: CollapseSet, d: int):
        scaled = collapse.scaled()
        self.ops = scaled
        self.k = np.zeros((d, d), complex)
        for op in scaled:
            self.k += op.conj().T @ op
        # row-major vec: vec(J rho J^dag) = (J kron J*) vec(rho)
        self.jumps = None
        if scaled:
            self.jumps = sparse.csr_matrix(sum(sparse.kron(sparse.csr_matrix(op),
                                                           sparse.csr_matrix(op.conj()))
                                               for op in scaled))
        self.norm = float(sum(np.linalg.norm(op, 2) ** 2 for op in scaled))


_DISSIPATORS: dict = {}


def _dissipator(collapse: CollapseSet, d: int) -> _Dissipator:
    key = (id(collapse), d)
    hit = _DISSIPATORS.get(key)
    if hit is None or hit[0] is not collapse:
        if len(_DISSIPATORS) > 32:
            _DISSIPATORS.clear()
        hit = (collapse, _Dissipator(collapse, d))
        _DISSIPATORS[key] = hit
    return hit[1]


class Liouvillian:
    """Generator -i[H, .] + sum_j D[L_j] for a fixed Hamiltonian.

    Calling it assumes a batch of Hermitian operators (b, d, d); the
    coherent part then needs a single matrix product per element.
    """

    def __init__(self, hamiltonian: np.ndarray, collapse: CollapseSet,
                 spread: float | None = None):
        d = hamiltonian.shape[0]
        diss = _dissipator(collapse, d)
        self.d = d
        self.jump_ops = diss.ops
        self.jumps = diss.jumps
        self.h_eff = hamiltonian - 0.5j * diss.k
        self.h_eff_dag = np.ascontiguousarray(self.h_eff.conj().T)
        if spread is None:
            w = np.linalg.eigvalsh(hamiltonian)
            spread = w[-1] - w[0]
        self.norm = float(spread + 2 * diss.norm)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        b, d = rho.shape[0], self.d
        y = (rho.reshape(b * d, d) @ self.h_eff_dag).reshape(b, d, d)  # rho H_eff^dag
        out = 1j * (y - y.conj().transpose(0, 2, 1))
        if self.jumps is not None:
            flat = out.reshape(b, d * d)
            flat += (self.jumps @ rho.reshape(b, d * d).T).T
        return out

    def superoperator(self) -> np.ndarray:
        """Column-stacking matrix of the generator."""
        d = self.d
        eye = np.eye(d)
        mat = -1j * (np.kron(eye, self.h_eff) - np.kron(self.h_eff_dag.T, eye))
        for op in self.jump_ops:
            mat += np.kron(op.conj(), op)
        return mat


def taylor_step(gen: Liouvillian, rho: np.ndarray, dt: float, substeps: int = 1,
                tol: float = 1e-15, max_order: int = 60, step_norm: float = 2.0) -> np.ndarray:
    """exp(L dt) rho for Hermitian rho by truncated Taylor series on substeps."""
    n_sub = max(substeps, int(math.ceil(gen.norm * dt / step_norm)))
    h = dt / n_sub
    for _ in range(n_sub):
        term = rho
        acc = rho.copy()
        scale = np.abs(acc).max()
        for k in range(1, max_order + 1):
            term = gen(term) * (h / k)
            acc += term
            if np.abs(term).max() <= tol * scale:
                break
        else:
            raise IntegrationError(
                f"Taylor series not converged: last term {np.abs(term).max():.3e} at order {max_order}")
        rho = acc
    return rho


def _hermitian_split(rho: np.ndarray):
    """Return Hermitian batch and a recombination function."""
    herm = np.allclose(rho, rho.conj().transpose(0, 2, 1), atol=1e-15, rtol=0)
    if herm:
        return rho, lambda out: out
    a = (rho + rho.conj().transpose(0, 2, 1)) / 2
    bh = (rho - rho.conj().transpose(0, 2, 1)) / 2j
    n = rho.shape[0]
    return np.concatenate([a, bh]), lambda out: out[:n] + 1j * out[n:]


_SUPEROP_CACHE: dict = {}


def _dense_exp(gen: Liouvillian, dt: float, key) -> np.ndarray:
    hit = _SUPEROP_CACHE.get(key)
    if hit is None:
        if len(_SUPEROP_CACHE) > 8:
            _SUPEROP_CACHE.clear()
        hit = sla.expm(gen.superoperator() * dt)
        _SUPEROP_CACHE[key] = hit
    return hit


def _apply_superop(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    b, d, _ = rho.shape
    vec = rho.transpose(0, 2, 1).reshape(b, d * d)  # column stacking
    out = vec @ s.T
    return out.reshape(b, d, d).transpose(0, 2, 1)


_DENSE_SUBSTEPS = 64


def _evolve_segment(rho: np.ndarray, h: np.ndarray, collapse: CollapseSet, dt: float,
                    substeps: int, spread: float | None = None) -> np.ndarray:
    gen = Liouvillian(h, collapse, spread)
    if gen.norm * dt / 2.0 > _DENSE_SUBSTEPS:
        key = (h.tobytes(), tuple(op.tobytes() for op in collapse.ops), collapse.rates, dt)
        return _apply_superop(_dense_exp(gen, dt, key), rho)
    return taylor_step(gen, rho, dt, substeps)


def evolve_constant(rho: np.ndarray, hamiltonian: np.ndarray, collapse: CollapseSet,
                    duration: float, substeps: int = 1) -> np.ndarray:
    """Evolve under a time-independent Lindbladian.

    Long or stiff intervals switch to a cached dense superoperator exponential.
    """
    rho = np.asarray(rho, complex)
    single = rho.ndim == 2
    batch, recombine = _hermitian_split(rho[None] if single else rho)
    if duration > 0:
        batch = _evolve_segment(batch, hamiltonian, collapse, duration, substeps)
    out = recombine(batch)
    return out[0] if single else out


def propagate_lindblad(state: np.ndarray, pulse: ControlPulse, params, collapse: CollapseSet,
                       dims: HilbertDims | None = None, substeps: int = 1) -> np.ndarray:
    """Solve the master equation over a piecewise-constant pulse.

    ``state`` is a density matrix (d, d) or a batch (b, d, d) of operators;
    the map is linear so any operator basis element may be propagated.
    ``substeps`` forces a minimum number of Taylor substeps per segment.
    """
    system = as_system(params, dims)
    _check_channels(pulse, system)
    rho = np.asarray(state, complex)
    single = rho.ndim == 2
    rho = rho[None] if single else rho
    if rho.shape[-1] != system.dim:
        raise ValueError(f"state dimension {rho.shape[-1]} != system dimension {system.dim}")
    batch, recombine = _hermitian_split(rho)
    batch = batch.copy()
    if pulse.n_segments:
        hs = system.hamiltonians(pulse.amplitudes)
        w = np.linalg.eigvalsh(hs)
        spreads = w[:, -1] - w[:, 0]
        for h, spread in zip(hs, spreads):
            batch = _evolve_segment(batch, h, collapse, pulse.dt, substeps, spread)
    out = recombine(batch)
    return out[0] if single else out


def idle(state: np.ndarray, duration: float, params, collapse: CollapseSet,
         dims: HilbertDims | None = None) -> np.ndarray:
    system = as_system(params, dims)
    return evolve_constant(state, system.drift, collapse, duration)


# --------------------------------------------------------------- measurements


_LEVELS = {"g": G, "e": E, "f": F}


def ancilla_projector(dims: HilbertDims, keep: Iterable[str]) -> np.ndarray:
    p = np.zeros((3, 3))
    for lvl in keep:
        p[_LEVELS[lvl], _LEVELS[lvl]] = 1.0
    return fs.embed(fs.Operator(p, ((fs.ANCILLA, 3),)), dims).mat


def parity_projector(dims: HilbertDims, expected: str) -> np.ndarray:
    if expected not in ("even", "odd"):
        raise ValueError("expected must be 'even' or 'odd'")
    par = np.diag((-1.0) ** np.arange(dims.cavity_dim))
    p = (np.eye(dims.cavity_dim) + (1 if expected == "even" else -1) * par) / 2
    return fs.embed(fs.Operator(p, ((fs.CAVITY, dims.cavity_dim),)), dims).mat


def _diag_project(state: np.ndarray, diag: np.ndarray) -> np.ndarray:
    return state * diag[:, None] * diag[None, :]


def _trace(state: np.ndarray):
    t = np.trace(state, axis1=-2, axis2=-1).real
    return float(t) if np.ndim(t) == 0 else t


def postselect_ancilla(state: np.ndarray, dims: HilbertDims, discard: Sequence[str] = ("e",)):
    """Project out the discarded ancilla levels; returns (state, success_prob)."""
    keep = [l for l in "gef" if l not in set(discard)]
    out = _diag_project(np.asarray(state, complex), np.diag(ancilla_projector(dims, keep)).real)
    return out, _trace(out)


def postselect_parity(state: np.ndarray, dims: HilbertDims, expected: str = "even"):
    out = _diag_project(np.asarray(state, complex), np.diag(parity_projector(dims, expected)).real)
    return out, _trace(out)


@dataclass(frozen=True)
class PostSelection:
    """Which branches are discarded after an operation."""

    discard_ancilla: tuple[str, ...] = ()
    parity: str | None = None

    @property
    def active(self) -> bool:
        return bool(self.discard_ancilla) or self.parity is not None

    def apply(self, state: np.ndarray, dims: HilbertDims) -> np.ndarray:
        if self.discard_ancilla:
            state, _ = postselect_ancilla(state, dims, self.discard_ancilla)
        if self.parity is not None:
            state, _ = postselect_parity(state, dims, self.parity)
        return state


NO_POSTSELECTION = PostSelection()
DISCARD_E = PostSelection(("e",))


# ------------------------------------------------------------------- channels


@dataclass(frozen=True, eq=False)
class LogicalFrame:
    """Orthonormal columns spanning a logical subspace of the full space."""

    vectors: np.ndarray  # (d, k)

    def __post_init__(self):
        v = np.array(self.vectors, complex)
        if v.ndim != 2:
            raise ValueError("frame vectors must be a (d, k) array")
        gram = v.conj().T @ v
        if np.max(np.abs(gram - np.eye(v.shape[1]))) > 1e-12:
            raise ValueError("frame vectors are not orthonormal")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @classmethod
    def from_kets(cls, kets: Sequence[np.ndarray]) -> "LogicalFrame":
        return cls(np.column_stack(kets))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def full_dim(self) -> int:
        return self.vectors.shape[0]

    def lift(self, logical: np.ndarray) -> np.ndarray:
        return self.vectors @ logical @ self.vectors.conj().T

    def restrict(self, op: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ op @ self.vectors

    def basis_operators(self) -> np.ndarray:
        """|i><j| lifted to the full space, shape (k, k, d, d)."""
        v = self.vectors
        return np.einsum("ai,bj->ijab", v, v.conj())

    def paulis(self) -> np.ndarray:
        """Logical Pauli operators lifted to the full space."""
        return np.array([self.lift(p) for p in pauli_basis(self.dim)])


@dataclass(frozen=True, eq=False)
class ChannelMap:
    """Linear map from operators on ``frame`` to operators on the output space."""

    frame: LogicalFrame
    outputs: np.ndarray  # (k, k, d_out, d_out): image of |i><j|
    trace_preserving: bool = True

    @property
    def k(self) -> int:
        return self.frame.dim

    @property
    def out_dim(self) -> int:
        return self.outputs.shape[-1]

    def apply(self, logical: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ijab->ab", logical, self.outputs)

    def superoperator(self) -> np.ndarray:
        """(d_out^2, k^2) matrix in the column-stacking convention."""
        k, d = self.k, self.out_dim
        cols = [self.outputs[i, j].T.reshape(d * d) for j in range(k) for i in range(k)]
        return np.column_stack(cols)

    def choi(self) -> np.ndarray:
        k, d = self.k, self.out_dim
        return self.outputs.transpose(0, 2, 1, 3).reshape(k * d, k * d)

    def choi_min_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh((c + c.conj().T) / 2).min())

    def is_cp(self, tol: float = 1e-8) -> bool:
        return self.choi_min_eigenvalue() >= -tol

    def is_tp(self, tol: float = 1e-8) -> bool:
        tr = np.trace(self.outputs, axis1=-2, axis2=-1)
        return bool(np.max(np.abs(tr - np.eye(self.k))) <= tol)

    def is_trace_nonincreasing(self, tol: float = 1e-8) -> bool:
        tr = np.trace(self.outputs, axis1=-2, axis2=-1)
        # trace functional must be dominated by the identity: I - T >= 0
        herm = (tr + tr.conj().T) / 2
        return bool(np.linalg.eigvalsh(np.eye(self.k) - herm.T).min() >= -tol)

    def then(self, other: "ChannelMap") -> "ChannelMap":
        """Compose with a channel whose frame is the full computational basis."""
        d = self.out_dim
        if other.k != d or np.max(np.abs(other.frame.vectors - np.eye(d))) > 0:
            raise ValueError("second channel must act on the full output space")
        outs = np.einsum("ijab,abcd->ijcd", self.outputs, other.outputs)
        return ChannelMap(self.frame, outs, self.trace_preserving and other.trace_preserving)

    def logical(self, out_frame: LogicalFrame) -> np.ndarray:
        """Outputs compressed onto an output frame, shape (k, k, k', k')."""
        v = out_frame.vectors
        return np.einsum("ai,xyab,bj->xyij", v.conj(), self.outputs, v)


def full_frame(dim: int) -> LogicalFrame:
    return LogicalFrame(np.eye(dim))


def hermitian_basis(frame: LogicalFrame):
    """Hermitian operators spanning the frame plus the map back to |i><j|.

    Returns (ops, coeff) where |i><j| = sum_m coeff[i, j, m] ops[m].
    """
    v = frame.vectors
    k = frame.dim
    ops, coeff = [], np.zeros((k, k, k * k), complex)
    for i in range(k):
        coeff[i, i, len(ops)] = 1
        ops.append(np.outer(v[:, i], v[:, i].conj()))
    for i in range(k):
        for j in range(i + 1, k):
            ij = np.outer(v[:, i], v[:, j].conj())
            mx, my = len(ops), len(ops) + 1
            ops.append(ij + ij.conj().T)
            ops.append(-1j * ij + 1j * ij.conj().T)
            coeff[i, j, mx], coeff[i, j, my] = 0.5, 0.5j
            coeff[j, i, mx], coeff[j, i, my] = 0.5, -0.5j
    return np.array(ops), coeff


def channel_from_pulse(pulse: ControlPulse, params, collapse: CollapseSet, frame: LogicalFrame,
                       postselect: PostSelection = NO_POSTSELECTION,
                       dims: HilbertDims | None = None, substeps: int = 1) -> ChannelMap:
    system = as_system(params, dims)
    ops, coeff = hermitian_basis(frame)
    out = propagate_lindblad(ops, pulse, system, collapse, substeps=substeps)
    if postselect.active:
        out = postselect.apply(out, system.dims)
    outputs = np.einsum("ijm,mab->ijab", coeff, out)
    return ChannelMap(frame, outputs, trace_preserving=not postselect.active)


def unitary_channel(u: np.ndarray, frame: LogicalFrame) -> ChannelMap:
    basis = frame.basis_operators()
    return ChannelMap(frame, np.einsum("ab,ijbc,dc->ijad", u, basis, u.conj()))


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]),
            np.array([[0, math.sqrt(gamma)], [0, 0]])]


# ------------------------------------------------------------ PTM / fidelity


_P1 = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]


def pauli_basis(k: int) -> list[np.ndarray]:
    n = int(round(math.log2(k)))
    if 2 ** n != k:
        raise ValueError(f"logical dimension {k} is not a power of two")
    return [reduce(np.kron, ps, np.eye(1)) for ps in itertools.product(_P1, repeat=n)]


def cardinal_states(k: int) -> list[np.ndarray]:
    """|0>, |1>, (|0>+|1>)/sqrt2, (|0>-i|1>)/sqrt2 and their tensor products."""
    n = int(round(math.log2(k)))
    one = [np.array([1, 0], complex), np.array([0, 1], complex),
           np.array([1, 1], complex) / math.sqrt(2), np.array([1, -1j], complex) / math.sqrt(2)]
    kets = [reduce(np.kron, ks, np.ones(1)) for ks in itertools.product(one, repeat=n)]
    return [np.outer(v, v.conj()) for v in kets]


def success_probability(channel: ChannelMap) -> float:
    traces = np.trace(channel.outputs, axis1=-2, axis2=-1)
    probs = [np.sum(rho * traces).real for rho in cardinal_states(channel.k)]
    return float(np.mean(probs))


def ptm_of(channel: ChannelMap, out_frame: LogicalFrame | None = None,
           renormalize: bool | None = None) -> np.ndarray:
    """Pauli transfer matrix R_ij = Tr[P_i E(P_j)] / k on the logical frames.

    Post-selected (trace-nonincreasing) channels are divided by their average
    success probability first, unless ``renormalize`` says otherwise.
    """
    out_frame = out_frame or channel.frame
    logical = channel.logical(out_frame)
    k = channel.k
    if renormalize is None:
        renormalize = not channel.trace_preserving
    if renormalize:
        p = success_probability(channel)
        if p <= 1e-14:
            raise DegenerateChannelError("post-selected channel has zero success probability")
        logical = logical / p
    paulis = pauli_basis(k)
    images = [np.einsum("ij,ijab->ab", pj, logical) for pj in paulis]
    r = np.array([[np.trace(pi @ img).real / k for img in images] for pi in paulis])
    return r


def ptm_from_unitary(u: np.ndarray) -> np.ndarray:
    k = u.shape[0]
    paulis = pauli_basis(k)
    return np.array([[np.trace(pi @ u @ pj @ u.conj().T).real / k for pj in paulis]
                     for pi in paulis])


def ptm_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    k = kraus[0].shape[0]
    paulis = pauli_basis(k)
    return np.array([[sum(np.trace(pi @ m @ pj @ m.conj().T) for m in kraus).real / k
                      for pj in paulis] for pi in paulis])


def process_fidelity(sim: np.ndarray, ideal: np.ndarray) -> float:
    k2 = sim.shape[0]
    return float(np.trace(ideal.T @ sim) / k2)


# ------------------------------------------------------------------- export


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_ptm(path: str | Path, ptm: np.ndarray) -> Path:
    path = Path(path)
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=int(math.log(ptm.shape[0], 4)))]
    lines = ["row," + ",".join(labels)]
    for lab, row in zip(labels, ptm):
        lines.append(lab + "," + ",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_ptm(path: str | Path) -> np.ndarray:
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    return np.array([[float(v) for v in r.split(",")[1:]] for r in rows])


def write_channel(path: str | Path, channel: ChannelMap) -> Path:
    """Superoperator in row-major order as ``row,col,re,im`` records."""
    path = Path(path)
    s = channel.superoperator()
    lines = ["row,col,re,im"]
    for r, c in itertools.product(range(s.shape[0]), range(s.shape[1])):
        v = s[r, c]
        lines.append(f"{r},{c},{_fmt(v.real)},{_fmt(v.imag)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_superoperator(path: str | Path) -> np.ndarray:
    recs = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_r, n_c = int(recs[:, 0].max()) + 1, int(recs[:, 1].max()) + 1
    s = np.zeros((n_r, n_c), complex)
    s[recs[:, 0].astype(int), recs[:, 1].astype(int)] = recs[:, 2] + 1j * recs[:, 3]
    return s
