"""Truncated Fock-space operator algebra.

Operators carry an ordered tuple of ``(label, dim)`` factors so that tensor
products and partial traces can be checked for consistency. The canonical
factor order is cavity, cavity2, ancilla; any other labels follow in the
order they first appear.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CAVITY = "cavity"
CAVITY2 = "cavity2"
ANCILLA = "ancilla"
_CANONICAL = (CAVITY, CAVITY2, ANCILLA)

G, E, F = 0, 1, 2  # ancilla level indices


class DimensionError(ValueError):
    pass


class CompositionError(ValueError):
    pass


@dataclass(frozen=True)
class HilbertDims:
    cavity_dim: int = 12
    ancilla_dim: int = 3
    cavity2_dim: int | None = None

    def __post_init__(self):
        if self.cavity_dim < 6:
            raise DimensionError(f"cavity_dim must be >= 6, got {self.cavity_dim}")
        if self.ancilla_dim != 3:
            raise DimensionError("ancilla_dim must be 3 (levels g, e, f)")
        if self.cavity2_dim is not None and self.cavity2_dim < 6:
            raise DimensionError(f"cavity2_dim must be >= 6, got {self.cavity2_dim}")

    @property
    def factors(self) -> tuple[tuple[str, int], ...]:
        out = [(CAVITY, self.cavity_dim)]
        if self.cavity2_dim is not None:
            out.append((CAVITY2, self.cavity2_dim))
        out.append((ANCILLA, self.ancilla_dim))
        return tuple(out)

    @property
    def total(self) -> int:
        return int(np.prod([d for _, d in self.factors]))

    @property
    def two_mode(self) -> bool:
        return self.cavity2_dim is not None


@dataclass(frozen=True, eq=False)
class Operator:
    """A dense matrix tied to a product of labelled factors."""

    mat: np.ndarray
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "factors", tuple((str(l), int(d)) for l, d in self.factors))
        n = int(np.prod([d for _, d in self.factors]))
        if mat.shape != (n, n):
            raise DimensionError(f"matrix shape {mat.shape} does not match factors {self.factors}")
        labels = [l for l, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise CompositionError(f"repeated factor label in {labels}")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(l for l, _ in self.factors)

    def __array__(self, dtype=None, copy=None):
        return self.mat if dtype is None else self.mat.astype(dtype)

    def _check(self, other: "Operator"):
        if self.factors != other.factors:
            raise CompositionError(f"factor mismatch: {self.factors} vs {other.factors}")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.mat @ other.mat, self.factors)
        return self.mat @ np.asarray(other)

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.mat + other.mat, self.factors)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.mat - other.mat, self.factors)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.mat * scalar, self.factors)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(-self.mat, self.factors)

    def dag(self) -> "Operator":
        return Operator(self.mat.conj().T, self.factors)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))


class DensityState(Operator):
    """Operator validated as a (possibly sub-normalised) density matrix."""

    herm_tol = 1e-10
    psd_tol = -1e-10

    def __post_init__(self):
        super().__post_init__()
        m = self.mat
        if np.max(np.abs(m - m.conj().T), initial=0.0) > self.herm_tol:
            raise ValueError("density matrix is not Hermitian")
        evals = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if evals.min() < self.psd_tol:
            raise ValueError(f"density matrix not PSD (min eigenvalue {evals.min():.3e})")
        if np.trace(m).real > 1 + 1e-10:
            raise ValueError(f"trace {np.trace(m).real} exceeds 1")

    @property
    def probability(self) -> float:
        return float(np.trace(self.mat).real)


def _cavity_dim(dims: HilbertDims | int) -> int:
    return dims.cavity_dim if isinstance(dims, HilbertDims) else int(dims)


def annihilation(dims: HilbertDims | int, label: str = CAVITY) -> Operator:
    n = _cavity_dim(dims)
    if n < 2:
        raise DimensionError(f"cavity dimension must be >= 2, got {n}")
    return Operator(np.diag(np.sqrt(np.arange(1, n)), 1), ((label, n),))


def number(dims: HilbertDims | int, label: str = CAVITY) -> Operator:
    n = _cavity_dim(dims)
    return Operator(np.diag(np.arange(n, dtype=float)), ((label, n),))


def identity(dim: int, label: str) -> Operator:
    return Operator(np.eye(dim), ((label, dim),))


def photon_parity(dims: HilbertDims | int, label: str = CAVITY) -> Operator:
    n = _cavity_dim(dims)
    return Operator(np.diag((-1.0) ** np.arange(n)), ((label, n),))


def ancilla_projectors() -> tuple[Operator, Operator, Operator]:
    """Rank-1 projectors onto |g>, |e>, |f>."""
    eye = np.eye(3)
    return tuple(Operator(np.outer(eye[k], eye[k]), ((ANCILLA, 3),)) for k in (G, E, F))


def ancilla_transition(to: int, frm: int) -> Operator:
    m = np.zeros((3, 3))
    m[to, frm] = 1.0
    return Operator(m, ((ANCILLA, 3),))


def sigma_gf() -> tuple[Operator, Operator]:
    """Pauli x and y acting on the g-f subspace (|e> untouched)."""
    sx = np.zeros((3, 3), complex)
    sy = np.zeros((3, 3), complex)
    sx[G, F] = sx[F, G] = 1.0
    sy[G, F] = -1j
    sy[F, G] = 1j
    return Operator(sx, ((ANCILLA, 3),)), Operator(sy, ((ANCILLA, 3),))


def sigma_ge() -> tuple[Operator, Operator]:
    """Pauli x and y acting on the g-e subspace."""
    sx = np.zeros((3, 3), complex)
    sy = np.zeros((3, 3), complex)
    sx[G, E] = sx[E, G] = 1.0
    sy[G, E] = -1j
    sy[E, G] = 1j
    return Operator(sx, ((ANCILLA, 3),)), Operator(sy, ((ANCILLA, 3),))


def _rank(label: str, seen: Sequence[str]) -> tuple[int, int]:
    if label in _CANONICAL:
        return (0, _CANONICAL.index(label))
    return (1, list(seen).index(label))


def tensor(*ops: Operator) -> Operator:
    """Kronecker product, reordered into the canonical factor order."""
    if not ops:
        raise CompositionError("tensor of nothing")
    factors = [f for op in ops for f in op.factors]
    labels = [l for l, _ in factors]
    if len(set(labels)) != len(labels):
        raise CompositionError(f"repeated factor label in {labels}")
    mat = ops[0].mat
    for op in ops[1:]:
        mat = np.kron(mat, op.mat)
    order = sorted(range(len(factors)), key=lambda i: _rank(labels[i], labels))
    if order != list(range(len(factors))):
        dims = [d for _, d in factors]
        k = len(dims)
        t = mat.reshape(dims + dims)
        t = t.transpose(order + [k + i for i in order])
        n = mat.shape[0]
        mat = t.reshape(n, n)
        factors = [factors[i] for i in order]
    return Operator(mat, tuple(factors))


def embed(op: Operator, dims: HilbertDims) -> Operator:
    """Extend a single-factor operator by identities to the full product space."""
    present = set(op.labels)
    parts = [op] + [identity(d, l) for l, d in dims.factors if l not in present]
    return tensor(*parts)


def partial_trace(state: Operator, keep: str | Iterable[str]) -> Operator:
    keep = (keep,) if isinstance(keep, str) else tuple(keep)
    labels = state.labels
    for k in keep:
        if k not in labels:
            raise KeyError(f"unknown factor label {k!r}; have {labels}")
    dims = [d for _, d in state.factors]
    k = len(dims)
    t = state.mat.reshape(dims + dims)
    # trace out from the highest axis down so indices stay valid
    for i in reversed(range(k)):
        if labels[i] in keep:
            continue
        cur = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + cur)
    kept = [(l, d) for l, d in state.factors if l in keep]
    n = int(np.prod([d for _, d in kept]))
    cls = type(state) if isinstance(state, DensityState) else Operator
    return cls(t.reshape(n, n), tuple(kept))


def fock(n: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, complex)
    v[n] = 1.0
    return v


def product_ket(dims: HilbertDims, cavity: np.ndarray, ancilla: int | np.ndarray,
                cavity2: np.ndarray | None = None) -> np.ndarray:
    """Ket on the full space from cavity amplitude vector(s) and an ancilla level."""
    anc = fock(ancilla, 3) if np.isscalar(ancilla) else np.asarray(ancilla, complex)
    cav = np.zeros(dims.cavity_dim, complex)
    cav[: len(cavity)] = cavity
    parts = [cav]
    if dims.two_mode:
        if cavity2 is None:
            raise DimensionError("two-mode dims need a cavity2 amplitude vector")
        c2 = np.zeros(dims.cavity2_dim, complex)
        c2[: len(cavity2)] = cavity2
        parts.append(c2)
    parts.append(anc)
    out = parts[0]
    for p in parts[1:]:
        out = np.kron(out, p)
    return out
