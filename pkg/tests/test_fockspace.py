import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edbosonic import fockspace as fs
from edbosonic.fockspace import E, F, G, HilbertDims


def test_dims_validation():
    assert HilbertDims().total == 36
    assert HilbertDims(cavity2_dim=6).total == 12 * 6 * 3
    with pytest.raises(fs.DimensionError):
        HilbertDims(cavity_dim=5)
    with pytest.raises(fs.DimensionError):
        HilbertDims(ancilla_dim=2)


def test_annihilation_matrix_elements():
    a = fs.annihilation(6).mat
    for n in range(1, 6):
        assert a[n - 1, n] == pytest.approx(np.sqrt(n))
    assert np.allclose(np.diag(a.conj().T @ a), np.r_[0:5, 5])
    with pytest.raises(fs.DimensionError):
        fs.annihilation(1)


def test_commutator_below_truncation():
    a = fs.annihilation(10).mat
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(comm[:9, :9], np.eye(9))
    # the truncation shows up only in the last level
    assert comm[9, 9] == pytest.approx(-9)


def test_parity_and_number():
    p = fs.photon_parity(8).mat
    n = fs.number(8).mat
    assert np.allclose(np.diag(p), [1, -1] * 4)
    assert np.allclose(p @ p, np.eye(8))
    assert np.allclose(n @ p, p @ n)


def test_tensor_canonical_order():
    a = fs.annihilation(6)
    pe = fs.ancilla_projectors()[E]
    x = fs.tensor(pe, a)
    y = fs.tensor(a, pe)
    assert x.labels == ("cavity", "ancilla")
    assert np.allclose(x.mat, y.mat)
    assert np.allclose(y.mat, np.kron(a.mat, pe.mat))


def test_tensor_repeated_label():
    a = fs.annihilation(6)
    with pytest.raises(fs.CompositionError):
        fs.tensor(a, a)


def test_factor_mismatch():
    a6, a7 = fs.annihilation(6), fs.annihilation(7)
    with pytest.raises(fs.CompositionError):
        a6 + a7
    with pytest.raises(fs.DimensionError):
        fs.Operator(np.eye(3), (("cavity", 4),))


def test_partial_trace_product_state():
    dims = HilbertDims(6)
    rc = np.diag([0.5, 0.5, 0, 0, 0, 0])
    ra = np.diag([0.2, 0.3, 0.5])
    st_ = fs.DensityState(np.kron(rc, ra), dims.factors)
    assert np.allclose(fs.partial_trace(st_, "cavity").mat, rc)
    assert np.allclose(fs.partial_trace(st_, "ancilla").mat, ra)
    assert isinstance(fs.partial_trace(st_, "ancilla"), fs.DensityState)
    with pytest.raises(KeyError):
        fs.partial_trace(st_, "cavity2")


def test_density_state_validation():
    f = (("ancilla", 3),)
    fs.DensityState(np.diag([0.5, 0.2, 0.1]), f)  # sub-normalised is allowed
    with pytest.raises(ValueError):
        fs.DensityState(np.diag([0.5, -0.1, 0.6]), f)
    with pytest.raises(ValueError):
        fs.DensityState(np.diag([0.7, 0.3, 0.2]), f)
    with pytest.raises(ValueError):
        fs.DensityState(np.array([[0.5, 0.1], [0.0, 0.5]]), (("x", 2),))


def test_sigma_gf_leaves_e():
    sx, sy = fs.sigma_gf()
    assert np.allclose(sx.mat[E], 0) and np.allclose(sy.mat[:, E], 0)
    assert np.allclose(sx.mat @ fs.fock(G, 3), fs.fock(F, 3))


def test_product_ket_layout():
    dims = HilbertDims(6)
    v = fs.product_ket(dims, np.array([0, 1.0]), F)
    assert v[1 * 3 + F] == 1 and np.count_nonzero(v) == 1
    with pytest.raises(fs.DimensionError):
        fs.product_ket(HilbertDims(6, cavity2_dim=6), np.array([1.0]), G)


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 10), st.integers(0, 2**31 - 1))
def test_partial_trace_preserves_trace(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(3 * n, 3 * n)) + 1j * rng.normal(size=(3 * n, 3 * n))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    st_ = fs.DensityState(rho, HilbertDims(n).factors)
    for keep in ("cavity", "ancilla"):
        assert fs.partial_trace(st_, keep).trace() == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(6, 9), st.integers(0, 2**31 - 1))
def test_embed_commutes_across_factors(n, seed):
    dims = HilbertDims(n)
    rng = np.random.default_rng(seed)
    c = fs.Operator(rng.normal(size=(n, n)), (("cavity", n),))
    a = fs.Operator(rng.normal(size=(3, 3)), (("ancilla", 3),))
    ce, ae = fs.embed(c, dims), fs.embed(a, dims)
    assert np.allclose((ce @ ae).mat, (ae @ ce).mat)
    assert np.allclose((ce @ ae).mat, fs.tensor(c, a).mat)


def test_projectors():
    pg, pe, pf = fs.ancilla_projectors()
    assert np.allclose(pe.mat @ fs.fock(F, 3), 0)
    assert pf.trace() == pytest.approx(1)
    for p in (pg, pe, pf):
        assert np.allclose(p.mat @ p.mat, p.mat) and np.allclose(p.mat, p.mat.conj().T)
    assert np.allclose((pg + pe + pf).mat, np.eye(3))


def test_tensor_examples():
    i6 = fs.tensor(fs.identity(2, "cavity"), fs.identity(3, "ancilla"))
    assert np.array_equal(i6.mat, np.eye(6))
    n = 12
    a = fs.annihilation(n)
    pg = fs.ancilla_projectors()[G]
    lhs = fs.tensor(a, fs.identity(3, "ancilla")) @ fs.tensor(fs.identity(n, "cavity"), pg)
    assert np.allclose(lhs.mat, fs.tensor(a, pg).mat)
    assert lhs.mat.shape == (36, 36)
    par = fs.photon_parity(8).mat
    assert np.allclose(par @ fs.fock(2, 8), fs.fock(2, 8))
    assert np.allclose(par @ fs.fock(3, 8), -fs.fock(3, 8))


def test_tensor_associative():
    a = fs.annihilation(6)
    b = fs.Operator(np.arange(9.0).reshape(3, 3), (("ancilla", 3),))
    c = fs.Operator(np.eye(2) * 2, (("extra", 2),))
    left = fs.tensor(fs.tensor(a, b), c)
    right = fs.tensor(a, fs.tensor(b, c))
    assert np.array_equal(left.mat, right.mat) and left.factors == right.factors


def test_bell_state_reduction():
    bell = np.zeros(4)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    st_ = fs.DensityState(np.outer(bell, bell), (("p", 2), ("q", 2)))
    assert np.allclose(fs.partial_trace(st_, "p").mat, np.eye(2) / 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_partial_trace_psd(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(36, 5)) + 1j * rng.normal(size=(36, 5))
    rho = m @ m.conj().T
    rho /= np.trace(rho).real
    red = fs.partial_trace(fs.DensityState(rho, HilbertDims().factors), "cavity").mat
    assert np.allclose(red, red.conj().T)
    assert np.linalg.eigvalsh(red).min() >= -1e-10
