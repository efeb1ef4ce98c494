import math

import numpy as np
import pytest

from edbosonic import dynamics as dy
from edbosonic import fockspace as fs
from edbosonic import model as m
from edbosonic.codes import BinomialCode
from edbosonic.fockspace import E, F, G, HilbertDims

DIMS = HilbertDims(8)


@pytest.fixture(scope="module")
def params():
    return m.device_params()


def ket(n, level, dims=DIMS):
    return fs.product_ket(dims, np.eye(dims.cavity_dim)[n], level)


def dm(v):
    return np.outer(v, v.conj())


def random_pulse(seed, n=20, scale=10 * m.MHZ, dt=4e-9):
    rng = np.random.default_rng(seed)
    return m.ControlPulse(dt, rng.uniform(-1, 1, size=(n, 4)) * scale)


def test_zero_pulse_identity_on_g(params):
    u = dy.propagate_unitary(m.ControlPulse(4e-9, np.zeros((10, 4))), params, DIMS)
    for n in range(DIMS.cavity_dim):
        v = ket(n, G)
        assert np.allclose(u @ v, v, atol=1e-12)


def test_unitarity_and_semigroup(params):
    u = dy.propagate_unitary(random_pulse(0), params, DIMS)
    assert np.abs(u.conj().T @ u - np.eye(DIMS.total)).max() < 1e-10
    row = np.array([[3, -2, 1, 0.5]]) * m.MHZ
    u1 = dy.propagate_unitary(m.ControlPulse(2e-9, np.repeat(row, 8, 0)), params, DIMS)
    u2 = dy.propagate_unitary(m.ControlPulse(4e-9, np.repeat(row, 4, 0)), params, DIMS)
    assert np.abs(u1 - u2).max() < 1e-12


def test_single_photon_decay(params):
    rho = dm(ket(1, G))
    out = dy.idle(rho, 100e-6, params, m.default_collapse_set(params, DIMS), DIMS)
    assert out[3 + G, 3 + G].real == pytest.approx(math.exp(-0.05), abs=1e-6)
    assert np.trace(out).real == pytest.approx(1, abs=1e-9)


def cascade(params, t):
    ke, kf = params.kappa_e, params.kappa_f
    pf = math.exp(-kf * t)
    pe = kf * (math.exp(-ke * t) - math.exp(-kf * t)) / (kf - ke)
    return 1 - pf - pe, pe, pf


def test_ancilla_cascade(params):
    t = 10e-6
    out = dy.idle(dm(ket(0, F)), t, params, m.default_collapse_set(params, DIMS), DIMS)
    pops = [out[lv, lv].real for lv in (G, E, F)]
    assert np.allclose(pops, cascade(params, t), atol=1e-6)
    kept, p = dy.postselect_ancilla(out, DIMS, ("e",))
    pg, _, pf = cascade(params, t)
    assert p == pytest.approx(pg + pf, abs=1e-6)
    assert np.trace(kept).real == pytest.approx(p)


def test_closed_limit(params):
    pulse = random_pulse(3)
    lossless = params.lossless()
    rho = dm((ket(0, G) + ket(2, G)) / math.sqrt(2))
    u = dy.propagate_unitary(pulse, lossless, DIMS)
    out = dy.propagate_lindblad(rho, pulse, lossless, m.default_collapse_set(lossless, DIMS), DIMS)
    assert np.abs(out - u @ rho @ u.conj().T).max() < 1e-9


def test_lindblad_trace_and_step_halving(params):
    pulse = random_pulse(4)
    coll = m.default_collapse_set(params, DIMS)
    rho = dm((ket(1, G) + ket(4, F)) / math.sqrt(2))
    a = dy.propagate_lindblad(rho, pulse, params, coll, DIMS)
    b = dy.propagate_lindblad(rho, pulse, params, coll, DIMS, substeps=8)
    assert abs(np.trace(a).real - 1) < 1e-9
    assert np.linalg.norm(a - b) < 1e-8


def test_dense_path_matches_taylor(params):
    coll = m.default_collapse_set(params, DIMS)
    system = dy.as_system(params, DIMS)
    rho = dm((ket(1, G) + ket(2, F)) / math.sqrt(2))
    long = dy.evolve_constant(rho, system.drift, coll, 20e-6)  # dense exponential
    short = rho
    for _ in range(200):
        short = dy.evolve_constant(short, system.drift, coll, 0.1e-6)
    assert np.abs(long - short).max() < 1e-9


def test_postselection_examples():
    kept, p = dy.postselect_ancilla(dm(ket(2, G)), DIMS)
    assert p == pytest.approx(1) and np.allclose(kept, dm(ket(2, G)))
    assert dy.postselect_ancilla(dm(ket(2, E)), DIMS)[1] == 0
    assert dy.postselect_parity(dm(ket(2, G)), DIMS, "even")[1] == pytest.approx(1)
    assert dy.postselect_parity(dm(ket(3, G)), DIMS, "even")[1] == 0
    sup = dm((ket(0, G) + ket(1, G)) / math.sqrt(2))
    assert dy.postselect_parity(sup, DIMS, "even")[1] == pytest.approx(0.5)


def test_amplitude_damping_channel(params):
    t = 300e-6
    frame = dy.LogicalFrame(np.stack([ket(0, G), ket(1, G)], axis=1))
    coll = m.default_collapse_set(params, DIMS)
    empty = m.ControlPulse(t, np.zeros((1, 4)))
    system = dy.as_system(params, DIMS)
    # a drift-free cavity: |0,g>,|1,g> see no dispersive shift
    ch = dy.channel_from_pulse(empty, system, coll, frame)
    gamma = 1 - math.exp(-params.kappa * t)
    ptm = dy.ptm_of(ch, frame)
    assert np.abs(ptm - dy.ptm_from_kraus(dy.amplitude_damping_kraus(gamma))).max() < 1e-8
    assert ch.is_tp() and ch.is_cp()


def test_zero_duration_identity(params):
    frame = BinomialCode().frame(DIMS)
    ch = dy.channel_from_pulse(m.ControlPulse(4e-9, np.zeros((0, 4))), params,
                               m.default_collapse_set(params, DIMS), frame, dims=DIMS)
    assert np.allclose(dy.ptm_of(ch), np.eye(4), atol=1e-12)


def test_postselected_channel_properties(params):
    frame = BinomialCode().frame(DIMS)
    coll = m.default_collapse_set(params, DIMS)
    ch = dy.channel_from_pulse(random_pulse(5, n=50, scale=30 * m.MHZ), params, coll, frame,
                               dy.DISCARD_E, DIMS)
    assert not ch.trace_preserving
    assert ch.choi_min_eigenvalue() >= -1e-8
    assert ch.is_trace_nonincreasing()
    r = dy.ptm_of(ch)
    assert np.all(np.abs(r) <= 1 + 1e-8)
    assert 0 < dy.success_probability(ch) <= 1


def test_composition(params):
    frame = BinomialCode().frame(DIMS)
    coll = m.default_collapse_set(params, DIMS)
    a, b = random_pulse(6, n=10), random_pulse(7, n=12)
    ab = m.ControlPulse(a.dt, np.vstack([a.amplitudes, b.amplitudes]))
    direct = dy.channel_from_pulse(ab, params, coll, frame, dims=DIMS)
    first = dy.channel_from_pulse(a, params, coll, frame, dims=DIMS)
    second = dy.channel_from_pulse(b, params, coll, dy.full_frame(DIMS.total), dims=DIMS)
    assert np.abs(first.then(second).outputs - direct.outputs).max() < 1e-8


def test_success_monotone(params):
    dims = HilbertDims(6)
    frame = BinomialCode().frame(dims)
    coll = m.default_collapse_set(params, dims)
    pulse = random_pulse(8, n=20, scale=30 * m.MHZ)
    one = dy.channel_from_pulse(pulse, params, coll, frame, dy.DISCARD_E, dims)
    more = dy.channel_from_pulse(pulse, params, coll, dy.full_frame(dims.total), dy.DISCARD_E, dims)
    two = one.then(more)
    assert dy.success_probability(two) <= dy.success_probability(one) + 1e-12 <= 1 + 1e-12


def test_ptm_examples():
    frame = dy.full_frame(2)
    assert np.allclose(dy.ptm_of(dy.unitary_channel(np.eye(2), frame)), np.eye(4))
    z = dy.ptm_from_unitary(np.diag([1, -1]))
    assert np.allclose(z, np.diag([1, -1, -1, 1]))
    dep = dy.ChannelMap(frame, np.einsum("ij,ab->ijab", np.eye(2), np.eye(2) / 2))
    r = dy.ptm_of(dep)
    assert np.allclose(r, np.diag([1, 0, 0, 0]))
    assert dy.process_fidelity(r, np.eye(4)) == pytest.approx(0.25)
    assert dy.process_fidelity(z, z) == pytest.approx(1)


def test_uniform_halving_and_degenerate():
    frame = dy.full_frame(2)
    half = dy.ChannelMap(frame, 0.5 * frame.basis_operators(), trace_preserving=False)
    assert dy.success_probability(half) == pytest.approx(0.5)
    assert np.allclose(dy.ptm_of(half), np.eye(4))
    dead = dy.ChannelMap(frame, 0 * frame.basis_operators(), trace_preserving=False)
    with pytest.raises(dy.DegenerateChannelError):
        dy.ptm_of(dead)


def chi_fidelity(kraus):
    """Brute-force process fidelity: overlap of each Kraus with the identity."""
    return sum(abs(np.trace(k) / 2) ** 2 for k in kraus)


@pytest.mark.parametrize("gamma", [0.0, 0.1, 0.5, 0.9])
def test_amplitude_damping_fidelity(gamma):
    kraus = dy.amplitude_damping_kraus(gamma)
    f = dy.process_fidelity(dy.ptm_from_kraus(kraus), np.eye(4))
    assert f == pytest.approx(chi_fidelity(kraus), abs=1e-12)
    assert f == pytest.approx((1 + math.sqrt(1 - gamma)) ** 2 / 4, abs=1e-12)


def test_channel_export_roundtrip(tmp_path):
    frame = dy.full_frame(2)
    ch = dy.unitary_channel(np.array([[0, 1], [1, 0]]), frame)
    r = dy.ptm_of(ch)
    assert np.array_equal(dy.read_ptm(dy.write_ptm(tmp_path / "r.csv", r)), r)
    s = dy.read_superoperator(dy.write_channel(tmp_path / "s.csv", ch))
    assert np.allclose(s, ch.superoperator())
