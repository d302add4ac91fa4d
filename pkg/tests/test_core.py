import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsanalysis import core

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def singlet():
    return core.projector((core.ket("01") - core.ket("10")) / np.sqrt(2))


def test_tensor_examples():
    assert np.array_equal(core.tensor(np.eye(2), np.eye(2)), np.eye(4))
    zz = core.tensor(core.pauli_matrix("z"), core.pauli_matrix("z"))
    assert np.array_equal(zz, np.diag([1, -1, -1, 1]))
    xx = core.tensor(core.pauli_matrix("x"), core.pauli_matrix("x"))
    # explicit matrix-vector product: |00> -> |11>
    explicit = np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]])
    assert np.array_equal(xx, explicit)
    assert np.array_equal(xx @ core.ket("00"), core.ket("11"))


def test_qubit_zero_is_leftmost_factor():
    assert np.allclose(core.pauli_matrix("z0"), core.tensor(core.pauli_matrix("z"), np.eye(2)))
    assert core.ket("10")[2] == 1


def test_partial_transpose_examples():
    d = np.diag([0.1, 0.2, 0.3, 0.4])
    assert np.array_equal(core.partial_transpose(d, [0]), d)
    pt = core.partial_transpose(singlet(), [0])
    assert np.allclose(np.linalg.eigvalsh(pt), [-0.5, 0.5, 0.5, 0.5])
    rho = core.random_density(3, np.random.default_rng(1))
    assert np.array_equal(core.partial_transpose(core.partial_transpose(rho, [0, 2]), [0, 2]), rho)


def test_partial_transpose_against_index_formula():
    # independent oracle: explicit index swap <ij|rho^{T_A}|kl> = <kj|rho|il>
    rho = core.random_density(2, np.random.default_rng(2))
    r = rho.reshape(2, 2, 2, 2)
    expect = np.einsum("ijkl->kjil", r).reshape(4, 4)
    assert np.allclose(core.partial_transpose(rho, [0]), expect)


def test_partial_transpose_mask_out_of_range():
    with pytest.raises(ValueError):
        core.partial_transpose(np.eye(4) / 4, [2])


@given(seeds, st.integers(1, 3), st.data())
@settings(max_examples=30, deadline=None)
def test_partial_transpose_properties(seed, n, data):
    rho = core.random_density(n, np.random.default_rng(seed))
    mask = data.draw(st.lists(st.integers(0, n - 1), unique=True))
    pt = core.partial_transpose(rho, mask)
    assert np.isclose(np.trace(pt), 1)
    assert np.allclose(pt, pt.conj().T)
    assert np.array_equal(core.partial_transpose(pt, mask), rho)


def test_partial_trace_examples():
    rng = np.random.default_rng(3)
    a, b = core.random_density(1, rng), core.random_density(1, rng)
    assert np.allclose(core.partial_trace(core.tensor(a, b), [0]), a)
    ghz = core.projector(core.ghz_state(3))
    for q in range(3):
        assert np.allclose(core.partial_trace(ghz, [q]), np.eye(2) / 2)
    rho = core.random_density(3, rng)
    assert np.allclose(core.partial_trace(rho, [0, 1, 2]), rho)
    with pytest.raises(ValueError):
        core.partial_trace(rho, [])


def test_partial_trace_against_explicit_sum():
    rho = core.random_density(3, np.random.default_rng(4))
    # keep qubit 1: sum over basis states of qubits 0 and 2
    out = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for k in range(2):
            for a in range(2):
                for b in range(2):
                    out[a, b] += rho[4 * i + 2 * a + k, 4 * i + 2 * b + k]
    assert np.allclose(core.partial_trace(rho, [1]), out)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_partial_trace_of_product(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    a, b = a + a.conj().T, b + b.conj().T
    assert np.allclose(core.partial_trace(core.tensor(a, b), [0]), a * np.trace(b))


def test_eig_examples():
    for method in ("lapack", "jacobi"):
        w, _ = core.eig_hermitian(core.pauli_matrix("z"), method)
        assert np.allclose(w, [-1, 1])
        w, _ = core.eig_hermitian(np.eye(4) / 4, method)
        assert np.allclose(w, [0.25] * 4)


@given(seeds, st.sampled_from([2, 4, 8, 16]))
@settings(max_examples=30, deadline=None)
def test_jacobi_reconstruction(seed, dim):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a = (a + a.conj().T) / 2
    w, v = core.jacobi_eigh(a)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs(a - (v * w) @ v.conj().T)) <= 1e-9 * np.max(np.abs(a))
    assert np.allclose(v.conj().T @ v, np.eye(dim), atol=1e-10)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-10)


def test_jacobi_large_and_degenerate():
    rng = np.random.default_rng(5)
    u = core.random_unitary(64, rng)
    a = (u * np.repeat([1.0, -2.0, 3.0, 0.5], 16)) @ u.conj().T
    w, v = core.jacobi_eigh(a)
    assert np.max(np.abs(a - (v * w) @ v.conj().T)) <= 1e-9 * np.max(np.abs(a))


def test_jacobi_iteration_cap():
    a = core.hermitian(np.array([[1, 2], [2, -1]], dtype=complex))
    with pytest.raises(core.EigenConvergenceError):
        core.jacobi_eigh(a, tol=0.0, max_sweeps=0)


def test_hermitian_validation():
    a = np.array([[1, 1e-12], [0, 1]])
    assert np.allclose(core.hermitian(a), core.hermitian(a).conj().T)
    with pytest.raises(core.NotHermitianError):
        core.hermitian(np.array([[1, 1], [0, 1]]))
    with pytest.raises(core.InvalidStateError):
        core.density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        core.num_qubits(6)


def test_entropy_examples():
    assert core.vn_entropy(core.projector(core.random_pure(3, np.random.default_rng(0)))) == pytest.approx(0, abs=1e-12)
    for n in (1, 2, 3):
        assert core.vn_entropy(core.maximally_mixed(n)) == pytest.approx(n)
    rho = np.diag([0.75, 0.25])
    binary = -(0.75 * np.log2(0.75) + 0.25 * np.log2(0.25))
    assert core.vn_entropy(rho) == pytest.approx(binary)
    assert core.vn_entropy(rho) == pytest.approx(0.811278, abs=1e-6)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_entropy_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = core.random_density(2, rng)
    u = core.random_unitary(4, rng)
    assert core.vn_entropy(u @ rho @ u.conj().T) == pytest.approx(core.vn_entropy(rho), abs=1e-9)


def test_relative_entropy_examples():
    rho = core.random_density(2, np.random.default_rng(6))
    assert core.relative_entropy(rho, rho) == pytest.approx(0, abs=1e-10)
    zero, one = core.projector(core.ket("0")), core.projector(core.ket("1"))
    assert core.relative_entropy(zero, np.eye(2) / 2) == pytest.approx(1.0)
    assert core.relative_entropy(zero, one) == np.inf
    with pytest.raises(ValueError):
        core.relative_entropy(zero, np.eye(4) / 4)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_klein_inequality(seed):
    rng = np.random.default_rng(seed)
    rho, eta = core.random_density(2, rng), core.random_density(2, rng)
    d = core.relative_entropy(rho, eta)
    assert d >= 0
    if np.max(np.abs(rho - eta)) > 1e-9:
        assert d > 0


def test_fidelity_examples():
    psi = core.random_pure(2, np.random.default_rng(7))
    assert core.fidelity_pure(psi, core.projector(psi)) == pytest.approx(1)
    assert core.fidelity_pure(core.ket("0"), np.eye(2) / 2) == pytest.approx(0.5)
    ghz = core.ghz_state(4)
    rho = 0.8 * core.projector(ghz) + 0.2 * np.eye(16) / 16
    assert core.fidelity_pure(ghz, rho) == pytest.approx(0.8 + 0.2 / 16)
    assert core.fidelity_pure(ghz, rho) == pytest.approx(0.8125)
    with pytest.raises(ValueError):
        core.fidelity_pure(core.ket("0"), rho)
    with pytest.raises(ValueError):
        core.fidelity_pure(np.array([1.0, 1.0]), np.eye(2) / 2)


def test_pauli_expand_examples():
    for n in (1, 2, 3):
        assert core.pauli_expand(core.maximally_mixed(n)) == {"0" * n: pytest.approx(1 / 2**n)}
    assert core.pauli_expand(core.pauli_matrix("x")) == {"x": pytest.approx(1.0)}


@pytest.mark.parametrize("n", [1, 2, 3])
def test_pauli_round_trip_all_strings(n):
    for label in core.pauli_labels(n):
        p = core.pauli_matrix(label)
        coeffs = core.pauli_expand(p)
        assert coeffs == {label: pytest.approx(1.0)}
        assert np.max(np.abs(core.pauli_assemble(coeffs, n) - p)) <= 1e-12


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_pauli_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    a = (a + a.conj().T) / 2
    assert np.max(np.abs(core.pauli_assemble(core.pauli_expand(a), 3) - a)) <= 1e-12


def test_pauli_weight_and_labels():
    assert core.pauli_weight("0x0z") == 2
    assert len(core.pauli_labels(3)) == 64
    assert len(core.pauli_labels(3, 1, 2)) == 9 + 27
    with pytest.raises(ValueError):
        core.pauli_matrix("q")
