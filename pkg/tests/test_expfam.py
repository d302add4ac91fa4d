import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qsanalysis import core, expfam


def ghz3():
    return core.projector(core.ghz_state(3))


def random_local(n, k, rng, scale=0.5):
    labels = core.pauli_labels(n, 1, k)
    return expfam.LocalHamiltonian.from_vector(n, k, labels, scale * rng.normal(size=len(labels)))


def test_local_hamiltonian_validation():
    h = expfam.LocalHamiltonian(3, 2, {"xz0": 0.3, "00y": -1.0})
    assert h.coefficients == {"xz0": 0.3, "00y": -1.0}
    with pytest.raises(ValueError):
        expfam.LocalHamiltonian(3, 2, {"xyz": 1.0})
    with pytest.raises(ValueError):
        expfam.LocalHamiltonian(3, 2, {"000": 1.0})
    with pytest.raises(ValueError):
        expfam.LocalHamiltonian(3, 2, {"x0": 1.0})
    with pytest.raises(ValueError):
        expfam.LocalHamiltonian(3, 4)
    # nu normalizes exp(H) to unit trace
    assert np.real(np.trace(expm(h.matrix()))) == pytest.approx(1)


def test_thermal_examples():
    assert np.allclose(expfam.thermal_state(expfam.LocalHamiltonian(2, 1)), np.eye(4) / 4)
    beta = 0.7
    rho = expfam.thermal_state(expfam.LocalHamiltonian(1, 1, {"z": beta}))
    z = math.exp(beta) + math.exp(-beta)
    assert np.allclose(rho, np.diag([math.exp(beta) / z, math.exp(-beta) / z]))
    with pytest.raises(ValueError):
        expfam.thermal_state(expfam.LocalHamiltonian(1, 1, {"z": 60.0}))


def test_thermal_state_matches_matrix_exponential():
    h = random_local(3, 2, np.random.default_rng(0))
    assert np.allclose(expfam.thermal_state(h), expm(h.matrix()), atol=1e-12)


def test_thermal_expectations_are_log_partition_derivatives():
    rng = np.random.default_rng(1)
    n, k = 3, 2
    labels = core.pauli_labels(n, 1, k)
    theta = 0.5 * rng.normal(size=len(labels))
    paulis = [core.pauli_matrix(p) for p in labels]

    def log_z(th):
        return math.log(np.real(np.trace(expm(sum(t * p for t, p in zip(th, paulis))))))

    rho = expfam.thermal_state(expfam.LocalHamiltonian.from_vector(n, k, labels, theta))
    assert np.linalg.eigvalsh(rho)[0] > 0
    ev = expfam.marginal_expectations(rho, k)
    step = 1e-5
    for i in rng.choice(len(labels), size=8, replace=False):
        e = np.zeros(len(labels))
        e[i] = step
        fd = (log_z(theta + e) - log_z(theta - e)) / (2 * step)
        assert ev[labels[i]] == pytest.approx(fd, abs=1e-5)


def test_marginal_examples():
    assert all(v == 0 for v in expfam.marginal_expectations(np.eye(8) / 8, 2).values())
    ring = core.projector(expfam.ring_cluster_5())
    assert max(abs(v) for v in expfam.marginal_expectations(ring, 2).values()) <= 1e-12
    ev = expfam.marginal_expectations(core.projector(core.ket("000")), 2)
    for label, v in ev.items():
        expect = 1.0 if set(label) <= {"0", "z"} else 0.0
        assert v == pytest.approx(expect, abs=1e-12)
    with pytest.raises(ValueError):
        expfam.marginal_expectations(np.eye(4) / 4, 3)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_fixed_point(seed):
    rng = np.random.default_rng(seed)
    rho = expfam.thermal_state(random_local(3, 2, rng))
    proj = expfam.info_projection(rho, 2)
    assert proj.converged and proj.marginal_residual <= 1e-6
    assert core.relative_entropy(rho, proj.state) <= 1e-6
    assert np.allclose(proj.state, expfam.thermal_state(proj.hamiltonian), atol=1e-8)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_k1_projection_is_product_of_marginals(seed):
    rho = core.random_density(3, np.random.default_rng(seed))
    proj = expfam.info_projection(rho, 1, tol=1e-9)
    assert np.max(np.abs(proj.state - expfam.product_of_marginals(rho))) <= 1e-6
    assert expfam.d_k(rho, 1) == pytest.approx(expfam.d1_closed_form(rho), abs=1e-6)


def test_ghz3_examples():
    proj = expfam.info_projection(ghz3(), 1)
    assert np.allclose(proj.state, np.eye(8) / 8, atol=1e-9)
    assert expfam.d_k(ghz3(), 1) == pytest.approx(3, abs=1e-9)
    d2 = expfam.d_k(ghz3(), 2)
    assert d2 <= 3 + 1e-9
    # the zz correlations survive at k=2, so the projection keeps one bit: diag(1,0,...,0,1)/2
    assert d2 == pytest.approx(1, abs=1e-4)


def test_product_state_has_zero_d1():
    rng = np.random.default_rng(2)
    rho = core.tensor([core.random_density(1, rng) for _ in range(3)])
    assert expfam.d_k(rho, 1) == pytest.approx(0, abs=1e-8)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_monotone_chain_and_entropy_gap(seed):
    rho = core.random_density(3, np.random.default_rng(seed))
    d1, d2, d3 = (expfam.d_k(rho, k) for k in (1, 2, 3))
    assert d1 + 1e-6 >= d2 >= -1e-12
    assert d2 + 1e-6 >= d3
    assert d3 == pytest.approx(0, abs=1e-6)
    proj = expfam.info_projection(rho, 2)
    assert expfam.d_k(rho, 2) == pytest.approx(core.vn_entropy(proj.state) - core.vn_entropy(rho), abs=1e-5)


def test_maximum_entropy_over_matching_states():
    # mixing GHZ3 with white noise leaves all one-body marginals at zero
    s_proj = core.vn_entropy(expfam.info_projection(ghz3(), 1).state)
    for t in np.linspace(0, 1, 6):
        sigma = t * ghz3() + (1 - t) * np.eye(8) / 8
        assert max(abs(v) for v in expfam.marginal_expectations(sigma, 1).values()) <= 1e-12
        assert s_proj >= core.vn_entropy(sigma) - 1e-6
    rho = core.random_density(3, np.random.default_rng(3))
    assert core.vn_entropy(expfam.info_projection(rho, 2).state) >= core.vn_entropy(rho) - 1e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_pythagorean_identity(seed):
    rng = np.random.default_rng(seed)
    rho = core.random_density(3, rng)
    eta = expfam.thermal_state(random_local(3, 2, rng))
    assert expfam.pythagorean_residual(rho, eta, 2) <= 1e-5


def test_pythagorean_degenerate_and_k1():
    rho = core.random_density(3, np.random.default_rng(4))
    proj = expfam.info_projection(rho, 2, tol=1e-9)
    assert expfam.pythagorean_residual(rho, proj.state, 2) <= 2e-6
    assert expfam.pythagorean_residual(rho, np.eye(8) / 8, 1) <= 1e-5


def test_pure_state_projection_is_flagged_or_converged():
    # |000> has extreme marginals; the family only reaches it in the closure
    proj = expfam.info_projection(core.projector(core.ket("000")), 1, max_iter=200)
    assert proj.converged or proj.message
    assert np.max(np.abs(proj.hamiltonian.vector(list(proj.hamiltonian.coefficients)))) <= expfam.THETA_CAP
    assert np.allclose(proj.state, expfam.thermal_state(proj.hamiltonian), atol=1e-8)


def test_iteration_cap_raises_in_d_k():
    rho = core.random_density(3, np.random.default_rng(5))
    proj = expfam.info_projection(rho, 2, tol=1e-14, max_iter=1)
    assert not proj.converged and proj.message == "iteration cap reached"
    with pytest.raises(expfam.ProjectionNotConverged):
        expfam.d_k(rho, 2, tol=1e-14, max_iter=1)


def test_ring_state_stabilizers():
    psi = expfam.ring_cluster_5()
    assert np.linalg.norm(psi) == pytest.approx(1)
    for g in expfam.RING_STABILIZERS:
        assert np.max(np.abs(core.pauli_matrix(g) @ psi - psi)) <= 1e-12
    assert np.real(psi.conj() @ core.pauli_matrix(expfam.RING_STABILIZERS[0]) @ psi) == pytest.approx(1, abs=1e-12)


def test_ring_state_is_unique_stabilizer_eigenvector():
    proj = np.eye(32)
    for g in expfam.RING_STABILIZERS:
        proj = proj @ (np.eye(32) + core.pauli_matrix(g)) / 2
    assert np.real(np.trace(proj)) == pytest.approx(1)
    psi = expfam.ring_cluster_5()
    assert np.allclose(proj, np.outer(psi, psi.conj()))


def test_printed_amplitudes():
    printed = expfam.ring_cluster_5_printed()
    nz = np.flatnonzero(np.abs(printed) > 1e-12)
    assert len(nz) == 8
    assert np.allclose(np.abs(printed[nz]), 1 / np.sqrt(8))
    signs = {format(i, "05b"): int(np.sign(printed[i].real)) for i in nz}
    assert signs == {
        "00000": 1, "00110": 1, "01011": -1, "01101": 1,
        "10001": 1, "10111": -1, "11010": 1, "11100": 1,
    }
    u = expfam.printed_frame_unitary()
    assert np.allclose(u @ expfam.ring_cluster_5(), printed)


def test_ring_two_body_marginals_maximally_mixed():
    for psi in (expfam.ring_cluster_5(), expfam.ring_cluster_5_printed()):
        rho = core.projector(psi)
        for i in range(5):
            for j in range(i + 1, 5):
                assert np.max(np.abs(core.partial_trace(rho, [i, j]) - np.eye(4) / 4)) <= 1e-12


def test_ring_d2_is_five_bits():
    ring = core.projector(expfam.ring_cluster_5())
    proj = expfam.info_projection(ring, 2)
    assert np.allclose(proj.state, np.eye(32) / 32)
    assert expfam.d_k(ring, 2) == pytest.approx(5, abs=1e-9)


def test_exclusion_examples():
    ring = core.projector(expfam.ring_cluster_5())
    r = expfam.thermal_exclusion_check(ring)
    assert r.fidelity == pytest.approx(1) and r.excluded
    r = expfam.thermal_exclusion_check(np.eye(32) / 32)
    assert r.fidelity == pytest.approx(1 / 32) and not r.excluded
    r = expfam.thermal_exclusion_check(0.97 * ring + 0.03 * np.eye(32) / 32)
    assert r.fidelity == pytest.approx(0.97 + 0.03 / 32)
    assert r.excluded
    assert expfam.EXCLUSION_THRESHOLD == 0.96875
    with pytest.raises(ValueError):
        expfam.thermal_exclusion_check(np.eye(8) / 8)


def test_exclusion_boundary():
    ring = core.projector(expfam.ring_cluster_5())
    # white-noise weight q gives F = 1 - q + q/32; F = 31/32 at q = 1/31
    q = 1 / 31
    for delta, expect in ((-1e-6, True), (1e-6, False)):
        rho = (1 - q - delta) * ring + (q + delta) * np.eye(32) / 32
        assert expfam.thermal_exclusion_check(rho).excluded == expect


def test_exclusion_in_printed_frame():
    printed = core.projector(expfam.ring_cluster_5_printed())
    assert not expfam.thermal_exclusion_check(printed).excluded
    r = expfam.thermal_exclusion_check(printed, target=expfam.ring_cluster_5_printed())
    assert r.excluded and r.fidelity == pytest.approx(1)


def test_high_fidelity_states_have_higher_entropy_projection():
    rng = np.random.default_rng(6)
    ring = core.projector(expfam.ring_cluster_5())
    for _ in range(3):
        rho = 0.975 * ring + 0.025 * core.random_density(5, rng)
        assert expfam.thermal_exclusion_check(rho).excluded
        proj = expfam.info_projection(rho, 2)
        assert core.vn_entropy(rho) < core.vn_entropy(proj.state)
