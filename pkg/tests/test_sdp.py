import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsanalysis import core, sdp


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def random_lmi(rng, n_vars=3, dims=(2, 3)):
    """Strictly primal and dual feasible LMI, hence with finite optimum."""
    x0 = rng.normal(size=n_vars)
    blocks, c = [], np.zeros(n_vars)
    for d in dims:
        mats = np.array([random_hermitian(rng, d) for _ in range(n_vars)])
        s0 = np.eye(d) + 0.1 * random_hermitian(rng, d) @ random_hermitian(rng, d).conj().T
        f0 = s0 - np.einsum("i,ijk->jk", x0, mats)
        blocks.append(sdp.PsdBlock(d, [sdp.DenseTerm(0, mats)], (f0 + f0.conj().T) / 2))
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        z0 = g @ g.conj().T + np.eye(d)
        c += np.real(np.einsum("ijk,kj->i", mats, z0))
    return sdp.SdpProblem(n_vars, c, blocks)


def test_eigenvalue_example():
    p = sdp.max_eigenvalue_problem(core.pauli_matrix("z"))
    s = sdp.solve(p)
    assert s.status == sdp.OPTIMAL
    assert s.primal_value == pytest.approx(1, abs=1e-6)
    assert sdp.verify_certificate(p, s)


def test_forced_diagonal_example():
    d = 3
    term = sdp.HermitianTerm(0, d)
    e11 = np.zeros((d, d))
    e11[0, 0] = 1
    p = sdp.SdpProblem(
        d * d,
        sdp.hermitian_coordinates(np.eye(d)),
        [sdp.PsdBlock(d, [term])],
        eq_A=sdp.hermitian_coordinates(e11)[None],
        eq_b=[1.0],
    )
    s = sdp.solve(p)
    assert s.status == sdp.OPTIMAL
    assert s.primal_value == pytest.approx(1, abs=1e-6)
    assert sdp.verify_certificate(p, s)


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
@settings(max_examples=20, deadline=None)
def test_max_eigenvalue_matches_eigensolver(seed, d):
    a = random_hermitian(np.random.default_rng(seed), d)
    p = sdp.max_eigenvalue_problem(a)
    s = sdp.solve(p)
    assert s.status == sdp.OPTIMAL
    assert s.primal_value == pytest.approx(core.eig_hermitian(a, "jacobi")[0][-1], abs=1e-6)
    assert sdp.verify_certificate(p, s)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_weak_duality_random_lmis(seed):
    p = random_lmi(np.random.default_rng(seed))
    s = sdp.solve(p)
    assert s.dual_value <= s.primal_value + 1e-12
    assert s.status == sdp.OPTIMAL
    assert sdp.verify_certificate(p, s)


@pytest.mark.parametrize("scale", [0.1, 10.0])
def test_objective_scaling(scale):
    p = random_lmi(np.random.default_rng(3))
    s = sdp.solve(p)
    q = copy.deepcopy(p)
    q.c = q.c * scale
    t = sdp.solve(q)
    tol = sdp.DEFAULT_TOL * max(1, scale) * 10
    assert t.primal_value == pytest.approx(scale * s.primal_value, abs=tol)
    assert t.dual_value == pytest.approx(scale * s.dual_value, abs=tol)


def test_deterministic():
    p = random_lmi(np.random.default_rng(4))
    a, b = sdp.solve(p), sdp.solve(p)
    assert a.primal_value == b.primal_value
    assert np.array_equal(a.x, b.x)


def test_infeasible_and_unbounded():
    z = core.pauli_matrix("z")
    block = sdp.PsdBlock(2, [sdp.DenseTerm(0, np.eye(2)[None])], -z)
    s = sdp.solve(sdp.SdpProblem(1, [1.0], [block], upper=[0.5]))
    assert s.status == sdp.INFEASIBLE
    assert s.dual_value <= s.primal_value
    free = sdp.PsdBlock(2, [sdp.DenseTerm(0, np.eye(2)[None])])
    s = sdp.solve(sdp.SdpProblem(1, [-1.0], [free]))
    assert s.status == sdp.INFEASIBLE
    assert s.certificate == "dual"
    assert not sdp.verify_certificate(sdp.SdpProblem(1, [-1.0], [free]), s)


def test_verify_rejects_violated_psd():
    p = sdp.max_eigenvalue_problem(core.pauli_matrix("z"))
    s = sdp.solve(p)
    bad = copy.deepcopy(s)
    # push the block t*I - Z to eigenvalue -10*tol*100
    bad.x = s.x - (1 + 10 * sdp.DEFAULT_TOL * 100)
    assert not sdp.verify_certificate(p, bad)


def test_verify_rejects_perturbed_duals():
    p = random_lmi(np.random.default_rng(5))
    s = sdp.solve(p)
    assert sdp.verify_certificate(p, s)
    bad = copy.deepcopy(s)
    bad.dual_blocks[0] = bad.dual_blocks[0] + 1e-4 * np.eye(bad.dual_blocks[0].shape[0])
    assert not sdp.verify_certificate(p, bad)


def test_hermitian_term_with_partial_transpose():
    rng = np.random.default_rng(6)
    h = random_hermitian(rng, 4)
    term = sdp.HermitianTerm(0, 4, transpose=[1], sign=-1.0)
    out = term.apply(sdp.hermitian_coordinates(h)).reshape(4, 4)
    assert np.allclose(out, -core.partial_transpose(h, [1]))
    # adjoint consistency: <T(x), Z> = <x, T*(Z)>
    zmat = random_hermitian(rng, 4)
    x = rng.normal(size=16)
    lhs = np.real(np.vdot(zmat.ravel(), term.apply(x)))
    assert lhs == pytest.approx(x @ term.adjoint(zmat.ravel()))


def test_coordinate_round_trip():
    h = random_hermitian(np.random.default_rng(7), 8)
    assert np.allclose(sdp.hermitian_from_coordinates(sdp.hermitian_coordinates(h), 8), h)
    a, b = random_hermitian(np.random.default_rng(8), 8), h
    assert np.real(np.trace(a @ b)) == pytest.approx(sdp.hermitian_coordinates(a) @ sdp.hermitian_coordinates(b))


def test_problem_validation():
    with pytest.raises(sdp.SdpError):
        sdp.SdpProblem(2, [1.0], [])
    with pytest.raises(sdp.SdpError):
        sdp.PsdBlock(128, [])
