"""Dense Hermitian operator algebra for small qubit registers.

Operators are plain complex ``numpy`` arrays. Qubit 0 is the leftmost tensor
factor (most significant bit of the computational-basis index). Entropies are
measured in bits.
"""

from __future__ import annotations

import itertools
from functools import lru_cache, reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_QUBITS = 6
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
ZERO_EIG = 1e-14
SUPPORT_TOL = 1e-12

PAULI_LABELS = "0xyz"

_PAULI = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# Accept the common aliases on input; labels are always emitted as 0/x/y/z.
_ALIASES = {"i": "0", "I": "0", "X": "x", "Y": "y", "Z": "z"}


class NotHermitianError(ValueError):
    pass


class InvalidStateError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    pass


def num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    if n > MAX_QUBITS:
        raise ValueError(f"{n} qubits exceeds the supported maximum of {MAX_QUBITS}")
    return n


def hermitian(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``a`` as a Hermitian complex array.

    Small asymmetries (at most ``tol`` elementwise) are symmetrized away;
    anything larger raises :class:`NotHermitianError`.
    """
    a = np.array(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {a.shape}")
    num_qubits(a.shape[0])
    asym = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if asym > tol:
        raise NotHermitianError(f"matrix deviates from Hermitian by {asym:.3g}")
    return (a + a.conj().T) / 2


def density_matrix(a, tol: float = PSD_TOL) -> np.ndarray:
    """Validate a density operator: Hermitian, unit trace, no eigenvalue below ``-tol``."""
    rho = hermitian(a)
    tr = np.trace(rho).real
    if abs(tr - 1) > TRACE_TOL:
        raise InvalidStateError(f"trace is {tr!r}, expected 1")
    lmin = np.linalg.eigvalsh(rho)[0]
    if lmin < -tol:
        raise InvalidStateError(f"smallest eigenvalue {lmin:.3g} is negative")
    return rho


def ket(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("010")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def ghz_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def maximally_mixed(n: int) -> np.ndarray:
    return np.eye(2**n, dtype=complex) / 2**n


def tensor(*ops) -> np.ndarray:
    """Kronecker product of the given operators (or vectors), left to right."""
    if len(ops) == 1 and not isinstance(ops[0], np.ndarray):
        ops = tuple(ops[0])
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def _normalize_label(label: str) -> str:
    return "".join(_ALIASES.get(c, c) for c in label)


@lru_cache(maxsize=4096)
def _pauli_cached(label: str) -> np.ndarray:
    m = tensor([_PAULI[c] for c in label])
    m.setflags(write=False)
    return m


def pauli_matrix(label: str) -> np.ndarray:
    """Matrix of a Pauli string such as ``"x0z"`` (``0`` is the identity)."""
    label = _normalize_label(label)
    if not label or any(c not in PAULI_LABELS for c in label):
        raise ValueError(f"invalid Pauli label {label!r}")
    return _pauli_cached(label)


def pauli_weight(label: str) -> int:
    return sum(c != "0" for c in _normalize_label(label))


def pauli_labels(n: int, min_weight: int = 0, max_weight: int | None = None) -> list[str]:
    """All Pauli strings on ``n`` qubits with weight in ``[min_weight, max_weight]``."""
    if max_weight is None:
        max_weight = n
    out = []
    for t in itertools.product(PAULI_LABELS, repeat=n):
        w = sum(c != "0" for c in t)
        if min_weight <= w <= max_weight:
            out.append("".join(t))
    return out


def pauli_expand(a, drop_tol: float = 1e-14) -> dict[str, float]:
    """Coefficients ``tr(a P) / 2**n`` of a Hermitian operator in the Pauli basis.

    Entries with magnitude below ``drop_tol`` are omitted.
    """
    a = hermitian(a)
    n = num_qubits(a.shape[0])
    out = {}
    for label in pauli_labels(n):
        # tr(a P) = sum_ij a_ij P_ji; P Hermitian so P_ji = conj(P_ij)
        c = np.vdot(pauli_matrix(label), a).real / 2**n
        if abs(c) > drop_tol:
            out[label] = float(c)
    return out


def pauli_assemble(coefficients: Mapping[str, float], n: int | None = None) -> np.ndarray:
    """Inverse of :func:`pauli_expand`: ``sum_P c_P P``."""
    if not coefficients and n is None:
        raise ValueError("cannot infer the qubit count from an empty expansion")
    if n is None:
        n = len(next(iter(coefficients)))
    out = np.zeros((2**n, 2**n), dtype=complex)
    for label, c in coefficients.items():
        if len(label) != n:
            raise ValueError(f"label {label!r} does not act on {n} qubits")
        out += c * pauli_matrix(label)
    return out


def _check_subsystems(indices: Iterable[int], n: int) -> list[int]:
    idx = sorted(set(int(i) for i in indices))
    if idx and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError(f"subsystem indices {idx} out of range for {n} qubits")
    return idx


def partial_transpose(rho, mask: Iterable[int]) -> np.ndarray:
    """Transpose the tensor factors listed in ``mask``."""
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[0])
    mask = _check_subsystems(mask, n)
    t = rho.reshape((2,) * (2 * n))
    axes = list(range(2 * n))
    for i in mask:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return t.transpose(axes).reshape(rho.shape)


def partial_transpose_indices(n: int, mask: Iterable[int]) -> np.ndarray:
    """Permutation ``p`` of flattened (row-major) entries with ``pt(a).ravel() == a.ravel()[p]``."""
    idx = np.arange(4**n).reshape(2**n, 2**n)
    return partial_transpose(idx, mask).real.astype(np.int64).ravel()


def partial_trace(rho, keep: Iterable[int]) -> np.ndarray:
    """Reduced operator on the qubits in ``keep`` (order of ``keep`` is ignored)."""
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[0])
    keep = _check_subsystems(keep, n)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if len(keep) == n:
        return rho.copy()
    traced = [i for i in range(n) if i not in keep]
    t = rho.reshape((2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    r = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    d = 2 ** len(keep)
    return r.reshape(d, d)


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.

    Returns ascending eigenvalues and a unitary matrix of column eigenvectors.
    Convergence is declared when the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||a||_F)``.
    """
    a = np.array(hermitian(a), dtype=complex)
    dim = a.shape[0]
    v = np.eye(dim, dtype=complex)
    scale = max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(dim - 1):
            for q in range(p + 1, dim):
                apq = a[p, q]
                b = abs(apq)
                if b < 1e-300:
                    continue
                phase = apq / b
                tau = (a[q, q].real - a[p, p].real) / (2 * b)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1 / np.hypot(1.0, t)
                s = t * c
                u = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                cols = [p, q]
                a[:, cols] = a[:, cols] @ u
                a[cols, :] = u.conj().T @ a[cols, :]
                a[p, q] = a[q, p] = 0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, cols] = v[:, cols] @ u
    else:
        raise EigenConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).real
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eig_hermitian(a, method: str = "lapack"):
    """Eigenvalues (ascending) and unitary eigenvectors of a Hermitian matrix.

    ``method="jacobi"`` uses :func:`jacobi_eigh`; the default defers to LAPACK.
    """
    if method == "jacobi":
        return jacobi_eigh(a)
    if method != "lapack":
        raise ValueError(f"unknown eigen method {method!r}")
    a = hermitian(a)
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(str(exc)) from exc


def _entropy_of_spectrum(w: np.ndarray) -> float:
    w = w[w > ZERO_EIG]
    return float(-np.sum(w * np.log2(w))) if w.size else 0.0


def vn_entropy(rho) -> float:
    """Von Neumann entropy in bits."""
    w = np.linalg.eigvalsh(hermitian(rho))
    return _entropy_of_spectrum(w)


def relative_entropy(rho, eta) -> float:
    """``D(rho||eta)`` in bits; ``inf`` if the support of ``rho`` is not inside that of ``eta``."""
    rho = hermitian(rho)
    eta = hermitian(eta)
    if rho.shape != eta.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {eta.shape}")
    wr = np.linalg.eigvalsh(rho)
    we, ve = np.linalg.eigh(eta)
    kernel = ve[:, we <= SUPPORT_TOL]
    if kernel.shape[1] and np.real(np.trace(kernel.conj().T @ rho @ kernel)) > SUPPORT_TOL:
        return float("inf")
    support = we > SUPPORT_TOL
    vs = ve[:, support]
    # diagonal of rho in eta's eigenbasis, restricted to the support
    weights = np.real(np.einsum("ij,ik,kj->j", vs.conj(), rho, vs))
    cross = float(np.sum(weights * np.log2(we[support])))
    value = -_entropy_of_spectrum(wr) - cross
    # rounding can push D(rho||rho) a hair below zero
    return 0.0 if -1e-12 < value < 0 else value


def fidelity_pure(psi, rho) -> float:
    """Raw ``<psi|rho|psi>``; not clamped, so linear estimates keep their sign."""
    psi = np.asarray(psi, dtype=complex).ravel()
    rho = np.asarray(rho, dtype=complex)
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("state vector is not normalized")
    if rho.shape != (psi.size, psi.size):
        raise ValueError(f"dimension mismatch: vector of length {psi.size}, operator {rho.shape}")
    return float(np.vdot(psi, rho @ psi).real)


def clamp_unit(x: float) -> float:
    return min(1.0, max(0.0, x))


def matrix_function(a, fn) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum."""
    w, v = np.linalg.eigh(hermitian(a))
    return (v * fn(w)) @ v.conj().T


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random state from the Ginibre ensemble (full rank unless ``rank`` is given)."""
    d = 2**n
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return v / np.linalg.norm(v)


def local_unitary(unitaries: Sequence[np.ndarray]) -> np.ndarray:
    return tensor(list(unitaries))
