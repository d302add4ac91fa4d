"""Exponential families of local Hamiltonians and information projections.

``Q_k`` is the set of thermal states ``exp(H)/tr exp(H)`` with ``H`` a sum of
Pauli strings of weight at most ``k``. The information projection of ``rho``
onto ``Q_k`` is the member with the same weight-``<=k`` Pauli expectations,
which is also the maximum-entropy state with those marginals. ``D_k`` is the
relative entropy (in bits) from ``rho`` to its projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import core

H_MAX = 50.0
THETA_CAP = 50.0
EXCLUSION_THRESHOLD = 31 / 32
LN2 = math.log(2)


class ProjectionNotConverged(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class LocalHamiltonian:
    """``H = sum_P theta_P P + nu 1`` over Pauli strings of weight ``1..k``.

    ``nu`` is fixed by normalization, ``nu = -ln tr exp(sum theta_P P)``, so
    that ``exp(H)`` is a state.
    """

    n: int
    k: int
    coefficients: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"locality {self.k} must lie between 1 and {self.n}")
        clean = {}
        for label, v in self.coefficients.items():
            label = "".join(core._normalize_label(c) for c in label)
            if len(label) != self.n:
                raise ValueError(f"Pauli string {label!r} does not act on {self.n} qubits")
            w = core.pauli_weight(label)
            if not 1 <= w <= self.k:
                raise ValueError(f"Pauli string {label!r} has weight {w}, outside 1..{self.k}")
            if not np.isfinite(v):
                raise ValueError(f"coefficient of {label!r} is not finite")
            clean[label] = float(v)
        self.coefficients = clean

    @classmethod
    def from_vector(cls, n: int, k: int, labels, theta) -> "LocalHamiltonian":
        return cls(n, k, {p: float(t) for p, t in zip(labels, theta)})

    def vector(self, labels) -> np.ndarray:
        return np.array([self.coefficients.get(p, 0.0) for p in labels])

    def traceless(self) -> np.ndarray:
        d = 2**self.n
        h = np.zeros((d, d), dtype=complex)
        for label, v in self.coefficients.items():
            h += v * core.pauli_matrix(label)
        return h

    @property
    def nu(self) -> float:
        return -_log_partition(np.linalg.eigvalsh(self.traceless()))

    def matrix(self) -> np.ndarray:
        """The normalized ``H`` with ``tr exp(H) = 1``."""
        return self.traceless() + self.nu * np.eye(2**self.n)


def _log_partition(w: np.ndarray) -> float:
    top = float(np.max(w))
    return top + math.log(float(np.sum(np.exp(w - top))))


def thermal_state(h: LocalHamiltonian | np.ndarray) -> np.ndarray:
    """``exp(H)/tr exp(H)`` via an eigendecomposition; rejects ``max |H_ij| > 50``."""
    hm = h.traceless() if isinstance(h, LocalHamiltonian) else core.hermitian(h)
    if not np.all(np.isfinite(hm)):
        raise ValueError("Hamiltonian has non-finite entries")
    if np.max(np.abs(hm)) > H_MAX:
        raise ValueError(f"Hamiltonian entries exceed {H_MAX} in magnitude; refusing to exponentiate")
    w, v = np.linalg.eigh(hm)
    p = np.exp(w - w.max())
    p /= p.sum()
    rho = (v * p) @ v.conj().T
    return (rho + rho.conj().T) / 2


def _pauli_stack(n: int, k: int) -> tuple[list[str], np.ndarray]:
    labels = core.pauli_labels(n, 1, k)
    return labels, np.array([core.pauli_matrix(p) for p in labels])


def marginal_expectations(rho, k: int) -> dict[str, float]:
    """``tr(rho P)`` for every Pauli string of weight ``1..k``."""
    rho = np.asarray(rho, dtype=complex)
    n = core.num_qubits(rho.shape[0])
    if not 1 <= k <= n:
        raise ValueError(f"k must lie between 1 and {n}")
    labels, stack = _pauli_stack(n, k)
    vals = np.real(np.einsum("pij,ji->p", stack, rho))
    return dict(zip(labels, vals.tolist()))


@dataclass
class InfoProjection:
    state: np.ndarray
    hamiltonian: LocalHamiltonian
    marginal_residual: float
    iterations: int
    converged: bool
    tol: float
    message: str = ""


def _thermal_moments(theta, stack):
    """Thermal state of ``exp(sum theta P)`` with its moments and Kubo-Mori covariance."""
    h = np.einsum("p,pij->ij", theta, stack)
    w, v = np.linalg.eigh(h)
    lz = _log_partition(w)
    p = np.exp(w - lz)
    rho = (v * p) @ v.conj().T
    rot = np.einsum("ai,pab,bj->pij", v.conj(), stack, v)  # P in the eigenbasis
    diag = np.real(np.einsum("pii->pi", rot))
    mean = diag @ p
    # divided differences of exp at the eigenvalues give the Hessian of ln Z
    dw = w[:, None] - w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = np.where(np.abs(dw) > 1e-9, (p[:, None] - p[None, :]) / dw, (p[:, None] + p[None, :]) / 2)
    flat = rot.reshape(len(theta), -1)
    hess = np.real((flat * kern.ravel()) @ flat.conj().T) - np.outer(mean, mean)
    return rho, mean, (hess + hess.T) / 2, lz


def info_projection(
    rho,
    k: int,
    tol: float = 1e-6,
    max_iter: int = 5000,
    theta0: np.ndarray | None = None,
) -> InfoProjection:
    """Thermal state of a ``k``-local Hamiltonian with the same weight-``<=k`` expectations as ``rho``.

    Minimizes the convex dual ``ln Z(theta) - theta . m`` by damped Newton
    steps (Kubo-Mori Hessian, backtracking line search). Coefficients are
    kept within ``|theta_P| <= 50``; if the target marginals are only reached
    in the closure of the family the best iterate is returned unconverged.
    """
    rho = core.density_matrix(rho)
    n = core.num_qubits(rho.shape[0])
    if not 1 <= k <= n:
        raise ValueError(f"k must lie between 1 and {n}")
    labels, stack = _pauli_stack(n, k)
    target = np.real(np.einsum("pij,ji->p", stack, rho))
    theta = np.zeros(len(labels)) if theta0 is None else np.asarray(theta0, dtype=float).copy()

    def dual(th):
        h = np.einsum("p,pij->ij", th, stack)
        return _log_partition(np.linalg.eigvalsh(h)) - th @ target

    state, mean, hess, lz = _thermal_moments(theta, stack)
    f = lz - theta @ target
    it = 0
    converged = False
    message = ""
    for it in range(1, max_iter + 1):
        grad = mean - target
        resid = float(np.max(np.abs(grad)))
        if resid <= tol:
            converged = True
            it -= 1
            break
        # small Levenberg shift keeps the step defined when the Hessian is singular
        shift = 1e-12 * max(1.0, float(np.trace(hess)))
        try:
            step = -np.linalg.solve(hess + shift * np.eye(len(theta)), grad)
        except np.linalg.LinAlgError:
            step = -grad
        if step @ grad >= 0:
            step = -grad
        t = 1.0
        accepted = False
        while t > 1e-12:
            cand = np.clip(theta + t * step, -THETA_CAP, THETA_CAP)
            fc = dual(cand)
            if fc <= f + 1e-4 * t * (grad @ step) or (fc < f and t < 1e-6):
                accepted = True
                break
            t /= 2
        if not accepted or np.array_equal(cand, theta):
            message = "line search stalled"
            break
        theta = cand
        state, mean, hess, lz = _thermal_moments(theta, stack)
        f = lz - theta @ target
    resid = float(np.max(np.abs(mean - target)))
    converged = resid <= tol
    if not converged and not message:
        message = "coefficient cap reached" if np.max(np.abs(theta)) >= THETA_CAP else "iteration cap reached"
    ham = LocalHamiltonian.from_vector(n, k, labels, theta)
    state = (state + state.conj().T) / 2
    return InfoProjection(state, ham, resid, it, converged, tol, message)


def _relative_entropy_to_family(rho, proj: InfoProjection) -> float:
    """``D(rho || exp(H))`` in bits using the Hamiltonian directly (no matrix log)."""
    h = proj.hamiltonian
    labels = list(h.coefficients)
    theta = np.array([h.coefficients[p] for p in labels])
    ev = np.array([np.real(np.trace(rho @ core.pauli_matrix(p))) for p in labels]) if labels else np.zeros(0)
    return (-core.vn_entropy(rho) * LN2 - (theta @ ev + h.nu)) / LN2


def d_k(rho, k: int, tol: float = 1e-6, max_iter: int = 5000, require_convergence: bool = True) -> float:
    """``D_k(rho) = D(rho || rho_k)`` in bits, where ``rho_k`` is the information projection.

    Cross-checked against ``S(rho_k) - S(rho)``, which must agree because the
    marginals match.
    """
    rho = core.density_matrix(rho)
    proj = info_projection(rho, k, tol, max_iter)
    if require_convergence and not proj.converged:
        raise ProjectionNotConverged(
            f"information projection did not converge ({proj.message}; residual {proj.marginal_residual:.3g})", proj
        )
    direct = _relative_entropy_to_family(rho, proj)
    via_entropy = core.vn_entropy(proj.state) - core.vn_entropy(rho)
    # the two formulas differ by theta . (marginal mismatch) / ln 2
    slack = 1e-6 + np.sum(np.abs(proj.hamiltonian.vector(list(proj.hamiltonian.coefficients)))) * proj.marginal_residual / LN2
    if proj.converged and abs(direct - via_entropy) > slack:
        raise RuntimeError(f"D_k cross-check failed: {direct} vs {via_entropy}")
    return max(direct, 0.0)


def product_of_marginals(rho) -> np.ndarray:
    """``rho_1 (x) rho_2 (x) ... (x) rho_n``, the closed-form projection onto ``Q_1``."""
    rho = core.density_matrix(rho)
    n = core.num_qubits(rho.shape[0])
    return core.tensor([core.partial_trace(rho, [i]) for i in range(n)])


def d1_closed_form(rho) -> float:
    """``sum_i S(rho_i) - S(rho)`` in bits."""
    rho = core.density_matrix(rho)
    n = core.num_qubits(rho.shape[0])
    return sum(core.vn_entropy(core.partial_trace(rho, [i])) for i in range(n)) - core.vn_entropy(rho)


def pythagorean_residual(rho, eta, k: int, tol: float = 1e-8) -> float:
    """``|D(rho||eta) - D(rho||rho_k) - D(rho_k||eta)|`` for ``eta`` in ``Q_k``."""
    rho = core.density_matrix(rho)
    eta = core.density_matrix(eta)
    proj = info_projection(rho, k, tol)
    rk = proj.state
    return abs(core.relative_entropy(rho, eta) - core.relative_entropy(rho, rk) - core.relative_entropy(rk, eta))


RING_STABILIZERS = ("xz00z", "zxz00", "0zxz0", "00zxz", "z00zx")

_PRINTED_RING = {
    "00000": 1,
    "00110": 1,
    "01011": -1,
    "01101": 1,
    "10001": 1,
    "10111": -1,
    "11010": 1,
    "11100": 1,
}


def ring_cluster_5() -> np.ndarray:
    """Five-qubit ring graph state, the joint +1 eigenvector of :data:`RING_STABILIZERS`.

    Built as ``prod_i CZ_{i,i+1} |+>^5`` on the ring.
    """
    n = 5
    bits = (np.arange(32)[:, None] >> (n - 1 - np.arange(n))) & 1
    phase = np.ones(32)
    for i in range(n):
        j = (i + 1) % n
        phase *= np.where(bits[:, i] & bits[:, j], -1.0, 1.0)
    return phase.astype(complex) / math.sqrt(32)


def ring_cluster_5_printed() -> np.ndarray:
    """The eight-term form ``(|00000> + |00110> - |01011> + ...)/sqrt 8``.

    It equals ``H (x) 1 (x) H (x) 1 (x) 1`` applied to :func:`ring_cluster_5`,
    i.e. the same state in a locally rotated frame.
    """
    psi = np.zeros(32, dtype=complex)
    for b, s in _PRINTED_RING.items():
        psi[int(b, 2)] = s / math.sqrt(8)
    return psi


def printed_frame_unitary() -> np.ndarray:
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    i2 = np.eye(2)
    return core.tensor(h, i2, h, i2, i2)


@dataclass
class ExclusionResult:
    fidelity: float
    excluded: bool
    threshold: float = EXCLUSION_THRESHOLD


def thermal_exclusion_check(rho, target=None) -> ExclusionResult:
    """Fidelity with the ring-cluster state and whether it reaches ``31/32``.

    A state with ``F >= 31/32`` cannot be a thermal state of any two-body
    Hamiltonian. ``target`` may replace the stabilizer-frame ring state, e.g.
    by :func:`ring_cluster_5_printed` for data taken in that frame.
    """
    rho = core.density_matrix(rho)
    if rho.shape != (32, 32):
        raise ValueError("the ring-cluster check needs a five-qubit state")
    psi = ring_cluster_5() if target is None else np.asarray(target, dtype=complex)
    f = core.fidelity_pure(psi, rho)
    return ExclusionResult(f, f >= EXCLUSION_THRESHOLD)
