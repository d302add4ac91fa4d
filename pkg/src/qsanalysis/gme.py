"""The PPT criterion and the PPT-mixture witness program built on it."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import core, sdp

VERDICT_THRESHOLD = 1e-6
SOLVER_TOL = 1e-7
PPT_MIXTURE = "ppt_mixture"
GME = "genuinely_multipartite_entangled"


class GmeSolverError(RuntimeError):
    def __init__(self, message, problem=None, solution=None):
        super().__init__(message)
        self.problem = problem
        self.solution = solution


class InconsistentDataError(ValueError):
    """No quantum state reproduces the given expectation values."""


@dataclass(frozen=True)
class Bipartition:
    side_a: tuple[int, ...]
    n: int

    def __post_init__(self):
        a = tuple(sorted(set(self.side_a)))
        if not a or len(a) >= self.n or a[0] < 0 or a[-1] >= self.n:
            raise ValueError(f"side {self.side_a} is not a nonempty proper subset of {self.n} qubits")
        object.__setattr__(self, "side_a", a)

    @property
    def side_b(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.side_a)

    def __str__(self):
        letters = "ABCDEFGH"
        return "".join(letters[i] for i in self.side_a) + "|" + "".join(letters[i] for i in self.side_b)


def bipartitions(n: int) -> list[Bipartition]:
    """Every split of ``n`` qubits into two nonempty parts (``2**(n-1) - 1`` of them)."""
    out = []
    for size in range(1, n // 2 + 1):
        for a in itertools.combinations(range(n), size):
            # for even splits keep the half containing qubit 0 once
            if 2 * size == n and 0 not in a:
                continue
            out.append(Bipartition(a, n))
    return out


def _cut(cut, n):
    return cut if isinstance(cut, Bipartition) else Bipartition(tuple(cut), n)


def ppt_check(rho, cut) -> tuple[bool, float]:
    """``(is_ppt, min_eigenvalue)`` of the partial transpose across ``cut``."""
    rho = core.density_matrix(rho)
    cut = _cut(cut, core.num_qubits(rho.shape[0]))
    lmin = float(np.linalg.eigvalsh(core.partial_transpose(rho, cut.side_a))[0])
    return lmin >= -core.PSD_TOL, lmin


def negativity(rho, cut) -> float:
    """Sum of the magnitudes of the negative eigenvalues of the partial transpose."""
    rho = core.density_matrix(rho)
    cut = _cut(cut, core.num_qubits(rho.shape[0]))
    w = np.linalg.eigvalsh(core.partial_transpose(rho, cut.side_a))
    return float(-np.sum(w[w < -core.PSD_TOL]))


@dataclass
class GmeCertificate:
    value: float
    witness: np.ndarray
    decompositions: dict[str, tuple[np.ndarray, np.ndarray]]
    dual_gap: float
    verdict: str
    cuts: list[Bipartition] = field(default_factory=list)
    coefficients: np.ndarray | None = None
    solution: sdp.SdpSolution | None = field(default=None, repr=False)
    problem: sdp.SdpProblem | None = field(default=None, repr=False)

    @property
    def optimality_certified(self) -> bool:
        """False when only the primal witness is available (``dual_gap`` infinite)."""
        return bool(np.isfinite(self.dual_gap))

    def check(self, tol: float = 1e-6) -> list[str]:
        """Independent re-verification of the witness decompositions; returns problems found."""
        issues = []
        w = self.witness
        if np.max(np.abs(w - w.conj().T)) > tol:
            issues.append("witness is not Hermitian")
        for cut in self.cuts:
            p, q = self.decompositions[str(cut)]
            if np.max(np.abs(w - p - core.partial_transpose(q, cut.side_a))) > tol:
                issues.append(f"{cut}: W != P + Q^T")
            if np.linalg.eigvalsh(p)[0] < -10 * tol:
                issues.append(f"{cut}: P not positive")
            lq = np.linalg.eigvalsh(q)
            if lq[0] < -10 * tol or lq[-1] > 1 + 10 * tol:
                issues.append(f"{cut}: Q outside [0, 1]")
        verdict = GME if self.value < -VERDICT_THRESHOLD else PPT_MIXTURE
        if verdict != self.verdict:
            issues.append("verdict inconsistent with value")
        return issues


def _pptmix_problem(n: int, cuts: Sequence[Bipartition], witness_terms, objective) -> sdp.SdpProblem:
    """Shared structure: ``W - Q_m^{T_m} >= 0``, ``Q_m >= 0``, ``1 - Q_m >= 0``.

    ``witness_terms(offset_sign)`` builds the terms for ``W`` inside a block;
    the witness occupies variables ``[0, k)``.
    """
    d = 2**n
    k = objective.size
    blocks = []
    for m, cut in enumerate(cuts):
        off = k + m * d * d
        blocks.append(
            sdp.PsdBlock(d, witness_terms() + [sdp.HermitianTerm(off, d, cut.side_a, sign=-1.0)], name=f"P[{cut}]")
        )
        blocks.append(sdp.PsdBlock(d, [sdp.HermitianTerm(off, d)], name=f"Q[{cut}]"))
        blocks.append(sdp.PsdBlock(d, [sdp.HermitianTerm(off, d, sign=-1.0)], np.eye(d), name=f"1-Q[{cut}]"))
    n_vars = k + len(cuts) * d * d
    c = np.concatenate([objective, np.zeros(n_vars - k)])
    return sdp.SdpProblem(n_vars, c, blocks)


def _certificate(n, cuts, prob, sol, witness_of, coefficients=None) -> GmeCertificate:
    d = 2**n
    if sol.status == sdp.OPTIMAL:
        if not sdp.verify_certificate(prob, sol, SOLVER_TOL):
            raise GmeSolverError("solver certificate failed re-verification", prob, sol)
        return _assemble(n, cuts, prob, sol, witness_of, coefficients, sol.gap)
    failure = GmeSolverError(f"PPT-mixture program not solved: {sol.status} ({sol.message})", prob, sol)
    if sol.status != sdp.NUMERICAL_FAILURE or not np.isfinite(sol.primal_value):
        raise failure
    # Without a dual bound the optimum is unknown, but any feasible witness with
    # a negative value still proves entanglement. This happens when rho has a
    # kernel: P_m can then grow along it for free and the dual loses its interior.
    cert = _assemble(n, cuts, prob, sol, witness_of, coefficients, np.inf)
    if cert.verdict != GME or cert.check(VERDICT_THRESHOLD):
        raise failure
    return cert


def _assemble(n, cuts, prob, sol, witness_of, coefficients, gap) -> GmeCertificate:
    d = 2**n
    x = sol.x
    w = witness_of(x)
    k = prob.n_vars - len(cuts) * d * d
    decomp = {}
    for m, cut in enumerate(cuts):
        off = k + m * d * d
        q = sdp.hermitian_from_coordinates(x[off : off + d * d], d)
        p = w - core.partial_transpose(q, cut.side_a)
        decomp[str(cut)] = ((p + p.conj().T) / 2, (q + q.conj().T) / 2)
    value = sol.primal_value
    verdict = GME if value < -VERDICT_THRESHOLD else PPT_MIXTURE
    return GmeCertificate(value, w, decomp, gap, verdict, list(cuts), coefficients, sol, prob)


def pptmix_sdp(rho, cuts: Sequence[Bipartition] | None = None, tol: float = SOLVER_TOL) -> GmeCertificate:
    """Minimize ``tr(rho W)`` over witnesses decomposable for every bipartition.

    ``cuts`` defaults to all bipartitions; passing a subset gives the
    corresponding relaxation (for a single cut it is the bipartite PPT test).
    """
    rho = core.density_matrix(rho)
    n = core.num_qubits(rho.shape[0])
    if not 2 <= n <= 5:
        raise ValueError(f"PPT-mixture program supports 2 to 5 qubits, got {n}")
    cuts = bipartitions(n) if cuts is None else [_cut(c, n) for c in cuts]
    d = 2**n
    obj = sdp.hermitian_coordinates(rho)
    prob = _pptmix_problem(n, cuts, lambda: [sdp.HermitianTerm(0, d)], obj)
    sol = sdp.solve(prob, tol)
    return _certificate(n, cuts, prob, sol, lambda x: sdp.hermitian_from_coordinates(x[: d * d], d))


def genuine_negativity(rho, tol: float = SOLVER_TOL) -> float:
    """``max(0, -tr(rho W))`` at the optimum of the PPT-mixture program."""
    cert = pptmix_sdp(rho, tol=tol)
    if not cert.optimality_certified:
        raise GmeSolverError("optimum not certified; only a witness value is available", cert.problem, cert.solution)
    return max(0.0, -cert.value)


def state_matching_expectations(observables, means, n: int, tol: float = SOLVER_TOL):
    """Find a state with ``tr(rho A_i) = means[i]``; returns ``(rho, min_eig_margin)``.

    The margin is the optimal ``-t`` of ``minimize t s.t. rho + t*1 >= 0``
    under the linear constraints. A negative margin beyond ``tol`` means the
    data are inconsistent with every quantum state.
    """
    d = 2**n
    obs = [core.hermitian(a) for a in observables]
    rows = [sdp.hermitian_coordinates(np.eye(d))] + [sdp.hermitian_coordinates(a) for a in obs]
    vals = [1.0] + [float(m) for m in means]
    a = np.array([np.concatenate([r, [0.0]]) for r in rows])
    c = np.zeros(d * d + 1)
    c[-1] = 1.0
    block = sdp.PsdBlock(d, [sdp.HermitianTerm(0, d), sdp.DenseTerm(d * d, np.eye(d)[None])], name="rho + t")
    # lower bound on t keeps the program bounded when the data pin down a PSD state
    prob = sdp.SdpProblem(d * d + 1, c, [block], eq_A=a, eq_b=np.array(vals), lower=np.r_[np.full(d * d, -np.inf), -1.0])
    sol = sdp.solve(prob, tol)
    if sol.status == sdp.INFEASIBLE:
        return None, -np.inf
    if sol.status != sdp.OPTIMAL:
        raise GmeSolverError(f"consistency check failed: {sol.status} ({sol.message})", prob, sol)
    rho = sdp.hermitian_from_coordinates(sol.x[: d * d], d)
    return rho, -sol.primal_value


def pptmix_from_expectations(observables, means, n: int, cuts=None, tol: float = SOLVER_TOL) -> GmeCertificate:
    """PPT-mixture program with the witness restricted to ``span{A_i}``.

    The objective is ``sum_i lambda_i <A_i>``. A negative value shows that no
    state compatible with the data is a PPT mixture.
    """
    if not 2 <= n <= 5:
        raise ValueError(f"PPT-mixture program supports 2 to 5 qubits, got {n}")
    obs = np.array([core.hermitian(a) for a in observables])
    means = np.asarray(means, dtype=float)
    if obs.shape[0] != means.size:
        raise ValueError("need exactly one mean per observable")
    for a, m in zip(obs, means):
        if abs(m) > np.max(np.abs(np.linalg.eigvalsh(a))) + 1e-9:
            raise InconsistentDataError(f"mean {m} exceeds the operator norm of its observable")
    _, margin = state_matching_expectations(obs, means, n, tol)
    if margin < -10 * tol:
        raise InconsistentDataError(f"no quantum state matches the expectation values (margin {margin:.3g})")
    cuts = bipartitions(n) if cuts is None else [_cut(c, n) for c in cuts]
    prob = _pptmix_problem(n, cuts, lambda: [sdp.DenseTerm(0, obs)], means)
    sol = sdp.solve(prob, tol)
    k = obs.shape[0]
    return _certificate(n, cuts, prob, sol, lambda x: np.einsum("i,ijk->jk", x[:k], obs), coefficients=sol.x[:k].copy())
