"""State estimation from count data.

Linear inversion is unbiased but may return an indefinite matrix; maximum
likelihood always returns a state and is therefore biased near the boundary
of state space. The bias harness and the Hoeffding fidelity bound live here
as well.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import core, sdp
from .model import CountData, MeasurementModel, sample_counts

RANK_TOL = 1e-10
CERT_TOL = 1e-9
PROB_FLOOR = 1e-12


class TomographicallyIncompleteError(ValueError):
    def __init__(self, missing: Sequence[str]):
        self.missing = list(missing)
        super().__init__(f"measurement model is not tomographically complete; unmeasured Pauli directions: {', '.join(self.missing)}")


class NotInSpanError(ValueError):
    pass


def _pauli_frame(n: int) -> tuple[list[str], np.ndarray]:
    labels = core.pauli_labels(n)
    return labels, np.array([core.pauli_matrix(p) for p in labels])


def _design(model: MeasurementModel) -> tuple[list[str], np.ndarray, np.ndarray]:
    """``A[k, j] = tr(M_k P_j) / d`` so that ``p = A c`` with ``c_j = tr(rho P_j)``."""
    labels, paulis = _pauli_frame(model.n_qubits)
    d = model.dim
    a = np.real(np.einsum("kij,pji->kp", model.stacked, paulis)) / d
    return labels, paulis, a


def _missing_directions(b: np.ndarray, labels: Sequence[str]) -> list[str]:
    """Pauli strings that dominate the null space of ``b``."""
    _, sv, vt = np.linalg.svd(b)
    rank = int(np.sum(sv > RANK_TOL * max(sv.max(initial=0.0), 1.0)))
    null = vt[rank:]
    weight = np.sum(null**2, axis=0)
    order = np.argsort(-weight)
    return [labels[j] for j in order if weight[j] > 1e-6]


@dataclass
class ReconstructionOperators:
    """Operators ``X_{r|s}`` with ``sum X_{r|s} tr(rho M_{r|s}) = rho`` for every state."""

    model: MeasurementModel
    X: np.ndarray
    certificate_residual: float

    def apply(self, fvec) -> np.ndarray:
        return np.einsum("k,kij->ij", np.asarray(fvec, dtype=float), self.X)

    def table(self) -> dict[tuple[str, str], np.ndarray]:
        return dict(zip(self.model.index, self.X))


def build_reconstruction(model: MeasurementModel, check_states: int = 10, seed: int = 0) -> ReconstructionOperators:
    """Pseudoinverse of ``rho -> {tr(rho M_{r|s})}`` with the trace pinned to one.

    Writing ``rho = 1/d + sum_{j>0} c_j P_j / d`` the traceless part is
    recovered by least squares; the identity part is rewritten with the
    per-setting normalization ``sum_r F_{r|s} = 1`` so that the estimate is
    linear in the frequencies and has unit trace exactly.
    """
    labels, paulis, a = _design(model)
    d = model.dim
    b = a[:, 1:]
    if np.linalg.matrix_rank(b, tol=RANK_TOL * max(np.abs(b).max(), 1.0)) < b.shape[1]:
        raise TomographicallyIncompleteError(_missing_directions(b, labels[1:]))
    bp = np.linalg.pinv(b)  # (d^2 - 1, K)
    y = np.einsum("jk,jab->kab", bp, paulis[1:]) / d
    a0 = a[:, 0]
    n_set = len(model.settings)
    sid = model.setting_of
    corr = np.zeros((n_set, d, d), dtype=complex)
    np.add.at(corr, sid, y * a0[:, None, None])
    x = np.eye(d)[None] / (d * n_set) + y - corr[sid]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(check_states):
        rho = core.random_density(model.n_qubits, rng)
        est = np.einsum("k,kij->ij", model.probabilities_vector(rho), x)
        worst = max(worst, float(np.max(np.abs(est - rho))))
    if worst > CERT_TOL:
        raise RuntimeError(f"reconstruction certificate failed (residual {worst:.3g})")
    return ReconstructionOperators(model, x, worst)


@dataclass
class LinearEstimate:
    op: np.ndarray
    min_eigenvalue: float

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= -core.PSD_TOL


def linear_inversion(counts: CountData | np.ndarray, recon: ReconstructionOperators) -> LinearEstimate:
    """``rho_hat = sum X_{r|s} F_{r|s}``; unit trace but possibly indefinite."""
    fvec = counts.frequency_vector(recon.model) if isinstance(counts, CountData) else np.asarray(counts, dtype=float)
    rho = recon.apply(fvec)
    rho = (rho + rho.conj().T) / 2
    return LinearEstimate(rho, float(np.linalg.eigvalsh(rho)[0]))


@dataclass
class MLEstimate:
    state: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def _coordinate_design(model: MeasurementModel) -> np.ndarray:
    cached = getattr(model, "_coord_design", None)
    if cached is None:
        cached = np.array([sdp.hermitian_coordinates(m) for m in model.stacked])
        model._coord_design = cached
    return cached


def log_likelihood(rho, model: MeasurementModel, nvec: np.ndarray) -> float:
    p = np.maximum(model.probabilities_vector(rho), PROB_FLOOR)
    return float(np.dot(nvec, np.log(p)))


def ml_estimate(
    counts: CountData | np.ndarray,
    model: MeasurementModel,
    tol: float = 1e-8,
    max_iter: int = 20000,
    start=None,
) -> MLEstimate:
    """Maximum-likelihood state by the ``R rho R`` fixed-point iteration.

    Starts from the maximally mixed state. Whenever a full step would lower
    the log-likelihood, the step is halved towards the previous iterate until
    it does not. Stops once the max-norm change of the iterate is ``<= tol``.
    A plain vector of (possibly fractional) weights in model order is
    accepted in place of counts.
    """
    nvec = counts.vector(model).astype(float) if isinstance(counts, CountData) else np.asarray(counts, dtype=float)
    if nvec.shape != (len(model.index),) or np.any(nvec < 0):
        raise ValueError("weights must be a nonnegative vector in model order")
    total = nvec.sum()
    if total <= 0:
        raise ValueError("counts are empty")
    d = model.dim
    # real orthonormal coordinates: p = A @ coords(rho), coords(R) = (N/p) @ A
    a = _coordinate_design(model)
    rho = np.eye(d, dtype=complex) / d if start is None else core.density_matrix(start).astype(complex)

    def loglik(r):
        p = np.maximum(a @ sdp.hermitian_coordinates(r), PROB_FLOOR)
        return float(nvec @ np.log(p)), p

    ll, p = loglik(rho)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rmat = sdp.hermitian_from_coordinates((nvec / p) @ a / total, d)
        new = rmat @ rho @ rmat
        new = (new + new.conj().T) / 2
        new /= np.real(np.trace(new))
        new_ll, new_p = loglik(new)
        mix = 1.0
        while new_ll < ll and mix > 1e-12:
            mix /= 2
            new = (1 - mix) * rho + mix * new
            new_ll, new_p = loglik(new)
        if new_ll < ll:
            converged = True  # no ascent direction left at working precision
            break
        step = float(np.max(np.abs(new - rho)))
        rho, ll, p = new, new_ll, new_p
        history.append(ll)
        if step <= tol:
            converged = True
            break
    return MLEstimate(rho, ll, it, converged, history)


@dataclass
class BiasReport:
    fidelities: dict[str, np.ndarray]
    true_fidelity: float
    shots_per_setting: int
    trials: int
    seed: int
    bins: int = 40

    @property
    def estimators(self) -> list[str]:
        return list(self.fidelities)

    def mean(self, name: str) -> float:
        return float(np.mean(self.fidelities[name]))

    def std(self, name: str) -> float:
        return float(np.std(self.fidelities[name], ddof=1))

    def stderr(self, name: str) -> float:
        return self.std(name) / math.sqrt(len(self.fidelities[name]))

    def histogram(self, name: str, bins: int | None = None, range_=None):
        return np.histogram(self.fidelities[name], bins=bins or self.bins, range=range_)

    def summary(self) -> dict[str, dict[str, float]]:
        return {
            name: {"mean": self.mean(name), "std": self.std(name), "stderr": self.stderr(name)}
            for name in self.fidelities
        }

    def to_csv(self, path=None) -> str:
        """Long-format table ``estimator,trial,fidelity``; written to ``path`` if given."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["estimator", "trial", "fidelity"])
        for name, vals in self.fidelities.items():
            for i, v in enumerate(vals):
                wr.writerow([name, i, repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, trial]).generate_state(1, np.uint64)[0])


def bias_experiment(
    rho_true,
    model: MeasurementModel,
    shots_per_setting: int,
    trials: int,
    target,
    seed: int = 0,
    estimators: Sequence[str] = ("ml", "lin"),
    ml_tol: float = 1e-8,
) -> BiasReport:
    """Sample ``trials`` data sets and record each estimator's fidelity with ``target``.

    Linear-inversion fidelities are recorded raw, so values outside ``[0, 1]``
    can occur.
    """
    rho_true = core.density_matrix(rho_true)
    target = np.asarray(target, dtype=complex)
    unknown = set(estimators) - {"ml", "lin"}
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    recon = build_reconstruction(model)
    out: dict[str, list[float]] = {name: [] for name in estimators}
    for t in range(trials):
        counts = sample_counts(rho_true, model, shots_per_setting, trial_seed(seed, t))
        for name in estimators:
            if name == "lin":
                est = linear_inversion(counts, recon).op
            else:
                est = ml_estimate(counts, model, tol=ml_tol).state
            out[name].append(core.fidelity_pure(target, est))
    return BiasReport(
        {k: np.array(v) for k, v in out.items()},
        core.fidelity_pure(target, rho_true),
        shots_per_setting,
        trials,
        seed,
    )


def fidelity_coefficients(model: MeasurementModel, target) -> np.ndarray:
    """Coefficients ``c_{r|s}`` with ``<psi|rho|psi> = sum c_{r|s} tr(rho M_{r|s})`` for all states.

    Minimum-norm solution of ``sum c M = |psi><psi|``; raises when the target
    projector is not in the span of the measured operators.
    """
    psi = np.asarray(target, dtype=complex).ravel()
    if psi.size != model.dim:
        raise ValueError(f"target has dimension {psi.size}, model has {model.dim}")
    proj = core.projector(psi / np.linalg.norm(psi))
    labels, paulis, a = _design(model)
    t = np.real(np.einsum("ij,pji->p", proj, paulis)) / model.dim
    c, *_ = np.linalg.lstsq(a.T, t, rcond=None)
    resid = float(np.max(np.abs(a.T @ c - t)))
    if resid > 1e-9:
        raise NotInSpanError(f"target projector is not in the span of the measured operators (residual {resid:.3g})")
    return c


def fidelity_lower_confidence(counts: CountData, model: MeasurementModel, target, alpha: float = 0.01) -> float:
    """Lower confidence bound ``F_l`` with ``P(F_l > <psi|rho|psi>) <= alpha``.

    ``F_l = sum c_{r|s} F_{r|s} - eps`` where ``eps`` is the Hoeffding
    deviation ``sqrt(sum_s range_s^2 / N_s * |ln alpha| / 2)``.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    c = fidelity_coefficients(model, target)
    fvec = counts.frequency_vector(model)
    shots = counts.shots_vector(model)
    v = 0.0
    for i, s in enumerate(model.settings):
        cs = c[model.setting_of == i]
        v += (cs.max() - cs.min()) ** 2 / shots[i]
    return float(c @ fvec - math.sqrt(v * abs(math.log(alpha)) / 2))


def ghz_mixture(n: int, fidelity: float) -> np.ndarray:
    """``p |GHZ_n><GHZ_n| + (1 - p) 1/2^n`` with ``p`` chosen to give the requested fidelity."""
    d = 2**n
    p = (fidelity - 1 / d) / (1 - 1 / d)
    if not 0 <= p <= 1:
        raise ValueError(f"fidelity {fidelity} is not reachable by white-noise mixing")
    return p * core.projector(core.ghz_state(n)) + (1 - p) * np.eye(d) / d
