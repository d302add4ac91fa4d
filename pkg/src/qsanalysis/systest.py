"""Witness tests for systematic errors in count data.

A positivity witness ``w`` satisfies ``sum w_{r|s} M_{r|s} >= 0`` so that
``w . P >= 0`` for every quantum state; a linearity witness satisfies
``sum w_{r|s} M_{r|s} = 0`` so that ``w . P = 0``. Observed violations beyond
the Hoeffding threshold signal that the data do not come from the declared
measurement model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import sdp
from .model import CountData, MeasurementModel, setting_stream

POSITIVITY = "positivity"
LINEARITY = "linearity"
KINDS = (POSITIVITY, LINEARITY)
COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"

WITNESS_TOL = 1e-8
ZERO_WITNESS = 1e-9


class WitnessError(RuntimeError):
    pass


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown witness kind {kind!r}; expected one of {KINDS}")


@dataclass
class WitnessVector:
    w: dict[str, dict[str, float]]
    kind: str
    c_w_sq: float = field(default=-1.0)

    def __post_init__(self):
        _check_kind(self.kind)
        self.w = {s: {r: float(v) for r, v in row.items()} for s, row in self.w.items()}
        recomputed = c_w_squared(self.w)
        if self.c_w_sq < 0:
            self.c_w_sq = recomputed
        elif abs(self.c_w_sq - recomputed) > 1e-12:
            raise ValueError(f"stored C_w^2 {self.c_w_sq} disagrees with recomputed {recomputed}")

    def ranges(self) -> dict[str, float]:
        return {s: (max(row.values()) - min(row.values())) if row else 0.0 for s, row in self.w.items()}

    def operator(self, model: MeasurementModel) -> np.ndarray:
        """``sum_{r,s} w_{r|s} M_{r|s}``."""
        return np.einsum("k,kij->ij", model.table_to_vector(self.w), model.stacked)

    def violations(self, model: MeasurementModel, tol: float = WITNESS_TOL) -> list[str]:
        op = self.operator(model)
        if self.kind == POSITIVITY:
            lmin = float(np.linalg.eigvalsh((op + op.conj().T) / 2)[0])
            return [] if lmin >= -tol else [f"witness operator has eigenvalue {lmin:.3g}"]
        dev = float(np.max(np.abs(op)))
        return [] if dev <= tol else [f"witness operator deviates from zero by {dev:.3g}"]

    def is_zero(self) -> bool:
        return all(abs(v) <= ZERO_WITNESS for row in self.w.values() for v in row.values())


def c_w_squared(w: Mapping[str, Mapping[str, float]]) -> float:
    """``C_w^2 = sum_s (max_r w_{r|s} - min_r w_{r|s})^2``."""
    return float(sum((max(row.values()) - min(row.values())) ** 2 for row in w.values() if row))


def witness_statistic(w: WitnessVector, f: Mapping[str, Mapping[str, float]]) -> float:
    """``sum_{r,s} w_{r|s} F_{r|s}``."""
    if set(w.w) != set(f):
        raise ValueError(f"witness settings {sorted(w.w)} do not match frequency settings {sorted(f)}")
    total = 0.0
    for s, row in w.w.items():
        if set(row) != set(f[s]):
            raise ValueError(f"outcome labels of setting {s!r} differ between witness and frequencies")
        total += sum(v * f[s][r] for r, v in row.items())
    return float(total)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def hoeffding_threshold(c_w_sq: float, n_shots: int, alpha: float) -> float:
    """``eps_alpha = sqrt(C_w^2 |ln alpha| / (2 N))``."""
    _check_alpha(alpha)
    if n_shots < 1:
        raise ValueError("need at least one shot per setting")
    if c_w_sq < 0:
        raise ValueError("C_w^2 must be nonnegative")
    return math.sqrt(c_w_sq * abs(math.log(alpha)) / (2 * n_shots))


def tail_bound(w: WitnessVector | float, n_shots: int, epsilon: float) -> float:
    """Hoeffding bound ``exp(-2 eps^2 N / C_w^2)`` on a deviation of size ``epsilon``."""
    c = w.c_w_sq if isinstance(w, WitnessVector) else float(w)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return 1.0
    if c == 0:
        return 0.0
    return math.exp(-2 * epsilon**2 * n_shots / c)


def deviation_scale(w: WitnessVector, shots: Mapping[str, int]) -> float:
    """``sum_s range_s^2 / N_s``, the Hoeffding constant for unequal shot numbers.

    Equals ``C_w^2 / N`` when every setting has ``N`` shots.
    """
    return float(sum(rng**2 / shots[s] for s, rng in w.ranges().items()))


def _witness_problem(f_train: np.ndarray, model: MeasurementModel, kind: str) -> sdp.SdpProblem:
    k = len(model.index)
    ops = model.stacked
    lower, upper = -np.ones(k), np.ones(k)
    if kind == POSITIVITY:
        block = sdp.PsdBlock(model.dim, [sdp.DenseTerm(0, ops)], name="sum w M")
        return sdp.SdpProblem(k, f_train, [block], lower=lower, upper=upper)
    a = np.array([sdp.hermitian_coordinates(m) for m in ops]).T
    return sdp.SdpProblem(k, f_train, [], eq_A=a, eq_b=np.zeros(a.shape[0]), lower=lower, upper=upper)


def _repair(wv: np.ndarray, model: MeasurementModel, kind: str) -> np.ndarray:
    """Make the side condition hold exactly, not just to solver precision."""
    ops = model.stacked
    if kind == POSITIVITY:
        op = np.einsum("k,kij->ij", wv, ops)
        lmin = float(np.linalg.eigvalsh((op + op.conj().T) / 2)[0])
        if lmin < 0:
            # the outcomes of a setting sum to 1, so a constant shift on one
            # setting adds a multiple of the identity and leaves C_w^2 unchanged
            wv = wv + np.where(model.setting_of == 0, -lmin + 1e-14, 0.0)
        return wv
    a = np.array([sdp.hermitian_coordinates(m) for m in ops]).T
    # orthogonal projection onto the kernel of w -> sum w M
    u, sv, vt = np.linalg.svd(a, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * max(sv.max(), 1)))
    kernel = vt[rank:]
    return kernel.T @ (kernel @ wv)


def find_witness(f_train, model: MeasurementModel, kind: str = POSITIVITY, tol: float = sdp.DEFAULT_TOL) -> WitnessVector:
    """Witness minimizing ``w . F_train`` over the box ``w in [-1, 1]``.

    Returns the zero witness when the optimum is not negative beyond solver
    precision. The side condition is enforced exactly after solving.
    """
    _check_kind(kind)
    if isinstance(f_train, CountData):
        f_train = f_train.frequencies()
    fvec = model.table_to_vector(f_train)
    prob = _witness_problem(fvec, model, kind)
    sol = sdp.solve(prob, tol)
    if sol.status != sdp.OPTIMAL:
        raise WitnessError(f"witness search failed: {sol.status} ({sol.message})")
    wv = _repair(np.array(sol.x, dtype=float), model, kind)
    peak = np.max(np.abs(wv)) if wv.size else 0.0
    if peak <= ZERO_WITNESS:
        wv = np.zeros_like(wv)
    else:
        wv = wv / peak
    w = WitnessVector(model.vector_to_table(wv), kind)
    bad = w.violations(model)
    if bad:
        raise WitnessError("; ".join(bad))
    return w


@dataclass
class TestReport:
    statistic: float
    threshold: float
    alpha: float
    p_value: float
    verdict: str
    witness: WitnessVector
    split_spec: dict
    train_value: float = 0.0

    __test__ = False  # keep pytest from collecting this class


def split_counts(counts: CountData, split_seed: int) -> tuple[CountData, CountData]:
    """Shot-level random halving of every setting (multivariate hypergeometric draw)."""
    first, second = {}, {}
    for s, row in counts.counts.items():
        labels = list(row)
        n = sum(row.values())
        if n < 2:
            raise ValueError(f"setting {s!r} needs at least 2 shots to split, has {n}")
        c = np.array([row[r] for r in labels], dtype=np.int64)
        rng = setting_stream(split_seed, "split/" + s)
        a = rng.multivariate_hypergeometric(c, n // 2)
        first[s] = dict(zip(labels, (int(x) for x in a)))
        second[s] = dict(zip(labels, (int(x) for x in c - a)))
    return CountData(first, seed=split_seed), CountData(second, seed=split_seed)


def evaluate(w: WitnessVector, test: CountData, alpha: float) -> tuple[float, float, float, str]:
    """``(statistic, threshold, p_value, verdict)`` of ``w`` on held-out counts."""
    _check_alpha(alpha)
    stat = witness_statistic(w, test.frequencies())
    v = deviation_scale(w, {s: test.shots(s) for s in test.counts})
    one_sided = w.kind == POSITIVITY
    a_tail = alpha if one_sided else alpha / 2
    thr = math.sqrt(v * abs(math.log(a_tail)) / 2)
    dev = -stat if one_sided else abs(stat)
    if dev <= 0:
        p = 1.0
    elif v == 0:
        p = 0.0
    else:
        p = min(1.0, math.exp(-2 * dev**2 / v) * (1 if one_sided else 2))
    verdict = INCOMPATIBLE if dev > thr else COMPATIBLE
    return stat, thr, p, verdict


def split_test(
    counts: CountData,
    model: MeasurementModel,
    alpha: float = 0.05,
    kind: str = POSITIVITY,
    split_seed: int = 0,
) -> TestReport:
    """Find a witness on one half of the shots and test it on the other half."""
    _check_kind(kind)
    _check_alpha(alpha)
    counts.check_against(model)
    train, test = split_counts(counts, split_seed)
    w = find_witness(train.frequencies(), model, kind)
    stat, thr, p, verdict = evaluate(w, test, alpha)
    spec = {
        "method": "shot-level random halving per setting",
        "seed": int(split_seed),
        "train_shots": {s: train.shots(s) for s in train.counts},
        "test_shots": {s: test.shots(s) for s in test.counts},
        "tails": 1 if kind == POSITIVITY else 2,
    }
    train_value = witness_statistic(w, train.frequencies())
    return TestReport(stat, thr, alpha, p, verdict, w, spec, train_value)
