"""Measurement models with the count data they produce under multinomial sampling."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import core

PROB_TOL = 1e-10
MAX_MODEL_QUBITS = 6

# Eigenprojectors of the single-qubit Pauli observables, "+" first.
_SIGNS = {"+": 1, "-": -1}


@dataclass(frozen=True)
class Outcome:
    label: str
    operator: np.ndarray


@dataclass(frozen=True)
class Setting:
    name: str
    outcomes: tuple[Outcome, ...]

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.outcomes]


@dataclass(eq=False)
class MeasurementModel:
    """Per-setting POVMs ``M_{r|s}``.

    Construction validates positivity and completeness of every setting.
    """

    settings: list[Setting]
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not self.settings:
            raise ValueError("a measurement model needs at least one setting")
        names = [s.name for s in self.settings]
        if len(set(names)) != len(names):
            raise ValueError("setting names must be unique")
        dims = {o.operator.shape for s in self.settings for o in s.outcomes}
        if len(dims) != 1:
            raise ValueError(f"outcome operators have inconsistent shapes {sorted(dims)}")
        if self.validate:
            self._check()

    def _check(self):
        eye = np.eye(self.dim)
        for s in self.settings:
            if len(set(s.labels)) != len(s.labels):
                raise ValueError(f"setting {s.name!r} repeats an outcome label")
            total = np.zeros_like(eye, dtype=complex)
            for o in s.outcomes:
                op = core.hermitian(o.operator)
                lmin = np.linalg.eigvalsh(op)[0]
                if lmin < -PROB_TOL:
                    raise ValueError(
                        f"outcome {o.label!r} of setting {s.name!r} is not positive "
                        f"(min eigenvalue {lmin:.3g})"
                    )
                total += op
            dev = np.max(np.abs(total - eye))
            if dev > PROB_TOL:
                raise ValueError(f"outcomes of setting {s.name!r} do not sum to identity (off by {dev:.3g})")

    @property
    def dim(self) -> int:
        return self.settings[0].outcomes[0].operator.shape[0]

    @property
    def n_qubits(self) -> int:
        return core.num_qubits(self.dim)

    def setting(self, name: str) -> Setting:
        for s in self.settings:
            if s.name == name:
                return s
        raise KeyError(f"unknown setting {name!r}")

    @cached_property
    def index(self) -> list[tuple[str, str]]:
        """Flat ordering ``[(setting, label), ...]`` used by the vectorized helpers."""
        return [(s.name, o.label) for s in self.settings for o in s.outcomes]

    @cached_property
    def stacked(self) -> np.ndarray:
        """All outcome operators as an array of shape ``(K, d, d)`` in :attr:`index` order."""
        return np.array([o.operator for s in self.settings for o in s.outcomes], dtype=complex)

    @cached_property
    def setting_of(self) -> np.ndarray:
        """Setting number of every flat outcome."""
        return np.array([i for i, s in enumerate(self.settings) for _ in s.outcomes])

    def probabilities_vector(self, rho) -> np.ndarray:
        """Born probabilities in :attr:`index` order (unclamped)."""
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (self.dim, self.dim):
            raise ValueError(f"state of shape {rho.shape} does not match model dimension {self.dim}")
        ops = self.stacked.reshape(len(self.index), -1)
        return np.real(ops.conj() @ rho.ravel())

    def table_to_vector(self, table: Mapping[str, Mapping[str, float]]) -> np.ndarray:
        out = np.empty(len(self.index))
        for k, (s, r) in enumerate(self.index):
            try:
                out[k] = table[s][r]
            except KeyError:
                raise KeyError(f"missing entry for outcome {r!r} of setting {s!r}") from None
        return out

    def vector_to_table(self, vec) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {s.name: {} for s in self.settings}
        for (s, r), v in zip(self.index, vec):
            out[s][r] = float(v)
        return out


def _pauli_eigenvectors() -> dict[str, dict[str, np.ndarray]]:
    r2 = np.sqrt(2)
    return {
        "x": {"+": np.array([1, 1]) / r2, "-": np.array([1, -1]) / r2},
        "y": {"+": np.array([1, 1j]) / r2, "-": np.array([1, -1j]) / r2},
        "z": {"+": np.array([1, 0]), "-": np.array([0, 1])},
    }


def pauli_tomography_model(n: int, settings: Iterable[str] | None = None) -> MeasurementModel:
    """Local Pauli measurements on ``n`` qubits: ``3**n`` settings with ``2**n`` outcomes each.

    Settings are named by strings over ``xyz`` and outcomes by strings over ``+-``.
    ``settings`` restricts the model to the named subset.
    """
    if not 1 <= n <= MAX_MODEL_QUBITS:
        raise ValueError(f"qubit count must be between 1 and {MAX_MODEL_QUBITS}, got {n}")
    vecs = _pauli_eigenvectors()
    names = ["".join(t) for t in itertools.product("xyz", repeat=n)]
    if settings is not None:
        wanted = list(settings)
        unknown = set(wanted) - set(names)
        if unknown:
            raise ValueError(f"unknown Pauli settings {sorted(unknown)}")
        names = wanted
    out = []
    for name in names:
        outcomes = []
        for signs in itertools.product("+-", repeat=n):
            v = core.tensor([vecs[a][b] for a, b in zip(name, signs)])
            outcomes.append(Outcome("".join(signs), core.projector(v)))
        out.append(Setting(name, tuple(outcomes)))
    return MeasurementModel(out)


def qubit_axes_model(axes: Mapping[str, Sequence[float]]) -> MeasurementModel:
    """Single-qubit projective measurements along arbitrary Bloch axes.

    ``axes`` maps a setting name to a (not necessarily normalized) direction;
    outcomes ``+``/``-`` project onto the corresponding Bloch-sphere points.
    """
    sig = [core.pauli_matrix(c) for c in "xyz"]
    out = []
    for name, a in axes.items():
        a = np.asarray(a, dtype=float)
        a = a / np.linalg.norm(a)
        ns = sum(ai * si for ai, si in zip(a, sig))
        out.append(
            Setting(
                name,
                (Outcome("+", (np.eye(2) + ns) / 2), Outcome("-", (np.eye(2) - ns) / 2)),
            )
        )
    return MeasurementModel(out)


def tilted_axes(angle_deg: float) -> dict[str, np.ndarray]:
    """x axis rotated by ``angle_deg`` towards z; y and z untouched."""
    t = np.deg2rad(angle_deg)
    return {"x": np.array([np.cos(t), 0, np.sin(t)]), "y": np.array([0.0, 1, 0]), "z": np.array([0.0, 0, 1])}


def born_probabilities(rho, model: MeasurementModel) -> dict[str, dict[str, float]]:
    """``tr(rho M_{r|s})`` for every outcome, clamped to ``[0, 1]``."""
    p = model.probabilities_vector(rho)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError(f"Born probabilities out of range [{p.min():.3g}, {p.max():.3g}]; is the state valid?")
    p = np.clip(p, 0.0, 1.0)
    sums = np.bincount(model.setting_of, weights=p)
    if np.max(np.abs(sums - 1)) > PROB_TOL:
        raise ValueError("Born probabilities of a setting do not sum to one; is the state normalized?")
    return model.vector_to_table(p)


@dataclass
class CountData:
    """Raw counts ``N_{r|s}`` keyed by setting name and outcome label."""

    counts: dict[str, dict[str, int]]
    seed: int | None = None
    description: str = ""

    def __post_init__(self):
        for s, row in self.counts.items():
            for r, c in row.items():
                if int(c) != c or c < 0:
                    raise ValueError(f"count for outcome {r!r} of setting {s!r} must be a nonnegative integer")
            self.counts[s] = {r: int(c) for r, c in row.items()}

    def shots(self, setting: str) -> int:
        return sum(self.counts[setting].values())

    @property
    def settings(self) -> list[str]:
        return list(self.counts)

    def total_shots(self) -> int:
        return sum(self.shots(s) for s in self.counts)

    def frequencies(self) -> dict[str, dict[str, float]]:
        out = {}
        for s, row in self.counts.items():
            n = self.shots(s)
            if n == 0:
                raise ValueError(f"setting {s!r} has no recorded shots")
            out[s] = {r: c / n for r, c in row.items()}
        return out

    def check_against(self, model: MeasurementModel) -> None:
        """Raise ``ValueError`` unless every model outcome has a count (and nothing else does)."""
        for s in model.settings:
            if s.name not in self.counts:
                raise ValueError(f"counts are missing setting {s.name!r}")
            row = self.counts[s.name]
            missing = set(s.labels) - set(row)
            extra = set(row) - set(s.labels)
            if missing or extra:
                raise ValueError(
                    f"outcome labels of setting {s.name!r} do not match the model "
                    f"(missing {sorted(missing)}, unexpected {sorted(extra)})"
                )
        extra_settings = set(self.counts) - {s.name for s in model.settings}
        if extra_settings:
            raise ValueError(f"counts contain settings absent from the model: {sorted(extra_settings)}")

    def vector(self, model: MeasurementModel) -> np.ndarray:
        self.check_against(model)
        return model.table_to_vector(self.counts)

    def frequency_vector(self, model: MeasurementModel) -> np.ndarray:
        self.check_against(model)
        return model.table_to_vector(self.frequencies())

    def shots_vector(self, model: MeasurementModel) -> np.ndarray:
        """Shot count of each setting, in model order."""
        return np.array([self.shots(s.name) for s in model.settings])


def setting_stream(seed: int, name: str) -> np.random.Generator:
    """Philox substream for one setting: key = seed XOR blake2b-64(name)."""
    h = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    key = (int(seed) ^ h) & 0xFFFFFFFFFFFFFFFF
    return np.random.Generator(np.random.Philox(key=key))


def sample_counts(rho, model: MeasurementModel, shots: int, seed: int) -> CountData:
    """Draw ``Mult[shots, tr(rho M_{r|s})]`` independently for each setting.

    Deterministic in ``(seed, setting name)``, so the result does not depend on
    setting order.
    """
    if shots < 1:
        raise ValueError("shots per setting must be at least 1")
    probs = born_probabilities(rho, model)
    counts = {}
    for s in model.settings:
        p = np.array([probs[s.name][r] for r in s.labels])
        draw = setting_stream(seed, s.name).multinomial(shots, p / p.sum())
        counts[s.name] = dict(zip(s.labels, (int(c) for c in draw)))
    return CountData(counts, seed=seed)


def _is_pauli_product(model: MeasurementModel) -> bool:
    n = model.n_qubits
    for s in model.settings:
        if len(s.name) != n or any(c not in "xyz" for c in s.name):
            return False
        if any(len(r) != n or any(c not in "+-" for c in r) for r in s.labels):
            return False
    return True


def estimate_expectations(freqs: Mapping[str, Mapping[str, float]], model: MeasurementModel) -> dict[str, float]:
    """Pauli expectation values from local Pauli data.

    A string's estimate from setting ``s`` is ``sum_r F_{r|s} prod_i sign(r_i)``
    over its support. Strings of lower weight are averaged with equal weight
    over every setting that agrees with them on their support. ``freqs`` may
    be a :class:`CountData` or a frequency table.
    """
    if isinstance(freqs, CountData):
        freqs.check_against(model)
        freqs = freqs.frequencies()
    if not _is_pauli_product(model):
        raise ValueError("expectation estimates need a local Pauli model (settings over xyz, outcomes over +-)")
    n = model.n_qubits
    sums: dict[str, float] = {}
    hits: dict[str, int] = {}
    for s in model.settings:
        if s.name not in freqs:
            raise KeyError(f"missing setting {s.name!r}")
        row = freqs[s.name]
        for support in itertools.product((False, True), repeat=n):
            if not any(support):
                continue
            label = "".join(c if on else "0" for c, on in zip(s.name, support))
            val = 0.0
            for r in s.labels:
                if r not in row:
                    raise KeyError(f"missing outcome {r!r} of setting {s.name!r}")
                sign = 1
                for ch, on in zip(r, support):
                    if on:
                        sign *= _SIGNS[ch]
                val += sign * row[r]
            sums[label] = sums.get(label, 0.0) + val
            hits[label] = hits.get(label, 0) + 1
    return {label: sums[label] / hits[label] for label in sorted(sums)}
