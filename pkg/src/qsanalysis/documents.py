"""Versioned JSON documents for every object the command line reads or writes.

Documents are written with sorted keys and fixed indentation, so parsing and
re-serializing a document reproduces it byte for byte. Complex matrices are
row-major nested lists of ``[re, im]`` pairs.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__, core
from .model import CountData, MeasurementModel, Outcome, Setting, pauli_tomography_model, qubit_axes_model

SCHEMA_VERSION = "1.0"
KINDS = ("model", "counts", "state", "expectations", "report", "certificate")
TIMESTAMP_ENV = "QSA_TIMESTAMP"


class DocumentError(ValueError):
    """Malformed document; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class Document:
    kind: str
    payload: dict
    provenance: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "payload": self.payload,
            "provenance": self.provenance,
        }


def provenance(seed: int | None = None, **extra) -> dict:
    ts = os.environ.get(TIMESTAMP_ENV) or _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    out = {"tool": "qsanalysis", "version": __version__, "seed": seed, "timestamp": ts}
    out.update(extra)
    return out


def dumps(doc: Document) -> str:
    return json.dumps(_plain(doc.to_json()), indent=2, sort_keys=True, allow_nan=False) + "\n"


def loads(text: str, kind: str | None = None) -> Document:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise DocumentError("top level must be an object")
    for key in ("schema_version", "kind", "payload"):
        if key not in obj:
            raise DocumentError("missing field", key)
    if obj["schema_version"] != SCHEMA_VERSION:
        raise DocumentError(f"unsupported schema version {obj['schema_version']!r}", "schema_version")
    if obj["kind"] not in KINDS:
        raise DocumentError(f"unknown kind {obj['kind']!r}", "kind")
    if kind is not None and obj["kind"] != kind:
        raise DocumentError(f"expected a {kind!r} document, got {obj['kind']!r}", "kind")
    if not isinstance(obj["payload"], dict):
        raise DocumentError("must be an object", "payload")
    return Document(obj["kind"], obj["payload"], obj.get("provenance", {}), obj["schema_version"])


def read(path, kind: str | None = None) -> Document:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return loads(text, kind)
    except DocumentError as exc:
        raise DocumentError(f"{path}: {exc}") from None


def write(path, doc: Document) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def _plain(obj):
    """Convert numpy scalars and arrays to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not np.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    return obj


def encode_matrix(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def decode_matrix(obj, path: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise DocumentError("matrix entries must be [re, im] number pairs", path) from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise DocumentError(f"expected a square array of [re, im] pairs, got shape {arr.shape}", path)
    return arr[..., 0] + 1j * arr[..., 1]


def encode_vector(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex).ravel()]


def decode_vector(obj, path: str = "vector") -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise DocumentError("vector entries must be [re, im] number pairs", path) from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DocumentError(f"expected a list of [re, im] pairs, got shape {arr.shape}", path)
    return arr[:, 0] + 1j * arr[:, 1]


def _need(payload: dict, key: str, path: str):
    if key not in payload:
        raise DocumentError("missing field", f"{path}.{key}")
    return payload[key]


# models


def model_document(model: MeasurementModel, spec: dict | None = None, **prov) -> Document:
    """``spec`` keeps a compact description (``{"type": "pauli", "n": 2}``) when available."""
    if spec is not None:
        payload = dict(spec)
    else:
        payload = {
            "type": "povm",
            "settings": [
                {"name": s.name, "outcomes": [{"label": o.label, "operator": encode_matrix(o.operator)} for o in s.outcomes]}
                for s in model.settings
            ],
        }
    return Document("model", payload, provenance(**prov))


def model_from_document(doc: Document) -> MeasurementModel:
    p = doc.payload
    typ = _need(p, "type", "payload")
    try:
        if typ == "pauli":
            n = _need(p, "n", "payload")
            return pauli_tomography_model(int(n), p.get("settings"))
        if typ == "axes":
            axes = _need(p, "axes", "payload")
            return qubit_axes_model({k: np.asarray(v, dtype=float) for k, v in axes.items()})
        if typ == "povm":
            settings = []
            for i, s in enumerate(_need(p, "settings", "payload")):
                outs = []
                for j, o in enumerate(_need(s, "outcomes", f"payload.settings[{i}]")):
                    op = decode_matrix(_need(o, "operator", f"payload.settings[{i}].outcomes[{j}]"), f"payload.settings[{i}].outcomes[{j}].operator")
                    outs.append(Outcome(str(_need(o, "label", f"payload.settings[{i}].outcomes[{j}]")), op))
                settings.append(Setting(str(_need(s, "name", f"payload.settings[{i}]")), tuple(outs)))
            return MeasurementModel(settings)
    except DocumentError:
        raise
    except (ValueError, TypeError) as exc:
        raise DocumentError(str(exc), "payload") from None
    raise DocumentError(f"unknown model type {typ!r}", "payload.type")


# counts


def counts_document(counts: CountData, **prov) -> Document:
    payload = {"counts": counts.counts, "description": counts.description}
    prov.setdefault("seed", counts.seed)
    return Document("counts", payload, provenance(**prov))


def counts_from_document(doc: Document) -> CountData:
    raw = _need(doc.payload, "counts", "payload")
    if not isinstance(raw, dict):
        raise DocumentError("must map setting names to outcome counts", "payload.counts")
    for s, row in raw.items():
        if not isinstance(row, dict):
            raise DocumentError("must map outcome labels to counts", f"payload.counts.{s}")
        for r, c in row.items():
            if not isinstance(c, int) or isinstance(c, bool) or c < 0:
                raise DocumentError("count must be a nonnegative integer", f"payload.counts.{s}.{r}")
    return CountData({s: dict(row) for s, row in raw.items()}, doc.provenance.get("seed"), doc.payload.get("description", ""))


# states


def state_document(state, description: str = "", physical: bool | None = None, **prov) -> Document:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        payload = {"vector": encode_vector(state)}
        n = core.num_qubits(state.size)
    else:
        payload = {"matrix": encode_matrix(state)}
        n = core.num_qubits(state.shape[0])
    payload["n"] = n
    payload["description"] = description
    if physical is not None:
        payload["is_physical"] = bool(physical)
    return Document("state", payload, provenance(**prov))


def state_from_document(doc: Document, as_density: bool = True) -> np.ndarray:
    p = doc.payload
    if "vector" in p:
        psi = decode_vector(p["vector"], "payload.vector")
        core.num_qubits(psi.size)
        if abs(np.linalg.norm(psi) - 1) > 1e-10:
            raise DocumentError("state vector is not normalized", "payload.vector")
        return core.projector(psi) if as_density else psi
    if "matrix" in p:
        rho = decode_matrix(p["matrix"], "payload.matrix")
        if not as_density:
            raise DocumentError("a pure state vector is required here", "payload")
        try:
            return core.density_matrix(rho)
        except ValueError as exc:
            raise DocumentError(str(exc), "payload.matrix") from None
    raise DocumentError("needs a 'vector' or 'matrix' field", "payload")


def pure_state_from_document(doc: Document) -> np.ndarray:
    return state_from_document(doc, as_density=False)


# expectation values


def expectations_document(labels_or_ops, means, n: int, **prov) -> Document:
    obs = []
    for a in labels_or_ops:
        if isinstance(a, str):
            obs.append({"pauli": a})
        else:
            obs.append({"matrix": encode_matrix(a)})
    return Document("expectations", {"n": n, "observables": obs, "means": [float(m) for m in means]}, provenance(**prov))


def expectations_from_document(doc: Document):
    p = doc.payload
    n = int(_need(p, "n", "payload"))
    obs = []
    for i, o in enumerate(_need(p, "observables", "payload")):
        if "pauli" in o:
            label = str(o["pauli"])
            if len(label) != n:
                raise DocumentError(f"Pauli string must have length {n}", f"payload.observables[{i}].pauli")
            try:
                obs.append(core.pauli_matrix(label))
            except (KeyError, ValueError) as exc:
                raise DocumentError(str(exc), f"payload.observables[{i}].pauli") from None
        elif "matrix" in o:
            obs.append(decode_matrix(o["matrix"], f"payload.observables[{i}].matrix"))
        else:
            raise DocumentError("needs 'pauli' or 'matrix'", f"payload.observables[{i}]")
    means = [float(m) for m in _need(p, "means", "payload")]
    if len(means) != len(obs):
        raise DocumentError(f"{len(means)} means for {len(obs)} observables", "payload.means")
    return obs, means, n


def report_document(report_type: str, body: dict, seed: int | None = None) -> Document:
    payload = {"report_type": report_type}
    payload.update(body)
    return Document("report", _plain(payload), provenance(seed))


def to_jsonable(obj: Any):
    return _plain(obj)
