"""Dataset file format and loading.

Datasets are JSON:

    {"n_qubits": n, "state_kind": "pure" | "mixed",
     "states": [...], "labels": [...]}

where a pure state is a list of [re, im] amplitude pairs (length 2**n) and a
mixed state is a 2**n x 2**n nested matrix of [re, im] pairs.  Dense state
storage is capped at 10 qubits.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import DensityMatrix, PureState
from .local import LabeledState

MAX_DATASET_QUBITS = 10


def pairs_to_vector(entries) -> np.ndarray:
    try:
        return np.array([complex(re, im) for re, im in entries], dtype=np.complex128)
    except (TypeError, ValueError):
        raise ValidationError("pure states must be lists of [re, im] pairs") from None


def pairs_to_matrix(rows) -> np.ndarray:
    try:
        return np.array(
            [[complex(re, im) for re, im in row] for row in rows], dtype=np.complex128
        )
    except (TypeError, ValueError):
        raise ValidationError("mixed states must be nested [re, im] pair matrices") from None


def vector_to_pairs(v: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in v]


def matrix_to_pairs(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


@dataclass(frozen=True)
class Dataset:
    n_qubits: int
    state_kind: str  # 'pure' | 'mixed'
    states: tuple
    labels: tuple

    def __post_init__(self):
        if self.state_kind not in ("pure", "mixed"):
            raise ValidationError(f"state_kind must be 'pure' or 'mixed', got {self.state_kind!r}")
        if self.n_qubits > MAX_DATASET_QUBITS:
            raise ValidationError(
                f"dense datasets are capped at {MAX_DATASET_QUBITS} qubits, got {self.n_qubits}"
            )
        if len(self.states) != len(self.labels) or not self.states:
            raise ValidationError("need one label per state (and at least one state)")
        for s in self.states:
            want = PureState if self.state_kind == "pure" else DensityMatrix
            if not isinstance(s, want):
                raise ValidationError(f"state of kind {type(s).__name__} in a {self.state_kind} dataset")
            if s.n_qubits != self.n_qubits:
                raise ValidationError("dataset states must share one dimension")

    def labeled_states(self) -> list[LabeledState]:
        return [LabeledState(s, l) for s, l in zip(self.states, self.labels)]


def dataset_from_dict(doc: dict) -> Dataset:
    try:
        n = int(doc["n_qubits"])
        kind = doc["state_kind"]
        raw_states = doc["states"]
        labels = tuple(doc["labels"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"dataset is missing field {exc}") from None
    states = []
    for raw in raw_states:
        if kind == "pure":
            states.append(PureState(n, pairs_to_vector(raw)))
        else:
            states.append(DensityMatrix(n, pairs_to_matrix(raw)))
    return Dataset(n, kind, tuple(states), labels)


def dataset_to_dict(ds: Dataset) -> dict:
    states = [
        vector_to_pairs(s.amplitudes) if ds.state_kind == "pure" else matrix_to_pairs(s.matrix)
        for s in ds.states
    ]
    return {
        "n_qubits": ds.n_qubits,
        "state_kind": ds.state_kind,
        "states": states,
        "labels": list(ds.labels),
    }


def load_dataset(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_dict(json.load(fh))


def atomic_write_text(path: str, text: str):
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qrobust-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def save_dataset(ds: Dataset, path: str):
    atomic_write_json(path, dataset_to_dict(ds))
