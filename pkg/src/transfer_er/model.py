"""Transfer model parameters, scoring and (de)serialization.

A pair of sources ``(i, j)`` is scored with the combined weight
``w0 + (w[i] + w[j]) / 2``: a global vector plus the mean of the two
per-source deviations. The pairwise correction term is never stored.
"""
from __future__ import annotations

import json
import numbers
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ModelFormatError(ValueError):
    """Raised for malformed or inconsistent model files."""


@dataclass(frozen=True)
class SourceId:
    index: int
    name: str = ""

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"source index must be nonnegative, got {self.index}")
        if not self.name:
            object.__setattr__(self, "name", f"s{self.index}")


@dataclass(frozen=True)
class SourcePair:
    """Unordered pair of distinct sources, stored with ``a.index < b.index``."""

    a: SourceId
    b: SourceId

    def __post_init__(self):
        a, b = self.a, self.b
        if isinstance(a, numbers.Integral):
            a = SourceId(int(a))
        if isinstance(b, numbers.Integral):
            b = SourceId(int(b))
        if a.index == b.index:
            raise ValueError(f"a source pair needs two distinct sources, got {a.index} twice")
        if a.index > b.index:
            a, b = b, a
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def indices(self) -> tuple[int, int]:
        return self.a.index, self.b.index


def as_pair(pair) -> SourcePair:
    if isinstance(pair, SourcePair):
        return pair
    i, j = pair
    return SourcePair(i, j)


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    pair: SourcePair
    y: int

    def __post_init__(self):
        y = int(self.y)
        if y == 0:
            y = -1
        if y not in (-1, 1):
            raise ValueError(f"label must be +1/-1 (or 0/1), got {self.y}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "pair", as_pair(self.pair))
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("feature vector must be a finite 1-d array")
        object.__setattr__(self, "x", x)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TransferModel:
    """Shared vector ``w0`` plus one deviation vector per source (rows of ``w``)."""

    w0: np.ndarray
    w: np.ndarray
    feature_names: tuple[str, ...] = ()
    sources: tuple[str, ...] = ()
    lambda_a: float = 0.0

    def __post_init__(self):
        w0 = _frozen(self.w0)
        w = _frozen(self.w)
        if w0.ndim != 1:
            raise ValueError("w0 must be 1-d")
        if w.ndim != 2 or w.shape[1] != w0.shape[0]:
            raise ValueError(f"w must have shape (N, {w0.shape[0]}), got {w.shape}")
        if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w))):
            raise ValueError("model weights must be finite")
        names = tuple(self.feature_names) or tuple(f"f_{k + 1}" for k in range(w0.shape[0]))
        if len(names) != w0.shape[0]:
            raise ValueError(f"expected {w0.shape[0]} feature names, got {len(names)}")
        sources = tuple(self.sources) or tuple(f"s{i}" for i in range(w.shape[0]))
        if len(sources) != w.shape[0]:
            raise ValueError(f"expected {w.shape[0]} source names, got {len(sources)}")
        if self.lambda_a < 0:
            raise ValueError("lambda_a must be nonnegative")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "lambda_a", float(self.lambda_a))

    @property
    def d(self) -> int:
        return self.w0.shape[0]

    @property
    def n_sources(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, n_sources: int, d: int, **kw) -> "TransferModel":
        return cls(np.zeros(d), np.zeros((n_sources, d)), **kw)

    def score_many(self, X, src_a, src_b) -> np.ndarray:
        """Vectorized ``score`` over rows of ``X`` with per-row source indices."""
        from .kernels import forward
        return forward(X, src_a, src_b, self.w0, self.w)


def combined_weight(model: TransferModel, pair) -> np.ndarray:
    i, j = as_pair(pair).indices
    if j >= model.n_sources:
        raise IndexError(f"source index {j} out of range for {model.n_sources} sources")
    return model.w0 + 0.5 * (model.w[i] + model.w[j])


def score(model: TransferModel, pair, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise ValueError(f"feature vector has shape {x.shape}, model expects ({model.d},)")
    return float(combined_weight(model, pair) @ x)


def classify(s: float, tau: float = 0.0) -> int:
    # ties count as a match
    return 1 if s - tau >= 0 else -1


def model_to_dict(model: TransferModel) -> dict:
    return {
        "d": model.d,
        "feature_names": list(model.feature_names),
        "sources": list(model.sources),
        "w0": model.w0.tolist(),
        "w": model.w.tolist(),
        "lambda_a": model.lambda_a,
    }


def model_from_dict(doc: dict) -> TransferModel:
    for key in ("d", "feature_names", "sources", "w0", "w", "lambda_a"):
        if key not in doc:
            raise ModelFormatError(f"model file is missing field {key!r}")
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise ModelFormatError(f"field 'd' must be a positive integer, got {d!r}")
    w0, w = doc["w0"], doc["w"]
    if not isinstance(w0, list) or len(w0) != d:
        raise ModelFormatError(f"field 'w0' must be a list of {d} numbers")
    if not isinstance(w, list) or len(w) != len(doc["sources"]):
        raise ModelFormatError("field 'w' must hold one vector per source")
    for i, row in enumerate(w):
        if not isinstance(row, list) or len(row) != d:
            raise ModelFormatError(f"field 'w'[{i}] must be a list of {d} numbers")
    if len(doc["feature_names"]) != d:
        raise ModelFormatError(f"field 'feature_names' must hold {d} names")
    try:
        return TransferModel(np.array(w0, dtype=np.float64),
                             np.array(w, dtype=np.float64).reshape(len(w), d),
                             tuple(doc["feature_names"]), tuple(doc["sources"]),
                             float(doc["lambda_a"]))
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(str(exc)) from exc


def save_model(model: TransferModel, path) -> None:
    # json writes floats via repr, which round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> TransferModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    return model_from_dict(doc)
