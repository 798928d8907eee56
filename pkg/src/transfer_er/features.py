"""Record normalization, pairwise feature scores and standardization."""
from __future__ import annotations

import csv
import json
import re
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class RecordError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    source: str
    id: str
    title: str
    alt_titles: tuple[str, ...] = ()
    year: int | None = None
    runtime: int | None = None
    cast: tuple[str, ...] = ()
    directors: tuple[str, ...] = ()
    # numeric attributes for records without movie fields (synthetic data)
    attrs: tuple[float, ...] = ()

    def to_json(self) -> dict:
        doc = {"source": self.source, "id": self.id, "title": self.title,
               "alt_titles": list(self.alt_titles), "year": self.year,
               "runtime": self.runtime, "cast": list(self.cast),
               "directors": list(self.directors)}
        doc = {k: v for k, v in doc.items() if v is not None}
        if self.attrs:
            doc["attrs"] = list(self.attrs)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RawRecord":
        for key in ("source", "id", "title"):
            if key not in doc:
                raise RecordError(f"record is missing {key!r}")

        def opt_int(key):
            v = doc.get(key)
            if v is None:
                return None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise RecordError(f"record {doc['id']!r}: {key!r} must be a number")
            return int(v)

        return cls(str(doc["source"]), str(doc["id"]), str(doc["title"]),
                   tuple(doc.get("alt_titles", ())), opt_int("year"), opt_int("runtime"),
                   tuple(doc.get("cast", ())), tuple(doc.get("directors", ())),
                   tuple(float(a) for a in doc.get("attrs", ())))


_PUNCT = re.compile(f"[{re.escape(string.punctuation)}]")
_SPACE = re.compile(r"\s+")


def clean_text(s: str) -> str:
    """Lowercase, drop punctuation, collapse and trim whitespace."""
    s = _PUNCT.sub("", s.lower())
    return _SPACE.sub(" ", s).strip()


def _clean_list(items):
    out = (clean_text(t) for t in items)
    return tuple(t for t in out if t)


def normalize_record(r: RawRecord) -> RawRecord:
    title = clean_text(r.title)
    if not title:
        raise RecordError(f"record {r.source}/{r.id}: title is empty after cleanup")
    return replace(r, title=title, alt_titles=_clean_list(r.alt_titles),
                   cast=_clean_list(r.cast), directors=_clean_list(r.directors))


def title_tokens(r: RawRecord) -> frozenset[str]:
    toks = set(r.title.split())
    for alt in r.alt_titles:
        toks.update(alt.split())
    return frozenset(toks)


def jaccard(a, b, empty: float = 1.0) -> float:
    """|a & b| / |a | b|; two empty sets score ``empty``."""
    a, b = set(a), set(b)
    union = len(a | b)
    if union == 0:
        return empty
    return len(a & b) / union


def absdiff_score(a, b) -> float:
    """Negated absolute difference; 0 when either side is missing."""
    if a is None or b is None:
        return 0.0
    return -abs(float(a) - float(b)) + 0.0


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str  # "jaccard" or "absdiff"
    field: str

    def __call__(self, r1: RawRecord, r2: RawRecord, empty_jaccard=1.0) -> float:
        if self.kind == "jaccard":
            if self.field == "title":
                return jaccard(title_tokens(r1), title_tokens(r2), empty_jaccard)
            return jaccard(getattr(r1, self.field), getattr(r2, self.field), empty_jaccard)
        if self.field.startswith("attrs["):
            k = int(self.field[6:-1])
            a = r1.attrs[k] if k < len(r1.attrs) else None
            b = r2.attrs[k] if k < len(r2.attrs) else None
            return absdiff_score(a, b)
        return absdiff_score(getattr(r1, self.field), getattr(r2, self.field))


@dataclass(frozen=True)
class FeatureSpec:
    features: tuple[Feature, ...] = (
        Feature("jaccard_title", "jaccard", "title"),
        Feature("jaccard_cast", "jaccard", "cast"),
        Feature("jaccard_directors", "jaccard", "directors"),
        Feature("absdiff_year", "absdiff", "year"),
        Feature("absdiff_runtime", "absdiff", "runtime"),
    )
    empty_jaccard: float = 1.0

    def __post_init__(self):
        if not self.features:
            raise ValueError("a feature spec needs at least one feature")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        for f in self.features:
            if f.kind not in ("jaccard", "absdiff"):
                raise ValueError(f"unknown feature kind {f.kind!r}")

    @property
    def d(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @classmethod
    def numeric(cls, dim: int) -> "FeatureSpec":
        """One negated absolute difference per numeric attribute."""
        return cls(tuple(Feature(f"absdiff_a{k}", "absdiff", f"attrs[{k}]") for k in range(dim)))


def featurize_pair(r1: RawRecord, r2: RawRecord, spec: FeatureSpec = FeatureSpec()) -> np.ndarray:
    return np.array([f(r1, r2, spec.empty_jaccard) for f in spec.features])


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.means) / self.stds

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, doc) -> "Standardizer":
        return cls(np.array(doc["means"], dtype=np.float64), np.array(doc["stds"], dtype=np.float64))


def fit_standardizer(X) -> Standardizer:
    """Per-column mean and population standard deviation; zero-variance columns get std 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on an empty set")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds[stds == 0] = 1.0
    return Standardizer(means, stds)


def apply(std: Standardizer, v) -> np.ndarray:
    return std.apply(v)


def add_constant(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


# --- file formats -------------------------------------------------------------

def read_records(path) -> list[RawRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(RawRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, RecordError) as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_records(records: Iterable[RawRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


@dataclass
class FeatureTable:
    """Rows of the features CSV: identifiers, label and feature values."""

    source_a: list[str]
    id_a: list[str]
    source_b: list[str]
    id_b: list[str]
    label: np.ndarray
    X: np.ndarray
    feature_names: tuple[str, ...]

    def __len__(self):
        return len(self.label)

    def sources(self) -> list[str]:
        return sorted(set(self.source_a) | set(self.source_b))

    def to_dataset(self, sources: Sequence[str] | None = None):
        from .solver import Dataset
        names = list(sources) if sources is not None else self.sources()
        index = {s: i for i, s in enumerate(names)}
        unknown = sorted((set(self.source_a) | set(self.source_b)) - set(index))
        if unknown:
            raise RecordError(f"sources not in the declared list: {', '.join(unknown)}")
        a = np.array([index[s] for s in self.source_a], dtype=np.int64)
        b = np.array([index[s] for s in self.source_b], dtype=np.int64)
        return Dataset(self.X, a, b, self.label, len(names), tuple(names), self.feature_names)

    def subset(self, mask) -> "FeatureTable":
        idx = np.flatnonzero(mask)
        pick = lambda xs: [xs[i] for i in idx]
        return FeatureTable(pick(self.source_a), pick(self.id_a), pick(self.source_b),
                            pick(self.id_b), self.label[idx], self.X[idx], self.feature_names)


def write_feature_csv(table: FeatureTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_a", "id_a", "source_b", "id_b", "label", *table.feature_names])
        for k in range(len(table)):
            w.writerow([table.source_a[k], table.id_a[k], table.source_b[k], table.id_b[k],
                        int(table.label[k]), *(repr(float(v)) for v in table.X[k])])


def read_feature_csv(path) -> FeatureTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RecordError(f"{path}: empty features file")
    header = rows[0]
    if header[:5] != ["source_a", "id_a", "source_b", "id_b", "label"] or len(header) < 6:
        raise RecordError(f"{path}: unexpected header {header[:5]}")
    names = tuple(header[5:])
    sa, ia, sb, ib, y, X = [], [], [], [], [], []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(header):
            raise RecordError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            label = int(row[4])
            vals = [float(v) for v in row[5:]]
        except ValueError as exc:
            raise RecordError(f"{path}:{lineno}: {exc}") from exc
        if label not in (-1, 0, 1):
            raise RecordError(f"{path}:{lineno}: label must be -1/+1 or 0/1")
        if row[0] > row[2]:
            row = [row[2], row[3], row[0], row[1]] + row[4:]
        sa.append(row[0]); ia.append(row[1]); sb.append(row[2]); ib.append(row[3])
        y.append(-1 if label == 0 else label)
        X.append(vals)
    X = np.array(X, dtype=np.float64).reshape(len(X), len(names))
    return FeatureTable(sa, ia, sb, ib, np.array(y, dtype=np.float64), X, names)


def read_pairs_csv(path) -> list[tuple[str, str, str, str, int | None]]:
    """Pair list (candidates or labeled pairs): source_a,id_a,source_b,id_b[,label]."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:4] != ["source_a", "id_a", "source_b", "id_b"]:
        raise RecordError(f"{path}: expected header source_a,id_a,source_b,id_b[,label]")
    labeled = len(rows[0]) > 4 and rows[0][4] == "label"
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) < 4:
            raise RecordError(f"{path}:{lineno}: too few columns")
        label = int(row[4]) if labeled and row[4] != "" else None
        out.append((row[0], row[1], row[2], row[3], label))
    return out


def featurize_pairs(records: Iterable[RawRecord], pairs, spec: FeatureSpec) -> FeatureTable:
    """Featurize ``(source_a, id_a, source_b, id_b, label)`` tuples against normalized records.

    Unlabeled pairs (label None) are written with label 0.
    """
    index = {(r.source, r.id): r for r in records}
    sa, ia, sb, ib, y, X = [], [], [], [], [], []
    for s1, i1, s2, i2, label in pairs:
        if s1 == s2:
            raise RecordError(f"pair ({s1}, {i1}) / ({s2}, {i2}) is within one source")
        if s1 > s2:
            s1, i1, s2, i2 = s2, i2, s1, i1
        try:
            r1, r2 = index[(s1, i1)], index[(s2, i2)]
        except KeyError as exc:
            raise RecordError(f"pair references unknown record {exc.args[0]}") from None
        sa.append(s1); ia.append(i1); sb.append(s2); ib.append(i2)
        y.append(0 if label is None else (-1 if label in (0, -1) else 1))
        X.append(featurize_pair(r1, r2, spec))
    X = np.array(X, dtype=np.float64).reshape(len(X), spec.d)
    return FeatureTable(sa, ia, sb, ib, np.array(y, dtype=np.float64), X, spec.names)
