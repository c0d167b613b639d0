"""Paired two-domain datasets, deterministic splitting, and the shared distance metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

VISION = "vision"
LANGUAGE = "language"


class DatasetError(Exception):
    """A dataset file or its contents violate the format contract."""


class DistanceMetric(Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class PairRecord:
    """One (vision vector, language vector) correspondence, optionally labeled."""

    pair_id: str
    vision: np.ndarray
    language: np.ndarray
    class_label: str | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable ordered collection of pair records with consistent dimensions."""

    records: tuple[PairRecord, ...]
    dim_vision: int
    dim_language: int

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_labels(self) -> bool:
        return all(r.class_label is not None for r in self.records)

    def vision_matrix(self) -> np.ndarray:
        return np.stack([r.vision for r in self.records])

    def language_matrix(self) -> np.ndarray:
        return np.stack([r.language for r in self.records])

    def labels(self) -> list[str | None]:
        return [r.class_label for r in self.records]

    def pair_ids(self) -> list[str]:
        return [r.pair_id for r in self.records]


def make_dataset(records: list[PairRecord] | tuple[PairRecord, ...]) -> Dataset:
    """Build a Dataset from records, verifying every invariant.

    Raises DatasetError on an empty record list, inconsistent dimensions,
    duplicate pair ids, non-finite values, or a mix of labeled and
    unlabeled records.
    """
    if not records:
        raise DatasetError("empty dataset: no records")
    dim_v = records[0].vision.shape[0]
    dim_l = records[0].language.shape[0]
    seen: set[str] = set()
    n_labeled = 0
    for i, rec in enumerate(records):
        if rec.vision.ndim != 1 or rec.vision.shape[0] != dim_v:
            raise DatasetError(
                f"record {rec.pair_id!r}: vision dimension {rec.vision.shape} != {dim_v}"
            )
        if rec.language.ndim != 1 or rec.language.shape[0] != dim_l:
            raise DatasetError(
                f"record {rec.pair_id!r}: language dimension {rec.language.shape} != {dim_l}"
            )
        if dim_v == 0 or dim_l == 0:
            raise DatasetError(f"record {rec.pair_id!r}: empty vector")
        if not (np.isfinite(rec.vision).all() and np.isfinite(rec.language).all()):
            raise DatasetError(f"record {rec.pair_id!r}: non-finite value")
        if rec.pair_id in seen:
            raise DatasetError(f"duplicate pair_id {rec.pair_id!r}")
        seen.add(rec.pair_id)
        if rec.class_label is not None:
            n_labeled += 1
    if 0 < n_labeled < len(records):
        raise DatasetError(
            f"mixed labeling: {n_labeled} of {len(records)} records carry a class label"
        )
    return Dataset(tuple(records), dim_v, dim_l)


def _parse_vector(raw: object, field: str, lineno: int) -> np.ndarray:
    if not isinstance(raw, list) or not raw:
        raise DatasetError(f"line {lineno}: field {field!r} must be a non-empty array")
    for x in raw:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise DatasetError(f"line {lineno}: field {field!r} contains a non-number")
    return np.asarray(raw, dtype=np.float64)


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset from a line-delimited JSON file.

    Each line is an object with fields ``pair_id`` (string), optional
    ``class`` (string), ``vision`` and ``language`` (arrays of numbers).
    Errors name the offending 1-based line number.
    """
    path = Path(path)
    records: list[PairRecord] = []
    seen: set[str] = set()
    dims: tuple[int, int] | None = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed record ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"line {lineno}: record is not an object")
            pair_id = obj.get("pair_id")
            if not isinstance(pair_id, str) or not pair_id:
                raise DatasetError(f"line {lineno}: missing or invalid pair_id")
            if pair_id in seen:
                raise DatasetError(f"line {lineno}: duplicate pair_id {pair_id!r}")
            seen.add(pair_id)
            label = obj.get("class")
            if label is not None and not isinstance(label, str):
                raise DatasetError(f"line {lineno}: class must be a string when present")
            vision = _parse_vector(obj.get("vision"), "vision", lineno)
            language = _parse_vector(obj.get("language"), "language", lineno)
            if not (np.isfinite(vision).all() and np.isfinite(language).all()):
                raise DatasetError(f"line {lineno}: non-finite value")
            if dims is None:
                dims = (vision.shape[0], language.shape[0])
            elif (vision.shape[0], language.shape[0]) != dims:
                raise DatasetError(
                    f"line {lineno}: dimension mismatch "
                    f"(vision {vision.shape[0]}, language {language.shape[0]}) != "
                    f"(vision {dims[0]}, language {dims[1]})"
                )
            records.append(PairRecord(pair_id, vision, language, label))
    if not records:
        raise DatasetError(f"{path}: empty dataset")
    return make_dataset(records)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write a dataset in the line-delimited JSON format read by load_dataset.

    Float serialization uses the shortest round-tripping representation, so
    save followed by load reproduces vectors bit for bit.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in ds.records:
            obj: dict[str, object] = {"pair_id": rec.pair_id}
            if rec.class_label is not None:
                obj["class"] = rec.class_label
            obj["vision"] = [float(x) for x in rec.vision]
            obj["language"] = [float(x) for x in rec.language]
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _subset(ds: Dataset, keep: np.ndarray) -> Dataset:
    records = tuple(ds.records[i] for i in sorted(int(i) for i in keep))
    return Dataset(records, ds.dim_vision, ds.dim_language)


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministically partition a dataset into train and test subsets.

    When class labels are present the split is stratified: each class
    contributes round(n_class * test_fraction) test records, clamped so
    both sides keep at least one record per class. Record order within
    each side follows the original dataset order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(ds) < 2:
        raise ValueError("split requires at least 2 records")
    rng = np.random.default_rng(seed)
    test_idx: list[int] = []
    if ds.has_labels:
        by_class: dict[str, list[int]] = {}
        for i, rec in enumerate(ds.records):
            by_class.setdefault(rec.class_label, []).append(i)
        for label in sorted(by_class):
            members = np.asarray(by_class[label])
            if members.size < 2:
                raise ValueError(
                    f"class {label!r} has a single record; cannot stratify the split"
                )
            n_test = int(round(members.size * test_fraction))
            n_test = min(max(n_test, 1), members.size - 1)
            picked = rng.permutation(members.size)[:n_test]
            test_idx.extend(int(members[j]) for j in picked)
    else:
        n_test = int(round(len(ds) * test_fraction))
        n_test = min(max(n_test, 1), len(ds) - 1)
        picked = rng.permutation(len(ds))[:n_test]
        test_idx.extend(int(i) for i in picked)
    test_set = set(test_idx)
    train_idx = np.asarray([i for i in range(len(ds)) if i not in test_set])
    return _subset(ds, train_idx), _subset(ds, np.asarray(sorted(test_set)))


def distance(u: np.ndarray, v: np.ndarray, metric: DistanceMetric) -> float:
    """Distance between two vectors: cosine distance or Euclidean norm.

    Cosine distance is 1 - (u.v)/(|u||v|), clipped into [0, 2]; it is an
    error for either vector to be zero. Euclidean distance is |u - v|.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if metric is DistanceMetric.COSINE:
        nu = float(np.linalg.norm(u))
        nv = float(np.linalg.norm(v))
        if nu == 0.0 or nv == 0.0:
            raise ValueError("cosine distance is undefined for a zero vector")
        sim = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
        return 1.0 - sim
    return float(np.linalg.norm(u - v))
