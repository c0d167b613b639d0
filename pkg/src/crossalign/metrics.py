"""Retrieval and grounding evaluations over aligned embeddings, plus report output."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .core import DistanceMetric


@dataclass(frozen=True)
class AlignedTestSet:
    """Aligned embeddings of one evaluation split, row-paired across domains."""

    vision: np.ndarray  # (n, M)
    language: np.ndarray  # (n, M)
    labels: tuple[str, ...]
    pair_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        n = self.vision.shape[0]
        if self.language.shape != self.vision.shape:
            raise ValueError(
                f"vision {self.vision.shape} and language {self.language.shape} differ"
            )
        if len(self.labels) != n or len(self.pair_ids) != n:
            raise ValueError("labels and pair_ids must match the number of rows")
        if not (np.isfinite(self.vision).all() and np.isfinite(self.language).all()):
            raise ValueError("aligned embeddings contain non-finite values")

    def __len__(self) -> int:
        return self.vision.shape[0]


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    knn_accuracy: float
    distance_correlation: float
    per_task_auc: tuple[tuple[str, float], ...]
    micro_f1: float
    macro_f1: float
    threshold: float
    config_fingerprint: str
    extras: tuple[tuple[str, object], ...] = ()


def cross_distance_matrix(a: np.ndarray, b: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    """D[i, j] = distance(a_i, b_j), consistent with core.distance semantics."""
    if metric is DistanceMetric.COSINE:
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0.0) or np.any(nb == 0.0):
            raise ValueError("cosine distance is undefined for a zero vector")
        return 1.0 - np.clip((a / na[:, None]) @ (b / nb[:, None]).T, -1.0, 1.0)
    diff = a[:, None, :] - b[None, :, :]
    return np.linalg.norm(diff, axis=2)


def _id_order(pair_ids: tuple[str, ...]) -> np.ndarray:
    """Rank of each pair_id under ascending lexicographic order (tie-break key)."""
    order = np.argsort(np.asarray(pair_ids))
    ranks = np.empty(len(pair_ids), dtype=np.int64)
    ranks[order] = np.arange(len(pair_ids))
    return ranks


def _reciprocal_ranks(
    dists: np.ndarray, query_labels: np.ndarray, gallery_labels: np.ndarray, tie_key: np.ndarray
) -> np.ndarray:
    out = np.empty(dists.shape[0])
    for i in range(dists.shape[0]):
        order = np.lexsort((tie_key, dists[i]))
        hits = np.nonzero(gallery_labels[order] == query_labels[i])[0]
        if hits.size == 0:
            raise ValueError(f"class {query_labels[i]!r} absent from the other domain")
        out[i] = 1.0 / (hits[0] + 1)
    return out


def mean_reciprocal_rank(
    ts: AlignedTestSet, metric: DistanceMetric, queries: str = "both"
) -> float:
    """Average reciprocal rank of the nearest same-class cross-domain item.

    Every item of each domain queries the full other-domain gallery;
    distance ties are broken by ascending pair_id. ``queries`` selects
    "both" (default), "vision" (vision queries the language gallery), or
    "language".
    """
    labels = np.asarray(ts.labels)
    tie_key = _id_order(ts.pair_ids)
    d_vl = cross_distance_matrix(ts.vision, ts.language, metric)
    parts = []
    if queries in ("both", "vision"):
        parts.append(_reciprocal_ranks(d_vl, labels, labels, tie_key))
    if queries in ("both", "language"):
        parts.append(_reciprocal_ranks(d_vl.T, labels, labels, tie_key))
    if not parts:
        raise ValueError(f"queries must be 'both', 'vision', or 'language', got {queries!r}")
    return float(np.mean(np.concatenate(parts)))


def _knn_predictions(
    dists: np.ndarray, gallery_labels: np.ndarray, k: int, tie_key: np.ndarray
) -> list[str]:
    preds = []
    for i in range(dists.shape[0]):
        order = np.lexsort((tie_key, dists[i]))[:k]
        neighbor_labels = [gallery_labels[j] for j in order]
        counts: dict[str, int] = {}
        for lab in neighbor_labels:
            counts[lab] = counts.get(lab, 0) + 1
        top = max(counts.values())
        # majority ties resolve to the class of the nearest tied neighbor
        preds.append(next(lab for lab in neighbor_labels if counts[lab] == top))
    return preds


def knn_accuracy(
    ts: AlignedTestSet, k: int = 5, metric: DistanceMetric = DistanceMetric.COSINE,
    queries: str = "both",
) -> float:
    """Majority-vote accuracy of k-nearest cross-domain neighbors.

    Each item is classified against the full other-domain gallery; majority
    ties take the nearest tied neighbor's class and distance ties break by
    pair_id. ``queries`` selects the direction as in mean_reciprocal_rank.
    """
    n = len(ts)
    if k > n:
        raise ValueError(f"k={k} exceeds gallery size {n}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    labels = np.asarray(ts.labels)
    tie_key = _id_order(ts.pair_ids)
    d_vl = cross_distance_matrix(ts.vision, ts.language, metric)
    correct = 0
    total = 0
    if queries in ("both", "vision"):
        preds = _knn_predictions(d_vl, labels, k, tie_key)
        correct += sum(p == t for p, t in zip(preds, labels))
        total += n
    if queries in ("both", "language"):
        preds = _knn_predictions(d_vl.T, labels, k, tie_key)
        correct += sum(p == t for p, t in zip(preds, labels))
        total += n
    if total == 0:
        raise ValueError(f"queries must be 'both', 'vision', or 'language', got {queries!r}")
    return correct / total


def distance_samples(
    ts: AlignedTestSet,
    n_samples: int = 10000,
    seed: int = 0,
    metric: DistanceMetric = DistanceMetric.COSINE,
    exhaustive: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-pair distances in each domain for correlation and scatter output.

    Samples ``n_samples`` unordered index pairs (i != j) uniformly with
    replacement, or enumerates all pairs when ``exhaustive``. Returns
    (language distances, vision distances).
    """
    n = len(ts)
    if n < 2:
        raise ValueError("distance correlation requires at least 2 pairs")
    if exhaustive:
        left, right = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        left = rng.integers(n, size=n_samples)
        right = rng.integers(n, size=n_samples)
        clash = left == right
        while np.any(clash):
            right[clash] = rng.integers(n, size=int(clash.sum()))
            clash = left == right
    d_vision = _rowwise_distance(ts.vision[left], ts.vision[right], metric)
    d_language = _rowwise_distance(ts.language[left], ts.language[right], metric)
    return d_language, d_vision


def _rowwise_distance(a: np.ndarray, b: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    if metric is DistanceMetric.COSINE:
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        if np.any(na == 0.0) or np.any(nb == 0.0):
            raise ValueError("cosine distance is undefined for a zero vector")
        return 1.0 - np.clip(np.sum(a * b, axis=1) / (na * nb), -1.0, 1.0)
    return np.linalg.norm(a - b, axis=1)


def correlation_from_samples(d_language: np.ndarray, d_vision: np.ndarray) -> float:
    """Pearson correlation of the two distance lists; 0 with a warning if degenerate."""
    if np.ptp(d_language) == 0.0 or np.ptp(d_vision) == 0.0:
        warnings.warn("zero variance in a distance list; distance correlation set to 0")
        return 0.0
    return float(np.corrcoef(d_language, d_vision)[0, 1])


def distance_correlation(
    ts: AlignedTestSet,
    n_samples: int = 10000,
    seed: int = 0,
    metric: DistanceMetric = DistanceMetric.COSINE,
    exhaustive: bool = False,
) -> float:
    """Pearson correlation between cross-pair distances in the two domains."""
    d_language, d_vision = distance_samples(ts, n_samples, seed, metric, exhaustive)
    return correlation_from_samples(d_language, d_vision)


def auc(scores: list[float] | np.ndarray, labels: list[bool] | np.ndarray) -> float:
    """Rank-based (Mann-Whitney) area under the ROC curve; ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires at least one positive and one negative label")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_threshold(train_pair_distances: list[float] | np.ndarray) -> float:
    """Mean plus sample standard deviation (n-1 denominator) of training pair distances."""
    d = np.asarray(train_pair_distances, dtype=np.float64)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("threshold requires at least 2 distances")
    return float(d.mean() + d.std(ddof=1))


@dataclass(frozen=True)
class GroundedEval:
    per_task_auc: tuple[tuple[str, float], ...]
    micro_f1: float
    macro_f1: float
    skipped_tasks: tuple[str, ...]


def grounded_language_eval(
    ts: AlignedTestSet,
    threshold: float,
    metric: DistanceMetric,
    macro_average: str = "task",
) -> GroundedEval:
    """Per-description relevance classification of all vision items.

    Each language item defines one binary task over every vision item;
    ground truth is same-class, the AUC score is the negative distance, and
    the thresholded prediction is distance < threshold. Tasks whose vision
    items are all same-class have no negatives and are skipped for AUC.
    Micro F1 pools decisions across tasks; macro F1 averages per-task F1
    (per-class with macro_average="class"), counting an empty task with no
    predictions as F1 = 1.
    """
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    if macro_average not in ("task", "class"):
        raise ValueError(f"macro_average must be 'task' or 'class', got {macro_average!r}")
    labels = np.asarray(ts.labels)
    dists = cross_distance_matrix(ts.vision, ts.language, metric)
    per_task_auc: list[tuple[str, float]] = []
    skipped: list[str] = []
    task_f1: list[float] = []
    task_labels: list[str] = []
    tp_total = fp_total = fn_total = 0
    for j in range(len(ts)):
        relevant = labels == labels[j]
        task_dists = dists[:, j]
        if relevant.all():
            skipped.append(ts.pair_ids[j])
        else:
            per_task_auc.append((ts.pair_ids[j], auc(-task_dists, relevant)))
        predicted = task_dists < threshold
        tp = int(np.sum(predicted & relevant))
        fp = int(np.sum(predicted & ~relevant))
        fn = int(np.sum(~predicted & relevant))
        tp_total += tp
        fp_total += fp
        fn_total += fn
        if tp == 0 and fp == 0 and fn == 0:
            task_f1.append(1.0)
        elif tp == 0:
            task_f1.append(0.0)
        else:
            task_f1.append(2 * tp / (2 * tp + fp + fn))
        task_labels.append(labels[j])
    denom = 2 * tp_total + fp_total + fn_total
    micro = 2 * tp_total / denom if denom > 0 else 1.0
    if macro_average == "task":
        macro = float(np.mean(task_f1))
    else:
        by_class: dict[str, list[float]] = {}
        for lab, f1 in zip(task_labels, task_f1):
            by_class.setdefault(lab, []).append(f1)
        macro = float(np.mean([float(np.mean(by_class[lab])) for lab in sorted(by_class)]))
    return GroundedEval(tuple(per_task_auc), micro, macro, tuple(skipped))


def write_report(report: EvalReport, path: str | Path) -> None:
    """Write the flat ``key = value`` text report."""
    lines = []
    for key, value in report.extras:
        lines.append(f"{key} = {value}")
    lines.append(f"mrr = {report.mrr!r}")
    lines.append(f"knn_accuracy = {report.knn_accuracy!r}")
    lines.append(f"distance_correlation = {report.distance_correlation!r}")
    lines.append(f"micro_f1 = {report.micro_f1!r}")
    lines.append(f"macro_f1 = {report.macro_f1!r}")
    lines.append(f"threshold = {report.threshold!r}")
    lines.append(f"tasks_with_auc = {len(report.per_task_auc)}")
    if report.per_task_auc:
        mean_auc = float(np.mean([a for _, a in report.per_task_auc]))
        lines.append(f"mean_auc = {mean_auc!r}")
    lines.append(f"config_fingerprint = {report.config_fingerprint}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_auc_csv(per_task_auc: tuple[tuple[str, float], ...], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "auc"])
        for pair_id, value in per_task_auc:
            writer.writerow([pair_id, repr(float(value))])


def write_dc_csv(d_language: np.ndarray, d_vision: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["language_distance", "vision_distance"])
        for dl, dv in zip(d_language, d_vision):
            writer.writerow([repr(float(dl)), repr(float(dv))])
