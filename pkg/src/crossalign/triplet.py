"""Cross-domain triplet sampling, triplet loss, and the joint two-head training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LANGUAGE, VISION, Dataset, DistanceMetric, distance
from .netalign import (
    AdamState,
    AlignmentHead,
    DivergenceError,
    adam_step,
    backward,
    forward,
    init_adam,
    init_head,
)

SUPERVISED = "supervised"
UNSUPERVISED = "unsupervised"


@dataclass(frozen=True)
class Triplet:
    """Anchor/positive/negative references as (record index, domain tag)."""

    anchor: tuple[int, str]
    positive: tuple[int, str]
    negative: tuple[int, str]


@dataclass
class TrainConfig:
    margin: float = 0.4
    metric: DistanceMetric = DistanceMetric.COSINE
    embed_dim: int = 1024
    batch_size: int = 64
    max_epochs: int = 300
    triplets_per_epoch: int | None = None  # None -> 4 x training-set size
    patience: int = 10
    seed: int = 0
    mode: str = SUPERVISED
    learning_rate: float = 1e-3
    negative_quantile: float = 0.25

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError(f"margin must be nonnegative, got {self.margin}")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mode not in (SUPERVISED, UNSUPERVISED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 < self.negative_quantile < 1.0:
            raise ValueError(f"negative_quantile must be in (0, 1), got {self.negative_quantile}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class TrainResult:
    vision_head: AlignmentHead
    language_head: AlignmentHead
    history: tuple[EpochRecord, ...]


@dataclass(frozen=True)
class ClassIndex:
    """Record indices grouped by class label, precomputed for fast sampling."""

    labels: tuple[str, ...]
    by_class: dict[str, np.ndarray]
    not_in_class: dict[str, np.ndarray]


def build_class_index(ds: Dataset) -> ClassIndex:
    if not ds.has_labels:
        raise ValueError("dataset has no class labels")
    labels = tuple(r.class_label for r in ds.records)
    by_class: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_class.setdefault(label, []).append(i)
    groups = {k: np.asarray(v) for k, v in by_class.items()}
    complement = {
        k: np.asarray([i for i in range(len(labels)) if labels[i] != k]) for k in groups
    }
    return ClassIndex(labels, groups, complement)


def sample_triplet_supervised(
    ds: Dataset, rng: np.random.Generator, index: ClassIndex | None = None
) -> Triplet:
    """Draw one supervised cross-domain triplet.

    The anchor's domain and record are uniform over both domains and all
    records; the positive is uniform over same-class items of a uniformly
    chosen domain (never the anchor itself); the negative is uniform over
    different-class items of a uniformly chosen domain.
    """
    if index is None:
        index = build_class_index(ds)
    if len(index.by_class) < 2:
        raise ValueError("supervised sampling requires at least 2 classes")
    domains = (VISION, LANGUAGE)
    anchor_domain = domains[rng.integers(2)]
    anchor_idx = int(rng.integers(len(ds)))
    label = index.labels[anchor_idx]
    pos_domain = domains[rng.integers(2)]
    candidates = index.by_class[label]
    if pos_domain == anchor_domain:
        candidates = candidates[candidates != anchor_idx]
        if candidates.size == 0:
            # lone class member in this domain: its paired vector in the
            # other domain is always a valid positive
            pos_domain = LANGUAGE if anchor_domain == VISION else VISION
            candidates = index.by_class[label]
    pos_idx = int(candidates[rng.integers(candidates.size)])
    neg_domain = domains[rng.integers(2)]
    neg_candidates = index.not_in_class[label]
    neg_idx = int(neg_candidates[rng.integers(neg_candidates.size)])
    return Triplet((anchor_idx, anchor_domain), (pos_idx, pos_domain), (neg_idx, neg_domain))


@dataclass(frozen=True)
class FarNegativeTable:
    """Per pair, the indices whose language vectors fall in the farthest quantile."""

    rows: tuple[tuple[int, ...], ...]
    quantile: float
    metric: DistanceMetric


def _pairwise_distances(rows: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    if metric is DistanceMetric.COSINE:
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("cosine distance is undefined for a zero vector")
        unit = rows / norms[:, None]
        return 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)
    diff = rows[:, None, :] - rows[None, :, :]
    return np.linalg.norm(diff, axis=2)


def build_negative_table(
    ds: Dataset,
    quantile: float = 0.25,
    metric: DistanceMetric = DistanceMetric.COSINE,
) -> FarNegativeTable:
    """For each pair, find the other pairs with the farthest language vectors.

    Row i holds the max(1, floor(quantile * (n - 1))) indices j != i with
    the largest language-space distance to pair i, distance ties broken
    toward the smaller index.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")
    n = len(ds)
    if n < 2:
        raise ValueError("negative table requires at least 2 pairs")
    dists = _pairwise_distances(ds.language_matrix(), metric)
    count = max(1, math.floor(quantile * (n - 1)))
    indices = np.arange(n)
    rows = []
    for i in range(n):
        order = np.lexsort((indices, -dists[i]))
        order = order[order != i]
        rows.append(tuple(int(j) for j in order[:count]))
    return FarNegativeTable(tuple(rows), quantile, metric)


def sample_triplet_unsupervised(
    ds: Dataset, table: FarNegativeTable, rng: np.random.Generator
) -> Triplet:
    """Draw one unsupervised triplet: vision anchor, its paired language
    positive, and a language negative uniform over the anchor's far-quantile row."""
    if len(table.rows) != len(ds):
        raise ValueError(f"table covers {len(table.rows)} pairs, dataset has {len(ds)}")
    i = int(rng.integers(len(ds)))
    row = table.rows[i]
    if not row:
        raise ValueError(f"negative table row {i} is empty")
    j = row[int(rng.integers(len(row)))]
    return Triplet((i, VISION), (i, LANGUAGE), (j, LANGUAGE))


def triplet_loss(
    ea: np.ndarray,
    ep: np.ndarray,
    en: np.ndarray,
    margin: float,
    metric: DistanceMetric,
) -> float:
    """max(d(anchor, positive) - d(anchor, negative) + margin, 0)."""
    return max(distance(ea, ep, metric) - distance(ea, en, metric) + margin, 0.0)


def _distances_and_grads(
    u: np.ndarray, v: np.ndarray, metric: DistanceMetric
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise distances plus gradients w.r.t. each row of u and v."""
    if metric is DistanceMetric.COSINE:
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        if np.any(nu == 0.0) or np.any(nv == 0.0):
            raise DivergenceError("embedding collapsed to a zero vector under cosine distance")
        dot = np.sum(u * v, axis=1)
        sim = dot / (nu * nv)
        d = 1.0 - np.clip(sim, -1.0, 1.0)
        du = (sim / nu**2)[:, None] * u - v / (nu * nv)[:, None]
        dv = (sim / nv**2)[:, None] * v - u / (nu * nv)[:, None]
        return d, du, dv
    diff = u - v
    d = np.linalg.norm(diff, axis=1)
    safe = np.where(d > 0.0, d, 1.0)
    du = diff / safe[:, None]
    du[d == 0.0] = 0.0
    return d, du, -du


class _HeadBatch:
    """Collects per-head input rows so each head runs one batched forward/backward."""

    def __init__(self, head: AlignmentHead):
        self.head = head
        self.rows: list[np.ndarray] = []
        self.slots: list[tuple[int, int]] = []  # (role 0/1/2, triplet position)

    def add(self, row: np.ndarray, role: int, position: int) -> int:
        self.rows.append(row)
        self.slots.append((role, position))
        return len(self.rows) - 1

    def embed(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.head.out_dim))
        return forward(self.head, np.stack(self.rows))


def _embed_triplets(
    ds: Dataset,
    triplets: list[Triplet],
    vision_head: AlignmentHead,
    language_head: AlignmentHead,
) -> tuple[_HeadBatch, _HeadBatch, np.ndarray]:
    """Embed every triplet member, returning per-head batches and a (3, b, M) stack."""
    batches = {VISION: _HeadBatch(vision_head), LANGUAGE: _HeadBatch(language_head)}
    placement = []
    for pos, trip in enumerate(triplets):
        for role, (idx, domain) in enumerate((trip.anchor, trip.positive, trip.negative)):
            rec = ds.records[idx]
            row = rec.vision if domain == VISION else rec.language
            batches[domain].add(row, role, pos)
    vis_emb = batches[VISION].embed()
    lang_emb = batches[LANGUAGE].embed()
    out_dim = vision_head.out_dim
    stacked = np.zeros((3, len(triplets), out_dim))
    for emb, batch in ((vis_emb, batches[VISION]), (lang_emb, batches[LANGUAGE])):
        for row_idx, (role, pos) in enumerate(batch.slots):
            stacked[role, pos] = emb[row_idx]
    return batches[VISION], batches[LANGUAGE], stacked


def _triplet_losses_and_embed_grads(
    stacked: np.ndarray, margin: float, metric: DistanceMetric
) -> tuple[np.ndarray, np.ndarray]:
    """Per-triplet losses plus gradients w.r.t. the three embeddings."""
    ea, ep, en = stacked
    d_ap, da_p, dp = _distances_and_grads(ea, ep, metric)
    d_an, da_n, dn = _distances_and_grads(ea, en, metric)
    losses = np.maximum(d_ap - d_an + margin, 0.0)
    active = (losses > 0.0)[:, None]
    grads = np.zeros_like(stacked)
    grads[0] = np.where(active, da_p - da_n, 0.0)
    grads[1] = np.where(active, dp, 0.0)
    grads[2] = np.where(active, -dn, 0.0)
    return losses, grads


def _apply_head_grads(
    batch: _HeadBatch,
    embed_grads: np.ndarray,
    state: AdamState,
) -> tuple[AlignmentHead, AdamState]:
    if not batch.rows:
        return batch.head, state
    grad_out = np.stack([embed_grads[role, pos] for role, pos in batch.slots])
    grads, _ = backward(batch.head, np.stack(batch.rows), grad_out)
    return adam_step(batch.head, grads, state)


def triplet_batch_loss(
    ds: Dataset,
    triplets: list[Triplet],
    vision_head: AlignmentHead,
    language_head: AlignmentHead,
    margin: float,
    metric: DistanceMetric,
) -> float:
    """Mean triplet loss of a batch under the current heads."""
    _, _, stacked = _embed_triplets(ds, triplets, vision_head, language_head)
    losses, _ = _triplet_losses_and_embed_grads(stacked, margin, metric)
    return float(np.mean(losses))


def _sample_triplets(
    ds: Dataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
    count: int,
    index: ClassIndex | None,
    table: FarNegativeTable | None,
) -> list[Triplet]:
    if cfg.mode == SUPERVISED:
        return [sample_triplet_supervised(ds, rng, index) for _ in range(count)]
    return [sample_triplet_unsupervised(ds, table, rng) for _ in range(count)]


def train(ds_train: Dataset, ds_val: Dataset, cfg: TrainConfig) -> TrainResult:
    """Jointly train the vision and language heads with cross-domain triplet loss.

    Each epoch draws ``triplets_per_epoch`` fresh triplets and applies Adam
    on mini-batch mean losses; vision-domain members backpropagate through
    the vision head and language members through the language head.
    Training stops at ``max_epochs`` or once the loss on a fixed validation
    triplet set has not improved for ``patience`` epochs; the
    best-validation parameters are returned. Deterministic given cfg.seed.
    """
    if (ds_train.dim_vision, ds_train.dim_language) != (ds_val.dim_vision, ds_val.dim_language):
        raise ValueError("train and validation datasets have different dimensions")
    rng = np.random.default_rng(cfg.seed)
    vision_head = init_head(ds_train.dim_vision, cfg.embed_dim, int(rng.integers(2**31)))
    language_head = init_head(ds_train.dim_language, cfg.embed_dim, int(rng.integers(2**31)))
    state_v = init_adam(vision_head, cfg.learning_rate)
    state_l = init_adam(language_head, cfg.learning_rate)

    train_index = val_index = None
    train_table = val_table = None
    if cfg.mode == SUPERVISED:
        if not (ds_train.has_labels and ds_val.has_labels):
            raise ValueError("supervised mode requires class labels")
        train_index = build_class_index(ds_train)
        val_index = build_class_index(ds_val)
    else:
        train_table = build_negative_table(ds_train, cfg.negative_quantile, DistanceMetric.COSINE)
        val_table = build_negative_table(ds_val, cfg.negative_quantile, DistanceMetric.COSINE)

    per_epoch = cfg.triplets_per_epoch or 4 * len(ds_train)
    val_triplets = _sample_triplets(ds_val, cfg, rng, 4 * len(ds_val), val_index, val_table)

    best_loss = np.inf
    best = (vision_head, language_head)
    wait = 0
    history: list[EpochRecord] = []
    for epoch in range(cfg.max_epochs):
        triplets = _sample_triplets(ds_train, cfg, rng, per_epoch, train_index, train_table)
        epoch_losses = []
        for start in range(0, len(triplets), cfg.batch_size):
            batch = triplets[start : start + cfg.batch_size]
            vis_batch, lang_batch, stacked = _embed_triplets(
                ds_train, batch, vision_head, language_head
            )
            losses, embed_grads = _triplet_losses_and_embed_grads(stacked, cfg.margin, cfg.metric)
            if not np.all(np.isfinite(losses)):
                raise DivergenceError(
                    f"non-finite triplet loss at epoch {epoch}; try a lower learning rate"
                )
            epoch_losses.append(float(np.mean(losses)))
            embed_grads = embed_grads / len(batch)
            vision_head, state_v = _apply_head_grads(vis_batch, embed_grads, state_v)
            language_head, state_l = _apply_head_grads(lang_batch, embed_grads, state_l)
        train_loss = float(np.mean(epoch_losses))
        val_loss = triplet_batch_loss(
            ds_val, val_triplets, vision_head, language_head, cfg.margin, cfg.metric
        )
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise DivergenceError(f"non-finite epoch loss at epoch {epoch}")
        history.append(EpochRecord(epoch, train_loss, val_loss))
        if val_loss < best_loss - 1e-12:
            best_loss = val_loss
            best = (vision_head, language_head)
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    return TrainResult(best[0], best[1], tuple(history))
