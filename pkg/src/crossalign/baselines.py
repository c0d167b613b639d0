"""Linear CCA and the paired-cosine baseline, sharing the alignment-head interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, DistanceMetric
from .netalign import DivergenceError, adam_step, backward, forward, init_adam, init_head
from .triplet import EpochRecord, TrainConfig, TrainResult, _distances_and_grads


@dataclass(frozen=True)
class LinearMap:
    """Centered linear projection of one domain into the shared space."""

    weights: np.ndarray  # (input_dim, k)
    mean: np.ndarray  # (input_dim,)
    domain: str


def _inv_sqrt_psd(cov: np.ndarray, ridge: float) -> np.ndarray:
    dim = cov.shape[0]
    trace = float(np.trace(cov))
    if ridge > 0.0:
        if trace <= 0.0:
            raise np.linalg.LinAlgError("covariance has nonpositive trace; data is degenerate")
        cov = cov + ridge * (trace / dim) * np.eye(dim)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[0] <= eigvals[-1] * 1e-14 or eigvals[0] <= 0.0:
        raise np.linalg.LinAlgError(
            "singular covariance matrix; increase the ridge regularization"
        )
    return eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T


def fit_cca(
    vision: np.ndarray,
    language: np.ndarray,
    k: int,
    ridge: float = 1e-6,
) -> tuple[LinearMap, LinearMap, np.ndarray]:
    """Canonical correlation analysis via covariance whitening and SVD.

    The ridge is relative: each covariance receives ridge * (trace / dim)
    on its diagonal before whitening. Returns the two projection maps and
    the k canonical correlations, sorted descending.

    Args:
        vision: (n, dim_vision) data matrix.
        language: (n, dim_language) data matrix, row-paired with vision.
        k: number of canonical components, at most min(dims, n - 1).
        ridge: relative diagonal regularization (>= 0).
    """
    x = np.asarray(vision, dtype=np.float64)
    y = np.asarray(language, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"expected row-paired matrices, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("CCA requires at least 2 rows")
    max_k = min(x.shape[1], y.shape[1], n - 1)
    if not 1 <= k <= max_k:
        raise ValueError(f"k must be in [1, {max_k}], got {k}")
    if ridge < 0.0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    mean_x = x.mean(axis=0)
    mean_y = y.mean(axis=0)
    xc = x - mean_x
    yc = y - mean_y
    cov_xx = xc.T @ xc / (n - 1)
    cov_yy = yc.T @ yc / (n - 1)
    cov_xy = xc.T @ yc / (n - 1)
    whiten_x = _inv_sqrt_psd(cov_xx, ridge)
    whiten_y = _inv_sqrt_psd(cov_yy, ridge)
    u, sing, vt = np.linalg.svd(whiten_x @ cov_xy @ whiten_y)
    w_x = whiten_x @ u[:, :k]
    w_y = whiten_y @ vt[:k].T
    return (
        LinearMap(w_x, mean_x, "vision"),
        LinearMap(w_y, mean_y, "language"),
        sing[:k],
    )


def apply_linear(lin: LinearMap, x: np.ndarray) -> np.ndarray:
    """(x - mean) @ W, for a vector or row-stacked matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != lin.weights.shape[0]:
        raise ValueError(
            f"input dimension {arr.shape[-1]} != map input dimension {lin.weights.shape[0]}"
        )
    return (arr - lin.mean) @ lin.weights


def train_cosine_baseline(ds_train: Dataset, ds_val: Dataset, cfg: TrainConfig) -> TrainResult:
    """Train both heads to minimize the cosine distance of each paired embedding.

    Identical architecture, optimizer, batching, and early stopping to the
    triplet trainer, but the per-pair loss is cosine_distance(f_v(vision),
    f_l(language)) with no negatives. Deterministic given cfg.seed.
    """
    if (ds_train.dim_vision, ds_train.dim_language) != (ds_val.dim_vision, ds_val.dim_language):
        raise ValueError("train and validation datasets have different dimensions")
    rng = np.random.default_rng(cfg.seed)
    vision_head = init_head(ds_train.dim_vision, cfg.embed_dim, int(rng.integers(2**31)))
    language_head = init_head(ds_train.dim_language, cfg.embed_dim, int(rng.integers(2**31)))
    state_v = init_adam(vision_head, cfg.learning_rate)
    state_l = init_adam(language_head, cfg.learning_rate)

    train_v = ds_train.vision_matrix()
    train_l = ds_train.language_matrix()
    val_v = ds_val.vision_matrix()
    val_l = ds_val.language_matrix()
    per_epoch = cfg.triplets_per_epoch or 4 * len(ds_train)

    def pair_loss(xv: np.ndarray, xl: np.ndarray) -> float:
        d, _, _ = _distances_and_grads(
            forward(vision_head, xv), forward(language_head, xl), DistanceMetric.COSINE
        )
        return float(np.mean(d))

    best_loss = np.inf
    best = (vision_head, language_head)
    wait = 0
    history: list[EpochRecord] = []
    for epoch in range(cfg.max_epochs):
        picks = rng.integers(len(ds_train), size=per_epoch)
        epoch_losses = []
        for start in range(0, per_epoch, cfg.batch_size):
            batch = picks[start : start + cfg.batch_size]
            xv = train_v[batch]
            xl = train_l[batch]
            ev = forward(vision_head, xv)
            el = forward(language_head, xl)
            d, dv, dl = _distances_and_grads(ev, el, DistanceMetric.COSINE)
            if not np.all(np.isfinite(d)):
                raise DivergenceError(f"non-finite pair loss at epoch {epoch}")
            epoch_losses.append(float(np.mean(d)))
            grads_v, _ = backward(vision_head, xv, dv / batch.size)
            grads_l, _ = backward(language_head, xl, dl / batch.size)
            vision_head, state_v = adam_step(vision_head, grads_v, state_v)
            language_head, state_l = adam_step(language_head, grads_l, state_l)
        train_loss = float(np.mean(epoch_losses))
        val_loss = pair_loss(val_v, val_l)
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
