"""Closed-form translation/scaling/rotation refinement between two embedded clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AblationFlags:
    translation: bool = True
    scaling: bool = True
    rotation: bool = True


@dataclass(frozen=True)
class ProcrustesTransform:
    """Fitted refinement parameters; disabled components are stored as identities."""

    mean_vision: np.ndarray
    mean_language: np.ndarray
    scale_vision: float
    scale_language: float
    rotation: np.ndarray
    flags: AblationFlags

    @property
    def dim(self) -> int:
        return self.mean_vision.shape[0]


def identity_transform(dim: int) -> ProcrustesTransform:
    """A transform that leaves both domains untouched (all components disabled)."""
    return ProcrustesTransform(
        np.zeros(dim),
        np.zeros(dim),
        1.0,
        1.0,
        np.eye(dim),
        AblationFlags(False, False, False),
    )


def fit_procrustes(
    embedded_vision: np.ndarray,
    embedded_language: np.ndarray,
    flags: AblationFlags = AblationFlags(),
) -> ProcrustesTransform:
    """Fit means, Frobenius scales, and the optimal orthogonal rotation.

    The rotation maps the centered, scale-normalized language cloud onto
    the vision cloud: with A the normalized vision rows and B the
    normalized language rows, R = U Vt from the SVD of B.T A, and
    align_language right-multiplies rows by R. Reflections are permitted.
    Disabled components become zero means, unit scales, or the identity
    rotation, and the remaining components are fit on the correspondingly
    unadjusted matrices.
    """
    ev = np.asarray(embedded_vision, dtype=np.float64)
    el = np.asarray(embedded_language, dtype=np.float64)
    if ev.ndim != 2 or ev.shape != el.shape:
        raise ValueError(f"expected row-paired matrices of equal shape, got {ev.shape} and {el.shape}")
    if ev.shape[0] < 2:
        raise ValueError("Procrustes fit requires at least 2 rows")
    dim = ev.shape[1]
    mean_v = ev.mean(axis=0) if flags.translation else np.zeros(dim)
    mean_l = el.mean(axis=0) if flags.translation else np.zeros(dim)
    centered_v = ev - mean_v
    centered_l = el - mean_l
    if flags.scaling:
        scale_v = float(np.linalg.norm(centered_v))
        scale_l = float(np.linalg.norm(centered_l))
        if scale_v == 0.0 or scale_l == 0.0:
            raise ValueError("degenerate embeddings: zero Frobenius spread with scaling enabled")
    else:
        scale_v = scale_l = 1.0
    if flags.rotation:
        a = centered_v / scale_v
        b = centered_l / scale_l
        u, _, vt = np.linalg.svd(b.T @ a)
        rotation = u @ vt
    else:
        rotation = np.eye(dim)
    return ProcrustesTransform(mean_v, mean_l, scale_v, scale_l, rotation, flags)


def _check_dim(t: ProcrustesTransform, e: np.ndarray) -> np.ndarray:
    arr = np.asarray(e, dtype=np.float64)
    if arr.shape[-1] != t.dim:
        raise ValueError(f"embedding dimension {arr.shape[-1]} != transform dimension {t.dim}")
    return arr


def align_vision(t: ProcrustesTransform, e: np.ndarray) -> np.ndarray:
    """(e - mean_vision) / scale_vision, for a vector or row-stacked matrix."""
    arr = _check_dim(t, e)
    return (arr - t.mean_vision) / t.scale_vision


def align_language(t: ProcrustesTransform, e: np.ndarray) -> np.ndarray:
    """((e - mean_language) / scale_language) rotated onto the vision cloud."""
    arr = _check_dim(t, e)
    return ((arr - t.mean_language) / t.scale_language) @ t.rotation
