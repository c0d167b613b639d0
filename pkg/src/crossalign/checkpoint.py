"""Checkpoint container for trained alignment maps plus the fitted refinement."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import LinearMap, apply_linear
from .core import Dataset, DatasetError, DistanceMetric
from .metrics import AlignedTestSet
from .netalign import AlignmentHead, Layer, forward
from .procrustes import (
    AblationFlags,
    ProcrustesTransform,
    align_language,
    align_vision,
    fit_procrustes,
)

FORMAT = "crossalign-checkpoint-v1"

AlignmentMap = AlignmentHead | LinearMap


@dataclass(frozen=True)
class Checkpoint:
    method: str
    metric: DistanceMetric
    mode: str
    embed_dim: int
    seed: int
    test_fraction: float
    val_fraction: float
    config: dict
    vision_map: AlignmentMap
    language_map: AlignmentMap
    transform: ProcrustesTransform

    @property
    def fingerprint(self) -> str:
        return config_fingerprint(self.config)

    def input_dims(self) -> tuple[int, int]:
        return _map_in_dim(self.vision_map), _map_in_dim(self.language_map)


def config_fingerprint(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _map_in_dim(m: AlignmentMap) -> int:
    return m.in_dim if isinstance(m, AlignmentHead) else m.weights.shape[0]


def apply_map(m: AlignmentMap, x: np.ndarray) -> np.ndarray:
    return forward(m, x) if isinstance(m, AlignmentHead) else apply_linear(m, x)


def raw_embeddings(ckpt: Checkpoint, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Embed every record through the trained maps, before any refinement."""
    dv, dl = ckpt.input_dims()
    if (ds.dim_vision, ds.dim_language) != (dv, dl):
        raise DatasetError(
            f"checkpoint dimensions (vision {dv}, language {dl}) do not match "
            f"dataset dimensions (vision {ds.dim_vision}, language {ds.dim_language})"
        )
    return apply_map(ckpt.vision_map, ds.vision_matrix()), apply_map(
        ckpt.language_map, ds.language_matrix()
    )


def aligned_test_set(
    ckpt: Checkpoint, ds: Dataset, transform: ProcrustesTransform | None = None
) -> AlignedTestSet:
    """Embed and refine a labeled dataset into an evaluation-ready container."""
    if not ds.has_labels:
        raise DatasetError("evaluation requires class labels on every record")
    t = transform if transform is not None else ckpt.transform
    from .procrustes import align_language, align_vision

    ev, el = raw_embeddings(ckpt, ds)
    return AlignedTestSet(
        align_vision(t, ev),
        align_language(t, el),
        tuple(ds.labels()),
        tuple(ds.pair_ids()),
    )


def fit_transform_for(
    ckpt: Checkpoint, ds_train: Dataset, flags: AblationFlags
) -> ProcrustesTransform:
    """Refit the refinement on training embeddings under the given flags."""
    ev, el = raw_embeddings(ckpt, ds_train)
    return fit_procrustes(ev, el, flags)


def _matrix(values: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in values]


def _vector(values: np.ndarray) -> list[float]:
    return [float(x) for x in values]


def _encode_map(m: AlignmentMap) -> dict:
    if isinstance(m, AlignmentHead):
        return {
            "kind": "head",
            "in_dim": m.in_dim,
            "out_dim": m.out_dim,
            "layers": [
                {"weights": _matrix(layer.weights), "bias": _vector(layer.bias)}
                for layer in m.layers
            ],
        }
    return {
        "kind": "linear",
        "domain": m.domain,
        "mean": _vector(m.mean),
        "weights": _matrix(m.weights),
    }


def _decode_map(obj: dict) -> AlignmentMap:
    if obj["kind"] == "head":
        layers = tuple(
            Layer(np.asarray(l["weights"], dtype=np.float64), np.asarray(l["bias"], dtype=np.float64))
            for l in obj["layers"]
        )
        return AlignmentHead(layers, obj["in_dim"], obj["out_dim"])
    if obj["kind"] == "linear":
        return LinearMap(
            np.asarray(obj["weights"], dtype=np.float64),
            np.asarray(obj["mean"], dtype=np.float64),
            obj["domain"],
        )
    raise DatasetError(f"unknown map kind {obj.get('kind')!r} in checkpoint")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Serialize to JSON; float fields round-trip bit for bit."""
    t = ckpt.transform
    payload = {
        "format": FORMAT,
        "method": ckpt.method,
        "metric": ckpt.metric.value,
        "mode": ckpt.mode,
        "embed_dim": ckpt.embed_dim,
        "seed": ckpt.seed,
        "test_fraction": ckpt.test_fraction,
        "val_fraction": ckpt.val_fraction,
        "config": ckpt.config,
        "fingerprint": ckpt.fingerprint,
        "vision_map": _encode_map(ckpt.vision_map),
        "language_map": _encode_map(ckpt.language_map),
        "transform": {
            "translation": t.flags.translation,
            "scaling": t.flags.scaling,
            "rotation": t.flags.rotation,
            "mean_vision": _vector(t.mean_vision),
            "mean_language": _vector(t.mean_language),
            "scale_vision": float(t.scale_vision),
            "scale_language": float(t.scale_language),
            "rotation_matrix": _matrix(t.rotation),
        },
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != FORMAT:
        raise DatasetError(f"{path}: not a {FORMAT} file")
    t = payload["transform"]
    transform = ProcrustesTransform(
        np.asarray(t["mean_vision"], dtype=np.float64),
        np.asarray(t["mean_language"], dtype=np.float64),
        float(t["scale_vision"]),
        float(t["scale_language"]),
        np.asarray(t["rotation_matrix"], dtype=np.float64),
        AblationFlags(t["translation"], t["scaling"], t["rotation"]),
    )
    return Checkpoint(
        method=payload["method"],
        metric=DistanceMetric(payload["metric"]),
        mode=payload["mode"],
        embed_dim=payload["embed_dim"],
        seed=payload["seed"],
        test_fraction=payload["test_fraction"],
        val_fraction=payload["val_fraction"],
        config=payload["config"],
        vision_map=_decode_map(payload["vision_map"]),
        language_map=_decode_map(payload["language_map"]),
        transform=transform,
    )
