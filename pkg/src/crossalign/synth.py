"""Deterministic paired two-domain dataset generator with latent class structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, PairRecord, make_dataset

LINEAR = "linear"
TANH = "tanh"


@dataclass
class SynthConfig:
    n_classes: int = 5
    per_class: int = 40
    latent_dim: int = 8
    dim_vision: int = 64
    dim_language: int = 48
    class_separation: float = 3.0
    noise_sigma: float = 0.3
    nonlinearity: str = LINEAR
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_classes", "per_class", "latent_dim", "dim_vision", "dim_language"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.class_separation <= 0:
            raise ValueError(f"class_separation must be > 0, got {self.class_separation}")
        if self.nonlinearity not in (LINEAR, TANH):
            raise ValueError(f"nonlinearity must be {LINEAR!r} or {TANH!r}")


def generate(cfg: SynthConfig, return_latents: bool = False):
    """Generate a labeled paired dataset from a shared latent cluster structure.

    Class centers sit on a sphere of radius class_separation in latent
    space; each pair draws one noisy latent point and maps it through two
    independent fixed random projections (entries N(0, 1/latent_dim)),
    optionally followed by elementwise tanh. Deterministic given cfg.seed.

    Returns the Dataset, or (Dataset, latents) when return_latents is set.
    """
    rng = np.random.default_rng(cfg.seed)
    centers = rng.standard_normal((cfg.n_classes, cfg.latent_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= cfg.class_separation
    map_vision = rng.standard_normal((cfg.latent_dim, cfg.dim_vision)) / np.sqrt(cfg.latent_dim)
    map_language = rng.standard_normal((cfg.latent_dim, cfg.dim_language)) / np.sqrt(
        cfg.latent_dim
    )
    n = cfg.n_classes * cfg.per_class
    latents = np.repeat(centers, cfg.per_class, axis=0)
    latents = latents + cfg.noise_sigma * rng.standard_normal((n, cfg.latent_dim))
    vision = latents @ map_vision
    language = latents @ map_language
    if cfg.nonlinearity == TANH:
        vision = np.tanh(vision)
        language = np.tanh(language)
    records = []
    for i in range(n):
        records.append(
            PairRecord(
                pair_id=f"pair_{i:05d}",
                vision=vision[i],
                language=language[i],
                class_label=f"class_{i // cfg.per_class}",
            )
        )
    ds = make_dataset(records)
    if return_latents:
        return ds, latents
    return ds
