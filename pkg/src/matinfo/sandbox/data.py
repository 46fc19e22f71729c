"""Synthetic stand-ins for image datasets.

Each sample is a flat vector of ``n_patches * patch_size`` values. Datasets
are a pure function of the config fields they read and the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SandboxConfig

LATENT_DECAY = 0.7
CLUSTER_SPREAD = 0.5


@dataclass(frozen=True)
class SyntheticDataset:
    samples: np.ndarray  # N x D, one row per sample
    labels: np.ndarray  # N x T, one column per labelling task
    generator: str
    seed: int

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.labels.shape[1]


def latent_linear(n_samples, dim, latent_dim, noise, seed):
    """``x = W h + noise`` with an anisotropic Gaussian latent ``h``.

    Latent scales decay geometrically, so reconstruction-driven encoders
    favour the first coordinates. Labels are the thresholded latent: one
    binary task per coordinate, ``h_k > 0``.
    """
    rng = np.random.default_rng([seed, 1])
    scales = LATENT_DECAY ** np.arange(latent_dim)
    mixing = rng.standard_normal((dim, latent_dim)) / np.sqrt(latent_dim)
    h = rng.standard_normal((n_samples, latent_dim))
    x = (h * scales) @ mixing.T + noise * rng.standard_normal((n_samples, dim))
    labels = (h > 0).astype(int)
    return x, labels


def cluster_mixture(n_samples, dim, n_clusters, noise, seed):
    rng = np.random.default_rng([seed, 2])
    centers = rng.standard_normal((n_clusters, dim)) / np.sqrt(dim) * 2.0
    labels = rng.integers(0, n_clusters, size=n_samples)
    x = centers[labels] + CLUSTER_SPREAD / np.sqrt(dim) * rng.standard_normal((n_samples, dim))
    x += noise * rng.standard_normal((n_samples, dim))
    return x, labels[:, None]


def make_dataset(config: SandboxConfig, seed: int | None = None) -> SyntheticDataset:
    seed = config.seed if seed is None else seed
    if config.dataset == "latent_linear":
        x, y = latent_linear(config.n_samples, config.input_dim, config.latent_dim, config.noise, seed)
    else:
        x, y = cluster_mixture(config.n_samples, config.input_dim, config.n_clusters, config.noise, seed)
    x.setflags(write=False)
    y.setflags(write=False)
    return SyntheticDataset(x, y, config.dataset, seed)
