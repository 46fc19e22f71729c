"""Declarative run configuration for the training sandbox.

A config file is a flat YAML (or JSON) mapping whose keys are the field
names of :class:`SandboxConfig`. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from ..errors import ConfigError

SIAMESE_LOSSES = ("barlow", "spectral", "infonce")
MASKED_LOSSES = ("mae", "umae", "mmae")
DATASETS = ("latent_linear", "cluster_mixture")
ENCODERS = ("mlp", "affine")
AUGMENTATIONS = ("noise", "dropout", "patch_mask")
KERNELS = ("covariance", "gram")

# loss-specific defaults applied when the field is left unset
_LOSS_DEFAULTS = {
    "barlow": {"lam": 0.125, "lr": 0.05},
    "spectral": {"lam": 1.0, "lr": 0.005},
    "infonce": {"lam": 0.0, "lr": 0.05},
    "mae": {"lam": 0.0, "lr": 0.5},
    "umae": {"lam": 0.01, "lr": 0.5},
    "mmae": {"lam": 0.01, "lr": 0.5},
}


@dataclass(frozen=True)
class SandboxConfig:
    loss: str = "barlow"
    # data
    dataset: str = "latent_linear"
    n_samples: int = 1024
    n_patches: int = 16
    patch_size: int = 4
    latent_dim: int = 6
    noise: float = 0.1
    n_clusters: int = 4
    # model
    encoder: str = "mlp"
    hidden: int = 32
    d: int = 8
    # optimization
    batch: int = 256
    steps: int = 2000
    lr: float | None = None
    record_every: int = 50
    seed: int = 0
    # loss hyperparameters
    lam: float | None = None
    mu: float = 1.0
    temperature: float = 1.0
    mask_ratio: float = 0.75
    reduction: str = "mean"
    # siamese views
    augmentation: str = "noise"
    aug_strength: float = 0.1
    kernel: str = "covariance"
    # output
    dump_features: bool = False

    def __post_init__(self):
        defaults = _LOSS_DEFAULTS.get(self.loss)
        if defaults is None:
            raise ConfigError("loss", f"unknown loss {self.loss!r}; expected one of "
                              f"{SIAMESE_LOSSES + MASKED_LOSSES}")
        for key, value in defaults.items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        self._validate()

    @property
    def siamese(self) -> bool:
        return self.loss in SIAMESE_LOSSES

    @property
    def input_dim(self) -> int:
        return self.n_patches * self.patch_size

    def _validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.dataset in DATASETS, "dataset", f"expected one of {DATASETS}")
        need(self.encoder in ENCODERS, "encoder", f"expected one of {ENCODERS}")
        need(self.augmentation in AUGMENTATIONS, "augmentation", f"expected one of {AUGMENTATIONS}")
        need(self.kernel in KERNELS, "kernel", f"expected one of {KERNELS}")
        need(self.reduction in ("sum", "mean"), "reduction", "expected 'sum' or 'mean'")
        need(1 <= self.d <= 32, "d", "must lie in [1, 32]")
        need(2 <= self.batch <= 512, "batch", "must lie in [2, 512]")
        need(self.batch <= self.n_samples, "batch", "cannot exceed n_samples")
        need(0 <= self.steps <= 20000, "steps", "must lie in [0, 20000]")
        need(self.record_every >= 1, "record_every", "must be at least 1")
        need(self.n_patches >= 2 and self.patch_size >= 1, "n_patches", "need at least two patches")
        need(self.latent_dim >= 1, "latent_dim", "must be positive")
        need(self.n_clusters >= 2, "n_clusters", "need at least two clusters")
        need(self.hidden >= 1, "hidden", "must be positive")
        need(self.noise >= 0, "noise", "must be nonnegative")
        need(self.lr > 0, "lr", "must be positive")
        need(self.lam >= 0, "lam", "must be nonnegative")
        need(self.mu > 0, "mu", "must be positive")
        need(self.temperature > 0, "temperature", "must be positive")
        need(0 < self.mask_ratio < 1, "mask_ratio", "must lie in (0, 1)")
        need(self.aug_strength >= 0, "aug_strength", "must be nonnegative")
        if self.augmentation == "dropout" or self.augmentation == "patch_mask":
            need(self.aug_strength < 1, "aug_strength", "must be below 1 for dropout/masking")

    def replace(self, **changes) -> "SandboxConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SandboxConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(key, "unknown config field")
            kwargs[name] = _coerce(known[name], value)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "SandboxConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(str(path), str(exc)) from exc
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(str(path), f"cannot parse config: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(str(path), "config file must hold a key-value mapping")
        return cls.from_mapping(data)


def _coerce(f, value):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if value is None:
            if "None" in kind:
                return None
            raise ValueError("null is not allowed")
        if kind.startswith("bool"):
            if isinstance(value, str):
                lowered = value.lower()
                if lowered not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(f"not a boolean: {value!r}")
                return lowered in ("true", "1", "yes")
            return bool(value)
        if kind.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if kind.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f.name, str(exc)) from None
