"""Deterministic SGD training for Siamese and masked objectives.

Randomness is drawn from generators keyed by ``(seed, purpose, step)`` so a
run is reproducible bit for bit and any single step can be replayed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import losses as L
from ..errors import DivergedLoss
from ..losses import LossValue, masked_reconstruction, random_masks, visible_count
from ..measures import (
    MeasureValue,
    effective_rank,
    eigen_js,
    joint_entropy,
    matrix_js,
    mutual_information,
    tcr,
)
from ..spectral import gram_kernel, kernel_from_features, save_feature_csv
from .config import SandboxConfig
from .data import SyntheticDataset, make_dataset
from .model import Decoder, Encoder, add_grads, sgd_step
from .probe import linear_probe

_INIT, _BATCH, _VIEWS, _EVAL = 0, 3, 5, 7


@dataclass
class TrainRecord:
    step: int
    loss: LossValue
    measures: dict[str, MeasureValue]
    matrices: dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "loss": self.loss.to_dict(),
            "measures": [{"label": label, **m.to_dict()} for label, m in self.measures.items()],
        }

    def value(self, label: str) -> float:
        return self.measures[label].value


@dataclass
class Run:
    config: SandboxConfig
    trajectory: list[TrainRecord]
    encoder: Encoder
    decoder: Decoder | None
    dataset: SyntheticDataset

    def series(self, label: str) -> np.ndarray:
        return np.array([r.value(label) for r in self.trajectory])

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.trajectory])

    @property
    def final(self) -> TrainRecord:
        return self.trajectory[-1]


# ------------------------------------------------------------------ views


def augment(x, config: SandboxConfig, rng: np.random.Generator):
    kind, s = config.augmentation, config.aug_strength
    if kind == "noise":
        return x + s * rng.standard_normal(x.shape)
    if kind == "dropout":
        keep = rng.random(x.shape) >= s
        return x * keep / (1.0 - s)
    return _masked_view(x, config.n_patches, config.patch_size, s, rng)[0]


def _masked_view(x, n, p, ratio, rng):
    batch = x.shape[1]
    bits = random_masks(batch, n, ratio, rng)
    scale = n / visible_count(n, ratio)
    patches = x.T.reshape(batch, n, p)
    view = (patches * (bits * scale)[..., None]).reshape(batch, n * p).T
    return view, patches, bits


# ------------------------------------------------------------- objectives


def siamese_loss(config: SandboxConfig, z1, z2):
    if config.loss == "barlow":
        return L.barlow_twins(z1, z2, config.lam), *L.barlow_twins_grad(z1, z2, config.lam)
    if config.loss == "spectral":
        return L.spectral_contrastive(z1, z2, config.lam), *L.spectral_contrastive_grad(z1, z2, config.lam)
    return L.infonce(z1, z2, config.temperature), *L.infonce_grad(z1, z2, config.temperature)


def siamese_objective(config, encoder, x, rng):
    """Loss and encoder gradients on one batch; views drawn from ``rng``."""
    v1 = augment(x, config, rng)
    v2 = augment(x, config, rng)
    z1, c1 = encoder.forward(v1)
    z2, c2 = encoder.forward(v2)
    loss, g1, g2 = siamese_loss(config, z1, z2)
    grads = add_grads(encoder.backward(g1, c1), encoder.backward(g2, c2))
    return loss, grads, None, (z1, z2)


def masked_objective(config, encoder, decoder, x, rng):
    """Reconstruction (plus regularizer) loss and gradients on one batch."""
    batch = x.shape[1]
    view, patches, bits = _masked_view(x, config.n_patches, config.patch_size, config.mask_ratio, rng)
    z, enc_cache = encoder.forward(view)
    pred, dec_cache = decoder.forward(z)
    recon, dpred = masked_reconstruction(pred.T.reshape(patches.shape), patches,
                                         1.0 - bits, config.reduction)
    recon = LossValue(recon, {"reconstruction": recon})
    if config.loss == "mmae":
        loss = L.mmae_loss(recon, z, config.lam, config.mu)
        dz_reg = L.mmae_grad(z, config.lam, config.mu)
    elif config.loss == "umae":
        loss = L.umae_loss(recon, z, config.lam, config.mu)
        dz_reg = L.umae_grad(z, config.lam, config.mu)
    else:
        loss, dz_reg = recon, None
    dec_grads, dz = decoder.backward(dpred.reshape(batch, -1).T, dec_cache)
    if dz_reg is not None:
        dz = dz + dz_reg
    return loss, encoder.backward(dz, enc_cache), dec_grads, (z,)


def objective(config, encoder, decoder, x, rng):
    if config.siamese:
        return siamese_objective(config, encoder, x, rng)
    return masked_objective(config, encoder, decoder, x, rng)


# --------------------------------------------------------------- records


def siamese_measures(z1, z2, kind="covariance", mu=1.0):
    k1 = kernel_from_features(z1, kind)
    k2 = kernel_from_features(z2, kind)
    measures = {
        "mutual_information": mutual_information(k1, k2, 1.0),
        "joint_entropy": joint_entropy(k1, k2, 1.0),
        "matrix_js": matrix_js(k1, k2),
        "eigen_js": eigen_js(k1, k2),
        "effective_rank": effective_rank(k1.data),
        "tcr": tcr(k1, mu),
    }
    return measures, {"k1": k1.data, "k2": k2.data}


def masked_measures(z, mu=1.0):
    return {
        "tcr": tcr(z, mu),
        "effective_rank": effective_rank(gram_kernel(z).data),
    }


def _eval_batch(config, dataset):
    return dataset.samples[: config.batch].T


def _record(config, encoder, decoder, dataset, step):
    x = _eval_batch(config, dataset)
    rng = np.random.default_rng([config.seed, _EVAL])
    with np.errstate(over="ignore", invalid="ignore"):
        loss, _, _, reps = objective(config, encoder, decoder, x, rng)
    if not math.isfinite(loss.total):
        return TrainRecord(step, loss, {})
    if config.siamese:
        z1, z2 = reps
        measures, matrices = siamese_measures(z1, z2, config.kernel, config.mu)
        matrices.update(z1=z1, z2=z2)
    else:
        (z,) = reps
        measures, matrices = masked_measures(z, config.mu), {"z": z}
    return TrainRecord(step, loss, measures, matrices)


# ----------------------------------------------------------------- loops


def build_model(config: SandboxConfig):
    rng = np.random.default_rng([config.seed, _INIT])
    encoder = Encoder(config.input_dim, config.d, config.hidden, config.encoder, rng)
    decoder = None if config.siamese else Decoder(config.d, config.input_dim, rng)
    return encoder, decoder


def batch_indices(config, step):
    if config.batch >= config.n_samples:
        return np.arange(config.n_samples)
    rng = np.random.default_rng([config.seed, _BATCH, step])
    return np.sort(rng.choice(config.n_samples, size=config.batch, replace=False))


def _finite(encoder, decoder) -> bool:
    params = list(encoder.params.values()) + (list(decoder.params.values()) if decoder is not None else [])
    return all(np.all(np.isfinite(p)) for p in params)


def train(config: SandboxConfig, callback: Callable[[TrainRecord], None] | None = None) -> Run:
    """Train with plain SGD and record measures on a fixed evaluation batch."""
    dataset = make_dataset(config)
    encoder, decoder = build_model(config)
    trajectory: list[TrainRecord] = []

    def record(step):
        rec = _record(config, encoder, decoder, dataset, step)
        if not math.isfinite(rec.loss.total):
            raise DivergedLoss(f"non-finite loss at step {step}", trajectory)
        trajectory.append(rec)
        if callback is not None:
            callback(rec)

    record(0)
    for step in range(1, config.steps + 1):
        x = dataset.samples[batch_indices(config, step)].T
        rng = np.random.default_rng([config.seed, _VIEWS, step])
        with np.errstate(over="ignore", invalid="ignore"):
            loss, enc_grads, dec_grads, _ = objective(config, encoder, decoder, x, rng)
        if not math.isfinite(loss.total) or not all(np.all(np.isfinite(g)) for g in enc_grads.values()):
            raise DivergedLoss(f"non-finite loss at step {step}", trajectory)
        sgd_step(encoder.params, enc_grads, config.lr)
        if decoder is not None:
            sgd_step(decoder.params, dec_grads, config.lr)
        if not _finite(encoder, decoder):
            raise DivergedLoss(f"non-finite parameters after step {step}", trajectory)
        if step % config.record_every == 0 or step == config.steps:
            record(step)
    return Run(config, trajectory, encoder, decoder, dataset)


def train_siamese(config: SandboxConfig, **kwargs) -> Run:
    if not config.siamese:
        raise ValueError(f"{config.loss!r} is not a Siamese loss")
    return train(config, **kwargs)


def train_masked(config: SandboxConfig, **kwargs) -> Run:
    if config.siamese:
        raise ValueError(f"{config.loss!r} is not a masked-modeling loss")
    return train(config, **kwargs)


def representations(run: Run, x=None) -> np.ndarray:
    """Encoder outputs on clean (unaugmented, unmasked) inputs, d x N."""
    x = run.dataset.samples.T if x is None else x
    return run.encoder.forward(x)[0]


def probe_accuracy(run: Run, train_fraction: float = 0.5) -> float:
    """Mean linear-probe test accuracy over the dataset's labelling tasks.

    Features are the encoder outputs on clean inputs; the first
    ``train_fraction`` of the samples train the probe, the rest test it.
    """
    z = representations(run)
    cut = int(round(z.shape[1] * train_fraction))
    labels = run.dataset.labels
    accs = [linear_probe(z[:, :cut], labels[:cut, t], z[:, cut:], labels[cut:, t], seed=run.config.seed)
            for t in range(labels.shape[1])]
    return float(np.mean(accs))


def descent_probe(config, encoder, decoder, x, seed, max_halvings=30) -> bool:
    """True if some step ``t * lr / 2^k`` along the negative gradient lowers the loss."""
    def evaluate(enc_p, dec_p):
        saved_e = encoder.params
        saved_d = decoder.params if decoder is not None else None
        encoder.params = enc_p
        if decoder is not None:
            decoder.params = dec_p
        try:
            return objective(config, encoder, decoder, x, np.random.default_rng(seed))
        finally:
            encoder.params = saved_e
            if decoder is not None:
                decoder.params = saved_d

    base = {k: v.copy() for k, v in encoder.params.items()}
    base_d = {k: v.copy() for k, v in decoder.params.items()} if decoder is not None else None
    loss0, ge, gd, _ = evaluate(base, base_d)
    t = config.lr
    for _ in range(max_halvings):
        enc_p = {k: base[k] - t * ge[k] for k in base}
        dec_p = {k: base_d[k] - t * gd[k] for k in base_d} if decoder is not None else None
        if evaluate(enc_p, dec_p)[0].total < loss0.total:
            return True
        t /= 2
    return False


# ------------------------------------------------------------- outputs


def write_trajectory(run: Run, directory) -> Path:
    """Write ``trajectory.jsonl`` (and feature CSV dumps when configured)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "trajectory.jsonl"
    tmp = path.with_suffix(".jsonl.tmp")
    with tmp.open("w") as handle:
        for rec in run.trajectory:
            handle.write(json.dumps(rec.to_dict(), default=_json_float) + "\n")
    tmp.replace(path)
    if run.config.dump_features:
        for rec in run.trajectory:
            if run.config.siamese:
                save_feature_csv(directory / "features" / "branch1" / f"step_{rec.step}.csv", rec.matrices["z1"])
                save_feature_csv(directory / "features" / "branch2" / f"step_{rec.step}.csv", rec.matrices["z2"])
                save_feature_csv(directory / "kernels" / "branch1" / f"step_{rec.step}.csv", rec.matrices["k1"])
                save_feature_csv(directory / "kernels" / "branch2" / f"step_{rec.step}.csv", rec.matrices["k2"])
            else:
                save_feature_csv(directory / "features" / f"step_{rec.step}.csv", rec.matrices["z"])
    return path


def _json_float(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def mu_sweep(config: SandboxConfig, mus) -> list[dict]:
    """One masked run per mu (shared seed); final erank, TCR and reconstruction loss."""
    rows = []
    for mu in mus:
        run = train_masked(config.replace(mu=float(mu)))
        last = run.final
        rows.append({
            "mu": float(mu),
            "final_erank": last.value("effective_rank"),
            "final_tcr": last.value("tcr"),
            "final_recon": last.loss.terms.get("reconstruction", last.loss.total),
        })
    return rows


def format_sweep(rows) -> str:
    header = "mu\tfinal_erank\tfinal_tcr\tfinal_recon"
    lines = [header]
    for r in rows:
        lines.append("\t".join(repr(float(r[k])) for k in ("mu", "final_erank", "final_tcr", "final_recon")))
    return "\n".join(lines) + "\n"
