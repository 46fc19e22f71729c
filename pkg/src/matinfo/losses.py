"""Self-supervised objectives and their analytic gradients.

Feature matrices are d x B with one column per sample. Every loss is a sum
over the batch (not a mean). Gradient helpers return arrays with the same
shapes as their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import BadRatio, BadTemperature, IndivisibleLength, ShapeMismatch
from .measures import _check_mu, tcr
from .spectral import standardize_rows


@dataclass(frozen=True)
class LossValue:
    """A loss total together with its named components."""

    total: float
    terms: dict = field(default_factory=dict)

    def __float__(self):
        return self.total

    def to_dict(self) -> dict:
        return {"total": self.total, **self.terms}


def _pair(z1, z2):
    z1 = np.atleast_2d(np.asarray(z1, dtype=float))
    z2 = np.atleast_2d(np.asarray(z2, dtype=float))
    if z1.shape != z2.shape:
        raise ShapeMismatch(f"branch shapes differ: {z1.shape} vs {z2.shape}")
    return z1, z2


def _offdiag(m):
    out = m.copy()
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------- InfoNCE


def _check_temperature(t):
    if not (t > 0 and math.isfinite(t)):
        raise BadTemperature(f"temperature must be positive, got {t!r}")
    return float(t)


def infonce(z1, z2, temperature: float = 1.0) -> LossValue:
    """Symmetric InfoNCE with logits ``z1_i . z2_j / temperature``.

    ``forward`` is the sum of -log softmax over rows (view 1 anchors), and
    ``backward`` the same with view 2 anchors; the total is their average.
    """
    temperature = _check_temperature(temperature)
    z1, z2 = _pair(z1, z2)
    s = z1.T @ z2 / temperature
    forward = -float(np.trace(log_softmax(s, axis=1)))
    backward = -float(np.trace(log_softmax(s, axis=0)))
    return LossValue(0.5 * (forward + backward), {"forward": forward, "backward": backward})


def infonce_grad(z1, z2, temperature: float = 1.0):
    temperature = _check_temperature(temperature)
    z1, z2 = _pair(z1, z2)
    s = z1.T @ z2 / temperature
    ds = 0.5 * (softmax(s, axis=1) + softmax(s, axis=0)) - np.eye(s.shape[0])
    return z2 @ ds.T / temperature, z1 @ ds / temperature


# ---------------------------------------------------- spectral contrastive


def spectral_contrastive(z1, z2, lam: float = 1.0) -> LossValue:
    z1, z2 = _pair(z1, z2)
    alignment = float(np.sum((z1 - z2) ** 2))
    cross = z1.T @ z2
    uniformity = lam * float(np.sum(_offdiag(cross) ** 2))
    return LossValue(alignment + uniformity, {"alignment": alignment, "uniformity": uniformity})


def spectral_contrastive_grad(z1, z2, lam: float = 1.0):
    z1, z2 = _pair(z1, z2)
    off = _offdiag(z1.T @ z2)
    diff = 2.0 * (z1 - z2)
    return diff + 2.0 * lam * z2 @ off.T, -diff + 2.0 * lam * z1 @ off


# ------------------------------------------------------------ Barlow Twins


def cross_correlation(z1, z2) -> np.ndarray:
    """d x d cross-correlation of the batch-normalized branches."""
    z1, z2 = _pair(z1, z2)
    if z1.shape[1] < 2:
        raise ShapeMismatch("cross-correlation needs a batch of at least 2 samples")
    zbar1, _, _ = standardize_rows(z1)
    zbar2, _, _ = standardize_rows(z2)
    return zbar1 @ zbar2.T / z1.shape[1]


def barlow_twins(z1, z2, lam: float = 5e-3) -> LossValue:
    """``sum_i (1 - C_ii)^2 + lam * sum_{i != j} C_ij^2`` over feature dimensions."""
    c = cross_correlation(z1, z2)
    invariance = float(np.sum((1.0 - np.diag(c)) ** 2))
    redundancy = lam * float(np.sum(_offdiag(c) ** 2))
    return LossValue(invariance + redundancy, {"invariance": invariance, "redundancy": redundancy})


def _standardize_backward(grad_bar, zbar, std):
    # backward of row-wise (x - mean) / std with population variance
    return (grad_bar - grad_bar.mean(axis=1, keepdims=True)
            - zbar * np.mean(grad_bar * zbar, axis=1, keepdims=True)) / std


def barlow_twins_grad(z1, z2, lam: float = 5e-3):
    z1, z2 = _pair(z1, z2)
    batch = z1.shape[1]
    zbar1, _, std1 = standardize_rows(z1)
    zbar2, _, std2 = standardize_rows(z2)
    c = zbar1 @ zbar2.T / batch
    dc = 2.0 * lam * _offdiag(c)
    np.fill_diagonal(dc, -2.0 * (1.0 - np.diag(c)))
    g1 = dc @ zbar2 / batch
    g2 = dc.T @ zbar1 / batch
    return _standardize_backward(g1, zbar1, std1), _standardize_backward(g2, zbar2, std2)


# ----------------------------------------------------------------- masking


@dataclass(frozen=True)
class MaskVector:
    """Binary patch mask; ones mark the patches the encoder sees."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits).astype(np.int8)
        if bits.ndim != 1 or not np.isin(bits, (0, 1)).all():
            raise ShapeMismatch("mask must be a 1-D binary vector")
        vis = int(bits.sum())
        if not 1 <= vis <= bits.size - 1:
            raise BadRatio(f"mask must leave both views nonempty, got {vis} of {bits.size} visible")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def visible_count(self) -> int:
        return int(self.bits.sum())

    def __len__(self):
        return self.bits.size


@dataclass(frozen=True)
class PatchedSample:
    patches: np.ndarray  # n x p
    mask: MaskVector

    def __post_init__(self):
        patches = np.array(self.patches, dtype=float)
        if patches.ndim != 2 or patches.shape[0] != len(self.mask):
            raise ShapeMismatch(f"patch grid {patches.shape} does not match mask length {len(self.mask)}")
        patches.setflags(write=False)
        object.__setattr__(self, "patches", patches)

    @property
    def visible(self) -> np.ndarray:
        """Encoder view ``x * m`` (masked patches zeroed)."""
        return self.patches * self.mask.bits[:, None]

    @property
    def target(self) -> np.ndarray:
        """Reconstruction target ``x * (1 - m)``."""
        return self.patches * (1 - self.mask.bits)[:, None]


def visible_count(n: int, ratio: float) -> int:
    if not 0 < ratio < 1:
        raise BadRatio(f"mask ratio must lie in (0, 1), got {ratio!r}")
    if n < 2:
        raise BadRatio("need at least two patches so both views are nonempty")
    return min(max(int(math.floor((1.0 - ratio) * n + 0.5)), 1), n - 1)


def random_mask(n: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    bits = np.zeros(n, dtype=np.int8)
    bits[rng.choice(n, size=visible_count(n, ratio), replace=False)] = 1
    return bits


def random_masks(batch: int, n: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """``batch`` independent masks as a batch x n array (ones are visible)."""
    keep = visible_count(n, ratio)
    order = np.argsort(rng.random((batch, n)), axis=1)
    bits = np.zeros((batch, n), dtype=np.int8)
    np.put_along_axis(bits, order[:, :keep], 1, axis=1)
    return bits


def mask_sample(x, n: int, ratio: float = 0.75, seed=None) -> PatchedSample:
    """Split ``x`` into ``n`` equal patches and draw a random visibility mask."""
    x = np.asarray(x, dtype=float).ravel()
    if n < 1 or x.size % n:
        raise IndivisibleLength(f"length {x.size} is not divisible into {n} patches")
    bits = random_mask(n, ratio, np.random.default_rng(seed))
    return PatchedSample(x.reshape(n, -1), MaskVector(bits))


# --------------------------------------------------------------------- MAE


def _stack(samples: Sequence[PatchedSample]):
    patches = np.stack([s.patches for s in samples])
    hidden = np.stack([1 - s.mask.bits for s in samples]).astype(float)
    return patches, hidden


def masked_reconstruction(predicted, patches, hidden, reduction: str = "sum"):
    """Squared error on hidden patches for batched arrays.

    ``predicted`` and ``patches`` are B x n x p, ``hidden`` is B x n with ones on
    the patches to reconstruct. Returns ``(loss, grad_wrt_predicted)``.
    """
    predicted = np.asarray(predicted, dtype=float)
    if predicted.shape != patches.shape:
        raise ShapeMismatch(f"prediction shape {predicted.shape} does not match patches {patches.shape}")
    resid = (predicted - patches) * hidden[..., None]
    loss = float(np.sum(resid**2))
    grad = 2.0 * resid
    if reduction == "mean":
        count = float(hidden.sum()) * patches.shape[-1]
        loss, grad = loss / count, grad / count
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss, grad


def mae_loss(predicted, samples: Sequence[PatchedSample], reduction: str = "sum") -> LossValue:
    """``sum_i ||g(z_i) - x_i * (1 - m_i)||^2`` restricted to the hidden patches.

    ``reduction="mean"`` averages over hidden patch entries instead.
    """
    patches, hidden = _stack(samples)
    loss, _ = masked_reconstruction(predicted, patches, hidden, reduction)
    return LossValue(loss, {"reconstruction": loss})


def mae_grad(predicted, samples: Sequence[PatchedSample], reduction: str = "sum"):
    patches, hidden = _stack(samples)
    return masked_reconstruction(predicted, patches, hidden, reduction)[1]


# ------------------------------------------------------- M-MAE and U-MAE


def mmae_loss(recon: LossValue, z, lam: float = 0.01, mu: float = 1.0) -> LossValue:
    """``L_MAE - lam * TCR_mu(Z)``."""
    rate = tcr(np.asarray(z, dtype=float), mu).value
    tcr_term = -lam * rate
    return LossValue(recon.total + tcr_term,
                     {"reconstruction": recon.total, "tcr": rate, "tcr_term": tcr_term})


def tcr_gradient(z, mu: float) -> np.ndarray:
    """Gradient of ``ln det(mu I + Z Z^T)``, namely ``2 (mu I + Z Z^T)^{-1} Z``."""
    mu = _check_mu(mu)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    a = mu * np.eye(z.shape[0]) + z @ z.T
    return 2.0 * np.linalg.solve(a, z)


def mmae_grad(z, lam: float = 0.01, mu: float = 1.0) -> np.ndarray:
    """Gradient of the regularizer part ``-lam * TCR_mu(Z)``."""
    return -lam * tcr_gradient(z, mu)


def uniformity(z, lam: float = 0.01, mu: float = 1.0) -> float:
    mu = _check_mu(mu)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return lam / (2.0 * mu**2) * float(np.sum(_offdiag(z.T @ z) ** 2))


def umae_loss(recon: LossValue, z, lam: float = 0.01, mu: float = 1.0) -> LossValue:
    """MAE plus the second-order non-constant term of the M-MAE expansion.

    ``L_MAE + lam / (2 mu^2) * sum_{i != j} (z_i . z_j)^2``
    """
    term = uniformity(z, lam, mu)
    return LossValue(recon.total + term, {"reconstruction": recon.total, "uniformity": term})


def umae_grad(z, lam: float = 0.01, mu: float = 1.0) -> np.ndarray:
    mu = _check_mu(mu)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return 2.0 * lam / mu**2 * z @ _offdiag(z.T @ z)


def taylor_residual(z, mu: float, scales: Sequence[float]) -> list[float]:
    """Gap between ``ln det(I + (sZ)^T (sZ) / mu)`` and its second-order expansion.

    The expansion is ``tr(A) - tr(A^2)/2`` with ``A = (sZ)^T (sZ) / mu``; the
    gap is dominated by ``tr(A^3)/3`` and so scales as ``s^6``.
    """
    mu = _check_mu(mu)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    gram = z.T @ z
    lam = np.clip(np.linalg.eigvalsh((gram + gram.T) / 2), 0.0, None)
    tr1 = float(np.trace(gram))
    tr2 = float(np.sum(gram * gram))
    out = []
    for s in scales:
        if not 0 < s <= 1:
            raise ValueError(f"scales must lie in (0, 1], got {s!r}")
        logdet = float(np.sum(np.log1p(s**2 * lam / mu)))
        second = s**2 * tr1 / mu - s**4 * tr2 / (2.0 * mu**2)
        out.append(abs(logdet - second))
    return out
