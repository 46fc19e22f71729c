"""Matrix information measures on unit-diagonal kernels.

All values are in nats. Entropies use the normalized spectrum ``lambda_i / n``
of an n x n kernel, with the conventions ``0^alpha = 0`` and ``0 ln 0 = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroMatrix, BadAlpha, BadMu, NotPSD, SingularSecondArgument, SizeMismatch
from .spectral import (
    CLAMP_RTOL,
    LOG_RTOL,
    KernelMatrix,
    as_kernel,
    hadamard,
    symmetric_eig,
)


class Measure(str, enum.Enum):
    RENYI_ENTROPY = "renyi_entropy"
    VON_NEUMANN_ENTROPY = "von_neumann_entropy"
    MUTUAL_INFO = "mutual_information"
    JOINT_ENTROPY = "joint_entropy"
    MATRIX_KL = "matrix_kl"
    MATRIX_JS = "matrix_js"
    EIGEN_JS = "eigen_js"
    TCR = "tcr"
    EFFECTIVE_RANK = "effective_rank"


@dataclass(frozen=True)
class MeasureValue:
    name: Measure
    value: float
    alpha: float | None = None
    mu: float | None = None

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        out = {"name": Measure(self.name).value}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.mu is not None:
            out["mu"] = self.mu
        out["value"] = self.value
        return out


def _check_alpha(alpha):
    if not (isinstance(alpha, (int, float, np.floating)) and alpha > 0 and np.isfinite(alpha)):
        raise BadAlpha(f"alpha must be a positive real, got {alpha!r}")
    return float(alpha)


def _check_mu(mu):
    if not (isinstance(mu, (int, float, np.floating)) and mu > 0 and np.isfinite(mu)):
        raise BadMu(f"mu must be a positive real, got {mu!r}")
    return float(mu)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def spectrum_entropy(eigenvalues, n: int, alpha: float = 1.0) -> float:
    """Matrix entropy of order ``alpha`` from the eigenvalues of an n x n kernel."""
    p = np.asarray(eigenvalues, dtype=float) / n
    p = p[p > 0]
    if alpha == 1:
        return float(-np.sum(p * np.log(p)))
    return float(np.log(np.sum(p**alpha)) / (1.0 - alpha))


def _entropy(k: KernelMatrix, alpha: float) -> float:
    return spectrum_entropy(k.spectrum.eigenvalues, k.n, alpha)


def _pair(k1, k2):
    k1, k2 = as_kernel(k1), as_kernel(k2)
    if k1.shape != k2.shape:
        raise SizeMismatch(f"kernel sizes differ: {k1.n} vs {k2.n}")
    return k1, k2


def von_neumann_entropy(k) -> MeasureValue:
    k = as_kernel(k)
    return MeasureValue(Measure.VON_NEUMANN_ENTROPY, _entropy(k, 1.0), alpha=1.0)


def renyi_entropy(k, alpha: float) -> MeasureValue:
    """``1/(1-alpha) * ln tr((K/n)^alpha)``; alpha = 1 gives the von Neumann entropy."""
    alpha = _check_alpha(alpha)
    if alpha == 1.0:
        return von_neumann_entropy(k)
    k = as_kernel(k)
    return MeasureValue(Measure.RENYI_ENTROPY, _entropy(k, alpha), alpha=alpha)


def mutual_information(k1, k2, alpha: float = 1.0) -> MeasureValue:
    """``H(K1) + H(K2) - H(K1 * K2)`` with ``*`` the Hadamard product."""
    alpha = _check_alpha(alpha)
    k1, k2 = _pair(k1, k2)
    joint = hadamard(k1, k2)
    value = _entropy(k1, alpha) + _entropy(k2, alpha) - _entropy(joint, alpha)
    return MeasureValue(Measure.MUTUAL_INFO, value, alpha=alpha)


def joint_entropy(k1, k2, alpha: float = 1.0) -> MeasureValue:
    alpha = _check_alpha(alpha)
    k1, k2 = _pair(k1, k2)
    return MeasureValue(Measure.JOINT_ENTROPY, _entropy(hadamard(k1, k2), alpha), alpha=alpha)


def _psd_eig(m):
    if isinstance(m, KernelMatrix):
        spectrum, vecs = m.eig
        return spectrum.eigenvalues, vecs
    spectrum, vecs = symmetric_eig(m)
    vals = spectrum.eigenvalues
    if vals[-1] < -CLAMP_RTOL * abs(vals[0]):
        raise NotPSD(f"eigenvalue {vals[-1]:.3e} below clamp floor")
    return np.clip(vals, 0.0, None), vecs


def matrix_kl(k1, k2) -> MeasureValue:
    """``tr[K1 (log K1 - log K2)]``.

    ``K1`` may be singular; ``K2`` must be strictly positive definite. There is
    no trace normalization.
    """
    vals1, vecs1 = _psd_eig(k1)
    spectrum2, vecs2 = symmetric_eig(np.asarray(k2, dtype=float))
    vals2 = spectrum2.eigenvalues
    if vecs1.shape != vecs2.shape:
        raise SizeMismatch(f"matrix sizes differ: {vecs1.shape[0]} vs {vecs2.shape[0]}")
    if vals2[0] <= 0 or vals2[-1] <= LOG_RTOL * vals2[0]:
        raise SingularSecondArgument(f"second argument has eigenvalue {vals2[-1]:.3e}")
    pos = vals1 > 0
    self_term = float(np.sum(vals1[pos] * np.log(vals1[pos])))
    # tr[K1 log K2] = sum_ij lambda1_i ln(lambda2_j) <u_i, v_j>^2
    overlap = (vecs1.T @ vecs2) ** 2
    cross = float(vals1 @ overlap @ np.log(vals2))
    return MeasureValue(Measure.MATRIX_KL, self_term - cross)


def matrix_js(k1, k2) -> MeasureValue:
    """``H1((K1 + K2)/2) - (H1(K1) + H1(K2))/2``."""
    k1, k2 = _pair(k1, k2)
    mid = as_kernel((k1.data + k2.data) / 2)
    value = _entropy(mid, 1.0) - 0.5 * (_entropy(k1, 1.0) + _entropy(k2, 1.0))
    return MeasureValue(Measure.MATRIX_JS, value)


def js_divergence(p, q) -> float:
    """Classical Jensen-Shannon divergence of two probability vectors (nats)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = (p + q) / 2

    def kl(a):
        pos = a > 0
        return float(np.sum(a[pos] * np.log(a[pos] / m[pos])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def eigen_distribution(k) -> np.ndarray:
    k = as_kernel(k)
    return k.spectrum.eigenvalues / k.n


def eigen_js(k1, k2) -> MeasureValue:
    """JS divergence between the descending normalized spectra of two kernels."""
    k1, k2 = _pair(k1, k2)
    return MeasureValue(Measure.EIGEN_JS, js_divergence(eigen_distribution(k1), eigen_distribution(k2)))


def tcr(x, mu: float) -> MeasureValue:
    """Total coding rate ``ln det(mu I + Z Z^T)``.

    A :class:`KernelMatrix` argument is taken to already be ``Z Z^T``; anything
    else is treated as the d x B feature matrix ``Z``.
    """
    mu = _check_mu(mu)
    if isinstance(x, KernelMatrix):
        vals = x.spectrum.eigenvalues
    else:
        z = np.atleast_2d(np.asarray(x, dtype=float))
        s = np.linalg.svd(z, compute_uv=False)
        vals = np.zeros(z.shape[0])
        vals[: len(s)] = s**2
    return MeasureValue(Measure.TCR, float(np.sum(np.log(mu + vals))), mu=mu)


def effective_rank(a) -> MeasureValue:
    """``exp`` of the Shannon entropy of the normalized singular values."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    s = np.linalg.svd(a, compute_uv=False)
    total = float(np.sum(s))
    if total == 0:
        raise AllZeroMatrix("effective rank is undefined for the all-zero matrix")
    return MeasureValue(Measure.EFFECTIVE_RANK, float(np.exp(shannon_entropy(s / total))))
