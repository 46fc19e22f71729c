"""Dense symmetric linear algebra for kernel matrices.

Eigendecomposition, PSD sanitation, matrix functions, Hadamard products and
the two constructions of unit-diagonal kernels from a feature matrix
(columns are samples):

    covariance_kernel(Z)  d x d, rows standardized over the batch
    gram_kernel(Z)        B x B, columns l2-normalized
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    BadAlpha,
    BadDiagonal,
    EigFailure,
    NonSymmetric,
    NotPSD,
    ParseError,
    ShapeMismatch,
    SingularLog,
    SizeMismatch,
    ZeroColumn,
    ZeroVariance,
)

SYMMETRY_TOL = 1e-8
CLAMP_RTOL = 1e-8
DIAGONAL_TOL = 1e-6
RANK_RTOL = 1e-8
LOG_RTOL = 1e-12
UNIT_COLUMN_TOL = 1e-10


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class KernelKind(str, enum.Enum):
    COVARIANCE = "covariance"
    GRAM = "gram"


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in nonincreasing order.

    ``clamped_count`` records how many slightly negative eigenvalues were
    set to zero during sanitation.
    """

    eigenvalues: np.ndarray
    clamped_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def __len__(self):
        return len(self.eigenvalues)


@dataclass(frozen=True)
class FeatureMatrix:
    """A d x B matrix whose columns are the representations of B samples."""

    data: np.ndarray
    unit_columns: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeMismatch(f"feature matrix must be a nonempty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeMismatch("feature matrix has non-finite entries")
        if self.unit_columns:
            norms = np.linalg.norm(data, axis=0)
            bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_COLUMN_TOL)
            if bad.size:
                raise ShapeMismatch(f"column {bad[0]} has norm {norms[bad[0]]!r}, expected 1")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def batch(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @classmethod
    def normalized(cls, data) -> "FeatureMatrix":
        """Build a unit-column feature matrix by l2-normalizing each column."""
        data = np.asarray(data, dtype=float)
        norms = np.linalg.norm(data, axis=0)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ZeroColumn(int(zero[0]))
        return cls(data / norms, unit_columns=True)


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric PSD matrix with unit diagonal.

    Build these through :func:`psd_sanitize`, :func:`covariance_kernel` or
    :func:`gram_kernel` rather than directly; the constructor trusts its input.
    """

    data: np.ndarray
    kind: KernelKind | None = None
    clamped_count: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @cached_property
    def eig(self) -> tuple[Spectrum, np.ndarray]:
        spectrum, vectors = symmetric_eig(self.data)
        vals = spectrum.eigenvalues
        neg = vals < 0
        # eigenvalues at roundoff level are exact zeros; matters for alpha < 1
        floor = self.n * np.finfo(float).eps * max(float(vals[0]), 0.0)
        clamped = np.where(vals <= floor, 0.0, vals)
        return Spectrum(clamped, int(np.count_nonzero(neg)) + self.clamped_count), vectors

    @property
    def spectrum(self) -> Spectrum:
        return self.eig[0]


def _max_asymmetry(m):
    return float(np.max(np.abs(m - m.T))) if m.size else 0.0


def _square(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ShapeMismatch(f"{name} has non-finite entries")
    return m


def symmetric_eig(m) -> tuple[Spectrum, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix.

    Returns the spectrum (nonincreasing, unclamped) and the matching
    orthonormal eigenvectors as columns.
    """
    m = _square(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if _max_asymmetry(m) > SYMMETRY_TOL * scale:
        raise NonSymmetric(f"matrix asymmetry {_max_asymmetry(m):.3e} exceeds tolerance")
    try:
        vals, vecs = np.linalg.eigh((m + m.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise EigFailure(str(exc)) from exc
    order = np.argsort(vals)[::-1]
    return Spectrum(vals[order]), vecs[:, order]


def _unit_diagonal(m):
    if np.all(np.diag(m) == 1.0):
        return m
    d = np.sqrt(np.diag(m))
    out = m / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return out


def psd_sanitize(m, kind: KernelKind | None = None) -> KernelMatrix:
    """Validate an (empirical) kernel estimate and return a :class:`KernelMatrix`.

    Eigenvalues slightly below zero (magnitude at most ``1e-8 * lambda_max``)
    are clamped; a diagonal within ``1e-6`` of one is rescaled to exactly one.
    Anything worse is rejected.
    """
    if isinstance(m, KernelMatrix):
        return m
    m = _square(m, "kernel")
    spectrum, vecs = symmetric_eig(m)
    vals = spectrum.eigenvalues
    lam_max = float(vals[0])
    floor = -CLAMP_RTOL * abs(lam_max)
    if vals[-1] < floor:
        raise NotPSD(f"eigenvalue {vals[-1]:.3e} below clamp floor {floor:.3e}")
    deviation = np.max(np.abs(np.diag(m) - 1.0))
    if deviation > DIAGONAL_TOL:
        raise BadDiagonal(f"diagonal deviates from 1 by {deviation:.3e}")

    neg = vals < 0
    clamped = int(np.count_nonzero(neg))
    if clamped:
        out = (vecs * np.where(neg, 0.0, vals)) @ vecs.T
    else:
        out = m
    out = (out + out.T) / 2
    return KernelMatrix(_unit_diagonal(out), kind, clamped)


def as_kernel(k) -> KernelMatrix:
    return k if isinstance(k, KernelMatrix) else psd_sanitize(k)


def standardize_rows(z):
    """Standardize every row over the batch (population variance).

    Returns ``(zbar, mean, std)``. Raises :class:`ZeroVariance` for constant rows.
    """
    z = np.asarray(z, dtype=float)
    mean = z.mean(axis=1, keepdims=True)
    centered = z - mean
    std = np.sqrt(np.mean(centered**2, axis=1, keepdims=True))
    scale = np.max(np.abs(z), axis=1, keepdims=True)
    dead = np.flatnonzero((std <= 1e-12 * scale).ravel() | (scale.ravel() == 0))
    if dead.size:
        raise ZeroVariance(int(dead[0]))
    return centered / std, mean, std


def covariance_kernel(z) -> KernelMatrix:
    """Batch-normalized sample covariance ``(1/B) Zbar Zbar^T`` (d x d)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ShapeMismatch(f"expected a d x B matrix, got shape {z.shape}")
    if z.shape[1] < 2:
        raise ShapeMismatch("covariance kernel needs a batch of at least 2 samples")
    zbar, _, _ = standardize_rows(z)
    k = zbar @ zbar.T / z.shape[1]
    return psd_sanitize((k + k.T) / 2, KernelKind.COVARIANCE)


def gram_kernel(z) -> KernelMatrix:
    """Gram matrix of l2-normalized columns (B x B)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ShapeMismatch(f"expected a d x B matrix, got shape {z.shape}")
    norms = np.linalg.norm(z, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroColumn(int(zero[0]))
    zn = z / norms
    k = zn.T @ zn
    return psd_sanitize((k + k.T) / 2, KernelKind.GRAM)


def kernel_from_features(z, kind="covariance") -> KernelMatrix:
    kind = KernelKind(kind)
    return covariance_kernel(z) if kind is KernelKind.COVARIANCE else gram_kernel(z)


def hadamard(k1, k2) -> KernelMatrix:
    k1, k2 = as_kernel(k1), as_kernel(k2)
    if k1.shape != k2.shape:
        raise SizeMismatch(f"kernel sizes differ: {k1.n} vs {k2.n}")
    kind = k1.kind if k1.kind == k2.kind else None
    return psd_sanitize(k1.data * k2.data, kind)


def matrix_power(k, alpha: float) -> np.ndarray:
    """``K^alpha`` through the spectrum, with ``0^alpha = 0``."""
    if not alpha > 0:
        raise BadAlpha(f"alpha must be positive, got {alpha!r}")
    k = as_kernel(k)
    spectrum, vecs = k.eig
    vals = spectrum.eigenvalues
    powered = np.zeros_like(vals)
    pos = vals > 0
    powered[pos] = vals[pos] ** alpha
    out = (vecs * powered) @ vecs.T
    return (out + out.T) / 2


def matrix_log(m) -> np.ndarray:
    """Principal logarithm of a symmetric positive definite matrix."""
    spectrum, vecs = symmetric_eig(m)
    vals = spectrum.eigenvalues
    if vals[0] <= 0 or vals[-1] <= LOG_RTOL * vals[0]:
        raise SingularLog(f"smallest eigenvalue {vals[-1]:.3e} too small for a matrix logarithm")
    out = (vecs * np.log(vals)) @ vecs.T
    return (out + out.T) / 2


def numerical_rank(k, rtol: float = RANK_RTOL) -> int:
    vals = as_kernel(k).spectrum.eigenvalues
    if vals[0] <= 0:
        return 0
    return int(np.count_nonzero(vals > rtol * vals[0]))


def load_feature_csv(path) -> FeatureMatrix:
    """Read a headerless CSV with one row per feature dimension and one column per sample."""
    path = Path(path)
    rows = []
    width = None
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise ParseError(path, 0, str(exc)) from exc
    with handle:
        for lineno, row in enumerate(csv.reader(handle), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ParseError(path, lineno, f"not a number ({exc})") from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(path, lineno, "non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(path, lineno, f"expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise ParseError(path, 0, "file contains no data")
    return FeatureMatrix(np.array(rows))


def save_feature_csv(path, z) -> None:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in z:
            writer.writerow([repr(float(v)) for v in row])
