"""Kernel matrices and the kernel-induced squared distance matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import InputError, ParameterError

__all__ = [
    "KernelMatrix",
    "KernelDiagnostics",
    "rbf_kernel",
    "linear_kernel",
    "kernel_distance",
    "validate_kernel",
    "as_kernel",
    "PSD_RTOL",
]

# smallest eigenvalue may dip to -PSD_RTOL * largest eigenvalue
PSD_RTOL = 1e-8
SYMMETRY_RTOL = 1e-10


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KernelMatrix:
    """Symmetric n x n similarity matrix.

    ``radius`` is set when the matrix came from :func:`rbf_kernel` and is
    ``None`` for linear or externally supplied kernels.
    """

    values: np.ndarray
    radius: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class KernelDiagnostics:
    symmetry_deviation: float
    min_eigenvalue: float
    max_eigenvalue: float
    min_entry: float
    max_entry: float
    finite: bool

    @property
    def symmetric(self) -> bool:
        scale = max(abs(self.min_entry), abs(self.max_entry), 1.0)
        return self.symmetry_deviation <= SYMMETRY_RTOL * scale

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -PSD_RTOL * max(self.max_eigenvalue, 0.0)

    @property
    def nonnegative(self) -> bool:
        return self.min_entry >= 0.0

    @property
    def valid(self) -> bool:
        return self.finite and self.symmetric and self.psd and self.nonnegative


def _samples(X):
    """Return the samples of a feature-major matrix as rows (n x p)."""
    values = getattr(X, "X", X)
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InputError(f"data must be a 2-D matrix, got shape {values.shape}")
    if values.shape[1] < 2:
        raise InputError(f"need at least 2 samples, got {values.shape[1]}")
    if not np.all(np.isfinite(values)):
        raise InputError("data contains non-finite entries")
    return values.T


def _minmax(S):
    lo = S.min(axis=0)
    span = S.max(axis=0) - lo
    span[span == 0] = 1.0
    return (S - lo) / span


def rbf_kernel(X, radius: float, rescale: bool = False) -> KernelMatrix:
    """Gaussian kernel ``exp(-||x_i - x_j||^2 / (2 radius^2))``.

    Parameters
    ----------
    X : array_like or DataMatrix, shape (p, n)
        Samples stored column-wise.
    radius : float
        Kernel width, must be positive.
    rescale : bool
        Min-max rescale every feature to [0, 1] first. Off by default.
    """
    if not np.isfinite(radius) or radius <= 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    S = _samples(X)
    if rescale:
        S = _minmax(S)
    # pdist evaluates each pair directly, so no cancellation from the
    # |a|^2 + |b|^2 - 2ab expansion
    sq = squareform(pdist(S, "sqeuclidean"))
    K = np.exp(-sq / (2.0 * radius * radius))
    return KernelMatrix(K, radius=float(radius))


def linear_kernel(X, rescale: bool = False) -> KernelMatrix:
    """Gram matrix ``x_i^T x_j``."""
    S = _samples(X)
    if rescale:
        S = _minmax(S)
    K = S @ S.T
    # force exact symmetry
    K = np.triu(K) + np.triu(K, 1).T
    return KernelMatrix(K)


def validate_kernel(K) -> KernelDiagnostics:
    """Report invariant checks on ``K`` without modifying it."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"kernel must be square, got shape {K.shape}")
    finite = bool(np.all(np.isfinite(K)))
    if not finite:
        return KernelDiagnostics(np.nan, np.nan, np.nan, np.nan, np.nan, False)
    asym = float(np.max(np.abs(K - K.T))) if K.size else 0.0
    try:
        eig = np.linalg.eigvalsh(K / 2.0 + K.T / 2.0)
    except np.linalg.LinAlgError:
        eig = np.array([np.nan])
    return KernelDiagnostics(
        symmetry_deviation=asym,
        min_eigenvalue=float(eig[0]),
        max_eigenvalue=float(eig[-1]),
        min_entry=float(K.min()),
        max_entry=float(K.max()),
        finite=True,
    )


def as_kernel(K) -> np.ndarray:
    """Validate ``K`` for use by the solver and return it as an array."""
    arr = np.asarray(K, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError(f"kernel must be square, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InputError("kernel needs at least 2 samples")
    diag = validate_kernel(arr)
    if not diag.finite:
        raise InputError("kernel contains non-finite entries")
    if not diag.symmetric:
        raise InputError(f"kernel is not symmetric (max deviation {diag.symmetry_deviation:.3g})")
    if not diag.nonnegative:
        raise InputError(f"kernel has negative entries (min {diag.min_entry:.3g})")
    if not diag.psd:
        raise InputError(
            f"kernel is not positive semidefinite (min eigenvalue {diag.min_eigenvalue:.3g})")
    return arr


def kernel_distance(K) -> np.ndarray:
    """Squared feature-space distances ``k_ii + k_jj - 2 k_ij``.

    Negative values from round-off are clamped to zero. The result is
    read-only.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError(f"kernel must be square, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise InputError("kernel contains non-finite entries")
    scale = max(float(np.max(np.abs(K))), 1.0)
    if np.max(np.abs(K - K.T)) > SYMMETRY_RTOL * scale:
        raise InputError("kernel is not symmetric")
    d = np.diag(K)
    D = (d[:, None] + d[None, :]) - 2.0 * K
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    # asymmetry below tolerance would otherwise leak into D
    D = np.triu(D) + np.triu(D, 1).T
    D.setflags(write=False)
    return D
