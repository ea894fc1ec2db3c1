"""Dense linear algebra kernels used throughout the package.

Everything here operates on plain float64 numpy arrays. The heavy
factorizations are delegated to LAPACK via numpy.linalg; the functions in
this module pin down the conventions the rest of the package relies on:

* vectorization is row-major: vec(M) enumerates M row by row,
* pseudoinverses truncate singular values at max(rows, cols) * eps * sigma_max
  unless an explicit tolerance is given,
* generalized absolute determinants are products of singular values, with a
  degeneracy flag once any singular value falls at or below the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "SvdResult",
    "as_matrix",
    "as_vector",
    "svd",
    "singular_values",
    "default_sv_tolerance",
    "pinv",
    "kron",
    "vec",
    "unvec",
    "apply_vectorized_bilinear",
    "gen_absdet",
    "gen_absdet_log10",
    "frobenius_norm",
]


def as_matrix(data) -> np.ndarray:
    """Coerce ``data`` to a 2-d float64 array, requiring finite entries."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"matrix must be non-empty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ShapeError("matrix contains non-finite entries")
    return m


def as_vector(data) -> np.ndarray:
    """Coerce ``data`` to a 1-d float64 array, requiring finite entries."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-d array, got ndim={v.ndim}")
    if v.size < 1:
        raise ShapeError("vector must be non-empty")
    if not np.isfinite(v).all():
        raise ShapeError("vector contains non-finite entries")
    return v


@dataclass(frozen=True, eq=False)
class SvdResult:
    """Full singular value decomposition m = u @ diag(s) @ vt.

    ``u`` is rows x rows, ``vt`` is cols x cols, and ``singular_values``
    holds the min(rows, cols) singular values in non-increasing order.
    """

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray


def svd(m) -> SvdResult:
    """Full SVD of a real matrix.

    Raises NumericalError if the underlying LAPACK iteration does not
    converge (the message names the matrix shape).
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for {m.shape[0]}x{m.shape[1]} matrix"
        ) from exc
    return SvdResult(u=u, singular_values=s, vt=vt)


def singular_values(m) -> np.ndarray:
    """Singular values only, in non-increasing order."""
    m = as_matrix(m)
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for {m.shape[0]}x{m.shape[1]} matrix"
        ) from exc


def default_sv_tolerance(shape: tuple[int, int], sigma_max: float) -> float:
    """Singular value cutoff max(rows, cols) * eps * sigma_max."""
    return max(shape) * np.finfo(np.float64).eps * float(sigma_max)


def pinv(m, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD truncation.

    Singular values at or below ``tol`` are treated as exact zeros. With
    ``tol=None`` the default cutoff from :func:`default_sv_tolerance`
    applies. The result satisfies the four Penrose conditions to machine
    precision for well-scaled inputs.
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge for {m.shape[0]}x{m.shape[1]} matrix"
        ) from exc
    if tol is None:
        tol = default_sv_tolerance(m.shape, s[0] if s.size else 0.0)
    keep = s > tol
    if not keep.any():
        return np.zeros((m.shape[1], m.shape[0]))
    u = u[:, keep]
    vt = vt[keep]
    return (vt.T / s[keep]) @ u.T


def kron(a, b) -> np.ndarray:
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a), as_matrix(b))


def vec(m) -> np.ndarray:
    """Row-major vectorization: entries enumerated row by row."""
    return as_matrix(m).reshape(-1).copy()


def unvec(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for the given target shape."""
    v = as_vector(v)
    if v.size != rows * cols:
        raise ShapeError(
            f"cannot reshape length-{v.size} vector to {rows}x{cols}"
        )
    return v.reshape(rows, cols).copy()


def apply_vectorized_bilinear(a, b, v) -> np.ndarray:
    """Apply the vectorized form of X -> A @ X @ B to a row-major vec.

    For A (k x m), B (n x l) and v = vec(X) with X (m x n), the result is
    (A kron B^T) @ v, which equals vec(A @ X @ B).
    """
    a = as_matrix(a)
    b = as_matrix(b)
    v = as_vector(v)
    if v.size != a.shape[1] * b.shape[0]:
        raise ShapeError(
            f"vector length {v.size} does not match "
            f"a.cols * b.rows = {a.shape[1]} * {b.shape[0]}"
        )
    return np.kron(a, b.T) @ v


def gen_absdet(m, tol: float | None = None) -> tuple[float, bool]:
    """Generalized absolute determinant: the product of singular values.

    For square matrices this is abs(det); for rectangular matrices it is
    the product over the min(rows, cols) singular values, equivalently
    sqrt(det(M^T M)) or sqrt(det(M M^T)). Singular values at or below
    ``tol`` are treated as zero: the returned flag is True and the value
    is the product of the remaining singular values (empty product = 1).

    The raw product can overflow or underflow for large matrices; use
    :func:`gen_absdet_log10` whenever values are combined or compared.
    """
    s = singular_values(m)
    if tol is None:
        tol = default_sv_tolerance(np.shape(m), s[0] if s.size else 0.0)
    kept = s[s > tol]
    degenerate = kept.size < s.size
    with np.errstate(over="ignore", under="ignore"):
        value = float(np.prod(kept))
    return value, degenerate


def gen_absdet_log10(m, tol: float | None = None) -> tuple[float, bool]:
    """log10 of :func:`gen_absdet`, computed without overflow.

    The sum of log10 singular values uses exactly rounded summation
    (math.fsum), so the result does not depend on the order of the
    singular values. Empty products give 0.0.
    """
    s = singular_values(m)
    if tol is None:
        tol = default_sv_tolerance(np.shape(m), s[0] if s.size else 0.0)
    kept = s[s > tol]
    degenerate = kept.size < s.size
    if kept.size == 0:
        return 0.0, degenerate
    return math.fsum(np.log10(kept)), degenerate


def frobenius_norm(m) -> float:
    """Square root of the sum of squared entries; accepts vectors too."""
    arr = np.asarray(m, dtype=np.float64)
    return float(np.linalg.norm(arr.reshape(-1)))
