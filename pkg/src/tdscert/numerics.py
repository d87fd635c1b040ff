"""Dense real-matrix primitives and scalar special functions.

Matrices are plain ``float64`` numpy arrays.  The matrix exponential and
the symmetric eigensolver delegate to LAPACK-backed scipy/numpy routines
(scaling-and-squaring Pade, tridiagonal QR); the Lambert W function and
bisection are implemented here.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from ._config import DEFAULT_CONFIG
from .exceptions import (
    ConvergenceFailure,
    DimensionMismatch,
    DomainError,
    NoSignChange,
    NonFinite,
    SingularMatrix,
)
from .validation import check_matrix, check_square, check_vector

__all__ = [
    "SymmetricSpectrum",
    "mat_exp",
    "kron",
    "vec",
    "unvec",
    "spectral_norm",
    "symmetric_spectrum",
    "min_eigenvalue_symmetric",
    "solve_linear",
    "reciprocal_condition",
    "lambert_w0",
    "bisect_root",
]


@dataclass(frozen=True)
class SymmetricSpectrum:
    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if not np.all(np.isfinite(ev)):
            raise NonFinite("eigenvalues must be finite")
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def min(self):
        return float(self.eigenvalues[0])

    @property
    def max(self):
        return float(self.eigenvalues[-1])


def mat_exp(M):
    """Matrix exponential ``e^M`` (scaling and squaring, degree-13 Pade).

    Accepts a single square matrix or a stack ``(..., d, d)``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionMismatch(f"mat_exp needs square matrices, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFinite("mat_exp input contains NaN or Inf")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(M)
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    return E


def kron(A, B):
    return np.kron(check_matrix(A, "A"), check_matrix(B, "B"))


def vec(M):
    """Stack the columns of ``M`` into a 1-D vector."""
    return np.asarray(M, dtype=np.float64).reshape(-1, order="F")


def unvec(v, rows, cols):
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != rows * cols:
        raise DimensionMismatch(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def spectral_norm(M):
    M = check_matrix(M, "M")
    return float(np.linalg.norm(M, 2))


def symmetric_spectrum(S):
    S = check_square(S, "S")
    try:
        ev = np.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"symmetric eigensolver failed: {exc}") from None
    return SymmetricSpectrum(ev)


def min_eigenvalue_symmetric(S):
    """Smallest eigenvalue of a symmetric matrix (caller symmetrizes)."""
    return symmetric_spectrum(S).min


def reciprocal_condition(lu_piv, anorm):
    lu, _ = lu_piv
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0:
        raise ConvergenceFailure(f"dgecon failed with info={info}")
    return float(rcond)


def solve_linear(A, b, rcond_min=None):
    """Solve ``A x = b`` by LU with partial pivoting.

    Returns ``(x, rcond)`` where ``rcond`` is LAPACK's 1-norm reciprocal
    condition estimate.  ``b`` may be a vector or a matrix of right-hand sides.
    Raises :class:`SingularMatrix` when ``rcond < rcond_min``.
    """
    rcond_min = DEFAULT_CONFIG.singular_rcond if rcond_min is None else rcond_min
    A = check_square(A, "A")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"right-hand side has {b.shape[0]} rows, expected {A.shape[0]}")
    check_vector(b, name="b")
    anorm = float(np.linalg.norm(A, 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu_piv = scipy.linalg.lu_factor(A, check_finite=False)
    rcond = reciprocal_condition(lu_piv, anorm) if anorm > 0 else 0.0
    if not rcond >= rcond_min:
        raise SingularMatrix(f"matrix is singular to working precision (rcond={rcond:.3e})", rcond)
    x = scipy.linalg.lu_solve(lu_piv, b, check_finite=False)
    return x, rcond


def lambert_w0(z, max_iter=None, tol=None):
    """Principal branch of the Lambert W function on ``z >= 0``.

    Halley iteration started from ``log(1 + z)``.
    """
    max_iter = DEFAULT_CONFIG.lambert_max_iter if max_iter is None else max_iter
    tol = DEFAULT_CONFIG.lambert_tol if tol is None else tol
    z = float(z)
    if not z >= 0:
        raise DomainError(f"lambert_w0 is defined here for z >= 0, got {z}")
    if math.isinf(z):
        return math.inf
    if z == 0.0:
        return 0.0
    y = math.log1p(z)
    for _ in range(max_iter):
        ey = math.exp(y)
        f = y * ey - z
        if f == 0.0:
            return y
        dy = f / (ey * (y + 1.0) - (y + 2.0) * f / (2.0 * y + 2.0))
        y -= dy
        if abs(dy) <= tol * (1.0 + y):
            return y
    raise ConvergenceFailure(f"lambert_w0 did not converge for z={z}")


def bisect_root(f, lo, hi, tol=None):
    """Root of ``f`` in ``[lo, hi]`` by bisection, bracket width ``<= tol``."""
    tol = DEFAULT_CONFIG.bisect_tol if tol is None else tol
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise DomainError(f"bisect_root needs lo < hi, got [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise NoSignChange(f"f({lo})={flo:.3e} and f({hi})={fhi:.3e} have the same sign")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)
