"""Dense linear-algebra kernels shared by all solver components.

Vectorization is column-major everywhere; every quadratic-form matrix built
on top of ``vec`` has to agree with that choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-8

# Entry cap for kron outputs; anything bigger is a caller bug at this scale.
_KRON_MAX_ENTRIES = 50_000_000


def as_sym(a, name: str = "matrix") -> np.ndarray:
    """Validate a square real array and return its symmetric part (A + A') / 2."""
    x = np.asarray(a, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"{name} must be square, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return 0.5 * (x + x.T)


def as_rect(a, name: str = "matrix") -> np.ndarray:
    """Validate a finite real 2-d array."""
    x = np.asarray(a, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (descending) and the matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class SingularDecomposition:
    """Full SVD factors with singular values sorted descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        n, m = self.u.shape[0], self.v.shape[0]
        k = len(self.s)
        return (self.u[:, :k] * self.s) @ self.v[:, :k].T


def sym_eig(x) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    xs = as_sym(x)
    w, v = np.linalg.eigh(xs)
    return EigenDecomposition(values=w[::-1].copy(), vectors=v[:, ::-1].copy())


def svd(x) -> SingularDecomposition:
    """Full singular value decomposition X = U diag(s) V'."""
    xr = as_rect(x)
    u, s, vt = np.linalg.svd(xr, full_matrices=True)
    return SingularDecomposition(u=u, s=s, v=vt.T.copy())


def vec(x) -> np.ndarray:
    """Column-major stacking of a matrix into a vector."""
    return np.asarray(x, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of ``vec`` for a rows x cols matrix (square when cols omitted)."""
    if cols is None:
        cols = rows
    w = np.asarray(v, dtype=float)
    if w.size != rows * cols:
        raise ValueError(f"cannot reshape length {w.size} into {rows}x{cols}")
    return w.reshape(rows, cols, order="F").copy()


def kron(a, b) -> np.ndarray:
    """Kronecker product with a guard against runaway output sizes."""
    am = np.asarray(a, dtype=float)
    bm = np.asarray(b, dtype=float)
    entries = am.size * bm.size
    if entries > _KRON_MAX_ENTRIES:
        raise ValueError(f"kron output would have {entries} entries")
    return np.kron(am, bm)


def numerical_rank(values, tol: float = DEFAULT_RANK_TOL) -> int:
    """Count of eigen/singular values with magnitude above ``tol``.

    Input ordering does not matter; magnitudes are compared directly.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    v = np.asarray(values, dtype=float)
    return int(np.count_nonzero(np.abs(v) > tol))


def frob(x) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=float)))


def min_eigval(x) -> float:
    """Smallest eigenvalue of the symmetric part of ``x``."""
    return float(np.linalg.eigvalsh(as_sym(x))[0])


def is_psd(x, tol: float = 1e-8) -> bool:
    """PSD check with a spectral-norm-relative tolerance on the smallest eigenvalue."""
    xs = as_sym(x)
    w = np.linalg.eigvalsh(xs)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    return bool(w[0] >= -tol * scale)
