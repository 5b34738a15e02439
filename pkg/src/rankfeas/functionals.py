"""Quadratic functionals that vanish exactly on low-rank PSD structure.

Two related objects are built here:

* the rank-one defect of a symmetric matrix,
      sum_{i,j} (X_ii X_jj - X_ij^2)  =  (tr X)^2 - ||X||_F^2,
  which is nonnegative on PSD matrices and zero iff rank(X) <= 1;

* the rank-split defect of an r-tuple of PSD matrices,
      sum_k defect(X_k) + sum_{p != q} <X_p, X_q>,
  which is zero iff every block is rank <= 1 and the blocks are mutually
  trace-orthogonal, certifying that their sum has rank <= r.

Both are exposed matrix-free (the closed forms above, used by the descent
loops) and as dense quadratic-form matrices over column-major ``vec`` for
small dimensions (used by reports and structure tests).
"""

from __future__ import annotations

import numpy as np

from .linalg import as_sym, vec


def defect_matrix(n: int) -> np.ndarray:
    """Dense symmetric n^2 x n^2 form Q with vec(X)' Q vec(X) = rank-one defect.

    Q = vec(I) vec(I)' - I, the symmetrized coefficient matrix of the literal
    double sum over entries of a symmetric X.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    e = vec(np.eye(n))
    return np.outer(e, e) - np.eye(n * n)


def split_defect_matrix(n: int, r: int) -> np.ndarray:
    """Dense (r n^2) x (r n^2) form over the stacked vector [vec X_1; ...; vec X_r].

    Diagonal blocks repeat the rank-one defect form; off-diagonal blocks are
    identities, realizing the pairwise trace couplings <X_p, X_q>.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if not 1 <= r <= n:
        raise ValueError(f"block count must satisfy 1 <= r <= {n}, got {r}")
    q = defect_matrix(n)
    d = n * n
    out = np.tile(np.eye(d), (r, r))
    for k in range(r):
        out[k * d:(k + 1) * d, k * d:(k + 1) * d] = q
    return out


def quad_form(q: np.ndarray, x: np.ndarray) -> float:
    """x' Q x for a stacked vector, with a dimension check."""
    xv = np.asarray(x, dtype=float).reshape(-1)
    if q.shape != (xv.size, xv.size):
        raise ValueError(f"form of shape {q.shape} does not match vector length {xv.size}")
    return float(xv @ q @ xv)


def defect_value(x) -> float:
    """Rank-one defect (tr X)^2 - ||X||_F^2 of a symmetric matrix, matrix-free."""
    xs = as_sym(x)
    t = float(np.trace(xs))
    return t * t - float(np.sum(xs * xs))


def _check_blocks(blocks) -> list[np.ndarray]:
    if len(blocks) < 1:
        raise ValueError("need at least one block")
    mats = [as_sym(b, name=f"block {k}") for k, b in enumerate(blocks)]
    n = mats[0].shape[0]
    for k, m in enumerate(mats):
        if m.shape[0] != n:
            raise ValueError(f"block {k} has dimension {m.shape[0]}, expected {n}")
    return mats


def split_defect_value(blocks) -> float:
    """Rank-split defect of an r-tuple of symmetric matrices, matrix-free."""
    mats = _check_blocks(blocks)
    total = sum(defect_value(m) for m in mats)
    for p in range(len(mats)):
        for q in range(len(mats)):
            if p != q:
                total += float(np.sum(mats[p] * mats[q]))
    return total


def split_defect_gradient_blocks(blocks) -> list[np.ndarray]:
    """Half-gradient of the split defect, reshaped per block.

    Block k of Q_r applied to the stacked vector is
        tr(X_k) I - X_k + sum_{q != k} X_q,
    so the linear pairing <D, grad> over a direction tuple D equals
    D_stacked' Q_r X_stacked.
    """
    mats = _check_blocks(blocks)
    n = mats[0].shape[0]
    agg = np.zeros((n, n))
    for m in mats:
        agg += m
    out = []
    for m in mats:
        out.append(float(np.trace(m)) * np.eye(n) - m + (agg - m))
    return out


def split_defect_gradient(blocks) -> np.ndarray:
    """Half-gradient as one stacked vector of length r * n^2."""
    return np.concatenate([vec(g) for g in split_defect_gradient_blocks(blocks)])


def pairing_value(x, y) -> float:
    """Bilinear coupling vec(X)' Q vec(Y) = tr(X) tr(Y) - <X, Y>."""
    xs, ys = as_sym(x), as_sym(y)
    if xs.shape != ys.shape:
        raise ValueError(f"dimension mismatch: {xs.shape} vs {ys.shape}")
    return float(np.trace(xs)) * float(np.trace(ys)) - float(np.sum(xs * ys))


def check_pairing_properties(x, y, psd_tol: float = 1e-8):
    """Pairing and superadditivity gap for a PSD pair.

    Returns ``(pairing, gap)`` where ``gap`` is the amount by which the defect
    of the sum exceeds the sum of the defects; both are nonnegative for PSD
    arguments. Non-PSD inputs are rejected.
    """
    xs, ys = as_sym(x), as_sym(y)
    for name, m in (("x", xs), ("y", ys)):
        w = np.linalg.eigvalsh(m)
        scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
        if w[0] < -psd_tol * scale:
            raise ValueError(f"{name} is not PSD (min eigenvalue {w[0]:.3e})")
    pairing = pairing_value(xs, ys)
    gap = defect_value(xs + ys) - defect_value(xs) - defect_value(ys)
    return pairing, gap
