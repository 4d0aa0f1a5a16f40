"""Small dense linear-algebra helpers shared across the package."""

from __future__ import annotations

import numpy as np

#: Relative eigenvalue cutoff used by every definiteness test.
PSD_TOL = 1e-9


def sym(M):
    """Return the symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def scale_of(M) -> float:
    """``1 + ||M||_2``, the normalizer used for relative tolerances."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 1.0
    return 1.0 + float(np.linalg.norm(M, 2))


def min_eig(M) -> float:
    M = sym(M)
    if M.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(M)[0])


def max_eig(M) -> float:
    M = sym(M)
    if M.size == 0:
        return -np.inf
    return float(np.linalg.eigvalsh(M)[-1])


def relative_margin(M) -> float:
    """Minimum eigenvalue of ``M`` normalized by ``1 + ||M||``."""
    return min_eig(M) / scale_of(M)


def is_psd(M, tol: float = PSD_TOL) -> bool:
    return min_eig(M) >= -tol * scale_of(M)


def is_pd(M, tol: float = PSD_TOL) -> bool:
    return min_eig(M) > tol * scale_of(M)


def is_nsd(M, tol: float = PSD_TOL) -> bool:
    return is_psd(-np.asarray(M, dtype=float), tol)


def is_nd(M, tol: float = PSD_TOL) -> bool:
    return is_pd(-np.asarray(M, dtype=float), tol)


def psd_sqrt(M):
    """Symmetric square root with eigenvalues clamped at zero."""
    w, V = np.linalg.eigh(sym(M))
    w = np.clip(w, 0.0, None)
    return sym((V * np.sqrt(w)) @ V.T)


def pd_inv_sqrt(M):
    """``M^{-1/2}`` for a positive definite ``M``."""
    w, V = np.linalg.eigh(sym(M))
    if w[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return sym((V / np.sqrt(w)) @ V.T)


def schur_complement(M, k: int):
    """``M | M11`` where ``M11`` is the leading ``k x k`` block.

    Returns ``M22 - M21 M11^{-1} M12``.
    """
    M = np.asarray(M, dtype=float)
    M11, M12 = M[:k, :k], M[:k, k:]
    M21, M22 = M[k:, :k], M[k:, k:]
    if k == 0:
        return M22.copy()
    return M22 - M21 @ np.linalg.solve(M11, M12)


def schur_complement_lower(M, k: int):
    """``M | M22`` with ``M22`` the trailing block starting at row ``k``.

    Returns ``M11 - M12 M22^{-1} M21``; this is the ``Pi | Pi22`` operation.
    """
    M = np.asarray(M, dtype=float)
    M11, M12 = M[:k, :k], M[:k, k:]
    M21, M22 = M[k:, :k], M[k:, k:]
    if M22.size == 0:
        return M11.copy()
    return M11 - M12 @ np.linalg.solve(M22, M21)


def chol_inv(P, cond_limit: float = 1e12):
    """Invert a symmetric positive definite matrix through Cholesky.

    Raises ``np.linalg.LinAlgError`` if ``P`` is not positive definite or its
    condition number exceeds ``cond_limit``. No regularization is applied.
    """
    P = sym(P)
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0 or w[-1] / w[0] > cond_limit:
        raise np.linalg.LinAlgError(
            f"matrix is numerically singular (eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}])"
        )
    c = np.linalg.cholesky(P)
    ci = np.linalg.solve(c, np.eye(P.shape[0]))
    return sym(ci.T @ ci)


def blkdiag(*blocks):
    """Block-diagonal concatenation that accepts empty blocks."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) if np.size(b) else np.zeros(np.shape(b) if np.ndim(b) == 2 else (0, 0)) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out
