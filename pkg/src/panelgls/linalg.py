"""Dense linear-algebra kernels used by the panel estimators.

Orthonormal complements with a fixed sign convention, the
Sherman-Morrison-Woodbury inverse for low-rank-plus-full matrices, and
the Moore-Penrose pseudo-inverse of a full-rank sandwich product. All
routines are pure functions of their inputs and deterministic within a
fixed build.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, RankDeficientError, SingularError

# Relative singular-value cutoff below which a matrix is treated as
# rank deficient, and the condition-number ceiling for linear solves.
RANK_RTOL = 1e-12
COND_MAX = 1e14


def _as_finite_2d(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    if a.size and not np.isfinite(a).all():
        raise DimensionError(f"{name} contains non-finite entries")
    return a


def _spd_cholesky(m: np.ndarray, name: str):
    """Cholesky factor of a symmetric matrix, with a condition check.

    Raises SingularError when the matrix is not positive definite or its
    eigenvalue ratio exceeds COND_MAX.
    """
    if m.shape[0] == 0:
        return (m.copy(), True)
    eigs = np.linalg.eigvalsh(m)
    lo, hi = eigs[0], eigs[-1]
    if lo <= 0.0 or (hi > 0.0 and hi / lo > COND_MAX):
        raise SingularError(
            f"{name} is numerically singular (eigenvalue range [{lo:.3e}, {hi:.3e}])"
        )
    return scipy.linalg.cho_factor(m, lower=True)


@dataclass(frozen=True)
class OrthoComplement:
    """Orthonormal basis of the null space of a tall matrix's transpose.

    For a T x S source matrix D of full column rank, ``basis`` is
    T x (T-S) with orthonormal columns spanning the orthogonal complement
    of span(D), so that ``basis @ basis.T`` equals the annihilator
    I - D (D'D)^{-1} D'.
    """

    source_cols: int
    basis: np.ndarray = field(repr=False)

    @property
    def rows(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        """Dimension of the complement (rows - source_cols)."""
        return self.basis.shape[1]

    def reduce(self, m: np.ndarray) -> np.ndarray:
        """Coordinates of the columns of ``m`` in the complement basis."""
        if self.source_cols == 0:
            return np.array(m, dtype=np.float64, copy=True)
        return self.basis.T @ m

    def expand(self, m: np.ndarray) -> np.ndarray:
        """Map complement coordinates back to the original space."""
        if self.source_cols == 0:
            return np.array(m, dtype=np.float64, copy=True)
        return self.basis @ m

    def annihilator(self) -> np.ndarray:
        """The projection matrix basis @ basis.T."""
        return self.basis @ self.basis.T


def ortho_complement(d) -> OrthoComplement:
    """Deterministic orthonormal complement of the column span of ``d``.

    Parameters
    ----------
    d : array_like, shape (T, S)
        Full-column-rank matrix with S < T. S = 0 is allowed and yields
        the identity basis.

    Returns
    -------
    OrthoComplement
        Basis computed by a full Householder QR decomposition, with the
        sign convention that the first nonzero entry of every basis
        column is positive.
    """
    d = _as_finite_2d(d, "d")
    t, s = d.shape
    if s >= t:
        raise DimensionError(
            f"complement requires fewer columns than rows, got shape ({t}, {s})"
        )
    if s == 0:
        return OrthoComplement(source_cols=0, basis=np.eye(t))
    sv = np.linalg.svd(d, compute_uv=False)
    if sv[-1] / sv[0] < RANK_RTOL:
        raise RankDeficientError(
            f"source matrix is rank deficient (sv ratio {sv[-1] / sv[0]:.3e})"
        )
    q, _ = np.linalg.qr(d, mode="complete")
    basis = q[:, s:].copy()
    # Fixed sign convention: first entry of each column that is nonzero
    # relative to the column's largest magnitude is made positive.
    for j in range(basis.shape[1]):
        col = basis[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0.0:
            basis[:, j] = -col
    return OrthoComplement(source_cols=s, basis=basis)


def woodbury_inverse(a, b, c, *, a_diagonal: bool = False) -> np.ndarray:
    """Inverse of ``b @ c @ b.T + a`` via the Woodbury identity.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric positive definite full part (only its diagonal is read
        when ``a_diagonal`` is true).
    b : array_like, shape (n, m)
        Low-rank factor, m <= n.
    c : array_like, shape (m, m)
        Symmetric positive definite core.
    a_diagonal : bool
        Exploit a diagonal ``a`` (no factorization of the full block).

    Returns
    -------
    ndarray, shape (n, n)
        ``inv(a) - inv(a) b (inv(c) + b' inv(a) b)^{-1} b' inv(a)``.
    """
    a = _as_finite_2d(a, "a")
    b = _as_finite_2d(b, "b")
    c = _as_finite_2d(c, "c")
    n = a.shape[0]
    m = b.shape[1]
    if a.shape != (n, n) or b.shape[0] != n or c.shape != (m, m):
        raise DimensionError(
            f"incompatible shapes a{a.shape}, b{b.shape}, c{c.shape}"
        )
    if m > n:
        raise DimensionError(f"low-rank factor has more columns ({m}) than rows ({n})")

    if a_diagonal:
        diag = np.diag(a)
        lo, hi = diag.min(), diag.max()
        if lo <= 0.0 or hi / lo > COND_MAX:
            raise SingularError(
                f"diagonal full part is numerically singular (range [{lo:.3e}, {hi:.3e}])"
            )
        a_inv = np.diag(1.0 / diag)
        a_inv_b = b / diag[:, None]
    else:
        a_cf = _spd_cholesky(a, "full part")
        a_inv = scipy.linalg.cho_solve(a_cf, np.eye(n))
        a_inv_b = scipy.linalg.cho_solve(a_cf, b)

    if m == 0:
        return a_inv

    c_cf = _spd_cholesky(c, "core")
    c_inv = scipy.linalg.cho_solve(c_cf, np.eye(m))
    inner = c_inv + b.T @ a_inv_b
    inner_cf = _spd_cholesky(inner, "inner system")
    return a_inv - a_inv_b @ scipy.linalg.cho_solve(inner_cf, a_inv_b.T)


def pinv_sandwich(a, b) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of ``a @ b @ a.T`` for full-rank ``a``.

    Parameters
    ----------
    a : array_like, shape (n, m)
        Full column rank, m <= n.
    b : array_like, shape (m, m)
        Symmetric positive definite.

    Returns
    -------
    ndarray, shape (n, n)
        ``a (a'a)^{-1} inv(b) (a'a)^{-1} a'``; reduces to ``a inv(b) a'``
        when the columns of ``a`` are orthonormal.
    """
    a = _as_finite_2d(a, "a")
    b = _as_finite_2d(b, "b")
    n, m = a.shape
    if m > n:
        raise DimensionError(f"sandwich factor has more columns ({m}) than rows ({n})")
    if b.shape != (m, m):
        raise DimensionError(f"core has shape {b.shape}, expected ({m}, {m})")
    if m == 0:
        return np.zeros((n, n))
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] / sv[0] < RANK_RTOL:
        raise RankDeficientError(
            f"sandwich factor is rank deficient (sv ratio {sv[-1] / sv[0]:.3e})"
        )
    gram_cf = _spd_cholesky(a.T @ a, "gram matrix")
    b_cf = _spd_cholesky(b, "core")
    inner = scipy.linalg.cho_solve(
        gram_cf, scipy.linalg.cho_solve(b_cf, scipy.linalg.cho_solve(gram_cf, np.eye(m)))
    )
    return a @ inner @ a.T
