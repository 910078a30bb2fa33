"""Panel containers, the de-meaning transform, and GLS weight matrices.

The observed model per unit i is

    y_i = D alpha_i + X_i beta_i + u_i,        u_i = F b_i + eps_i,

with T x S common regressors D shared by all units, T x K unit-specific
regressors X_i, and an unobserved T x M factor matrix F. Premultiplying
by an orthonormal complement of D removes the common regressors and
leaves a (T-S)-row system per unit; every feasible estimator works on
that reduced system and never sees the latent structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, RankDeficientError, SingularError
from .linalg import RANK_RTOL, OrthoComplement, ortho_complement, woodbury_inverse

__all__ = [
    "PanelData",
    "TransformedPanel",
    "LatentStructure",
    "WeightMatrix",
    "DenseCovarianceSet",
    "Ar1CovarianceSet",
    "transform",
    "oracle_weight",
    "dual_panel",
]


def _finite_array(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.size and not np.isfinite(a).all():
        raise DimensionError(f"{name} contains non-finite entries")
    return a


class PanelData:
    """Balanced panel with common and unit-specific regressors.

    Parameters
    ----------
    y : array_like, shape (T, N)
        Outcomes, one column per unit.
    x : array_like, shape (N, T, K) or list of N arrays (T, K)
        Unit-specific regressors.
    d : array_like, shape (T, S), optional
        Common regressors, identical across units. By convention D
        contains a constant column; pass ``require_intercept=False`` to
        opt out. ``None`` or zero columns disables de-meaning (S = 0).
    require_intercept : bool
        Enforce the constant-column convention for S >= 1.
    """

    def __init__(self, y, x, d=None, *, require_intercept: bool = True):
        y = _finite_array(y, "y")
        if y.ndim != 2:
            raise DimensionError(f"y must be (T, N), got ndim={y.ndim}")
        t, n = y.shape
        if n < 1 or t < 1:
            raise DimensionError(f"empty panel of shape {y.shape}")

        if isinstance(x, (list, tuple)):
            x = np.stack([np.asarray(xi, dtype=np.float64) for xi in x])
        x = _finite_array(x, "x")
        if x.ndim != 3 or x.shape[0] != n or x.shape[1] != t:
            raise DimensionError(
                f"x must be (N, T, K) = ({n}, {t}, K), got {x.shape}"
            )
        k = x.shape[2]

        if d is None:
            d = np.empty((t, 0))
        d = _finite_array(d, "d")
        if d.ndim != 2 or d.shape[0] != t:
            raise DimensionError(f"d must be (T, S) with T={t}, got {d.shape}")
        s = d.shape[1]

        if t <= s + k:
            raise DimensionError(
                f"need T > S + K for per-unit regressions, got T={t}, S={s}, K={k}"
            )
        if s:
            sv = np.linalg.svd(d, compute_uv=False)
            if sv[-1] / sv[0] < RANK_RTOL:
                raise RankDeficientError("common regressor matrix is rank deficient")
            if require_intercept and not _has_constant_column(d):
                raise ValueError(
                    "common regressors contain no constant column; pass "
                    "require_intercept=False to opt out of the intercept convention"
                )
        _check_unit_ranks(x)

        y = y.copy()
        x = np.ascontiguousarray(x)
        d = d.copy()
        for arr in (y, x, d):
            arr.setflags(write=False)
        self.y = y
        self.x = x
        self.d = d

    @property
    def T(self) -> int:  # noqa: N802 - domain name
        return self.y.shape[0]

    @property
    def N(self) -> int:  # noqa: N802
        return self.y.shape[1]

    @property
    def S(self) -> int:  # noqa: N802
        return self.d.shape[1]

    @property
    def K(self) -> int:  # noqa: N802
        return self.x.shape[2]

    @property
    def X(self) -> list[np.ndarray]:  # noqa: N802
        """Per-unit regressor matrices as a list of (T, K) arrays."""
        return [self.x[i] for i in range(self.N)]

    def __repr__(self) -> str:
        return (
            f"PanelData(T={self.T}, N={self.N}, S={self.S}, K={self.K})"
        )


def _has_constant_column(d: np.ndarray) -> bool:
    col_range = d.max(axis=0) - d.min(axis=0)
    scale = np.maximum(1.0, np.abs(d).max(axis=0))
    return bool((col_range <= 1e-12 * scale).any())


def _check_unit_ranks(x: np.ndarray) -> None:
    n, _, k = x.shape
    if k == 0:
        raise DimensionError("panels require at least one unit-specific regressor")
    if k == 1:
        norms = np.sqrt(np.einsum("ntk,ntk->n", x, x))
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise RankDeficientError(
                f"regressor block of unit {bad[0]} is identically zero", unit=int(bad[0])
            )
        return
    for i in range(n):
        sv = np.linalg.svd(x[i], compute_uv=False)
        if sv[-1] / sv[0] < RANK_RTOL:
            raise RankDeficientError(
                f"regressor block of unit {i} is rank deficient", unit=i
            )


@dataclass(frozen=True)
class TransformedPanel:
    """Panel premultiplied by the orthonormal complement of D.

    ``yt`` has shape (T-S, N) and ``xt`` has shape (N, T-S, K); both are
    exact matrix products of the complement basis with the raw data (or
    copies of the raw data when S = 0).
    """

    complement: OrthoComplement
    yt: np.ndarray = field(repr=False)
    xt: np.ndarray = field(repr=False)

    @property
    def rows(self) -> int:
        """Number of observations per unit after de-meaning."""
        return self.yt.shape[0]

    @property
    def N(self) -> int:  # noqa: N802
        return self.yt.shape[1]

    @property
    def K(self) -> int:  # noqa: N802
        return self.xt.shape[2]

    @property
    def Xt(self) -> list[np.ndarray]:  # noqa: N802
        """Per-unit transformed regressors as a list of (T-S, K) arrays."""
        return [self.xt[i] for i in range(self.N)]


def transform(panel: PanelData) -> TransformedPanel:
    """De-mean a panel by premultiplying with the complement of D.

    With S = 0 the transform is the identity and the data pass through
    unchanged.
    """
    comp = ortho_complement(panel.d)
    if panel.S == 0:
        yt = panel.y.copy()
        xt = panel.x.copy()
    else:
        yt = comp.basis.T @ panel.y
        xt = np.einsum("tr,ntk->nrk", comp.basis, panel.x)
    return TransformedPanel(complement=comp, yt=yt, xt=np.ascontiguousarray(xt))


class _CovarianceSet:
    """Sequence of per-unit idiosyncratic covariance matrices."""

    def __len__(self) -> int:
        raise NotImplementedError

    def unit(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def __getitem__(self, i: int) -> np.ndarray:
        return self.unit(i)


class DenseCovarianceSet(_CovarianceSet):
    """Explicitly stored covariance matrices, one (T, T) array per unit."""

    def __init__(self, matrices):
        mats = np.stack([_finite_array(m, "covariance") for m in matrices])
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionError(f"covariances must be (N, T, T), got {mats.shape}")
        asym = np.abs(mats - mats.transpose(0, 2, 1)).max()
        if asym > 1e-10 * max(1.0, np.abs(mats).max()):
            raise DimensionError("covariance matrices must be symmetric")
        self._mats = mats

    def __len__(self) -> int:
        return self._mats.shape[0]

    def unit(self, i: int) -> np.ndarray:
        return self._mats[i]

    def mean(self) -> np.ndarray:
        return self._mats.mean(axis=0)


class Ar1CovarianceSet(_CovarianceSet):
    """AR(1) covariances sigma2_i * rho_i^|s-t|, stored by parameters.

    Materializes single units on demand; the cross-unit average is a
    Toeplitz matrix built from averaged autocovariances. Equivalent to a
    DenseCovarianceSet of the same matrices but O(N) storage.
    """

    def __init__(self, sigma2, rho, t: int):
        self.sigma2 = np.asarray(sigma2, dtype=np.float64)
        self.rho = np.asarray(rho, dtype=np.float64)
        if self.sigma2.shape != self.rho.shape or self.sigma2.ndim != 1:
            raise DimensionError("sigma2 and rho must be equal-length vectors")
        if (np.abs(self.rho) >= 1.0).any() or (self.sigma2 < 0.0).any():
            raise DimensionError("need |rho| < 1 and sigma2 >= 0")
        self.t = int(t)

    def __len__(self) -> int:
        return self.sigma2.shape[0]

    def unit(self, i: int) -> np.ndarray:
        acov = self.sigma2[i] * self.rho[i] ** np.arange(self.t)
        return scipy.linalg.toeplitz(acov)

    def mean(self) -> np.ndarray:
        powers = self.rho[:, None] ** np.arange(self.t)[None, :]
        acov = (self.sigma2[:, None] * powers).mean(axis=0)
        return scipy.linalg.toeplitz(acov)


@dataclass(frozen=True)
class LatentStructure:
    """Unobserved components of a simulated panel (oracle use only).

    Feasible estimators never receive this type; it feeds the oracle
    GLS weight, the OLS bias diagnostic, and reconstruction tests.

    Fields
    ------
    f : (T, M) latent factors entering the outcome innovation.
    b : (M, N) factor loadings of u_i, one column per unit.
    gamma : (N, M, K) factor loadings of the regressor blocks.
    v : (N, T, K) idiosyncratic regressor noise.
    xi : per-unit covariance matrices of eps_i.
    eps : (T, N) idiosyncratic outcome innovations.
    delta : (N, S, K) common-regressor coefficients of the x equation.
    """

    f: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    xi: _CovarianceSet = field(repr=False)
    eps: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:  # noqa: N802
        return self.f.shape[1]

    @property
    def N(self) -> int:  # noqa: N802
        return self.b.shape[1]

    def u(self) -> np.ndarray:
        """Outcome innovations F b_i + eps_i, shape (T, N)."""
        return self.f @ self.b + self.eps

    def loading_second_moment(self) -> np.ndarray:
        """Cross-unit average of b_i b_i', shape (M, M)."""
        return (self.b @ self.b.T) / self.N


class WeightMatrix:
    """Symmetric positive (semi)definite GLS weight.

    One of three kinds: ``identity`` (weighting disabled), ``dense`` (an
    explicit matrix), or ``factored`` (low-rank-plus-full structure
    U core U' + full, solved through the Woodbury identity).
    """

    def __init__(self, kind: str, dim: int, *, w=None, u=None, core=None, full=None):
        self.kind = kind
        self.dim = int(dim)
        self._w = w
        self._u = u
        self._core = core
        self._full = full
        self._cho = None
        self._inv = None
        self._eig_bounds = None

    # -- constructors -------------------------------------------------

    @classmethod
    def identity(cls, dim: int) -> "WeightMatrix":
        return cls("identity", dim)

    @classmethod
    def from_dense(cls, w) -> "WeightMatrix":
        w = _finite_array(w, "weight")
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"weight must be square, got {w.shape}")
        scale = max(1.0, np.abs(w).max())
        if np.abs(w - w.T).max() > 1e-10 * scale:
            raise DimensionError("weight must be symmetric")
        w = (w + w.T) / 2.0
        w.setflags(write=False)
        return cls("dense", w.shape[0], w=w)

    @classmethod
    def from_factors(cls, u, core, full) -> "WeightMatrix":
        u = _finite_array(u, "low-rank factor")
        core = _finite_array(core, "core")
        full = _finite_array(full, "full part")
        n, m = u.shape
        if core.shape != (m, m) or full.shape != (n, n):
            raise DimensionError(
                f"incompatible factors u{u.shape}, core{core.shape}, full{full.shape}"
            )
        full = (full + full.T) / 2.0
        core = (core + core.T) / 2.0
        return cls("factored", n, u=u, core=core, full=full)

    # -- views ---------------------------------------------------------

    def dense(self) -> np.ndarray:
        """Materialize the weight as an explicit (dim, dim) matrix."""
        if self.kind == "identity":
            return np.eye(self.dim)
        if self.kind == "dense":
            return self._w
        return self._u @ self._core @ self._u.T + self._full

    def eig_bounds(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of the weight."""
        if self.kind == "identity":
            return (1.0, 1.0)
        if self._eig_bounds is None:
            eigs = np.linalg.eigvalsh(self.dense())
            self._eig_bounds = (float(eigs[0]), float(eigs[-1]))
        return self._eig_bounds

    def singularity_ratio(self) -> float:
        """min eigenvalue divided by (dim * max eigenvalue)."""
        lo, hi = self.eig_bounds()
        if hi <= 0.0:
            return 0.0
        return lo / (self.dim * hi)

    # -- solving -------------------------------------------------------

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the inverse weight to a (dim, m) right-hand side."""
        if self.kind == "identity":
            return rhs
        if rhs.shape[0] != self.dim:
            raise DimensionError(
                f"right-hand side has {rhs.shape[0]} rows, weight dim is {self.dim}"
            )
        if self.kind == "dense":
            if self._cho is None:
                try:
                    self._cho = scipy.linalg.cho_factor(self._w, lower=True)
                except np.linalg.LinAlgError as exc:
                    raise SingularError(f"weight factorization failed: {exc}") from exc
            return scipy.linalg.cho_solve(self._cho, rhs)
        if self._inv is None:
            u, core = _reduced_core(self._u, self._core)
            self._inv = woodbury_inverse(self._full, u, core)
        return self._inv @ rhs


def _reduced_core(u: np.ndarray, core: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop numerically-zero core directions so Woodbury stays solvable."""
    m = core.shape[0]
    if m == 0:
        return u, core
    eigs, vecs = np.linalg.eigh(core)
    keep = eigs > m * np.finfo(np.float64).eps * max(eigs[-1], 0.0)
    if keep.all():
        return u, core
    vecs = vecs[:, keep]
    return u @ vecs, np.diag(eigs[keep])


def oracle_weight(
    structure: LatentStructure, complement: OrthoComplement | None = None
) -> WeightMatrix:
    """True averaged innovation covariance, optionally reduced.

    Builds F B_N F' + Xi_N with B_N the average loading outer product
    and Xi_N the average idiosyncratic covariance, stored in factored
    form so the GLS solve can use the Woodbury identity. When a
    complement C is given the covariance is reduced to C' (.) C, the
    weight of the de-meaned system; without one it lives on the full
    observation space, where it stays invertible and can also weight
    the common-regressor block.
    """
    f = structure.f
    if structure.N < 1 or structure.M < 1:
        raise DimensionError("oracle weight needs at least one unit and one factor")
    xi_mean = structure.xi.mean()
    if complement is None:
        u = f.copy()
        full = xi_mean.copy()
    elif f.shape[0] != complement.rows:
        raise DimensionError(
            f"factor matrix has {f.shape[0]} rows, complement expects {complement.rows}"
        )
    elif complement.source_cols:
        u = complement.basis.T @ f
        full = complement.basis.T @ xi_mean @ complement.basis
    else:
        u = f.copy()
        full = xi_mean.copy()
    core = structure.loading_second_moment()
    return WeightMatrix.from_factors(u, core, full)


def dual_panel(panel: PanelData, d=None, *, require_intercept: bool = True) -> PanelData:
    """Transposed view of a panel: periods become units and vice versa.

    The dual outcome matrix is y', the dual regressor block of (original)
    period t stacks the x_it' rows across units, and the dual common
    regressors default to a constant column over the N original units.
    Feeding the result to the standard pipeline estimates per-period
    coefficient vectors instead of per-unit ones.
    """
    if d is None:
        d = np.ones((panel.N, 1))
    return PanelData(
        y=panel.y.T,
        x=np.ascontiguousarray(panel.x.transpose(1, 0, 2)),
        d=d,
        require_intercept=require_intercept,
    )
