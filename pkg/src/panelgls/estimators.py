"""Per-unit coefficient estimators for heterogeneous panels.

All feasible estimators share one robustness guarantee by construction:
their signatures carry no factor counts, factor matrices, or loadings.
The cross-sectional average of residual outer products is the only
object that absorbs the latent structure, and it enters purely as a GLS
weight. Only the oracle estimator (``ugls``) and the bias diagnostic
ever see a :class:`~panelgls.panel.LatentStructure`.

The module exposes the estimators twice: as plain functions operating on
panel containers, and as sklearn-style estimator classes wrapping those
functions with ``fit``/``get_params`` conventions.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import (
    DimensionError,
    RankDeficientError,
    SingularError,
    SingularWeightError,
)
from .linalg import RANK_RTOL, pinv_sandwich
from .panel import (
    LatentStructure,
    PanelData,
    TransformedPanel,
    WeightMatrix,
    oracle_weight,
    transform,
)

__all__ = [
    "EstimateSet",
    "ols",
    "ugls",
    "sample_weight",
    "fgls",
    "iterated_fgls",
    "joint_breve",
    "joint_moore_penrose",
    "alpha_two_step",
    "cross_sectional_fgls",
    "ols_bias_diagnostic",
    "PanelOLS",
    "OracleGLS",
    "FeasibleGLS",
    "JointGLS",
    "CrossSectionGLS",
]

# Relative eigenvalue floor below which a weight is treated as unusable:
# loose bound for caller-supplied weights, strict bound for weights built
# from sample residuals (where singularity flags a too-small cross-section).
WEIGHT_PD_RTOL = 1e-14
SAMPLE_WEIGHT_RTOL = 1e-12


@dataclass(frozen=True)
class EstimateSet:
    """Per-unit estimates with the ingredients inference needs.

    ``beta`` is K x N (one column per unit); ``alpha`` is S x N for the
    joint and projection estimators, ``None`` for the de-meaned ones.
    ``residuals`` live in the space the estimator solved in: (T-S) x N
    rows on the de-meaned path, T x N on the joint path.
    """

    method: str
    beta: np.ndarray = field(repr=False)
    alpha: np.ndarray | None = field(repr=False, default=None)
    residuals: np.ndarray | None = field(repr=False, default=None)
    weight_used: WeightMatrix | None = field(repr=False, default=None)
    iterations: int = 0

    @property
    def N(self) -> int:  # noqa: N802
        return self.beta.shape[1]

    @property
    def K(self) -> int:  # noqa: N802
        return self.beta.shape[0]

    def coefficients(self) -> np.ndarray:
        """Stacked (alpha, beta) columns, shape (S+K, N) or (K, N)."""
        if self.alpha is None:
            return self.beta
        return np.vstack([self.alpha, self.beta])


# ---------------------------------------------------------------------------
# shared solving machinery


def _raise_unit_diagnosis(x_blocks: np.ndarray) -> None:
    """Identify which unit's regressor block broke a batched solve."""
    for i in range(x_blocks.shape[0]):
        sv = np.linalg.svd(x_blocks[i], compute_uv=False)
        if sv[0] == 0.0 or sv[-1] / sv[0] < RANK_RTOL:
            raise RankDeficientError(
                f"regressor block of unit {i} is rank deficient", unit=i
            )
    raise SingularError("per-unit normal equations are numerically singular")


def _solve_units(
    x_blocks: np.ndarray, y_cols: np.ndarray, weight: WeightMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """GLS normal equations per unit under a shared weight.

    Parameters
    ----------
    x_blocks : ndarray, shape (N, R, P)
    y_cols : ndarray, shape (R, N)
    weight : WeightMatrix of dim R

    Returns
    -------
    (coef, residuals) with shapes (P, N) and (R, N).
    """
    n, r, p = x_blocks.shape
    if weight.kind == "identity":
        wx = x_blocks
        wy = y_cols
    else:
        stacked = np.ascontiguousarray(x_blocks.transpose(1, 0, 2)).reshape(r, n * p)
        wx = weight.solve(stacked).reshape(r, n, p).transpose(1, 0, 2)
        wy = weight.solve(y_cols)
    gram = np.einsum("nrk,nrl->nkl", x_blocks, wx)
    rhs = np.einsum("nrk,rn->nk", x_blocks, wy)
    try:
        coef = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        _raise_unit_diagnosis(x_blocks)
    if not np.isfinite(coef).all():
        _raise_unit_diagnosis(x_blocks)
    fitted = np.einsum("nrk,nk->rn", x_blocks, coef)
    return coef.T, y_cols - fitted


def _check_weight_usable(w: WeightMatrix) -> None:
    lo, hi = w.eig_bounds()
    if hi <= 0.0 or lo <= w.dim * WEIGHT_PD_RTOL * hi:
        raise SingularError(
            f"weight is not positive definite (eigenvalue range [{lo:.3e}, {hi:.3e}])"
        )


def _residual_weight(residuals: np.ndarray, ridge: float, scale: float) -> WeightMatrix:
    """Average residual outer product, optionally ridge-stabilized.

    ``scale`` is the magnitude of the outcome the residuals came from;
    a weight whose largest eigenvalue is negligible against it (e.g.
    from a noiseless fit) is singular no matter how its own eigenvalues
    compare to each other.
    """
    n = residuals.shape[1]
    w = residuals @ residuals.T / n
    dim = w.shape[0]
    if ridge > 0.0:
        w = w + (ridge * np.trace(w) / dim) * np.eye(dim)
    weight = WeightMatrix.from_dense(w)
    lo, hi = weight.eig_bounds()
    floor = dim * (SAMPLE_WEIGHT_RTOL * scale) ** 2
    if hi <= floor or lo <= dim * SAMPLE_WEIGHT_RTOL * hi:
        raise SingularWeightError(
            "sample weight is numerically singular "
            f"(eigenvalue range [{lo:.3e}, {hi:.3e}]); "
            "the residuals are degenerate or the cross-section is too "
            "small relative to the time span"
        )
    return weight


# ---------------------------------------------------------------------------
# estimators on the de-meaned system


def ols(tp: TransformedPanel) -> EstimateSet:
    """Per-unit least squares on the de-meaned system."""
    beta, residuals = _solve_units(tp.xt, tp.yt, WeightMatrix.identity(tp.rows))
    return EstimateSet(
        method="ols",
        beta=beta,
        residuals=residuals,
        weight_used=WeightMatrix.identity(tp.rows),
        iterations=0,
    )


def ugls(tp: TransformedPanel, w: WeightMatrix) -> EstimateSet:
    """GLS with a caller-supplied weight (the oracle estimator).

    The weight is the reduced averaged innovation covariance; with the
    identity weight the result equals :func:`ols` exactly.
    """
    if w.dim != tp.rows:
        raise DimensionError(f"weight dim {w.dim} does not match system rows {tp.rows}")
    _check_weight_usable(w)
    beta, residuals = _solve_units(tp.xt, tp.yt, w)
    return EstimateSet(
        method="ugls", beta=beta, residuals=residuals, weight_used=w, iterations=1
    )


def sample_weight(tp: TransformedPanel, ols_result: EstimateSet, *, ridge: float = 0.0) -> WeightMatrix:
    """Cross-sectional average of OLS residual outer products.

    Requires N large enough relative to T-S for full rank; singularity
    raises :class:`SingularWeightError` rather than being regularized
    (pass ``ridge`` > 0 explicitly to opt in to stabilization).
    """
    if ols_result.method != "ols":
        raise DimensionError(
            f"sample weight must be built from OLS residuals, got {ols_result.method!r}"
        )
    residuals = ols_result.residuals
    if residuals is None or residuals.shape != tp.yt.shape:
        raise DimensionError("OLS result does not match the panel it came from")
    return _residual_weight(residuals, ridge, float(np.abs(tp.yt).max(initial=0.0)))


def iterated_fgls(
    tp: TransformedPanel,
    steps: int,
    *,
    ridge: float = 0.0,
    weight_override: WeightMatrix | None = None,
) -> EstimateSet:
    """Feasible GLS iterated a fixed number of weight rebuilds.

    Step 1 weights by the average outer product of OLS residuals; each
    later step rebuilds the weight from the previous step's residuals.
    ``steps=1`` is plain feasible GLS, bit for bit. ``weight_override``
    is a test hook replacing every rebuilt weight (the identity override
    makes every step collapse to OLS).
    """
    steps = int(steps)
    if steps < 1:
        raise DimensionError(f"need at least one GLS step, got {steps}")
    residuals = ols(tp).residuals
    scale = float(np.abs(tp.yt).max(initial=0.0))
    weight = None
    beta = None
    for h in range(1, steps + 1):
        if weight_override is not None:
            weight = weight_override
        else:
            try:
                weight = _residual_weight(residuals, ridge, scale)
            except SingularWeightError as exc:
                raise SingularWeightError(f"GLS step {h}: {exc}", step=h) from exc
        beta, residuals = _solve_units(tp.xt, tp.yt, weight)
    return EstimateSet(
        method="fgls" if steps == 1 else "fgls_iter",
        beta=beta,
        residuals=residuals,
        weight_used=weight,
        iterations=steps,
    )


def fgls(
    tp: TransformedPanel,
    *,
    ridge: float = 0.0,
    weight_override: WeightMatrix | None = None,
) -> EstimateSet:
    """Feasible GLS weighted by the averaged OLS residual covariance."""
    return iterated_fgls(tp, 1, ridge=ridge, weight_override=weight_override)


# ---------------------------------------------------------------------------
# joint estimators on the raw system


def _joint_blocks(panel: PanelData) -> np.ndarray:
    """Per-unit [D, X_i] design blocks, shape (N, T, S+K)."""
    d_rep = np.broadcast_to(panel.d, (panel.N, panel.T, panel.S))
    return np.ascontiguousarray(np.concatenate([d_rep, panel.x], axis=2))


def joint_breve(
    panel: PanelData,
    *,
    ridge: float = 0.0,
    weight_override: WeightMatrix | None = None,
) -> EstimateSet:
    """Joint (alpha, beta) GLS with the rank-restored residual weight.

    The average outer product of joint OLS residuals is singular along
    span(D) by construction; adding (trace/N) times the projection onto
    span(D) restores invertibility without touching the complement, so
    the beta block equals the de-meaned feasible GLS estimate and the
    alpha block equals the projection of y - X beta onto D.
    """
    t, n, s = panel.T, panel.N, panel.S
    z = _joint_blocks(panel)
    _, resid0 = _solve_units(z, panel.y, WeightMatrix.identity(t))
    if weight_override is not None:
        weight = weight_override
    else:
        s_tilde = resid0 @ resid0.T / n
        if s:
            p_d = panel.d @ np.linalg.solve(panel.d.T @ panel.d, panel.d.T)
            s_breve = s_tilde + (np.trace(s_tilde) / n) * p_d
        else:
            s_breve = s_tilde
        if ridge > 0.0:
            s_breve = s_breve + (ridge * np.trace(s_breve) / t) * np.eye(t)
        weight = WeightMatrix.from_dense(s_breve)
        lo, hi = weight.eig_bounds()
        floor = t * (SAMPLE_WEIGHT_RTOL * float(np.abs(panel.y).max(initial=0.0))) ** 2
        if hi <= floor or lo <= t * SAMPLE_WEIGHT_RTOL * hi:
            raise SingularWeightError(
                "rank-restored joint weight is numerically singular "
                f"(eigenvalue range [{lo:.3e}, {hi:.3e}])"
            )
    theta, residuals = _solve_units(z, panel.y, weight)
    return EstimateSet(
        method="breve",
        beta=theta[s:],
        alpha=theta[:s] if s else None,
        residuals=residuals,
        weight_used=weight,
        iterations=1,
    )


def joint_moore_penrose(panel: PanelData) -> EstimateSet:
    """Joint estimator weighted by the pseudo-inverse residual weight.

    Diagnostic variant: weighting the joint system by the Moore-Penrose
    inverse of the (singular) joint residual weight zeroes the alpha
    block exactly and returns the de-meaned feasible GLS beta. Useful as
    a numeric identity check, not as a production estimator.
    """
    tp = transform(panel)
    what = sample_weight(tp, ols(tp))
    # Pseudo-inverse of basis W basis' for an orthonormal basis.
    s_pinv = pinv_sandwich(tp.complement.basis, what.dense())
    z = _joint_blocks(panel)
    p = z.shape[2]
    sz = np.einsum("tu,nuk->ntk", s_pinv, z)
    gram = np.einsum("ntk,ntl->nkl", z, sz)
    rhs = np.einsum("ntk,tn->nk", sz, panel.y)
    theta = np.empty((panel.N, p))
    for i in range(panel.N):
        theta[i] = np.linalg.pinv(gram[i], rcond=1e-10) @ rhs[i]
    fitted = np.einsum("ntk,nk->tn", z, theta)
    s = panel.S
    return EstimateSet(
        method="breve_pinv",
        beta=theta.T[s:],
        alpha=theta.T[:s] if s else None,
        residuals=panel.y - fitted,
        weight_used=None,
        iterations=1,
    )


def _project_common(
    panel: PanelData, beta: np.ndarray, weight: WeightMatrix | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Project y - X beta onto span(D): returns (alpha, residuals).

    With a full-space ``weight`` W the projection is in the W-inverse
    metric, (D' W^-1 D)^-1 D' W^-1 (y - X beta), which is the
    common-coefficient block of the joint GLS with that weight.
    """
    fitted_x = np.einsum("ntk,kn->tn", panel.x, beta)
    partial = panel.y - fitted_x
    if weight is None:
        alpha = np.linalg.solve(panel.d.T @ panel.d, panel.d.T @ partial)
    else:
        if weight.dim != panel.T:
            raise DimensionError(
                f"weight dimension {weight.dim} does not match {panel.T} observation rows"
            )
        wd = weight.solve(panel.d)
        alpha = np.linalg.solve(panel.d.T @ wd, wd.T @ partial)
    return alpha, partial - panel.d @ alpha


def alpha_two_step(panel: PanelData, fgls_result: EstimateSet) -> EstimateSet:
    """Common-regressor coefficients by projecting out the fitted betas.

    Identification requires the latent factors to be orthogonal to D in
    population; that restriction is unverifiable from data (the factors
    are unobserved) and the projection is biased when it fails.
    """
    if panel.S == 0:
        raise DimensionError("panel has no common regressors to project on")
    if fgls_result.method not in ("fgls", "fgls_iter", "cross_section"):
        raise DimensionError(
            f"two-step projection expects a feasible GLS result, got {fgls_result.method!r}"
        )
    if fgls_result.beta.shape != (panel.K, panel.N):
        raise DimensionError("estimate does not match the panel it came from")
    alpha, residuals = _project_common(panel, fgls_result.beta)
    return EstimateSet(
        method="alpha_two_step",
        beta=fgls_result.beta,
        alpha=alpha,
        residuals=residuals,
        weight_used=fgls_result.weight_used,
        iterations=fgls_result.iterations,
    )


def cross_sectional_fgls(panel_t: PanelData, *, steps: int = 1) -> EstimateSet:
    """Feasible GLS on a transposed panel: per-period coefficients.

    ``panel_t`` must already be in the dual orientation (see
    :func:`panelgls.panel.dual_panel`): its "units" are the original
    periods and its "time" axis runs over the original units, so the
    weight averages residual outer products over time. Delegates to the
    standard pipeline unchanged.
    """
    est = iterated_fgls(transform(panel_t), steps)
    return dataclasses.replace(est, method="cross_section")


def ols_bias_diagnostic(
    structure: LatentStructure, tp: TransformedPanel, unit: int
) -> np.ndarray:
    """Plug-in estimate of the OLS endogeneity bias for one unit.

    Evaluates (X_i' X_i)^{-1} X_i' F b_i on the de-meaned system with
    sample moments in place of their probability limits. Zero when the
    unit's innovation loadings vanish or its regressors load on no
    factor correlated with the innovation factors.
    """
    if not 0 <= unit < tp.N:
        raise DimensionError(f"unit index {unit} out of range for N={tp.N}")
    if structure.f.shape[0] != tp.complement.rows:
        raise DimensionError("structure and panel disagree on the number of periods")
    xt_i = tp.xt[unit]
    ft = tp.complement.reduce(structure.f)
    return np.linalg.solve(xt_i.T @ xt_i, xt_i.T @ (ft @ structure.b[:, unit]))


# ---------------------------------------------------------------------------
# sklearn-style wrappers


def _as_transformed(data) -> TransformedPanel:
    if isinstance(data, TransformedPanel):
        return data
    if isinstance(data, PanelData):
        return transform(data)
    raise DimensionError(f"expected PanelData or TransformedPanel, got {type(data)!r}")


class _PanelEstimatorMixin(BaseEstimator):
    """Shared fitted-attribute plumbing for the estimator classes."""

    def _store(self, est: EstimateSet) -> None:
        self.estimate_ = est
        self.method_ = est.method
        self.beta_ = est.beta
        self.alpha_ = est.alpha
        self.residuals_ = est.residuals
        self.weight_ = est.weight_used
        self.n_iter_ = est.iterations

    def predict(self, panel: PanelData) -> np.ndarray:
        """Fitted values D alpha_i + X_i beta_i, shape (T, N)."""
        if not hasattr(self, "estimate_"):
            raise SingularError("estimator is not fitted")
        if self.alpha_ is None:
            raise DimensionError(
                "this estimator fits no common-regressor coefficients; "
                "use alpha_two_step or JointGLS for full fitted values"
            )
        fitted = np.einsum("ntk,kn->tn", panel.x, self.beta_)
        return fitted + panel.d @ self.alpha_


class PanelOLS(_PanelEstimatorMixin):
    """Per-unit least squares on the de-meaned panel."""

    def fit(self, panel, y=None):
        self._store(ols(_as_transformed(panel)))
        return self


class OracleGLS(_PanelEstimatorMixin):
    """GLS weighted by the true averaged innovation covariance.

    Infeasible outside simulations: ``fit`` needs either the latent
    structure or a prebuilt weight.
    """

    def fit(self, panel, y=None, *, structure: LatentStructure | None = None,
            weight: WeightMatrix | None = None):
        tp = _as_transformed(panel)
        if (structure is None) == (weight is None):
            raise DimensionError("provide exactly one of structure or weight")
        if weight is None:
            weight = oracle_weight(structure, tp.complement)
        self._store(ugls(tp, weight))
        return self


class FeasibleGLS(_PanelEstimatorMixin):
    """Feasible GLS weighted by averaged OLS residual outer products.

    Parameters
    ----------
    steps : int
        Total number of GLS solves; 1 is plain feasible GLS, larger
        values rebuild the weight from the previous step's residuals.
    ridge : float
        Optional weight stabilization (adds ridge * trace/dim to the
        diagonal); off by default and never applied silently.
    """

    def __init__(self, steps: int = 1, ridge: float = 0.0):
        self.steps = steps
        self.ridge = ridge

    def fit(self, panel, y=None):
        self._store(iterated_fgls(_as_transformed(panel), self.steps, ridge=self.ridge))
        return self


class JointGLS(_PanelEstimatorMixin):
    """Joint (alpha, beta) GLS with the rank-restored residual weight."""

    def __init__(self, ridge: float = 0.0):
        self.ridge = ridge

    def fit(self, panel: PanelData, y=None):
        self._store(joint_breve(panel, ridge=self.ridge))
        return self


class CrossSectionGLS(_PanelEstimatorMixin):
    """Per-period feasible GLS on a panel in dual orientation."""

    def __init__(self, steps: int = 1):
        self.steps = steps

    def fit(self, panel_t: PanelData, y=None):
        self._store(cross_sectional_fgls(panel_t, steps=self.steps))
        return self
