"""HAC covariance estimation and block Wald tests for panel estimates.

Per-unit Newey-West (Bartlett kernel) sandwich covariances for the
de-meaned and joint estimators, t ratios on the matching scale, and
Wald statistics over coefficient blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimateSet, _joint_blocks
from .exceptions import BandwidthError, DimensionError, SingularError
from .panel import PanelData, TransformedPanel

__all__ = [
    "HacSpec",
    "InferenceSet",
    "WaldSet",
    "default_bandwidth",
    "hac_cov_fgls",
    "hac_cov_breve",
    "wald_tests",
]

_MODES = ("weighted_regressors", "plain")


def default_bandwidth(rows: int) -> int:
    """Rule-of-thumb lag count floor(4 * (rows / 100)^(2/9)).

    Clipped to ``rows - 1`` so the lag sum always fits the sample.
    """
    if rows < 1:
        raise DimensionError("bandwidth rule needs at least one observation row")
    return min(int(4.0 * (rows / 100.0) ** (2.0 / 9.0)), rows - 1)


@dataclass(frozen=True)
class HacSpec:
    """Bartlett-kernel HAC configuration.

    ``bandwidth`` is the largest residual autocovariance lag included;
    lag h enters with weight 1 - h/(bandwidth + 1), so lag
    ``bandwidth + 1`` is excluded exactly. ``mode`` selects whether the
    score rows are premultiplied by the inverse of the weight the
    estimate was computed with ("weighted_regressors", the GLS path) or
    used raw ("plain", the least-squares path).
    """

    bandwidth: int
    mode: str = "weighted_regressors"
    kernel: str = "bartlett"

    def __post_init__(self) -> None:
        if int(self.bandwidth) != self.bandwidth or self.bandwidth < 0:
            raise BandwidthError(f"bandwidth must be a nonnegative integer, got {self.bandwidth}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.kernel != "bartlett":
            raise ValueError("only the bartlett kernel is supported")


@dataclass(frozen=True)
class WaldSet:
    """Per-unit block Wald statistics.

    ``stats`` has one row per tested block and one column per unit;
    ``df`` holds the matching block sizes. Empty blocks report NaN with
    zero degrees of freedom.
    """

    names: tuple[str, ...]
    stats: np.ndarray = field(repr=False)
    df: tuple[int, ...]

    def unit(self, i: int) -> dict[str, tuple[float, int]]:
        """Statistics for one unit as {name: (W, df)}."""
        return {
            name: (float(self.stats[j, i]), self.df[j])
            for j, name in enumerate(self.names)
        }


@dataclass(frozen=True)
class InferenceSet:
    """Per-unit coefficient covariances and t ratios.

    ``cov`` holds one symmetric matrix per unit on the asymptotic
    root-``nobs`` scale: the finite-sample covariance of the unit's
    coefficient vector is ``cov[i] / nobs`` and
    ``tstats[k, i] = coef[k, i] / sqrt(cov[i][k, k] / nobs)``.
    ``wald`` stays None until the caller attaches a :class:`WaldSet`.
    """

    cov: list[np.ndarray] = field(repr=False)
    tstats: np.ndarray = field(repr=False)
    nobs: int
    wald: WaldSet | None = None

    @property
    def N(self) -> int:  # noqa: N802 - domain name
        return len(self.cov)

    @property
    def order(self) -> int:
        """Coefficient count covered by each covariance matrix."""
        return self.tstats.shape[0]


def _check_bandwidth(spec: HacSpec, rows: int) -> None:
    if spec.bandwidth >= rows:
        raise BandwidthError(
            f"bandwidth {spec.bandwidth} needs more than {spec.bandwidth} rows, got {rows}"
        )


def _bartlett_middle(scores: np.ndarray, bandwidth: int) -> np.ndarray:
    """Bartlett-weighted long-run second moment of the score rows."""
    rows = scores.shape[0]
    acc = scores.T @ scores
    for h in range(1, bandwidth + 1):
        lagged = scores[h:].T @ scores[:-h]
        acc += (1.0 - h / (bandwidth + 1.0)) * (lagged + lagged.T)
    return acc / rows


def _sandwich(
    design: np.ndarray,
    weighted: np.ndarray,
    resid: np.ndarray,
    bandwidth: int,
    unit: int,
) -> np.ndarray:
    rows = design.shape[0]
    bread = design.T @ weighted / rows
    middle = _bartlett_middle(weighted * resid[:, None], bandwidth)
    try:
        cov = np.linalg.solve(bread, np.linalg.solve(bread, middle).T)
    except np.linalg.LinAlgError as exc:
        raise SingularError(f"weighted design gram is singular for unit {unit}") from exc
    return (cov + cov.T) / 2.0


def _tstats(coef: np.ndarray, cov: list[np.ndarray], nobs: int) -> np.ndarray:
    se = np.empty_like(coef)
    for i, c in enumerate(cov):
        se[:, i] = np.sqrt(np.maximum(np.diag(c), 0.0) / nobs)
    with np.errstate(divide="ignore", invalid="ignore"):
        return coef / se


def _weighted_designs(designs: np.ndarray, est: EstimateSet, spec: HacSpec) -> np.ndarray:
    """Score regressors per unit: inverse-weight solves or the raw rows."""
    if spec.mode == "plain":
        return designs
    if est.weight_used is None:
        raise DimensionError("weighted_regressors mode needs the weight the estimate used")
    n, rows, order = designs.shape
    if est.weight_used.dim != rows:
        raise DimensionError(
            f"weight dimension {est.weight_used.dim} does not match {rows} observation rows"
        )
    if est.weight_used.kind == "identity":
        return designs
    stacked = est.weight_used.solve(designs.transpose(1, 0, 2).reshape(rows, n * order))
    return stacked.reshape(rows, n, order).transpose(1, 0, 2)


def hac_cov_fgls(tp: TransformedPanel, est: EstimateSet, spec: HacSpec) -> InferenceSet:
    """HAC covariances for estimators solved on the de-meaned system.

    For each unit the sandwich is
    (X' W^-1 X / R)^-1 M (X' W^-1 X / R)^-1 with R the de-meaned row
    count, W the weight the estimate was computed with, and M the
    Bartlett-weighted long-run second moment of the rows of W^-1 X
    scaled by the unit's residuals. With bandwidth 0 the middle matrix
    is the plain heteroskedasticity outer product; in "plain" mode the
    weighting is skipped and the result is the textbook least-squares
    HAC sandwich.
    """
    rows = tp.rows
    if est.residuals is None:
        raise DimensionError("estimate carries no residuals; refit before inference")
    if est.alpha is not None:
        raise DimensionError("joint estimates carry common coefficients; use hac_cov_breve")
    if est.residuals.shape != (rows, tp.N) or est.beta.shape != (tp.K, tp.N):
        raise DimensionError("estimate shapes do not match the de-meaned panel")
    _check_bandwidth(spec, rows)
    weighted = _weighted_designs(tp.xt, est, spec)
    cov = [
        _sandwich(tp.xt[i], weighted[i], est.residuals[:, i], spec.bandwidth, i)
        for i in range(tp.N)
    ]
    return InferenceSet(cov=cov, tstats=_tstats(est.beta, cov, rows), nobs=rows)


def hac_cov_breve(panel: PanelData, est: EstimateSet, spec: HacSpec) -> InferenceSet:
    """HAC covariances for the rank-restored joint estimator.

    Same sandwich as :func:`hac_cov_fgls`, built on the joint per-unit
    design [D, X_i] over all T rows with the joint weight and the joint
    residuals, so each covariance covers the stacked (alpha, beta)
    coefficient vector.
    """
    if est.method != "breve":
        raise DimensionError(f"joint HAC needs a rank-restored joint estimate, got {est.method!r}")
    rows = panel.T
    if est.residuals is None or est.residuals.shape != (rows, panel.N):
        raise DimensionError("estimate residuals do not match the panel rows")
    if est.coefficients().shape != (panel.S + panel.K, panel.N):
        raise DimensionError("estimate coefficient order does not match the joint design")
    _check_bandwidth(spec, rows)
    designs = _joint_blocks(panel)
    weighted = _weighted_designs(designs, est, spec)
    cov = [
        _sandwich(designs[i], weighted[i], est.residuals[:, i], spec.bandwidth, i)
        for i in range(panel.N)
    ]
    return InferenceSet(cov=cov, tstats=_tstats(est.coefficients(), cov, rows), nobs=rows)


def wald_tests(
    est: EstimateSet,
    inf: InferenceSet,
    blocks: dict[str, np.ndarray] | None = None,
) -> WaldSet:
    """Block Wald statistics W = theta' (V / nobs)^-1 theta per unit.

    ``blocks`` maps names to index arrays into the rows of
    ``est.coefficients()``. The default partition tests the
    common-regressor block ("gamma"), the characteristic block
    ("beta"), and their union ("joint"); estimates without common
    coefficients get an empty gamma block, reported as NaN with zero
    degrees of freedom. W is invariant to invertible linear
    reparameterizations applied consistently to the block coefficients
    and their covariance.
    """
    coef = est.coefficients()
    order = coef.shape[0]
    if inf.order != order or inf.N != est.N:
        raise DimensionError(
            f"inference order {inf.order} x {inf.N} does not match estimates {order} x {est.N}"
        )
    if blocks is None:
        n_common = order - est.K
        blocks = {
            "gamma": np.arange(n_common),
            "beta": np.arange(n_common, order),
            "joint": np.arange(order),
        }
    names = tuple(blocks)
    stats = np.full((len(names), est.N), np.nan)
    df = []
    for j, name in enumerate(names):
        idx = np.asarray(blocks[name], dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= order):
            raise DimensionError(f"block {name!r} indexes outside the coefficient order {order}")
        df.append(int(idx.size))
        if idx.size == 0:
            continue
        for i in range(est.N):
            v = inf.cov[i][np.ix_(idx, idx)] / inf.nobs
            theta = coef[idx, i]
            try:
                stats[j, i] = float(theta @ np.linalg.solve(v, theta))
            except np.linalg.LinAlgError as exc:
                raise SingularError(
                    f"block {name!r} covariance is singular for unit {i}"
                ) from exc
    return WaldSet(names=names, stats=stats, df=tuple(df))
