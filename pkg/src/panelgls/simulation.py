"""Synthetic-panel generator and the Monte Carlo replication engine.

The data-generating process draws, per unit, an outcome loading on two
autoregressive latent factors plus AR(1) idiosyncratic noise, and a
single regressor loading on the first of those factors (plus a third,
exogenous one). Half the units carry a low slope and half a high one.
Unit-level heterogeneity (loadings, AR coefficients, variances) is
redrawn every replication; only the coefficient targets stay fixed.

Reproducibility contract: all draws come from a Philox counter-based
generator; replication r of a run seeded with ``seed`` uses the key
``seed XOR r`` and draws its variates in one documented order, so
results are independent of worker scheduling.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.signal
from threadpoolctl import threadpool_limits

from .estimators import iterated_fgls, joint_breve, ols, ugls, _project_common
from .exceptions import DimensionError, PanelError
from .panel import Ar1CovarianceSet, LatentStructure, PanelData, oracle_weight, transform

__all__ = ["DgpSpec", "Truth", "McSummary", "simulate", "run_mc", "MC_ESTIMATORS", "MC_GROUPS"]

_U64 = 0xFFFFFFFFFFFFFFFF

MC_ESTIMATORS = ("ols", "ugls", "fgls", "iter")
MC_GROUPS = ("alpha", "beta_low", "beta_high")


@dataclass(frozen=True)
class DgpSpec:
    """Full parameterization of the synthetic panel generator.

    Defaults reproduce the benchmark design: K = 1 regressor, S = 1
    common regressor (a constant), M = 2 latent factors in the outcome
    innovation, slope 1 for the first half of the units and 3 for the
    second half.
    """

    n: int
    t: int
    seed: int = 0
    factor_ar: float = 0.5
    factor_innov_var: float = 0.5
    b_mean: tuple[float, float] = (1.0, 0.0)
    b_var: tuple[float, float] = (0.2, 0.2)
    delta_mean: tuple[float, float] = (0.5, 0.0)
    delta_var: tuple[float, float] = (0.5, 0.5)
    rho_eps_range: tuple[float, float] = (0.05, 0.95)
    rho_v_range: tuple[float, float] = (0.05, 0.95)
    sigma2_range: tuple[float, float] = (0.5, 1.5)
    alpha0: float = 1.0
    x_intercept: float = 0.5
    beta_low: float = 1.0
    beta_high: float = 3.0
    distinct_factors: bool = False

    def __post_init__(self):
        if self.n < 2 or self.n % 2 != 0:
            raise DimensionError(f"n must be even and at least 2, got {self.n}")
        if self.t < 3:
            raise DimensionError(f"t must be at least 3, got {self.t}")
        if not abs(self.factor_ar) < 1.0:
            raise DimensionError(f"|factor_ar| must be below 1, got {self.factor_ar}")
        if self.factor_innov_var < 0.0:
            raise DimensionError("factor innovation variance must be nonnegative")
        for name in ("rho_eps_range", "rho_v_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi < 1.0):
                raise DimensionError(f"{name} must satisfy 0 < lo <= hi < 1, got ({lo}, {hi})")
        lo, hi = self.sigma2_range
        if not (0.0 < lo <= hi):
            raise DimensionError(f"sigma2_range must be positive, got ({lo}, {hi})")
        if min(self.b_var) < 0.0 or min(self.delta_var) < 0.0:
            raise DimensionError("loading variances must be nonnegative")


@dataclass(frozen=True)
class Truth:
    """True per-unit coefficients of a simulated panel."""

    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)


def _stationary_ar1(z: np.ndarray, rho: np.ndarray, innov_sd: np.ndarray) -> np.ndarray:
    """AR(1) paths from standard-normal draws, exact stationary start.

    ``z`` is (T, m); ``rho`` and ``innov_sd`` broadcast over the m
    columns. Row 0 is drawn from the stationary law, later rows follow
    x_t = rho x_{t-1} + innov_sd z_t.
    """
    t, m = z.shape
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (m,))
    innov_sd = np.broadcast_to(np.asarray(innov_sd, dtype=np.float64), (m,))
    out = np.empty((t, m))
    stationary_sd = innov_sd / np.sqrt(1.0 - rho**2)
    driven = innov_sd * z
    driven[0] = stationary_sd * z[0]
    for j in range(m):
        out[:, j] = scipy.signal.lfilter([1.0], [1.0, -rho[j]], driven[:, j])
    return out


def simulate(spec: DgpSpec) -> tuple[PanelData, LatentStructure, Truth]:
    """Draw one synthetic panel plus its latent structure and truth.

    Variates are drawn in a fixed order (factor innovations, outcome
    loadings, regressor loadings, AR coefficients, variances, outcome
    noise, regressor noise) from a Philox generator keyed by
    ``spec.seed``, so equal specs produce bitwise-equal panels.
    """
    n, t = spec.n, spec.t
    rng = np.random.Generator(np.random.Philox(key=spec.seed & _U64))

    z_factors = rng.standard_normal((t, 3))
    if spec.distinct_factors:
        z_twin = rng.standard_normal(t)
    z_b = rng.standard_normal((2, n))
    z_delta = rng.standard_normal((2, n))
    rho_eps = rng.uniform(*spec.rho_eps_range, n)
    sigma2 = rng.uniform(*spec.sigma2_range, n)
    rho_v = rng.uniform(*spec.rho_v_range, n)
    z_eps = rng.standard_normal((t, n))
    z_v = rng.standard_normal((t, n))

    innov_sd = np.sqrt(spec.factor_innov_var)
    factors = _stationary_ar1(z_factors, spec.factor_ar, innov_sd)
    f_outcome = factors[:, :2]

    b = np.asarray(spec.b_mean)[:, None] + np.sqrt(spec.b_var)[:, None] * z_b
    delta_loadings = (
        np.asarray(spec.delta_mean)[:, None] + np.sqrt(spec.delta_var)[:, None] * z_delta
    )

    eps = _stationary_ar1(z_eps, rho_eps, np.sqrt(sigma2 * (1.0 - rho_eps**2)))
    v = _stationary_ar1(z_v, rho_v, np.sqrt(1.0 - rho_v**2))

    d = np.ones((t, 1))
    delta = np.full((n, 1, 1), spec.x_intercept)
    gamma = np.zeros((n, 2, 1))
    if spec.distinct_factors:
        # Exploratory mode: the regressor loads a correlated twin of the
        # first factor instead of the factor itself.
        z_g = 0.5 * z_factors[:, 0] + np.sqrt(0.75) * z_twin
        g1 = _stationary_ar1(z_g[:, None], spec.factor_ar, innov_sd)[:, 0]
        x_factor_part = delta_loadings[0][None, :] * g1[:, None]
    else:
        gamma[:, 0, 0] = delta_loadings[0]
        x_factor_part = 0.0
    v_block = np.ascontiguousarray(
        (x_factor_part + delta_loadings[1][None, :] * factors[:, 2][:, None] + v).T[:, :, None]
    )

    x = (
        np.einsum("ts,nsk->ntk", d, delta)
        + np.einsum("tm,nmk->ntk", f_outcome, gamma)
        + v_block
    )

    beta = np.empty((1, n))
    beta[0, : n // 2] = spec.beta_low
    beta[0, n // 2 :] = spec.beta_high
    alpha = np.full((1, n), spec.alpha0)

    u = f_outcome @ b + eps
    y = d @ alpha + np.einsum("ntk,kn->tn", x, beta) + u

    panel = PanelData(y=y, x=x, d=d)
    structure = LatentStructure(
        f=f_outcome,
        b=b,
        gamma=gamma,
        v=v_block,
        xi=Ar1CovarianceSet(sigma2, rho_eps, t),
        eps=eps,
        delta=delta,
    )
    return panel, structure, Truth(alpha=alpha, beta=beta)


@dataclass(frozen=True)
class McSummary:
    """Mean/rmse aggregation of a replication run, one (N, T) cell.

    The cell mean is the across-unit average of per-unit Monte Carlo
    means; the cell rmse is the across-unit average of per-unit
    root-mean-squared errors against the true coefficient.
    """

    n: int
    t: int
    mm: int
    reps_used: int
    dropped: int
    estimators: tuple[str, ...]
    values: dict[tuple[str, str], tuple[float, float]] = field(repr=False)

    def rows(self) -> list[dict]:
        out = []
        for est in self.estimators:
            for group in MC_GROUPS:
                mean, rmse = self.values[(est, group)]
                out.append(
                    {
                        "estimator": est,
                        "group": group,
                        "mean": mean,
                        "rmse": rmse,
                        "reps": self.reps_used,
                        "dropped": self.dropped,
                    }
                )
        return out


def _replicate(spec: DgpSpec, r: int, estimators: tuple[str, ...], j: int):
    """One replication: returns {estimator: (alpha_hat, beta_hat)} or None."""
    rep_spec = dataclasses.replace(spec, seed=(spec.seed ^ r) & _U64)
    try:
        panel, structure, _ = simulate(rep_spec)
        tp = transform(panel)
        out = {}
        if "ols" in estimators:
            est = ols(tp)
            alpha, _ = _project_common(panel, est.beta)
            out["ols"] = (alpha[0], est.beta[0])
        if "ugls" in estimators:
            est = ugls(tp, oracle_weight(structure, tp.complement))
            alpha, _ = _project_common(panel, est.beta, oracle_weight(structure))
            out["ugls"] = (alpha[0], est.beta[0])
        if "fgls" in estimators:
            est = joint_breve(panel)
            out["fgls"] = (est.alpha[0], est.beta[0])
        if "iter" in estimators:
            est = iterated_fgls(tp, j)
            alpha, _ = _project_common(panel, est.beta)
            out["iter"] = (alpha[0], est.beta[0])
        return out
    except PanelError:
        return None


def run_mc(
    spec: DgpSpec,
    mm: int,
    estimators: tuple[str, ...] = MC_ESTIMATORS,
    j: int = 4,
    *,
    workers: int = 1,
) -> McSummary:
    """Replicate the generator, estimate, and aggregate mean/rmse cells.

    Runs the requested estimators on ``mm`` fresh panels. Coefficient
    statistics are grouped as the common intercept over all units
    ("alpha") and the slope over the low- and high-slope halves
    ("beta_low", "beta_high"). The slope path for "fgls" reports the
    joint rank-restored solve (whose slope block equals de-meaned
    feasible GLS); "iter" runs ``j`` total GLS solves. Intercepts come
    from projecting y - X beta_hat onto the common regressors; for
    "ugls" the projection is weighted by the true full-space
    covariance, matching the intercept block of the exact joint GLS.
    Replications where any estimator fails are dropped and counted;
    more than 1% drops aborts the run.

    The output is bitwise independent of ``workers``: every replication
    owns a seed (``spec.seed XOR r``), BLAS pools are pinned to one
    thread inside the run, and the reduction is applied in replication
    order.
    """
    mm = int(mm)
    if mm < 1:
        raise DimensionError(f"need at least one replication, got {mm}")
    unknown = set(estimators) - set(MC_ESTIMATORS)
    if unknown:
        raise DimensionError(f"unknown estimators {sorted(unknown)}")
    estimators = tuple(e for e in MC_ESTIMATORS if e in estimators)
    if not estimators:
        raise DimensionError("no estimators requested")
    if {"fgls", "iter"} & set(estimators) and spec.n < spec.t:
        raise DimensionError(
            f"feasible GLS needs at least as many units as periods, got N={spec.n} < T={spec.t}"
        )

    with threadpool_limits(limits=1):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(lambda r: _replicate(spec, r, estimators, j), range(mm))
                )
        else:
            results = [_replicate(spec, r, estimators, j) for r in range(mm)]

    n = spec.n
    sums = {e: np.zeros((2, n)) for e in estimators}
    sq_sums = {e: np.zeros((2, n)) for e in estimators}
    alpha_true = spec.alpha0
    beta_true = np.empty(n)
    beta_true[: n // 2] = spec.beta_low
    beta_true[n // 2 :] = spec.beta_high

    dropped = 0
    for res in results:
        if res is None:
            dropped += 1
            continue
        for e in estimators:
            alpha_hat, beta_hat = res[e]
            sums[e][0] += alpha_hat
            sums[e][1] += beta_hat
            sq_sums[e][0] += (alpha_hat - alpha_true) ** 2
            sq_sums[e][1] += (beta_hat - beta_true) ** 2

    if dropped > 0.01 * mm:
        raise RuntimeError(
            f"{dropped} of {mm} replications failed; the cell is too ill-conditioned"
        )
    reps_used = mm - dropped

    half = n // 2
    values = {}
    for e in estimators:
        unit_means = sums[e] / reps_used
        unit_rmses = np.sqrt(sq_sums[e] / reps_used)
        values[(e, "alpha")] = (float(unit_means[0].mean()), float(unit_rmses[0].mean()))
        values[(e, "beta_low")] = (
            float(unit_means[1, :half].mean()),
            float(unit_rmses[1, :half].mean()),
        )
        values[(e, "beta_high")] = (
            float(unit_means[1, half:].mean()),
            float(unit_rmses[1, half:].mean()),
        )
    return McSummary(
        n=spec.n,
        t=spec.t,
        mm=mm,
        reps_used=reps_used,
        dropped=dropped,
        estimators=estimators,
        values=values,
    )
