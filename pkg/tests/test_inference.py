"""Tests for HAC covariance estimation and block Wald statistics."""

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from panelgls.estimators import EstimateSet, fgls, joint_breve, ols, ugls
from panelgls.exceptions import BandwidthError, DimensionError, SingularError
from panelgls.inference import (
    HacSpec,
    InferenceSet,
    WaldSet,
    default_bandwidth,
    hac_cov_breve,
    hac_cov_fgls,
    wald_tests,
)
from panelgls.panel import PanelData, WeightMatrix, transform
from panelgls.simulation import DgpSpec, simulate


def factor_panel(n=120, t=40, seed=11):
    panel, structure, truth = simulate(DgpSpec(n=n, t=t, seed=seed))
    return panel, structure, truth


def flat_panel(rng, t, n, k=2, beta=(0.4, -0.7), noise=1.0):
    """No common regressors: y = X beta + iid noise, S = 0."""
    x = rng.standard_normal((n, t, k))
    beta = np.asarray(beta[:k], dtype=float)
    y = np.einsum("ntk,k->tn", x, beta) + noise * rng.standard_normal((t, n))
    return PanelData(y=y, x=x, d=None, require_intercept=False), beta


def naive_newey_west(design, weighted, resid, bandwidth):
    """Textbook sandwich with explicit scalar loops, as an oracle."""
    rows, order = design.shape
    bread = design.T @ weighted / rows
    scores = weighted * resid[:, None]
    middle = np.zeros((order, order))
    for t in range(rows):
        middle += np.outer(scores[t], scores[t])
    for h in range(1, bandwidth + 1):
        w = 1.0 - h / (bandwidth + 1.0)
        for t in range(h, rows):
            pair = np.outer(scores[t], scores[t - h])
            middle += w * (pair + pair.T)
    middle /= rows
    bread_inv = np.linalg.inv(bread)
    cov = bread_inv @ middle @ bread_inv
    return (cov + cov.T) / 2.0


# ---------------------------------------------------------------------------
# bandwidth rule and spec validation


def test_default_bandwidth_reference_values():
    assert default_bandwidth(100) == 4
    assert default_bandwidth(5000) == 9
    assert default_bandwidth(25) == 2
    assert default_bandwidth(1) == 0


def test_default_bandwidth_monotone_and_feasible():
    prev = 0
    for rows in range(1, 2000):
        n = default_bandwidth(rows)
        assert 0 <= n < rows
        assert n >= prev or n == rows - 1
        prev = n
    with pytest.raises(DimensionError):
        default_bandwidth(0)


def test_hacspec_validation():
    spec = HacSpec(bandwidth=3)
    assert spec.mode == "weighted_regressors"
    assert spec.kernel == "bartlett"
    with pytest.raises(BandwidthError):
        HacSpec(bandwidth=-1)
    with pytest.raises(BandwidthError):
        HacSpec(bandwidth=1.5)
    with pytest.raises(ValueError):
        HacSpec(bandwidth=0, mode="parzen_path")
    with pytest.raises(ValueError):
        HacSpec(bandwidth=0, kernel="quadratic_spectral")


def test_bandwidth_must_be_less_than_rows():
    panel, _, _ = factor_panel(n=60, t=20)
    tp = transform(panel)
    est = ols(tp)
    with pytest.raises(BandwidthError):
        hac_cov_fgls(tp, est, HacSpec(bandwidth=tp.rows))
    inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=tp.rows - 1))
    assert inf.nobs == tp.rows


# ---------------------------------------------------------------------------
# sandwich values against independent oracles


def test_matches_explicit_loop_oracle_weighted():
    panel, _, _ = factor_panel(n=80, t=30)
    tp = transform(panel)
    est = fgls(tp)
    spec = HacSpec(bandwidth=3)
    inf = hac_cov_fgls(tp, est, spec)
    w_dense = est.weight_used.dense()
    for i in range(0, tp.N, 17):
        weighted = np.linalg.inv(w_dense) @ tp.xt[i]
        expected = naive_newey_west(tp.xt[i], weighted, est.residuals[:, i], 3)
        assert_allclose(inf.cov[i], expected, rtol=1e-8, atol=1e-12)


def test_matches_explicit_loop_oracle_plain():
    rng = np.random.default_rng(7)
    panel, _ = flat_panel(rng, t=50, n=4)
    tp = transform(panel)
    est = ols(tp)
    inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=5, mode="plain"))
    for i in range(panel.N):
        expected = naive_newey_west(tp.xt[i], tp.xt[i], est.residuals[:, i], 5)
        assert_allclose(inf.cov[i], expected, rtol=1e-10, atol=1e-14)


def test_bandwidth_zero_equals_plain_heteroskedasticity_sandwich():
    panel, _, _ = factor_panel(n=60, t=24)
    tp = transform(panel)
    est = fgls(tp)
    inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=0))
    w_dense = est.weight_used.dense()
    for i in range(tp.N):
        xhat = np.linalg.solve(w_dense, tp.xt[i])
        bread = tp.xt[i].T @ xhat / tp.rows
        scores = xhat * est.residuals[:, i][:, None]
        middle = scores.T @ scores / tp.rows
        expected = np.linalg.inv(bread) @ middle @ np.linalg.inv(bread)
        assert_allclose(inf.cov[i], expected, rtol=1e-9, atol=1e-12)


def test_identity_weight_iid_matches_ols_covariance():
    rng = np.random.default_rng(21)
    sigma = 1.3
    panel, _ = flat_panel(rng, t=5000, n=3, noise=sigma)
    tp = transform(panel)
    est = ols(tp)
    assert est.weight_used.kind == "identity"
    inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=0))
    for i in range(panel.N):
        oracle = sigma**2 * np.linalg.inv(tp.xt[i].T @ tp.xt[i] / tp.rows)
        rel = np.linalg.norm(inf.cov[i] - oracle) / np.linalg.norm(oracle)
        assert rel <= 0.10
    plain = hac_cov_fgls(tp, est, HacSpec(bandwidth=0, mode="plain"))
    for i in range(panel.N):
        assert_allclose(inf.cov[i], plain.cov[i], rtol=0, atol=0)


def test_kernel_weight_at_last_lag_and_cutoff():
    t, n = 12, 4
    x = np.ones((1, t, 1))
    y = np.zeros((t, 1))
    panel = PanelData(y=y, x=x, d=None, require_intercept=False)
    tp = transform(panel)
    a, b = 0.8, -1.7

    def cov_with_spike(gap, bandwidth):
        resid = np.zeros((t, 1))
        resid[0, 0], resid[gap, 0] = a, b
        est = EstimateSet(
            method="ols",
            beta=np.zeros((1, 1)),
            residuals=resid,
            weight_used=WeightMatrix.identity(t),
        )
        return hac_cov_fgls(tp, est, HacSpec(bandwidth=bandwidth)).cov[0][0, 0]

    # lag h = n enters with Bartlett weight 1/(n+1)
    got = cov_with_spike(gap=n, bandwidth=n)
    expected = (a**2 + b**2 + 2 * a * b / (n + 1)) / t
    assert_allclose(got, expected, rtol=1e-13)
    # lag h = n+1 is excluded entirely: same value as bandwidth 0
    assert cov_with_spike(gap=n + 1, bandwidth=n) == cov_with_spike(gap=n + 1, bandwidth=0)


def test_covariance_is_psd_and_symmetric_across_bandwidths():
    rng = np.random.default_rng(3)
    panel, _ = flat_panel(rng, t=35, n=6, noise=2.0)
    tp = transform(panel)
    est = ols(tp)
    for bandwidth in (0, 1, 4, 9, 20):
        inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=bandwidth))
        for c in inf.cov:
            assert np.abs(c - c.T).max() <= 1e-12
            eigs = np.linalg.eigvalsh(c)
            assert eigs.min() >= -1e-10 * max(eigs.max(), 1.0)
            assert np.diag(c).min() >= -1e-12


def test_tstats_match_cov_diagonal_scaling():
    panel, _, _ = factor_panel(n=50, t=20)
    tp = transform(panel)
    est = ugls(tp, WeightMatrix.identity(tp.rows))
    inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=2))
    assert inf.order == tp.K
    assert inf.N == tp.N
    for i in range(tp.N):
        se = np.sqrt(np.diag(inf.cov[i]) / inf.nobs)
        assert_allclose(inf.tstats[:, i], est.beta[:, i] / se, rtol=1e-12)


# ---------------------------------------------------------------------------
# joint-path HAC


def test_breve_cov_covers_common_and_unit_coefficients():
    panel, _, _ = factor_panel(n=90, t=30)
    est = joint_breve(panel)
    spec = HacSpec(bandwidth=default_bandwidth(panel.T))
    inf = hac_cov_breve(panel, est, spec)
    order = panel.S + panel.K
    assert inf.order == order
    assert inf.nobs == panel.T
    for c in inf.cov:
        assert c.shape == (order, order)
        assert np.abs(c - c.T).max() <= 1e-12


def test_breve_beta_tstat_signs_agree_with_fgls():
    panel, _, _ = factor_panel(n=150, t=30, seed=29)
    tp = transform(panel)
    spec = HacSpec(bandwidth=default_bandwidth(panel.T))
    t_breve = hac_cov_breve(panel, joint_breve(panel), spec).tstats[panel.S :]
    t_fgls = hac_cov_fgls(tp, fgls(tp), spec).tstats
    agree = np.sign(t_breve) == np.sign(t_fgls)
    assert agree.mean() >= 0.95


def test_breve_equals_demeaned_hac_without_common_regressors():
    rng = np.random.default_rng(13)
    panel, _ = flat_panel(rng, t=18, n=60)
    tp = transform(panel)
    spec = HacSpec(bandwidth=3)
    est_b = joint_breve(panel)
    est_f = fgls(tp)
    inf_b = hac_cov_breve(panel, est_b, spec)
    inf_f = hac_cov_fgls(tp, est_f, spec)
    for i in range(panel.N):
        assert_allclose(inf_b.cov[i], inf_f.cov[i], rtol=1e-10, atol=1e-12)


def test_hac_input_gates():
    panel, _, _ = factor_panel(n=40, t=16)
    tp = transform(panel)
    est = ols(tp)
    with pytest.raises(DimensionError):
        hac_cov_breve(panel, est, HacSpec(bandwidth=0))
    no_resid = dataclasses.replace(est, residuals=None)
    with pytest.raises(DimensionError):
        hac_cov_fgls(tp, no_resid, HacSpec(bandwidth=0))
    no_weight = dataclasses.replace(est, weight_used=None)
    with pytest.raises(DimensionError):
        hac_cov_fgls(tp, no_weight, HacSpec(bandwidth=0))
    joint = joint_breve(panel)
    with pytest.raises(DimensionError):
        hac_cov_fgls(tp, joint, HacSpec(bandwidth=0))


# ---------------------------------------------------------------------------
# Wald statistics


def unit_inference(cov_list, nobs):
    order = cov_list[0].shape[0]
    tstats = np.zeros((order, len(cov_list)))
    return InferenceSet(cov=cov_list, tstats=tstats, nobs=nobs)


def test_wald_zero_coefficients_give_zero():
    est = EstimateSet(method="ols", beta=np.zeros((2, 3)))
    inf = unit_inference([np.eye(2)] * 3, nobs=40)
    wald = wald_tests(est, inf)
    assert wald.names == ("gamma", "beta", "joint")
    assert wald.df == (0, 2, 2)
    assert np.isnan(wald.stats[0]).all()
    assert_array_equal(wald.stats[1], np.zeros(3))
    assert_array_equal(wald.stats[2], np.zeros(3))


def test_wald_identity_covariance_reference_value():
    nobs = 57
    est = EstimateSet(method="ols", beta=np.array([[3.0], [4.0]]))
    inf = unit_inference([np.eye(2) * nobs], nobs=nobs)
    wald = wald_tests(est, inf)
    assert_allclose(wald.stats[1, 0], 25.0, rtol=1e-14)
    assert wald.unit(0)["beta"] == (pytest.approx(25.0), 2)


def test_wald_includes_common_block_for_joint_estimates():
    panel, _, _ = factor_panel(n=60, t=20)
    est = joint_breve(panel)
    inf = hac_cov_breve(panel, est, HacSpec(bandwidth=2))
    wald = wald_tests(est, inf)
    assert wald.df == (panel.S, panel.K, panel.S + panel.K)
    assert np.isfinite(wald.stats).all()
    assert (wald.stats >= 0).all()


def test_wald_reparameterization_invariance():
    rng = np.random.default_rng(5)
    for _ in range(25):
        k = rng.integers(1, 5)
        theta = rng.standard_normal((k, 1))
        root = rng.standard_normal((k, k))
        v = root @ root.T + k * np.eye(k)
        a = rng.standard_normal((k, k)) + 3 * np.eye(k)
        est1 = EstimateSet(method="ols", beta=theta)
        est2 = EstimateSet(method="ols", beta=a @ theta)
        inf1 = unit_inference([v], nobs=100)
        inf2 = unit_inference([a @ v @ a.T], nobs=100)
        w1 = wald_tests(est1, inf1).stats[2, 0]
        w2 = wald_tests(est2, inf2).stats[2, 0]
        assert_allclose(w1, w2, rtol=1e-8)


def test_wald_singular_block_raises():
    est = EstimateSet(method="ols", beta=np.ones((2, 1)))
    inf = unit_inference([np.zeros((2, 2))], nobs=10)
    with pytest.raises(SingularError):
        wald_tests(est, inf)


def test_wald_validation():
    est = EstimateSet(method="ols", beta=np.ones((2, 2)))
    inf = unit_inference([np.eye(3)] * 2, nobs=10)
    with pytest.raises(DimensionError):
        wald_tests(est, inf)
    inf2 = unit_inference([np.eye(2)] * 2, nobs=10)
    with pytest.raises(DimensionError):
        wald_tests(est, inf2, blocks={"beta": np.array([0, 5])})
    custom = wald_tests(est, inf2, blocks={"first": np.array([0])})
    assert custom.names == ("first",)
    assert custom.df == (1,)


def test_wald_null_calibration_white_noise():
    # T large enough for the chi-square approximation; small T inflates
    # the ratio through the usual sandwich small-sample bias.
    rng = np.random.default_rng(99)
    panel, _ = flat_panel(rng, t=400, n=500, beta=(0.0, 0.0), noise=1.0)
    tp = transform(panel)
    est = ols(tp)
    for bandwidth in (0, default_bandwidth(panel.T)):
        inf = hac_cov_fgls(tp, est, HacSpec(bandwidth=bandwidth))
        wald = wald_tests(est, inf)
        ratio = wald.stats[1].mean() / wald.df[1]
        assert 0.8 <= ratio <= 1.2
