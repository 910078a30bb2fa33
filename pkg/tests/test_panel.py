"""Tests for panel containers, the de-meaning transform, and weights."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from panelgls.exceptions import DimensionError, RankDeficientError
from panelgls.linalg import ortho_complement
from panelgls.panel import (
    Ar1CovarianceSet,
    DenseCovarianceSet,
    LatentStructure,
    PanelData,
    WeightMatrix,
    dual_panel,
    oracle_weight,
    transform,
)


def make_panel(rng, t=12, n=6, s=2, k=2):
    d = np.column_stack([np.ones(t)] + [rng.standard_normal(t) for _ in range(s - 1)])
    x = rng.standard_normal((n, t, k))
    y = rng.standard_normal((t, n))
    return PanelData(y=y, x=x, d=d)


def dummy_structure(f, b, xi, t, n):
    m = f.shape[1]
    k = 1
    return LatentStructure(
        f=f,
        b=b,
        gamma=np.zeros((n, m, k)),
        v=np.zeros((n, t, k)),
        xi=xi,
        eps=np.zeros((t, n)),
        delta=np.zeros((n, 0, k)),
    )


# ---------------------------------------------------------------------------
# PanelData validation


def test_panel_accepts_list_of_unit_blocks():
    rng = np.random.default_rng(0)
    t, n, k = 8, 3, 2
    blocks = [rng.standard_normal((t, k)) for _ in range(n)]
    p = PanelData(y=rng.standard_normal((t, n)), x=blocks, d=np.ones((t, 1)))
    assert p.K == k and p.N == n and p.S == 1
    for i in range(n):
        assert_array_equal(p.X[i], blocks[i])


def test_panel_shape_validation():
    rng = np.random.default_rng(1)
    y = rng.standard_normal((6, 2))
    x = rng.standard_normal((2, 6, 1))
    with pytest.raises(DimensionError):
        PanelData(y=y, x=rng.standard_normal((3, 6, 1)), d=np.ones((6, 1)))
    with pytest.raises(DimensionError):
        PanelData(y=y, x=x, d=np.ones((5, 1)))
    # T > S + K required.
    with pytest.raises(DimensionError):
        PanelData(y=y[:2], x=x[:, :2, :], d=np.ones((2, 1)))


def test_panel_rank_checks():
    rng = np.random.default_rng(2)
    t, n = 8, 3
    y = rng.standard_normal((t, n))
    x = rng.standard_normal((n, t, 1))
    with pytest.raises(RankDeficientError):
        PanelData(y=y, x=x, d=np.column_stack([np.ones(t), np.ones(t)]))
    x_bad = x.copy()
    x_bad[1] = 0.0
    with pytest.raises(RankDeficientError) as err:
        PanelData(y=y, x=x_bad, d=np.ones((t, 1)))
    assert err.value.unit == 1


def test_panel_intercept_convention():
    rng = np.random.default_rng(3)
    t, n = 8, 3
    y = rng.standard_normal((t, n))
    x = rng.standard_normal((n, t, 1))
    d = rng.standard_normal((t, 2))
    with pytest.raises(ValueError, match="constant column"):
        PanelData(y=y, x=x, d=d)
    p = PanelData(y=y, x=x, d=d, require_intercept=False)
    assert p.S == 2
    # S = 0 needs no opt-out.
    p0 = PanelData(y=y, x=x)
    assert p0.S == 0


def test_panel_rejects_non_finite():
    y = np.ones((6, 2))
    y[3, 1] = np.inf
    with pytest.raises(DimensionError):
        PanelData(y=y, x=np.ones((2, 6, 1)), d=np.ones((6, 1)))


def test_panel_is_immutable():
    rng = np.random.default_rng(4)
    p = make_panel(rng)
    with pytest.raises(ValueError):
        p.y[0, 0] = 1.0


# ---------------------------------------------------------------------------
# transform


def test_transform_demeaning_norm():
    y = np.array([[1.0], [2.0], [3.0], [4.0]])
    p = PanelData(y=y, x=np.arange(4.0).reshape(1, 4, 1) + 1.0, d=np.ones((4, 1)))
    tp = transform(p)
    assert tp.rows == 3
    assert_allclose(np.sum(tp.yt**2), 5.0, atol=1e-12)


def test_transform_identity_when_no_common_regressors():
    rng = np.random.default_rng(5)
    y = rng.standard_normal((6, 3))
    x = rng.standard_normal((3, 6, 2))
    tp = transform(PanelData(y=y, x=x))
    assert_array_equal(tp.yt, y)
    assert_array_equal(tp.xt, x)
    assert tp.complement.source_cols == 0


def test_transform_matches_direct_annihilator():
    # Oracle: the annihilator computed from its definition.
    rng = np.random.default_rng(6)
    p = make_panel(rng, t=12, n=4, s=2, k=2)
    m_d = np.eye(p.T) - p.d @ np.linalg.solve(p.d.T @ p.d, p.d.T)
    tp = transform(p)
    basis = tp.complement.basis
    for i in range(p.N):
        assert_allclose(basis @ tp.xt[i], m_d @ p.x[i], atol=1e-10)
    assert_allclose(basis @ tp.yt, m_d @ p.y, atol=1e-10)


def test_transform_reconstruction_property():
    rng = np.random.default_rng(7)
    d = np.column_stack([np.ones(10), rng.standard_normal(10)])
    comp = ortho_complement(d)
    m_d = np.eye(10) - d @ np.linalg.solve(d.T @ d, d.T)
    for _ in range(10):
        z = rng.standard_normal(10)
        assert_allclose(comp.expand(comp.reduce(z)), m_d @ z, atol=1e-10)


# ---------------------------------------------------------------------------
# covariance sets


def test_ar1_covariance_set_matches_dense():
    rng = np.random.default_rng(8)
    n, t = 5, 7
    sigma2 = rng.uniform(0.5, 1.5, n)
    rho = rng.uniform(0.05, 0.95, n)
    ar1 = Ar1CovarianceSet(sigma2, rho, t)
    mats = []
    for i in range(n):
        lag = np.abs(np.subtract.outer(np.arange(t), np.arange(t)))
        mats.append(sigma2[i] * rho[i] ** lag)
    dense = DenseCovarianceSet(mats)
    assert len(ar1) == len(dense) == n
    for i in range(n):
        assert_allclose(ar1.unit(i), dense.unit(i), atol=1e-12)
    assert_allclose(ar1.mean(), dense.mean(), atol=1e-12)


def test_covariance_set_validation():
    with pytest.raises(DimensionError):
        Ar1CovarianceSet([1.0], [1.0], 5)
    asym = np.eye(3)
    asym[0, 1] = 0.5
    with pytest.raises(DimensionError):
        DenseCovarianceSet([asym])


# ---------------------------------------------------------------------------
# oracle_weight


def test_oracle_weight_no_loadings_identity_covariance():
    t, n, m = 6, 4, 2
    comp = ortho_complement(np.ones((t, 1)))
    structure = dummy_structure(
        f=np.random.default_rng(9).standard_normal((t, m)),
        b=np.zeros((m, n)),
        xi=DenseCovarianceSet([np.eye(t)] * n),
        t=t,
        n=n,
    )
    w = oracle_weight(structure, comp)
    assert_allclose(w.dense(), np.eye(t - 1), atol=1e-10)


def test_oracle_weight_rank_one_no_demeaning():
    t, n = 5, 3
    comp = ortho_complement(np.empty((t, 0)))
    structure = dummy_structure(
        f=np.ones((t, 1)),
        b=np.ones((1, n)),
        xi=DenseCovarianceSet([np.zeros((t, t))] * n),
        t=t,
        n=n,
    )
    w = oracle_weight(structure, comp)
    assert_allclose(w.dense(), np.ones((t, t)), atol=1e-12)


def test_oracle_weight_factored_matches_dense_formula():
    # Oracle: dense assembly of the averaged covariance, reduced directly.
    rng = np.random.default_rng(10)
    t, n, m = 10, 8, 2
    comp = ortho_complement(np.ones((t, 1)))
    f = rng.standard_normal((t, m))
    b = rng.standard_normal((m, n))
    xi_mats = []
    for _ in range(n):
        a = rng.standard_normal((t, t))
        xi_mats.append(a @ a.T / t)
    structure = dummy_structure(f, b, DenseCovarianceSet(xi_mats), t, n)
    w = oracle_weight(structure, comp)
    assert w.kind == "factored"

    s_full = f @ (b @ b.T / n) @ f.T + np.mean(xi_mats, axis=0)
    expected = comp.basis.T @ s_full @ comp.basis
    assert_allclose(w.dense(), expected, atol=1e-10)
    rhs = rng.standard_normal((t - 1, 3))
    assert_allclose(w.solve(rhs), np.linalg.solve(expected, rhs), atol=1e-9)


# ---------------------------------------------------------------------------
# WeightMatrix


def test_weight_identity_solve_is_passthrough():
    w = WeightMatrix.identity(4)
    rhs = np.arange(8.0).reshape(4, 2)
    assert w.solve(rhs) is rhs
    assert_array_equal(w.dense(), np.eye(4))
    assert w.eig_bounds() == (1.0, 1.0)


def test_weight_dense_requires_symmetry():
    w = np.eye(3)
    w[0, 1] = 1e-3
    with pytest.raises(DimensionError):
        WeightMatrix.from_dense(w)


def test_weight_dense_solve_and_bounds():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((5, 5))
    w = WeightMatrix.from_dense(a @ a.T + 5.0 * np.eye(5))
    rhs = rng.standard_normal((5, 2))
    assert_allclose(w.dense() @ w.solve(rhs), rhs, atol=1e-10)
    lo, hi = w.eig_bounds()
    eigs = np.linalg.eigvalsh(w.dense())
    assert_allclose([lo, hi], [eigs[0], eigs[-1]], rtol=1e-10)


def test_weight_factored_with_singular_core():
    # A zero core direction must not break the Woodbury solve.
    rng = np.random.default_rng(12)
    u = rng.standard_normal((6, 2))
    core = np.diag([2.0, 0.0])
    full = np.eye(6)
    w = WeightMatrix.from_factors(u, core, full)
    rhs = rng.standard_normal((6, 3))
    assert_allclose(w.solve(rhs), np.linalg.solve(w.dense(), rhs), atol=1e-10)


# ---------------------------------------------------------------------------
# dual view


def test_dual_panel_relabels_axes():
    rng = np.random.default_rng(13)
    p = make_panel(rng, t=9, n=4, s=1, k=2)
    dp = dual_panel(p)
    assert (dp.T, dp.N, dp.S, dp.K) == (p.N, p.T, 1, p.K)
    assert_array_equal(dp.y, p.y.T)
    for t in range(p.T):
        for i in range(p.N):
            assert_array_equal(dp.x[t, i], p.x[i, t])
    assert_array_equal(dp.d, np.ones((p.N, 1)))
