import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsakit.core import InputSpace, Normal, make_rng
from gsakit.doe import (conference_matrix, dsd, dsd_fit, dsd_variance_explained, lenth_critical,
                        lenth_pse)
from gsakit.errors import ConfigError, ConstructionError, FitError


@settings(max_examples=10, deadline=None)
@given(order=st.sampled_from(range(2, 21, 2)))
def test_conference_matrix_properties(order):
    C = conference_matrix(order)
    assert C.dtype.kind == "i"
    assert np.all(np.diag(C) == 0)
    off = C[~np.eye(order, dtype=bool)]
    assert np.all(np.abs(off) == 1)
    assert np.array_equal(C.T @ C, (order - 1) * np.eye(order, dtype=C.dtype))


@pytest.mark.parametrize("order", [0, 3, 22, 2.5])
def test_conference_matrix_unsupported(order):
    with pytest.raises(ConstructionError, match="supported"):
        conference_matrix(order)


def _interaction_columns(R):
    p = R.shape[1]
    return np.column_stack([R[:, i] * R[:, j] for i in range(p) for j in range(i + 1, p)])


@pytest.mark.parametrize("p,n_fake", [(10, 2), (6, 0), (7, 2), (5, 2), (18, 2)])
def test_dsd_structure(p, n_fake):
    d = dsd(p, n_fake=n_fake, seed=3)
    m = d.p_eff
    assert d.n_runs == 2 * m + 1
    R = d.runs.astype(np.int64)
    a, b = d.pair_map[:, 0], d.pair_map[:, 1]
    assert np.all(R[a] + R[b] == 0)
    assert np.all(R[-1] == 0)
    assert np.array_equal(R.T @ R, 2 * (m - 1) * np.eye(p, dtype=np.int64))
    # mains are orthogonal to every quadratic and interaction column
    Q = R ** 2
    assert np.all(R.T @ Q == 0)
    assert np.all(R.T @ _interaction_columns(R) == 0)
    even = np.column_stack([np.ones(d.n_runs), Q])
    assert np.linalg.matrix_rank(even) == p + 1
    # every column has exactly three zeros: two from the pair, one centre
    assert np.all((R == 0).sum(axis=0) == 3)


def test_dsd_p10_is_25_runs():
    d = dsd(10, n_fake=2)
    assert d.n_runs == 25 and d.runs.shape == (25, 10)
    assert d.fake_dropped == [10, 11]


def test_interaction_confounding_is_partial():
    R = dsd(8, seed=1).runs.astype(float)
    I = _interaction_columns(R)
    Q = R ** 2
    for X in (I, Q):
        Xc = X - X.mean(axis=0)
        corr = np.corrcoef(Xc.T)
        assert np.max(np.abs(corr[~np.eye(len(corr), dtype=bool)])) < 1 - 1e-9


def test_dsd_seed_and_physical_map():
    a, b = dsd(6, seed=1), dsd(6, seed=1)
    assert np.array_equal(a.runs, b.runs)
    assert not np.array_equal(a.runs, dsd(6, seed=2).runs)
    space = InputSpace((Normal(10, 2),) + tuple(InputSpace.uniform(5).dims))
    X = a.physical(space)
    assert set(np.round(X[:, 0], 12)) == {6.0, 10.0, 14.0}
    assert set(np.round(X[:, 1], 12)) == {0.0, 0.5, 1.0}
    with pytest.raises(ConfigError):
        a.physical(InputSpace.uniform(3))


def test_dsd_errors():
    with pytest.raises(ConfigError):
        dsd(2)
    with pytest.raises(ConfigError):
        dsd(5, n_fake=1)
    with pytest.raises(ConstructionError):
        dsd(20, n_fake=2)


def test_lenth_pse():
    b = np.array([0.1, -0.2, 0.15, 10.0, -0.05, 0.12])
    s0 = 1.5 * np.median(np.abs(b))
    kept = np.abs(b)[np.abs(b) < 2.5 * s0]
    assert lenth_pse(b) == pytest.approx(1.5 * np.median(kept))
    assert lenth_pse(np.zeros(4)) == 0.0


def test_lenth_critical_is_cached_and_monotone():
    c1 = lenth_critical(12, 10, 0.01)
    assert lenth_critical(12, 10, 0.01) == c1
    assert lenth_critical(12, 10, 0.05) < c1


def _planted(design, noise, rng):
    X = design.runs.astype(float)
    mu = 4 * X[:, 0] + 3 * X[:, 3] - 3 * X[:, 6] + 3 * X[:, 0] * X[:, 3] + 4 * X[:, 6] ** 2
    sigma = noise * np.ptp(mu)
    return mu + sigma * rng.standard_normal(mu.size)


PLANTED = {"X1", "X4", "X7", "X1*X4", "X7^2"}


def test_noiseless_fit_is_exact():
    d = dsd(10, seed=0)
    y = _planted(d, 0.0, make_rng(0))
    fit = dsd_fit(d, y)
    assert set(fit.active_terms) == PLANTED
    est = {t["term"]: t["estimate"] for t in fit.terms}
    assert est["X1"] == pytest.approx(4) and est["X7^2"] == pytest.approx(4)
    r2 = dsd_variance_explained(fit, y)
    assert r2[0] == ("intercept", 0.0)
    assert r2[-1][1] == pytest.approx(1.0)
    assert all(b[1] >= a[1] - 1e-12 for a, b in zip(r2, r2[1:]))


def test_planted_model_recovery():
    d = dsd(10, seed=0)
    hits = sum(set(dsd_fit(d, _planted(d, 0.05, make_rng(1, r))).active_terms) == PLANTED
               for r in range(30))
    assert hits >= 26


def test_null_model_selects_little():
    d = dsd(10, seed=0)
    false = sum(bool(dsd_fit(d, make_rng(2, r).standard_normal(25)).active_terms)
                for r in range(30))
    assert false <= 4


def test_table_is_sorted_by_t():
    d = dsd(10, seed=0)
    fit = dsd_fit(d, _planted(d, 0.05, make_rng(5)))
    t = [abs(r["t_ratio"]) for r in fit.terms]
    assert t == sorted(t, reverse=True)
    assert list(fit.rows()[0]) == list(fit.columns)


def test_fit_errors(monkeypatch):
    d = dsd(6, n_fake=0)
    with pytest.raises(ConfigError):
        dsd_fit(d, np.zeros(5))
    # Lenth's rule never selects the smallest contrast, so force a zero
    # threshold: every conference column is then a real active main and
    # nothing is left to estimate error
    monkeypatch.setattr("gsakit.doe.lenth_critical", lambda *a, **k: 0.0)
    y = d.runs.astype(float) @ np.arange(1.0, 7.0)
    with pytest.raises(FitError, match="fake"):
        dsd_fit(d, y)
