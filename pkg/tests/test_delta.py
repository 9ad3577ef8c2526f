import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsakit.core import InputSpace, builtin, sample
from gsakit.delta import (conditional_density_curves, default_partitions, delta_given_data,
                          normal_scores)
from gsakit.errors import ConfigError
from oracles import delta_sum_of_uniforms, shift_mixture_areas


def _data(n, seed, p=2):
    X = sample(InputSpace.uniform(p), n, seed=seed, scheme="iid")
    return X, X[:, :2].sum(axis=1)


def test_default_partitions():
    assert default_partitions(1000) == 8
    assert default_partitions(10 ** 5) == 63


def test_normal_scores_are_symmetric():
    z = normal_scores(np.array([3.0, 1.0, 2.0, 10.0]))
    assert np.argsort(z).tolist() == [1, 2, 0, 3]
    assert z.sum() == pytest.approx(0.0, abs=1e-12)


def test_sum_of_uniforms_oracle():
    truth = delta_sum_of_uniforms()
    assert truth == pytest.approx(1 / 3, abs=1e-8)
    X, y = _data(100_000, 1)
    res = delta_given_data(X, y)
    np.testing.assert_allclose(res.values, truth, atol=0.04)


def test_row_permutation_invariance():
    X, y = _data(5000, 2)
    perm = np.random.default_rng(0).permutation(5000)
    a, b = delta_given_data(X, y), delta_given_data(X[perm], y[perm])
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.01, 100), b=st.floats(-100, 100))
def test_affine_invariance(a, b):
    X, y = _data(2000, 3)
    np.testing.assert_allclose(delta_given_data(X, y).values,
                               delta_given_data(X, a * y + b).values, atol=1e-12)


def test_monotone_transform_invariance():
    m = builtin("ishigami")
    X = sample(m.default_space(), 20_000, seed=4)
    y = m(X)
    np.testing.assert_allclose(delta_given_data(X, y).values,
                               delta_given_data(X, np.exp(y / 4)).values, atol=1e-12)


def test_ignored_input_is_small():
    X, _ = _data(20_000, 5, p=3)
    res = delta_given_data(X, X[:, 0] + X[:, 1])
    assert res.values[2] < 0.05
    assert np.all((res.values >= 0) & (res.values <= 1))


def test_deterministic_input_concentrates():
    X, _ = _data(20_000, 6, p=1)
    res = delta_given_data(X, X[:, 0] ** 3, partitions=40)
    assert res.values[0] > 0.9


def test_zero_variance():
    X, _ = _data(1000, 7)
    res = delta_given_data(X, np.full(1000, 4.0))
    assert res.zero_variance
    assert np.array_equal(res.values, [0.0, 0.0])


def test_sample_size_precondition():
    X, y = _data(399, 8)
    with pytest.raises(ConfigError, match="at most 7"):
        delta_given_data(X, y, partitions=8)
    with pytest.raises(ConfigError):
        delta_given_data(X[:60], y[:60])
    with pytest.raises(ConfigError):
        delta_given_data(X, y, partitions=1)
    with pytest.raises(ConfigError):
        delta_given_data(X, y[:10])


# --- conditional density curves -----------------------------------------------

def test_density_curves_constant_response():
    X, _ = _data(800, 9)
    curves = conditional_density_curves(X, np.ones(800), 0, n_slices=4)
    assert len(curves) == 5
    for c in curves[1:]:
        assert c.meta["area"] == pytest.approx(0.0, abs=1e-12)


def test_density_curves_shift_mixture():
    X, _ = _data(40_000, 10)
    y = X[:, 0] + 3.0 * (X[:, 1] > 0.5)
    curves = conditional_density_curves(X, y, 1, n_slices=8)
    lo = np.array([c.meta["x_range"][0] for c in curves[1:]])
    hi = np.array([c.meta["x_range"][1] for c in curves[1:]])
    inside = (hi < 0.5) | (lo > 0.5)
    truth = shift_mixture_areas(lo[inside], hi[inside])
    np.testing.assert_allclose(truth, 1.0, atol=1e-6)
    areas = np.array([c.meta["area"] for c in curves[1:]])[inside]
    np.testing.assert_allclose(areas, truth, atol=0.08)
    # the pooled density integrates to one on the grid
    pooled = curves[0]
    assert np.trapezoid(pooled.value, pooled.grid) == pytest.approx(1.0, abs=1e-3)


def test_density_curves_irrelevant_input():
    X, _ = _data(40_000, 11, p=3)
    curves = conditional_density_curves(X, X[:, 0] + X[:, 1], 2, n_slices=8)
    assert max(c.meta["area"] for c in curves[1:]) < 0.1


def test_density_curves_grid_validation():
    X, y = _data(800, 12)
    with pytest.raises(ConfigError):
        conditional_density_curves(X, y, 0, n_slices=4, grid=np.array([1.0, 0.5, 2.0]))
    with pytest.raises(ConfigError):
        conditional_density_curves(X, y, 0, n_slices=1)
