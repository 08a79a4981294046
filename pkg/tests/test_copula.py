import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from robust_lmp import copula, synthetic


@pytest.fixture(scope="module")
def history():
    return synthetic.wind_history(200, seed=11)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(float, st.integers(30, 80), elements=st.floats(0, 300)))
def test_marginal_cdf_monotone_and_bounded(values):
    m = copula.fit_marginals(values[:, None])[0]
    x = np.linspace(-10, 310, 50)
    p = m.cdf(x)
    assert np.all(np.diff(p) >= -1e-12)
    assert p.min() >= 1 / (m.n + 1) - 1e-12 and p.max() <= m.n / (m.n + 1) + 1e-12


def test_marginal_ppf_inverts_cdf_on_sample():
    v = np.sort(np.random.default_rng(0).gamma(2.0, 30.0, 100))
    m = copula.EmpiricalMarginal(v)
    np.testing.assert_allclose(m.ppf(m.cdf(v)), v, rtol=1e-10)


def test_too_few_samples():
    with pytest.raises(copula.CopulaError, match="at least"):
        copula.fit_marginals(np.ones((5, 2)))


def test_nearest_correlation_is_valid():
    rng = np.random.default_rng(2)
    A = rng.uniform(-1, 1, (6, 6))
    R = (A + A.T) / 2
    np.fill_diagonal(R, 1.0)
    C = copula.nearest_correlation(R)
    np.testing.assert_allclose(np.diag(C), 1.0, atol=1e-10)
    np.testing.assert_allclose(C, C.T)
    assert np.linalg.eigvalsh(C).min() > 0


def test_fit_shapes_and_shrinkage(history):
    f, a = history
    m0 = copula.fit_copula(a, f, capacity=300.0)
    m1 = copula.fit_copula(a, f, capacity=300.0, shrinkage=0.5)
    assert m0.R.shape == (48, 48)
    off = ~np.eye(48, dtype=bool)
    # shrinking toward the identity scales every off-diagonal entry down
    assert np.abs(m1.R[off]).sum() < np.abs(m0.R[off]).sum()


def test_samples_respect_capacity_and_shape(history):
    f, a = history
    m = copula.fit_copula(a, f, capacity=300.0)
    s = copula.sample_day_ahead(m, f[0], 500, seed=1)
    assert s.shape == (500, 24)
    assert s.min() >= 0.0 and s.max() <= 300.0


def test_sampling_is_seeded(history):
    f, a = history
    m = copula.fit_copula(a, f, capacity=300.0)
    np.testing.assert_array_equal(copula.sample_day_ahead(m, f[1], 50, seed=7),
                                  copula.sample_day_ahead(m, f[1], 50, seed=7))


def test_conditional_mean_tracks_forecast(history):
    # strongly coupled forecast and output: high forecasts give high conditional samples
    f, a = history
    m = copula.fit_copula(a, f, capacity=300.0)
    lo = copula.sample_day_ahead(m, np.full(24, np.quantile(f, 0.1)), 400, seed=2).mean()
    hi = copula.sample_day_ahead(m, np.full(24, np.quantile(f, 0.9)), 400, seed=2).mean()
    assert hi > lo + 50.0


def test_conditional_covariance_is_psd(history):
    f, a = history
    m = copula.fit_copula(a, f, capacity=300.0)
    g = copula.condition_on_forecast(m, f[3])
    assert g.mean.shape == (24,) and g.cov.shape == (24, 24)
    assert np.linalg.eigvalsh(g.cov).min() > -1e-10


def test_save_load_roundtrip(tmp_path, history):
    f, a = history
    m = copula.fit_copula(a, f, capacity=300.0, shrinkage=0.01)
    p = tmp_path / "model.json"
    m.save(p)
    back = copula.CopulaModel.load(p)
    np.testing.assert_allclose(back.R, m.R)
    np.testing.assert_array_equal(copula.sample_day_ahead(back, f[0], 20, seed=3),
                                  copula.sample_day_ahead(m, f[0], 20, seed=3))


def test_mismatched_history_shapes():
    with pytest.raises(copula.CopulaError):
        copula.fit_copula(np.ones((40, 24)), np.ones((40, 23)))
