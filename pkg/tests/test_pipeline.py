import numpy as np
import pytest

from robust_lmp import pipeline, sets, synthetic


@pytest.fixture(scope="module")
def small_history():
    f, a = synthetic.wind_history(140, seed=21)
    return f[:100], a[:100], f[100:], a[100:]


@pytest.fixture(scope="module")
def small_fit(small_history):
    f, a, _, _ = small_history
    return pipeline.fit_history(a, f, 0.9, 6, shrinkage=0.01, capacity=300.0)


def test_calibration_table(small_history):
    f, a, _, _ = small_history
    best, table = pipeline.calibrate_shrinkage(a, f, 0.9, 6, grid=(0.0, 0.05), folds=3, n_samples=200,
                                               capacity=300.0)
    assert [r[0] for r in table] == [0.0, 0.05]
    assert best in (0.0, 0.05)
    assert all(0 <= r[1] <= 1 for r in table)
    # more shrinkage means wider sets and therefore no less coverage
    assert table[1][1] >= table[0][1] - 0.02


def test_calibration_needs_enough_days():
    f, a = synthetic.wind_history(6, seed=1)
    with pytest.raises(pipeline.PipelineError):
        pipeline.calibrate_shrinkage(a, f, folds=5)


@pytest.mark.parametrize("method, kind", [("imeus", sets.Imeus), ("ellipsoid", sets.Imeus), ("box", sets.BoxSet)])
def test_build_set_methods(small_fit, small_history, method, kind):
    _, _, fe, _ = small_history
    s = pipeline.build_set(method, small_fit, fe[0], 0.9, 6, n_samples=300, seed=1)
    assert isinstance(s, kind)
    np.testing.assert_allclose(s.forecast, fe[0])
    if method == "ellipsoid":
        assert len(s.subsets) == 1
    if method == "imeus":
        assert s.od == 6


def test_unknown_method(small_fit, small_history):
    with pytest.raises(pipeline.PipelineError, match="unknown set method"):
        pipeline.build_set("sphere", small_fit, small_history[2][0])


def test_compare_methods_matches_coverage(small_fit, small_history):
    _, _, fe, ae = small_history
    rows = pipeline.compare_methods(small_fit, fe[:20], ae[:20], 0.9, 6, n_samples=300)
    assert [r.method for r in rows] == ["imeus", "ellipsoid", "box"]
    target = rows[0].coverage
    for r in rows[1:]:
        assert abs(r.coverage - target) <= 0.05
        assert r.width > 0


def test_sweep_samples_shape(small_fit, small_history):
    _, _, fe, _ = small_history
    s = pipeline.sweep_samples(small_fit, fe[:3], n_samples=50)
    assert len(s) == 3 and s[0].shape == (50, 24)
