import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from riscf.core import NetworkDims, PhaseConstraint
from riscf.estimator import (
    JointPrecoder,
    check_channel_set,
    check_constraint,
    check_positive,
    check_power_budget,
    check_weights,
)
from riscf.metrics import sinr_matrix

from conftest import random_channels, random_instance


def _est(**kw):
    base = dict(noise_power=0.5, max_outer=5, warmup_noise_db=0.0, random_state=0)
    return JointPrecoder(**{**base, **kw})


def test_params_roundtrip_and_clone():
    est = _est(constraint="f3:4", weights=[1.0, 2.0])
    params = est.get_params()
    assert params["constraint"] == "f3:4" and params["max_outer"] == 5
    twin = clone(est)
    assert twin.get_params() == params
    assert twin is not est
    est.set_params(rel_tol=1e-4)
    assert est.rel_tol == 1e-4


def test_fit_predict_score():
    cs, *_ = random_instance(1, max_b=2, max_k=2, max_m=2, max_r=1, max_n=3, max_p=2, min_r=1)
    est = _est().fit(cs)
    assert est.n_iter_ == est.trace_.iterations >= 1
    assert est.dims_ == cs.dims
    g = est.predict(cs)
    assert g.shape == (cs.dims.K, cs.dims.P)
    np.testing.assert_allclose(g, sinr_matrix(cs, est.theta_, est.W_, 0.5))
    assert est.score(cs) == pytest.approx(est.report_.wsr)
    assert est.score(cs) >= est.trace_.wsr0
    again = _est().fit(cs)
    assert again.score(cs) == est.score(cs)


def test_not_fitted():
    cs, *_ = random_instance(0)
    with pytest.raises(NotFittedError):
        JointPrecoder().predict(cs)
    with pytest.raises(NotFittedError):
        JointPrecoder().score(cs)


def test_predict_rejects_other_dims():
    rng = np.random.default_rng(0)
    a = random_channels(rng, NetworkDims(1, 0, 1, 2, 1, 1, 1))
    b = random_channels(rng, NetworkDims(1, 0, 2, 2, 1, 1, 1))
    est = _est().fit(a)
    with pytest.raises(ValueError):
        est.predict(b)


@pytest.mark.parametrize("bad", [
    dict(noise_power=0.0),
    dict(p_max=-1.0),
    dict(p_max=[1.0, 1.0, 1.0]),
    dict(weights=[1.0, -1.0]),
    dict(constraint="f9"),
    dict(rel_tol=0),
    dict(max_outer=0),
    dict(warmup_noise_db=-1.0),
    dict(warmup_max_outer=0),
])
def test_fit_validates_params(bad):
    rng = np.random.default_rng(0)
    cs = random_channels(rng, NetworkDims(2, 0, 2, 2, 1, 1, 1))
    with pytest.raises(ValueError):
        _est(**bad).fit(cs)


def test_validation_helpers():
    with pytest.raises(TypeError):
        check_channel_set(np.zeros(3))
    cs, *_ = random_instance(2)
    bad = cs.H.copy()
    bad.flat[0] = np.nan
    with pytest.raises(ValueError):
        check_channel_set(type(cs)(cs.dims, bad, cs.G, cs.F))
    assert check_positive(2, "x") == 2.0
    with pytest.raises(ValueError):
        check_positive(float("inf"), "x")
    np.testing.assert_array_equal(check_power_budget(2.0, 3), [2.0, 2.0, 2.0])
    np.testing.assert_array_equal(check_weights(None, 2), [1.0, 1.0])
    assert check_constraint("f2") == PhaseConstraint("F2")
    assert check_constraint(PhaseConstraint("F3", 8)).levels == 8
