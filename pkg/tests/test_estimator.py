import numpy as np
import pytest
from sklearn.base import clone

from conftest import oscillator, scalar_benchmark
from tdscert import LegendreStabilityCertifier, TimeDelaySystem
from tdscert.estimator import check_systems
from tdscert.exceptions import InvalidInput
from sklearn.exceptions import NotFittedError


def test_params_roundtrip_and_clone():
    est = LegendreStabilityCertifier(mode="sweep", max_order=10)
    params = est.get_params()
    assert params["mode"] == "sweep" and params["max_order"] == 10 and params["positivity_tol"] == 1e-10
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(kappa_grid=501)
    assert est.kappa_grid == 501


def test_predict_and_decision_function():
    X = [scalar_benchmark(h) for h in (0.1, 0.604, 0.605, 2.0)]
    est = LegendreStabilityCertifier().fit(X)
    assert list(est.predict(X)) == ["Stable", "Stable", "Unstable", "Unstable"]
    margins = est.decision_function(X)
    assert (margins[:2] > 0).all() and (margins[2:] < 0).all()
    assert est.score(X, ["Stable", "Stable", "Unstable", "Unstable"]) == 1.0
    assert "Stable" in est.classes_


def test_accepts_dicts_and_triples():
    est = LegendreStabilityCertifier().fit()
    X = [{"A": [[1]], "Ad": [[-2]], "h": 0.1}, ([[1.0]], [[-2.0]], 2.0)]
    assert list(est.predict(X)) == ["Stable", "Unstable"]
    assert list(est.predict(scalar_benchmark(0.1))) == ["Stable"]


def test_special_verdicts():
    est = LegendreStabilityCertifier(order_cap=5).fit()
    X = [TimeDelaySystem([[0.0]], [[0.0]], 1.0), scalar_benchmark(2.0)]
    assert list(est.predict(X)) == ["LyapunovConditionViolated", "Inconclusive"]
    assert np.isnan(est.decision_function(X)).all()
    assert est.certify(X) == [None, None]


def test_sweep_mode_with_cap():
    est = LegendreStabilityCertifier(mode="sweep", max_order=3).fit()
    v = est.certify([oscillator(10.0, 0.552)])[0]
    assert v.kind == "Inconclusive" and v.order_tested == 3


def test_validation():
    with pytest.raises(NotFittedError):
        LegendreStabilityCertifier().predict([scalar_benchmark(0.1)])
    for bad in ({"mode": "fast"}, {"max_order": 0}, {"kappa_grid": 1}, {"table_method": "x"}, {"positivity_tol": -1}):
        with pytest.raises(InvalidInput):
            LegendreStabilityCertifier(**bad).fit()
    with pytest.raises(InvalidInput):
        check_systems([])
    with pytest.raises(InvalidInput):
        check_systems([42])
    with pytest.raises(InvalidInput):
        check_systems(3)
