import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from srwcap import BrownianCapacity, EquilibriumCapacity, RangeCapacity
from srwcap.exceptions import ConfigurationError
from srwcap.green_kernel import green_exact
from srwcap.harness.experiments import bm_capacities, range_capacities


def test_equilibrium_capacity_fit_predict():
    est = EquilibriumCapacity().fit([[0, 0, 0], [1, 0, 0]])
    g0 = green_exact(3, (0, 0, 0))
    assert est.score(None) == pytest.approx(2 / (2 * g0 - 1), abs=1e-10)
    assert np.allclose(est.weights_, 1 / (2 * g0 - 1))
    p = est.predict([[0, 0, 0], [5, 0, 0], [40, 0, 0]])
    assert p[0] == pytest.approx(1.0, abs=1e-8) and 1 > p[1] > p[2] > 0


def test_params_and_clone():
    est = EquilibriumCapacity(method="exact-cg", tol=1e-9)
    assert est.get_params() == {"kernel": None, "method": "exact-cg", "tol": 1e-9}
    twin = clone(est)
    assert twin.get_params() == est.get_params() and not hasattr(twin, "solution_")
    with pytest.raises(NotFittedError):
        twin.predict([[0, 0, 0]])


def test_input_validation():
    with pytest.raises(ValueError):
        EquilibriumCapacity().fit([[0.5, 0, 0]])
    with pytest.raises(ConfigurationError):
        EquilibriumCapacity().fit([[0, 0]])
    est = EquilibriumCapacity().fit(np.array([[0, 0, 0, 0]], dtype=float))
    with pytest.raises(ConfigurationError):
        est.predict([[0, 0, 0]])


def test_range_transformer_matches_harness():
    tr = RangeCapacity(d=4, n=32, master_seed=5, scale=0.5).fit()
    out = tr.transform(np.array([2, 0, 2]))
    ref = range_capacities(4, 32, 3, 5)
    assert out.shape == (3, 1) and np.array_equal(out[:, 0], 0.5 * ref[[2, 0, 2]])
    with pytest.raises(ValueError):
        tr.transform([-1])
    with pytest.raises(ValueError):
        tr.transform([0.5])
    with pytest.raises(ConfigurationError):
        RangeCapacity(d=2).fit()


def test_brownian_transformer_matches_harness():
    tr = BrownianCapacity(bm_steps=64, master_seed=1)
    out = tr.fit_transform(np.arange(3))
    assert np.array_equal(out[:, 0], bm_capacities(64, 3, 1))
