"""scikit-learn style front ends.

``EquilibriumCapacity`` fits a finite lattice set and predicts hitting
probabilities; the two transformers map replica ids to reproducible capacity
samples of walk ranges and Brownian paths.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ._validation import check_dimension, check_sites
from .harness.experiments import bm_capacities, range_capacities
from .potential import equilibrium_measure, hitting_probability


class EquilibriumCapacity(BaseEstimator):
    """Equilibrium measure and capacity of a finite subset of Z^d.

    Parameters
    ----------
    kernel : GreenKernel, optional
        Hybrid Green kernel; the dimension's default kernel when omitted.
    method : {"auto", "exact-cholesky", "exact-cg"}
    tol : float, optional
        Residual tolerance passed to the solver.

    Attributes
    ----------
    weights_ : ndarray of shape (n_sites,)
        Equilibrium weights (negative round-off clamped to zero).
    capacity_ : float
    residual_ : float
    solution_ : EquilibriumSolution
    """

    def __init__(self, kernel=None, method="auto", tol=None):
        self.kernel = kernel
        self.method = method
        self.tol = tol

    def fit(self, X, y=None):
        X = check_sites(X, allow_empty=True)
        self.solution_ = equilibrium_measure(X, kernel=self.kernel, method=self.method, tol=self.tol)
        self.sites_ = self.solution_.sites
        self.weights_ = self.solution_.weights
        self.capacity_ = self.solution_.capacity
        self.residual_ = self.solution_.residual
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Probability that a walk from each row of ``X`` ever hits the set."""
        check_is_fitted(self, "solution_")
        X = check_sites(X, d=self.n_features_in_)
        return hitting_probability(X, self.solution_, self.kernel)

    def score(self, X, y=None):
        """Capacity of the fitted set (``X`` is ignored)."""
        check_is_fitted(self, "solution_")
        return self.capacity_


def _replica_ids(X):
    X = check_array(X, dtype=None, ensure_2d=False).reshape(-1)
    if X.dtype.kind not in "iu" or np.any(X < 0):
        raise ValueError("replica ids must be non-negative integers")
    return X.astype(np.int64)


class RangeCapacity(TransformerMixin, BaseEstimator):
    """Map replica ids to ``Cap(X[0, n])`` of independent walks.

    Replica ``k`` under ``master_seed`` is the same walk the experiment
    harness uses, so values can be cross-checked against reports.

    Parameters
    ----------
    d : {3, 4}
    n : int
    master_seed : int
    scale : float
        Multiplies every capacity (e.g. ``n ** -0.5`` in Z^3).
    """

    def __init__(self, d=3, n=1024, master_seed=0, scale=1.0):
        self.d = d
        self.n = n
        self.master_seed = master_seed
        self.scale = scale

    def fit(self, X=None, y=None):
        check_dimension(self.d)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        ids = _replica_ids(X)
        caps = range_capacities(self.d, self.n, int(ids.max()) + 1 if ids.size else 0,
                                self.master_seed)
        return (caps[ids] * self.scale).reshape(-1, 1)


class BrownianCapacity(TransformerMixin, BaseEstimator):
    """Map replica ids to ``Cap_BM`` of the occupation cloud of a Brownian path.

    Parameters
    ----------
    bm_steps : int
        Samples per path on [0, 1] (also the cloud size).
    master_seed : int
    scale : float
        Multiplies every capacity (``1 / (3 sqrt 3)`` matches Z^3 ranges).
    """

    def __init__(self, bm_steps=4096, master_seed=0, scale=1.0):
        self.bm_steps = bm_steps
        self.master_seed = master_seed
        self.scale = scale

    def fit(self, X=None, y=None):
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        ids = _replica_ids(X)
        caps = bm_capacities(self.bm_steps, int(ids.max()) + 1 if ids.size else 0,
                             self.master_seed)
        return (caps[ids] * self.scale).reshape(-1, 1)
