import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cohtree.dynamics import FlowSpec, advect, seed_uniform
from cohtree.estimator import CoherentSetHierarchy
from cohtree.mesh import Rect


def gyre_endpoints(n=6000, tau=1.0, seed=3):
    spec = FlowSpec(
        "double-gyre",
        {"A": 0.25, "eps": 0.25, "omega": 2 * math.pi},
        tau=tau,
        integrator_step=0.05,
    )
    pts = seed_uniform(Rect(0, 2, 0, 1), n, seed=seed)
    ens = advect(spec, pts)
    return np.hstack([ens.initial, ens.final])


def test_fit_builds_tree_and_labels():
    X = gyre_endpoints()
    est = CoherentSetHierarchy(nx=10, ny=5, domain=(0, 2, 0, 1), closed=True,
                               rho0=0.5, max_depth=2, random_state=0)
    est.fit(X)
    assert est.tree_.reached_depth() >= 1
    assert est.labels_.shape == (len(X),)
    assert set(est.labels_) <= set(range(len(est.leaf_labels_))) | {-1}
    # every sample fell in-window, so none are unassigned
    assert (est.labels_ >= 0).all()


def test_fit_predict_matches_labels():
    X = gyre_endpoints(n=4000)
    est = CoherentSetHierarchy(nx=8, ny=4, domain=(0, 2, 0, 1), closed=True,
                               rho0=0.5, max_depth=2)
    got = est.fit_predict(X)
    assert np.array_equal(got, est.labels_)
    assert np.array_equal(est.predict(X[:, :2]), est.labels_)
    assert np.array_equal(est.predict(X), est.labels_)


def test_predict_outside_window_is_unassigned():
    X = gyre_endpoints(n=3000)
    est = CoherentSetHierarchy(nx=8, ny=4, domain=(0, 2, 0, 1), closed=True,
                               rho0=0.5, max_depth=1).fit(X)
    assert est.predict([[5.0, 5.0]])[0] == -1


def test_default_windows_from_data():
    X = gyre_endpoints(n=3000)
    est = CoherentSetHierarchy(nx=8, ny=4, rho0=0.5, max_depth=1).fit(X)
    r = est.mesh_.rect
    assert r.xmin <= X[:, 0].min() and r.xmax >= X[:, 0].max()
    assert est.image_mesh_ is not est.mesh_


def test_requires_fit_before_predict():
    est = CoherentSetHierarchy()
    with pytest.raises(NotFittedError):
        est.predict([[0.1, 0.1]])


def test_rejects_wrong_width():
    est = CoherentSetHierarchy()
    with pytest.raises(ValueError):
        est.fit(np.zeros((10, 5)))


def test_get_params_set_params_clone():
    est = CoherentSetHierarchy(nx=12, rho0=0.8, max_depth=4)
    params = est.get_params()
    assert params["nx"] == 12 and params["rho0"] == 0.8
    est.set_params(rho0=0.7)
    assert est.rho0 == 0.7
    dup = clone(est)
    assert dup.get_params() == est.get_params()


def test_deterministic_for_fixed_random_state():
    X = gyre_endpoints(n=3000)
    a = CoherentSetHierarchy(nx=8, ny=4, domain=(0, 2, 0, 1), closed=True,
                             rho0=0.5, max_depth=2, random_state=5).fit(X)
    b = CoherentSetHierarchy(nx=8, ny=4, domain=(0, 2, 0, 1), closed=True,
                             rho0=0.5, max_depth=2, random_state=5).fit(X)
    assert np.array_equal(a.labels_, b.labels_)
    assert a.leaf_labels_ == b.leaf_labels_
