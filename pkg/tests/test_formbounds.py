from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from kolmolab.exceptions import ConfigurationError, DomainError
from kolmolab.fields import DriftSpec, make_drift
from kolmolab.formbounds import (
    FormBoundEstimator,
    default_eps_grid,
    estimate_mf_delta,
    estimate_quadratic_bound,
    hardy_reference,
    interior_vector,
    stiffness_matrix,
)
from kolmolab.grid import ScalarField, build_domain


def lowest_dirichlet_eigenvalue(domain):
    # discrete Laplacian on n-2 interior nodes per axis, spacing h
    h, n, d = domain.spacing, domain.resolution, domain.dimension
    return d * 4.0 / h**2 * math.sin(math.pi / (2 * (n - 1))) ** 2


def constant(domain, c):
    return ScalarField(domain, np.full(domain.shape, float(c)))


def test_hardy_reference():
    assert hardy_reference(3, 1.0) == 4.0
    assert hardy_reference(5, 0.75) == 1.0
    assert hardy_reference(3, 0.6) == pytest.approx(2.4)
    with pytest.raises(DomainError):
        hardy_reference(2, 1.0)


def test_stiffness_matrix_spectrum(small3):
    L = stiffness_matrix(small3).toarray()
    assert np.allclose(L, L.T)
    h = small3.spacing
    lam = np.linalg.eigvalsh(L)[0] / (h**3)
    assert lam == pytest.approx(lowest_dirichlet_eigenvalue(small3), rel=1e-12)


@pytest.mark.parametrize("n", [9, 17])
def test_constant_potential_oracle(n):
    # sup of c|phi|^2 / |grad phi|^2 is c / lambda_1
    dom = build_domain(3, 1.0, n)
    est = estimate_quadratic_bound(constant(dom, 2.0))
    assert est.bound == pytest.approx(2.0 / lowest_dirichlet_eigenvalue(dom), rel=1e-7)
    assert est.grid_n == n and est.kind == "quadratic"
    assert est.residual < 1e-4


def test_companion_shifts_weight(small3):
    lam = lowest_dirichlet_eigenvalue(small3)
    est = estimate_quadratic_bound(constant(small3, 3.0), companion=1.0)
    assert est.bound == pytest.approx(2.0 / lam, rel=1e-10)
    assert estimate_quadratic_bound(constant(small3, 1.0), companion=2.0).bound == 0.0


def test_zero_potential(small3):
    assert estimate_quadratic_bound(small3.zeros()).bound == 0.0
    assert estimate_mf_delta(small3.zeros()).bound == 0.0


def test_negative_potential_rejected(small3):
    with pytest.raises((ConfigurationError, ValueError)):
        estimate_quadratic_bound(constant(small3, -1.0))


@pytest.mark.parametrize("n", [9, 17])
def test_constant_drift_multiplicative_oracle(n):
    # beta <phi,phi> <= delta |grad phi||phi| is sharp at delta = beta / sqrt(lambda_1)
    dom = build_domain(3, 1.0, n)
    lam = lowest_dirichlet_eigenvalue(dom)
    est = estimate_mf_delta(constant(dom, 1.5), 0.0, default_eps_grid(dom, 15))
    assert est.bound == pytest.approx(1.5 / math.sqrt(lam), rel=1e-5)
    assert est.eps_star == pytest.approx(1 / math.sqrt(lam), rel=0.01)
    assert not est.eps_at_edge
    assert est.eps_curve == sorted(est.eps_curve)


def test_eps_grid_validation(small3):
    w = constant(small3, 1.0)
    with pytest.raises(ConfigurationError):
        estimate_mf_delta(w, 0.0, [])
    with pytest.raises(ConfigurationError):
        estimate_mf_delta(w, 0.0, [0.5, 0.1])


def test_default_eps_grid(small3):
    grid = default_eps_grid(small3, 5)
    assert grid[0] == pytest.approx(small3.spacing) and grid[-1] == pytest.approx(2.0)


@given(st.floats(0.1, 10), st.integers(0, 2**16))
def test_quadratic_bound_is_homogeneous(t, seed):
    dom = build_domain(3, 1.0, 6)
    W = ScalarField(dom, np.random.default_rng(seed).uniform(0, 5, dom.shape))
    base = estimate_quadratic_bound(W).bound
    assert estimate_quadratic_bound(W.with_values(t * W.values)).bound == pytest.approx(t * base, rel=1e-9)


@given(st.integers(0, 2**16))
def test_quadratic_bound_is_monotone(seed):
    dom = build_domain(3, 1.0, 6)
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 5, dom.shape)
    bump = rng.uniform(0, 1, dom.shape)
    lo = estimate_quadratic_bound(ScalarField(dom, W)).bound
    hi = estimate_quadratic_bound(ScalarField(dom, W + bump)).bound
    assert hi >= lo - 1e-12


@given(st.integers(0, 2**16))
def test_mf_delta_is_the_max_of_the_eps_curve(seed):
    dom = build_domain(3, 1.0, 6)
    absb = ScalarField(dom, np.random.default_rng(seed).uniform(0, 3, dom.shape))
    coarse = estimate_mf_delta(absb, 0.0, default_eps_grid(dom, 5))
    assert all(m <= coarse.bound * (1 + 1e-9) for _, m in coarse.eps_curve)


def test_hardy_potential_below_continuum_constant():
    dom = build_domain(3, 1.0, 17)
    drift = make_drift(DriftSpec.hardy_pair(1.0, 0.0, (0, 0, 0), (0.5, 0.5, 0.5)), dom)
    est = estimate_quadratic_bound(drift.div_plus)
    assert 1.0 < est.bound <= 4.0


def test_interior_vector_order(small3):
    f = small3.sample(lambda x, y, z: x + 10 * y + 100 * z)
    v = interior_vector(f)
    assert v.size == 7**3
    h = small3.spacing
    assert v[1] - v[0] == pytest.approx(h)
    assert v[7] - v[0] == pytest.approx(10 * h)


def test_estimator_api(small3):
    est = FormBoundEstimator(kind="multiplicative", eps_points=9)
    assert est.get_params()["eps_points"] == 9
    twin = clone(est)
    drift = make_drift(DriftSpec.constant((1.0, 0.0, 0.0)), small3)
    est.fit(drift.b)
    twin.fit(constant(small3, 1.0))
    assert est.bound_ == pytest.approx(twin.bound_)
    sq = FormBoundEstimator(kind="form_bounded").fit(drift.b)
    pot = FormBoundEstimator(kind="potential").fit(constant(small3, 1.0))
    assert sq.bound_ == pytest.approx(pot.bound_)
    with pytest.raises(ConfigurationError):
        FormBoundEstimator(kind="other").fit(drift.b)
