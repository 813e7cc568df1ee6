from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from kolmolab.exceptions import ConfigurationError, ResolutionError
from kolmolab.fields import DriftSpec, MatrixSpec, make_drift, make_matrix
from kolmolab.grid import ScalarField, build_domain, divergence
from kolmolab.mollify import (
    FriedrichsMollifier,
    bump_grad_sqrt_energy,
    bump_normalization,
    default_schedule,
    friedrichs_kernel,
    mollify_drift,
    mollify_field,
    verify_mollification,
)

# high-precision quadrature of the radial integrals
BUMP_C3 = 2.26711673960832645841796949369
GRAD_SQRT_ENERGY_3 = 12.7302716778082284802


def test_bump_constants():
    assert bump_normalization(3) == pytest.approx(BUMP_C3, rel=1e-10)
    assert bump_grad_sqrt_energy(3) == pytest.approx(GRAD_SQRT_ENERGY_3, rel=1e-8)


def test_kernel_shape_and_mass(mid3):
    m = friedrichs_kernel(0.3, mid3)
    assert m.radius == 3
    assert m.kernel_values.shape == (7, 7, 7)
    assert m.mass == pytest.approx(1.0, rel=1e-14)
    k = m.kernel_values
    assert k.min() >= 0
    assert np.allclose(k, k[::-1, :, :]) and np.allclose(k, np.transpose(k, (1, 0, 2)))
    assert m.grad_sqrt_energy == pytest.approx(GRAD_SQRT_ENERGY_3 / 0.09, rel=1e-8)


def test_kernel_below_two_h(mid3):
    with pytest.raises(ResolutionError):
        friedrichs_kernel(0.2, mid3)
    with pytest.raises(ConfigurationError):
        friedrichs_kernel(-1.0, mid3)


def test_grid_mismatch(mid3, small3):
    m = friedrichs_kernel(0.5, small3)
    with pytest.raises(ConfigurationError):
        mollify_field(mid3.zeros(), m)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_affine_preserved_away_from_faces(a, b, c):
    dom = build_domain(3, 1.0, 13)
    f = dom.sample(lambda x, y, z: a * x + b * y + c)
    m = friedrichs_kernel(0.35, dom)
    out = mollify_field(f, m)
    inner = dom.boundary_distance() > m.radius
    assert np.allclose(out.values[inner], f.values[inner], atol=1e-12)


@given(st.integers(0, 2**16))
def test_renormalized_keeps_bounds(seed):
    dom = build_domain(3, 1.0, 11)
    f = ScalarField(dom, np.random.default_rng(seed).uniform(-2, 5, dom.shape))
    out = mollify_field(f, friedrichs_kernel(0.4, dom), boundary="renormalized")
    assert out.values.min() >= f.values.min() - 1e-12
    assert out.values.max() <= f.values.max() + 1e-12


def test_renormalized_constant_everywhere(mid3):
    one = ScalarField(mid3, np.full(mid3.shape, 3.0))
    out = mollify_field(one, friedrichs_kernel(0.3, mid3), boundary="renormalized")
    assert np.allclose(out.values, 3.0)
    zero_ext = mollify_field(one, friedrichs_kernel(0.3, mid3))
    assert zero_ext.values[0, 0, 0] < 3.0


def test_direct_and_fft_agree(mid3, rng):
    f = ScalarField(mid3, rng.normal(size=mid3.shape))
    m = friedrichs_kernel(0.3, mid3)
    a = mollify_field(f, m, method="direct").values
    b = mollify_field(f, m, method="fft").values
    assert np.allclose(a, b, atol=1e-12)
    with pytest.raises(ConfigurationError):
        mollify_field(f, m, method="spectral")
    with pytest.raises(ConfigurationError):
        mollify_field(f, m, boundary="reflect")


def test_matrix_keeps_ellipticity(mid3):
    a = make_matrix(MatrixSpec.checkerboard(0.5, 2.0, period=2), mid3)
    out = mollify_field(a, friedrichs_kernel(0.3, mid3), boundary="renormalized")
    lo, hi = out.eigenvalue_range()
    assert 0.5 - 1e-12 <= lo <= hi <= 2.0 + 1e-12
    assert (out.sigma, out.xi) == (0.5, 2.0)


def test_mollify_drift_split_is_exact(mid3):
    drift = make_drift(DriftSpec.hardy_pair(1.0, 1.0, (0.25, 0, 0), (-0.25, 0, 0)), mid3)
    out = mollify_drift(drift, friedrichs_kernel(0.25, mid3))
    assert out.div_plus.values.min() >= 0 and out.div_minus.values.min() >= 0
    defect = divergence(out.b).values - (out.div_plus.values - out.div_minus.values)
    assert np.abs(defect).max() < 1e-12
    assert not out.analytic
    # the singular peak is flattened
    assert out.b.magnitude().values.max() < drift.b.magnitude().values.max()


def test_default_schedule(mid3):
    # truncated at 2h = 0.25
    assert default_schedule(mid3) == [0.25]
    assert default_schedule(mid3, eps0=0.9) == [0.9, 0.45]
    assert default_schedule(mid3, count=2, eps0=1.0, factor=0.8) == [1.0, 0.8]


def test_transformer(mid3):
    est = FriedrichsMollifier(epsilon=0.3, boundary="renormalized")
    with pytest.raises(NotFittedError):
        est.transform(mid3.zeros())
    f = mid3.sample(lambda x, y, z: x * x)
    out = est.fit(mid3).transform(f)
    direct = mollify_field(f, friedrichs_kernel(0.3, mid3), boundary="renormalized")
    assert np.array_equal(out.values, direct.values)
    assert est.get_params() == {"boundary": "renormalized", "epsilon": 0.3, "method": "auto"}


def test_verify_mollification_report(mid3):
    drift = make_drift(DriftSpec.hardy_pair(1.0, 1.0, (0.25, 0, 0), (-0.25, 0, 0)), mid3)
    rep = verify_mollification(drift, [0.5, 0.25], eps_grid_points=9)
    assert rep.column("eps") == [0.5, 0.25]
    l1 = rep.column("l1_distance")
    assert l1[1] < l1[0]
    assert all(row["divsplit_min"] >= 0 for row in rep.rows)
    assert rep.reference_delta is not None
    with pytest.raises(ConfigurationError):
        verify_mollification(drift, [0.25, 0.5], estimate_delta=False)
