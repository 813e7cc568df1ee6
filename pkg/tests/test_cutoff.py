from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from kolmolab.cutoff import (
    cutoff_profile,
    eta,
    eta_radial,
    phi,
    verify_cutoff_bounds,
    zeta_family,
    zeta_gradient_constants,
    zeta_radii,
)
from kolmolab.exceptions import ConfigurationError
from kolmolab.grid import build_domain

# 1 / int_1^2 exp(-1/(1/4 - (s - 3/2)^2)) ds, high-precision quadrature
PROFILE_C = 142.250375777095868
# sup sqrt(phi) = sqrt(C) e^-2, attained at s = 3/2
C2_CONTINUUM = 1.61412716801373110547


def test_profile_normalizer():
    assert cutoff_profile().normalizer == pytest.approx(PROFILE_C, rel=1e-9)
    total, _ = quad(phi, 1.0, 2.0, points=[1.5])
    assert total == pytest.approx(1.0, rel=1e-9)
    assert phi(np.array([0.5, 1.0, 2.0, 2.5])).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_eta_radial_limits():
    values, slope = eta_radial(np.array([0.0, 0.2, 0.3, 0.4, 0.9]), 0.2, 0.4)
    assert values[0] == 1.0 and values[1] == 1.0
    assert values[2] == pytest.approx(0.5, abs=1e-9)
    assert values[3] == 0.0 and values[4] == 0.0
    assert slope[2] == pytest.approx(PROFILE_C * math.exp(-4) / 0.2, rel=1e-9)


@given(st.floats(0.05, 1.0), st.floats(1.1, 4.0))
def test_eta_radial_monotone(r1, ratio):
    radius = np.linspace(0, 1.2 * r1 * ratio, 500)
    values, slope = eta_radial(radius, r1, r1 * ratio)
    assert np.all(np.diff(values) <= 1e-12)
    assert values.min() >= 0 and values.max() <= 1
    assert slope.min() >= 0


def test_eta_slope_matches_finite_difference():
    r = np.linspace(0.25, 0.45, 41)
    values, slope = eta_radial(r, 0.2, 0.5)
    fd = -np.gradient(values, r)
    assert np.allclose(fd[2:-2], slope[2:-2], atol=2e-3 * slope.max())


def test_eta_field(mid3):
    values, grad = eta(0.25, 0.5, mid3, (0, 0, 0))
    assert values.values[8, 8, 8] == 1.0
    assert values.values[0, 0, 0] == 0.0
    assert not grad.components[:, 8, 8, 8].any()
    with pytest.raises(ConfigurationError):
        eta(0.5, 0.25, mid3, (0, 0, 0))
    with pytest.raises(ConfigurationError):
        eta(0.5, 0.9, mid3, (0.5, 0, 0))


def test_zeta_family(mid3):
    assert zeta_radii(0.8, 1) == pytest.approx((0.4, 0.6))
    with pytest.raises(ConfigurationError):
        zeta_radii(0.8, 0)
    z = zeta_family(0.8, 1, mid3, (0, 0, 0))
    assert z.values[8, 8, 8] == 1.0


def test_zeta_gradient_constants_do_not_depend_on_m():
    rows = zeta_gradient_constants(0.8, [1, 2, 3, 4])
    grads = [g for _, g, _ in rows]
    hess = [h for _, _, h in rows]
    # sup |grad zeta_m| = sup phi / (r 2^-(m+1)) so the normalized value is 2 sup phi
    assert np.allclose(grads, 2 * C2_CONTINUUM**2, rtol=1e-6)
    assert np.ptp(hess) <= 1e-6 * max(hess)


@pytest.mark.parametrize("r1,r2", [(0.1, 0.3), (1.0, 3.0), (5.0, 15.0)])
def test_cutoff_constants_scale_free(r1, r2):
    ref = verify_cutoff_bounds(0.2, 0.6)
    got = verify_cutoff_bounds(r1, r2)
    assert got == pytest.approx(ref, rel=1e-9)
    assert got[1] == pytest.approx(C2_CONTINUUM, rel=1e-8)
    assert all(math.isfinite(c) and c > 0 for c in got)


def test_cutoff_constants_on_grid():
    dom = build_domain(3, 1.0, 33)
    c = verify_cutoff_bounds(0.3, 0.6, dom)
    ref = verify_cutoff_bounds(0.3, 0.6)
    assert all(ci <= ri * (1 + 1e-9) for ci, ri in zip(c, ref))
    with pytest.raises(ConfigurationError):
        verify_cutoff_bounds(0.01, 0.02, dom)
