"""Smooth radial cut-off functions built from a compactly supported bump.

The profile is ``phi(s) = C exp(-1 / (1/4 - (s - 3/2)^2))`` on ``(1, 2)`` with
``C`` fixed by ``int_1^2 phi = 1``.  The cut-off between radii ``r1 < r2`` is

    eta(y) = 1 - int_1^{1 + t} phi(s) ds,    t = (|y| - r1) / (r2 - r1),

clamped to 1 inside ``B_r1`` and 0 outside ``B_r2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .exceptions import ConfigurationError
from .grid import GridDomain, ScalarField, VectorField

__all__ = [
    "CutoffProfile",
    "cutoff_profile",
    "phi",
    "eta",
    "eta_radial",
    "zeta_radii",
    "zeta_family",
    "zeta_gradient_constants",
    "verify_cutoff_bounds",
]

TABLE_POINTS = 10_001
_FINE_POINTS = 400_001


def _raw_phi(s):
    s = np.asarray(s, dtype=float)
    q = 0.25 - (s - 1.5) ** 2
    out = np.zeros_like(s)
    inside = q > 0
    out[inside] = np.exp(-1.0 / q[inside])
    return out


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """Tabulated tail ``int_{1+t}^2 phi`` on ``t in [0, 1]``, interpolated in log space."""

    normalizer: float
    t: np.ndarray
    tail: np.ndarray
    _log_tail: CubicSpline
    _last_positive: float

    def eta_of_t(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        out[t <= 0] = 1.0
        mid = (t > 0) & (t < self._last_positive)
        out[mid] = np.exp(self._log_tail(t[mid]))
        return np.clip(out, 0.0, 1.0)


@lru_cache(maxsize=1)
def cutoff_profile() -> CutoffProfile:
    """Build the (shape-only) profile table once per process."""
    s_fine = np.linspace(1.0, 2.0, _FINE_POINTS)
    raw = _raw_phi(s_fine)
    head = cumulative_trapezoid(raw, s_fine, initial=0.0)
    total = head[-1]
    tail_fine = (total - head) / total
    stride = (_FINE_POINTS - 1) // (TABLE_POINTS - 1)
    t = s_fine[::stride] - 1.0
    tail = tail_fine[::stride]
    positive = tail > 1e-300
    last = float(t[positive][-1])
    spline = CubicSpline(t[positive], np.log(tail[positive]))
    t.setflags(write=False)
    tail.setflags(write=False)
    return CutoffProfile(1.0 / total, t, tail, spline, last)


def phi(s):
    """Normalized profile ``phi`` on ``[1, 2]``."""
    return cutoff_profile().normalizer * _raw_phi(s)


def _q(s):
    return 0.25 - (np.asarray(s, dtype=float) - 1.5) ** 2


def _dphi(s):
    s = np.asarray(s, dtype=float)
    q = _q(s)
    out = np.zeros_like(s)
    inside = q > 0
    out[inside] = phi(s[inside]) * (-2.0 * (s[inside] - 1.5) / q[inside] ** 2)
    return out


def _dsqrt_phi(s):
    s = np.asarray(s, dtype=float)
    q = _q(s)
    out = np.zeros_like(s)
    inside = q > 0
    out[inside] = np.sqrt(phi(s[inside])) * (-(s[inside] - 1.5) / q[inside] ** 2)
    return out


def _check_radii(r1, r2):
    if not (0 < r1 < r2):
        raise ConfigurationError(f"cut-off radii must satisfy 0 < r1 < r2, got r1={r1}, r2={r2}")


def eta_radial(radius, r1, r2):
    """``eta`` and ``|grad eta|`` as functions of ``|y|``."""
    _check_radii(r1, r2)
    radius = np.asarray(radius, dtype=float)
    t = (radius - r1) / (r2 - r1)
    values = cutoff_profile().eta_of_t(t)
    slope = phi(1.0 + t) / (r2 - r1)
    return values, slope


def eta(r1, r2, domain: GridDomain, center) -> tuple[ScalarField, VectorField]:
    """Cut-off equal to 1 on ``B_r1(center)`` and 0 off ``B_r2(center)``, with its exact gradient."""
    _check_radii(r1, r2)
    if not domain.contains_ball(center, r2, margin=0.0):
        raise ConfigurationError(f"B_{r2}({list(center)}) does not fit inside the box")
    center = np.asarray(center, dtype=float)
    rel = np.stack([x - c for x, c in zip(domain.mesh, center)])
    dist = np.sqrt(np.sum(rel**2, axis=0))
    values, slope = eta_radial(dist, r1, r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(dist > 0, rel / np.where(dist > 0, dist, 1.0), 0.0)
    grad = -slope * unit
    return ScalarField(domain, values), VectorField(domain, grad)


def zeta_radii(r, m):
    """Inner and outer radius ``r (1 - 2^-m)``, ``r (1 - 2^-(m+1))``."""
    if m < 1:
        raise ConfigurationError(f"m must be >= 1, got {m}")
    return r * (1.0 - 2.0**-m), r * (1.0 - 2.0 ** -(m + 1))


def zeta_family(r, m, domain: GridDomain, center) -> ScalarField:
    r_in, r_out = zeta_radii(r, m)
    return eta(r_in, r_out, domain, center)[0]


def zeta_gradient_constants(r, m_values, domain: GridDomain | None = None, center=None):
    """Normalized sups ``sup|grad zeta_m| r / 2^m`` and ``sup|grad|grad zeta_m|| r^2 / 4^m``.

    Without a grid the sups are taken over a dense radial sample.
    """
    rows = []
    for m in m_values:
        r_in, r_out = zeta_radii(r, m)
        if domain is None:
            radius = np.linspace(r_in, r_out, 20_001)
        else:
            dist = domain.distance_to(center)
            radius = dist[(dist > r_in) & (dist < r_out)]
        s = 1.0 + (radius - r_in) / (r_out - r_in)
        grad = phi(s) / (r_out - r_in)
        hess = np.abs(_dphi(s)) / (r_out - r_in) ** 2
        rows.append((m, float(grad.max()) * r / 2.0**m, float(hess.max()) * r**2 / 4.0**m))
    return rows


def verify_cutoff_bounds(r1, r2, domain: GridDomain | None = None, center=None):
    """Measured constants ``(c1, c2, c3)`` of the three cut-off estimates.

    ``c1 = sup(|grad eta|^2 / eta) (r2 - r1)^2``,
    ``c2 = sup sqrt|grad eta| sqrt(r2 - r1)``,
    ``c3 = sup |grad sqrt|grad eta|| (r2 - r1)^(3/2)``,
    with sups over the annulus ``r1 < |y| < r2``; ``0/0`` counts as 0.  With a
    ``domain`` the sups run over grid nodes, otherwise over a dense radial
    sample.
    """
    _check_radii(r1, r2)
    width = r2 - r1
    if domain is None:
        radius = np.linspace(r1, r2, 200_001)[1:-1]
    else:
        center = np.zeros(domain.dimension) if center is None else np.asarray(center, dtype=float)
        dist = domain.distance_to(center)
        radius = dist[(dist > r1) & (dist < r2)]
        if radius.size == 0:
            raise ConfigurationError("no grid node falls inside the cut-off annulus")
    values, slope = eta_radial(radius, r1, r2)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(values > 0, slope**2 / np.where(values > 0, values, 1.0), 0.0)
    s = 1.0 + (radius - r1) / width
    c1 = float(ratio.max()) * width**2
    c2 = float(np.sqrt(slope).max()) * math.sqrt(width)
    c3 = float(np.abs(_dsqrt_phi(s)).max() / width**1.5) * width**1.5
    return c1, c2, c3
