"""Friedrichs mollification of grid fields.

The unit bump is ``exp(-1 / (1 - |y|^2))`` on the open unit ball; the grid
kernel samples ``gamma_eps(y) = eps^-d gamma(y / eps)`` on a stencil of radius
``ceil(eps / h)`` and is normalized so that ``h^d * sum = 1`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.ndimage
import scipy.signal
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive
from .exceptions import ConfigurationError, ResolutionError
from .fields import DriftFields
from .grid import GridDomain, MatrixField, ScalarField, VectorField, divergence, unit_ball_volume
from .formbounds import estimate_mf_delta

__all__ = [
    "Mollifier",
    "FriedrichsMollifier",
    "friedrichs_kernel",
    "mollify_field",
    "mollify_drift",
    "verify_mollification",
    "bump_normalization",
    "bump_grad_sqrt_energy",
    "default_schedule",
    "MollificationReport",
]

FFT_THRESHOLD = 41**3


def _bump(r2):
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _sphere_area(d):
    return d * unit_ball_volume(d)


def bump_normalization(d: int) -> float:
    """Constant ``c`` with ``c * integral of exp(-1/(1-|y|^2))`` over the unit ball equal to 1."""
    radial, _ = scipy.integrate.quad(lambda r: r ** (d - 1) * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0)
    return 1.0 / (_sphere_area(d) * radial)


def bump_grad_sqrt_energy(d: int) -> float:
    """``C^2 = <|grad sqrt(gamma)|^2>`` for the normalized unit bump."""

    def integrand(r):
        s = 1.0 - r * r
        if s <= 0:
            return 0.0
        return r ** (d + 1) * math.exp(-1.0 / s) / s**4

    radial, _ = scipy.integrate.quad(integrand, 0.0, 1.0, limit=200)
    return bump_normalization(d) * _sphere_area(d) * radial


@dataclass(frozen=True, eq=False)
class Mollifier:
    epsilon: float
    spacing: float
    dimension: int
    kernel_values: np.ndarray
    normalization: float
    unit_grad_sqrt_energy: float

    @property
    def radius(self) -> int:
        return (self.kernel_values.shape[0] - 1) // 2

    @property
    def grad_sqrt_energy(self) -> float:
        """``C^2 eps^-2`` for the rescaled kernel."""
        return self.unit_grad_sqrt_energy / self.epsilon**2

    @property
    def mass(self) -> float:
        return float(self.spacing**self.dimension * self.kernel_values.sum())


def friedrichs_kernel(epsilon: float, domain: GridDomain) -> Mollifier:
    """Discrete Friedrichs kernel of radius ``epsilon`` on ``domain``'s spacing."""
    epsilon = check_positive(epsilon, "epsilon")
    h = domain.spacing
    if epsilon < 2.0 * h * (1 - 1e-12):
        raise ResolutionError(f"epsilon = {epsilon:.4g} is below 2h = {2 * h:.4g}")
    d = domain.dimension
    radius = int(math.ceil(epsilon / h))
    offsets = np.arange(-radius, radius + 1) * h
    mesh = np.meshgrid(*([offsets] * d), indexing="ij")
    r2 = sum(m * m for m in mesh) / epsilon**2
    raw = _bump(r2)
    values = raw / (h**d * raw.sum())
    values.setflags(write=False)
    return Mollifier(
        epsilon=epsilon,
        spacing=h,
        dimension=d,
        kernel_values=values,
        normalization=bump_normalization(d),
        unit_grad_sqrt_energy=bump_grad_sqrt_energy(d),
    )


def _convolve(array, mollifier, method):
    kernel = mollifier.kernel_values * mollifier.spacing**mollifier.dimension
    if method == "auto":
        method = "fft" if kernel.size > FFT_THRESHOLD else "direct"
    if method == "direct":
        return scipy.ndimage.convolve(array, kernel, mode="constant", cval=0.0)
    if method == "fft":
        return scipy.signal.fftconvolve(array, kernel, mode="same")
    raise ConfigurationError(f"unknown convolution method {method!r}")


def mollify_field(F, m: Mollifier, *, boundary="zero", method="auto"):
    """Convolve ``F`` with the kernel of ``m``, component by component.

    Parameters
    ----------
    F : ScalarField, VectorField or MatrixField
    boundary : {"zero", "renormalized"}
        ``zero`` extends ``F`` by zero outside the box.  ``renormalized``
        divides by the mollified indicator of the box, so constants and the
        bounds ``inf F <= F_eps <= sup F`` survive up to the faces; used for
        the diffusion matrix and the boundary datum.
    method : {"auto", "direct", "fft"}
    """
    domain = F.domain
    if not math.isclose(domain.spacing, m.spacing) or domain.dimension != m.dimension:
        raise ConfigurationError("mollifier was built for a different grid")
    if boundary not in ("zero", "renormalized"):
        raise ConfigurationError(f"unknown boundary mode {boundary!r}")
    weight = None
    if boundary == "renormalized":
        weight = _convolve(np.ones(domain.shape), m, method)

    def smooth(a):
        out = _convolve(a, m, method)
        return out / weight if weight is not None else out

    if isinstance(F, ScalarField):
        return ScalarField(domain, smooth(F.values))
    if isinstance(F, VectorField):
        return VectorField(domain, np.stack([smooth(c) for c in F.components]))
    if isinstance(F, MatrixField):
        d = domain.dimension
        entries = np.zeros_like(F.entries)
        for i in range(d):
            for j in range(i, d):
                if np.any(F.entries[i, j]):
                    entries[i, j] = entries[j, i] = smooth(F.entries[i, j])
        if boundary == "renormalized":
            return MatrixField(domain, entries, sigma=F.sigma, xi=F.xi)
        return MatrixField(domain, entries)
    raise ConfigurationError(f"cannot mollify {type(F).__name__}")


def mollify_drift(drift: DriftFields, m: Mollifier, *, method="auto") -> DriftFields:
    """Mollify ``b`` and both divergence parts, keeping the split consistent.

    The parts are mollified separately.  Wherever the discrete divergence of
    the mollified drift differs from their difference (the zero-extension
    layer near the faces, and the discretization defect of an analytic split)
    the defect is added to the part of matching sign, so that
    ``div_h b_n = div_plus_n - div_minus_n`` holds exactly and both parts stay
    nonnegative.
    """
    b_n = mollify_field(drift.b, m, method=method)
    plus = np.maximum(mollify_field(drift.div_plus, m, method=method).values, 0.0)
    minus = np.maximum(mollify_field(drift.div_minus, m, method=method).values, 0.0)
    defect = divergence(b_n).values - (plus - minus)
    plus = plus + np.maximum(defect, 0.0)
    minus = minus + np.maximum(-defect, 0.0)
    domain = drift.b.domain
    return DriftFields(b_n, ScalarField(domain, plus), ScalarField(domain, minus), False)


def default_schedule(domain: GridDomain, count=None, eps0=None, factor=0.5):
    """``eps_n = eps0 * factor^n`` starting at ``L / 4``, truncated at ``2h``."""
    eps0 = domain.half_extent / 4.0 if eps0 is None else eps0
    floor = 2.0 * domain.spacing
    out = []
    eps = eps0
    while eps >= floor * (1 - 1e-12) and (count is None or len(out) < count):
        out.append(eps)
        eps *= factor
    return out


class FriedrichsMollifier(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`mollify_field`.

    ``fit`` takes a field (or a :class:`GridDomain`) and builds the kernel for
    its grid; ``transform`` mollifies fields on that grid.
    """

    def __init__(self, epsilon=0.25, boundary="zero", method="auto"):
        self.epsilon = epsilon
        self.boundary = boundary
        self.method = method

    def fit(self, X, y=None):
        domain = X if isinstance(X, GridDomain) else X.domain
        self.kernel_ = friedrichs_kernel(self.epsilon, domain)
        self.domain_ = domain
        return self

    def transform(self, X):
        if not hasattr(self, "kernel_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("FriedrichsMollifier is not fitted yet")
        return mollify_field(X, self.kernel_, boundary=self.boundary, method=self.method)


@dataclass
class MollificationReport:
    rows: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    reference_delta: float | None = None
    companion: float = 0.0

    columns = ("eps", "sup_bn", "sup_times_eps", "delta_n", "l1_distance", "divsplit_maxviolation")

    def column(self, name):
        return [row[name] for row in self.rows]


def _compact_mask(domain, fraction=0.5):
    return np.all(np.abs(np.stack(domain.mesh)) <= fraction * domain.half_extent + 1e-12, axis=0)


def verify_mollification(
    drift: DriftFields,
    eps_sequence,
    *,
    companion: float = 0.0,
    reference_delta: float | None = None,
    delta_tol: float = 0.05,
    estimate_delta: bool = True,
    eps_grid_points: int = 25,
) -> MollificationReport:
    """Check boundedness, bound preservation, convergence and sign-split consistency.

    Violations are collected in ``report.findings``; nothing is raised for them.
    ``reference_delta`` defaults to the estimate for ``|b|`` itself on the
    same grid.
    """
    eps_sequence = [float(e) for e in eps_sequence]
    if any(b >= a for a, b in zip(eps_sequence, eps_sequence[1:])):
        raise ConfigurationError("eps_sequence must be strictly decreasing")
    domain = drift.b.domain
    h = domain.spacing
    kernels = [friedrichs_kernel(e, domain) for e in eps_sequence]
    K = _compact_mask(domain)
    dist = domain.boundary_distance() * h
    report = MollificationReport(companion=companion)
    from .formbounds import default_eps_grid

    if estimate_delta and reference_delta is None:
        reference_delta = estimate_mf_delta(
            drift.b.magnitude(), companion, default_eps_grid(domain, eps_grid_points)
        ).bound
    report.reference_delta = reference_delta

    for eps, m in zip(eps_sequence, kernels):
        b_n = mollify_field(drift.b, m)
        mag = b_n.magnitude().values
        away = dist >= eps
        sup_bn = float(mag[away].max()) if away.any() else float(mag.max())
        diff = np.sqrt(np.sum((b_n.components - drift.b.components) ** 2, axis=0))
        l1 = float(domain.cell_volume * diff[K].sum())
        plus = mollify_field(drift.div_plus, m).values
        minus = mollify_field(drift.div_minus, m).values
        if plus.min() < 0 or minus.min() < 0:
            report.findings.append(f"eps={eps:g}: mollified divergence part is negative")
        inner = dist >= eps + 2 * h
        defect = np.abs(divergence(b_n).values - (plus - minus))
        scale = max(float(np.abs(plus - minus)[inner].max()) if inner.any() else 0.0, 1e-300)
        violation = float(defect[inner].max() / scale) if inner.any() else 0.0
        delta_n = None
        if estimate_delta:
            delta_n = estimate_mf_delta(
                b_n.magnitude(), companion, default_eps_grid(domain, eps_grid_points)
            ).bound
            if reference_delta is not None and delta_n > reference_delta + delta_tol:
                report.findings.append(
                    f"eps={eps:g}: delta_n={delta_n:.6g} exceeds reference {reference_delta:.6g} + {delta_tol}"
                )
        report.rows.append(
            {
                "eps": eps,
                "sup_bn": sup_bn,
                "sup_times_eps": sup_bn * eps,
                "delta_n": delta_n,
                "l1_distance": l1,
                "divsplit_maxviolation": violation,
                "divsplit_min": float(min(plus.min(), minus.min())),
            }
        )
    l1s = report.column("l1_distance")
    if any(b >= a for a, b in zip(l1s, l1s[1:])):
        report.findings.append("L1 distance to b is not strictly decreasing along the schedule")
    return report
