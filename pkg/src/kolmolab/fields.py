"""Catalog of coefficient fields: singular drifts, elliptic matrices, boundary data.

Each constructor samples an analytic formula on a :class:`~kolmolab.grid.GridDomain`.
Drifts additionally carry the positive and negative parts of their divergence,
analytic whenever a closed form exists, otherwise split from the discrete
divergence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError
from .grid import GridDomain, MatrixField, ScalarField, VectorField, divergence, load_field

__all__ = [
    "DriftSpec",
    "MatrixSpec",
    "BoundarySpec",
    "DriftFields",
    "make_drift",
    "make_matrix",
    "make_boundary",
    "split_divergence",
]

DRIFT_KINDS = ("zero", "constant", "hardy_pair", "smooth_bounded", "file")
SMOOTH_DRIFTS = ("sine_curl", "rotation")


@dataclass(frozen=True)
class DriftSpec:
    """Description of a drift ``b``.

    ``regularization`` shifts each singular center by ``rho`` in every
    coordinate so that no node samples the singularity; ``None`` means the
    default ``h / 3`` of the grid the drift is sampled on.
    """

    kind: str = "zero"
    vector: tuple[float, ...] | None = None
    kappa_plus: float = 0.0
    kappa_minus: float = 0.0
    x_plus: tuple[float, ...] | None = None
    x_minus: tuple[float, ...] | None = None
    name: str | None = None
    amplitude: float = 1.0
    path: str | None = None
    regularization: float | None = None

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ConfigurationError(f"unknown drift kind {self.kind!r}; expected one of {DRIFT_KINDS}")
        if self.kind == "constant" and self.vector is None:
            raise ConfigurationError("constant drift needs a vector")
        if self.kind == "hardy_pair":
            if self.kappa_plus < 0 or self.kappa_minus < 0:
                raise ConfigurationError("hardy_pair needs kappa_plus, kappa_minus >= 0")
            if self.x_plus is None or self.x_minus is None:
                raise ConfigurationError("hardy_pair needs both centers x_plus and x_minus")
        if self.kind == "smooth_bounded" and self.name not in SMOOTH_DRIFTS:
            raise ConfigurationError(f"smooth_bounded drift name must be one of {SMOOTH_DRIFTS}")
        if self.kind == "file" and not self.path:
            raise ConfigurationError("file drift needs a path")
        if self.regularization is not None and self.regularization < 0:
            raise ConfigurationError("regularization must be >= 0")
        for key in ("vector", "x_plus", "x_minus"):
            value = getattr(self, key)
            if value is not None:
                object.__setattr__(self, key, tuple(float(v) for v in value))

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant(cls, vector):
        return cls("constant", vector=tuple(vector))

    @classmethod
    def hardy_pair(cls, kappa_plus, kappa_minus, x_plus, x_minus, regularization=None):
        return cls(
            "hardy_pair",
            kappa_plus=float(kappa_plus),
            kappa_minus=float(kappa_minus),
            x_plus=tuple(x_plus),
            x_minus=tuple(x_minus),
            regularization=regularization,
        )

    @classmethod
    def smooth_bounded(cls, name="sine_curl", amplitude=1.0):
        return cls("smooth_bounded", name=name, amplitude=float(amplitude))

    @classmethod
    def from_file(cls, path):
        return cls("file", path=str(path))

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigurationError(f"unknown drift fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    def centers(self, domain: GridDomain):
        """Effective singular centers after the off-grid shift."""
        rho = domain.spacing / 3.0 if self.regularization is None else self.regularization
        shift = np.full(domain.dimension, rho)
        return np.asarray(self.x_plus) + shift, np.asarray(self.x_minus) + shift


@dataclass(frozen=True)
class MatrixSpec:
    kind: str = "identity"
    sigma: float = 1.0
    xi: float = 1.0
    values: tuple[float, ...] | None = None
    period: int = 4

    def __post_init__(self):
        if self.kind not in ("identity", "diagonal", "checkerboard"):
            raise ConfigurationError(f"unknown matrix kind {self.kind!r}")
        if self.kind == "diagonal":
            if not self.values:
                raise ConfigurationError("diagonal matrix needs values")
            values = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "sigma", min(values))
            object.__setattr__(self, "xi", max(values))
        if not (self.sigma > 0):
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if self.xi < self.sigma:
            raise ConfigurationError(f"xi must be >= sigma, got xi={self.xi} < sigma={self.sigma}")
        if self.kind == "identity" and not (self.sigma <= 1.0 <= self.xi):
            raise ConfigurationError("identity matrix requires sigma <= 1 <= xi")
        if self.period < 1:
            raise ConfigurationError("checkerboard period must be >= 1 cell")

    @classmethod
    def identity(cls):
        return cls("identity", 1.0, 1.0)

    @classmethod
    def diagonal(cls, *values):
        return cls("diagonal", values=tuple(values))

    @classmethod
    def checkerboard(cls, sigma, xi, period=4):
        return cls("checkerboard", sigma=float(sigma), xi=float(xi), period=int(period))

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "values" in data and data["values"] is not None:
            data["values"] = tuple(data["values"])
        return cls(**data)

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class BoundarySpec:
    """Smooth boundary datum ``g``.

    ``affine``: ``offset + slope . x``; ``exp``: ``offset + scale * exp(rate * x_axis)``;
    ``constant``: ``offset``.
    """

    kind: str = "affine"
    offset: float = 0.0
    slope: tuple[float, ...] = field(default=(1.0,))
    scale: float = 1.0
    rate: float = 1.0
    axis: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "exp"):
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}")
        object.__setattr__(self, "slope", tuple(float(s) for s in self.slope))

    @classmethod
    def from_dict(cls, data):
        return cls(**dict(data))

    def to_dict(self):
        return asdict(self)


class DriftFields(NamedTuple):
    b: VectorField
    div_plus: ScalarField
    div_minus: ScalarField
    analytic: bool


def split_divergence(V: VectorField) -> tuple[ScalarField, ScalarField]:
    """Positive and negative parts of the discrete divergence of ``V``."""
    div = divergence(V).values
    plus = np.maximum(div, 0.0)
    minus = plus - div
    return ScalarField(V.domain, plus), ScalarField(V.domain, minus)


def _check_center(domain, center, label):
    if domain.is_node(center):
        raise ConfigurationError(
            f"singular center {label}={np.round(center, 12).tolist()} lies on a grid node; "
            "use a positive regularization offset"
        )
    if np.any(np.abs(center) > domain.half_extent):
        raise ConfigurationError(f"singular center {label} lies outside the box")


def _hardy_pair(spec: DriftSpec, domain: GridDomain):
    d = domain.dimension
    if len(spec.x_plus) != d or len(spec.x_minus) != d:
        raise ConfigurationError(f"hardy_pair centers must have {d} coordinates")
    xp, xm = spec.centers(domain)
    _check_center(domain, xp, "x_plus")
    _check_center(domain, xm, "x_minus")
    mesh = np.stack(domain.mesh)
    shape = (d,) + (1,) * d
    dp = mesh - xp.reshape(shape)
    dm = mesh - xm.reshape(shape)
    rp2 = np.sum(dp**2, axis=0)
    rm2 = np.sum(dm**2, axis=0)
    b = spec.kappa_plus * dp / rp2 - spec.kappa_minus * dm / rm2
    plus = spec.kappa_plus * (d - 2) / rp2
    minus = spec.kappa_minus * (d - 2) / rm2
    return DriftFields(
        VectorField(domain, b), ScalarField(domain, plus), ScalarField(domain, minus), True
    )


def _smooth(spec: DriftSpec, domain: GridDomain):
    d = domain.dimension
    mesh = domain.mesh
    amp = spec.amplitude
    if spec.name == "sine_curl":
        # component k depends only on the next coordinate: divergence-free
        comps = [amp * np.sin(np.pi * mesh[(k + 1) % d]) for k in range(d)]
    else:
        comps = [np.zeros(domain.shape) for _ in range(d)]
        comps[0] = -amp * mesh[1]
        comps[1] = amp * mesh[0]
    zero = ScalarField(domain, np.zeros(domain.shape))
    return DriftFields(VectorField(domain, np.stack(comps)), zero, zero, True)


def make_drift(spec: DriftSpec, domain: GridDomain) -> DriftFields:
    """Sample ``b`` and the two parts of ``div b`` on ``domain``.

    Returns
    -------
    DriftFields
        ``(b, div_plus, div_minus, analytic)``; ``analytic`` is False when the
        split comes from the discrete divergence.
    """
    zero = ScalarField(domain, np.zeros(domain.shape))
    if spec.kind == "zero":
        return DriftFields(VectorField.zeros(domain), zero, zero, True)
    if spec.kind == "constant":
        if len(spec.vector) != domain.dimension:
            raise ConfigurationError(f"constant drift needs {domain.dimension} components")
        comps = np.stack([np.full(domain.shape, v) for v in spec.vector])
        return DriftFields(VectorField(domain, comps), zero, zero, True)
    if spec.kind == "hardy_pair":
        return _hardy_pair(spec, domain)
    if spec.kind == "smooth_bounded":
        return _smooth(spec, domain)
    b = load_field(spec.path)
    if not isinstance(b, VectorField) or b.domain != domain:
        raise ConfigurationError(f"{spec.path} is not a vector field on the requested grid")
    plus, minus = split_divergence(b)
    return DriftFields(b, plus, minus, False)


def make_matrix(spec: MatrixSpec, domain: GridDomain) -> MatrixField:
    """Realize ``spec`` as a matrix field; ellipticity is verified on construction."""
    d = domain.dimension
    entries = np.zeros((d, d) + domain.shape)
    if spec.kind == "identity":
        for k in range(d):
            entries[k, k] = 1.0
    elif spec.kind == "diagonal":
        if len(spec.values) != d:
            raise ConfigurationError(f"diagonal matrix needs {d} values, got {len(spec.values)}")
        for k, v in enumerate(spec.values):
            entries[k, k] = v
    else:
        idx = np.indices(domain.shape)
        parity = np.sum(idx // spec.period, axis=0) % 2
        scalar = np.where(parity == 0, spec.sigma, spec.xi)
        for k in range(d):
            entries[k, k] = scalar
    return MatrixField(domain, entries, sigma=spec.sigma, xi=spec.xi)


def make_boundary(spec: BoundarySpec, domain: GridDomain) -> ScalarField:
    mesh = domain.mesh
    if spec.kind == "constant":
        values = np.full(domain.shape, spec.offset)
    elif spec.kind == "affine":
        slope = np.zeros(domain.dimension)
        slope[: len(spec.slope)] = spec.slope[: domain.dimension]
        values = spec.offset + sum(s * x for s, x in zip(slope, mesh))
    else:
        if not 0 <= spec.axis < domain.dimension:
            raise ConfigurationError(f"axis {spec.axis} out of range")
        values = spec.offset + spec.scale * np.exp(spec.rate * mesh[spec.axis])
    return ScalarField(domain, np.broadcast_to(values, domain.shape))


def ellipticity_sample(a: MatrixField, n_directions=100, seed=0) -> tuple[float, float]:
    """Min and max of ``z^T a z / |z|^2`` over random unit directions at every node."""
    rng = np.random.default_rng(seed)
    d = a.domain.dimension
    z = rng.standard_normal((n_directions, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    quad = np.einsum("ni,ij...,nj->n...", z, a.entries, z)
    return float(quad.min()), float(quad.max())

