"""Cartesian box grids, grid-sampled fields and the discrete calculus on them.

Every field stores its nodal values as a numpy array indexed ``[i1, ..., id]``
with axis ``k`` running along the coordinate ``x_{k+1}``.  The canonical flat
node order (used for serialization and for all reductions) has ``x1`` varying
fastest, i.e. Fortran order of that array.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._io import format_float
from ._validation import check_finite, check_point, check_positive
from .exceptions import ConfigurationError, DomainError

__all__ = [
    "GridDomain",
    "ScalarField",
    "VectorField",
    "MatrixField",
    "OutOfTheoryWarning",
    "build_domain",
    "gradient",
    "divergence",
    "ball_mask",
    "ball_stats",
    "unit_ball_volume",
    "integrate",
    "inner",
    "l2_norm",
    "w12_norm",
    "save_field",
    "load_field",
    "export_slice_csv",
]


class OutOfTheoryWarning(UserWarning):
    """Raised for d = 2 grids: the regularity theory assumes d >= 3."""


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid on the box ``[-L, L]^d`` with ``n`` nodes per axis."""

    dimension: int = 3
    half_extent: float = 1.0
    resolution: int = 33

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dimension}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ConfigurationError(f"resolution must be an integer >= 2, got {self.resolution}")
        check_positive(self.half_extent, "half_extent")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "half_extent", float(self.half_extent))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.resolution - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dimension

    @property
    def node_count(self) -> int:
        return self.resolution**self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @cached_property
    def coordinates(self) -> np.ndarray:
        """1D node coordinates shared by all axes."""
        x = np.linspace(-self.half_extent, self.half_extent, self.resolution)
        x.setflags(write=False)
        return x

    @cached_property
    def mesh(self) -> tuple[np.ndarray, ...]:
        arrays = np.meshgrid(*([self.coordinates] * self.dimension), indexing="ij")
        for a in arrays:
            a.setflags(write=False)
        return tuple(arrays)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dimension):
            index = [slice(None)] * self.dimension
            index[axis] = 0
            mask[tuple(index)] = True
            index[axis] = -1
            mask[tuple(index)] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    def boundary_distance(self) -> np.ndarray:
        """Distance (in index units) of each node to the nearest box face."""
        idx = np.arange(self.resolution)
        per_axis = np.minimum(idx, self.resolution - 1 - idx)
        grids = np.meshgrid(*([per_axis] * self.dimension), indexing="ij")
        return np.minimum.reduce(grids)

    def distance_to(self, point) -> np.ndarray:
        point = check_point(self, point)
        return np.sqrt(sum((x - c) ** 2 for x, c in zip(self.mesh, point)))

    def is_node(self, point, atol=1e-12) -> bool:
        """True if ``point`` coincides with a grid node."""
        point = check_point(self, point)
        t = (point + self.half_extent) / self.spacing
        inside = np.all(point >= -self.half_extent - atol) and np.all(point <= self.half_extent + atol)
        return bool(inside and np.all(np.abs(t - np.round(t)) * self.spacing <= atol))

    def contains_ball(self, center, radius, margin=None) -> bool:
        """Whether ``B_radius(center)`` stays ``margin`` (default 2h) away from the faces."""
        center = check_point(self, center)
        margin = 2.0 * self.spacing if margin is None else margin
        return bool(np.all(np.abs(center) + radius + margin <= self.half_extent + 1e-12))

    def sample(self, func) -> "ScalarField":
        """Evaluate ``func(*mesh)`` at every node."""
        return ScalarField(self, np.broadcast_to(func(*self.mesh), self.shape))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))


def _frozen(array):
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.domain.shape:
            raise ConfigurationError(
                f"scalar field shape {values.shape} does not match grid {self.domain.shape}"
            )
        check_finite(values, "scalar field")
        object.__setattr__(self, "values", _frozen(values))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.domain, values)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class VectorField:
    domain: GridDomain
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        expected = (self.domain.dimension,) + self.domain.shape
        if comps.shape != expected:
            raise ConfigurationError(f"vector field shape {comps.shape} != {expected}")
        check_finite(comps, "vector field")
        object.__setattr__(self, "components", _frozen(comps))

    def magnitude(self) -> ScalarField:
        return ScalarField(self.domain, np.sqrt(np.sum(self.components**2, axis=0)))

    def component(self, k) -> ScalarField:
        return ScalarField(self.domain, self.components[k])

    @classmethod
    def zeros(cls, domain) -> "VectorField":
        return cls(domain, np.zeros((domain.dimension,) + domain.shape))


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Symmetric ``d x d`` matrix per node, optionally tagged with (sigma, xi)."""

    domain: GridDomain
    entries: np.ndarray
    sigma: float | None = None
    xi: float | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        d = self.domain.dimension
        if entries.shape != (d, d) + self.domain.shape:
            raise ConfigurationError(f"matrix field shape {entries.shape} != {(d, d) + self.domain.shape}")
        check_finite(entries, "matrix field")
        if not np.allclose(entries, np.swapaxes(entries, 0, 1), rtol=0, atol=1e-12):
            raise ConfigurationError("matrix field is not symmetric")
        object.__setattr__(self, "entries", _frozen(entries))
        if self.sigma is not None:
            lo, hi = self.eigenvalue_range()
            tol = 1e-10 * max(1.0, abs(self.xi))
            if lo < self.sigma - tol or hi > self.xi + tol:
                raise ConfigurationError(
                    f"eigenvalues in [{lo:.6g}, {hi:.6g}] violate sigma={self.sigma}, xi={self.xi}"
                )

    @property
    def is_diagonal(self) -> bool:
        d = self.domain.dimension
        off = ~np.eye(d, dtype=bool)
        return not np.any(self.entries[off])

    def eigenvalue_range(self) -> tuple[float, float]:
        if self.is_diagonal:
            diag = np.stack([self.entries[k, k] for k in range(self.domain.dimension)])
            return float(diag.min()), float(diag.max())
        mats = np.moveaxis(self.entries, (0, 1), (-2, -1))
        eig = np.linalg.eigvalsh(mats)
        return float(eig.min()), float(eig.max())

    def apply(self, vector: VectorField) -> VectorField:
        return VectorField(self.domain, np.einsum("ij...,j...->i...", self.entries, vector.components))


def build_domain(dimension: int = 3, half_extent: float = 1.0, resolution: int = 33) -> GridDomain:
    """Construct a :class:`GridDomain`, warning when ``dimension == 2``."""
    if dimension < 2:
        raise ConfigurationError(f"dimension must be >= 2, got {dimension}")
    domain = GridDomain(dimension, half_extent, resolution)
    if dimension == 2:
        warnings.warn(
            "d = 2 lies outside the theory (d >= 3 is assumed); results are exploratory",
            OutOfTheoryWarning,
            stacklevel=2,
        )
    return domain


def gradient(f: ScalarField) -> VectorField:
    """Second-order central differences inside, one-sided second order on faces."""
    domain = f.domain
    if domain.resolution < 3:
        raise ConfigurationError("gradient needs at least 3 nodes per axis")
    parts = np.gradient(f.values, domain.spacing, edge_order=2)
    if domain.dimension == 1:
        parts = [parts]
    return VectorField(domain, np.stack(parts))


def divergence(V: VectorField) -> ScalarField:
    domain = V.domain
    if domain.resolution < 3:
        raise ConfigurationError("divergence needs at least 3 nodes per axis")
    total = np.zeros(domain.shape)
    for k in range(domain.dimension):
        total += np.gradient(V.components[k], domain.spacing, axis=k, edge_order=2)
    return ScalarField(domain, total)


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def ball_mask(domain: GridDomain, center, radius) -> np.ndarray:
    """Nodes strictly inside ``B_radius(center)``."""
    return domain.distance_to(center) < radius


_STATS = ("integral", "average", "lp_norm", "sup", "inf", "oscillation")


def ball_stats(f: ScalarField, center, radius, stat="average", p=None) -> float:
    """Reduce ``f`` over the node mask of a ball.

    Parameters
    ----------
    f : ScalarField
    center : array_like
        Ball center, ``d`` coordinates.
    radius : float
    stat : {"integral", "average", "lp_norm", "sup", "inf", "oscillation"}
    p : float, optional
        Exponent, required for ``stat="lp_norm"``.
    """
    if stat not in _STATS:
        raise ConfigurationError(f"unknown statistic {stat!r}; expected one of {_STATS}")
    mask = ball_mask(f.domain, center, radius)
    if not mask.any():
        raise DomainError(f"ball of radius {radius} around {list(center)} contains no grid node")
    values = f.values.ravel(order="F")[mask.ravel(order="F")]
    dv = f.domain.cell_volume
    if stat == "integral":
        return float(dv * values.sum())
    if stat == "average":
        return float(values.sum() / values.size)
    if stat == "lp_norm":
        if p is None or p <= 0:
            raise ConfigurationError("lp_norm requires an exponent p > 0")
        return float((dv * np.sum(np.abs(values) ** p)) ** (1.0 / p))
    if stat == "sup":
        return float(values.max())
    if stat == "inf":
        return float(values.min())
    return float(values.max() - values.min())


def integrate(values, domain: GridDomain, mask=None) -> float:
    """``h^d`` times the sum over ``mask`` (all nodes by default), canonical order."""
    values = np.asarray(values, dtype=float)
    if mask is not None:
        values = np.where(mask, values, 0.0)
    return float(domain.cell_volume * np.sum(values.ravel(order="F")))


def inner(f: ScalarField, g: ScalarField) -> float:
    return integrate(f.values * g.values, f.domain)


def l2_norm(f, mask=None) -> float:
    if isinstance(f, VectorField):
        return math.sqrt(integrate(np.sum(f.components**2, axis=0), f.domain, mask))
    return math.sqrt(integrate(f.values**2, f.domain, mask))


def w12_norm(f: ScalarField, mask=None) -> float:
    return math.sqrt(l2_norm(f, mask) ** 2 + l2_norm(gradient(f), mask) ** 2)


# -- serialization ----------------------------------------------------------


def save_field(path, field) -> Path:
    """Write ``field`` as flat float64 (x1 fastest) plus a JSON sidecar.

    Vector and matrix fields store their components one after another, each in
    canonical node order.
    """
    path = Path(path)
    domain = field.domain
    if isinstance(field, ScalarField):
        kind, blocks = "scalar", [field.values]
    elif isinstance(field, VectorField):
        kind, blocks = "vector", list(field.components)
    elif isinstance(field, MatrixField):
        d = domain.dimension
        kind, blocks = "matrix", [field.entries[i, j] for i in range(d) for j in range(d)]
    else:
        raise ConfigurationError(f"cannot serialize {type(field).__name__}")
    flat = np.concatenate([np.asarray(b).ravel(order="F") for b in blocks]).astype("<f8")
    path.write_bytes(flat.tobytes())
    meta = {
        "dimension": domain.dimension,
        "half_extent": domain.half_extent,
        "resolution": domain.resolution,
        "kind": kind,
    }
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_field(path):
    path = Path(path)
    sidecar = path.with_name(path.name + ".json")
    if not sidecar.exists():
        raise ConfigurationError(f"missing sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    domain = GridDomain(meta["dimension"], meta["half_extent"], meta["resolution"])
    kind = meta.get("kind", "scalar")
    flat = np.frombuffer(path.read_bytes(), dtype="<f8")
    count = {"scalar": 1, "vector": domain.dimension, "matrix": domain.dimension**2}[kind]
    if flat.size != count * domain.node_count:
        raise ConfigurationError(
            f"{path} holds {flat.size} values, expected {count * domain.node_count}"
        )
    blocks = [b.reshape(domain.shape, order="F") for b in np.split(flat, count)]
    if kind == "scalar":
        return ScalarField(domain, blocks[0])
    if kind == "vector":
        return VectorField(domain, np.stack(blocks))
    d = domain.dimension
    return MatrixField(domain, np.stack(blocks).reshape((d, d) + domain.shape))


def export_slice_csv(path, field: ScalarField, fixed=None) -> Path:
    """Write a 1D or 2D slice of ``field`` as CSV.

    ``fixed`` maps axis index to node index for the axes that are held fixed;
    the remaining (at most two) axes are exported with their coordinates.
    """
    domain = field.domain
    fixed = dict(fixed or {})
    free = [k for k in range(domain.dimension) if k not in fixed]
    if len(free) > 2:
        raise ConfigurationError("export_slice_csv supports 1D or 2D slices only")
    index = tuple(fixed.get(k, slice(None)) for k in range(domain.dimension))
    data = field.values[index]
    x = domain.coordinates
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k + 1}" for k in free] + ["value"])
        for idx in np.ndindex(data.shape):
            writer.writerow([format_float(x[i]) for i in idx] + [format_float(data[idx])])
    return path
