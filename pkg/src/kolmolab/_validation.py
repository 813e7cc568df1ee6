"""Input validation helpers used by estimators and functional entry points."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigurationError, DomainError


def check_positive(value, name, *, strict=True):
    """Return ``value`` as float after checking its sign."""
    if not isinstance(value, numbers.Real):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ConfigurationError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {value}")
    return value


def check_finite(array, name):
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ConfigurationError(f"{name} contains non-finite values")
    return array


def check_nonnegative_field(field, name):
    """Raise unless every nodal value of ``field`` is >= 0."""
    values = field.values
    if np.any(values < 0):
        raise DomainError(f"{name} must be nonnegative (min = {values.min():.3e})")
    return field


def check_same_domain(*fields):
    """Raise if the given fields do not live on one and the same grid."""
    fields = [f for f in fields if f is not None]
    if not fields:
        return None
    domain = fields[0].domain
    for f in fields[1:]:
        if f.domain != domain:
            raise ConfigurationError("fields are defined on different grids")
    return domain


def check_point(domain, center):
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.shape != (domain.dimension,):
        raise ConfigurationError(
            f"point must have {domain.dimension} coordinates, got {center.shape[0]}"
        )
    return center
