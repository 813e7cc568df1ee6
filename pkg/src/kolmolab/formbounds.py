"""Discrete form-bound estimators.

A nonnegative weight ``W`` is form-bounded with bound ``nu`` and companion
``c`` when ``<W phi, phi> <= nu ||grad phi||^2 + c ||phi||^2`` for all test
functions.  On the grid the test functions are interior-node vectors with zero
boundary values, so the sharp discrete ``nu`` is the top eigenvalue of the
symmetric pencil ``(M_W - c M, L)`` with lumped mass ``M`` and Dirichlet
stiffness ``L``.

The multiplicative bound ``<|b| phi, phi> <= delta ||grad phi|| ||phi|| + c ||phi||^2``
is reduced to the same machinery through the identity
``delta ||grad phi|| ||phi|| = inf_eps (delta eps / 2 ||grad phi||^2 + delta / (2 eps) ||phi||^2)``:
``delta`` is the maximum over ``eps`` of the top eigenvalue of
``(M_|b| - c M, eps/2 L + 1/(2 eps) M)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import lobpcg
from sklearn.base import BaseEstimator

from ._amg import smoothed_aggregation
from ._validation import check_nonnegative_field, check_positive
from .exceptions import ConfigurationError, ConvergenceError, DomainError
from .grid import GridDomain, ScalarField, VectorField

__all__ = [
    "FormBoundEstimate",
    "FormBoundEstimator",
    "estimate_quadratic_bound",
    "estimate_mf_delta",
    "hardy_reference",
    "stiffness_matrix",
    "default_eps_grid",
]

DENSE_LIMIT = 1500
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class FormBoundEstimate:
    bound: float
    companion: float
    eps_star: float | None = None
    rayleigh_iterations: int = 0
    residual: float = 0.0
    kind: str = "quadratic"
    grid_n: int | None = None
    eps_curve: list = field(default_factory=list)
    eps_at_edge: bool = False


def hardy_reference(d: int, kappa: float) -> float:
    """Form-bound ``4 kappa / (d - 2)`` of ``kappa (d - 2) |x - x0|^-2`` (companion 0)."""
    if d < 3:
        raise DomainError(f"the Hardy constant degenerates for d = {d} < 3")
    check_positive(kappa, "kappa", strict=False)
    return 4.0 * kappa / (d - 2)


def interior_vector(field: ScalarField) -> np.ndarray:
    mask = field.domain.interior_mask
    return field.values.ravel(order="F")[mask.ravel(order="F")]


def stiffness_matrix(domain: GridDomain) -> sp.csr_matrix:
    """Dirichlet stiffness ``h^(d-2)`` times the (2d+1)-point graph Laplacian on interior nodes."""
    m = domain.resolution - 2
    if m < 1:
        raise ConfigurationError("grid has no interior nodes")
    d = domain.dimension
    tri = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr")
    eye = sp.identity(m, format="csr")
    total = sp.csr_matrix((m**d, m**d))
    for axis in range(d):
        # x1 fastest: axis 0 is the innermost Kronecker factor
        factors = [tri if k == axis else eye for k in range(d)]
        term = factors[-1]
        for f in reversed(factors[:-1]):
            term = sp.kron(term, f, format="csr")
        total = total + term
    return (domain.spacing ** (d - 2) * total).tocsr()


def _preconditioner(B):
    return smoothed_aggregation(B.tocsr()).aspreconditioner()


def _relative_residual(A, B, vec, mu):
    Av = A @ vec
    Bv = B @ vec
    scale = np.linalg.norm(Av) + abs(mu) * np.linalg.norm(Bv)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(Av - mu * Bv) / scale)


def _top_eigenpair(A, B, x0, tol, max_iter):
    """Largest eigenpair of the symmetric pencil ``A x = mu B x``, ``B`` positive definite."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        vals, vecs = scipy.linalg.eigh(A.toarray(), B.toarray(), subset_by_index=[n - 1, n - 1])
        vec = vecs[:, 0]
        mu = float(vals[0])
        return mu, vec, 1, _relative_residual(A, B, vec, mu)
    X = np.asarray(x0, dtype=float).reshape(n, 1)
    # residual threshold for eigenvalue accuracy ~ tol (error ~ residual^2 / gap)
    target = 0.1 * math.sqrt(tol)
    scale = max(float(np.abs(A.diagonal()).max()), 1e-300)
    vals, vecs, hist = lobpcg(
        A,
        X,
        B=B,
        M=_preconditioner(B),
        largest=True,
        tol=target * scale,
        maxiter=max_iter,
        retResidualNormsHistory=True,
    )
    vec = vecs[:, 0]
    mu = float(vals[0])
    residual = _relative_residual(A, B, vec, mu)
    if residual > target:
        raise ConvergenceError(
            f"generalized eigen-iteration stopped after {len(hist)} iterations "
            f"with relative residual {residual:.3e} > {target:.1e}",
            residual=residual,
        )
    return mu, vec, len(hist), residual


def _start_vector(n, random_state):
    rng = np.random.default_rng(random_state)
    return np.abs(rng.standard_normal(n)) + 1.0


def _weight_matrix(W: ScalarField, companion: float):
    w = interior_vector(W) - companion
    return sp.diags(W.domain.cell_volume * w, format="csr"), w


def estimate_quadratic_bound(
    W: ScalarField, companion: float = 0.0, *, tol: float = 1e-8, max_iter: int = 10_000, random_state=0
) -> FormBoundEstimate:
    """Sharp discrete form-bound of a nonnegative potential.

    Parameters
    ----------
    W : ScalarField
        Potential, ``W >= 0`` at every node.
    companion : float
        The constant multiplying ``||phi||^2``; an input, not estimated.

    Returns
    -------
    FormBoundEstimate
        ``bound`` is ``max(mu_top, 0)``.
    """
    check_nonnegative_field(W, "W")
    companion = check_positive(companion, "companion", strict=False)
    domain = W.domain
    A, w = _weight_matrix(W, companion)
    if w.size == 0 or w.max() <= 0:
        return FormBoundEstimate(0.0, companion, kind="quadratic", grid_n=domain.resolution)
    L = stiffness_matrix(domain)
    mu, _, iters, res = _top_eigenpair(A, L, _start_vector(L.shape[0], random_state), tol, max_iter)
    return FormBoundEstimate(
        max(mu, 0.0), companion, None, iters, res, kind="quadratic", grid_n=domain.resolution
    )


def default_eps_grid(domain: GridDomain, points: int = 25) -> np.ndarray:
    """Log-spaced ``eps`` values on ``[h, 2L]``."""
    return np.geomspace(domain.spacing, 2.0 * domain.half_extent, points)


def estimate_mf_delta(
    absb: ScalarField,
    companion: float = 0.0,
    eps_grid=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    random_state=0,
    rel_width: float = 1e-3,
    max_widen: int = 3,
) -> FormBoundEstimate:
    """Sharp discrete multiplicative form-bound ``delta`` of ``|b|``.

    The coarse ``eps_grid`` (default: 25 log points on ``[h, 2L]``) is scanned,
    widened geometrically when the maximizer sits on an edge, and the
    maximizer is then refined by golden-section search in ``log eps``.
    """
    check_nonnegative_field(absb, "|b|")
    companion = check_positive(companion, "companion", strict=False)
    domain = absb.domain
    if eps_grid is None:
        eps_grid = default_eps_grid(domain)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size == 0:
        raise ConfigurationError("eps_grid must not be empty")
    if np.any(eps_grid <= 0) or np.any(np.diff(eps_grid) <= 0):
        raise ConfigurationError("eps_grid must be positive and strictly increasing")

    A, w = _weight_matrix(absb, companion)
    if w.size == 0 or w.max() <= 0:
        return FormBoundEstimate(
            0.0, companion, float(eps_grid[len(eps_grid) // 2]), 0, 0.0, "multiplicative", domain.resolution
        )
    L = stiffness_matrix(domain)
    M = sp.identity(L.shape[0], format="csr") * domain.cell_volume
    state = {"x": _start_vector(L.shape[0], random_state), "iters": 0, "res": 0.0}
    cache = {}

    def mu_of(eps):
        key = float(eps)
        if key not in cache:
            B = (0.5 * eps) * L + (0.5 / eps) * M
            mu, vec, iters, res = _top_eigenpair(A, B, state["x"], tol, max_iter)
            state["x"] = vec
            state["iters"] += iters
            state["res"] = max(state["res"], res)
            cache[key] = mu
        return cache[key]

    grid = list(eps_grid)
    values = [mu_of(e) for e in grid]
    widened = 0
    ratio = grid[-1] / grid[-2] if len(grid) > 1 else 2.0
    while len(grid) > 1 and widened < max_widen:
        k = int(np.argmax(values))
        if k == 0:
            extra = [grid[0] / ratio**j for j in range(4, 0, -1)]
            grid = extra + grid
            values = [mu_of(e) for e in extra] + values
        elif k == len(grid) - 1:
            extra = [grid[-1] * ratio**j for j in range(1, 5)]
            grid = grid + extra
            values = values + [mu_of(e) for e in extra]
        else:
            break
        widened += 1
    k = int(np.argmax(values))
    at_edge = len(grid) > 1 and k in (0, len(grid) - 1)

    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, len(grid) - 1)])
    best_eps, best_mu = grid[k], values[k]
    if hi > lo:
        a, b = lo, hi
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc, fd = mu_of(math.exp(c)), mu_of(math.exp(d))
        while math.exp(b - a) - 1.0 > rel_width:
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - _GOLDEN * (b - a)
                fc = mu_of(math.exp(c))
            else:
                a, c, fc = c, d, fd
                d = a + _GOLDEN * (b - a)
                fd = mu_of(math.exp(d))
        for e, v in ((math.exp(c), fc), (math.exp(d), fd)):
            if v > best_mu:
                best_eps, best_mu = e, v

    curve = sorted(cache.items())
    return FormBoundEstimate(
        max(best_mu, 0.0),
        companion,
        float(best_eps),
        state["iters"],
        state["res"],
        kind="multiplicative",
        grid_n=domain.resolution,
        eps_curve=curve,
        eps_at_edge=bool(at_edge),
    )


class FormBoundEstimator(BaseEstimator):
    """Estimator wrapper around the form-bound routines.

    Parameters
    ----------
    kind : {"potential", "form_bounded", "multiplicative"}
        ``potential`` bounds a scalar weight (e.g. a divergence part),
        ``form_bounded`` bounds ``|b|^2`` and ``multiplicative`` bounds ``|b|``
        in the multiplicative sense.
    companion : float
    eps_points : int
        Size of the default coarse ``eps`` grid (multiplicative only).

    Attributes
    ----------
    estimate_ : FormBoundEstimate
    bound_ : float
    """

    def __init__(self, kind="potential", companion=0.0, eps_points=25, tol=1e-8, max_iter=10_000, random_state=0):
        self.kind = kind
        self.companion = companion
        self.eps_points = eps_points
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _weight(self, X):
        if isinstance(X, VectorField):
            mag = X.magnitude()
            return mag.with_values(mag.values**2) if self.kind == "form_bounded" else mag
        if isinstance(X, ScalarField):
            if self.kind == "form_bounded":
                return X.with_values(X.values**2)
            return X
        raise ConfigurationError(f"expected a ScalarField or VectorField, got {type(X).__name__}")

    def fit(self, X, y=None):
        if self.kind not in ("potential", "form_bounded", "multiplicative"):
            raise ConfigurationError(f"unknown form-bound kind {self.kind!r}")
        W = self._weight(X)
        opts = dict(tol=self.tol, max_iter=self.max_iter, random_state=self.random_state)
        if self.kind == "multiplicative":
            grid = default_eps_grid(W.domain, self.eps_points)
            self.estimate_ = estimate_mf_delta(W, self.companion, grid, **opts)
        else:
            self.estimate_ = estimate_quadratic_bound(W, self.companion, **opts)
        self.bound_ = self.estimate_.bound
        return self
