"""Finite-difference Dirichlet solver for ``-div(a grad u) + b . grad u = 0``.

Two discretizations are assembled on the full grid and restricted to interior
rows:

``divergence``
    the weak form ``<a grad u, grad phi> - <b u, grad phi> - <(div b) u, phi>``,
    i.e. ``-div_h(a grad_h u) + div_h(b u) - (div b) u`` with face-averaged
    coefficients and centered fluxes ``b_f (u_p + u_q) / 2``;
``convection``
    ``b . grad u`` directly with centered differences.

When the supplied divergence parts reproduce the central-difference divergence
of ``b`` exactly, the divergence form has zero row sums and is an M-matrix for
cell Peclet numbers ``|b| h / a <= 2``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from ._amg import smoothed_aggregation
from ._validation import check_nonnegative_field, check_same_domain
from .exceptions import ConfigurationError, SingularityError, SolveError
from .grid import GridDomain, MatrixField, ScalarField, VectorField, gradient, integrate, w12_norm

__all__ = [
    "LinearSystem",
    "SolveResult",
    "KolmogorovSolver",
    "PecletWarning",
    "assemble",
    "solve_dirichlet",
    "weak_residual",
    "bilinear_form",
    "coercivity_witness",
]

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 8_000


class PecletWarning(UserWarning):
    """Centered convection with cell Peclet number above 2."""


@dataclass
class LinearSystem:
    domain: GridDomain
    matrix: sp.csr_matrix
    coupling: sp.csr_matrix
    rhs: np.ndarray
    symmetric: bool
    form: str
    peclet: float = 0.0
    row_sum_defect: float = 0.0


@dataclass
class SolveResult:
    u: ScalarField
    linear_residual: float
    iterations: int
    max_principle_excess: float
    method: str = "direct"
    extra: dict = field(default_factory=dict)


def _faces(domain: GridDomain, axis: int):
    """Flat indices ``(p, q)`` of all node pairs ``q = p + e_axis``."""
    n = domain.resolution
    idx = np.arange(domain.node_count).reshape(domain.shape, order="F")
    lo = [slice(None)] * domain.dimension
    hi = [slice(None)] * domain.dimension
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    return idx[tuple(lo)].ravel(order="F"), idx[tuple(hi)].ravel(order="F")


def _flat(a):
    return np.asarray(a).ravel(order="F")


def _derivative_matrix(domain: GridDomain, axis: int) -> sp.csr_matrix:
    """Full-grid central difference along ``axis`` (second-order one-sided at the ends)."""
    n = domain.resolution
    h = domain.spacing
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1], D[i, i + 1] = -0.5 / h, 0.5 / h
    D[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
    D[n - 1, n - 3 : n] = np.array([0.5, -2.0, 1.5]) / h
    D = D.tocsr()
    eye = sp.identity(n, format="csr")
    factors = [D if k == axis else eye for k in range(domain.dimension)]
    term = factors[-1]
    for f in reversed(factors[:-1]):
        term = sp.kron(term, f, format="csr")
    return term


def assemble(
    a: MatrixField,
    b: VectorField,
    divb_plus: ScalarField,
    divb_minus: ScalarField,
    domain: GridDomain | None = None,
    form: str = "divergence",
) -> LinearSystem:
    """Assemble the interior system of the Dirichlet problem.

    Raises
    ------
    ConfigurationError
        On a grid mismatch or an unknown ``form``.
    DomainError
        If a divergence part has a negative node.
    """
    if form not in ("divergence", "convection"):
        raise ConfigurationError(f"unknown form {form!r}; expected 'divergence' or 'convection'")
    grid = check_same_domain(a, b, divb_plus, divb_minus)
    if domain is not None and domain != grid:
        raise ConfigurationError("coefficient fields do not live on the requested domain")
    domain = grid
    check_nonnegative_field(divb_plus, "divb_plus")
    check_nonnegative_field(divb_minus, "divb_minus")
    if domain.resolution < 3:
        raise ConfigurationError("need at least one interior node per axis")
    h = domain.spacing
    N = domain.node_count
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    peclet = 0.0
    for k in range(domain.dimension):
        p, q = _faces(domain, k)
        akk = _flat(a.entries[k, k])
        af = 0.5 * (akk[p] + akk[q])
        c = af / h**2
        add(p, p, c)
        add(p, q, -c)
        add(q, q, c)
        add(q, p, -c)
        bk = _flat(b.components[k])
        bf = 0.5 * (bk[p] + bk[q])
        if np.any(bf):
            peclet = max(peclet, float(np.max(np.abs(bf) * h / af)))
        if form == "divergence":
            w = bf / (2 * h)
            add(p, p, w)
            add(p, q, w)
            add(q, p, -w)
            add(q, q, -w)
        else:
            add(p, q, bk[p] / (2 * h))
            add(q, p, -bk[q] / (2 * h))
    if not a.is_diagonal:
        D = [_derivative_matrix(domain, k) for k in range(domain.dimension)]
        cross = sp.csr_matrix((N, N))
        for i in range(domain.dimension):
            for j in range(domain.dimension):
                if i != j and np.any(a.entries[i, j]):
                    cross = cross - D[i] @ sp.diags(_flat(a.entries[i, j])) @ D[j]
    divb = _flat(divb_plus.values) - _flat(divb_minus.values)
    if form == "divergence":
        add(np.arange(N), np.arange(N), -divb)
    full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    if not a.is_diagonal:
        full = (full + cross).tocsr()
    interior = _flat(domain.interior_mask)
    I = np.flatnonzero(interior)
    B = np.flatnonzero(~interior)
    A_II = full[I][:, I].tocsr()
    A_IB = full[I][:, B].tocsr()
    symmetric = not np.any(b.components) and not np.any(divb)
    if peclet > 2.0:
        warnings.warn(
            f"cell Peclet number {peclet:.3g} exceeds 2; centered convection may oscillate",
            PecletWarning,
            stacklevel=2,
        )
    row_sum = np.asarray(full[I].sum(axis=1)).ravel()
    return LinearSystem(
        domain=domain,
        matrix=A_II,
        coupling=A_IB,
        rhs=np.zeros(I.size),
        symmetric=bool(symmetric),
        form=form,
        peclet=peclet,
        row_sum_defect=float(np.abs(row_sum).max()) if row_sum.size else 0.0,
    )


def _iterative(A, rhs, symmetric, tol):
    counter = {"n": 0}

    def callback(*_):
        counter["n"] += 1

    if symmetric:
        ml = smoothed_aggregation(A)
        residuals = []
        x = ml.solve(rhs, tol=tol * 0.1, accel="cg", maxiter=500, residuals=residuals)
        return x, len(residuals), "amg-cg"
    ml = smoothed_aggregation(A, symmetry="nonsymmetric")
    M = ml.aspreconditioner()
    x, info = spla.gmres(A, rhs, M=M, rtol=tol * 0.1, atol=0.0, restart=50, maxiter=200, callback=callback,
                         callback_type="pr_norm")
    if info < 0:
        raise SolveError(f"GMRES breakdown (info={info})")
    return x, counter["n"], "amg-gmres"


def solve_dirichlet(system: LinearSystem, g: ScalarField, *, method="auto", tol=None) -> SolveResult:
    """Solve with boundary values taken from the trace of ``g``.

    ``method`` is ``direct`` (sparse LU, residual <= 1e-10), ``iterative``
    (AMG-preconditioned Krylov, residual <= 1e-8) or ``auto``.
    """
    domain = system.domain
    if g.domain != domain:
        raise ConfigurationError("boundary datum lives on a different grid")
    interior = _flat(domain.interior_mask)
    gflat = _flat(g.values)
    gB = gflat[~interior]
    rhs = system.rhs - system.coupling @ gB
    A = system.matrix
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_LIMIT else "iterative"
    if method == "direct":
        tol = 1e-10 if tol is None else tol
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = spla.spsolve(A.tocsc(), rhs)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SingularityError(f"sparse LU failed: {exc}") from exc
        iterations, label = 1, "direct"
    elif method == "iterative":
        tol = 1e-8 if tol is None else tol
        x, iterations, label = _iterative(A, rhs, system.symmetric, tol)
    else:
        raise ConfigurationError(f"unknown solve method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SingularityError("solution contains non-finite values")
    denom = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(A @ x - rhs) / (denom if denom > 0 else 1.0))
    if residual > tol:
        raise SolveError(f"relative residual {residual:.3e} exceeds {tol:.1e}", residual=residual)
    full = gflat.copy()
    full[interior] = x
    u = ScalarField(domain, full.reshape(domain.shape, order="F"))
    excess = max(float(u.values.max() - gB.max()), float(gB.min() - u.values.min()), 0.0)
    return SolveResult(u, residual, iterations, excess, label)


def bilinear_form(u, phi, a, b, divb_plus, divb_minus) -> float:
    """``<a grad u, grad phi> - <b u, grad phi> - <(div b) u, phi>`` by grid quadrature."""
    gu = gradient(u).components
    gp = gradient(phi).components
    flux = np.einsum("ij...,j...->i...", a.entries, gu)
    term = np.sum(flux * gp, axis=0)
    term -= u.values * np.sum(b.components * gp, axis=0)
    term -= (divb_plus.values - divb_minus.values) * u.values * phi.values
    return integrate(term, u.domain)


def weak_residual(u, a, b, divb_plus, divb_minus, test_functions) -> float:
    """Largest normalized weak-form defect over compactly supported test functions."""
    check_same_domain(u, a, b, divb_plus, divb_minus, *test_functions)
    if not test_functions:
        raise ConfigurationError("need at least one test function")
    near_boundary = u.domain.boundary_distance() < 2
    unorm = w12_norm(u)
    worst = 0.0
    for phi in test_functions:
        if np.any(phi.values[near_boundary] != 0):
            raise ConfigurationError("test function does not vanish near the boundary")
        denom = w12_norm(phi) * unorm
        if denom == 0:
            continue
        worst = max(worst, abs(bilinear_form(u, phi, a, b, divb_plus, divb_minus)) / denom)
    return worst


def coercivity_witness(system: LinearSystem, samples=100, seed=0) -> float:
    """Smallest Rayleigh quotient of the symmetric part over random vectors."""
    rng = np.random.default_rng(seed)
    A = system.matrix
    S = 0.5 * (A + A.T)
    X = rng.standard_normal((A.shape[0], samples))
    num = np.einsum("ij,ij->j", X, S @ X)
    den = np.einsum("ij,ij->j", X, X)
    return float(np.min(num / den))


class KolmogorovSolver(BaseEstimator):
    """Estimator-style front end: ``fit`` assembles, ``predict`` solves.

    Parameters
    ----------
    form : {"divergence", "convection"}
    method : {"auto", "direct", "iterative"}
    tol : float, optional

    Attributes
    ----------
    system_ : LinearSystem
    result_ : SolveResult
        Set by the last call to :meth:`predict`.
    """

    def __init__(self, form="divergence", method="auto", tol=None):
        self.form = form
        self.method = method
        self.tol = tol

    def fit(self, a, drift):
        b, plus, minus = drift[0], drift[1], drift[2]
        self.system_ = assemble(a, b, plus, minus, form=self.form)
        return self

    def predict(self, g):
        if not hasattr(self, "system_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("KolmogorovSolver is not fitted yet")
        self.result_ = solve_dirichlet(self.system_, g, method=self.method, tol=self.tol)
        return self.result_.u

