"""Smooth-approximation pipeline for the Dirichlet problem with singular drift.

For every ``eps_n`` in a decreasing schedule the coefficients are mollified,
the Dirichlet problem with boundary datum ``g_n`` is solved, and the sequence
``u_n`` is checked for uniform bounds and Cauchy behavior in ``L^2(K)`` on the
concentric box ``K`` of half the extent.  The last iterate stands in for the
limit and is tested against the unmollified coefficients in the weak form.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .cutoff import eta
from .exceptions import ConfigurationError, HypothesisViolation, SolveError
from .fields import BoundarySpec, DriftSpec, MatrixSpec, make_boundary, make_drift, make_matrix
from .formbounds import default_eps_grid, estimate_mf_delta, estimate_quadratic_bound, hardy_reference
from .grid import GridDomain, ScalarField, l2_norm, w12_norm
from .mollify import friedrichs_kernel, mollify_drift, mollify_field
from .solver import assemble, solve_dirichlet, weak_residual

__all__ = [
    "ApproximationReport",
    "ApproximationScheme",
    "HypothesisCheck",
    "check_hypothesis",
    "compact_mask",
    "default_test_functions",
    "run_scheme",
]

logger = logging.getLogger(__name__)


@dataclass
class HypothesisCheck:
    nu_plus: float
    sigma: float
    source: str

    @property
    def admissible(self) -> bool:
        return self.nu_plus < 2.0 * self.sigma


@dataclass
class ApproximationReport:
    eps_schedule: list
    w12_norms: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    max_principle_excess: list = field(default_factory=list)
    cauchy_matrix: np.ndarray | None = None
    limit_weak_residual: float | None = None
    per_n_formbounds: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    hypothesis: HypothesisCheck | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.solutions) == len(self.eps_schedule)

    def summary(self) -> dict:
        out = {
            "eps_schedule": list(self.eps_schedule),
            "w12_norms": list(self.w12_norms),
            "sup_norms": list(self.sup_norms),
            "max_principle_excess": list(self.max_principle_excess),
            "limit_weak_residual": self.limit_weak_residual,
            "findings": list(self.findings),
            "metadata": dict(self.metadata),
        }
        if self.cauchy_matrix is not None:
            out["cauchy_matrix"] = self.cauchy_matrix.tolist()
        if self.hypothesis is not None:
            out["nu_plus"] = self.hypothesis.nu_plus
            out["sigma"] = self.hypothesis.sigma
            out["nu_plus_source"] = self.hypothesis.source
        if self.per_n_formbounds:
            out["delta_n"] = [e.bound for e in self.per_n_formbounds]
        return out


def compact_mask(domain: GridDomain) -> np.ndarray:
    """Nodes of the concentric box of half the extent."""
    return np.all(np.abs(np.stack(domain.mesh)) <= 0.5 * domain.half_extent + 1e-12, axis=0)


def check_hypothesis(b_spec: DriftSpec, a_spec: MatrixSpec, domain: GridDomain, companion=0.0) -> HypothesisCheck:
    """Measure ``nu_+`` for ``(div b)_+`` and compare against ``2 sigma``.

    The Hardy pair uses the closed form ``4 kappa_+ / (d - 2)``; every other
    drift kind gets the discrete estimate of its positive divergence part.
    """
    if b_spec.kind == "hardy_pair":
        nu = hardy_reference(domain.dimension, b_spec.kappa_plus)
        source = "hardy"
    else:
        plus = make_drift(b_spec, domain).div_plus
        nu = estimate_quadratic_bound(plus, companion).bound if np.any(plus.values) else 0.0
        source = "estimated"
    return HypothesisCheck(float(nu), float(a_spec.sigma), source)


def default_test_functions(domain: GridDomain) -> list[ScalarField]:
    """Cut-offs centered at the origin and at ``+-L/3`` along every axis."""
    L = domain.half_extent
    centers = [np.zeros(domain.dimension)]
    for k in range(domain.dimension):
        for sign in (1.0, -1.0):
            c = np.zeros(domain.dimension)
            c[k] = sign * L / 3.0
            centers.append(c)
    return [eta(L / 6.0, L / 3.0, domain, c)[0] for c in centers]


def _workers(requested):
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("KOLMOLAB_THREADS")
    return max(1, int(env)) if env else 1


def _theorem3_metadata(b_spec, companion):
    return {
        "companion_zero": companion == 0.0,
        "drift_locally_integrable": b_spec.kind in ("zero", "constant", "smooth_bounded", "hardy_pair"),
        "boundary_smooth": True,
    }


def run_scheme(
    a_spec: MatrixSpec,
    b_spec: DriftSpec,
    g_spec: BoundarySpec,
    eps_schedule,
    domain: GridDomain,
    *,
    form: str = "divergence",
    method: str = "auto",
    companion: float = 0.0,
    estimate_formbounds: bool = False,
    test_functions=None,
    workers=None,
) -> ApproximationReport:
    """Run the approximation scheme along ``eps_schedule``.

    Raises
    ------
    HypothesisViolation
        If ``nu_+ >= 2 sigma``; the measured ``nu_+`` is on ``exc.measured``.
    SolveError
        If a solve fails; the partial report is on ``exc.partial_report``.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule:
        raise ConfigurationError("eps_schedule is empty")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ConfigurationError("eps_schedule must be strictly decreasing")
    check = check_hypothesis(b_spec, a_spec, domain, companion)
    if not check.admissible:
        raise HypothesisViolation(
            f"nu_+ = {check.nu_plus:.6g} >= 2 sigma = {2 * check.sigma:.6g}: "
            "the positive part of div b is too large for the theory",
            measured=check.nu_plus,
        )
    kernels = [friedrichs_kernel(e, domain) for e in eps_schedule]
    a = make_matrix(a_spec, domain)
    drift = make_drift(b_spec, domain)
    g = make_boundary(g_spec, domain)
    report = ApproximationReport(eps_schedule, hypothesis=check)
    report.metadata = _theorem3_metadata(b_spec, companion)
    h = domain.spacing
    gsup = float(np.abs(g.values).max())

    def job(m):
        b_n = mollify_drift(drift, m)
        a_n = mollify_field(a, m, boundary="renormalized")
        g_n = mollify_field(g, m, boundary="renormalized")
        system = assemble(a_n, b_n.b, b_n.div_plus, b_n.div_minus, form=form)
        result = solve_dirichlet(system, g_n, method=method)
        bound = None
        if estimate_formbounds:
            bound = estimate_mf_delta(b_n.b.magnitude(), companion, default_eps_grid(domain))
        return result, bound

    results = []
    with ThreadPoolExecutor(max_workers=_workers(workers)) as pool:
        futures = [pool.submit(job, m) for m in kernels]
        for eps, fut in zip(eps_schedule, futures):
            try:
                results.append(fut.result())
            except SolveError as exc:
                for f in futures:
                    f.cancel()
                _fill(report, results, gsup, h)
                exc.partial_report = report
                raise
    _fill(report, results, gsup, h)

    K = compact_mask(domain)
    n = len(report.solutions)
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            diff = ScalarField(domain, report.solutions[i].values - report.solutions[j].values)
            C[i, j] = C[j, i] = l2_norm(diff, K)
    report.cauchy_matrix = C
    _cauchy_findings(report)
    tests = default_test_functions(domain) if test_functions is None else list(test_functions)
    report.limit_weak_residual = weak_residual(
        report.solutions[-1], a, drift.b, drift.div_plus, drift.div_minus, tests
    )
    return report


def _fill(report, results, gsup, h):
    for k, (result, bound) in enumerate(results):
        u = result.u
        report.solutions.append(u)
        report.w12_norms.append(w12_norm(u))
        sup = float(np.abs(u.values).max())
        report.sup_norms.append(sup)
        report.max_principle_excess.append(result.max_principle_excess)
        if bound is not None:
            report.per_n_formbounds.append(bound)
        if sup > gsup * (1.0 + 10.0 * h * h):
            report.findings.append(f"n={k}: sup|u_n| = {sup:.6g} exceeds the maximum-principle budget")
    norms = np.asarray(report.w12_norms)
    if norms.size and not np.all(np.isfinite(norms)):
        report.findings.append("non-finite W^{1,2} norm")
    elif norms.size and norms.max() > 2.0 * np.median(norms):
        report.findings.append("W^{1,2} norms not uniformly bounded (max > 2 x median)")


def _cauchy_findings(report):
    C = report.cauchy_matrix
    steps = np.diag(C, 1)
    for k in range(1, steps.size):
        if steps[k] > 1.1 * steps[k - 1]:
            report.findings.append(
                f"consecutive difference {k}->{k + 1} grows beyond 10% of the previous one"
            )


class ApproximationScheme(BaseEstimator):
    """Estimator wrapper around :func:`run_scheme`; ``fit`` takes the grid."""

    def __init__(
        self,
        a_spec=None,
        b_spec=None,
        g_spec=None,
        eps_schedule=(0.25, 0.125),
        form="divergence",
        method="auto",
        companion=0.0,
    ):
        self.a_spec = a_spec
        self.b_spec = b_spec
        self.g_spec = g_spec
        self.eps_schedule = eps_schedule
        self.form = form
        self.method = method
        self.companion = companion

    def fit(self, X, y=None):
        domain = X if isinstance(X, GridDomain) else X.domain
        self.report_ = run_scheme(
            self.a_spec or MatrixSpec.identity(),
            self.b_spec or DriftSpec.zero(),
            self.g_spec or BoundarySpec(),
            self.eps_schedule,
            domain,
            form=self.form,
            method=self.method,
            companion=self.companion,
        )
        return self

    def predict(self, X=None):
        """Last iterate of the fitted scheme."""
        if not hasattr(self, "report_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("ApproximationScheme is not fitted yet")
        return self.report_.solutions[-1]
