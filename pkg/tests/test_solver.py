from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from kolmolab.approximation import default_test_functions
from kolmolab.exceptions import ConfigurationError, SingularityError
from kolmolab.fields import DriftSpec, MatrixSpec, make_drift, make_matrix
from kolmolab.grid import ScalarField, build_domain
from kolmolab.solver import (
    KolmogorovSolver,
    LinearSystem,
    PecletWarning,
    assemble,
    coercivity_witness,
    solve_dirichlet,
    weak_residual,
)


def system_for(domain, drift_spec=DriftSpec.zero(), matrix_spec=MatrixSpec.identity(), form="divergence"):
    a = make_matrix(matrix_spec, domain)
    drift = make_drift(drift_spec, domain)
    return assemble(a, drift.b, drift.div_plus, drift.div_minus, form=form), a, drift


@pytest.mark.parametrize("method", ["direct", "iterative"])
def test_affine_reproduced(mid3, method):
    system, _, _ = system_for(mid3)
    assert system.symmetric
    g = mid3.sample(lambda x, y, z: x)
    res = solve_dirichlet(system, g, method=method)
    tol = 1e-12 if method == "direct" else 1e-8
    assert np.abs(res.u.values - g.values).max() < tol
    assert res.method == ("direct" if method == "direct" else "amg-cg")


def test_anisotropic_affine_reproduced(small3):
    system, _, _ = system_for(small3, matrix_spec=MatrixSpec.diagonal(1.0, 2.0, 3.0))
    g = small3.sample(lambda x, y, z: 1 + x - 2 * y + 0.5 * z)
    res = solve_dirichlet(system, g)
    assert np.abs(res.u.values - g.values).max() < 1e-12


@pytest.mark.parametrize("form", ["divergence", "convection"])
def test_convection_second_order(form):
    # -Lap u + d_1 u = 0 has the solution exp(x_1)
    errors = []
    for n in (9, 17):
        dom = build_domain(3, 1.0, n)
        system, _, _ = system_for(dom, DriftSpec.constant((1.0, 0.0, 0.0)), form=form)
        g = dom.sample(lambda x, y, z: np.exp(x))
        errors.append(np.abs(solve_dirichlet(system, g).u.values - g.values).max())
    # measured: 1.34e-3 -> 3.44e-4
    assert errors[0] == pytest.approx(1.34e-3, rel=0.02)
    assert errors[0] / errors[1] >= 3.5


def test_nonsymmetric_iterative_matches_direct(small3):
    system, _, _ = system_for(small3, DriftSpec.smooth_bounded("rotation", 1.0))
    assert not system.symmetric
    g = small3.sample(lambda x, y, z: x * y + z)
    direct = solve_dirichlet(system, g, method="direct").u.values
    it = solve_dirichlet(system, g, method="iterative")
    assert it.method == "amg-gmres"
    assert np.abs(it.u.values - direct).max() < 1e-7


def test_m_matrix_structure(small3):
    drift = DriftSpec.hardy_pair(0.25, 0.25, (0.25, 0, 0), (-0.25, 0, 0))
    system, _, _ = system_for(small3, drift)
    A = system.matrix.tocoo()
    off = A.row != A.col
    assert A.data[off].max() <= 0
    assert system.peclet <= 2.0
    assert not system.symmetric


def test_divergence_free_rows_sum_to_zero(small3):
    system, _, _ = system_for(small3, DriftSpec.smooth_bounded("rotation", 1.0))
    assert system.row_sum_defect < 1e-12


@given(st.floats(0.0, 2.0), st.integers(0, 2**16))
def test_discrete_maximum_principle(amp, seed):
    dom = build_domain(3, 1.0, 7)
    system, _, _ = system_for(dom, DriftSpec.smooth_bounded("sine_curl", amp))
    g = ScalarField(dom, np.random.default_rng(seed).uniform(-1, 1, dom.shape))
    res = solve_dirichlet(system, g)
    gsup = np.abs(g.values).max()
    assert res.max_principle_excess <= 10 * dom.spacing**2 * gsup
    assert res.max_principle_excess == pytest.approx(0.0, abs=1e-12)


def test_peclet_warning(small3):
    with pytest.warns(PecletWarning):
        system, _, _ = system_for(small3, DriftSpec.constant((40.0, 0.0, 0.0)))
    # |b| h / a
    assert system.peclet == pytest.approx(40.0 * small3.spacing)


def test_assemble_rejects_bad_input(small3):
    a = make_matrix(MatrixSpec.identity(), small3)
    drift = make_drift(DriftSpec.zero(), small3)
    neg = ScalarField(small3, -np.ones(small3.shape))
    with pytest.raises(ValueError):
        assemble(a, drift.b, neg, drift.div_minus)
    with pytest.raises(ConfigurationError):
        assemble(a, drift.b, drift.div_plus, drift.div_minus, form="upwind")
    other = build_domain(3, 1.0, 5)
    with pytest.raises(ConfigurationError):
        assemble(a, drift.b, drift.div_plus, drift.div_minus, domain=other)


def test_solve_rejects_bad_input(small3):
    system, _, _ = system_for(small3)
    with pytest.raises(ConfigurationError):
        solve_dirichlet(system, small3.zeros(), method="magic")
    with pytest.raises(ConfigurationError):
        solve_dirichlet(system, build_domain(3, 1.0, 5).zeros())


def test_singular_system(small3):
    system, _, _ = system_for(small3)
    m = system.matrix.shape[0]
    broken = LinearSystem(small3, sp.csr_matrix((m, m)), system.coupling, system.rhs, True, "divergence")
    with pytest.raises(SingularityError):
        solve_dirichlet(broken, small3.sample(lambda x, y, z: 1 + x))


def test_weak_residual_separates_solutions(mid3):
    system, a, drift = system_for(mid3, DriftSpec.constant((1.0, 0.0, 0.0)))
    g = mid3.sample(lambda x, y, z: np.exp(x))
    tests = default_test_functions(mid3)
    u = solve_dirichlet(system, g).u
    good = weak_residual(u, a, *drift[:3], tests)
    bad = weak_residual(mid3.sample(lambda x, y, z: x * x), a, *drift[:3], tests)
    assert good < 1e-2 < bad
    with pytest.raises(ConfigurationError):
        weak_residual(u, a, *drift[:3], [mid3.sample(lambda x, y, z: 1 + 0 * x)])
    with pytest.raises(ConfigurationError):
        weak_residual(u, a, *drift[:3], [])


def test_coercivity_witness_positive(small3):
    system, _, _ = system_for(small3, DriftSpec.hardy_pair(0.25, 0.25, (0.25, 0, 0), (-0.25, 0, 0)))
    assert coercivity_witness(system) > 0
    assert coercivity_witness(system) == coercivity_witness(system)


def test_estimator(small3):
    a = make_matrix(MatrixSpec.identity(), small3)
    drift = make_drift(DriftSpec.zero(), small3)
    est = KolmogorovSolver(method="direct")
    with pytest.raises(NotFittedError):
        est.predict(small3.zeros())
    g = small3.sample(lambda x, y, z: y)
    u = est.fit(a, drift).predict(g)
    assert np.abs(u.values - g.values).max() < 1e-12
    assert est.result_.linear_residual <= 1e-10
    assert est.get_params() == {"form": "divergence", "method": "direct", "tol": None}
