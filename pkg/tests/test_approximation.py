from __future__ import annotations

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from kolmolab import approximation
from kolmolab.approximation import (
    ApproximationScheme,
    check_hypothesis,
    compact_mask,
    default_test_functions,
    run_scheme,
)
from kolmolab.exceptions import ConfigurationError, HypothesisViolation, SolveError
from kolmolab.fields import BoundarySpec, DriftSpec, MatrixSpec

HARDY = DriftSpec.hardy_pair(0.25, 0.25, (0.25, 0, 0), (-0.25, 0, 0))
G = BoundarySpec("affine", offset=2.0, slope=(1.0,))
SCHEDULE = [0.5, 0.35, 0.25]


@pytest.fixture(scope="module")
def report():
    from kolmolab.grid import build_domain

    return run_scheme(MatrixSpec.identity(), HARDY, G, SCHEDULE, build_domain(3, 1.0, 17))


def test_check_hypothesis_hardy(mid3):
    chk = check_hypothesis(HARDY, MatrixSpec.identity(), mid3)
    assert (chk.nu_plus, chk.sigma, chk.source) == (1.0, 1.0, "hardy")
    assert chk.admissible
    big = DriftSpec.hardy_pair(0.6, 0.0, (0.25, 0, 0), (-0.25, 0, 0))
    assert not check_hypothesis(big, MatrixSpec.identity(), mid3).admissible
    # a larger sigma readmits the same drift
    assert check_hypothesis(big, MatrixSpec.checkerboard(1.5, 2.0), mid3).admissible


def test_check_hypothesis_estimated(mid3):
    chk = check_hypothesis(DriftSpec.smooth_bounded("sine_curl"), MatrixSpec.identity(), mid3)
    assert chk.source == "estimated" and chk.nu_plus == 0.0


def test_refusal_carries_measurement(mid3):
    big = DriftSpec.hardy_pair(0.6, 0.0, (0.25, 0, 0), (-0.25, 0, 0))
    with pytest.raises(HypothesisViolation) as info:
        run_scheme(MatrixSpec.identity(), big, G, SCHEDULE, mid3)
    assert info.value.measured == pytest.approx(2.4)


def test_compact_mask(small3):
    # |x_i| <= 1/2 keeps 5 of 9 nodes per axis
    assert compact_mask(small3).sum() == 125


def test_default_test_functions(mid3):
    tests = default_test_functions(mid3)
    assert len(tests) == 7
    near = mid3.boundary_distance() < 2
    assert all(not t.values[near].any() for t in tests)
    assert all(t.values.max() == 1.0 for t in tests)


def test_schedule_validation(small3):
    with pytest.raises(ConfigurationError):
        run_scheme(MatrixSpec.identity(), HARDY, G, [], small3)
    with pytest.raises(ConfigurationError):
        run_scheme(MatrixSpec.identity(), HARDY, G, [0.5, 0.5], small3)


def test_report_shapes(report):
    assert report.complete
    C = report.cauchy_matrix
    assert C.shape == (3, 3)
    assert np.allclose(C, C.T) and not np.diag(C).any()
    assert len(report.w12_norms) == len(report.sup_norms) == 3
    assert report.findings == []
    assert report.metadata["companion_zero"]
    summary = report.summary()
    assert summary["nu_plus"] == 1.0 and summary["eps_schedule"] == SCHEDULE
    assert "delta_n" not in summary


def test_report_maximum_principle(report):
    h = report.solutions[0].domain.spacing
    # sup |g| = 3 on the box
    assert max(report.max_principle_excess) <= 10 * h * h * 3.0
    assert max(report.sup_norms) <= 3.0 + 1e-12


def test_report_cauchy_and_weak_residual(report):
    steps = np.diag(report.cauchy_matrix, 1)
    assert np.all(steps > 0)
    assert report.limit_weak_residual < 0.05


def test_workers_do_not_change_results(report):
    from kolmolab.grid import build_domain

    again = run_scheme(MatrixSpec.identity(), HARDY, G, SCHEDULE, build_domain(3, 1.0, 17), workers=3)
    assert np.array_equal(again.cauchy_matrix, report.cauchy_matrix)


def test_partial_report_on_failure(small3, monkeypatch):
    real = approximation.solve_dirichlet
    calls = {"n": 0}

    def flaky(system, g, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise SolveError("forced", residual=1.0)
        return real(system, g, **kwargs)

    monkeypatch.setattr(approximation, "solve_dirichlet", flaky)
    with pytest.raises(SolveError) as info:
        run_scheme(MatrixSpec.identity(), HARDY, G, [0.75, 0.5], small3)
    partial = info.value.partial_report
    assert len(partial.solutions) == 1 and not partial.complete


def test_formbound_tracking(small3):
    rep = run_scheme(MatrixSpec.identity(), HARDY, G, [0.75, 0.5], small3, estimate_formbounds=True)
    assert len(rep.per_n_formbounds) == 2
    assert len(rep.summary()["delta_n"]) == 2


def test_estimator(small3):
    est = ApproximationScheme(b_spec=HARDY, g_spec=G, eps_schedule=(0.75, 0.5))
    with pytest.raises(NotFittedError):
        est.predict()
    u = est.fit(small3).predict()
    assert u.domain == small3
    assert est.get_params()["eps_schedule"] == (0.75, 0.5)
