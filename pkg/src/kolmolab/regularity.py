"""Measured constants of the local regularity estimates.

Every estimate of the form ``lhs <= K rhs`` is reported as the ratio
``lhs / rhs``, so that "holds with a generic constant" becomes "the ratio
stays bounded across a sweep".  Ball integrals use grid quadrature over the
nodes strictly inside the ball; ball averages divide by the discrete measure
of that node set.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_point, check_positive
from .exceptions import ConfigurationError, DegenerateInputError, DomainError, HypothesisViolation
from .grid import ScalarField, ball_mask, gradient

__all__ = [
    "HolderFit",
    "GradientProfile",
    "RecurrenceBound",
    "RegularityReport",
    "RegularityProfiler",
    "BATTERIES",
    "caccioppoli_ratio",
    "sup_bound_check",
    "harnack_quotient",
    "holder_fit",
    "default_holder_radii",
    "gradient_lp_profile",
    "stable_gradient_exponent",
    "log_bmo_check",
    "crossproduct_check",
    "caccioppoli_recurrence_bound",
    "degiorgi_threshold",
    "degiorgi_lemma",
    "profile",
]

BATTERIES = ("caccioppoli", "harnack", "holder", "gradlp", "logbmo", "crossprod", "lemmas")


def _ball(u: ScalarField, center, radius, *, require_inside=True):
    domain = u.domain
    center = check_point(domain, center)
    radius = check_positive(radius, "radius")
    if require_inside and not domain.contains_ball(center, radius):
        raise DomainError(
            f"B_{radius:g}({center.tolist()}) is not at distance >= 2h from the boundary"
        )
    mask = ball_mask(domain, center, radius)
    if not mask.any():
        raise DomainError(f"B_{radius:g}({center.tolist()}) contains no grid node")
    return center, mask


def _integral(values, mask, domain):
    return float(domain.cell_volume * np.sum(values[mask]))


def _measure(mask, domain):
    return float(domain.cell_volume * np.count_nonzero(mask))


def _grad_sq(u: ScalarField):
    return np.sum(gradient(u).components ** 2, axis=0)


def caccioppoli_ratio(u: ScalarField, c, center, r, R) -> float:
    """``(R - r)^2 <|grad v|^2 1_{B_r}> / <v^2 1_{B_R}>`` for ``v = (u - c)_+``.

    Raises
    ------
    DegenerateInputError
        If ``v`` vanishes on ``B_R``.
    """
    if not (0 < r < R <= 1):
        raise ConfigurationError(f"need 0 < r < R <= 1, got r={r}, R={R}")
    center, big = _ball(u, center, R)
    small = ball_mask(u.domain, center, r)
    v = ScalarField(u.domain, np.maximum(u.values - c, 0.0))
    den = _integral(v.values**2, big, u.domain)
    if den <= 0:
        raise DegenerateInputError("(u - c)_+ vanishes on B_R")
    num = _integral(_grad_sq(v), small, u.domain)
    return (R - r) ** 2 * num / den


def sup_bound_check(u: ScalarField, center, R, theta=1.2, p=None) -> float:
    """``sup_{B_{R/2}} u_+`` over the ``L^{2 theta}`` average of ``u_+`` on ``B_R``.

    ``p`` overrides the exponent ``2 theta``.  Returns 0 when ``u_+`` vanishes
    on ``B_R``.
    """
    d = u.domain.dimension
    upper = d / (d - 2) if d > 2 else math.inf
    if p is None:
        if not (1 < theta < upper):
            raise ConfigurationError(f"theta must lie in (1, {upper:g}), got {theta}")
        p = 2.0 * theta
    p = check_positive(p, "p")
    center, big = _ball(u, center, R)
    half = ball_mask(u.domain, center, R / 2)
    up = np.maximum(u.values, 0.0)
    if not np.any(up[big]):
        return 0.0
    avg = _integral(up**p, big, u.domain) / _measure(big, u.domain)
    return float(up[half].max()) / avg ** (1.0 / p)


def harnack_quotient(u: ScalarField, center, R) -> float:
    """``sup / inf`` of ``u`` over ``B_{R/2}``; ``u`` must be positive on ``B_R``."""
    center, big = _ball(u, center, R)
    if u.values[big].min() <= 0:
        raise HypothesisViolation(
            f"u must be positive on B_R (min = {u.values[big].min():.3e})", measured=float(u.values[big].min())
        )
    half = ball_mask(u.domain, center, R / 2)
    vals = u.values[half]
    return float(vals.max() / vals.min())


@dataclass
class HolderFit:
    gamma: float
    K: float
    clamped: bool = False
    degenerate: bool = False
    radii: list = field(default_factory=list)
    ratios: list = field(default_factory=list)


def default_holder_radii(domain, R, count=5):
    """Geometric radii from ``R/4`` down to ``max(R/64, 2h)``, snapped to multiples of ``h``.

    These are the dyadic radii ``R/4 * 2^-k``, ``k < count``, when the grid
    resolves them; otherwise the ratio is compressed so that the smallest radius
    is ``2h``.  Snapping keeps the closed node balls free of quantization bias.
    """
    h = domain.spacing
    top = R / 4
    floor = max(top * 2.0 ** -(count - 1), 2 * h)
    if floor >= top:
        raise ConfigurationError(f"R/4 = {top:g} is not above 2h = {2 * h:g}")
    steps = np.unique(np.round(np.geomspace(top, floor, count) / h).astype(int))
    steps = steps[(steps >= 2) & (steps * h < R / 2)]
    return [float(k * h) for k in steps[::-1]]


def _closed_ball(domain, center, radius):
    return domain.distance_to(center) <= radius + 1e-9 * domain.spacing


def holder_fit(u: ScalarField, center, radii=None, R=1.0) -> HolderFit:
    """Least-squares power law ``osc_{B_r} / osc_{B_{R/2}} = K (r/R)^gamma``.

    Oscillations are taken over closed node balls ``|x - center| <= r``.

    ``gamma`` is clamped to ``(0, 1]``; ``clamped`` reports whether that
    happened.  A vanishing reference oscillation gives ``gamma = 1, K = 0``
    with ``degenerate`` set.
    """
    center, _ = _ball(u, center, R)
    radii = default_holder_radii(u.domain, R) if radii is None else [float(r) for r in radii]
    if len(radii) < 3:
        raise ConfigurationError(f"need at least 3 radii, got {len(radii)}")
    if any(not (0 < r < R / 2) for r in radii):
        raise ConfigurationError("radii must lie in (0, R/2)")
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ConfigurationError("radii must be strictly decreasing")
    ref_mask = _closed_ball(u.domain, center, R / 2)
    ref = float(np.ptp(u.values[ref_mask]))
    if ref <= 0:
        return HolderFit(1.0, 0.0, degenerate=True, radii=radii)
    ratios = []
    for r in radii:
        mask = _closed_ball(u.domain, center, r)
        ratios.append(float(np.ptp(u.values[mask])) / ref if mask.any() else 0.0)
    ratios_arr = np.asarray(ratios)
    keep = ratios_arr > 0
    if keep.sum() < 2:
        return HolderFit(1.0, 0.0, degenerate=True, radii=radii, ratios=ratios)
    x = np.log(np.asarray(radii)[keep] / R)
    y = np.log(ratios_arr[keep])
    slope, intercept = np.polyfit(x, y, 1)
    gamma = float(slope)
    clamped = not (0 < gamma <= 1)
    gamma = float(np.clip(gamma, np.finfo(float).tiny, 1.0))
    return HolderFit(gamma, float(math.exp(intercept)), clamped, False, radii, ratios)


@dataclass
class GradientProfile:
    table: list
    reverse_holder_ratio: float
    theta: float


def gradient_lp_profile(u: ScalarField, center, R, p_list=(1.0, 2.0, 3.0, 4.0, 6.0)) -> GradientProfile:
    """``||grad u||_{L^p(B_{R/2})}`` per ``p`` and the reverse-Hoelder ratio.

    The ratio is ``((R/4)^-d <|grad u|^2 1_{B_{R/4}}>)^{1/2}`` over
    ``(R^-d <|grad u|^{2/theta} 1_{B_R}>)^{theta/2}`` with ``theta = (d+2)/d``.
    """
    if any(not (1 <= p <= 6) for p in p_list):
        raise ConfigurationError("exponents must lie in [1, 6]")
    center, big = _ball(u, center, R)
    d = u.domain.dimension
    theta = (d + 2) / d
    mag = np.sqrt(_grad_sq(u))
    half = ball_mask(u.domain, center, R / 2)
    quarter = ball_mask(u.domain, center, R / 4)
    table = [(float(p), _integral(mag**p, half, u.domain) ** (1.0 / p)) for p in p_list]
    num = ((R / 4) ** -d * _integral(mag**2, quarter, u.domain)) ** 0.5
    den = (R**-d * _integral(mag ** (2 / theta), big, u.domain)) ** (theta / 2)
    ratio = num / den if den > 0 else 0.0
    return GradientProfile(table, float(ratio), theta)


def stable_gradient_exponent(tables, factor=2.0) -> float | None:
    """Largest ``p`` whose gradient norm stays within ``factor`` of its median along a sequence.

    ``tables`` holds one ``GradientProfile.table`` per iterate, all over the same
    exponents.  Exponents are scanned upward and the scan stops at the first
    unstable one; None if even the smallest is unstable.
    """
    if not tables:
        raise ConfigurationError("need at least one gradient table")
    exponents = [p for p, _ in tables[0]]
    best = None
    for k, p in enumerate(exponents):
        vals = np.array([t[k][1] for t in tables], dtype=float)
        med = float(np.median(vals))
        if med <= 0 or vals.min() <= 0 or max(vals.max() / med, med / vals.min()) > factor:
            break
        best = p
    return best


def _positive_on(u, mask, what):
    low = float(u.values[mask].min())
    if low <= 0:
        raise HypothesisViolation(f"u must be positive on {what} (min = {low:.3e})", measured=low)


def log_bmo_check(u: ScalarField, center, r) -> tuple[float, float]:
    """``(||grad log u||_{L^2(B_{r/2})} r^{1-d/2}, r^-d <|w - (w)_{r/2}| 1_{B_{r/2}}>)``."""
    center, ball = _ball(u, center, r)
    _positive_on(u, ball, "B_r")
    d = u.domain.dimension
    half = ball_mask(u.domain, center, r / 2)
    if np.all(u.values > 0):
        w = ScalarField(u.domain, np.log(u.values))
        gw2 = _grad_sq(w)
    else:
        gw2 = np.zeros(u.domain.shape)
        gw2[ball] = _grad_sq(u)[ball] / u.values[ball] ** 2
        w = ScalarField(u.domain, np.log(np.where(u.values > 0, u.values, 1.0)))
    grad_k = math.sqrt(_integral(gw2, half, u.domain)) * r ** (1 - d / 2)
    wh = w.values[half]
    bmo = r**-d * u.domain.cell_volume * float(np.sum(np.abs(wh - wh.mean())))
    return grad_k, bmo


def crossproduct_check(u: ScalarField, center, R, q=0.5) -> float:
    """``(<u^q 1_{B_R}> <u^-q 1_{B_R}>)^{1/2} / R^d``."""
    q = check_positive(q, "q")
    center, ball = _ball(u, center, R)
    _positive_on(u, ball, "B_R")
    vals = u.values[ball]
    dv = u.domain.cell_volume
    prod = dv * np.sum(vals**q) * dv * np.sum(vals**-q)
    return float(math.sqrt(prod) / R**u.domain.dimension)


class RecurrenceBound(float):
    """``beta_max`` carrying the first violation index of a checked sequence."""

    violation: int | None

    def __new__(cls, value, violation=None):
        obj = super().__new__(cls, value)
        obj.violation = violation
        return obj


def caccioppoli_recurrence_bound(s, y_sequence=None) -> RecurrenceBound:
    """``beta_max = (1 + sqrt(5 + 4 s)) / 2`` for ``y_n^2 <= 1 + s + y_{n+1}``.

    With ``y_sequence`` the recurrence and ``sup y_n <= beta_max`` are checked;
    the first failing index is stored on ``.violation`` (None if all pass).
    """
    s = check_positive(s, "s", strict=False)
    beta = (1.0 + math.sqrt(5.0 + 4.0 * s)) / 2.0
    violation = None
    if y_sequence is not None:
        y = [float(v) for v in y_sequence]
        slack = 1e-12
        for n, v in enumerate(y):
            if v > beta * (1 + slack) or (n + 1 < len(y) and v * v > (1 + s + y[n + 1]) * (1 + slack)):
                violation = n
                break
    return RecurrenceBound(beta, violation)


def degiorgi_threshold(C, gamma, alpha) -> float:
    """``C^{-1/alpha} gamma^{-1/alpha^2}``."""
    return C ** (-1.0 / alpha) * gamma ** (-1.0 / alpha**2)


_LOG_MAX = math.log(np.finfo(float).max) - 1.0


def degiorgi_lemma(C, gamma, alpha, x0, m_max=200):
    """Iterate ``x_{m+1} = C gamma^m x_m^{1+alpha}``.

    The iteration runs through the normalized excess ``y_m = x_m / (t gamma^{-m/alpha})``
    with ``t`` the threshold, which obeys ``y_{m+1} = y_m^{1+alpha}`` exactly; the
    logarithm of ``y`` is propagated, so starting on the threshold stays on the
    decaying branch instead of drifting off through rounding.

    Returns
    -------
    sequence : list of float
        Truncated at the first overflow.
    converged : bool
        True iff the last term, at ``m_max``, is below ``1e-12``.
    """
    C = check_positive(C, "C")
    alpha = check_positive(alpha, "alpha")
    gamma = check_positive(gamma, "gamma")
    if gamma <= 1:
        raise ConfigurationError(f"gamma must be > 1, got {gamma}")
    x0 = check_positive(x0, "x0", strict=False)
    if x0 == 0:
        return [0.0] * (m_max + 1), True
    log_t = math.log(degiorgi_threshold(C, gamma, alpha))
    log_g = math.log(gamma)
    ell = math.log(x0) - log_t
    seq = [x0]
    for m in range(1, m_max + 1):
        ell *= 1.0 + alpha
        log_x = log_t - m * log_g / alpha + ell
        if log_x > _LOG_MAX:
            return seq, False
        seq.append(math.exp(log_x))
    return seq, seq[-1] < 1e-12


@dataclass
class RegularityReport:
    caccioppoli_K: float | None = None
    supbound_K: float | None = None
    harnack_C: float | None = None
    holder_gamma: float | None = None
    holder_K: float | None = None
    grad_lp_table: list = field(default_factory=list)
    log_grad_K: float | None = None
    log_bmo_K: float | None = None
    crossproduct_C: float | None = None
    reverse_holder_ratio: float | None = None
    parameters: dict = field(default_factory=dict)
    findings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def profile(u: ScalarField, center=None, R=None, *, r=None, c=None, theta=1.2, q=0.5, batteries=BATTERIES):
    """Evaluate the requested batteries on one solution field.

    Defaults: ``center`` the origin, ``R = min(1, 0.8 L, L - 2h)``, ``r = R/2``, and
    ``c`` the average of ``u`` on ``B_R``.  Hypothesis failures of individual
    checks, and checks the grid is too coarse for, are recorded as findings.
    """
    domain = u.domain
    center = np.zeros(domain.dimension) if center is None else check_point(domain, center)
    R = min(1.0, 0.8 * domain.half_extent, domain.half_extent - 2 * domain.spacing) if R is None else float(R)
    r = R / 2 if r is None else float(r)
    if not (0 < r < R <= 1):
        raise ConfigurationError(f"need 0 < r < R <= 1, got r={r}, R={R}")
    if c is None:
        c = float(u.values[ball_mask(domain, center, R)].mean())
    rep = RegularityReport(parameters={"center": center.tolist(), "r": r, "R": R, "theta": theta, "q": q, "c": c})

    def attempt(name, fn):
        try:
            fn()
        except (HypothesisViolation, DegenerateInputError, ConfigurationError) as exc:
            rep.findings.append(f"{name}: {exc}")

    if "caccioppoli" in batteries:
        def _c():
            rep.caccioppoli_K = caccioppoli_ratio(u, c, center, r, R)
            rep.supbound_K = sup_bound_check(u, center, R, theta)
        attempt("caccioppoli", _c)
    if "harnack" in batteries:
        def _h():
            rep.harnack_C = harnack_quotient(u, center, R)
        attempt("harnack", _h)
    if "holder" in batteries:
        def _ho():
            fit = holder_fit(u, center, None, R)
            rep.holder_gamma, rep.holder_K = fit.gamma, fit.K
            if fit.clamped:
                rep.findings.append("holder: gamma clamped to (0, 1]")
        attempt("holder", _ho)
    if "gradlp" in batteries:
        def _g():
            prof = gradient_lp_profile(u, center, R)
            rep.grad_lp_table = prof.table
            rep.reverse_holder_ratio = prof.reverse_holder_ratio
        attempt("gradlp", _g)
    if "logbmo" in batteries:
        def _l():
            rep.log_grad_K, rep.log_bmo_K = log_bmo_check(u, center, R)
        attempt("logbmo", _l)
    if "crossprod" in batteries:
        def _x():
            rep.crossproduct_C = crossproduct_check(u, center, R, q)
        attempt("crossprod", _x)
    return rep


class RegularityProfiler(BaseEstimator):
    """Estimator front end for :func:`profile`; ``fit`` takes a solution field."""

    def __init__(self, center=None, R=None, r=None, c=None, theta=1.2, q=0.5, batteries=BATTERIES):
        self.center = center
        self.R = R
        self.r = r
        self.c = c
        self.theta = theta
        self.q = q
        self.batteries = batteries

    def fit(self, X, y=None):
        self.report_ = profile(
            X, self.center, self.R, r=self.r, c=self.c, theta=self.theta, q=self.q, batteries=self.batteries
        )
        return self

    def transform(self, X):
        return self.fit(X).report_
