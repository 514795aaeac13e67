"""Scalar asymptotic theory of the box-relaxation decoder.

The decoder's high-dimensional behaviour collapses onto a one-dimensional
strictly convex potential

    F(tau; t, delta) = (tau/2)(delta - 1/2) + t/(2 tau)
                       + (tau/2) * integral_{2/tau}^{inf} (x - 2/tau)^2 phi(x) dx

whose minimiser tau(t) and minimum f(t) drive everything downstream: the
Poisson rate lambda = p * Phi(-1/tau) of the error-bit count, the per-bit
error probability Phi(-1/tau), the curvature f/tau of the leave-one-out
scalar problem, the phase coordinate alpha = (delta - 1/2)/(2 sigma^2 ln p),
and the Gumbel success law in the critical window around alpha = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .gaussian import (
    log_std_normal_tail,
    std_normal_cdf,
    std_normal_pdf,
    tail_second_moment,
    truncated_sq_moment,
)

_LOG_SQRT_4PI = math.log(math.sqrt(4.0 * math.pi))

# Residual tolerance for the stationarity equation, scaled by max(1, delta).
_H_TOL = 1.0e-12
# Beyond this 1/tau the plain CDF loses the tail; switch to the Mills path.
_CDF_TAIL_SWITCH = 8.0


def _check_t(t) -> float:
    t = float(t)
    if not (math.isfinite(t) and t > 0.0):
        raise ValueError(f"noise parameter t must be positive and finite, got {t!r}")
    return t


def _check_delta(delta) -> float:
    delta = float(delta)
    if not (math.isfinite(delta) and delta > 0.5):
        raise ValueError(f"sampling ratio delta must exceed 1/2, got {delta!r}")
    return delta


def _check_tau(tau) -> float:
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError(f"tau must be positive and finite, got {tau!r}")
    return tau


@dataclass(frozen=True)
class SystemParams:
    """One operating point: signal dimension p, sampling ratio, noise variance."""

    p: int
    delta_p: float
    sigma2_p: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p!r}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "delta_p", _check_delta(self.delta_p))
        object.__setattr__(self, "sigma2_p", _check_t(self.sigma2_p))


@dataclass(frozen=True)
class TheoryPrediction:
    """All scalar predictions derived from one (p, delta, sigma^2) point."""

    tau_p: float
    f_p: float
    lambda_p: float
    a_p_star: float
    alpha_p: float
    ber_asymptotic: float
    p_correct_poisson: float


def potential_f(tau: float, t: float, delta: float) -> float:
    """The convex potential F(tau; t, delta); t generalises the noise variance."""
    tau = _check_tau(tau)
    t = _check_t(t)
    delta = _check_delta(delta)
    return (
        0.5 * tau * (delta - 0.5)
        + 0.5 * t / tau
        + 0.5 * tau * truncated_sq_moment(2.0 / tau)
    )


def stationarity_h(tau: float, t: float, delta: float) -> float:
    """Derivative-based stationarity function h(tau); its unique root is tau(t).

    h(tau) = delta - 1/2 + integral_{2/tau}^{inf} (x^2 - 4/tau^2) phi(x) dx
             - t/tau^2, evaluated in closed form through Phi and phi. Strictly
    increasing, from -inf at 0+ to delta at infinity.
    """
    tau = _check_tau(tau)
    t = _check_t(t)
    delta = _check_delta(delta)
    a = 2.0 / tau
    integral = a * std_normal_pdf(a) + (1.0 - a * a) * std_normal_cdf(-a)
    return delta - 0.5 + integral - t / (tau * tau)


def _stationarity_h_prime(tau: float, t: float) -> float:
    # h'(tau) = (8 Phi(-2/tau) + 2 t)/tau^3 > 0
    return (8.0 * std_normal_cdf(-2.0 / tau) + 2.0 * t) / tau**3


def tau_bracket(t: float, delta: float) -> tuple[float, float]:
    """Provable enclosure of the potential minimiser tau(t).

    lower = sqrt(t/(delta - 1/2 + v)) with v the tail second moment at
    2*sqrt((delta - 1/2)/t); upper = min(sqrt(t/(delta - 1/2)),
    sqrt((4 + t)/delta)). The ends coincide as t -> 0.
    """
    t = _check_t(t)
    delta = _check_delta(delta)
    v = tail_second_moment(2.0 * math.sqrt((delta - 0.5) / t))
    lo = math.sqrt(t / (delta - 0.5 + v))
    hi = min(math.sqrt(t / (delta - 0.5)), math.sqrt((4.0 + t) / delta))
    if lo > hi:  # fp rounding when v underflows and the ends collide
        lo = hi
    return lo, hi


def solve_tau(t: float, delta: float) -> float:
    """Unique root of stationarity_h, via safeguarded Newton in the bracket."""
    t = _check_t(t)
    delta = _check_delta(delta)
    lo, hi = tau_bracket(t, delta)
    htol = _H_TOL * max(1.0, delta)
    blo, bhi = lo, hi
    tau = 0.5 * (lo + hi)
    for _ in range(120):
        hv = stationarity_h(tau, t, delta)
        if hv > 0.0:
            bhi = min(bhi, tau)
        else:
            blo = max(blo, tau)
        if abs(hv) <= htol:
            break
        cand = tau - hv / _stationarity_h_prime(tau, t)
        if not blo < cand < bhi:
            cand = 0.5 * (blo + bhi)
        if cand == tau:  # interval exhausted at fp resolution
            break
        tau = cand
    else:
        raise RuntimeError(
            f"stationarity solve did not converge: t={t}, delta={delta}, "
            f"tau={tau}, h={stationarity_h(tau, t, delta)}"
        )
    tau = min(max(tau, lo), hi)
    hv = stationarity_h(tau, t, delta)
    if abs(hv) > 1.0e-11 * max(1.0, delta):
        raise RuntimeError(
            f"stationarity residual too large after solve: t={t}, delta={delta}, "
            f"tau={tau}, h={hv}"
        )
    return tau


def _stable_tail(z: float) -> float:
    # Phi(-z) through the Mills path once the plain CDF loses the tail.
    if z > _CDF_TAIL_SWITCH:
        return math.exp(log_std_normal_tail(z))
    return std_normal_cdf(-z)


def predict(params: SystemParams) -> TheoryPrediction:
    """Evaluate every asymptotic prediction at one operating point.

    Needs p >= 2 (the phase coordinate divides by ln p). lambda is computed
    through the tail-stable path so small-noise points far past the double
    precision CDF floor still produce the correct p * Phi(-1/tau).
    """
    if params.p < 2:
        raise ValueError(f"predict requires p >= 2, got p={params.p}")
    tau = solve_tau(params.sigma2_p, params.delta_p)
    f = potential_f(tau, params.sigma2_p, params.delta_p)
    z = 1.0 / tau
    if z > _CDF_TAIL_SWITCH:
        lam = math.exp(math.log(params.p) + log_std_normal_tail(z))
    else:
        lam = params.p * std_normal_cdf(-z)
    alpha = (params.delta_p - 0.5) / (2.0 * params.sigma2_p * math.log(params.p))
    return TheoryPrediction(
        tau_p=tau,
        f_p=f,
        lambda_p=lam,
        a_p_star=f / tau,
        alpha_p=alpha,
        ber_asymptotic=lam / params.p,
        p_correct_poisson=math.exp(-lam),
    )


def solve_delta_for_lambda(p: int, sigma2: float, lambda_target: float) -> float:
    """Sampling ratio delta > 1/2 at which the Poisson rate equals the target.

    lambda is strictly decreasing in delta, so a bisection over delta is
    exact; the attainable range is (0, p*Phi(-1/tau(sigma2, 1/2+)))
    and an out-of-range target raises.
    """
    if int(p) != p or p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p!r}")
    p = int(p)
    sigma2 = _check_t(sigma2)
    lambda_target = float(lambda_target)
    if not (0.0 < lambda_target < 0.5 * p):
        raise ValueError(
            f"lambda target must lie in (0, p/2), got {lambda_target!r}"
        )

    def lam_at(delta: float) -> float:
        return predict(SystemParams(p, delta, sigma2)).lambda_p

    lo = 0.5 + 1.0e-9
    if lam_at(lo) < lambda_target:
        raise ValueError(
            f"lambda target {lambda_target} out of range: even delta -> 1/2 "
            f"gives at most {lam_at(lo)} at sigma2={sigma2}"
        )
    hi = 1.0
    while lam_at(hi) > lambda_target:
        hi *= 2.0
        if hi > 2.0**40:
            raise ValueError(
                f"lambda target {lambda_target} out of range: not reached by "
                f"delta = {hi}"
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if lam_at(mid) > lambda_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def poisson_pmf(lam: float, k: int) -> float:
    """Poisson(lam) mass at k, in log space so huge k cannot overflow."""
    lam = float(lam)
    if not (math.isfinite(lam) and lam >= 0.0):
        raise ValueError(f"lambda must be nonnegative and finite, got {lam!r}")
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")
    k = int(k)
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(lam) - lam - math.lgamma(k + 1.0))


def gumbel_p_correct(x: float) -> float:
    """Limiting success probability exp(-exp(-x)) in the critical window."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    if x < -700.0:  # exp(-x) would overflow; the true value underflows anyway
        return 0.0
    return math.exp(-math.exp(-x))


def alpha_p_of_x(p: int, x: float) -> float:
    """Phase coordinate of the Gumbel window at offset x.

    alpha(x) = 1 - ln(ln p)/(2 ln p) + (x - ln sqrt(4 pi))/ln p, tending to 1
    for every fixed x as p grows. Used to place experiment grids in the
    critical window.
    """
    if int(p) != p or p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    lp = math.log(p)
    return 1.0 - math.log(lp) / (2.0 * lp) + (x - _LOG_SQRT_4PI) / lp


def sigma2_for_alpha(p: int, delta: float, alpha: float) -> float:
    """Noise variance that places (p, delta) at phase coordinate alpha."""
    if int(p) != p or p < 2:
        raise ValueError(f"p must be an integer >= 2, got {p!r}")
    delta = _check_delta(delta)
    alpha = float(alpha)
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValueError(f"alpha must be positive and finite, got {alpha!r}")
    return (delta - 0.5) / (2.0 * alpha * math.log(p))


def ao_scalar_loss(theta: float, params: SystemParams) -> float:
    """Limiting squared fitting error under a variance-theta probe.

    Equals half the squared potential minimum at noise level theta + sigma^2;
    at theta = 0 this is f^2/2 and its derivative there is f/(2 tau).
    """
    theta = float(theta)
    if not (math.isfinite(theta) and theta >= 0.0):
        raise ValueError(f"theta must be nonnegative and finite, got {theta!r}")
    t = theta + params.sigma2_p
    f = potential_f(solve_tau(t, params.delta_p), t, params.delta_p)
    return 0.5 * f * f
