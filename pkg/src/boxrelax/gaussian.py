"""Closed-form standard normal primitives used by the theory formulas.

All functions are scalar, pure, and computed in binary64. The tail-sensitive
pieces (Mills ratio, truncated second moment) switch to a scaled-erfc
evaluation once the naive CDF/PDF quotient would lose accuracy or underflow;
the theory lives exactly in that tail regime at small noise.
"""

from __future__ import annotations

import math

from scipy.special import erfcx

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# Direct ratios are well conditioned up to here; past it, use erfcx.
_TAIL_SWITCH = 8.0


def _require_finite(name: str, x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def std_normal_cdf(x: float) -> float:
    """P(Z <= x) for standard normal Z."""
    x = _require_finite("x", x)
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_pdf(x: float) -> float:
    """Standard normal density exp(-x^2/2)/sqrt(2*pi)."""
    x = _require_finite("x", x)
    return math.exp(-0.5 * x * x) * _INV_SQRT_2PI


def mills_ratio(x: float) -> float:
    """Phi(-x)/phi(x) for x > 0, stable arbitrarily far into the tail.

    The naive quotient underflows near x ~ 38 while the true value stays
    O(1/x). Below the switch point the direct ratio is exact enough; above
    it the scaled complementary error function gives the ratio without
    forming either underflowing factor: m(x) = sqrt(pi/2) * erfcx(x/sqrt(2)).
    """
    x = _require_finite("x", x)
    if x <= 0.0:
        raise ValueError(f"mills_ratio requires x > 0, got {x!r}")
    if x <= _TAIL_SWITCH:
        return std_normal_cdf(-x) / std_normal_pdf(x)
    return _SQRT_HALF_PI * float(erfcx(x / _SQRT2))


def log_std_normal_tail(x: float) -> float:
    """log Phi(-x) for x > 0, usable where Phi(-x) itself underflows.

    Composed as log m(x) + log phi(x); the Mills ratio stays O(1/x) so only
    the explicit -x^2/2 term carries the extreme magnitude.
    """
    x = _require_finite("x", x)
    if x <= 0.0:
        raise ValueError(f"log_std_normal_tail requires x > 0, got {x!r}")
    return math.log(mills_ratio(x)) - 0.5 * x * x - _LOG_SQRT_2PI


def truncated_sq_moment(a: float) -> float:
    """Integral of (x-a)^2 phi(x) over [a, inf) for a >= 0.

    Closed form (1+a^2)*Phi(-a) - a*phi(a); for large a the two terms cancel
    to the leading 2*phi(a)/a^3 behaviour, so the tail branch factors through
    the Mills ratio to keep the value nonnegative down to the underflow
    threshold of phi.
    """
    a = _require_finite("a", a)
    if a < 0.0:
        raise ValueError(f"truncated_sq_moment requires a >= 0, got {a!r}")
    if a <= _TAIL_SWITCH:
        v = (1.0 + a * a) * std_normal_cdf(-a) - a * std_normal_pdf(a)
    else:
        v = std_normal_pdf(a) * ((1.0 + a * a) * mills_ratio(a) - a)
    return max(v, 0.0)


def tail_second_moment(b: float) -> float:
    """Integral of x^2 phi(x) over [b, inf) for b >= 0: b*phi(b) + Phi(-b).

    This is the (non-central) companion of truncated_sq_moment; it appears in
    the lower end of the bracket that encloses the potential minimiser.
    """
    b = _require_finite("b", b)
    if b < 0.0:
        raise ValueError(f"tail_second_moment requires b >= 0, got {b!r}")
    return b * std_normal_pdf(b) + std_normal_cdf(-b)
