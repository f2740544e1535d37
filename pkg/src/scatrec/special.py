"""Gamma/digamma machinery, the normalization constant lambda(d, p), its
derivative in p (dimension 3), and Strichartz exponent bookkeeping.

The normalization constant is

    lambda(d, p) = pi^(d/2+1) * (4/(p+2))^(d/2) * Gamma(dp/4 - 1/2) / Gamma(dp/4),

defined for p > 2/d (the first Gamma argument must stay positive).  At d = 3
it simplifies to 8 pi^(5/2) (p+2)^(-3/2) G(p) with G(p) = Gamma(3p/4-1/2) /
Gamma(3p/4), and differentiating gives

    lambda'(p) = -8 pi^(5/2) (p+2)^(-3/2) G(p)
                 * { 3/(2(p+2)) + (3/4) [psi(3p/4) - psi(3p/4 - 1/2)] },

which is strictly negative on [4/3, 4] because psi is increasing.  The
strict monotonicity is what makes the power p recoverable by inverting
lambda(3, .).

Gamma and digamma are evaluated locally (Lanczos for log-Gamma, recurrence
plus the asymptotic Bernoulli series for digamma) so that the constants are
reproducible to double precision with documented coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

P_MIN = 4.0 / 3.0
P_MAX = 4.0

# Lanczos coefficients for g = 7, n = 9 (Godfrey's set); relative accuracy
# ~1e-15 for real arguments > 0.5.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Asymptotic series psi(x) ~ ln x - 1/(2x) - sum B_{2k}/(2k x^{2k});
# coefficients are B_{2k}/(2k) for k = 1..7.
_DIGAMMA_BERNOULLI = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0 via the Lanczos approximation."""
    if not x > 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # Gamma(x) = Gamma(x+1)/x keeps the Lanczos argument above 0.5
        return log_gamma(x + 1.0) - math.log(x)
    z = x - 1.0
    acc = _LANCZOS_COEFFS[0]
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def gamma_ratio(a: float, b: float) -> float:
    """Gamma(a)/Gamma(b) computed stably in log space."""
    return math.exp(log_gamma(a) - log_gamma(b))


def digamma(x: float) -> float:
    """psi(x) = Gamma'(x)/Gamma(x) for x > 0.

    Uses the recurrence psi(x) = psi(x+1) - 1/x to lift the argument above 9,
    then the asymptotic Bernoulli series (absolute error well below 1e-12
    there).
    """
    if not x > 0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < 9.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for c in _DIGAMMA_BERNOULLI:
        series += c * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


@dataclass(frozen=True)
class LambdaValue:
    """lambda(d, p) together with d/dp at d = 3 (None otherwise)."""

    d: int
    p: float
    value: float
    derivative: float | None = None


@dataclass(frozen=True)
class ExponentSet:
    """Strichartz pair and critical exponents attached to a power p (d=3)."""

    p: float
    q: float
    r: float
    s_c: float
    r_c: float

    def admissibility_defect(self) -> float:
        """2/q + 3/r - 3/2; zero for an admissible pair."""
        return 2.0 / self.q + 3.0 / self.r - 1.5


def lambda_const(d: int, p: float) -> LambdaValue:
    """The space-time mass of the Gaussian intensity kernel.

    lambda(d,p) = pi^(d/2+1) (4/(p+2))^(d/2) Gamma(dp/4-1/2)/Gamma(dp/4),
    valid for p > 2/d.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if not p > 2.0 / d:
        raise ValueError(f"lambda(d,p) requires p > 2/d = {2.0/d:.6g}, got p = {p}")
    c = d * p / 4.0
    value = (
        math.pi ** (d / 2.0 + 1.0)
        * (4.0 / (p + 2.0)) ** (d / 2.0)
        * gamma_ratio(c - 0.5, c)
    )
    deriv = _lambda_prime_unchecked(p) if d == 3 else None
    return LambdaValue(d=d, p=p, value=value, derivative=deriv)


def _lambda_prime_unchecked(p: float) -> float:
    c = 3.0 * p / 4.0
    g = gamma_ratio(c - 0.5, c)
    bracket = 3.0 / (2.0 * (p + 2.0)) + 0.75 * (digamma(c) - digamma(c - 0.5))
    return -8.0 * math.pi ** 2.5 * (p + 2.0) ** -1.5 * g * bracket


def lambda_prime(p: float) -> float:
    """d lambda(3, p) / dp on the range [4/3, 4]; strictly negative there."""
    if not (P_MIN <= p <= P_MAX):
        raise ValueError(f"lambda_prime is supported on [4/3, 4], got p = {p}")
    return _lambda_prime_unchecked(p)


def lambda_prime_floor(p: float) -> float:
    """Certified pointwise lower bound on |lambda'(p)|.

    Gautschi's inequality gives Gamma(3p/4-1/2)/Gamma(3p/4) > (3p/4)^(-1/2),
    and dropping the positive digamma part of the bracket leaves
    (3c/2)(p+2)^(-5/2)(3p/4)^(-1/2) with c = 8 pi^(5/2).
    """
    c = 8.0 * math.pi ** 2.5
    return 1.5 * c * (p + 2.0) ** -2.5 * (3.0 * p / 4.0) ** -0.5


@dataclass(frozen=True)
class LambdaInversion:
    p: float
    clamped: bool


def lambda_range() -> tuple[float, float]:
    """[lambda(3,4), lambda(3,4/3)], the attainable values on p in [4/3,4]."""
    return lambda_const(3, P_MAX).value, lambda_const(3, P_MIN).value


def invert_lambda(target: float, tol: float = 1e-10) -> LambdaInversion:
    """Solve lambda(3, p) = target for p in [4/3, 4] by bisection.

    lambda(3, .) is strictly decreasing, so the root is unique.  Targets
    outside the attainable range are clamped to the nearest endpoint and
    flagged, so that noisy estimates saturate gracefully.
    """
    lo_val, hi_val = lambda_range()  # lambda(4) < lambda(4/3)
    if target <= lo_val:
        return LambdaInversion(p=P_MAX, clamped=target < lo_val)
    if target >= hi_val:
        return LambdaInversion(p=P_MIN, clamped=target > hi_val)
    lo, hi = P_MIN, P_MAX  # lambda(lo) > target > lambda(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lambda_const(3, mid).value > target:
            lo = mid
        else:
            hi = mid
    return LambdaInversion(p=0.5 * (lo + hi), clamped=False)


def scattering_exponents(p: float) -> ExponentSet:
    """Strichartz pair (q, r) = (p+2, 6(p+2)/(3(p+2)-4)) and the critical
    exponents s_c = 3/2 - 2/p, r_c = 3p(p+2)/4 (dimension 3)."""
    if not (P_MIN <= p <= P_MAX):
        raise ValueError(f"exponents are defined for p in [4/3, 4], got {p}")
    q = p + 2.0
    r = 6.0 * (p + 2.0) / (3.0 * (p + 2.0) - 4.0)
    s_c = 1.5 - 2.0 / p
    r_c = 3.0 * p * (p + 2.0) / 4.0
    return ExponentSet(p=p, q=q, r=r, s_c=s_c, r_c=r_c)
