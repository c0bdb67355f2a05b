"""Classical sampling-based NDV estimators.

Each estimator is a pure function of a FrequencyProfile (f, n, d, N); none
of them ever sees raw data. Degenerate inputs fall back to d, the minimal
estimate consistent with the sample, and the fallback is flagged rather
than silent. Estimates can saturate to +/-inf: the alternating polynomial
estimator in particular routinely exceeds double range on real profiles,
and saturation is a reported value, not an error.

Numerical notes, hard-won:

* The alternating polynomial's factorial ratio T_i is evaluated exactly in
  rational arithmetic for n <= _EXACT_N_LIMIT (the result is then the
  correctly rounded double), and by a log-magnitude recurrence beyond that.
* The hypergeometric absence probability h_n(x) is computed through
  log-gamma; h_n(x) = 0 for x > N - n since a value with more than N - n
  occurrences cannot be missing from the sample.
* The moment equation D(1 - exp(-n/D)) = d must use expm1: for D near the
  bracket cap, 1 - exp(-n/D) rounds so badly that a spurious float root
  appears below the cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .errors import DataError
from .profiles import FrequencyProfile

_EXACT_N_LIMIT = 500
_LOG_DBL_MAX = 700.0


@dataclass(frozen=True)
class Estimate:
    """An estimator's verdict on one profile.

    value is an extended real: finite positive in the normal case, +/-inf
    when saturated, nan when the method was not applicable (recorded, not
    raised, so a benchmark run never dies on one method).
    """

    method: str
    value: float
    fallback_used: bool = False
    saturated: bool = False
    applicable: bool = True
    clamped: float | None = None
    note: str | None = None

    def to_json(self) -> dict:
        out: dict = {"method": self.method, "value": _num_json(self.value),
                     "fallback_used": self.fallback_used}
        if self.saturated:
            out["saturated"] = True
        if not self.applicable:
            out["applicable"] = False
        if self.clamped is not None:
            out["clamped"] = self.clamped
        if self.note is not None:
            out["note"] = self.note
        return out


def _num_json(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


@dataclass(frozen=True)
class SolverConfig:
    """Bisection controls shared by the root-finding estimators."""

    tolerance: float = 1e-14  # absolute, on the root variable
    max_iterations: int = 200
    upper_cap: float = 1e15  # D-space bracket cap

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise DataError("solver tolerance must be > 0 and iterations >= 1")


DEFAULT_SOLVER = SolverConfig()


def _require_n(profile: FrequencyProfile, minimum: int = 1) -> None:
    if profile.n < minimum:
        raise DataError(f"estimator needs n >= {minimum}, got n={profile.n}")


def _bisect(fn: Callable[[float], float], lo: float, hi: float, flo: float,
            cfg: SolverConfig) -> float:
    """Plain bisection on a bracketing interval, run to tolerance or to
    float exhaustion. Caller guarantees sign(fn(lo)) == sign(flo) != sign(fn(hi))."""
    for _ in range(cfg.max_iterations):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi or (hi - lo) <= cfg.tolerance:
            break
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if (fm < 0.0) == (flo < 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def goodman(profile: FrequencyProfile) -> Estimate:
    """Alternating factorial-ratio polynomial in N and the profile.

    d + sum_i (-1)^(i+1) * [(N-n+i-1)!(n-i)! / ((N-n-1)! n!)] * f_i,
    with T_i = prod_{j<=i} (N-n+j-1)/(n-j+1). Full samples short-circuit
    to d (the ratio degenerates); magnitudes beyond double range saturate.
    """
    _require_n(profile)
    n, N, d = profile.n, profile.N, profile.d
    if n > N:
        raise DataError(f"n={n} > N={N}")
    if n == N:
        return Estimate("goodman", float(d))
    classes = sorted(j for j, c in profile.f.items() if c > 0 and j <= n)
    if not classes:
        return Estimate("goodman", float(d))
    if n <= _EXACT_N_LIMIT:
        return _goodman_exact(profile, classes)
    return _goodman_log(profile, classes)


def _goodman_exact(profile: FrequencyProfile, classes: list[int]) -> Estimate:
    n, N = profile.n, profile.N
    total = Fraction(profile.d)
    T = Fraction(1)
    top = classes[-1]
    want = set(classes)
    for i in range(1, top + 1):
        T *= Fraction(N - n + i - 1, n - i + 1)
        if i in want:
            total += (-1) ** (i + 1) * T * profile.f[i]
    try:
        return Estimate("goodman", float(total))
    except OverflowError:
        sign = 1.0 if total > 0 else -1.0
        return Estimate("goodman", sign * math.inf, saturated=True)


def _goodman_log(profile: FrequencyProfile, classes: list[int]) -> Estimate:
    n, N = profile.n, profile.N
    log_t = 0.0
    terms: list[tuple[float, float]] = []  # (signed log magnitude proxy, sign)
    want = set(classes)
    top = classes[-1]
    for i in range(1, top + 1):
        log_t += math.log(N - n + i - 1) - math.log(n - i + 1)
        if i in want:
            mag = log_t + math.log(profile.f[i])
            terms.append((mag, 1.0 if i % 2 == 1 else -1.0))
    peak_mag, peak_sign = max(terms)
    if peak_mag > _LOG_DBL_MAX - math.log(max(len(terms), 1)):
        return Estimate("goodman", peak_sign * math.inf, saturated=True)
    total = float(profile.d) + sum(s * math.exp(m) for m, s in terms)
    return Estimate("goodman", total)


def gee(profile: FrequencyProfile) -> Estimate:
    """sqrt(N/n) * f_1 + sum_{j>=2} f_j; scales singletons by the inverse
    square root of the sampling rate."""
    _require_n(profile)
    value = math.sqrt(profile.N / profile.n) * profile.get(1) + _tail_sum(profile)
    return Estimate("gee", value)


def eb(profile: FrequencyProfile) -> Estimate:
    """GEE with the singleton count floored at 1, giving an error bound."""
    _require_n(profile)
    value = math.sqrt(profile.N / profile.n) * max(1, profile.get(1)) + _tail_sum(profile)
    return Estimate("eb", value)


def _tail_sum(profile: FrequencyProfile) -> float:
    return float(sum(c for j, c in profile.f.items() if j >= 2))


def chao(profile: FrequencyProfile) -> Estimate:
    """d + f_1^2 / (2 f_2); falls back to d when there are no doubletons."""
    _require_n(profile)
    f1, f2 = profile.get(1), profile.get(2)
    if f2 == 0:
        return Estimate("chao", float(profile.d), fallback_used=True)
    return Estimate("chao", profile.d + f1 * f1 / (2.0 * f2))


def shlosser(profile: FrequencyProfile) -> Estimate:
    """Skew-assuming estimator in powers of (1 - r); 0^0 = 1 so that the
    r = 1 limit degenerates cleanly to d."""
    _require_n(profile)
    r = profile.r
    if not 0.0 < r <= 1.0:
        raise DataError(f"sampling rate must be in (0, 1], got {r}")
    q = 1.0 - r
    num = profile.get(1) * sum(c * q**j for j, c in profile.f.items())
    den = sum(c * j * r * _pow0(q, j - 1) for j, c in profile.f.items())
    if den == 0.0 or num == 0.0:
        return Estimate("shlosser", float(profile.d), fallback_used=(den == 0.0))
    return Estimate("shlosser", profile.d + num / den)


def _pow0(base: float, exp: int) -> float:
    return 1.0 if exp == 0 else base**exp


def jackknife1(profile: FrequencyProfile) -> Estimate:
    """First-order leave-one-out correction: d + ((n-1)/n) * f_1."""
    if profile.n < 2:
        raise DataError(f"first-order jackknife needs n >= 2, got n={profile.n}")
    return Estimate("jackknife", profile.d + (profile.n - 1) / profile.n * profile.get(1))


def _sichel_root(n: int, d: int, f1: int, solver: SolverConfig) -> float | None:
    """Second root of phi(g) = (1+g) ln g - A g + B inside (f1/n, 1).

    phi has a structural root at g = f1/n; the estimator needs the other
    one, which exists only when phi still rises past the structural root
    (phi' is strictly decreasing, so its zero is phi's single peak) and
    crosses back below zero before 1. Returns None when no such root exists.
    """
    log_nf1 = math.log(n / f1)
    A = 2.0 * n / d - log_nf1
    B = 2.0 * f1 / d + log_nf1

    def phi(g: float) -> float:
        return (1.0 + g) * math.log(g) - A * g + B

    def dphi(g: float) -> float:
        return math.log(g) + (1.0 + g) / g - A

    a = f1 / n
    if dphi(a) <= 0.0 or dphi(1.0) >= 0.0:
        return None
    g_peak = _bisect(dphi, a, 1.0, dphi(a), solver)
    phi_peak = phi(g_peak)
    if phi_peak <= 0.0 or phi(1.0) >= 0.0:
        return None
    g = _bisect(phi, g_peak, 1.0, phi_peak, solver)
    if not (a < g < 1.0):
        return None
    return g


def sichel(profile: FrequencyProfile, solver: SolverConfig = DEFAULT_SOLVER) -> Estimate:
    """Zero-truncated GIG-Poisson fit via a scalar transcendental solve;
    degenerate profiles (f1 = 0, f1 = n) and bracket failures fall back
    to d."""
    _require_n(profile)
    n, d, f1 = profile.n, profile.d, profile.get(1)
    if f1 == 0 or f1 == n or d == 0:
        return Estimate("sichel", float(d), fallback_used=True)
    g = _sichel_root(n, d, f1, solver)
    if g is None:
        return Estimate("sichel", float(d), fallback_used=True)
    b_hat = g * math.log(n * g / f1) / (1.0 - g)
    c_hat = (1.0 - g * g) / (n * g * g)
    return Estimate("sichel", 2.0 / (b_hat * c_hat))


def bootstrap(profile: FrequencyProfile) -> Estimate:
    """d + sum_j f_j (1 - j/n)^n, the expected unseen mass under
    resampling; bounded above by 2d."""
    _require_n(profile)
    n = profile.n
    value = profile.d + sum(c * (1.0 - j / n) ** n for j, c in profile.f.items())
    return Estimate("bootstrap", value)


def _h_absent(N: int, n: int, x: float) -> float:
    """Probability that a value with (real-valued) population frequency x
    misses a without-replacement sample of n from N, via log-gamma."""
    if x > N - n:
        return 0.0
    if x < 0:
        raise DataError(f"population frequency must be >= 0, got {x}")
    return math.exp(
        math.lgamma(N - x + 1.0)
        + math.lgamma(N - n + 1.0)
        - math.lgamma(N - n - x + 1.0)
        - math.lgamma(N + 1.0)
    )


def horvitz_thompson(profile: FrequencyProfile) -> Estimate:
    """Inverse-inclusion-probability estimator: each observed frequency
    class j is scaled up to N j / n and weighted by 1/(1 - h_n)."""
    _require_n(profile)
    n, N = profile.n, profile.N
    if n > N:
        raise DataError(f"n={n} > N={N}")
    if n == N:
        return Estimate("ht", float(profile.d))
    total = 0.0
    saturated = False
    for j, c in sorted(profile.f.items()):
        n_hat = N * (j / n)
        denom = 1.0 - _h_absent(N, n, n_hat)
        if denom <= 0.0:
            saturated = True
            total = math.inf
            break
        total += c / denom
    return Estimate("ht", total, saturated=saturated)


def mom1(profile: FrequencyProfile, solver: SolverConfig = DEFAULT_SOLVER) -> Estimate:
    """Root of d = D(1 - e^(-n/D)). The right side increases to supremum n,
    so an all-distinct sample has no finite root and saturates at the cap."""
    _require_n(profile)
    n, d = profile.n, profile.d
    lo = float(max(d, 1))
    cap = solver.upper_cap

    def resid(D: float) -> float:
        return -math.expm1(-n / D) * D - d

    r_lo = resid(lo)
    if r_lo == 0.0:
        return Estimate("mom1", lo)
    if r_lo > 0.0:
        # d below the curve already at the lower bound; d is the answer
        return Estimate("mom1", lo, fallback_used=True)
    if resid(cap) <= 0.0:
        return Estimate("mom1", cap, saturated=True)
    root = _bisect(resid, lo, cap, r_lo, _relative_cfg(solver, d))
    return Estimate("mom1", root)


def mom2(profile: FrequencyProfile, solver: SolverConfig = DEFAULT_SOLVER) -> Estimate:
    """Root of d = D(1 - h_n(N/D)), the finite-population moment equation.
    No sign change over the bracket means no usable root; fall back to d."""
    _require_n(profile)
    n, N, d = profile.n, profile.N, profile.d
    if n > N:
        raise DataError(f"n={n} > N={N}")
    lo = float(max(d, 1))
    hi = min(solver.upper_cap, N * 1e6)

    def resid(D: float) -> float:
        return D * (1.0 - _h_absent(N, n, N / D)) - d

    r_lo = resid(lo)
    if r_lo == 0.0:
        return Estimate("mom2", lo)
    if hi <= lo or (resid(hi) < 0.0) == (r_lo < 0.0):
        return Estimate("mom2", float(d), fallback_used=True)
    root = _bisect(resid, lo, hi, r_lo, _relative_cfg(solver, d))
    return Estimate("mom2", root)


def _relative_cfg(solver: SolverConfig, d: int) -> SolverConfig:
    # D-space roots span 1..1e15; bisect to a width fine enough that the
    # defining-equation residual lands far below the 1e-9*d contract
    return SolverConfig(
        tolerance=max(solver.tolerance, 1e-12 * max(d, 1)),
        max_iterations=solver.max_iterations,
        upper_cap=solver.upper_cap,
    )


ESTIMATORS: dict[str, Callable[..., Estimate]] = {
    "goodman": goodman,
    "gee": gee,
    "eb": eb,
    "chao": chao,
    "shlosser": shlosser,
    "jackknife": jackknife1,
    "sichel": sichel,
    "bootstrap": bootstrap,
    "ht": horvitz_thompson,
    "mom1": mom1,
    "mom2": mom2,
}

_TAKES_SOLVER = {"sichel", "mom1", "mom2"}


def estimate_all(
    profile: FrequencyProfile, solver: SolverConfig = DEFAULT_SOLVER
) -> dict[str, Estimate]:
    """Run every registered estimator; never raises. An empty profile marks
    every method not-applicable, and per-method failures are recorded."""
    out: dict[str, Estimate] = {}
    for name, fn in ESTIMATORS.items():
        if profile.n == 0:
            out[name] = Estimate(name, math.nan, applicable=False, note="no sample")
            continue
        try:
            out[name] = fn(profile, solver) if name in _TAKES_SOLVER else fn(profile)
        except DataError as exc:
            out[name] = Estimate(name, math.nan, applicable=False, note=str(exc))
    return out


def clamp_estimate(e: Estimate, d: int, N: int) -> Estimate:
    """Attach a value clamped to [max(d,1), N]; the raw value is preserved.
    Non-finite and non-positive raw values go to the nearest bound (+inf to
    N, everything else to the lower bound)."""
    lo, hi = float(max(d, 1)), float(N)
    v = e.value
    if math.isnan(v) or v <= 0.0 or v == -math.inf:
        clamped = lo
    elif v == math.inf:
        clamped = hi
    else:
        clamped = min(max(v, lo), hi)
    return Estimate(
        method=e.method,
        value=e.value,
        fallback_used=e.fallback_used,
        saturated=e.saturated,
        applicable=e.applicable,
        clamped=clamped,
        note=e.note,
    )
