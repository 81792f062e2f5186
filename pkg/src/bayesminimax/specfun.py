"""Special functions: log-gamma, modified Bessel I/K, Kummer 1F1, Whittaker M/W.

Everything here is real-valued and built from series, asymptotic expansions
and integral representations:

* ``bessel_i``   power series (DLMF 10.25.2) below x = 30 + nu^2/2, uniform
  large-argument expansion (DLMF 10.40.1) above; an exponentially scaled
  variant avoids overflow.
* ``bessel_k``   reflection formula K_nu = (pi/2)(I_{-nu} - I_nu)/sin(nu pi)
  summed termwise for small x, the integral representation
  K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt for moderate/large x,
  and an eps-perturbation with two-point averaging at integer orders.
* ``kummer_1f1`` Pochhammer series; negative arguments are always routed
  through Kummer's transformation 1F1(a;b;z) = e^z 1F1(b-a;b;-z), which is
  what keeps the shrinkage-prior marginals (evaluated at -u^2/2) from
  cancelling catastrophically.
* ``whittaker_m`` the defining identity
  M_{x,mu}(z) = e^{-z/2} z^{mu+1/2} 1F1(mu+1/2-x; 1+2mu; z).
* ``whittaker_w`` the integral representation
  Gamma(1/2+mu-x) W_{x,mu}(z) =
      e^{-z/2} z^{mu+1/2} int_0^inf e^{-zt} t^{mu-x-1/2} (1+t)^{mu+x-1/2} dt.

All gamma factors are kept in log space.  Every function is pure; there is no
shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _quad
from .errors import DomainError, EvaluationError

__all__ = [
    "EvalPolicy", "DEFAULT_POLICY", "log_gamma", "bessel_i", "bessel_k",
    "kummer_1f1", "whittaker_m", "whittaker_w",
    "log_bessel_i_scaled", "log_kummer_1f1",
]


@dataclass(frozen=True)
class EvalPolicy:
    """Accuracy/effort knobs for series and expansion evaluation.

    When ``scaled`` is set, Bessel values carry an exp(-x) (for I) or exp(+x)
    (for K) factor so that large arguments stay representable.
    """
    rel_tol: float = 1e-12
    max_terms: int = 10000
    scaled: bool = False

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_POLICY = EvalPolicy()


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0."""
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return math.lgamma(x)


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind
# ---------------------------------------------------------------------------

def _series_switch(nu: float) -> float:
    # keeps the power series within the term budget at rel_tol ~ 1e-12
    return 30.0 + 0.5 * nu * nu


def _asymptotic_log_i_scaled(nu: float, x: np.ndarray, rel_tol: float) -> np.ndarray:
    """log(I_nu(x)) - x via the large-argument expansion, x >= ~30.

    DLMF 10.40.1: I_nu(x) ~ e^x/sqrt(2 pi x) * sum_m (-1)^m a_m(nu)/x^m with
    a_m = prod_{j<=m} (4 nu^2-(2j-1)^2) / (m! 8^m).  The e^{-x} reflection
    term is below 1e-26 relative on this branch and ignored.
    """
    x = np.asarray(x, dtype=float)
    total = np.ones_like(x)
    term = np.ones_like(x)
    a = 1.0
    fournu2 = 4.0 * nu * nu
    prev_size = np.inf
    for m in range(1, 60):
        a *= (fournu2 - (2 * m - 1) ** 2) / (8.0 * m)
        term = term * (-1.0) / x  # sign alternation folded into the x power
        size = float(np.max(np.abs(a) * np.abs(term)))
        if size > prev_size:
            break  # divergent tail of the asymptotic series: stop at min term
        total = total + a * term
        prev_size = size
        if size <= rel_tol:
            break
    return -0.5 * np.log(2.0 * np.pi * x) + np.log(total)


def _series_log_i(nu: float, x: np.ndarray, rel_tol: float, max_terms: int) -> np.ndarray:
    """log I_nu(x) by the ascending series, for nu > -1 (positive terms)."""
    x = np.asarray(x, dtype=float)
    z = 0.25 * x * x
    S = np.ones_like(x)
    t = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    k = 0
    while np.any(active):
        k += 1
        if k > max_terms:
            raise EvaluationError(
                f"Bessel I series did not converge in {max_terms} terms",
                partial_sum=S, terms=k, order=nu)
        t = t * z / (k * (k + nu))
        S = S + np.where(active, t, 0.0)
        active = t > rel_tol * S
    with np.errstate(divide="ignore"):
        return nu * np.log(x / 2.0) - math.lgamma(nu + 1.0) + np.log(S)


def log_bessel_i_scaled(nu: float, x, policy: EvalPolicy = DEFAULT_POLICY) -> np.ndarray:
    """log(I_nu(x)) - x for array x >= 0, order nu > -1.

    Vectorized core used by the transforms and marginal integrands, whose
    Bessel kernels must be combined with Gaussian factors in log space.
    """
    if nu <= -1.0:
        raise DomainError(f"vectorized path requires nu > -1, got {nu}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("Bessel I requires x >= 0")
    cut = _series_switch(nu)
    if cut > 600.0:
        raise EvaluationError(f"order nu={nu} too large for the series branch")
    out = np.empty_like(x)
    small = x < cut
    if np.any(small):
        xs = x[small]
        out[small] = _series_log_i(nu, xs, policy.rel_tol, policy.max_terms) - xs
    if np.any(~small):
        out[~small] = _asymptotic_log_i_scaled(nu, x[~small], policy.rel_tol)
    # x == 0: I_nu(0) = 1 (nu=0), 0 (nu>0), +inf (nu in (-1,0))
    zero = x == 0.0
    if np.any(zero):
        if nu == 0.0:
            out[zero] = 0.0
        elif nu > 0.0:
            out[zero] = -np.inf
        else:
            out[zero] = np.inf
    return out


def _bessel_i_series_scalar(nu: float, x: float, rel_tol: float, max_terms: int) -> float:
    """Ascending series in linear space; valid for any real non-pole order."""
    half = 0.5 * x
    try:
        t = half ** nu / math.gamma(nu + 1.0)
    except ValueError as exc:  # gamma pole: nu is a negative integer
        raise DomainError(f"order nu={nu} hits a gamma pole; reduce I_-n to I_n first") from exc
    S = t
    z = half * half
    stable = 0
    for k in range(1, max_terms + 1):
        t = t * z / (k * (k + nu))
        S += t
        if abs(t) <= rel_tol * abs(S):
            stable += 1
            if stable >= 2:
                return S
        else:
            stable = 0
    raise EvaluationError(
        f"Bessel I series did not converge in {max_terms} terms",
        partial_sum=S, terms=max_terms, order=nu, argument=x)


def bessel_i(nu: float, x: float, policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Modified Bessel function I_nu(x), x >= 0 (scaled: e^{-x} I_nu(x))."""
    if x < 0:
        raise DomainError(f"Bessel I requires x >= 0, got {x}")
    if nu < 0 and float(nu).is_integer():
        nu = -nu  # I_{-n} = I_n
    if x == 0.0:
        if nu == 0.0:
            return 1.0
        return 0.0 if nu > 0 else math.inf
    if x >= _series_switch(abs(nu)):
        log_scaled = float(_asymptotic_log_i_scaled(nu, np.array([x]), policy.rel_tol)[0])
        return math.exp(log_scaled) if policy.scaled else math.exp(log_scaled + x)
    val = _bessel_i_series_scalar(nu, x, policy.rel_tol, policy.max_terms)
    return val * math.exp(-x) if policy.scaled else val


# ---------------------------------------------------------------------------
# modified Bessel function of the second kind
# ---------------------------------------------------------------------------

def _bessel_k_reflection(nu: float, x: float, rel_tol: float, max_terms: int) -> float:
    """K_nu by the termwise (I_{-nu} - I_nu) series; non-integer nu, small x."""
    half = 0.5 * x
    z = half * half
    tm = half ** (-nu) / math.gamma(1.0 - nu)
    tp = half ** nu / math.gamma(1.0 + nu)
    S = tm - tp
    stable = 0
    for k in range(1, max_terms + 1):
        tm = tm * z / (k * (k - nu))
        tp = tp * z / (k * (k + nu))
        d = tm - tp
        S += d
        if abs(d) <= rel_tol * abs(S) and k > abs(nu) + 2:
            stable += 1
            if stable >= 2:
                break
        else:
            stable = 0
    else:
        raise EvaluationError(
            f"Bessel K reflection series did not converge in {max_terms} terms",
            partial_sum=S, order=nu, argument=x)
    return 0.5 * math.pi * S / math.sin(nu * math.pi)


def _bessel_k_integral_scaled(nu: float, x: float, rel_tol: float) -> float:
    """e^x K_nu(x) = int_0^inf exp(-x(cosh t - 1)) cosh(nu t) dt.

    Trapezoid with interval doubling; the integrand decays double
    exponentially so convergence is spectral.
    """
    anu = abs(nu)
    t_max = math.acosh(1.0 + (50.0 + 5.0 * anu) / x)
    t_max = math.acosh(1.0 + (50.0 + anu * t_max + 10.0) / x)

    def f(t):
        return np.exp(-x * (np.cosh(t) - 1.0)) * np.cosh(anu * t)

    n = 64
    ts = np.linspace(0.0, t_max, n + 1)
    vals = f(ts)
    prev = np.trapezoid(vals, dx=t_max / n)
    for _ in range(8):
        n *= 2
        ts = np.linspace(0.0, t_max, n + 1)
        cur = np.trapezoid(f(ts), dx=t_max / n)
        if abs(cur - prev) <= rel_tol * abs(cur):
            return cur
        prev = cur
    raise EvaluationError("Bessel K integral representation failed to converge",
                          order=nu, argument=x, last=prev)


def bessel_k(nu: float, x: float, policy: EvalPolicy = DEFAULT_POLICY) -> float:
    """Modified Bessel function K_nu(x), x > 0 (scaled: e^{+x} K_nu(x)).

    K is even in nu.  Integer orders go through an eps = 1e-6 perturbation
    with two-point averaging, K_n ~ (K_{n+eps} + K_{n-eps})/2, which cancels
    the O(eps) term of the analytic continuation in the order.
    """
    if not x > 0:
        raise DomainError(f"Bessel K requires x > 0, got {x}")
    nu = abs(nu)
    if x > 2.0:
        scaled = _bessel_k_integral_scaled(nu, x, policy.rel_tol)
        return scaled if policy.scaled else scaled * math.exp(-x)
    if abs(nu - round(nu)) < 1e-9:
        eps = 1e-6
        n = round(nu)
        val = 0.5 * (_bessel_k_reflection(abs(n + eps), x, policy.rel_tol, policy.max_terms)
                     + _bessel_k_reflection(abs(n - eps), x, policy.rel_tol, policy.max_terms))
    else:
        val = _bessel_k_reflection(nu, x, policy.rel_tol, policy.max_terms)
    return val * math.exp(x) if policy.scaled else val


# ---------------------------------------------------------------------------
# Kummer confluent hypergeometric function
# ---------------------------------------------------------------------------

def _check_1f1_params(b: float):
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"1F1 undefined for b = {b} (zero or negative integer)")


def _kummer_series(a: float, b: float, z: np.ndarray, rel_tol: float, max_terms: int) -> np.ndarray:
    """Pochhammer series sum_k (a)_k/(b)_k z^k/k! for z >= 0 (vectorized)."""
    z = np.asarray(z, dtype=float)
    S = np.ones_like(z)
    t = np.ones_like(z)
    stable = np.zeros(z.shape, dtype=int)
    for k in range(max_terms):
        t = t * (a + k) * z / ((b + k) * (k + 1.0))
        S = S + t
        small = np.abs(t) <= rel_tol * np.abs(S)
        stable = np.where(small, stable + 1, 0)
        if np.all(stable >= 2):
            return S
    raise EvaluationError(
        f"1F1 series did not converge in {max_terms} terms",
        partial_sum=S, a=a, b=b, zmax=float(np.max(z)))


def kummer_1f1(a: float, b: float, z, policy: EvalPolicy = DEFAULT_POLICY):
    """Kummer's function 1F1(a; b; z); z may be a scalar or array.

    Negative arguments always use 1F1(a;b;z) = e^z 1F1(b-a; b; -z) so the
    evaluated series has a positive argument.
    """
    _check_1f1_params(b)
    z_arr = np.asarray(z, dtype=float)
    scalar = z_arr.ndim == 0
    z_arr = np.atleast_1d(z_arr)
    out = np.empty_like(z_arr)
    neg = z_arr < 0
    if np.any(~neg):
        out[~neg] = _kummer_series(a, b, z_arr[~neg], policy.rel_tol, policy.max_terms)
    if np.any(neg):
        zn = -z_arr[neg]
        vals = np.empty_like(zn)
        big = zn > 600.0  # linear series for 1F1(b-a; b; zn) would overflow
        if np.any(big):
            if not (b - a > 0):
                raise EvaluationError(
                    "1F1 at large negative arguments needs b - a > 0 for the "
                    "log-space Kummer route", a=a, b=b)
            vals[big] = np.exp(-zn[big] + log_kummer_1f1(b - a, b, zn[big], policy))
        if np.any(~big):
            vals[~big] = np.exp(-zn[~big]) * _kummer_series(
                b - a, b, zn[~big], policy.rel_tol, policy.max_terms)
        out[neg] = vals
    return float(out[0]) if scalar else out


def _log_kummer_asymptotic(a: float, b: float, z: np.ndarray, rel_tol: float) -> np.ndarray:
    """log 1F1(a;b;z) ~ z + (a-b) log z + lgamma(b) - lgamma(a)
    + log sum_m (b-a)_m (1-a)_m / (m! z^m), for large positive z."""
    total = np.ones_like(z)
    term = np.ones_like(z)
    prev = np.inf
    for m in range(0, 40):
        term = term * (b - a + m) * (1.0 - a + m) / ((m + 1.0) * z)
        size = float(np.max(np.abs(term)))
        if size > prev:
            break
        total = total + term
        prev = size
        if size <= rel_tol:
            break
    return (z + (a - b) * np.log(z) + math.lgamma(b) - math.lgamma(a)
            + np.log(total))


def log_kummer_1f1(a: float, b: float, z, policy: EvalPolicy = DEFAULT_POLICY):
    """log 1F1(a; b; z) for a, b > 0 and z >= 0 (all series terms positive).

    Log-space series accumulation below z = 500, the large-argument expansion
    above; needed where 1F1 reaches e^z territory, e.g. the Whittaker-type
    radial densities growing like exp(r^2/2).
    """
    _check_1f1_params(b)
    if a <= 0 or b <= 0:
        raise DomainError("log_kummer_1f1 requires a, b > 0")
    z_in = np.asarray(z, dtype=float)
    z_arr = np.atleast_1d(z_in)
    if np.any(z_arr < 0):
        raise DomainError("log_kummer_1f1 requires z >= 0")
    out = np.empty_like(z_arr)
    big = z_arr > 500.0
    if np.any(big):
        out[big] = _log_kummer_asymptotic(a, b, z_arr[big], policy.rel_tol)
    if np.any(~big):
        zs = z_arr[~big]
        logS = np.zeros_like(zs)
        logt = np.zeros_like(zs)
        with np.errstate(divide="ignore"):
            logz = np.where(zs > 0, np.log(zs), -np.inf)
        for k in range(policy.max_terms):
            logt = logt + math.log(a + k) + logz - math.log((b + k) * (k + 1.0))
            logS = np.logaddexp(logS, logt)
            if np.all(logt <= logS + math.log(policy.rel_tol)):
                break
        else:
            raise EvaluationError(f"log 1F1 did not converge in {policy.max_terms} terms",
                                  a=a, b=b, zmax=float(np.max(zs)))
        out[~big] = logS
    return float(out[0]) if z_in.ndim == 0 else out


# ---------------------------------------------------------------------------
# Whittaker functions
# ---------------------------------------------------------------------------

def whittaker_m(x: float, mu: float, z: float, policy: EvalPolicy = DEFAULT_POLICY):
    """Whittaker M_{x,mu}(z) = e^{-z/2} z^{mu+1/2} 1F1(mu+1/2-x; 1+2mu; z)."""
    b = 1.0 + 2.0 * mu
    _check_1f1_params(b)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0):
        raise DomainError("Whittaker M requires z > 0")
    return np.exp(-z_arr / 2.0) * z_arr ** (mu + 0.5) * kummer_1f1(mu + 0.5 - x, b, z_arr, policy)


def whittaker_w(x: float, mu: float, z: float, quad=None) -> float:
    """Whittaker W_{x,mu}(z) by quadrature of its integral representation.

    Requires 1/2 + mu - x > 0 (integrability of t^{mu-x-1/2} at t = 0).
    """
    if not z > 0:
        raise DomainError(f"Whittaker W requires z > 0, got {z}")
    c = 0.5 + mu - x
    if not c > 0:
        raise DomainError(f"Whittaker W integral representation requires 1/2+mu-x > 0, got {c}")
    rel_tol = getattr(quad, "rel_tol", 1e-10)
    max_depth = getattr(quad, "max_depth", 40)
    p = mu - x - 0.5
    q = mu + x - 0.5
    # truncate where the exponential has decayed 50 e-folds past the peak
    t_hi = (50.0 + max(q, 0.0) * 5.0 + max(p, 0.0) * 5.0) / z + 1.0

    def integrand(t):
        with np.errstate(divide="ignore"):
            logv = -z * t + p * np.log(t) + q * np.log1p(t)
        return np.exp(logv)

    total = _quad.integrate_finite(integrand, 0.0, t_hi, rel_tol=rel_tol, max_depth=max_depth)
    log_pref = -z / 2.0 + (mu + 0.5) * math.log(z) - math.lgamma(c)
    return math.exp(log_pref) * total
