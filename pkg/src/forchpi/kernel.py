"""Generalized Forchheimer nonlinearity and the derived permeability kernel.

The momentum law ``g(|u|) u = -grad p`` with a generalized polynomial ``g``
is inverted into ``u = -K(|grad p|) grad p`` where ``K(xi) = 1/g(G^{-1}(xi))``
and ``G(s) = s g(s)``.  Everything here is vectorized over ``xi``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DomainError, QuadratureError

__all__ = [
    "GPolynomial",
    "Kernel",
    "KernelTable",
    "eval_g",
    "eval_g_prime",
    "inv_big_g",
    "kappa",
    "kappa_prime",
    "kappa_h",
    "kappa_elasticity",
    "exponent_a",
    "degree_condition_violated",
    "two_term",
]

_INV_RTOL = 1e-12


@dataclass(frozen=True)
class GPolynomial:
    """``g(s) = a_0 + sum_j a_j s**alpha_j`` with ``0 = alpha_0 < alpha_1 < ...``."""

    coeffs: tuple
    exponents: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        exponents = tuple(float(e) for e in self.exponents)
        if len(coeffs) == 0 or len(coeffs) != len(exponents):
            raise ConfigError("coeffs and exponents must be non-empty and of equal length")
        if any(not np.isfinite(c) or c <= 0.0 for c in coeffs):
            raise ConfigError(f"all coefficients must be positive, got {coeffs}")
        if exponents[0] != 0.0:
            raise ConfigError("the first exponent must be 0")
        if any(not np.isfinite(e) for e in exponents) or any(
            b <= a for a, b in zip(exponents, exponents[1:])
        ):
            raise ConfigError(f"exponents must be strictly increasing, got {exponents}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "exponents", exponents)

    @property
    def degree(self):
        return self.exponents[-1]

    @property
    def k(self):
        return len(self.coeffs) - 1


def two_term(alpha, beta):
    """The classical two-term law ``g(s) = alpha + beta*s`` (Darcy if ``beta == 0``)."""
    if beta == 0:
        return GPolynomial((alpha,), (0.0,))
    return GPolynomial((alpha, beta), (0.0, 1.0))


def _check_nonneg(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"{name} must be finite and non-negative")
    return arr


def _return(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def eval_g(poly, s):
    s_arr = _check_nonneg(s, "s")
    out = np.full(s_arr.shape, poly.coeffs[0])
    for c, e in zip(poly.coeffs[1:], poly.exponents[1:]):
        out = out + c * s_arr**e
    return _return(out, s)


def eval_g_prime(poly, s):
    s_arr = _check_nonneg(s, "s")
    out = np.zeros(s_arr.shape)
    pos = s_arr > 0
    safe = np.where(pos, s_arr, 1.0)
    for c, e in zip(poly.coeffs[1:], poly.exponents[1:]):
        at_zero = 0.0 if e > 1 else (c if e == 1 else np.inf)
        out = out + np.where(pos, c * e * safe ** (e - 1.0), at_zero)
    return _return(out, s)


def _big_g(poly, s):
    return s * eval_g(poly, s)


def inv_big_g(poly, xi, rtol=_INV_RTOL, max_iter=200):
    """Solve ``s*g(s) = xi`` for ``s >= 0``.

    ``G`` is increasing and convex, so Newton started from an upper bound
    decreases monotonically onto the root.  A bisection step replaces any
    Newton step that leaves the current bracket.
    """
    xi_arr = np.atleast_1d(_check_nonneg(xi, "xi")).astype(float)
    a0 = poly.coeffs[0]
    if poly.k == 0:
        return _return(xi_arr / a0 if np.ndim(xi) else xi_arr[0] / a0, xi)
    lo = np.zeros_like(xi_arr)
    # every term gives G(s) >= a_j s^(alpha_j + 1), hence an upper bound on the root
    hi = np.full_like(xi_arr, np.inf)
    for c, e in zip(poly.coeffs, poly.exponents):
        hi = np.minimum(hi, (xi_arr / c) ** (1.0 / (e + 1.0)))
    for _ in range(200):
        short = _big_g(poly, hi) < xi_arr
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi + 1.0, hi)

    s = hi.copy()
    active = xi_arr > 0
    for _ in range(max_iter):
        if not np.any(active):
            break
        sa = s[active]
        f = _big_g(poly, sa) - xi_arr[active]
        gp = eval_g(poly, sa) + sa * eval_g_prime(poly, sa)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = f / gp
        new = sa - step
        lo_a, hi_a = lo[active], hi[active]
        hi_a = np.where(f > 0, np.minimum(hi_a, sa), hi_a)
        lo_a = np.where(f < 0, np.maximum(lo_a, sa), lo_a)
        tiny = np.isfinite(new) & (np.abs(step) <= rtol * 1e-2 * np.abs(sa))
        bad = ~np.isfinite(new) | (new <= lo_a) | (new > hi_a)
        new = np.where(bad & ~tiny, 0.5 * (lo_a + hi_a), new)
        done = tiny | (np.abs(new - sa) <= rtol * 1e-2 * np.maximum(np.abs(new), 1e-300))
        s[active] = new
        lo[active], hi[active] = lo_a, hi_a
        idx = np.flatnonzero(active)
        active[idx[done | (f == 0)]] = False
    s = np.where(xi_arr == 0, 0.0, s)
    return _return(s if np.ndim(xi) else s[0], xi)


@dataclass(frozen=True)
class Kernel:
    """Permeability kernel ``K`` built from a :class:`GPolynomial`."""

    poly: GPolynomial
    a_exp: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "a_exp", exponent_a(self.poly))

    def __call__(self, xi):
        return kappa(self, xi)

    def prime(self, xi):
        return kappa_prime(self, xi)

    def h(self, xi):
        return kappa_h(self, xi)

    @property
    def is_darcy(self):
        return self.poly.k == 0

    @classmethod
    def from_arrays(cls, coeffs, exponents):
        return cls(GPolynomial(tuple(coeffs), tuple(exponents)))


def kappa(kernel, xi):
    """``K(xi) = 1/g(G^{-1}(xi))``."""
    poly = kernel.poly
    if poly.k == 0:
        xi_arr = _check_nonneg(xi, "xi")
        return _return(np.full(xi_arr.shape, 1.0 / poly.coeffs[0]), xi)
    s = inv_big_g(poly, xi)
    return _return(1.0 / np.asarray(eval_g(poly, s)), xi)


def kappa_prime(kernel, xi):
    """Analytic ``K'(xi) = -g'(s) / (g(s)^2 (g(s) + s g'(s)))`` with ``s = G^{-1}(xi)``."""
    poly = kernel.poly
    xi_arr = _check_nonneg(xi, "xi")
    if poly.k == 0:
        return _return(np.zeros(xi_arr.shape), xi)
    s = np.asarray(inv_big_g(poly, xi_arr), dtype=float)
    g = np.asarray(eval_g(poly, s))
    gp = np.asarray(eval_g_prime(poly, s))
    with np.errstate(invalid="ignore"):
        out = -gp / (g * g * (g + s * gp))
    out = np.where(np.isnan(out), -np.inf, out)
    return _return(out, xi)


def kappa_elasticity(kernel, xi):
    """``K(xi)`` and ``xi K'(xi)/K(xi) = -s g'(s)/(g(s) + s g'(s))``.

    The elasticity lies in ``(-a, 0]``, which keeps the Newton conductance
    ``K (1 + elasticity)`` positive.
    """
    poly = kernel.poly
    xi_arr = _check_nonneg(xi, "xi")
    if poly.k == 0:
        return np.full(xi_arr.shape, 1.0 / poly.coeffs[0]), np.zeros(xi_arr.shape)
    s = np.asarray(inv_big_g(poly, xi_arr), dtype=float)
    g = np.asarray(eval_g(poly, s))
    sgp = np.zeros(s.shape)
    for c, e in zip(poly.coeffs[1:], poly.exponents[1:]):
        sgp = sgp + c * e * s**e
    return 1.0 / g, -sgp / (g + sgp)


def kappa_h(kernel, xi, rtol=1e-10):
    """``H(xi) = int_0^{xi^2} K(sqrt(s)) ds``, evaluated as ``2 int_0^xi K(u) u du``."""
    xi_arr = _check_nonneg(xi, "xi")
    if kernel.poly.k == 0:
        return _return(xi_arr**2 / kernel.poly.coeffs[0], xi)
    flat = np.atleast_1d(xi_arr).ravel()
    out = np.empty_like(flat)

    def integrand(u):
        return 2.0 * kappa(kernel, u) * u

    for i, x in enumerate(flat):
        if x == 0.0:
            out[i] = 0.0
            continue
        edges = [0.0, x]
        if x > 10:
            # log-spaced panels keep each piece well resolved for very large xi
            edges = [0.0, *np.geomspace(1.0, x, 8)]
        total = 0.0
        for lo_e, hi_e in zip(edges[:-1], edges[1:]):
            val, err, info = integrate.quad(
                integrand, lo_e, hi_e, epsabs=0.0, epsrel=rtol, limit=200, full_output=1
            )[:3]
            if err > max(rtol * abs(val), 1e-300) * 10:
                raise QuadratureError(
                    f"H quadrature did not converge on [{lo_e}, {hi_e}]",
                    {"estimate": val, "abserr": err, "neval": info.get("neval")},
                )
            total += val
        out[i] = total
    out = out.reshape(np.shape(xi_arr))
    return _return(out, xi)


def exponent_a(poly):
    return poly.degree / (poly.degree + 1.0)


def degree_condition_violated(poly, n):
    """True when ``deg(g) > 4/(n-2)``; never for ``n <= 2``."""
    if n <= 2:
        return False
    return poly.degree > 4.0 / (n - 2)


class KernelTable:
    """Opt-in monotone cubic interpolant of ``K`` in ``log(1 + xi)``.

    The table is refined until the interpolant matches :func:`kappa` to
    ``rtol`` at all cell midpoints; beyond ``xi_max`` the exact kernel is used.
    """

    def __init__(self, kernel, xi_max=1e6, rtol=1e-8, n_start=256, n_max=2**17):
        self.kernel = kernel
        self.xi_max = float(xi_max)
        n = n_start
        while True:
            z = np.linspace(0.0, np.log1p(self.xi_max), n)
            vals = kappa(kernel, np.expm1(z))
            interp = PchipInterpolator(z, vals)
            zm = 0.5 * (z[1:] + z[:-1])
            exact = kappa(kernel, np.expm1(zm))
            err = np.max(np.abs(interp(zm) - exact) / exact)
            if err <= rtol or n >= n_max:
                break
            n *= 2
        if err > rtol:
            raise QuadratureError("kernel table could not reach tolerance", {"max_rel_err": err})
        self.max_rel_err = float(err)
        self.size = n
        self._interp = interp

    def __call__(self, xi):
        xi_arr = _check_nonneg(xi, "xi")
        flat = np.atleast_1d(xi_arr)
        out = np.where(
            flat <= self.xi_max,
            self._interp(np.log1p(np.minimum(flat, self.xi_max))),
            np.nan,
        )
        far = flat > self.xi_max
        if np.any(far):
            out[far] = kappa(self.kernel, flat[far])
        return _return(out.reshape(np.shape(xi_arr)), xi)
