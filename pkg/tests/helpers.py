"""Independent reference evaluators shared by the test modules."""
from __future__ import annotations

import math
import warnings

import mpmath
import numpy as np
from scipy import integrate, special

mpmath.mp.dps = 40


def mp_sph_j(n, x):
    """``j_n(x)`` in extended precision."""
    x = mpmath.mpf(x)
    if x == 0:
        return mpmath.mpf(1 if n == 0 else 0)
    return mpmath.sqrt(mpmath.pi / (2 * x)) * mpmath.besselj(n + mpmath.mpf(1) / 2, x)


def mp_sph_y(n, x):
    x = mpmath.mpf(x)
    return mpmath.sqrt(mpmath.pi / (2 * x)) * mpmath.bessely(n + mpmath.mpf(1) / 2, x)


def mp_odd_factorial(n):
    """``(2n+1)!!`` as an exact integer, ``(-1)!! = 1``."""
    out = 1
    for k in range(1, 2 * n + 2, 2):
        out *= k
    return out


def rodrigues_s(n, m, t):
    """Orthonormal ``S_n^m(t)`` with Condon-Shortley phase, exact polynomial algebra."""
    # (t^2 - 1)^n as integer coefficients, lowest power first
    coef = [0] * (2 * n + 1)
    for j in range(n + 1):
        coef[2 * j] = math.comb(n, j) * (-1) ** (n - j)
    for _ in range(n + m):
        coef = [i * c for i, c in enumerate(coef)][1:]
    t = mpmath.mpf(t)
    deriv = sum(mpmath.mpf(c) * t**i for i, c in enumerate(coef))
    p = (-1) ** m * (1 - t * t) ** (mpmath.mpf(m) / 2) * deriv / (2**n * math.factorial(n))
    norm = mpmath.sqrt(mpmath.mpf(2 * n + 1) / (4 * mpmath.pi) * math.factorial(n - m) / math.factorial(n + m))
    return float(norm * p)


def cquad(f, lo, hi, epsrel=1e-13):
    """Adaptive quadrature of a complex integrand."""
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=400)
    with warnings.catch_warnings():
        # quad flags roundoff once it reaches machine precision
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        re = integrate.quad(lambda r: complex(f(r)).real, lo, hi, **opts)[0]
        im = integrate.quad(lambda r: complex(f(r)).imag, lo, hi, **opts)[0]
    return re + 1j * im


def raw_kernel(n, k, R, poly, a):
    """``-k^3 [h_n(ka) int_0^a j_n I rho^2 + j_n(ka) int_a^R h_n I rho^2]``.

    Raw spherical Bessel functions from scipy and adaptive quadrature; no
    rescaling of any kind.
    """
    jn = lambda r: special.spherical_jn(n, k * r)
    yn = lambda r: special.spherical_yn(n, k * r)
    inner = cquad(lambda r: jn(r) * poly(r) * r * r, 0.0, a)
    outer_j = cquad(lambda r: jn(r) * poly(r) * r * r, a, R)
    outer_y = cquad(lambda r: yn(r) * poly(r) * r * r, a, R)
    h_a = jn(a) + 1j * yn(a)
    return -(k**3) * (h_a * inner + jn(a) * (outer_j + 1j * outer_y))


def random_poly(rng, degree, scale=1.0):
    """Complex polynomial on ``[0, R]`` as a callable."""
    c = (rng.standard_normal(degree + 1) + 1j * rng.standard_normal(degree + 1)) * scale
    return lambda r: np.polynomial.polynomial.polyval(r, c)


ORACLE_CASES = {
    # (u, m) pairs whose products are polynomials the discretisation holds exactly
    "cubic field, constant contrast": (
        lambda x, y, z: 1 + 0.5 * x - 0.3j * y * z + 0.2 * z**3,
        lambda x, y, z: (0.8 + 0.3j) * np.ones_like(x),
    ),
    "linear field, radial contrast": (
        lambda x, y, z: 1 - 0.4 * x + 0.6j * z,
        lambda x, y, z: 1.2 * (1 - x * x - y * y - z * z),
    ),
    "constant field, angular contrast": (
        lambda x, y, z: (1 + 0j) * np.ones_like(x),
        lambda x, y, z: (1 - x * x - y * y - z * z) * (1 + 0.4 * z + 0.3j * (x + 1j * y)),
    ),
}
