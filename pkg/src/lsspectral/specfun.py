"""
Special functions for the spectral Lippmann-Schwinger solver.

Spherical Bessel functions are carried in the power-rescaled form

    jt_n(x) = (2n+1)!! / x**n * j_n(x)
    yt_n(x) = x**(n+1) / (-(2n-1)!!) * y_n(x)

which are O(1) near the origin for every order.  Both satisfy three-term
recurrences with the double factorials divided out, so the scaled values
are produced directly and nothing overflows for n <= 512.  The unscaled
j_n, y_n are recovered through log-space prefactors.

Spherical harmonics use the orthonormal, Condon-Shortley convention

    Y_n^m(theta, phi) = S_n^m(cos theta) exp(i m phi),
    S_n^{-m} = (-1)^m S_n^m,

so that Y_n^{-m} = (-1)^m conj(Y_n^m).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

__all__ = [
    "log_odd_factorial",
    "modified_bessel_j",
    "modified_bessel_y",
    "modified_bessel_j_table",
    "modified_bessel_y_table",
    "spherical_bessel_j",
    "spherical_bessel_y",
    "spherical_hankel1",
    "legendre_s",
    "legendre_s_all",
    "gauss_legendre",
    "chebyshev_eval",
    "chebyshev_vander",
]

_RESCALE = 1e200


def log_odd_factorial(n):
    """Return ``log((2n+1)!!)`` for integer ``n >= -1`` (elementwise).

    ``(-1)!!`` is 1, so ``n = -1`` gives 0.  Evaluated through log-gamma,
    never as a raw product.
    """
    n = np.maximum(np.asarray(n, dtype=float), 0.0)
    # (2n+1)!! = (2n+1)! / (2^n n!); n = -1 clips to 0 -> log(1!!) = 0
    return gammaln(2.0 * n + 2.0) - n * math.log(2.0) - gammaln(n + 1.0)


def _start_order(nmax, xmax):
    # Miller start index: far enough past the turning point that the
    # dominant solution has died out by ``nmax``.
    return int(max(nmax, xmax) + 25 + 6.0 * np.cbrt(xmax) + 0.5 * np.sqrt(max(nmax, 1)))


def _jt_normalisers(x):
    """True jt_0, jt_1 and a mask selecting which one to normalise with."""
    with np.errstate(divide="ignore", invalid="ignore"):
        s, c = np.sin(x), np.cos(x)
        j0 = np.where(x > 0, s / x, 1.0)
        j1 = np.where(x > 0, (s - x * c) / x**2, 0.0)
        jt1 = np.where(x > 1.0, 3.0 * j1 / np.where(x > 0, x, 1.0), 0.0)
    small = x <= 1.0
    if np.any(small):
        # closed form cancels badly for small x
        jt1[small] = _jt_series(1, x[small])
    use_j0 = np.abs(j0) >= np.abs(j1)
    return j0, jt1, use_j0


def modified_bessel_j_table(nmax, x):
    """Scaled spherical Bessel functions ``jt_0 .. jt_nmax`` at ``x``.

    Parameters
    ----------
    nmax : int
        Highest order.
    x : array_like
        Non-negative arguments.

    Returns
    -------
    ndarray, shape ``(nmax + 1,) + x.shape``
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.ravel()
    nn = max(nmax, 1)
    out = np.empty((nn + 1, xf.size))
    if xf.size == 0:
        return out[: nmax + 1].reshape((nmax + 1,) + shape)
    top = _start_order(nn, float(xf.max()))
    x2 = xf * xf
    f_hi = np.zeros_like(xf)
    f = np.ones_like(xf)
    # true iterate = f * exp(acc); stored rows keep their own exponent
    acc = np.zeros_like(xf)
    lg = np.zeros_like(out)
    step = math.log(_RESCALE)
    # jt_{n-1} = jt_n - x^2 jt_{n+1} / ((2n+1)(2n+3))
    for n in range(top, 0, -1):
        f_lo = f - x2 * f_hi / ((2 * n + 1) * (2 * n + 3))
        f_hi, f = f, f_lo
        big = np.abs(f) > _RESCALE
        if np.any(big):
            f[big] /= _RESCALE
            f_hi[big] /= _RESCALE
            acc[big] += step
        # for x/2 < n < x the scaled iterate shrinks like exp(-0.15 x)
        small = np.maximum(np.abs(f), np.abs(f_hi)) < 1.0 / _RESCALE
        if np.any(small):
            f[small] *= _RESCALE
            f_hi[small] *= _RESCALE
            acc[small] -= step
        if n - 1 <= nn:
            out[n - 1] = f
            lg[n - 1] = acc
    j0, jt1, use_j0 = _jt_normalisers(xf)
    ref = np.where(use_j0, 0, 1)
    cols = np.arange(xf.size)
    with np.errstate(divide="ignore", invalid="ignore", under="ignore", over="ignore"):
        scale = np.where(use_j0, j0, jt1) / out[ref, cols]
        # combine mantissa, row exponent and normaliser in log space
        mag = np.log(np.abs(out)) + (lg - lg[ref, cols]) + np.log(np.abs(scale))
        out = np.sign(out) * np.sign(scale) * np.exp(mag)
    out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)
    # rows 0 and 1 are known in closed form; keep them exact
    out[0] = j0
    out[1] = jt1
    out = out[: nmax + 1]
    return out.reshape((nmax + 1,) + shape)


def modified_bessel_y_table(nmax, x):
    """Scaled spherical Neumann functions ``yt_0 .. yt_nmax`` at ``x``.

    Upward recurrence on the scaled form, which is the dominant solution and
    therefore stable; ``yt_n(0) = 1`` for every order.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.ravel()
    out = np.empty((nmax + 1, xf.size))
    out[0] = np.cos(xf)
    if nmax >= 1:
        out[1] = np.cos(xf) + xf * np.sin(xf)
    x2 = xf * xf
    for n in range(1, nmax):
        out[n + 1] = out[n] - x2 * out[n - 1] / ((2 * n + 1) * (2 * n - 1))
    return out.reshape((nmax + 1,) + shape)


def _jt_series(n, x):
    z = -0.5 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for s in range(200):
        term = term * z / ((s + 1) * (2 * n + 2 * s + 3))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total


def modified_bessel_j(n, x):
    """Scaled spherical Bessel function ``(2n+1)!!/x**n * j_n(x)``.

    Uses the ascending series where ``x**2/2 < n+1`` and the normalised
    downward recurrence elsewhere.  Equals 1 at ``x = 0``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    ser = 0.5 * x * x < n + 1
    if np.any(ser):
        out[ser] = _jt_series(n, x[ser])
    if np.any(~ser):
        out[~ser] = modified_bessel_j_table(n, x[~ser])[n]
    return out[()] if out.ndim == 0 else out


def modified_bessel_y(n, x):
    """Scaled spherical Neumann function ``x**(n+1)/(-(2n-1)!!) * y_n(x)``."""
    x = np.asarray(x, dtype=float)
    out = modified_bessel_y_table(n, x)[n]
    return out[()] if out.ndim == 0 else out


def _power_ratio(x, den):
    """``prod_i x/den_i`` as a running product.

    Rounding grows like ``len(den)`` ulps, where a log-space exponent of
    size ``L`` would cost ``L`` ulps; log space is only the fallback when
    the product leaves the double range.
    """
    x = np.asarray(x, dtype=float)
    xf = np.atleast_1d(x)
    p = np.ones_like(xf)
    with np.errstate(over="ignore", under="ignore"):
        for d in den:
            p = p * (xf / d)
    bad = (xf > 0) & (~np.isfinite(p) | (np.abs(p) < 1e-290))
    if np.any(bad):
        with np.errstate(over="ignore", under="ignore"):
            p[bad] = np.exp(den.size * np.log(xf[bad]) - np.sum(np.log(den)))
    return p.reshape(x.shape)


def spherical_bessel_j(n, x):
    """Spherical Bessel function of the first kind ``j_n(x)``, real ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    jt = modified_bessel_j(n, x)
    if n == 0:
        return jt
    return jt * _power_ratio(x, 2 * np.arange(1, n + 1) + 1.0)


def spherical_bessel_y(n, x):
    """Spherical Bessel function of the second kind ``y_n(x)``.

    Overflows to ``-inf`` where ``|y_n|`` exceeds the double range.
    """
    x = np.asarray(x, dtype=float)
    yt = modified_bessel_y(n, x)
    with np.errstate(divide="ignore", over="ignore"):
        inv = 1.0 / x
        pref = inv / _power_ratio(x, 2 * np.arange(1, n + 1) - 1.0)
        return -yt * pref


def spherical_hankel1(n, x):
    """Outgoing spherical Hankel function ``h_n^(1) = j_n + i y_n``."""
    return spherical_bessel_j(n, x) + 1j * spherical_bessel_y(n, x)


def _legendre_seed_log(m, t):
    """log |S_m^m(t)| for the orthonormal seed."""
    i = np.arange(1, m + 1)
    logc = 0.5 * (math.log((2 * m + 1) / (4 * math.pi)) + np.sum(np.log((2 * i - 1) / (2 * i))))
    if m == 0:
        return np.full(t.shape, logc)
    with np.errstate(divide="ignore"):
        logsin = 0.5 * np.log1p(-t * t)
    return logc + m * logsin


def legendre_s(band, m, t):
    """Orthonormal associated Legendre functions ``S_n^m(t)``, ``n = m..band``.

    Parameters
    ----------
    band : int
        Highest degree.
    m : int
        Order, ``0 <= m <= band``.
    t : array_like
        Points in ``[-1, 1]`` (cos of colatitude).

    Returns
    -------
    ndarray, shape ``(band - m + 1,) + t.shape``
        Includes the Condon-Shortley phase; ``sum_n |S_n^m|^2 2 pi`` integrates
        to one over ``[-1, 1]``.
    """
    if m < 0 or m > band:
        raise ValueError(f"need 0 <= m <= band, got m={m}, band={band}")
    t = np.asarray(t, dtype=float)
    shape = t.shape
    tf = t.ravel()
    out = np.empty((band - m + 1, tf.size))
    logseed = _legendre_seed_log(m, tf)
    # seeds below the double range are started from a shifted exponent and
    # shifted back afterwards; such columns stay negligible for n <= band
    shift = np.where(logseed < -600.0, -600.0 - logseed, 0.0)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    sign = -1.0 if m % 2 else 1.0
    with np.errstate(under="ignore"):
        out[0] = sign * np.exp(logseed + shift)
    if band > m:
        out[1] = math.sqrt(2 * m + 3) * tf * out[0]
    for n in range(m + 2, band + 1):
        a = math.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
        b = math.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1.0) ** 2 - 1.0))
        out[n - m] = a * (tf * out[n - m - 1] - b * out[n - m - 2])
    if np.any(shift > 0):
        with np.errstate(under="ignore"):
            out *= np.exp(-shift)
    return out.reshape((band - m + 1,) + shape)


def legendre_s_all(band, t):
    """Table of ``S_n^m(t)`` for ``0 <= m <= n <= band`` as a dict keyed by m."""
    return {m: legendre_s(band, m, t) for m in range(band + 1)}


def gauss_legendre(q):
    """Gauss-Legendre nodes and weights on ``[-1, 1]``.

    Newton iteration on ``P_q`` from Tricomi's asymptotic initial guesses.
    Nodes are returned in increasing order.
    """
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    if q == 1:
        return np.array([0.0]), np.array([2.0])
    k = np.arange(1, q + 1)
    theta = np.pi * (k - 0.25) / (q + 0.5)
    x = np.cos(theta) * (1 - (1 - 1 / q) / (8 * q * q))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for n in range(2, q + 1):
            p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
        dp = q * (x * p1 - p0) / (x * x - 1)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for n in range(2, q + 1):
        p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
    dp = q * (x * p1 - p0) / (x * x - 1)
    w = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def chebyshev_eval(l, interval, rho):
    """``T_l`` mapped to ``interval = (u0, u1)`` and evaluated at ``rho``."""
    u0, u1 = interval
    s = (np.asarray(rho, dtype=float) - 0.5 * (u1 + u0)) / (0.5 * (u1 - u0))
    s = np.clip(s, -1.0, 1.0)
    return np.cos(l * np.arccos(s))


def chebyshev_vander(s, deg):
    """Matrix ``V[..., l] = T_l(s)`` for ``l = 0..deg`` by the three-term recurrence."""
    s = np.asarray(s, dtype=float)
    v = np.empty(s.shape + (deg + 1,))
    v[..., 0] = 1.0
    if deg >= 1:
        v[..., 1] = s
    for l in range(2, deg + 1):
        v[..., l] = 2.0 * s * v[..., l - 1] - v[..., l - 2]
    return v
