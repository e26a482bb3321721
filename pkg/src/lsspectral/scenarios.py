"""
Benchmark scatterers, incident fields and exact reference solutions.

Incident field of order ``m`` (optionally centred at ``(0, 0, d)``)::

    u^i = (x^2 + y^2)^{|m|/2} exp(i k (z - d)) exp(i m phi)

Contrast kinds (``m = 1 - n^2``):

``sphere``
    Homogeneous ball of radius ``r`` and index ``n0`` at the origin.
``shifted-sphere``
    The same ball centred at ``(0, 0, d)``, ``d >= r``.
``rotated-square``
    Axisymmetric body whose meridian section is the square ``|s| + |z| <= 1``
    (a square turned by 45 degrees; ``s`` is the distance to the z axis).
``hoelder``
    ``m = -|cos t|^beta sin^|mref| t exp(i mref phi)`` on a shell
    ``inner <= rho <= outer``; smoothness in angle is set by ``beta``.
``none``
    Free space.

Harmonics carry the Condon-Shortley phase, so positive orders pick up a
``(-1)^m`` relative to the phase-free associated Legendre functions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from .errors import BandTooSmall, InvalidGeometry, SingularMatching
from .radial import RadialGrid
from .sht import AngularGrid, ModeField, analyze, coeff_index, num_coeffs
from .specfun import (
    gauss_legendre,
    legendre_s,
    log_odd_factorial,
    modified_bessel_j_table,
    modified_bessel_y_table,
)

__all__ = [
    "IncidentSpec",
    "ContrastSpec",
    "CONTRAST_KINDS",
    "incident_coefficients",
    "incident_field",
    "contrast_coefficients",
    "contrast_from_function",
    "hoelder_coefficients",
    "sphere_matching",
    "sphere_profiles",
    "sphere_field",
    "exact_solution_sphere",
    "exact_solution_shifted",
]

CONTRAST_KINDS = ("none", "sphere", "shifted-sphere", "rotated-square", "hoelder")


def _cs_sign(m):
    # phase-free Legendre -> Condon-Shortley convention
    return (-1.0) ** m if m > 0 else 1.0


@dataclass
class IncidentSpec:
    """Incident field ``s^|m| exp(ik(z-d)) exp(i m phi)``."""

    m_inc: int = 1
    k: float = 1.0
    d: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class ContrastSpec:
    """Scatterer description; see the module docstring for the kinds."""

    kind: str = "sphere"
    n0: float = 2.0
    radius: float = 1.0
    offset: float = 0.0
    beta: float = 0.4
    m_ref: int = 1
    inner: float = 1.0
    outer: float = 2.0

    def __post_init__(self):
        if self.kind not in CONTRAST_KINDS:
            raise InvalidGeometry(f"unknown contrast kind {self.kind!r}; choose from {CONTRAST_KINDS}")

    def support(self):
        """Radial interval outside which the contrast vanishes."""
        if self.kind == "sphere":
            return (0.0, self.radius)
        if self.kind == "shifted-sphere":
            return (max(self.offset - self.radius, 0.0), self.offset + self.radius)
        if self.kind == "rotated-square":
            return (0.0, 1.0)
        if self.kind == "hoelder":
            return (self.inner, self.outer)
        return (0.0, 0.0)

    def to_dict(self):
        return asdict(self)


def _radii(grid):
    return grid.nodes if isinstance(grid, RadialGrid) else np.atleast_1d(np.asarray(grid, float))


def _log_incident_scale(n, m, k):
    """log of |C_n| with u_n = C_n rho^n jt_n(k rho), and its phase."""
    am = abs(m)
    n = np.asarray(n, dtype=float)
    logc = (
        np.log(2 * n + 1)
        - am * math.log(k)
        + 0.5 * (math.log(4 * math.pi) + gammaln(n + am + 1) - np.log(2 * n + 1) - gammaln(n - am + 1))
        + n * math.log(k)
        - log_odd_factorial(n)
    )
    phase = (1j) ** ((n.astype(int) - am) % 4) * _cs_sign(m)
    return logc, phase


def _rho_pow(logc, n, rho):
    # exp(logc + n log rho) with 0**0 = 1
    with np.errstate(divide="ignore", under="ignore", invalid="ignore"):
        lr = np.where(rho > 0, np.log(np.where(rho > 0, rho, 1.0)), -np.inf)
        e = logc + n * lr
        e = np.where((n == 0) & (rho == 0), logc, e)
        return np.exp(e)


def incident_coefficients(spec, grid, F):
    """Spherical-harmonic coefficients of the incident field on the radial nodes.

    Parameters
    ----------
    spec : IncidentSpec
    grid : RadialGrid or array_like
        Radial nodes (or explicit radii).
    F : int
        Band.

    Returns
    -------
    ModeField
        Only order ``spec.m_inc`` is populated.
    """
    m = int(spec.m_inc)
    if abs(m) > F:
        raise BandTooSmall(f"band {F} cannot hold incident order {m}")
    rho = _radii(grid)
    k = float(spec.k)
    out = ModeField.zeros(F, rho.size, rho)
    ns = np.arange(abs(m), F + 1)
    logc, phase = _log_incident_scale(ns, m, k)
    jt = modified_bessel_j_table(F, k * rho)
    shift = np.exp(-1j * k * spec.d)
    for i, n in enumerate(ns):
        out.data[:, coeff_index(n, m)] = shift * phase[i] * _rho_pow(logc[i], n, rho) * jt[n]
    return out


def incident_field(spec, x, y, z):
    """Closed-form incident field at Cartesian points."""
    m = int(spec.m_inc)
    s = np.hypot(x, y)
    phi = np.arctan2(y, x)
    return s ** abs(m) * np.exp(1j * spec.k * (z - spec.d)) * np.exp(1j * m * phi)


# ---------------------------------------------------------------- contrasts


def _legendre_p(nmax, x):
    """Unnormalised ``P_n(x)``, ``n = 0..nmax``."""
    x = np.asarray(x, dtype=float)
    p = np.empty((nmax + 1,) + x.shape)
    p[0] = 1.0
    if nmax >= 1:
        p[1] = x
    for n in range(1, nmax):
        p[n + 1] = ((2 * n + 1) * x * p[n] - n * p[n - 1]) / (n + 1)
    return p


def _tail_integral(nmax, x):
    """``int_x^1 P_n(t) dt`` for ``n = 0..nmax``."""
    x = np.asarray(x, dtype=float)
    p = _legendre_p(nmax + 1, x)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0 - x
    n = np.arange(1, nmax + 1).reshape((-1,) + (1,) * x.ndim)
    out[1:] = (p[:-2] - p[2:]) / (2 * n + 1)
    return out


def _axisymmetric_field(band, rho, integrals, scale):
    # integrals[n, i] = int_{set(rho_i)} P_n dt -> coefficient of Y_n^0
    out = ModeField.zeros(band, rho.size, rho)
    n = np.arange(band + 1)
    norm = np.sqrt((2 * n + 1) / (4 * math.pi))
    out.data[:, n * n + n] = (scale * 2 * math.pi * norm[:, None] * integrals).T
    return out


def _cap_cosine(rho, d, r):
    """``cos theta_0`` of the circle intersection, clipped to [-1, 1]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (rho * rho + d * d - r * r) / (2 * rho * d)
    return np.clip(np.nan_to_num(c, nan=1.0), -1.0, 1.0)


def _square_integrals(nmax, rho):
    # set where sin(theta) + |cos(theta)| <= 1/rho, as a union of t-intervals
    out = np.zeros((nmax + 1, rho.size))
    full = _tail_integral(nmax, np.array(-1.0))  # int_{-1}^1
    for i, r in enumerate(rho):
        if r <= 0:
            out[:, i] = full
            continue
        c = 1.0 / r
        if c >= math.sqrt(2.0):
            out[:, i] = full
        elif c >= 1.0:
            a = math.asin(c / math.sqrt(2.0))
            ta = math.cos(a - math.pi / 4)
            tb = math.cos(3 * math.pi / 4 - a)
            A = _tail_integral(nmax, np.array([ta, tb, -tb, -ta, -1.0]))
            # [ta, 1] + [-tb, tb] + [-1, -ta]
            out[:, i] = A[:, 0] + (A[:, 2] - A[:, 1]) + (A[:, 4] - A[:, 3])
    return out


def hoelder_coefficients(beta, m_ref, nmax):
    """Angular coefficients of ``-|t|^beta (1-t^2)^{|mref|/2} exp(i mref phi)``.

    Returns an array over ``n = |mref| .. nmax``; entries with odd
    ``n - |mref|`` vanish.  Gamma-function ratios are combined in log space.
    """
    a = abs(int(m_ref))
    out = np.zeros(max(nmax - a + 1, 0))
    b2 = 0.5 * beta
    base = (
        math.log(math.pi)
        - (beta + a) * math.log(2.0)
        + gammaln(1 + beta)
        - gammaln(1 + b2)
        - gammaln(1.5 + b2)
    )
    for l in range((nmax - a) // 2 + 1):
        n = a + 2 * l
        lg = base + 0.5 * (math.log(2 * n + 1) + gammaln(n - a + 1) - gammaln(n + a + 1))
        lg += gammaln(n + a + 1) - gammaln(n - a + 1)
        # prod_{s<l} (beta/2 - s) and prod_{s<a+l} (beta/2 + 3/2 + s)
        sign = 1.0
        for s in range(l):
            f = b2 - s
            if f == 0:
                sign = 0.0
                break
            sign *= math.copysign(1.0, f)
            lg += math.log(abs(f))
        lg -= gammaln(b2 + 1.5 + a + l) - gammaln(b2 + 1.5)
        out[n - a] = -sign * math.exp(lg) * _cs_sign(m_ref)
    return out


def contrast_coefficients(spec, grid, F):
    """Coefficients of the contrast ``m = 1 - n^2`` at band ``2F``.

    Parameters
    ----------
    spec : ContrastSpec
    grid : RadialGrid or array_like
    F : int
        Field band; the contrast is returned at band ``2F``.

    Returns
    -------
    ModeField
    """
    rho = _radii(grid)
    band = 2 * int(F)
    scale = 1.0 - spec.n0 ** 2
    R = grid.R if isinstance(grid, RadialGrid) else float(np.max(rho, initial=0.0))
    kind = spec.kind
    if kind == "none":
        return ModeField.zeros(band, rho.size, rho)
    if kind == "sphere":
        if not 0 < spec.radius <= R:
            raise InvalidGeometry(f"sphere radius {spec.radius} outside (0, R={R}]")
        out = ModeField.zeros(band, rho.size, rho)
        out.data[:, 0] = np.where(rho <= spec.radius, scale * math.sqrt(4 * math.pi), 0.0)
        return out
    if kind == "shifted-sphere":
        d, r = spec.offset, spec.radius
        if r <= 0 or r > d:
            raise InvalidGeometry(f"shifted sphere needs 0 < r <= d, got r={r}, d={d}")
        if d + r > R:
            raise InvalidGeometry(f"shifted sphere reaches {d + r}, beyond R={R}")
        x0 = _cap_cosine(rho, d, r)
        inside = (rho >= d - r) & (rho <= d + r)
        ints = _tail_integral(band, x0) * inside
        return _axisymmetric_field(band, rho, ints, scale)
    if kind == "rotated-square":
        if R < 1.0:
            raise InvalidGeometry(f"rotated square needs R >= 1, got {R}")
        return _axisymmetric_field(band, rho, _square_integrals(band, rho), scale)
    if kind == "hoelder":
        if abs(spec.m_ref) > band:
            raise BandTooSmall(f"contrast band {band} cannot hold order {spec.m_ref}")
        if not (0 <= spec.inner < spec.outer <= R):
            raise InvalidGeometry(f"shell [{spec.inner}, {spec.outer}] not inside [0, {R}]")
        if spec.beta < 0:
            raise InvalidGeometry("beta must be >= 0")
        out = ModeField.zeros(band, rho.size, rho)
        c = hoelder_coefficients(spec.beta, spec.m_ref, band)
        a = abs(spec.m_ref)
        shell = ((rho >= spec.inner) & (rho <= spec.outer)).astype(float)
        for n in range(a, band + 1):
            out.data[:, coeff_index(n, spec.m_ref)] = c[n - a] * shell
        return out
    raise InvalidGeometry(f"unknown contrast kind {kind!r}")


def contrast_from_function(func, grid, F, oversample=2):
    """Project a user contrast ``func(x, y, z)`` onto band ``2F`` per radial node.

    The function is sampled on an angular grid ``oversample`` times finer
    than the target band; non-smooth functions alias accordingly.
    """
    rho = _radii(grid)
    band = 2 * int(F)
    ag = AngularGrid(oversample * band)
    st = np.sin(ag.theta)[:, None]
    x = rho[:, None, None] * st * np.cos(ag.phi)
    y = rho[:, None, None] * st * np.sin(ag.phi)
    z = rho[:, None, None] * ag.t[:, None] * np.ones_like(ag.phi)
    vals = np.asarray(func(x, y, z), dtype=complex) * np.ones(x.shape)
    return ModeField(band, analyze(vals, ag, band), rho)


# ---------------------------------------------------------- exact solutions


def _scaled_hankel(nmax, x):
    """``H_n(x)`` with ``h_n(x) = (2n-1)!!/x^(n+1) * H_n(x)``, ``n = 0..nmax+1``.

    ``H_n = x^(2n+1)/((2n+1)!!(2n-1)!!) jt_n - i yt_n`` never vanishes and
    stays in range where ``h_n`` itself would overflow.
    """
    x = np.asarray(x, dtype=float)
    jt = modified_bessel_j_table(nmax + 1, x)
    yt = modified_bessel_y_table(nmax + 1, x)
    n = np.arange(nmax + 2).reshape((-1,) + (1,) * x.ndim)
    with np.errstate(divide="ignore", under="ignore"):
        lg = (2 * n + 1) * np.log(x) - log_odd_factorial(n) - log_odd_factorial(n - 1)
        return np.exp(lg) * jt - 1j * yt, jt, yt


def sphere_matching(k, n0, radius, nmax, m_inc=0):
    """Interior and scattered amplitudes for a homogeneous ball.

    For each ``n = |m_inc| .. nmax`` the interior field is
    ``C_n alpha_n rho^n jt_n(n0 k rho)`` and the scattered field
    ``C_n r^n beta_n h_n(k rho)/h_n(k r)``, where ``C_n rho^n jt_n(k rho)`` is
    the incident coefficient.  Value and radial derivative are matched at
    ``rho = r``.

    Returns
    -------
    alpha, beta : ndarray
    residual : float
        Largest residual of the matching equations.

    Raises
    ------
    SingularMatching
        Relative determinant below 1e-14.
    """
    a = abs(m_inc)
    ns = np.arange(a, nmax + 1)
    x = n0 * k * radius
    kr = k * radius
    jx = modified_bessel_j_table(nmax + 1, np.array(x))
    jk = modified_bessel_j_table(nmax + 1, np.array(kr))
    H, _, _ = _scaled_hankel(nmax, np.array(kr))
    alpha = np.empty(ns.size, dtype=complex)
    beta = np.empty(ns.size, dtype=complex)
    resid = 0.0
    for i, n in enumerate(ns):
        d_in = n * jx[n] - x * x * jx[n + 1] / (2 * n + 3)
        d_inc = n * jk[n] - kr * kr * jk[n + 1] / (2 * n + 3)
        # r h'/h at kr from h_{n+1}/h_n = (2n+1)/x * H_{n+1}/H_n
        lh = n - (2 * n + 1) * H[n + 1] / H[n]
        A = np.array([[jx[n], -1.0], [d_in, -lh]], dtype=complex)
        rhs = np.array([jk[n], d_inc], dtype=complex)
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        size = max(abs(A[0, 0] * A[1, 1]), abs(A[0, 1] * A[1, 0]), 1e-300)
        if abs(det) / size < 1e-14:
            raise SingularMatching(f"matching system singular at n={n}")
        sol = np.linalg.solve(A, rhs)
        alpha[i], beta[i] = sol
        r = np.abs(A @ sol - rhs).max() / max(np.abs(rhs).max(), 1e-300)
        resid = max(resid, float(r))
    return alpha, beta, resid


def sphere_profiles(k, m_inc, n0, radius, nmax, rho, include_incident=True):
    """Radial coefficient profiles of the ball solution, ``n = |m_inc|..nmax``.

    Returns shape ``(nmax - |m_inc| + 1, len(rho))``.  With
    ``include_incident=False`` the incident part outside the ball is
    omitted, leaving only the scattered field there.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    a = abs(m_inc)
    ns = np.arange(a, nmax + 1)
    alpha, beta, _ = sphere_matching(k, n0, radius, nmax, m_inc)
    logc, phase = _log_incident_scale(ns, m_inc, k)
    inside = rho <= radius
    out = np.zeros((ns.size, rho.size), dtype=complex)
    ri, ro = rho[inside], rho[~inside]
    if ri.size:
        jin = modified_bessel_j_table(nmax, n0 * k * ri)
        for i, n in enumerate(ns):
            out[i, inside] = phase[i] * alpha[i] * _rho_pow(logc[i], n, ri) * jin[n]
    if ro.size:
        jout = modified_bessel_j_table(nmax, k * ro)
        Hout, _, _ = _scaled_hankel(nmax, k * ro)
        Hr, _, _ = _scaled_hankel(nmax, np.array(k * radius))
        for i, n in enumerate(ns):
            with np.errstate(under="ignore"):
                sc = np.exp(logc[i] + n * math.log(radius) + (n + 1) * np.log(radius / ro))
            val = beta[i] * sc * Hout[n] / Hr[n]
            if include_incident:
                val = val + _rho_pow(logc[i], n, ro) * jout[n]
            out[i, ~inside] = phase[i] * val
    return out


def exact_solution_sphere(k, m_inc, n0, F, grid, radius=1.0):
    """Total field of a plane-wave-derived incident order on a centred ball.

    Returns
    -------
    ModeField
        Band-``F`` coefficients on the radial nodes; only order ``m_inc``.
    """
    if abs(m_inc) > F:
        raise BandTooSmall(f"band {F} cannot hold incident order {m_inc}")
    rho = _radii(grid)
    prof = sphere_profiles(k, m_inc, n0, radius, F, rho)
    out = ModeField.zeros(F, rho.size, rho)
    for i, n in enumerate(range(abs(m_inc), F + 1)):
        out.data[:, coeff_index(n, m_inc)] = prof[i]
    return out


def _series_terms(k, n0, radius, rmax):
    return int(math.ceil(k * max(n0, 1.0) * max(radius, 1e-3) + 2 * math.sqrt(k * radius + 1) + 40))


def sphere_field(k, m_inc, n0, x, y, z, radius=1.0, center=0.0, nmax=None):
    """Total field of the ball problem at Cartesian points.

    The ball is centred at ``(0, 0, center)`` and the incident field is
    ``s^|m| exp(ik(z - center)) exp(i m phi)``.  Outside the ball the
    incident part is evaluated in closed form and only the scattered field
    is summed.
    """
    x, y, z = (np.asarray(v, dtype=float) for v in np.broadcast_arrays(x, y, z))
    zl = z - center
    rho = np.sqrt(x * x + y * y + zl * zl)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(rho > 0, zl / np.where(rho > 0, rho, 1.0), 1.0)
    phi = np.arctan2(y, x)
    if nmax is None:
        nmax = max(abs(m_inc) + 1, _series_terms(k, n0, radius, rho.max(initial=0.0)))
    a = abs(m_inc)
    flat_r = rho.ravel()
    prof = sphere_profiles(k, m_inc, n0, radius, nmax, flat_r, include_incident=False)
    S = legendre_s(nmax, a, t.ravel())
    if m_inc < 0 and a % 2:
        S = -S
    val = np.sum(prof * S, axis=0).reshape(rho.shape) * np.exp(1j * m_inc * phi)
    outside = rho > radius
    inc = IncidentSpec(m_inc, k, center)
    return np.where(outside, val + incident_field(inc, x, y, z), val)


def exact_solution_shifted(k, m_inc, d, F, grid, n0=2.0, radius=1.0, quad_order=None):
    """Ball solution for a ball centred at ``(0, 0, d)``, re-expanded about the origin.

    The field is evaluated at shifted points and projected per radial node
    with Gauss-Legendre quadrature in ``cos theta``, split where the node's
    sphere crosses the ball surface (the field is only C^1 there).
    """
    if abs(m_inc) > F:
        raise BandTooSmall(f"band {F} cannot hold incident order {m_inc}")
    if d < 0:
        raise InvalidGeometry("offset must be >= 0")
    rho = _radii(grid)
    a = abs(m_inc)
    q = quad_order or (F + int(2 * k * (rho.max(initial=0.0) + d)) + 48)
    tq, wq = gauss_legendre(q)
    out = ModeField.zeros(F, rho.size, rho)
    nmax = max(a + 1, _series_terms(k, n0, radius, rho.max(initial=0.0) + d))
    for i, r in enumerate(rho):
        if d > 0 and r > 0:
            x0 = float(_cap_cosine(np.array(r), d, radius))
        else:
            x0 = -1.0
        pieces = [(-1.0, x0), (x0, 1.0)] if -1.0 < x0 < 1.0 else [(-1.0, 1.0)]
        coef = np.zeros(F - a + 1, dtype=complex)
        for lo, hi in pieces:
            t = 0.5 * (hi + lo) + 0.5 * (hi - lo) * tq
            w = 0.5 * (hi - lo) * wq
            s = r * np.sqrt(np.clip(1 - t * t, 0, None))
            vals = sphere_field(k, m_inc, n0, s, 0.0 * s, r * t, radius, d, nmax)
            S = legendre_s(F, a, t)
            if m_inc < 0 and a % 2:
                S = -S
            coef += 2 * math.pi * (S * (vals * w)).sum(axis=1)
        out.data[i, [coeff_index(n, m_inc) for n in range(a, F + 1)]] = coef
    return out
