"""
Slow reference evaluators, independent of the fast solver's machinery.

:func:`ls_apply_dense` integrates the volume potential in polar coordinates
centred on each target point.  The ``r^2`` Jacobian cancels the ``1/r`` of
the Green's function, so the integrand is smooth along every ray, and the
ray length to the boundary of the support ball is known in closed form.
Tensor Gauss rules in ``(r, cos, phi)`` then converge spectrally for smooth
integrands on the ball.  No addition theorem, harmonic transform or
radial moment is used.

:func:`addition_theorem_check` compares the free-space Green's function
with its multipole series; it exercises the special functions and harmonic
normalisation of the fast solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonSeparated
from .specfun import (
    gauss_legendre,
    legendre_s,
    log_odd_factorial,
    modified_bessel_j_table,
    modified_bessel_y_table,
)

__all__ = ["DenseField", "ls_apply_dense", "volume_potential", "addition_theorem_check", "greens_function"]


@dataclass
class DenseField:
    """Field values at explicit Cartesian points."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=complex)
        if self.points.shape[-1] != 3 or self.values.shape != self.points.shape[:-1]:
            raise ValueError("points must be (N, 3) with one value per point")


def greens_function(x, y, k):
    """``exp(ik|x-y|) / (4 pi |x-y|)``."""
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1)
    return np.exp(1j * k * r) / (4 * math.pi * r)


def _ray_rule(n_radial, n_polar, n_azimuth):
    tr, wr = gauss_legendre(n_radial)
    tc, wc = gauss_legendre(n_polar)
    ph = 2 * math.pi * np.arange(n_azimuth) / n_azimuth
    wp = np.full(n_azimuth, 2 * math.pi / n_azimuth)
    st = np.sqrt(1 - tc * tc)
    dirs = np.stack(
        [st[:, None] * np.cos(ph), st[:, None] * np.sin(ph), tc[:, None] * np.ones_like(ph)], axis=-1
    ).reshape(-1, 3)
    wdir = (wc[:, None] * wp).ravel()
    return 0.5 * (tr + 1), 0.5 * wr, dirs, wdir


def volume_potential(f, k, target, radius, n_radial=48, n_polar=48, n_azimuth=96):
    """``int_{|y|<radius} Phi(target, y) f(y) dy`` for a target inside the ball.

    Parameters
    ----------
    f : callable
        ``f(x, y, z)`` on arrays, smooth on the closed ball.
    k : float
    target : array_like, shape (3,)
    radius : float
    """
    x = np.asarray(target, dtype=float)
    if np.linalg.norm(x) >= radius:
        raise ValueError("target must lie strictly inside the support ball")
    s, ws, dirs, wdir = _ray_rule(n_radial, n_polar, n_azimuth)
    xd = dirs @ x
    rmax = -xd + np.sqrt(xd * xd - x @ x + radius * radius)
    r = rmax[:, None] * s[None, :]
    pts = x + r[..., None] * dirs[:, None, :]
    vals = f(pts[..., 0], pts[..., 1], pts[..., 2])
    # r^2 dr / r = r dr
    integrand = r * np.exp(1j * k * r) * vals / (4 * math.pi)
    return np.sum(wdir * rmax * (integrand @ ws))


def ls_apply_dense(u, m, k, targets, radius, n_radial=48, n_polar=48, n_azimuth=96):
    """``u(x) + k^2 int Phi(x, y) m(y) u(y) dy`` at the target points.

    This is the system operator whose solution equals the incident field.

    Parameters
    ----------
    u, m : callable
        Field and contrast as functions of Cartesian coordinates.  ``m`` must
        vanish outside the ball of the given radius and be smooth inside it.
    k : float
    targets : array_like, shape (N, 3)
        Points strictly inside the ball.

    Returns
    -------
    DenseField
    """
    pts = np.atleast_2d(np.asarray(targets, dtype=float))

    def f(x, y, z):
        return np.asarray(m(x, y, z)) * np.asarray(u(x, y, z))

    vals = np.empty(len(pts), dtype=complex)
    for i, p in enumerate(pts):
        base = complex(np.asarray(u(*p)))
        vals[i] = base + k * k * volume_potential(f, k, p, radius, n_radial, n_polar, n_azimuth)
    return DenseField(pts, vals)


def _scaled_h(nmax, x):
    # H_n(x) with h_n = (2n-1)!!/x^(n+1) H_n; finite at x = 0
    jt = modified_bessel_j_table(nmax, np.array(x, dtype=float))
    yt = modified_bessel_y_table(nmax, np.array(x, dtype=float))
    n = np.arange(nmax + 1)
    with np.errstate(divide="ignore", under="ignore"):
        lg = (2 * n + 1) * np.log(x) - log_odd_factorial(n) - log_odd_factorial(n - 1)
        return np.exp(lg) * jt - 1j * yt


def addition_theorem_check(x, y, k, N):
    """Green's function in closed form and as an ``N``-term multipole series.

    The series is ``ik sum_n h_n(k r>) j_n(k r<) sum_m Y_n^m(x>) conj Y_n^m(x<)``
    evaluated with power-rescaled Bessel functions, so it is finite for any
    ``N`` and tends to the static expansion as ``k -> 0`` (``k = 0`` allowed).

    Returns
    -------
    direct, series : complex

    Raises
    ------
    NonSeparated
        If ``| |x| - |y| | < 1e-6``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx, ry = np.linalg.norm(x), np.linalg.norm(y)
    if abs(rx - ry) < 1e-6:
        raise NonSeparated(f"radii {rx} and {ry} are not separated")
    big, small = (x, y) if rx > ry else (y, x)
    A, B = max(rx, ry), min(rx, ry)
    dist = np.linalg.norm(x - y)
    direct = np.exp(1j * k * dist) / (4 * math.pi * dist)

    def angles(p, r):
        t = p[2] / r if r > 0 else 1.0
        return min(max(t, -1.0), 1.0), math.atan2(p[1], p[0])

    ta, pa = angles(big, A)
    tb, pb = angles(small, B)
    jt = modified_bessel_j_table(N, np.array(k * B))
    H = _scaled_h(N, k * A)
    total = 0.0 + 0.0j
    for mm in range(0, N + 1):
        Sa = legendre_s(N, mm, np.array([ta]))[:, 0]
        Sb = legendre_s(N, mm, np.array([tb]))[:, 0]
        ang = Sa * Sb * (2 * math.cos(mm * (pa - pb)) if mm else 1.0)
        n = np.arange(mm, N + 1)
        with np.errstate(under="ignore"):
            radial = 1j * np.power(B / A, n) / A
        total += np.sum(radial * jt[mm:] * H[mm:] / (2 * n + 1) * ang)
    return complex(direct), complex(total)
