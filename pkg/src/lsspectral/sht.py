"""
Spherical harmonic transforms on Gauss-Legendre x uniform-longitude grids.

Coefficients of a band-``F`` expansion are stored flat along the last axis
of an array, ``(F+1)**2`` entries, with ``(n, m)`` at position
``n*n + n + m``.  Leading axes are batch axes (one per radial node in the
solver).

The colatitude transform is a direct Legendre sum per azimuthal order; the
longitude transform is an FFT.  Both directions also exist in "order space"
(:func:`legendre_synthesis`, :func:`legendre_analysis`), which the solver
uses when only a few azimuthal orders are populated.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BandMismatch
from .specfun import gauss_legendre, legendre_s

__all__ = [
    "AngularGrid",
    "ModeField",
    "coeff_index",
    "num_coeffs",
    "band_of",
    "order_indices",
    "synthesize",
    "analyze",
    "legendre_synthesis",
    "legendre_analysis",
    "pointwise_product_project",
    "ProductProjector",
    "active_orders",
    "evaluate",
]


def num_coeffs(band):
    return (band + 1) ** 2


def coeff_index(n, m):
    """Flat position of ``(n, m)`` in a triangular coefficient vector."""
    return n * n + n + m


def band_of(ncoef):
    band = int(round(np.sqrt(ncoef))) - 1
    if (band + 1) ** 2 != ncoef:
        raise BandMismatch(f"{ncoef} is not a triangular coefficient count")
    return band


def order_indices(m, band):
    """Flat indices of ``(n, m)`` for ``n = |m| .. band``."""
    n = np.arange(abs(m), band + 1)
    return n * n + n + m


class AngularGrid:
    """Gauss-Legendre in ``cos(theta)`` times ``2L+1`` uniform longitudes.

    Integrates ``Y_n^m conj(Y_n'^m')`` exactly for ``n, n' <= L``.  Legendre
    tables are built lazily per order and cached; the cache is guarded so a
    grid can be shared between threads.
    """

    def __init__(self, band):
        if band < 0:
            raise ValueError("grid band must be >= 0")
        self.band = int(band)
        self.t, self.weights = gauss_legendre(self.band + 1)
        self.theta = np.arccos(self.t)
        self.nphi = 2 * self.band + 1
        self.phi = 2.0 * np.pi * np.arange(self.nphi) / self.nphi
        self._tables = {}
        self._lock = threading.Lock()

    @property
    def shape(self):
        return (self.band + 1, self.nphi)

    def legendre(self, m, nmax):
        """``S_n^{|m|}(t_i)`` for ``n = |m|..nmax``, shape ``(nmax-|m|+1, L+1)``.

        Negative orders carry the ``(-1)^m`` Condon-Shortley factor.
        """
        am = abs(m)
        with self._lock:
            tab = self._tables.get(am)
            if tab is None or tab.shape[0] < nmax - am + 1:
                tab = legendre_s(nmax, am, self.t)
                self._tables[am] = tab
        tab = tab[: nmax - am + 1]
        if m < 0 and am % 2:
            return -tab
        return tab

    def clear_cache(self):
        with self._lock:
            self._tables.clear()


@dataclass
class ModeField:
    """Triangular spherical-harmonic coefficients sampled at radial nodes.

    ``data`` has shape ``(n_radial, (band+1)**2)``.
    """

    band: int
    data: np.ndarray
    radii: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2 or self.data.shape[1] != num_coeffs(self.band):
            raise BandMismatch(
                f"data shape {self.data.shape} does not match band {self.band}"
            )

    @classmethod
    def zeros(cls, band, nrad, radii=None):
        return cls(band, np.zeros((nrad, num_coeffs(band)), dtype=complex), radii)

    @property
    def nrad(self):
        return self.data.shape[0]

    def coeff(self, n, m):
        """Radial profile of coefficient ``(n, m)``."""
        return self.data[:, coeff_index(n, m)]

    def set_coeff(self, n, m, values):
        self.data[:, coeff_index(n, m)] = values

    def resized(self, band):
        """Copy truncated or zero-padded to ``band``."""
        out = ModeField.zeros(band, self.nrad, self.radii)
        k = num_coeffs(min(band, self.band))
        out.data[:, :k] = self.data[:, :k]
        return out

    def copy(self):
        return ModeField(self.band, self.data.copy(), self.radii)

    def orders(self, tol=0.0):
        """Azimuthal orders carrying any coefficient above ``tol``."""
        return active_orders(self.data, self.band, tol)


def active_orders(coeffs, band, tol=0.0):
    mags = np.abs(np.asarray(coeffs)).reshape(-1, num_coeffs(band)).max(axis=0)
    orders = []
    for m in range(-band, band + 1):
        if np.any(mags[order_indices(m, band)] > tol):
            orders.append(m)
    return orders


def _check_band(band, grid):
    if band > grid.band:
        raise BandMismatch(f"coefficient band {band} exceeds grid band {grid.band}")


def legendre_synthesis(coeffs, grid, m, band=None):
    """Colatitude profile ``sum_n c_n^m S_n^m(t_i)`` of order ``m``.

    ``coeffs`` is a flat triangular array (batch axes first).  Returns shape
    ``coeffs.shape[:-1] + (L+1,)``.
    """
    if band is None:
        band = band_of(coeffs.shape[-1])
    _check_band(band, grid)
    tab = grid.legendre(m, band)
    return coeffs[..., order_indices(m, band)] @ tab


def legendre_analysis(profile, grid, m, band):
    """Coefficients ``c_n^m``, ``n = |m|..band``, of an order-``m`` profile.

    The profile ``g(t_i)`` stands for ``g(theta) exp(i m phi)``; the ``2 pi``
    of the longitude integral is included.
    """
    _check_band(band, grid)
    tab = grid.legendre(m, band)
    return (2.0 * np.pi) * (profile * grid.weights) @ tab.T


def synthesize(coeffs, grid, orders=None):
    """Evaluate ``sum c_n^m Y_n^m`` on ``grid``.

    Parameters
    ----------
    coeffs : ndarray
        Flat triangular coefficients, batch axes first.
    grid : AngularGrid
    orders : sequence of int, optional
        Azimuthal orders to include; others are treated as zero.

    Returns
    -------
    ndarray, shape ``coeffs.shape[:-1] + (L+1, 2L+1)``
    """
    coeffs = np.asarray(coeffs)
    band = band_of(coeffs.shape[-1])
    _check_band(band, grid)
    if orders is None:
        orders = range(-band, band + 1)
    lead = coeffs.shape[:-1]
    four = np.zeros(lead + (grid.band + 1, grid.nphi), dtype=complex)
    for m in orders:
        four[..., m % grid.nphi] = legendre_synthesis(coeffs, grid, m, band)
    return np.fft.ifft(four, axis=-1) * grid.nphi


def analyze(values, grid, band, orders=None):
    """Project grid values onto ``Y_n^m``, ``n <= band``.

    Exact (to roundoff) for inputs band-limited to the grid band.
    """
    _check_band(band, grid)
    values = np.asarray(values)
    if values.shape[-2:] != grid.shape:
        raise BandMismatch(f"values shape {values.shape[-2:]} != grid {grid.shape}")
    four = np.fft.fft(values, axis=-1) / grid.nphi
    out = np.zeros(values.shape[:-2] + (num_coeffs(band),), dtype=complex)
    if orders is None:
        orders = range(-band, band + 1)
    for m in orders:
        if abs(m) > band:
            continue
        out[..., order_indices(m, band)] = legendre_analysis(
            four[..., m % grid.nphi], grid, m, band
        )
    return out


def pointwise_product_project(u, m, grid=None, out_band=None):
    """Coefficients of the pointwise product of two expansions.

    ``u`` has band ``F`` and ``m`` band at most ``2F``; the product has
    degree at most ``3F`` and is resolved exactly on a band-``3F`` grid.
    Both factors are synthesised there (zero-padded), multiplied, and
    analysed back to ``out_band`` (default ``3F``).
    """
    u = np.asarray(u)
    m = np.asarray(m)
    fu = band_of(u.shape[-1])
    fm = band_of(m.shape[-1])
    if fm > 2 * fu:
        raise BandMismatch(f"contrast band {fm} exceeds twice the field band {fu}")
    if grid is None:
        grid = AngularGrid(3 * fu)
    elif grid.band < fu + fm:
        raise BandMismatch(f"grid band {grid.band} cannot resolve degree {fu + fm}")
    if out_band is None:
        out_band = 3 * fu
    vals = synthesize(u, grid) * synthesize(m, grid)
    return analyze(vals, grid, min(out_band, grid.band))


class ProductProjector:
    """Repeated ``I = P_F[u * m]`` with a fixed contrast, in order space.

    Only the azimuthal orders in ``u_orders`` are carried.  The contrast's
    colatitude profiles are synthesised once.  The order convolution is done
    directly when it is cheap and through an FFT in longitude otherwise;
    both are exact.
    """

    def __init__(self, contrast, band, u_orders=None, grid=None, tol=0.0):
        contrast = np.asarray(contrast, dtype=complex)
        self.band = int(band)
        self.contrast_band = band_of(contrast.shape[-1])
        if self.contrast_band > 2 * self.band:
            raise BandMismatch("contrast band exceeds twice the field band")
        self.grid = grid if grid is not None else AngularGrid(self.band + self.contrast_band)
        if self.grid.band < self.band + self.contrast_band:
            raise BandMismatch("product grid too small for the product degree")
        if u_orders is None:
            u_orders = list(range(-self.band, self.band + 1))
        self.u_orders = sorted(set(int(q) for q in u_orders))
        self.m_orders = active_orders(contrast, self.contrast_band, tol)
        self.m_profiles = {
            q: legendre_synthesis(contrast, self.grid, q, self.contrast_band)
            for q in self.m_orders
        }
        self.pairs = {
            mo: [(mu, mo - mu) for mu in self.u_orders if (mo - mu) in self.m_profiles]
            for mo in self.u_orders
        }
        npairs = sum(len(p) for p in self.pairs.values())
        # FFT route costs ~ log(nphi) per longitude sample per order
        self.use_fft = npairs > 4 * (len(self.u_orders) + len(self.m_orders))

    def __call__(self, u, rows=None):
        """Project ``u * m``; ``rows`` selects the radial nodes ``u`` covers."""
        u = np.asarray(u)
        out = np.zeros_like(u, dtype=complex)
        if not self.m_orders:
            return out
        sl = slice(None) if rows is None else rows
        mprof = {q: p[sl] for q, p in self.m_profiles.items()}
        prof = {q: legendre_synthesis(u, self.grid, q, self.band) for q in self.u_orders}
        if self.use_fft:
            nphi = self.grid.nphi
            lead = u.shape[:-1]
            fu = np.zeros(lead + (self.grid.band + 1, nphi), dtype=complex)
            fm = np.zeros((mprof[self.m_orders[0]].shape[:-1])
                          + (self.grid.band + 1, nphi), dtype=complex)
            for q, p in prof.items():
                fu[..., q % nphi] = p
            for q, p in mprof.items():
                fm[..., q % nphi] = p
            prod = np.fft.ifft(fu, axis=-1) * np.fft.ifft(fm, axis=-1) * nphi
            four = np.fft.fft(prod, axis=-1)
            for q in self.u_orders:
                out[..., order_indices(q, self.band)] = legendre_analysis(
                    four[..., q % nphi], self.grid, q, self.band)
        else:
            for mo, plist in self.pairs.items():
                if not plist:
                    continue
                acc = 0
                for mu, mc in plist:
                    acc = acc + prof[mu] * mprof[mc]
                out[..., order_indices(mo, self.band)] = legendre_analysis(
                    acc, self.grid, mo, self.band)
        return out


def evaluate(coeffs, theta, phi, orders=None):
    """Evaluate ``sum c_n^m Y_n^m`` at arbitrary angles.

    Parameters
    ----------
    coeffs : ndarray
        Flat triangular coefficients, batch axes first.
    theta, phi : array_like
        Angles of equal shape ``P``.

    Returns
    -------
    ndarray, shape ``coeffs.shape[:-1] + P``
    """
    coeffs = np.asarray(coeffs)
    band = band_of(coeffs.shape[-1])
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    t = np.cos(theta).ravel()
    if orders is None:
        orders = range(-band, band + 1)
    out = np.zeros(coeffs.shape[:-1] + (t.size,), dtype=complex)
    tables = {}
    for m in orders:
        am = abs(m)
        if am not in tables:
            tables[am] = legendre_s(band, am, t)
        tab = -tables[am] if (m < 0 and am % 2) else tables[am]
        out += (coeffs[..., order_indices(m, band)] @ tab) * np.exp(1j * m * phi.ravel())
    return out.reshape(coeffs.shape[:-1] + theta.shape)
