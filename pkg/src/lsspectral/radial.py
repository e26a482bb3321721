"""
Radial discretisation and the overflow-safe radial kernel.

For one harmonic degree ``n`` the kernel acting on a radial profile ``I(rho)``
is

    K(a) = i k^2/(2n+1) [ yt_n(ka) P(a) + jt_n(ka) Q(a) ]
           - k^2 jt_n(ka) B_n(a) P(R)

with the normalised running integrals

    P(a) = int_0^a (rho/a)^(n+1) jt_n(k rho) I(rho) rho drho
    Q(a) = int_a^R (a/rho)^n     yt_n(k rho) I(rho) rho drho
    B_n(a) = (ka)^n (kR)^(n+1) / ((2n+1)!!)^2        (evaluated in log space)

``P`` and ``Q`` only ever see power ratios <= 1, so nothing over- or
underflows harmfully for any degree.  Between consecutive breakpoints the
running integrals are advanced by

    P(s1) = (s0/s1)^(n+1) P(s0) + int_s0^s1 (rho/s1)^(n+1) jt_n I rho drho
    Q(s0) = (s0/s1)^n     Q(s1) + int_s0^s1 (s0/rho)^n    yt_n I rho drho

and the segment integrals come from precomputed moments against the
interval's Chebyshev basis.  True (unnormalised) moments are recovered as
``exp(log_scale) * value``.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CacheError, InvalidConfig, ScalingOverflow
from .specfun import (
    chebyshev_vander,
    gauss_legendre,
    log_odd_factorial,
    modified_bessel_j,
    modified_bessel_y,
)

__all__ = [
    "RadialGrid",
    "build_grid",
    "chebyshev_fit",
    "interpolate_radial",
    "MomentTable",
    "precompute_moments",
    "cumulative_integrals",
    "KernelCoefficients",
    "assemble_kernel",
    "RadialKernel",
    "OP_COUNTER",
]

# multiply-add counter for the running-integral stage (cost-scaling checks)
OP_COUNTER = {"cumulative": 0}

_LOG_MAX = 700.0


class RadialGrid:
    """``Ni`` equal intervals on ``[0, R]``, ``Nd`` Chebyshev points each."""

    def __init__(self, R, Ni, Nd):
        if not R > 0:
            raise InvalidConfig(f"support radius must be positive, got {R}")
        if int(Ni) != Ni or Ni < 1:
            raise InvalidConfig(f"interval count must be a positive integer, got {Ni}")
        if int(Nd) != Nd or Nd < 2:
            raise InvalidConfig(f"interpolation order must be >= 2, got {Nd}")
        self.R = float(R)
        self.Ni = int(Ni)
        self.Nd = int(Nd)
        self.edges = np.linspace(0.0, self.R, self.Ni + 1)
        k = np.arange(1, self.Nd + 1)
        self.cheb = -np.cos((2 * k - 1) * np.pi / (2 * self.Nd))
        lo, hi = self.edges[:-1, None], self.edges[1:, None]
        self.interval_nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * self.cheb
        self.nodes = self.interval_nodes.ravel()
        # breakpoints of each interval: u0, rho_1..rho_Nd, u1
        self.breaks = np.concatenate([lo, self.interval_nodes, hi], axis=1)
        vander = np.cos(np.outer(np.arccos(self.cheb), np.arange(self.Nd)))
        scale = np.full(self.Nd, 2.0 / self.Nd)
        scale[0] = 1.0 / self.Nd
        # discrete orthogonality of T_l at first-kind points
        self.fit_matrix = scale[:, None] * vander.T
        self.vander = vander

    @property
    def size(self):
        return self.Ni * self.Nd

    @property
    def intervals(self):
        return np.stack([self.edges[:-1], self.edges[1:]], axis=1)

    def key(self):
        return (self.R, self.Ni, self.Nd)

    def __repr__(self):
        return f"RadialGrid(R={self.R}, Ni={self.Ni}, Nd={self.Nd})"


def build_grid(R, Ni, Nd):
    return RadialGrid(R, Ni, Nd)


def chebyshev_fit(values, grid=None):
    """Interpolating Chebyshev coefficients from values at the first-kind points.

    ``values`` has the ``Nd`` node values on its last axis.
    """
    values = np.asarray(values)
    nd = values.shape[-1]
    if grid is not None and grid.Nd == nd:
        fit = grid.fit_matrix
    else:
        k = np.arange(1, nd + 1)
        x = -np.cos((2 * k - 1) * np.pi / (2 * nd))
        v = np.cos(np.outer(np.arccos(x), np.arange(nd)))
        scale = np.full(nd, 2.0 / nd)
        scale[0] = 1.0 / nd
        fit = scale[:, None] * v.T
    return values @ fit.T


def interpolate_radial(values, grid, radii):
    """Evaluate the piecewise Chebyshev interpolant of nodal data at ``radii``.

    ``values`` has the ``Ni*Nd`` node values on its first axis.  Radii
    outside ``[0, R]`` are clamped to the end intervals.
    """
    values = np.asarray(values)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    per = values.reshape((grid.Ni, grid.Nd) + values.shape[1:])
    coef = np.moveaxis(chebyshev_fit(np.moveaxis(per, 1, -1), grid), -1, 1)
    h = grid.R / grid.Ni
    j = np.clip((radii // h).astype(int), 0, grid.Ni - 1)
    lo = grid.edges[j]
    s = np.clip(2.0 * (radii - lo) / h - 1.0, -1.0, 1.0)
    vand = chebyshev_vander(s, grid.Nd - 1)
    return np.einsum("pl,pl...->p...", vand, coef[j])


def _quad_order(nd, n, seglen, k):
    return max(2 * (nd + n // 4) + 8 + int(math.ceil(2.0 * k * seglen)), 32)


def _segment_rule(s0, s1, n, side, q):
    """Nodes/weights in rho for one family of segments.

    ``side='j'`` integrates against (rho/s1)^(n+1), ``side='y'`` against
    (s0/rho)^n.  Where that weight decays by more than e^-8 across the
    segment (by more than e^-8), an exponential change of variables
    concentrates the nodes at the end where it is O(1); the part of the
    segment where it has fallen below e^-75 is dropped.
    """
    x, w = gauss_legendre(q)
    s0 = np.asarray(s0, dtype=float)[..., None]
    s1 = np.asarray(s1, dtype=float)[..., None]
    p = n + 1 if side == "j" else n
    with np.errstate(divide="ignore"):
        span = np.where(s0 > 0, np.log(s1 / np.where(s0 > 0, s0, 1.0)), np.inf)
    with np.errstate(invalid="ignore"):
        steep = (s0 > 0) & (p > 0) & (np.where(s0 > 0, p * span, 0.0) > 8.0)
    # plain rule in rho
    rho = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * x
    wts = 0.5 * (s1 - s0) * w * np.ones_like(rho)
    if np.any(steep):
        tmax = np.minimum(span, 75.0 / max(p, 1))
        tau = 0.5 * tmax * (x + 1.0)
        wt = 0.5 * tmax * w
        if side == "j":
            r2 = s1 * np.exp(-tau)
        else:
            r2 = s0 * np.exp(tau)
        w2 = wt * r2
        sm = np.broadcast_to(steep, rho.shape)
        rho = np.where(sm, r2, rho)
        wts = np.where(sm, w2, wts)
    return rho, wts


@dataclass
class MomentTable:
    """Normalised Chebyshev moments of the scaled Bessel weights.

    Arrays have shape ``(F+1, Ni, Nd+1, Nd)``: degree, interval, segment of
    the interval (between consecutive breakpoints), Chebyshev degree.

    ``jmom * exp(jlog)`` is ``int rho^(n+2) jt_n(k rho) T_l drho`` and
    ``ymom * exp(ylog)`` is ``int rho^(1-n) yt_n(k rho) T_l drho`` over the
    segment; ``jlog``/``ylog`` have shape ``(F+1, Ni, Nd+1)``.
    """

    k: float
    R: float
    Ni: int
    Nd: int
    F: int
    jmom: np.ndarray
    ymom: np.ndarray
    jlog: np.ndarray
    ylog: np.ndarray

    def key(self):
        return (float(self.k), float(self.R), int(self.Ni), int(self.Nd), int(self.F))

    def true_jmoment(self, n, j, s, l):
        return self.jmom[n, j, s, l] * math.exp(self.jlog[n, j, s])

    def true_ymoment(self, n, j, s, l):
        return self.ymom[n, j, s, l] * math.exp(self.ylog[n, j, s])

    def node_weights(self, grid):
        """Segment integrals as linear maps of the interval's node values."""
        return (
            np.einsum("njsl,lk->njsk", self.jmom, grid.fit_matrix),
            np.einsum("njsl,lk->njsk", self.ymom, grid.fit_matrix),
        )

    # -- persistence ------------------------------------------------------
    # Layout (all little-endian):
    #   8s   magic b"LSSMOM\0\0"
    #   u32  format version
    #   d d  k, R
    #   q q q  Ni, Nd, F
    #   32s  sha256 of the payload
    #   payload: jmom, jlog, ymom, ylog as float64, C order
    _MAGIC = b"LSSMOM\0\0"
    _VERSION = 1
    _HEADER = struct.Struct("<8sIddqqq32s")

    def _payload(self):
        return b"".join(
            np.ascontiguousarray(a, dtype="<f8").tobytes()
            for a in (self.jmom, self.jlog, self.ymom, self.ylog)
        )

    def save(self, path):
        payload = self._payload()
        digest = hashlib.sha256(payload).digest()
        header = self._HEADER.pack(
            self._MAGIC, self._VERSION, self.k, self.R, self.Ni, self.Nd, self.F, digest
        )
        Path(path).write_bytes(header + payload)

    @classmethod
    def load(cls, path, expect_key=None):
        raw = Path(path).read_bytes()
        hs = cls._HEADER.size
        if len(raw) < hs:
            raise CacheError("moment cache truncated")
        magic, version, k, R, Ni, Nd, F, digest = cls._HEADER.unpack(raw[:hs])
        if magic != cls._MAGIC or version != cls._VERSION:
            raise CacheError("not a moment cache file of a supported version")
        payload = raw[hs:]
        if hashlib.sha256(payload).digest() != digest:
            raise CacheError("moment cache checksum mismatch")
        key = (k, R, Ni, Nd, F)
        if expect_key is not None and tuple(expect_key) != key:
            raise CacheError(f"moment cache key {key} != expected {tuple(expect_key)}")
        nm = (F + 1) * Ni * (Nd + 1) * Nd
        nl = (F + 1) * Ni * (Nd + 1)
        arr = np.frombuffer(payload, dtype="<f8")
        if arr.size != 2 * (nm + nl):
            raise CacheError("moment cache payload has the wrong size")
        off = 0
        out = []
        for size, shape in ((nm, (F + 1, Ni, Nd + 1, Nd)), (nl, (F + 1, Ni, Nd + 1)),
                            (nm, (F + 1, Ni, Nd + 1, Nd)), (nl, (F + 1, Ni, Nd + 1))):
            out.append(arr[off:off + size].reshape(shape).astype(float))
            off += size
        return cls(k, R, Ni, Nd, F, out[0], out[2], out[1], out[3])


def precompute_moments(grid, k, F, order_boost=1):
    """Moments of ``(rho/s1)^(n+1) jt_n`` and ``(s0/rho)^n yt_n`` against ``T_l``.

    ``order_boost`` multiplies every segment's quadrature order (used for the
    doubled-order self-check).
    """
    if not k > 0:
        raise InvalidConfig("wavenumber must be positive")
    Ni, Nd = grid.Ni, grid.Nd
    s0 = grid.breaks[:, :-1]
    s1 = grid.breaks[:, 1:]
    lo = grid.edges[:-1, None, None]
    hi = grid.edges[1:, None, None]
    seglen = float(np.max(s1 - s0))
    jmom = np.zeros((F + 1, Ni, Nd + 1, Nd))
    ymom = np.zeros((F + 1, Ni, Nd + 1, Nd))
    jlog = np.zeros((F + 1, Ni, Nd + 1))
    ylog = np.full((F + 1, Ni, Nd + 1), -np.inf)
    for n in range(F + 1):
        q = _quad_order(Nd, n, seglen, k) * order_boost
        # j side
        rho, w = _segment_rule(s0, s1, n, "j", q)
        s = (rho - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
        tl = np.cos(np.arange(Nd) * np.arccos(np.clip(s, -1, 1))[..., None])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s1[..., None] > 0, rho / s1[..., None], 0.0)
        wj = w * ratio ** (n + 1) * modified_bessel_j(n, k * rho) * rho
        jmom[n] = np.einsum("jsq,jsql->jsl", wj, tl)
        with np.errstate(divide="ignore"):
            jlog[n] = (n + 1) * np.log(s1)
        # y side (segments starting at rho = 0 never enter a suffix integral)
        rho, w = _segment_rule(s0, s1, n, "y", q)
        s = (rho - 0.5 * (lo + hi)) / (0.5 * (hi - lo))
        tl = np.cos(np.arange(Nd) * np.arccos(np.clip(s, -1, 1))[..., None])
        pos = s0[..., None] > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(pos, s0[..., None] / np.where(rho > 0, rho, 1.0), 0.0)
        wy = np.where(pos, w * ratio**n * modified_bessel_y(n, k * rho) * rho, 0.0)
        ymom[n] = np.einsum("jsq,jsql->jsl", wy, tl)
        with np.errstate(divide="ignore"):
            ylog[n] = np.where(s0 > 0, -n * np.log(np.where(s0 > 0, s0, 1.0)), -np.inf)
    return MomentTable(float(k), grid.R, Ni, Nd, int(F), jmom, ymom, jlog, ylog)


def _step_ratios(grid, degrees):
    """log(s0/s1) per segment, flattened in breakpoint order."""
    s0 = grid.breaks[:, :-1].ravel()
    s1 = grid.breaks[:, 1:].ravel()
    with np.errstate(divide="ignore"):
        return np.log(s0 / s1)


def cumulative_integrals(values, degrees, grid, moments, weights=None):
    """Running integrals ``P`` (prefix) and ``Q`` (suffix) at every node.

    Parameters
    ----------
    values : ndarray, shape ``(Ni*Nd, M)``
        ``I(rho)`` at the radial nodes for ``M`` modes.
    degrees : ndarray of int, shape ``(M,)``
        Harmonic degree of each mode.
    grid : RadialGrid
    moments : MomentTable
    weights : tuple, optional
        Precomputed ``moments.node_weights(grid)``.

    Returns
    -------
    P, Q : ndarray, shape ``(Ni*Nd, M)``
        Normalised prefix/suffix integrals at the nodes.
    PR : ndarray, shape ``(M,)``
        ``P(R)``.
    """
    Ni, Nd = grid.Ni, grid.Nd
    values = np.asarray(values)
    degrees = np.asarray(degrees, dtype=int)
    M = values.shape[1]
    if weights is None:
        weights = moments.node_weights(grid)
    wj, wy = weights
    vals = values.reshape(Ni, Nd, M)
    # segment integrals: (Ni, Nd+1, M)
    sj = np.einsum("mjsk,jkm->jsm", wj[degrees], vals)
    sy = np.einsum("mjsk,jkm->jsm", wy[degrees], vals)
    lr = _step_ratios(grid, degrees)
    with np.errstate(under="ignore", invalid="ignore"):
        rj = np.exp(np.outer(lr, degrees + 1))
        ry = np.exp(np.outer(lr, degrees))
    rj = np.nan_to_num(rj, nan=0.0)
    ry = np.where(np.isnan(ry), 1.0, ry)  # 0*log(0) for n = 0
    nseg = Ni * (Nd + 1)
    sj = sj.reshape(nseg, M)
    sy = sy.reshape(nseg, M)
    P = np.zeros((Ni, Nd, M), dtype=np.result_type(values, 1.0))
    Q = np.zeros_like(P)
    acc = np.zeros(M, dtype=P.dtype)
    for j in range(Ni):
        for s in range(Nd + 1):
            b = j * (Nd + 1) + s
            acc = acc * rj[b] + sj[b]
            if s < Nd:
                P[j, s] = acc
    PR = acc.copy()
    acc = np.zeros(M, dtype=P.dtype)
    for j in range(Ni - 1, -1, -1):
        for s in range(Nd, -1, -1):
            b = j * (Nd + 1) + s
            acc = acc * ry[b] + sy[b]
            if s >= 1:
                # breakpoint s of interval j is node s-1
                P_idx = s - 1
                Q[j, P_idx] = acc
    OP_COUNTER["cumulative"] += 2 * nseg * M * (Nd + 1)
    return P.reshape(Ni * Nd, M), Q.reshape(Ni * Nd, M), PR


class KernelCoefficients:
    """Prefactors of the three kernel terms at every node, per degree.

    ``c1 = i k^2 yt_n(ka)/(2n+1)``, ``c2 = i k^2 jt_n(ka)/(2n+1)`` and
    ``c3 = -k^2 jt_n(ka) B_n(a)``.  ``log_b`` holds ``log B_n(a)``; the
    stored magnitudes are finite by construction and ``ScalingOverflow`` is
    raised otherwise.
    """

    def __init__(self, grid, k, F, radii=None):
        a = grid.nodes if radii is None else np.asarray(radii, dtype=float)
        self.k = float(k)
        self.F = int(F)
        self.radii = a
        n = np.arange(F + 1)[:, None]
        ka = k * a[None, :]
        with np.errstate(divide="ignore"):
            self.log_b = (
                n * np.log(ka) + (n + 1) * math.log(k * grid.R) - 2.0 * log_odd_factorial(n)
            )
        if np.any(self.log_b > _LOG_MAX):
            raise ScalingOverflow(
                f"kernel prefactor exp({self.log_b.max():.1f}) exceeds the double range; "
                "k*R too large for this band"
            )
        self.log_b[0] = math.log(k * grid.R)  # n = 0: (ka)^0 (kR)^1
        # jt_n, yt_n for all n at the nodes
        self.jt = np.stack([np.atleast_1d(modified_bessel_j(int(m), k * a)) for m in range(F + 1)])
        self.yt = np.stack([np.atleast_1d(modified_bessel_y(int(m), k * a)) for m in range(F + 1)])
        self.c1 = 1j * k * k * self.yt / (2 * n + 1)
        self.c2 = 1j * k * k * self.jt / (2 * n + 1)
        with np.errstate(under="ignore"):
            self.c3 = -k * k * self.jt * np.exp(self.log_b)


def assemble_kernel(P, Q, PR, degrees, kcoef, node=None):
    """Combine running integrals into ``K_n^m`` at the nodes.

    ``P``, ``Q`` have shape ``(nodes, M)``; ``PR`` shape ``(M,)``.
    """
    degrees = np.asarray(degrees, dtype=int)
    sl = slice(None) if node is None else node
    c1 = kcoef.c1[degrees][:, sl].T
    c2 = kcoef.c2[degrees][:, sl].T
    c3 = kcoef.c3[degrees][:, sl].T
    K = c1 * P + c2 * Q + c3 * PR
    if not np.all(np.isfinite(K)):
        raise ScalingOverflow("non-finite kernel value")
    return K


class RadialKernel:
    """``I_n^m(rho) -> K_n^m(rho)`` on a fixed grid, wavenumber and band."""

    def __init__(self, grid, k, F, moments=None):
        self.grid = grid
        self.k = float(k)
        self.F = int(F)
        if moments is None:
            moments = precompute_moments(grid, k, F)
        if moments.key() != (float(k), grid.R, grid.Ni, grid.Nd, int(F)):
            raise InvalidConfig(f"moment table {moments.key()} does not match the grid")
        self.moments = moments
        self.weights = moments.node_weights(grid)
        self.kcoef = KernelCoefficients(grid, k, F)

    def apply(self, values, degrees):
        """Kernel values at the nodes for columns of ``values`` of the given degrees."""
        P, Q, PR = cumulative_integrals(values, degrees, self.grid, self.moments, self.weights)
        return assemble_kernel(P, Q, PR, degrees, self.kcoef)
