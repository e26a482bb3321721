"""
Matrix-free Lippmann-Schwinger operator ``u -> u - i K[u]`` and its solver.

The operator works in two stages separated by a barrier: an angular stage
(product of the field with the contrast, projected back to band ``F``, per
radial node) and a radial stage (running integrals and kernel assembly per
``(n, m)`` mode).  Both stages are split into chunks that run on a thread
pool; the GMRES driver stays on the calling thread.

Only azimuthal orders reachable from the incident field are carried.  A
product with the contrast maps order ``q`` to ``q + p`` for each contrast
order ``p``, so the set of orders closed under those shifts (capped at
``|m| <= F``) is invariant under the operator.  Restricting GMRES to it is
exact.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BandMismatch, InvalidConfig
from .gmres import SolveReport, gmres
from .radial import MomentTable, RadialGrid, RadialKernel, precompute_moments
from .sht import AngularGrid, ModeField, ProductProjector, active_orders, num_coeffs, order_indices, synthesize

__all__ = [
    "ProblemSpec",
    "LSOperator",
    "apply_forward",
    "solve",
    "field_error",
    "worker_count",
    "SolveReport",
]

THREADS_ENV = "LSSPECTRAL_THREADS"
_SUPPORT_TOL = 1e-13
_CHUNK_BYTES = 256 * 2**20


def worker_count(requested=None):
    """Thread count for operator stages, capped by ``LSSPECTRAL_THREADS``."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError as exc:
            raise InvalidConfig(f"{THREADS_ENV} must be an integer, got {cap!r}") from exc
    return max(int(n), 1)


@dataclass
class ProblemSpec:
    """Discretised scattering problem.

    Parameters
    ----------
    k : float
        Wavenumber.
    F : int
        Angular band of the field.
    grid : RadialGrid
    contrast : ModeField
        Coefficients of ``m = 1 - n^2``, band at most ``2F``.
    incident : ModeField
        Incident-field coefficients at band ``F``.
    support : tuple of float, optional
        Radial support ``(rmin, rmax)`` of the contrast; checked if given.
    """

    k: float
    F: int
    grid: RadialGrid
    contrast: ModeField
    incident: ModeField
    support: tuple | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidConfig(f"wavenumber must be positive, got {self.k}")
        if self.F < 0:
            raise InvalidConfig("band must be >= 0")
        if self.incident.band != self.F:
            raise BandMismatch(f"incident band {self.incident.band} != F={self.F}")
        if self.contrast.band > 2 * self.F:
            raise BandMismatch(f"contrast band {self.contrast.band} exceeds 2F={2 * self.F}")
        for name, fld in (("incident", self.incident), ("contrast", self.contrast)):
            if fld.nrad != self.grid.size:
                raise BandMismatch(f"{name} has {fld.nrad} radial nodes, grid has {self.grid.size}")
        if self.support is not None:
            lo, hi = self.support
            rho = self.grid.nodes
            outside = (rho < lo) | (rho > hi)
            if np.any(np.abs(self.contrast.data[outside]) > _SUPPORT_TOL):
                raise InvalidConfig("contrast does not vanish outside its declared support")

    def active_orders(self):
        """Azimuthal orders closed under products with the contrast."""
        inc = set(self.incident.orders())
        shifts = set(self.contrast.orders())
        if not shifts:
            return sorted(inc) if inc else [0]
        reach = set(inc) if inc else {0}
        frontier = set(reach)
        while frontier:
            new = set()
            for q in frontier:
                for p in shifts:
                    r = q + p
                    if abs(r) <= self.F and r not in reach:
                        new.add(r)
            reach |= new
            frontier = new
        return sorted(reach)


def _chunks(n, parts):
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(bounds[i], bounds[i + 1]) for i in range(parts) if bounds[i + 1] > bounds[i]]


class LSOperator:
    """System operator ``u -> u - i K[u]`` for a fixed problem.

    Parameters
    ----------
    spec : ProblemSpec
    moments : MomentTable, optional
        Precomputed radial moments; built on demand otherwise.
    orders : sequence of int, optional
        Azimuthal orders to carry.  Defaults to the closure of the incident
        orders under the contrast orders.
    workers : int, optional
        Thread count; see :func:`worker_count`.
    """

    def __init__(self, spec, moments=None, orders=None, workers=None):
        self.spec = spec
        self.F = spec.F
        grid = spec.grid
        if moments is None:
            moments = precompute_moments(grid, spec.k, spec.F)
        self.moments = moments
        self.kernel = RadialKernel(grid, spec.k, spec.F, moments)
        self.orders = list(orders) if orders is not None else spec.active_orders()
        self.index = np.concatenate([order_indices(q, self.F) for q in self.orders])
        self.degrees = np.floor(np.sqrt(self.index)).astype(int)
        self.ang_grid = AngularGrid(self.F + spec.contrast.band)
        self.projector = ProductProjector(
            spec.contrast.data, self.F, u_orders=self.orders, grid=self.ang_grid
        )
        self.workers = worker_count(workers)
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.nrad = grid.size
        self.shape = (self.nrad, self.index.size)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def _map(self, fn, slices):
        if self._pool is None or len(slices) == 1:
            return [fn(s) for s in slices]
        return list(self._pool.map(fn, slices))

    def _product(self, full):
        # angular stage: chunks of radial nodes share the contrast rows
        nonzero = self.projector.m_orders
        if not nonzero:
            return np.zeros_like(full)
        parts = self.workers
        if self.projector.use_fft:
            g = self.ang_grid
            per_row = 4 * 16 * (g.band + 1) * g.nphi
            parts = max(parts, -(-self.nrad * per_row // _CHUNK_BYTES))
        slices = _chunks(self.nrad, parts)
        out = np.zeros_like(full)

        def run(sl):
            out[sl] = self.projector(full[sl], rows=sl)

        self._map(run, slices)
        return out

    def apply_k(self, x):
        """``K[u]`` on the active coefficients, shape ``(nrad, n_active)``."""
        full = np.zeros((self.nrad, num_coeffs(self.F)), dtype=complex)
        full[:, self.index] = x
        prod = self._product(full)[:, self.index]
        cols = _chunks(self.index.size, self.workers)
        out = np.empty_like(prod)

        def run(sl):
            out[:, sl] = self.kernel.apply(prod[:, sl], self.degrees[sl])

        self._map(run, cols)
        return out

    def matvec(self, v):
        x = v.reshape(self.shape)
        return (x - 1j * self.apply_k(x)).ravel()

    def restrict(self, field):
        return field.data[:, self.index].ravel()

    def expand(self, v):
        out = ModeField.zeros(self.F, self.nrad, self.spec.grid.nodes)
        out.data[:, self.index] = v.reshape(self.shape)
        return out

    def apply(self, u):
        """``u - i K[u]`` for a full band-``F`` field.

        Coefficients outside the active orders are carried through unchanged
        (their product with the contrast is not computed); pass
        ``orders=range(-F, F+1)`` at construction to include all of them.
        """
        if u.band != self.F or u.nrad != self.nrad:
            raise BandMismatch("field does not match the operator's band or grid")
        out = u.copy()
        out.data[:, self.index] = self.matvec(self.restrict(u)).reshape(self.shape)
        return out


def apply_forward(u, spec, moments=None, workers=None):
    """Apply ``u - i K[u]`` over all azimuthal orders.

    Parameters
    ----------
    u : ModeField
        Band-``F`` field on the problem's radial nodes.
    spec : ProblemSpec
    moments : MomentTable, optional

    Returns
    -------
    ModeField
    """
    op = LSOperator(spec, moments, orders=range(-spec.F, spec.F + 1), workers=workers)
    try:
        return op.apply(u)
    finally:
        op.close()


def solve(spec, tol=1e-10, max_iter=500, restart=50, moments=None, workers=None, operator=None):
    """Solve ``u - i K[u] = u^i`` with GMRES from a zero initial guess.

    Returns
    -------
    u : ModeField
    report : SolveReport

    Raises
    ------
    MaxIterations, Breakdown
        The exception's ``x`` attribute holds the best iterate as a ModeField.
    """
    if not tol > 0:
        raise InvalidConfig("tolerance must be positive")
    op = operator if operator is not None else LSOperator(spec, moments, workers=workers)
    b = op.restrict(spec.incident)
    try:
        x, report = gmres(op.matvec, b, tol=tol, restart=restart, max_iter=max_iter)
    except Exception as exc:
        if getattr(exc, "x", None) is not None:
            exc.x = op.expand(exc.x)
        raise
    finally:
        if operator is None:
            op.close()
    return op.expand(x), report


def field_error(u, reference, grid=None):
    """Relative sup-norm difference of two synthesised fields.

    Both fields are evaluated at every radial node on a common angular grid
    (default: the band of the larger expansion).
    """
    band = max(u.band, reference.band)
    if u.nrad != reference.nrad:
        raise BandMismatch("fields live on different radial grids")
    if grid is None:
        grid = AngularGrid(band)
    a = u.resized(band).data
    b = reference.resized(band).data
    orders = sorted(set(active_orders(a, band)) | set(active_orders(b, band)))
    diff = np.abs(synthesize(a - b, grid, orders)).max()
    ref = np.abs(synthesize(b, grid, orders)).max()
    if ref == 0:
        return 0.0 if diff == 0 else np.inf
    return float(diff / ref)
