"""Restarted GMRES for matrix-free complex linear systems."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import Breakdown, MaxIterations

__all__ = ["SolveReport", "gmres"]


@dataclass
class SolveReport:
    """Outcome of a GMRES run.

    ``residuals`` holds the relative least-squares residual after every
    Arnoldi step (index 0 is the initial residual).
    """

    iterations: int = 0
    residuals: list = field(default_factory=list)
    achieved: float = np.inf
    true_residual: float = np.inf
    converged: bool = False
    restarts: int = 0
    wall_time: float = 0.0

    @property
    def time_per_iteration(self):
        return self.wall_time / max(self.iterations, 1)

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "achieved_tolerance": self.achieved,
            "true_residual": self.true_residual,
            "converged": self.converged,
            "restarts": self.restarts,
            "wall_time": self.wall_time,
            "time_per_iteration": self.time_per_iteration,
            "residuals": list(self.residuals),
        }


def _givens(a, b):
    # complex Givens rotation zeroing b against a
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, np.conj(b) / abs(b)
    r = np.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * np.conj(b) / r
    return c, s


def gmres(matvec, b, x0=None, tol=1e-10, restart=50, max_iter=500, raise_on_fail=True):
    """Solve ``A x = b`` with restarted GMRES(``restart``).

    Parameters
    ----------
    matvec : callable
        ``v -> A v`` on 1-D complex arrays.
    b : ndarray
    x0 : ndarray, optional
        Initial guess; zero by default.
    tol : float
        Relative residual target ``||b - A x|| / ||b||``.
    restart : int
        Krylov subspace dimension per cycle.
    max_iter : int
        Cap on the total number of Arnoldi steps.

    Returns
    -------
    x : ndarray
    report : SolveReport

    Raises
    ------
    MaxIterations
        Iteration cap reached; ``exc.x`` is the best iterate.
    Breakdown
        Degenerate Hessenberg column without convergence.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    bnorm = np.linalg.norm(b)
    report = SolveReport()
    if bnorm == 0:
        report.achieved = report.true_residual = 0.0
        report.converged = True
        report.residuals = [0.0]
        return np.zeros_like(b), report
    r = b - matvec(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    report.residuals.append(beta / bnorm)
    total = 0
    n = b.size
    while True:
        if beta / bnorm <= tol:
            report.converged = True
            break
        if total >= max_iter:
            break
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        degenerate = False
        for j in range(m):
            w = matvec(V[j])
            wnorm0 = np.linalg.norm(w)
            # classical Gram-Schmidt, twice
            for _ in range(2):
                h = V[: j + 1].conj() @ w
                w = w - h @ V[: j + 1]
                H[: j + 1, j] += h
            hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            c, s = _givens(H[j, j], H[j + 1, j])
            cs[j], sn[j] = c, s
            H[j, j] = c * H[j, j] + s * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(s) * g[j]
            g[j] = c * g[j]
            total += 1
            j_done = j + 1
            report.residuals.append(abs(g[j + 1]) / bnorm)
            if abs(g[j + 1]) / bnorm <= tol:
                break
            if hn <= 1e-14 * max(wnorm0, 1e-300):
                degenerate = True
                break
            V[j + 1] = w / hn
        # update x
        k = j_done
        Hk = H[:k, :k]
        if np.any(np.abs(np.diag(Hk)) == 0):
            report.iterations = total
            report.wall_time = time.perf_counter() - t0
            raise Breakdown("singular Hessenberg matrix in GMRES", x=x, report=report)
        y = np.linalg.solve(np.triu(Hk), g[:k])
        x = x + y @ V[:k]
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        report.restarts += 1
        if degenerate and beta / bnorm > tol:
            report.iterations = total
            report.achieved = report.residuals[-1]
            report.true_residual = beta / bnorm
            report.wall_time = time.perf_counter() - t0
            raise Breakdown("Krylov space exhausted without convergence", x=x, report=report)
        if report.residuals[-1] <= tol:
            report.converged = True
            break
    report.iterations = total
    report.achieved = report.residuals[-1]
    report.true_residual = beta / bnorm
    report.wall_time = time.perf_counter() - t0
    if not report.converged and raise_on_fail:
        raise MaxIterations(
            f"GMRES did not reach {tol:g} in {total} iterations "
            f"(residual {report.achieved:.3e})",
            x=x,
            report=report,
        )
    return x, report
