import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import ORACLE_CASES
from lsspectral.errors import BandMismatch, InvalidConfig, MaxIterations
from lsspectral.operator import (
    THREADS_ENV,
    LSOperator,
    ProblemSpec,
    apply_forward,
    field_error,
    solve,
    worker_count,
)
from lsspectral.oracle import ls_apply_dense
from lsspectral.radial import RadialGrid
from lsspectral.scenarios import (
    ContrastSpec,
    IncidentSpec,
    contrast_coefficients,
    contrast_from_function,
    incident_coefficients,
)
from lsspectral.sht import AngularGrid, ModeField, coeff_index, evaluate, synthesize

K = 2.0


def project(func, grid, band):
    return contrast_from_function(func, grid, band).resized(band)


def small_problem(F=3, Ni=2, Nd=4, R=1.0, m=None, k=K):
    grid = RadialGrid(R, Ni, Nd)
    if m is None:
        m = lambda x, y, z: (0.6 - 0.2j) * (R * R - x * x - y * y - z * z) * (1 + 0.5 * x)
    contrast = contrast_from_function(m, grid, F)
    inc = incident_coefficients(IncidentSpec(1, k), grid, F)
    return grid, ProblemSpec(k, F, grid, contrast, inc)


def random_field(rng, F, nrad):
    n = (F + 1) ** 2
    return ModeField(F, rng.standard_normal((nrad, n)) + 1j * rng.standard_normal((nrad, n)))


# ------------------------------------------------------------ basic algebra


def test_free_space_is_identity(rng):
    grid = RadialGrid(2.0, 3, 3)
    u = random_field(rng, 4, grid.size)
    spec = ProblemSpec(1.0, 4, grid, ModeField.zeros(8, grid.size), u.copy())
    assert np.array_equal(apply_forward(u, spec).data, u.data)


def test_zero_maps_to_zero():
    grid, spec = small_problem()
    out = apply_forward(ModeField.zeros(3, grid.size), spec)
    assert np.all(out.data == 0)


@settings(max_examples=10)
@given(seed=st.integers(0, 2**32 - 1), a=st.complex_numbers(max_magnitude=3), b=st.complex_numbers(max_magnitude=3))
def test_kernel_part_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    grid, spec = small_problem(F=4)
    op = LSOperator(spec, orders=range(-4, 5), workers=1)
    u = op.restrict(random_field(rng, 4, grid.size))
    v = op.restrict(random_field(rng, 4, grid.size))
    sh = op.shape
    lhs = op.apply_k((a * u + b * v).reshape(sh))
    rhs = a * op.apply_k(u.reshape(sh)) + b * op.apply_k(v.reshape(sh))
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


# ------------------------------------------------------------ dense oracle


@pytest.mark.parametrize("case", sorted(ORACLE_CASES))
def test_matches_dense_quadrature(case, rng):
    uf, mf = ORACLE_CASES[case]
    F = 3
    grid = RadialGrid(1.0, 2, 4)
    u = project(uf, grid, F)
    spec = ProblemSpec(K, F, grid, contrast_from_function(mf, grid, F), u.copy())
    out = apply_forward(u, spec)
    idx = rng.choice(grid.size, 4, replace=False)
    th = np.arccos(rng.uniform(-1, 1, 4))
    ph = rng.uniform(0, 2 * math.pi, 4)
    r = grid.nodes[idx]
    pts = np.stack([r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)], axis=1)
    dense = ls_apply_dense(uf, mf, K, pts, 1.0).values
    fast = np.array([evaluate(out.data[i], t, p) for i, t, p in zip(idx, th, ph)])
    assert np.abs(fast - dense).max() <= 1e-6 * np.abs(dense).max()


# -------------------------------------------------------- structure checks


def test_active_orders_reduction_is_exact():
    grid = RadialGrid(2.0, 4, 3)
    F = 6
    c = contrast_coefficients(ContrastSpec("hoelder", beta=1.4, m_ref=2), grid, F)
    inc = incident_coefficients(IncidentSpec(1, 1.0), grid, F)
    spec = ProblemSpec(1.0, F, grid, c, inc)
    assert spec.active_orders() == [1, 3, 5]
    u1, r1 = solve(spec, tol=1e-13)
    op = LSOperator(spec, orders=range(-F, F + 1))
    u2, r2 = solve(spec, tol=1e-13, operator=op)
    assert field_error(u1, u2) < 1e-11
    off = [coeff_index(n, q) for q in (-1, 0, 2) for n in range(abs(q), F + 1)]
    assert np.abs(u2.data[:, off]).max() < 1e-13


def test_threads_match_serial(rng):
    grid, spec = small_problem(F=5, Ni=4)
    u = random_field(rng, 5, grid.size)
    a = apply_forward(u, spec, workers=1)
    b = apply_forward(u, spec, workers=3)
    assert np.abs(a.data - b.data).max() <= 1e-14 * np.abs(a.data).max()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "2")
    assert worker_count(8) == 2
    assert worker_count(1) == 1
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(InvalidConfig):
        worker_count(4)
    monkeypatch.delenv(THREADS_ENV)
    assert worker_count(5) == 5


def test_band_truncation_is_spectral():
    # smooth off-centre bump: the estimated angular order keeps growing
    grid = RadialGrid(1.0, 2, 4)

    def mf(x, y, z):
        r2 = x * x + y * y + z * z
        return -0.8 * np.exp(-2 * ((x - 0.2) ** 2 + y * y + (z - 0.4) ** 2)) * np.clip(1 - r2, 0, None) ** 2

    sols = {}
    for F in (3, 6, 12, 24):
        spec = ProblemSpec(K, F, grid, contrast_from_function(mf, grid, F),
                           incident_coefficients(IncidentSpec(1, K), grid, F))
        sols[F] = solve(spec, tol=1e-14)[0]
    d = [field_error(sols[F].resized(24), sols[24]) for F in (3, 6, 12)]
    orders = [math.log2(d[i] / d[i + 1]) for i in range(2)]
    assert orders[1] > 2 * orders[0]


# -------------------------------------------------------------- the solver


def test_solve_free_space_one_iteration():
    grid = RadialGrid(2.0, 3, 3)
    inc = incident_coefficients(IncidentSpec(2, 1.5), grid, 6)
    spec = ProblemSpec(1.5, 6, grid, ModeField.zeros(12, grid.size), inc)
    u, rep = solve(spec)
    assert rep.iterations == 1 and field_error(u, inc) < 1e-14


def test_solve_reports_residuals():
    grid, spec = small_problem(F=4)
    u, rep = solve(spec, tol=1e-12)
    res = np.array(rep.residuals)
    assert rep.converged and res[-1] <= 1e-12 and np.all(np.diff(res) <= 0)
    op = LSOperator(spec)
    b = op.restrict(spec.incident)
    r = op.matvec(op.restrict(u)) - b
    assert np.linalg.norm(r) <= 1e-11 * np.linalg.norm(b)
    assert rep.time_per_iteration > 0


def test_solve_max_iterations_returns_field():
    grid = RadialGrid(2.0, 4, 2)
    c = contrast_coefficients(ContrastSpec("sphere"), grid, 8)
    spec = ProblemSpec(5.0, 8, grid, c, incident_coefficients(IncidentSpec(1, 5.0), grid, 8))
    with pytest.raises(MaxIterations) as info:
        solve(spec, tol=1e-12, max_iter=2)
    assert isinstance(info.value.x, ModeField) and info.value.x.band == 8


def test_solve_rejects_bad_tolerance():
    grid, spec = small_problem()
    with pytest.raises(InvalidConfig):
        solve(spec, tol=0.0)


# ------------------------------------------------------------- validation


def test_problem_spec_validation():
    grid = RadialGrid(2.0, 2, 3)
    inc = incident_coefficients(IncidentSpec(1, 1.0), grid, 3)
    with pytest.raises(BandMismatch):
        ProblemSpec(1.0, 4, grid, ModeField.zeros(6, grid.size), inc)
    with pytest.raises(BandMismatch):
        ProblemSpec(1.0, 3, grid, ModeField.zeros(7, grid.size), inc)
    with pytest.raises(BandMismatch):
        ProblemSpec(1.0, 3, grid, ModeField.zeros(6, grid.size - 1), inc)
    with pytest.raises(InvalidConfig):
        ProblemSpec(0.0, 3, grid, ModeField.zeros(6, grid.size), inc)
    c = contrast_coefficients(ContrastSpec("sphere", radius=1.5), grid, 3)
    with pytest.raises(InvalidConfig, match="support"):
        ProblemSpec(1.0, 3, grid, c, inc, support=(0.0, 1.0))


# ------------------------------------------------------------ field error


def test_field_error_examples(rng):
    grid = RadialGrid(1.0, 2, 3)
    ref = random_field(rng, 4, grid.size)
    assert field_error(ref, ref) == 0.0
    twice = ModeField(4, 2 * ref.data)
    assert abs(field_error(twice, ref) - 1.0) < 1e-14
    eps = 1e-6
    pert = ref.copy()
    pert.data[2, coeff_index(3, -2)] += eps
    ag = AngularGrid(4)
    e = np.zeros((1, 25))
    e[0, coeff_index(3, -2)] = 1
    want = eps * np.abs(synthesize(e, ag)).max() / np.abs(synthesize(ref.data, ag)).max()
    assert abs(field_error(pert, ref) - want) < 1e-6 * want


def test_field_error_rejects_grid_mismatch(rng):
    with pytest.raises(BandMismatch):
        field_error(random_field(rng, 2, 4), random_field(rng, 2, 6))
