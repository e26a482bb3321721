import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from helpers import cquad, random_poly, raw_kernel
from lsspectral.errors import CacheError, InvalidConfig, ScalingOverflow
from lsspectral.radial import (
    OP_COUNTER,
    KernelCoefficients,
    MomentTable,
    RadialGrid,
    RadialKernel,
    build_grid,
    chebyshev_fit,
    cumulative_integrals,
    interpolate_radial,
    precompute_moments,
)
from lsspectral.specfun import chebyshev_vander


def segment(grid, j, s):
    return grid.breaks[j, s], grid.breaks[j, s + 1]


def cheb_on(grid, j, l):
    lo, hi = grid.edges[j], grid.edges[j + 1]
    return lambda r: math.cos(l * math.acos(max(-1.0, min(1.0, (2 * r - lo - hi) / (hi - lo)))))


# -------------------------------------------------------------------- grid


def test_grid_examples():
    g = build_grid(2.0, 1, 2)
    assert np.allclose(g.nodes, [1 - 1 / math.sqrt(2), 1 + 1 / math.sqrt(2)], atol=1e-15)
    g = build_grid(4.0, 4, 2)
    assert np.allclose(g.intervals, [[0, 1], [1, 2], [2, 3], [3, 4]])
    g = build_grid(2.0, 8, 8)
    assert g.size == 64 and np.all(np.diff(g.nodes) > 0)


@given(R=st.floats(0.1, 10.0), Ni=st.integers(1, 40), Nd=st.integers(2, 12))
def test_grid_invariants(R, Ni, Nd):
    g = RadialGrid(R, Ni, Nd)
    assert g.edges[0] == 0.0 and abs(g.edges[-1] - R) < 1e-14 * R
    assert np.allclose(np.diff(g.edges), R / Ni)
    lo, hi = g.edges[:-1, None], g.edges[1:, None]
    assert np.all((g.interval_nodes > lo) & (g.interval_nodes < hi))
    assert g.nodes.size == Ni * Nd


@pytest.mark.parametrize("args", [(0.0, 2, 2), (-1.0, 2, 2), (1.0, 0, 2), (1.0, 2, 1), (1.0, 2.5, 3)])
def test_grid_rejects(args):
    with pytest.raises(InvalidConfig):
        build_grid(*args)


# --------------------------------------------------------------- Chebyshev


def test_chebyshev_fit_examples(rng):
    c = chebyshev_fit(np.full(6, 2.5))
    assert abs(c[0] - 2.5) < 1e-15 and np.abs(c[1:]).max() < 1e-14
    g = RadialGrid(1.0, 1, 8)
    c = chebyshev_fit(np.cos(3 * np.arccos(g.cheb)), g)
    want = np.zeros(8)
    want[3] = 1
    assert np.abs(c - want).max() < 1e-13
    coef = rng.standard_normal(8)
    vals = chebyshev_vander(g.cheb, 7) @ coef
    assert np.abs(chebyshev_fit(vals, g) - coef).max() < 1e-12
    assert np.abs(chebyshev_vander(g.cheb, 7) @ chebyshev_fit(vals, g) - vals).max() < 1e-13


def test_interpolate_radial_reproduces_polynomials(rng):
    g = RadialGrid(2.0, 3, 5)
    p = random_poly(rng, 4)
    r = np.linspace(0, 2, 37)
    vals = np.stack([p(g.nodes), 2 * p(g.nodes)], axis=1)
    out = interpolate_radial(vals, g, r)
    assert np.abs(out[:, 0] - p(r)).max() < 1e-12
    assert np.abs(out[:, 1] - 2 * p(r)).max() < 1e-12


# ---------------------------------------------------------------- moments


def test_moment_n0_closed_form():
    k = 1.7
    g = RadialGrid(2.0, 3, 4)
    mt = precompute_moments(g, k, 4)
    anti = lambda r: math.sin(k * r) / k**3 - r * math.cos(k * r) / k**2
    for j in range(g.Ni):
        for s in range(g.Nd + 1):
            s0, s1 = segment(g, j, s)
            want = anti(s1) - anti(s0)
            assert abs(mt.true_jmoment(0, j, s, 0) - want) <= 1e-14 * max(abs(want), 1e-3)


def test_moment_high_degree_against_adaptive_quadrature():
    k, n, l = 3.0, 12, 3
    g = RadialGrid(2.0, 4, 6)
    mt = precompute_moments(g, k, 16)
    dfac = float(np.prod(np.arange(1, 2 * n + 2, 2, dtype=float)))
    jt = lambda r: dfac * special.spherical_jn(n, k * r) / (k * r) ** n
    yt = lambda r: -((k * r) ** (n + 1)) * special.spherical_yn(n, k * r) / (dfac / (2 * n + 1))
    for j in (1, 3):
        T = cheb_on(g, j, l)
        for s in range(g.Nd + 1):
            s0, s1 = segment(g, j, s)
            want = cquad(lambda r: r ** (n + 2) * jt(r) * T(r), s0, s1).real
            got = mt.true_jmoment(n, j, s, l)
            assert abs(got - want) <= 1e-11 * abs(want)
            want = cquad(lambda r: r ** (1 - n) * yt(r) * T(r), s0, s1).real
            got = mt.true_ymoment(n, j, s, l)
            assert abs(got - want) <= 1e-11 * abs(want)


@pytest.mark.parametrize("k,R,F", [(5.0, 2.0, 31), (1.0, 4.0, 200)])
def test_moments_doubled_order(k, R, F):
    g = RadialGrid(R, 4, 4)
    a = precompute_moments(g, k, F)
    b = precompute_moments(g, k, F, order_boost=2)
    for x, y in ((a.jmom, b.jmom), (a.ymom, b.ymom)):
        scale = np.abs(y).max(axis=(-1, -2, -3), keepdims=True)
        scale = np.where(scale > 0, scale, 1.0)
        assert np.abs((x - y) / scale).max() < 1e-12
    assert np.array_equal(a.jlog, b.jlog)


def test_moments_finite_where_raw_would_overflow():
    mt = precompute_moments(RadialGrid(4.0, 4, 4), 1.0, 300)
    assert np.all(np.isfinite(mt.jmom)) and np.all(np.isfinite(mt.ymom))
    assert np.all(np.isfinite(mt.jlog))
    # rho^(1-n) near the origin puts the raw y-moments far beyond the double range
    assert mt.ylog.max() > math.log(np.finfo(float).max)


def test_moment_cache_roundtrip(tmp_path):
    g = RadialGrid(2.0, 2, 3)
    mt = precompute_moments(g, 2.0, 6)
    p = tmp_path / "m.bin"
    mt.save(p)
    back = MomentTable.load(p, expect_key=mt.key())
    for name in ("jmom", "ymom", "jlog", "ylog"):
        assert np.array_equal(getattr(back, name), getattr(mt, name))
    with pytest.raises(CacheError):
        MomentTable.load(p, expect_key=(2.0, 2.0, 2, 3, 7))
    raw = bytearray(p.read_bytes())
    raw[-5] ^= 0xFF
    p.write_bytes(bytes(raw))
    with pytest.raises(CacheError, match="checksum"):
        MomentTable.load(p)
    p.write_bytes(b"short")
    with pytest.raises(CacheError):
        MomentTable.load(p)


# ----------------------------------------------------- running integrals


def test_cumulative_examples():
    g = RadialGrid(2.0, 4, 4)
    mt = precompute_moments(g, 1.0, 5)
    P, Q, PR = cumulative_integrals(np.zeros((g.size, 3)), np.array([0, 2, 5]), g, mt)
    assert np.all(P == 0) and np.all(Q == 0) and np.all(PR == 0)
    P, Q, PR = cumulative_integrals(np.ones((g.size, 1)), np.array([0]), g, mt)
    # PR = R^-1 int_0^R rho^2 jt_0 drho = R^-1 int rho sin(rho)
    assert abs(PR[0] * 2.0 - (math.sin(2) - 2 * math.cos(2))) < 1e-14


def test_cumulative_against_adaptive_quadrature(rng):
    n, k, R = 5, 2.0, 2.0
    g = RadialGrid(R, 3, 6)
    mt = precompute_moments(g, k, n)
    p = random_poly(rng, 5)
    P, Q, PR = cumulative_integrals(p(g.nodes)[:, None], np.array([n]), g, mt)
    dfac = float(np.prod(np.arange(1, 2 * n + 2, 2, dtype=float)))
    jt = lambda r: dfac * special.spherical_jn(n, k * r) / (k * r) ** n if r > 0 else 1.0
    yt = lambda r: -((k * r) ** (n + 1)) * special.spherical_yn(n, k * r) / (dfac / (2 * n + 1))

    for i, a in enumerate(g.nodes):
        want = cquad(lambda r: r ** (n + 2) * jt(r) * p(r), 0, a)
        assert abs(P[i, 0] * a ** (n + 1) - want) <= 1e-10 * abs(want)
        want = cquad(lambda r: r ** (1 - n) * yt(r) * p(r), a, R)
        assert abs(Q[i, 0] / a**n - want) <= 1e-10 * abs(want)


def test_cumulative_cost_linear_in_intervals():
    counts = []
    for Ni in (8, 16, 32):
        g = RadialGrid(2.0, Ni, 4)
        mt = precompute_moments(g, 1.0, 3)
        OP_COUNTER["cumulative"] = 0
        cumulative_integrals(np.ones((g.size, 4)), np.arange(4), g, mt)
        counts.append(OP_COUNTER["cumulative"])
    for a, b in zip(counts, counts[1:]):
        assert 1.0 <= b / a <= 4.0


# ------------------------------------------------------------------ kernel


def test_kernel_matches_raw_bessel_form(rng):
    k, R = 5.0, 2.0
    g = RadialGrid(R, 2, 6)
    ker = RadialKernel(g, k, 20)
    for n in (0, 1, 3, 8, 13, 20):
        p = random_poly(rng, g.Nd - 1)
        K = ker.apply(p(g.nodes)[:, None], np.array([n]))[:, 0]
        ref = np.array([raw_kernel(n, k, R, p, a) for a in g.nodes])
        assert np.abs(K - ref).max() <= 1e-9 * np.abs(ref).max()


def test_kernel_n0_constant_closed_form():
    # k = 1, R = 2, a = 1 (the middle node of a single 3-point interval)
    g = RadialGrid(2.0, 1, 3)
    assert abs(g.nodes[1] - 1.0) < 1e-15
    K = RadialKernel(g, 1.0, 0).apply(np.ones((3, 1)), np.array([0]))[1, 0]
    e = np.exp
    inner = math.sin(1) - math.cos(1)                      # int_0^1 rho sin(rho)
    outer = -1j * (e(2j) * (1 - 2j) - e(1j) * (1 - 1j))    # int_1^2 rho h_0(rho) rho
    h0 = -1j * e(1j)
    want = -(h0 * inner + math.sin(1) * outer)
    assert abs(K - want) < 1e-14


def test_kernel_zero_input():
    g = RadialGrid(2.0, 2, 3)
    K = RadialKernel(g, 3.0, 4).apply(np.zeros((g.size, 5)), np.arange(5))
    assert np.all(K == 0)


def test_kernel_continuous_across_interval_edges(rng):
    # the per-interval interpolants of K meet at the shared edges
    g = RadialGrid(2.0, 4, 14)
    ker = RadialKernel(g, 1.0, 5)
    p = random_poly(rng, 3)
    K = ker.apply(np.repeat(p(g.nodes)[:, None], 6, axis=1), np.arange(6))
    coef = chebyshev_fit(K.reshape(g.Ni, g.Nd, 6).transpose(0, 2, 1), g)
    right_end = coef.sum(axis=-1)                                   # s = +1
    left_end = (coef * (-1.0) ** np.arange(g.Nd)).sum(axis=-1)     # s = -1
    # K has an a^2 log(a) term at the origin for n >= 2, so the first
    # interval's interpolant is not spectrally accurate; interior edges only
    jump = np.abs(right_end[1:-1] - left_end[2:])
    assert np.all(jump < 1e-11 * np.abs(K).max(axis=0))


def test_kernel_stable_under_quadrature_refinement(rng):
    g = RadialGrid(2.0, 4, 4)
    p = random_poly(rng, 3)
    vals = np.repeat(p(g.nodes)[:, None], 11, axis=1)
    deg = np.arange(11)
    a = RadialKernel(g, 5.0, 10, precompute_moments(g, 5.0, 10)).apply(vals, deg)
    b = RadialKernel(g, 5.0, 10, precompute_moments(g, 5.0, 10, order_boost=2)).apply(vals, deg)
    assert np.abs(a - b).max() < 1e-10 * np.abs(b).max()


def test_kernel_finite_up_to_band_511(rng):
    g = RadialGrid(4.0, 2, 2)
    F = 511
    ker = RadialKernel(g, 1.0, F)
    deg = np.arange(F + 1)
    vals = rng.standard_normal((g.size, F + 1)) + 0j
    assert np.all(np.isfinite(ker.apply(vals, deg)))


def test_scaling_overflow_reported():
    with pytest.raises(ScalingOverflow):
        KernelCoefficients(RadialGrid(2.0, 2, 2), 1e4, 100)


def test_kernel_rejects_foreign_moments():
    g = RadialGrid(2.0, 2, 3)
    mt = precompute_moments(g, 2.0, 4)
    with pytest.raises(InvalidConfig):
        RadialKernel(g, 3.0, 4, mt)
