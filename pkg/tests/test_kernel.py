"""
Poisson 核卷积的测试：闭式值、求积与 O(N²) 直接求和对照、平移与线性代价、Poisson 残差收敛、Lipschitz 界
"""
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from core.errors import GridError
from core.grid import CellProfile, Preset, make_grid, sample_preset, zero_profile
from core.kernel import (
    convolve, kernel_at, lipschitz_check, near_jump_mask, poisson_residual, truncation_pad,
)

bounded = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def direct_sums(p):
    """按定义逐对求和的 O(N²) 参照"""
    dx = p.grid.dx
    idx = np.arange(p.grid.n_cells)
    dist = np.abs(idx[:, None] - idx[None, :]) * dx
    weights = 2.0 * math.sinh(dx / 2.0) * np.exp(-dist)
    np.fill_diagonal(weights, 2.0 * (1.0 - math.exp(-dx / 2.0)))
    sign = np.sign(idx[:, None] - idx[None, :])
    phi = -0.5 * weights @ p.values
    phi_x = 0.5 * (sign * weights) @ p.values
    return phi, phi_x


def test_zero_profile_gives_zero_field(grid):
    k = convolve(zero_profile(grid))
    assert not k.phi.any()
    assert not k.phi_x.any()


def test_box_closed_form_outside_support(grid):
    p = sample_preset(grid, Preset.box(-1.0, 1.0, 1.0))
    _, phi_x = kernel_at(p, [2.0])
    expected = 0.5 * math.exp(-2.0) * (math.e - math.exp(-1.0))
    assert phi_x[0] == pytest.approx(expected, abs=1e-10)
    assert expected == pytest.approx(0.15906, abs=1e-5)


@pytest.mark.parametrize('x', [-3.0, -0.4, 0.3, 1.7])
def test_kernel_at_matches_quadrature(grid, x):
    p = sample_preset(grid, Preset.box(-1.0, 1.0, 1.0))
    phi, phi_x = kernel_at(p, [x])
    points = [x] if -1.0 < x < 1.0 else None
    ref_phi = quad(lambda y: -0.5 * math.exp(-abs(x - y)), -1.0, 1.0, points=points, epsabs=1e-13)[0]
    ref_phi_x = quad(
        lambda y: 0.5 * math.copysign(1.0, x - y) * math.exp(-abs(x - y)),
        -1.0, 1.0, points=points, epsabs=1e-13,
    )[0]
    assert phi[0] == pytest.approx(ref_phi, abs=1e-10)
    assert phi_x[0] == pytest.approx(ref_phi_x, abs=1e-10)


def test_convolve_matches_direct_sums():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(16, 1025))
        half = float(rng.uniform(1.0, 20.0))
        g = make_grid(-half, half, n)
        p = CellProfile(g, rng.normal(size=n))
        k = convolve(p)
        phi, phi_x = direct_sums(p)
        assert np.max(np.abs(k.phi - phi)) <= 1e-12 * np.max(np.abs(phi))
        assert np.max(np.abs(k.phi_x - phi_x)) <= 1e-12 * np.max(np.abs(phi_x))


def test_convolve_commutes_with_whole_cell_shifts(grid):
    rng = np.random.default_rng(5)
    values = np.zeros(grid.n_cells)
    values[100:200] = rng.uniform(-1.0, 1.0, size=100)
    shift = 37
    k = convolve(CellProfile(grid, values))
    shifted = convolve(CellProfile(grid, np.roll(values, shift)))
    scale = np.max(np.abs(k.phi))
    np.testing.assert_allclose(shifted.phi[shift:], k.phi[:-shift], rtol=0, atol=1e-13 * scale)
    np.testing.assert_allclose(shifted.phi_x[shift:], k.phi_x[:-shift], rtol=0, atol=1e-13 * scale)


def test_convolve_cost_is_linear():
    rng = np.random.default_rng(9)

    def best_time(n):
        p = CellProfile(make_grid(-10.0, 10.0, n), rng.normal(size=n))
        timings = []
        for _ in range(5):
            start = time.perf_counter()
            convolve(p)
            timings.append(time.perf_counter() - start)
        return min(timings)

    small, large = best_time(2 ** 15), best_time(2 ** 18)
    # 8 倍的单元数：线性约 8 倍，平方会到 64 倍
    assert large / small < 24.0


def test_convolve_matches_kernel_at_centers():
    rng = np.random.default_rng(11)
    g = make_grid(-4.0, 4.0, 64)
    p = CellProfile(g, rng.uniform(-1.0, 1.0, size=g.n_cells))
    k = convolve(p)
    phi, phi_x = kernel_at(p, g.centers, chunk=10)
    np.testing.assert_allclose(k.phi, phi, atol=1e-12)
    np.testing.assert_allclose(k.phi_x, phi_x, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 32, elements=bounded), arrays(np.float64, 32, elements=bounded), bounded, bounded)
def test_convolution_is_linear(u, w, a, b):
    g = make_grid(0.0, 8.0, 32)
    combined = convolve(CellProfile(g, a * u + b * w))
    ku, kw = convolve(CellProfile(g, u)), convolve(CellProfile(g, w))
    np.testing.assert_allclose(combined.phi_x, a * ku.phi_x + b * kw.phi_x, atol=1e-8)
    np.testing.assert_allclose(combined.phi, a * ku.phi + b * kw.phi, atol=1e-8)


def test_interpolate_between_centers(grid):
    p = sample_preset(grid, Preset.bump(0.0, 4.0, 1.0))
    k = convolve(p)
    assert k.interpolate(grid.centers[10]) == pytest.approx(k.phi_x[10])
    mid = 0.5 * (grid.centers[200] + grid.centers[201])
    assert k.interpolate(mid) == pytest.approx(0.5 * (k.phi_x[200] + k.phi_x[201]))


def test_truncation_pad():
    assert truncation_pad(1e-8) == pytest.approx(-math.log(1e-8))
    assert truncation_pad(0.5) == 5.0
    with pytest.raises(GridError):
        truncation_pad(0.0)


def test_poisson_residual_zero(grid):
    p = zero_profile(grid)
    assert poisson_residual(p, convolve(p)) == 0.0


def test_poisson_residual_converges_on_smooth_data():
    residuals = []
    for n in (400, 800, 1600):
        g = make_grid(-20.0, 20.0, n)
        p = sample_preset(g, Preset.bump(0.0, 4.0, 1.0))
        residuals.append(poisson_residual(p, convolve(p)))
    order = math.log2(residuals[0] / residuals[2]) / 2.0
    assert order >= 1.8


def test_poisson_residual_converges_away_from_jumps():
    residuals = []
    for n in (400, 800, 1600):
        g = make_grid(-20.0, 20.0, n)
        p = sample_preset(g, Preset.box(-1.0, 1.0, 1.0))
        residuals.append(poisson_residual(p, convolve(p), exclude=near_jump_mask(p)))
    order = math.log2(residuals[0] / residuals[2]) / 2.0
    assert order >= 1.8


def test_near_jump_mask_marks_box_edges(grid):
    p = sample_preset(grid, Preset.box(-1.0, 1.0, 1.0))
    mask = near_jump_mask(p, width_cells=2)
    assert mask[grid.cell_index(-1.01)]
    assert mask[grid.cell_index(0.99)]
    assert not mask[grid.cell_index(0.0)]
    assert mask.sum() == 8


def test_lipschitz_zero(grid):
    p = zero_profile(grid)
    report = lipschitz_check(p, convolve(p))
    assert report.max_ratio == 0.0
    assert report.bound == 0.0
    assert report.satisfied


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 50, elements=bounded))
def test_lipschitz_bound_holds(values):
    g = make_grid(-5.0, 5.0, 50)
    p = CellProfile(g, values)
    report = lipschitz_check(p, convolve(p))
    assert report.satisfied
    assert report.max_ratio <= report.bound + 1e-9


def test_grid_mismatch_rejected(grid):
    p = zero_profile(grid)
    other = convolve(zero_profile(make_grid(-10.0, 10.0, 200)))
    with pytest.raises(GridError):
        poisson_residual(p, other)
