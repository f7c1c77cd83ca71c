"""
Godunov 通量、CFL 时间步与 Burgers 扫描的测试（精确 Riemann 解对照）
"""
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from core.burgers import (
    SweepOptions, burgers_sweep, flux, godunov_flux, kruzkov_flux, shock_speed, stable_dt,
)
from core.bv import total_variation
from core.errors import InadmissibleJumpError, StabilityError
from core.grid import CellProfile, Preset, make_grid, sample_preset, zero_profile

states = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


@pytest.mark.parametrize('ul, ur, expected', [
    (0.0, 0.0, 0.0),
    (1.0, -1.0, 0.5),    # 静止激波
    (-1.0, 1.0, 0.0),    # 跨过 0 的稀疏波
    (2.0, 1.0, 2.0),     # 右行激波
    (-1.0, -2.0, 2.0),   # 左行激波
    (1.0, 2.0, 0.5),     # 右行稀疏波
    (-2.0, -1.0, 0.5),   # 左行稀疏波
])
def test_godunov_flux_riemann_cases(ul, ur, expected):
    assert godunov_flux(ul, ur) == pytest.approx(expected)


@given(states)
def test_godunov_flux_is_consistent(u):
    assert godunov_flux(u, u) == pytest.approx(float(flux(u)))


@settings(max_examples=200)
@given(states, states, states)
def test_godunov_flux_is_monotone(a, b, c):
    lo, hi = min(a, b), max(a, b)
    assert godunov_flux(lo, c) <= godunov_flux(hi, c) + 1e-12
    assert godunov_flux(c, lo) >= godunov_flux(c, hi) - 1e-12


def test_godunov_flux_vectorized():
    result = godunov_flux(np.array([1.0, -1.0]), np.array([-1.0, 1.0]))
    np.testing.assert_allclose(result, [0.5, 0.0])


@given(states, states, states)
def test_kruzkov_flux_reduces_to_flux_difference(ul, ur, k):
    assume(k <= min(ul, ur))
    assert float(kruzkov_flux(ul, ur, k)) == pytest.approx(godunov_flux(ul, ur) - float(flux(k)), abs=1e-9)
    high = max(ul, ur) + abs(k) + 1.0
    assert float(kruzkov_flux(ul, ur, high)) == pytest.approx(float(flux(high)) - godunov_flux(ul, ur), abs=1e-9)


def test_shock_speed():
    assert shock_speed(1.0, 0.0) == 0.5
    assert shock_speed(1.0, -1.0) == 0.0
    with pytest.raises(InadmissibleJumpError):
        shock_speed(0.0, 1.0)
    with pytest.raises(InadmissibleJumpError):
        shock_speed(1.0, 1.0)


def test_sweep_options_validation():
    with pytest.raises(StabilityError):
        SweepOptions(cfl=1.2)
    with pytest.raises(StabilityError):
        SweepOptions(cfl=0.5, max_dt=0.0)


def test_stable_dt(grid):
    opts = SweepOptions(cfl=0.5, max_dt=1.0)
    assert stable_dt(zero_profile(grid), opts) == 1.0
    p = sample_preset(grid, Preset.box(-1.0, 1.0, 2.0))
    q = sample_preset(grid, Preset.box(-1.0, 1.0, 4.0))
    assert stable_dt(p, opts) == pytest.approx(0.5 * grid.dx / 2.0)
    assert stable_dt(q, opts) == pytest.approx(0.5 * stable_dt(p, opts))


def test_sweep_keeps_zero(grid):
    p = burgers_sweep(zero_profile(grid), 0.01)
    assert not p.values.any()


def test_sweep_rejects_unstable_steps(grid):
    p = sample_preset(grid, Preset.box())
    with pytest.raises(StabilityError):
        burgers_sweep(p, -0.01)
    with pytest.raises(StabilityError):
        burgers_sweep(p, 2.0 * grid.dx)


def _evolve(p, t_end, cfl=0.45):
    opts = SweepOptions(cfl=cfl, max_dt=1.0)
    t = 0.0
    history = [p]
    while t < t_end:
        dt = min(stable_dt(p, opts), t_end - t)
        p = burgers_sweep(p, dt)
        history.append(p)
        t += dt
    return p, history


def test_decreasing_step_shock_location():
    g = make_grid(-5.0, 5.0, 400)
    p, _ = _evolve(sample_preset(g, Preset.step(-2.0, 0.0, 2.0, 1.0, 0.0)), 1.0)
    # 稀疏波头在 x = -1，左侧平台 [-0.7, 激波) 上 u = 1，由质量守恒定位激波
    start = -0.7
    cells = g.centers > start
    position = start + np.sum(p.values[cells]) * g.dx
    assert abs(position - 0.5) <= 2.0 * g.dx
    jump = g.edges[1:-1][np.argmin(np.diff(p.values))]
    assert abs(jump - 0.5) <= 2.0 * g.dx


def test_increasing_step_rarefaction():
    g = make_grid(-5.0, 5.0, 400)
    p0 = sample_preset(g, Preset.step(-2.0, 0.0, 2.0, 0.0, 1.0))
    p, history = _evolve(p0, 0.5)
    tvs = [total_variation(q) for q in history]
    assert all(b <= a + 1e-12 for a, b in zip(tvs, tvs[1:]))
    window = (g.centers > -1.0) & (g.centers < 1.5)
    assert np.all(np.diff(p.values[window]) >= -1e-12)
    assert p.values[g.cell_index(0.25)] == pytest.approx(0.5, abs=0.1)


def test_sweep_conserves_mass(grid):
    p0 = sample_preset(grid, Preset.sawtooth())
    p, _ = _evolve(p0, 1.0)
    assert np.sum(p.values) == pytest.approx(np.sum(p0.values), abs=1e-12)


def test_sweep_returns_profile_on_same_grid(grid):
    p = burgers_sweep(CellProfile(grid, np.linspace(-1.0, 1.0, grid.n_cells)), 0.01)
    assert p.grid == grid


profiles = arrays(np.float64, 30, elements=st.floats(min_value=-2.0, max_value=2.0, allow_nan=False))


@settings(max_examples=200)
@given(profiles)
def test_sweep_is_tvd_and_keeps_bounds(values):
    # 两端各补两个零单元，数组内的总变差即整条线上的总变差
    g = make_grid(0.0, 3.4, 34)
    p = CellProfile(g, np.concatenate(([0.0, 0.0], values, [0.0, 0.0])))
    swept = burgers_sweep(p, stable_dt(p, SweepOptions(cfl=0.45, max_dt=1.0)))
    assert total_variation(swept) <= total_variation(p) + 1e-12
    assert np.all(swept.values >= min(float(np.min(p.values)), 0.0) - 1e-12)
    assert np.all(swept.values <= max(float(np.max(p.values)), 0.0) + 1e-12)
