"""
通量分裂求解与界检查、熵检查的测试
"""
import math

import numpy as np
import pytest

from core.burgers import SweepOptions, burgers_sweep, stable_dt
from core.bv import find_jumps
from core.errors import BoundsDomainError, ConfigError, GridError, SnapshotMissingError, StabilityError
from core.grid import CellProfile, Preset, SchemeInfo, Trajectory, make_grid, mass, sample_preset, zero_profile
from core.solver import (
    GridSpec, SolveConfig, entropy_check, initial_profile, l1_bound_check, linf_bound_check,
    mass_drift, oleinik_check, oleinik_constant, pointwise_entropy_residual, run_checks, solve,
    solve_config_from_entries, source_advance, step, time_lipschitz,
)


def test_zero_datum_is_fixed_point(config_factory):
    traj = solve(config_factory(Preset.zero(), t_end=1.0, snapshot_times=(0.3, 0.7)))
    assert traj.times == [0.0, 0.3, 0.7, 1.0]
    assert all(not p.values.any() for p in traj.profiles)


def test_solve_lands_exactly_on_snapshot_times(config_factory):
    times = (0.1, 0.33, 0.8)
    traj = solve(config_factory(Preset.box(), t_end=1.0, snapshot_times=times))
    assert traj.times == [0.0, 0.1, 0.33, 0.8, 1.0]
    assert traj.n_steps > 0
    assert traj.scheme.splitting == 'strang'


def test_record_steps_keeps_intermediate_states(config_factory):
    traj = solve(config_factory(Preset.box(), t_end=0.5, snapshot_times=()), record_steps=True)
    assert len(traj) == traj.n_steps + 1
    assert np.all(np.diff(traj.times) > 0)


@pytest.mark.parametrize('kwargs, key', [
    ({'t_end': 0.0}, 'solve.t_end'),
    ({'splitting': 'marchuk'}, 'solve.splitting'),
    ({'source_integrator': 'rk4'}, 'solve.source_integrator'),
    ({'t_end': 1.0, 'snapshot_times': (0.5, 0.2)}, 'solve.snapshot_times'),
    ({'t_end': 1.0, 'snapshot_times': (2.0,)}, 'solve.snapshot_times'),
])
def test_solve_config_validation(kwargs, key):
    with pytest.raises(ConfigError) as excinfo:
        SolveConfig(**kwargs)
    assert excinfo.value.key == key


def test_default_pad_rejects_wide_support():
    cfg = SolveConfig(grid=GridSpec(-5.0, 5.0, 100), preset=Preset.box())
    with pytest.raises(GridError):
        initial_profile(cfg)


def test_solve_config_from_entries():
    entries = {
        'solve.grid.x_min': '-10', 'solve.grid.x_max': '10', 'solve.grid.n_cells': '100',
        'solve.preset.kind': 'bump', 'solve.preset.center': '0', 'solve.preset.width': '2',
        'solve.preset.height': '1', 'solve.t_end': '0.5', 'solve.snapshot_times': '0.1, 0.2',
        'solve.splitting': 'lie', 'solve.source_integrator': 'euler', 'solve.source': 'off',
        'solve.sweep.cfl': '0.3', 'solve.pad': '5', 'output_dir': 'ignored',
    }
    cfg = solve_config_from_entries(entries)
    assert cfg.grid == GridSpec(-10.0, 10.0, 100)
    assert cfg.preset.kind == 'bump'
    assert cfg.snapshot_times == (0.1, 0.2)
    assert cfg.splitting == 'lie'
    assert cfg.source_integrator == 'euler'
    assert cfg.source_enabled is False
    assert cfg.sweep.cfl == 0.3
    assert cfg.effective_pad() == 5.0


def test_solve_config_unknown_key_is_named():
    with pytest.raises(ConfigError) as excinfo:
        solve_config_from_entries({'solve.grid.cells': '10'})
    assert excinfo.value.key == 'solve.grid.cells'


def test_step_rejects_unstable_dt(config_factory):
    cfg = config_factory(Preset.box())
    p = initial_profile(cfg)
    with pytest.raises(StabilityError):
        step(p, 2.0 * stable_dt(p, cfg.sweep), cfg)


def test_source_integrator_orders(grid):
    p = sample_preset(grid, Preset.box(-1.0, 1.0, 1.0))
    horizon = 0.8

    def integrate(n, integrator):
        q = p
        for _ in range(n):
            q = source_advance(q, horizon / n, integrator)
        return q.values

    reference = integrate(512, 'rk2')

    def order(integrator):
        e1 = np.max(np.abs(integrate(8, integrator) - reference))
        e2 = np.max(np.abs(integrate(16, integrator) - reference))
        return math.log2(e1 / e2)

    assert 0.8 <= order('euler') <= 1.3
    assert order('rk2') >= 1.8


def test_solve_conserves_mass_up_to_truncation(config_factory):
    # 源项的质量误差来自截断尾部，量级 e^{-(到边界的距离)}·‖u‖₁
    traj = solve(config_factory(Preset.bump(0.0, 2.0, 1.0), t_end=1.0, snapshot_times=(0.5,)))
    assert mass_drift(traj) <= 1e-4
    assert mass(traj.profiles[-1]) == pytest.approx(1.0, abs=1e-4)


def test_l1_check_at_time_zero(shock_traj):
    report = l1_bound_check(shock_traj, 0.0)
    assert report.lhs == pytest.approx(report.rhs)
    assert report.margin == pytest.approx(0.0, abs=1e-12)
    assert report.satisfied


def test_l1_check_on_zero_datum(zero_traj):
    report = l1_bound_check(zero_traj, 1.0)
    assert report.lhs == 0.0
    assert report.rhs == 0.0
    assert report.satisfied


def test_all_bound_checks_hold_on_shock_run(shock_traj):
    reports = run_checks(shock_traj, checks=('l1', 'oleinik', 'linf', 'linf_sharp'))
    assert {r.name for r in reports} == {'l1', 'oleinik', 'linf', 'linf_sharp'}
    assert all(r.satisfied for r in reports)
    assert all(r.time >= 0.05 for r in reports if r.name != 'l1')


def test_sharp_linf_bound_is_tighter(shock_traj):
    for t in shock_traj.times[1:]:
        sharp = linf_bound_check(shock_traj, t, sharp=True)
        plain = linf_bound_check(shock_traj, t)
        assert sharp.rhs <= plain.rhs * (1.0 + 1e-9)


def test_oleinik_on_monotone_profile(grid):
    traj = Trajectory(grid)
    traj.append(0.0, sample_preset(grid, Preset.step(-2.0, 0.0, 2.0, 1.0, 0.0)))
    traj.append(0.5, CellProfile(grid, np.linspace(1.0, 0.0, grid.n_cells)))
    report = oleinik_check(traj, 0.5)
    assert report.lhs == 0.0
    assert report.satisfied


def test_oleinik_detects_increasing_jump():
    g = make_grid(-5.0, 5.0, 1000)
    traj = Trajectory(g)
    traj.append(0.0, zero_profile(g))
    traj.append(0.5, CellProfile(g, np.where(g.centers > 0.0, 1.0, 0.0)))
    report = oleinik_check(traj, 0.5)
    assert report.lhs == pytest.approx(1.0 / g.dx)
    assert not report.satisfied


def test_oleinik_requires_positive_time(shock_traj):
    with pytest.raises(BoundsDomainError):
        oleinik_check(shock_traj, 0.0)
    with pytest.raises(SnapshotMissingError):
        oleinik_check(shock_traj, 0.3)


def test_oleinik_constant_values():
    assert oleinik_constant(0.0, 5.0) == 1.0
    assert oleinik_constant(1.0, 0.0) == 5.0
    assert oleinik_constant(1.0, 1.0) == pytest.approx(5.0 + 4.0 * math.e)


def test_entropy_check_on_shock_run(shock_traj):
    report = entropy_check(shock_traj, [-0.5, 0.0, 0.25, 0.5, 1.0])
    assert report.n_steps > 0
    assert report.satisfied
    assert report.max_violation <= 1e-10


def test_entropy_check_on_zero_trajectory(zero_traj):
    report = entropy_check(zero_traj, [1.0, -1.0])
    assert report.max_violation == 0.0
    assert report.satisfied


def test_entropy_check_needs_two_snapshots(grid):
    traj = Trajectory(grid)
    traj.append(0.0, zero_profile(grid))
    with pytest.raises(SnapshotMissingError):
        entropy_check(traj, [0.0])


def _held_expansion_shock():
    """-1 | +1 的扩张激波在 t = 0, 0.5, 1 保持不动（纯 Burgers 下不是熵解）"""
    grid = make_grid(-10.0, 10.0, 200)
    values = np.where((grid.centers >= -2.0) & (grid.centers < 0.0), -1.0, 0.0)
    values = np.where((grid.centers >= 0.0) & (grid.centers < 2.0), 1.0, values)
    traj = Trajectory(grid, SchemeInfo(source_enabled=False))
    for t in (0.0, 0.5, 1.0):
        traj.append(t, CellProfile(grid, values))
    return traj


def test_entropy_check_flags_expansion_shock():
    report = entropy_check(_held_expansion_shock(), [0.0])
    assert not report.satisfied
    assert report.max_violation > 1.0
    # 界面 x=0 两侧单元：ΔQ/dx = 0.5/dx
    assert report.pointwise_violation == pytest.approx(5.0, rel=1e-9)


def test_pointwise_residual_on_single_step(grid):
    p = sample_preset(grid, Preset.step())
    dt = stable_dt(p, SweepOptions())
    swept = burgers_sweep(p, dt)
    residual = pointwise_entropy_residual(p, swept, dt, [-0.5, 0.0, 0.5, 1.0], source_enabled=False)
    assert residual.shape == (4, grid.n_cells)
    assert np.max(residual) <= 1e-12


def test_time_lipschitz_is_finite(shock_traj, zero_traj):
    assert time_lipschitz(zero_traj) == 0.0
    value = time_lipschitz(shock_traj)
    assert 0.0 < value < 10.0


@pytest.mark.slow
def test_grid_self_convergence_on_shock_run():
    def run(n):
        cfg = SolveConfig(
            grid=GridSpec(-10.0, 10.0, n), preset=Preset.step(), t_end=1.0, pad=5.0,
            sweep=SweepOptions(0.45, 0.05),
        )
        return solve(cfg).profiles[-1].values

    coarse, medium, fine = run(200), run(400), run(800)
    e1 = np.sum(np.abs(coarse - medium.reshape(-1, 2).mean(axis=1))) * 0.1
    e2 = np.sum(np.abs(medium - fine.reshape(-1, 2).mean(axis=1))) * 0.05
    assert math.log2(e1 / e2) >= 0.8


@pytest.mark.slow
@pytest.mark.parametrize('preset', [Preset.box(), Preset.bump(), Preset.step(), Preset.sawtooth()],
                         ids=['box', 'bump', 'step', 'sawtooth'])
def test_bounds_hold_on_standard_data(preset):
    cfg = SolveConfig(grid=GridSpec(-25.0, 25.0, 800), preset=preset, t_end=2.0, snapshot_times=(0.5, 1.0, 1.5))
    reports = run_checks(solve(cfg), checks=('l1', 'oleinik', 'linf'))
    assert reports
    failed = [(r.name, r.time, r.margin) for r in reports if not r.satisfied]
    assert not failed


def _breaking_history(n_cells):
    times = tuple(round(0.1 * k, 10) for k in range(1, 31))
    cfg = SolveConfig(
        grid=GridSpec(-8.0, 8.0, n_cells), preset=Preset.bump(0.0, 2.0, 1.0),
        t_end=3.0, snapshot_times=times, pad=5.0,
    )
    traj = solve(cfg)
    return [(t, [j for j in find_jumps(p) if j.admissible]) for t, p in zip(traj.times, traj.profiles)]


@pytest.mark.slow
@pytest.mark.parametrize('n_cells', [3200, 6400])
def test_smooth_bump_breaks_and_jump_persists(n_cells):
    # 光滑初值的最大单元增量约 (π/2)·dx，远低于 θ = 0.5·√dx
    history = _breaking_history(n_cells)
    assert history[0][0] == 0.0
    assert not history[0][1]
    detected = [i for i, (_, jumps) in enumerate(history) if jumps]
    assert detected
    first = detected[0]
    assert history[first][0] <= 3.0
    assert all(jumps for _, jumps in history[first:])
