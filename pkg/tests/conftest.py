"""
测试共享夹具：小网格上的若干标准轨迹（整个会话只求解一次）
"""
import pytest

from core.bv import find_jumps
from core.grid import Preset, Trajectory, make_grid, zero_profile
from core.solver import GridSpec, SolveConfig, solve

SHOCK_TIMES = (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75)


def small_config(preset, t_end=2.0, snapshot_times=SHOCK_TIMES, n_cells=200, **kwargs):
    """(-10, 10) 上 dx = 0.1 的求解配置，pad = 5"""
    return SolveConfig(
        grid=GridSpec(-10.0, 10.0, n_cells),
        preset=preset,
        t_end=t_end,
        snapshot_times=snapshot_times,
        pad=5.0,
        **kwargs
    )


@pytest.fixture(scope='session')
def shock_traj():
    """u0 = 1 on [-2, 0)，0 on [0, 2)：x=0 处一个激波，x=-2 处一个稀疏波"""
    return solve(small_config(Preset.step()))


@pytest.fixture(scope='session')
def shock_position(shock_traj):
    def position(t):
        jumps = [j for j in find_jumps(shock_traj.profile_at(t)) if j.admissible]
        assert len(jumps) == 1
        return jumps[0].position
    return position


@pytest.fixture(scope='session')
def zero_traj():
    grid = make_grid(-10.0, 10.0, 200)
    traj = Trajectory(grid)
    for t in (0.0, 0.5, 1.0):
        traj.append(t, zero_profile(grid))
    return traj


@pytest.fixture
def grid():
    return make_grid(-10.0, 10.0, 400)


@pytest.fixture
def config_factory():
    """small_config 的工厂"""
    return small_config
