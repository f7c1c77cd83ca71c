"""
Burgers-Poisson 求解模块
通量分裂时间推进（Burgers 扫描 + 非局部源项）以及解的各项界检查
"""
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from core.burgers import SweepOptions, burgers_sweep, kruzkov_flux, stable_dt
from core.errors import (
    BoundsDomainError, ConfigError, GridError, NumericalAbortError, SnapshotMissingError, StabilityError,
)
from core.grid import (
    PRESET_KINDS, Preset, SchemeInfo, Trajectory, l1_norm, linf_norm, make_grid, mass, sample_preset,
)
from core.kernel import convolve, truncation_pad
from utils.config import (
    get_config, parse_bool, parse_choice, parse_float, parse_float_list, parse_int,
)
from utils.logger import get_logger

logger = get_logger()

SPLITTINGS = ('lie', 'strang')
INTEGRATORS = ('euler', 'rk2')
# 快照落点判断的相对容差
LANDING_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    x_min: float = -25.0
    x_max: float = 25.0
    n_cells: int = 800

    def build(self):
        return make_grid(self.x_min, self.x_max, self.n_cells)


@dataclass(frozen=True)
class SolveConfig:
    """
    求解配置

    pad 为 None 时取 truncation_pad()；snapshot_times 总会补上 0 与 t_end
    """
    grid: GridSpec = field(default_factory=GridSpec)
    preset: Preset = field(default_factory=Preset.zero)
    t_end: float = 1.0
    snapshot_times: Sequence[float] = ()
    splitting: str = 'strang'
    sweep: SweepOptions = field(default_factory=SweepOptions)
    source_integrator: str = 'rk2'
    source_enabled: bool = True
    pad: Optional[float] = None

    def __post_init__(self):
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError(f"t_end 必须是正有限数: {self.t_end}", key='solve.t_end')
        if self.splitting not in SPLITTINGS:
            raise ConfigError(f"未知的分裂方式: {self.splitting}", key='solve.splitting')
        if self.source_integrator not in INTEGRATORS:
            raise ConfigError(f"未知的源项积分器: {self.source_integrator}", key='solve.source_integrator')
        times = [float(t) for t in self.snapshot_times]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("snapshot_times 必须严格递增", key='solve.snapshot_times')
        if any(t < 0 or t > self.t_end for t in times):
            raise ConfigError("snapshot_times 必须位于 [0, t_end] 内", key='solve.snapshot_times')
        object.__setattr__(self, 'snapshot_times', tuple(times))

    def effective_pad(self):
        return truncation_pad() if self.pad is None else self.pad

    def landing_times(self):
        """实际保存的快照时间（含 0 与 t_end）"""
        times = sorted(set(self.snapshot_times) | {0.0, float(self.t_end)})
        return times

    def scheme_info(self):
        return SchemeInfo(
            splitting=self.splitting,
            source_integrator=self.source_integrator,
            source_enabled=self.source_enabled,
            cfl=self.sweep.cfl,
            max_dt=self.sweep.max_dt,
        )

    def with_scheme(self, scheme):
        """按轨迹记录的格式参数复制配置"""
        return replace(
            self,
            splitting=scheme.splitting,
            source_integrator=scheme.source_integrator,
            source_enabled=scheme.source_enabled,
            sweep=SweepOptions(scheme.cfl, scheme.max_dt),
        )


def solve_config_from_entries(entries, prefix='solve.'):
    """
    由 key=value 映射构造 SolveConfig

    Args:
        entries: parse_key_value_file 的结果（只读取 prefix 开头的键）
        prefix: 键前缀

    Returns:
        SolveConfig: 求解配置
    """
    cfl_default, max_dt_default = get_config().get_sweep_defaults()
    keys = [k[len(prefix):] for k in entries if k.startswith(prefix)]

    grid = GridSpec(
        parse_float(entries, prefix + 'grid.x_min', -25.0),
        parse_float(entries, prefix + 'grid.x_max', 25.0),
        parse_int(entries, prefix + 'grid.n_cells', 800),
    )
    kind = parse_choice(entries, prefix + 'preset.kind', set(PRESET_KINDS), 'zero')
    params = {}
    for key in keys:
        if key.startswith('preset.') and key != 'preset.kind':
            params[key[len('preset.'):]] = parse_float(entries, prefix + key)
    try:
        preset = Preset(kind, params)
    except GridError as err:
        raise ConfigError(str(err), key=prefix + 'preset.kind') from err

    known = {
        'grid.x_min', 'grid.x_max', 'grid.n_cells', 'preset.kind', 't_end', 'snapshot_times',
        'splitting', 'source_integrator', 'source', 'sweep.cfl', 'sweep.max_dt', 'pad',
    }
    for key in keys:
        if key not in known and not key.startswith('preset.'):
            raise ConfigError(f"未知配置项: {prefix + key}", key=prefix + key)

    try:
        sweep = SweepOptions(
            parse_float(entries, prefix + 'sweep.cfl', cfl_default),
            parse_float(entries, prefix + 'sweep.max_dt', max_dt_default),
        )
    except StabilityError as err:
        raise ConfigError(str(err), key=prefix + 'sweep.cfl') from err

    pad = parse_float(entries, prefix + 'pad', -1.0)
    return SolveConfig(
        grid=grid,
        preset=preset,
        t_end=parse_float(entries, prefix + 't_end', 1.0),
        snapshot_times=parse_float_list(entries, prefix + 'snapshot_times', ()),
        splitting=parse_choice(entries, prefix + 'splitting', set(SPLITTINGS), 'strang'),
        sweep=sweep,
        source_integrator=parse_choice(entries, prefix + 'source_integrator', set(INTEGRATORS), 'rk2'),
        source_enabled=parse_bool(entries, prefix + 'source', True),
        pad=None if pad < 0 else pad,
    )


# ---------------- 时间推进 ----------------

def source_advance(p, dt, integrator='rk2'):
    """
    逐单元积分 du/dt = [G*u]_x

    Args:
        p: 剖面
        dt: 时间步
        integrator: 'euler'（一次卷积）或 'rk2'（中点法，两次卷积）
    """
    if dt == 0:
        return p
    rate = convolve(p).phi_x
    if integrator == 'euler':
        return p.with_values(p.values + dt * rate)
    half = p.with_values(p.values + 0.5 * dt * rate)
    return p.with_values(p.values + dt * convolve(half).phi_x)


def split_stages(p, dt, cfg):
    """
    一个分裂步的各子步状态

    Returns:
        tuple: (进入扫描前的状态, 扫描后的状态, 步末状态)
    """
    if not cfg.source_enabled:
        swept = burgers_sweep(p, dt)
        return p, swept, swept
    if cfg.splitting == 'lie':
        pre = source_advance(p, dt, cfg.source_integrator)
        swept = burgers_sweep(pre, dt)
        return pre, swept, swept
    pre = source_advance(p, 0.5 * dt, cfg.source_integrator)
    swept = burgers_sweep(pre, dt)
    return pre, swept, source_advance(swept, 0.5 * dt, cfg.source_integrator)


def step(p, dt, cfg):
    """
    一个通量分裂步

    lie: 源项推进 dt 后 Burgers 扫描 dt；strang: 源项 dt/2、扫描 dt、源项 dt/2

    Raises:
        StabilityError: dt 超过 stable_dt(p)
    """
    limit = stable_dt(p, cfg.sweep)
    if dt > limit * (1.0 + LANDING_TOL):
        raise StabilityError(f"时间步 {dt} 超过稳定步长 {limit}")
    return split_stages(p, dt, cfg)[2]


def initial_profile(cfg):
    """按配置采样初值"""
    return sample_preset(cfg.grid.build(), cfg.preset, pad=cfg.effective_pad())


def solve(cfg, record_steps=False):
    """
    从 t=0 推进到 t_end，步长每步按 CFL 重新计算并缩短以精确落在快照时间上

    Args:
        cfg: 求解配置
        record_steps: 为 True 时保存每个时间步的状态

    Returns:
        Trajectory: 轨迹

    Raises:
        NumericalAbortError: 出现非有限值
    """
    p = initial_profile(cfg)
    traj = Trajectory(p.grid, cfg.scheme_info())
    traj.append(0.0, p)
    targets = [t for t in cfg.landing_times() if t > 0.0]

    t = 0.0
    n_steps = 0
    for target in targets:
        while t < target:
            dt = stable_dt(p, cfg.sweep)
            landing = t + dt >= target * (1.0 - LANDING_TOL)
            if landing:
                dt = target - t
            try:
                p = step(p, dt, cfg)
            except GridError as e:
                raise NumericalAbortError(f"t={t:.6g} 第 {n_steps} 步出现非有限值: {e}", t, n_steps) from e
            n_steps += 1
            t = target if landing else t + dt
            if record_steps and t < target:
                traj.append(t, p)
        traj.append(target, p)
        logger.debug("快照 t=%.6g 已保存（累计 %d 步）", target, n_steps)

    traj.n_steps = n_steps
    logger.debug("求解完成: t_end=%.6g，共 %d 步", cfg.t_end, n_steps)
    return traj


# ---------------- 界检查 ----------------

@dataclass(frozen=True)
class BoundCheckReport:
    """一侧不等式 lhs <= rhs 的检查结果，margin = rhs - lhs"""
    time: float
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    name: str = ''


def check_slack(dx, rhs):
    """界检查的加性松弛 slack_factor·dx·(1+rhs)·tol_scale"""
    config = get_config()
    return config.get_check_slack() * dx * (1.0 + rhs) * config.get_tol_scale()


def _report(name, t, lhs, rhs, dx):
    satisfied = lhs <= rhs + check_slack(dx, rhs) if math.isfinite(rhs) else True
    return BoundCheckReport(t, lhs, rhs, bool(satisfied), rhs - lhs, name)


def oleinik_constant(t, u0_l1):
    """K_t = 1 + 2t + 2t² + 4t²e^t‖u₀‖₁"""
    return 1.0 + 2.0 * t + 2.0 * t * t + 4.0 * t * t * math.exp(t) * u0_l1


def _require_positive_time(t):
    if not t > 0:
        raise BoundsDomainError(f"该检查要求 t > 0: {t}")


def l1_bound_check(traj, t):
    """‖u(t,·)‖₁ <= e^t‖u₀‖₁"""
    p = traj.profile_at(t)
    return _report('l1', t, l1_norm(p), math.exp(t) * traj.u0_l1, p.grid.dx)


def max_upward_slope(p):
    """相邻单元差商 (u_{i+1}-u_i)/dx 的正部最大值"""
    if p.grid.n_cells < 2:
        return 0.0
    slopes = np.diff(p.values) / p.grid.dx
    return max(0.0, float(np.max(slopes)))


def oleinik_check(traj, t):
    """
    u(t,y) - u(t,x) <= (K_t/t)(y-x)

    任意两点差商是相邻差商的凸组合，取相邻单元的最大值即可
    """
    _require_positive_time(t)
    p = traj.profile_at(t)
    rhs = oleinik_constant(t, traj.u0_l1) / t
    return _report('oleinik', t, max_upward_slope(p), rhs, p.grid.dx)


def linf_bound_check(traj, t, sharp=False):
    """
    ‖u(t,·)‖∞ <= sqrt(2K_t e^t‖u₀‖₁/t)

    sharp=True 时使用中间界 sqrt(2K_t‖u(t,·)‖₁/t)
    """
    _require_positive_time(t)
    p = traj.profile_at(t)
    k_t = oleinik_constant(t, traj.u0_l1)
    if sharp:
        rhs = math.sqrt(2.0 * k_t * l1_norm(p) / t)
    else:
        rhs = math.sqrt(2.0 * k_t * math.exp(t) * traj.u0_l1 / t)
    return _report('linf_sharp' if sharp else 'linf', t, linf_norm(p), rhs, p.grid.dx)


def run_checks(traj, t_min=None, checks=('l1', 'oleinik', 'linf')):
    """
    对所有 t >= t_min 的快照执行界检查

    Returns:
        list: BoundCheckReport 列表，按检查名和时间排序
    """
    if t_min is None:
        t_min = get_config().get_t_min()
    reports = []
    for name in checks:
        for t in traj.times:
            if name == 'l1':
                reports.append(l1_bound_check(traj, t))
            elif t >= t_min and t > 0:
                if name == 'oleinik':
                    reports.append(oleinik_check(traj, t))
                elif name == 'linf':
                    reports.append(linf_bound_check(traj, t))
                elif name == 'linf_sharp':
                    reports.append(linf_bound_check(traj, t, sharp=True))
    failed = [r for r in reports if not r.satisfied]
    for r in failed:
        logger.warning("%s 检查失败: t=%.6g lhs=%.6g rhs=%.6g", r.name, r.time, r.lhs, r.rhs)
    return reports


def mass_drift(traj):
    """max_t |∫u(t) - ∫u(0)|"""
    m0 = mass(traj.profiles[0])
    return max(abs(mass(p) - m0) for p in traj.profiles)


def time_lipschitz(traj):
    """
    相邻快照间 ‖u(t)-u(s)‖₁/(t-s) 的最大值（不与具体常数比较）
    """
    if len(traj) < 2:
        return 0.0
    dx = traj.grid.dx
    ratios = [
        float(np.sum(np.abs(b.values - a.values)) * dx) / (tb - ta)
        for ta, tb, a, b in zip(traj.times, traj.times[1:], traj.profiles, traj.profiles[1:])
    ]
    return max(ratios)


# ---------------- 熵检查 ----------------

@dataclass(frozen=True)
class EntropyReport:
    max_violation: float
    tolerance: float
    satisfied: bool
    n_steps: int
    pointwise_violation: float = 0.0


def _entropy_flux_divergence(values, dx, ks):
    """(Q_{i+1/2} - Q_{i-1/2})/dx，两端补零虚单元，与扫描的边界处理一致"""
    padded = np.concatenate(([0.0], values, [0.0]))
    return np.diff(kruzkov_flux(padded[:-1], padded[1:], ks), axis=-1) / dx


def pointwise_entropy_residual(u, u_next, dt, k_values, source_enabled=True):
    """
    两个快照之间逐单元的离散 Kruzkov 残差

    (|u'-k| - |u-k|)/dt + (Q_{i+1/2} - Q_{i-1/2})/dx - sign(u-k)·[G*u]_x(x_i)，
    Q 为 u 上的 Godunov 数值熵通量

    Args:
        u: 前一个快照
        u_next: 后一个快照
        dt: 两个快照的时间差
        k_values: Kruzkov 常数
        source_enabled: 是否计入源项

    Returns:
        numpy.ndarray: 形状 (K, N) 的残差
    """
    ks = np.asarray(list(k_values), dtype=float)[:, None]
    rate = convolve(u).phi_x if source_enabled else 0.0
    return (
        (np.abs(u_next.values - ks) - np.abs(u.values - ks)) / dt
        + _entropy_flux_divergence(u.values, u.grid.dx, ks)
        - np.sign(u.values - ks) * rate
    )


def interval_entropy_residual(u, u_next, t0, t1, cfg, ks):
    """
    [t0, t1] 上积分形式的单元熵残差

    (|u(t1)-k| - |u(t0)-k| + Σ_n dt_n·ΔQ^n/dx - Σ_n 源项熵产生^n)/(t1 - t0)

    两端取存储的快照；通量与源项熵产生沿从 u(t0) 出发的分裂步累积，
    每一步的 Q 取进入扫描时的状态，源项子步的熵产生取 sign(子步后状态 - k)·增量。
    对格式自身产生的快照残差不超过舍入误差；关闭源项且区间只含一步时即为逐点残差

    Returns:
        tuple: (形状 (K, N) 的残差, 步数)
    """
    dx = u.grid.dx
    production = np.zeros((ks.shape[0], u.grid.n_cells))
    p, t, n_steps = u, t0, 0
    while t < t1:
        dt = stable_dt(p, cfg.sweep)
        landing = t + dt >= t1 * (1.0 - LANDING_TOL)
        if landing:
            dt = t1 - t
        pre, swept, after = split_stages(p, dt, cfg)
        source = (
            np.sign(pre.values - ks) * (pre.values - p.values)
            + np.sign(after.values - ks) * (after.values - swept.values)
        )
        production += dt * _entropy_flux_divergence(pre.values, dx, ks) - source
        n_steps += 1
        p = after
        t = t1 if landing else t + dt
    change = np.abs(u_next.values - ks) - np.abs(u.values - ks)
    return (change + production) / (t1 - t0), n_steps


def entropy_check(traj, k_values, cfg=None):
    """
    离散 Kruzkov 熵不等式检查

    对每一对相邻快照计算 interval_entropy_residual（读取两端的存储值），
    同时记录逐点残差 pointwise_entropy_residual 的最大正部（只报告，不参与判定）

    Args:
        traj: 轨迹（至少两个快照）
        k_values: Kruzkov 常数
        cfg: 可选求解配置，默认由轨迹记录的格式参数构造

    Returns:
        EntropyReport: 最大正残差及容差 C_e·dx
    """
    if len(traj) < 2:
        raise SnapshotMissingError("熵检查至少需要两个快照")
    config = get_config()
    if cfg is None:
        cfg = SolveConfig(t_end=traj.times[-1])
    cfg = cfg.with_scheme(traj.scheme)
    ks = np.asarray(list(k_values), dtype=float)[:, None]

    worst = 0.0
    pointwise = 0.0
    n_steps = 0
    pairs = zip(traj.times, traj.times[1:], traj.profiles, traj.profiles[1:])
    for t0, t1, u, u_next in pairs:
        residual, steps = interval_entropy_residual(u, u_next, t0, t1, cfg, ks)
        worst = max(worst, float(np.max(residual)))
        n_steps += steps
        literal = pointwise_entropy_residual(u, u_next, t1 - t0, ks[:, 0], cfg.source_enabled)
        pointwise = max(pointwise, float(np.max(literal)))

    tolerance = config.get_entropy_constant() * traj.grid.dx * config.get_tol_scale()
    return EntropyReport(worst, tolerance, worst <= tolerance, n_steps, pointwise)
