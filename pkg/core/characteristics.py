"""
广义特征线模块
前向特征线、极小/极大后向特征线、特征锥底、显式常数，以及几何泛函 F_σ 和相关不等式检查
"""
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.bv import decompose, default_ac_scale, default_theta, find_jumps
from core.errors import BoundsDomainError, CharacteristicError, GridError
from core.grid import one_sided_limits
from core.kernel import convolve
from core.solver import oleinik_constant
from utils.config import get_config
from utils.logger import get_logger

logger = get_logger()

GENUINE = 'genuine'
SHOCK = 'shock'
FORWARD = 'forward'
BACKWARD = 'backward'
SIDES = ('minus', 'plus', 'none')
# 同一顶点上两侧曲线的左右次序
SIDE_ORDER = {'minus': 0, 'none': 1, 'plus': 2}
# 检测窗口半宽（单元数）：捕捉到的激波会抹开一到两个单元
STENCIL_CELLS = 2
# exp 的上溢界限
EXP_LIMIT = 700.0


# ---------------- 显式常数 ----------------

def _exp(x):
    return math.exp(x) if x < EXP_LIMIT else math.inf


def _mul(*factors):
    """乘积，任一因子为 0 时结果为 0（避免 0·inf）"""
    if any(f == 0 for f in factors):
        return 0.0
    result = 1.0
    for f in factors:
        result *= f
    return result


def m_factor(t, u0_l1):
    """M_t = sqrt(2K_t e^t‖u₀‖₁) + (e^t‖u₀‖₁ + 1)√t"""
    k_t = oleinik_constant(t, u0_l1)
    return math.sqrt(2.0 * k_t * math.exp(t) * u0_l1) + (math.exp(t) * u0_l1 + 1.0) * math.sqrt(t)


def c_factor(t, s, u0_l1):
    """c_t(s) = exp{2M_t(√t - √s)}，0 <= s <= t"""
    if not 0 <= s <= t:
        raise BoundsDomainError(f"c_t(s) 要求 0 <= s <= t: s={s}, t={t}")
    return _exp(2.0 * m_factor(t, u0_l1) * (math.sqrt(t) - math.sqrt(s)))


def kernel_lipschitz(t, s, u0_l1):
    """s 时刻 [G*u]_x 的 Lipschitz 常数上界 sqrt(2K_t e^t‖u₀‖₁/s) + e^t‖u₀‖₁"""
    if not s > 0:
        raise BoundsDomainError(f"kernel_lipschitz 要求 s > 0: {s}")
    k_t = oleinik_constant(t, u0_l1)
    return math.sqrt(2.0 * k_t * math.exp(t) * u0_l1 / s) + math.exp(t) * u0_l1


def gamma_factor(t0, t, u0_l1):
    """γ_[t0,t] = L(t0)·(e^{K_t} t/t0)·(t - t0)"""
    if not 0 < t0 <= t:
        raise BoundsDomainError(f"γ 要求 0 < t0 <= t: t0={t0}, t={t}")
    k_t = oleinik_constant(t, u0_l1)
    return _mul(kernel_lipschitz(t, t0, u0_l1), _exp(k_t), t / t0, t - t0)


def big_gamma_factor(t0, t, u0_l1):
    """Γ_[t0,t] = 1 + L(t0)·(e^{K_t} t/t0)·(t - t0)²"""
    return 1.0 + _mul(gamma_factor(t0, t, u0_l1), t - t0)


def kappa_factor(sigma, T, u0_l1):
    """κ_[σ,T] = (σ/2)/[Γ_[σ/2,T] + (sqrt(4K_T e^T‖u₀‖₁/σ) + e^T‖u₀‖₁)·e^{K_T}T·(T - σ/2)]"""
    if not 0 < sigma < T:
        raise BoundsDomainError(f"κ 要求 0 < σ < T: σ={sigma}, T={T}")
    k_T = oleinik_constant(T, u0_l1)
    inner = math.sqrt(4.0 * k_T * math.exp(T) * u0_l1 / sigma) + math.exp(T) * u0_l1
    denominator = big_gamma_factor(sigma / 2.0, T, u0_l1) + _mul(inner, _exp(k_T), T, T - sigma / 2.0)
    return (sigma / 2.0) / denominator


def region_width_bound(sigma, T, u0_l1, z1, z2):
    """|A_t| <= |z2 - z1| + 2·sqrt(2K_T e^T‖u₀‖₁/σ)·T"""
    k_T = oleinik_constant(T, u0_l1)
    return abs(z2 - z1) + 2.0 * math.sqrt(2.0 * k_T * math.exp(T) * u0_l1 / sigma) * T


def m_sigma_factor(sigma, T, u0_l1, z1, z2):
    """M_σ^T = 2·sqrt(2K_T e^T‖u₀‖₁/σ) + (2K_T/σ)·(|z2 - z1| + 2·sqrt(2K_T e^T‖u₀‖₁/σ)·T)"""
    if not 0 < sigma < T:
        raise BoundsDomainError(f"M_σ^T 要求 0 < σ < T: σ={sigma}, T={T}")
    k_T = oleinik_constant(T, u0_l1)
    root = math.sqrt(2.0 * k_T * math.exp(T) * u0_l1 / sigma)
    return 2.0 * root + (2.0 * k_T / sigma) * region_width_bound(sigma, T, u0_l1, z1, z2)


@dataclass(frozen=True)
class BoundsReport:
    """全部显式常数及其输入"""
    t: float
    s: float
    t0: float
    sigma: float
    T: float
    u0_l1: float
    z1: float
    z2: float
    K_t: float
    M_t: float
    c_t_s: float
    Gamma_t0_t: float
    gamma_t0_t: float
    kappa_sigma_T: float
    M_sigma_T: float
    kernel_lipschitz: float
    region_width: float

    def as_items(self):
        """按固定顺序返回 (键, 值) 列表"""
        return [(name, getattr(self, name)) for name in self.__dataclass_fields__]


def bounds_constants(t, s, t0, sigma, T, u0_l1, z1=0.0, z2=0.0):
    """
    计算全部显式常数

    Args:
        t, s, t0: 满足 0 < s <= t，0 < t0 <= t
        sigma, T: 满足 0 < sigma < T 且 t <= T
        u0_l1: ‖u₀‖₁ >= 0
        z1, z2: M_σ^T 与区域宽度所需的两个端点

    Returns:
        BoundsReport: 常数报告；超出浮点范围的量饱和为 inf（κ 相应为 0）
    """
    values = (t, s, t0, sigma, T, u0_l1, z1, z2)
    if not all(math.isfinite(v) for v in values):
        raise BoundsDomainError(f"参数必须有限: {values}")
    if not (0 < s <= t <= T and 0 < t0 <= t and 0 < sigma < T and u0_l1 >= 0):
        raise BoundsDomainError(
            f"参数越界: 需要 0 < s <= t <= T, 0 < t0 <= t, 0 < σ < T, ‖u₀‖₁ >= 0，"
            f"实际 t={t}, s={s}, t0={t0}, σ={sigma}, T={T}, ‖u₀‖₁={u0_l1}"
        )
    return BoundsReport(
        t=t, s=s, t0=t0, sigma=sigma, T=T, u0_l1=u0_l1, z1=z1, z2=z2,
        K_t=oleinik_constant(t, u0_l1),
        M_t=m_factor(t, u0_l1),
        c_t_s=c_factor(t, s, u0_l1),
        Gamma_t0_t=big_gamma_factor(t0, t, u0_l1),
        gamma_t0_t=gamma_factor(t0, t, u0_l1),
        kappa_sigma_T=kappa_factor(sigma, T, u0_l1),
        M_sigma_T=m_sigma_factor(sigma, T, u0_l1, z1, z2),
        kernel_lipschitz=kernel_lipschitz(t, s, u0_l1),
        region_width=region_width_bound(sigma, T, u0_l1, z1, z2),
    )


# ---------------- 轨迹上的场 ----------------

class TrajectoryField:
    """
    轨迹在 (s, x) 处的取值：空间上取单元值，时间上在相邻快照之间线性插值；
    源项 [G*u]_x 在每个快照上用 convolve 计算后同样插值（轨迹关闭源项时为 0）
    """

    def __init__(self, traj, theta=None):
        if len(traj) < 1:
            raise CharacteristicError("轨迹为空")
        self.traj = traj
        self.grid = traj.grid
        self.dx = traj.grid.dx
        self.theta = default_theta(self.dx) if theta is None else theta
        self.half_width = STENCIL_CELLS * self.dx
        self.values = traj.values_matrix()
        self._phi_x = None
        self._centers = traj.grid.centers

    @property
    def phi_x(self):
        if self._phi_x is None:
            if self.traj.scheme.source_enabled:
                self._phi_x = np.vstack([convolve(p).phi_x for p in self.traj.profiles])
            else:
                # 纯 Burgers 轨迹：特征线上没有加速度
                self._phi_x = np.zeros_like(self.values)
        return self._phi_x

    def _bracket(self, s):
        try:
            return self.traj.bracket(s)
        except GridError as e:
            raise CharacteristicError(str(e)) from e

    def _cell(self, x):
        i = int(math.floor((x - self.grid.x_min) / self.dx))
        return min(max(i, 0), self.grid.n_cells - 1)

    def value(self, s, x):
        """u(s, x)：x 所在单元的值在时间上线性插值"""
        i, w = self._bracket(s)
        j = self._cell(x)
        if w == 0.0:
            return float(self.values[i, j])
        return float((1.0 - w) * self.values[i, j] + w * self.values[i + 1, j])

    def _window_limits(self, profile, x):
        grid = self.grid
        left = min(max(x - self.half_width, grid.x_min), grid.x_max)
        right = min(max(x + self.half_width, grid.x_min), grid.x_max)
        return one_sided_limits(profile, left)[1], one_sided_limits(profile, right)[0]

    def limits(self, s, x):
        """
        检测窗口 [x-h, x+h] 两端朝内的单侧极限 (u((x-h)+), u((x+h)-))

        端点落在界面上时取窗口内侧的单元；时间上在相邻快照之间线性插值
        """
        i, w = self._bracket(s)
        u_minus, u_plus = self._window_limits(self.traj.profiles[i], x)
        if w == 0.0:
            return u_minus, u_plus
        next_minus, next_plus = self._window_limits(self.traj.profiles[i + 1], x)
        return (1.0 - w) * u_minus + w * next_minus, (1.0 - w) * u_plus + w * next_plus

    def jump(self, s, x):
        """
        (s, x) 处是否为激波

        Returns:
            tuple: (是否间断, u_minus, u_plus)
        """
        u_minus, u_plus = self.limits(s, x)
        return u_minus - u_plus >= self.theta, u_minus, u_plus

    def source(self, s, x):
        """[G*u(s,·)]_x(x)"""
        i, w = self._bracket(s)
        row = np.interp(x, self._centers, self.phi_x[i])
        if w == 0.0:
            return float(row)
        return float((1.0 - w) * row + w * np.interp(x, self._centers, self.phi_x[i + 1]))

    def ensure_inside(self, x, s):
        margin = self.half_width
        if not (self.grid.x_min + margin <= x <= self.grid.x_max - margin):
            raise CharacteristicError(f"特征线在 s={s:.6g} 离开计算区域: ξ={x:.6g}")


_FIELDS = weakref.WeakKeyDictionary()


def trajectory_field(traj):
    """按轨迹缓存 TrajectoryField（快照数变化时重建）"""
    cached = _FIELDS.get(traj)
    if cached is None or cached.values.shape[0] != len(traj):
        cached = TrajectoryField(traj)
        _FIELDS[traj] = cached
    return cached


# ---------------- 特征线 ----------------

@dataclass(frozen=True)
class Origin:
    t: float
    x: float
    side: str = 'none'


@dataclass(frozen=True, eq=False)
class Characteristic:
    """
    采样的特征线，times 总是递增存储

    shock_flags[k] 表示第 k 个样本点是否处于激波上（前向特征线一旦进入激波即保持）
    """
    times: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    kind: str
    direction: str
    origin: Origin
    shock_flags: np.ndarray
    dx: float
    step: float

    def position_at(self, s):
        return float(np.interp(s, self.times, self.xi))

    def speed_at(self, s):
        return float(np.interp(s, self.times, self.v))

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    def sample_kinds(self):
        return [SHOCK if flag else GENUINE for flag in self.shock_flags]


def _time_nodes(times, start, stop, substeps):
    """start 到 stop（递增）之间的积分节点：每个快照间隔等分为 substeps 段"""
    knots = [start] + [t for t in times if start < t < stop] + [stop]
    nodes = [start]
    for a, b in zip(knots[:-1], knots[1:]):
        nodes.extend(np.linspace(a, b, substeps + 1)[1:])
    return np.asarray(nodes)


def _substeps(substeps):
    return get_config().get_char_substeps() if substeps is None else int(substeps)


def forward_characteristic(traj, t0, x0, t_end=None, substeps=None):
    """
    前向广义特征线，Heun 方法积分

    连续点处 ξ' = u(s,ξ)，检测到激波时 ξ' = (u(s,ξ-)+u(s,ξ+))/2

    Args:
        traj: 轨迹
        t0: 起始时间（不早于第一个快照）
        x0: 起点
        t_end: 终止时间，默认最后一个快照
        substeps: 每个快照间隔的子步数

    Returns:
        Characteristic: 前向特征线
    """
    f = trajectory_field(traj)
    if not traj.grid.contains(x0):
        raise CharacteristicError(f"起点 {x0} 不在网格内")
    if t_end is None:
        t_end = traj.times[-1]
    if t0 < traj.times[0] or t0 > t_end:
        raise CharacteristicError(f"起始时间 {t0} 不在 [{traj.times[0]}, {t_end}] 内")
    f.ensure_inside(x0, t0)

    def speed(s, x):
        is_jump, u_minus, u_plus = f.jump(s, x)
        if is_jump:
            return 0.5 * (u_minus + u_plus), True
        return f.value(s, x), False

    nodes = _time_nodes(traj.times, t0, t_end, _substeps(substeps))
    xi = np.empty(nodes.size)
    v = np.empty(nodes.size)
    flags = np.zeros(nodes.size, dtype=bool)
    xi[0] = x0
    shocked = False
    for n in range(nodes.size - 1):
        h = nodes[n + 1] - nodes[n]
        k1, on_shock = speed(nodes[n], xi[n])
        shocked = shocked or on_shock
        v[n], flags[n] = k1, shocked
        predicted = xi[n] + h * k1
        f.ensure_inside(predicted, nodes[n + 1])
        k2, _ = speed(nodes[n + 1], predicted)
        xi[n + 1] = xi[n] + 0.5 * h * (k1 + k2)
        f.ensure_inside(xi[n + 1], nodes[n + 1])
    last, on_shock = speed(nodes[-1], xi[-1])
    v[-1], flags[-1] = last, shocked or on_shock

    return Characteristic(
        times=nodes, xi=xi, v=v,
        kind=SHOCK if flags.any() else GENUINE,
        direction=FORWARD,
        origin=Origin(float(t0), float(x0), 'none'),
        shock_flags=flags,
        dx=f.dx,
        step=float(np.max(np.diff(nodes))) if nodes.size > 1 else 0.0,
    )


def initial_speed(traj, t, x, side):
    """
    后向特征线在 (t, x) 的初始速度：激波处按 side 取左/右极限，连续点两侧相同
    """
    if side not in SIDES:
        raise CharacteristicError(f"side 必须是 {SIDES} 之一: {side}")
    f = trajectory_field(traj)
    is_jump, u_minus, u_plus = f.jump(t, x)
    if is_jump and side == 'minus':
        return u_minus
    if is_jump and side == 'plus':
        return u_plus
    return f.value(t, x)


def backward_characteristic(traj, t, x, side='none', t_stop=None, substeps=None):
    """
    极小(side='minus')/极大(side='plus')后向特征线

    从 v(t) 出发向后积分 ξ' = v，v' = [G*u(s,·)]_x(ξ)，Heun 方法

    Args:
        traj: 轨迹
        t: 顶点时间
        x: 顶点位置
        side: 'minus'、'plus' 或 'none'
        t_stop: 积分终止时间，默认第一个快照
        substeps: 每个快照间隔的子步数

    Returns:
        Characteristic: times 递增存储的真特征线
    """
    f = trajectory_field(traj)
    if not traj.grid.contains(x):
        raise CharacteristicError(f"顶点 {x} 不在网格内")
    if t_stop is None:
        t_stop = traj.times[0]
    if not traj.times[0] <= t_stop <= t <= traj.times[-1]:
        raise CharacteristicError(f"时间范围非法: t_stop={t_stop}, t={t}")
    f.ensure_inside(x, t)

    nodes = _time_nodes(traj.times, t_stop, t, _substeps(substeps))[::-1]
    xi = np.empty(nodes.size)
    v = np.empty(nodes.size)
    xi[0] = x
    v[0] = initial_speed(traj, t, x, side)
    for n in range(nodes.size - 1):
        h = nodes[n + 1] - nodes[n]
        a1 = f.source(nodes[n], xi[n])
        xi_pred = xi[n] + h * v[n]
        v_pred = v[n] + h * a1
        f.ensure_inside(xi_pred, nodes[n + 1])
        a2 = f.source(nodes[n + 1], xi_pred)
        xi[n + 1] = xi[n] + 0.5 * h * (v[n] + v_pred)
        v[n + 1] = v[n] + 0.5 * h * (a1 + a2)
        f.ensure_inside(xi[n + 1], nodes[n + 1])

    return Characteristic(
        times=nodes[::-1].copy(), xi=xi[::-1].copy(), v=v[::-1].copy(),
        kind=GENUINE,
        direction=BACKWARD,
        origin=Origin(float(t), float(x), side),
        shock_flags=np.zeros(nodes.size, dtype=bool),
        dx=f.dx,
        step=float(np.max(np.abs(np.diff(nodes)))) if nodes.size > 1 else 0.0,
    )


def genuine_residual(traj, curve, s_min=None):
    """
    max_s |v(s) - u(s, ξ(s))|，激波侧的曲线在 ξ 向外一个检测半宽处读取 u

    Args:
        traj: 轨迹
        curve: 后向特征线
        s_min: 只统计 s >= s_min 的样本
    """
    f = trajectory_field(traj)
    offset = {'minus': -f.half_width, 'plus': f.half_width}.get(curve.origin.side, 0.0)
    worst = 0.0
    for s, xi, v in zip(curve.times, curve.xi, curve.v):
        if s_min is not None and s < s_min:
            continue
        worst = max(worst, abs(v - f.value(s, xi + offset)))
    return worst


def round_trip_error(traj, curve, s, substeps=None):
    """从 (s, ξ(s)) 出发的前向特征线在顶点时间与顶点位置的距离"""
    start = curve.position_at(s)
    forward = forward_characteristic(traj, s, start, t_end=curve.origin.t, substeps=substeps)
    return abs(forward.xi[-1] - curve.origin.x)


# ---------------- 特征锥 ----------------

@dataclass(frozen=True)
class ConeBase:
    """后向特征锥在 s 时刻的底 [left, right]"""
    s: float
    left: float
    right: float
    apex: Tuple[float, float]

    @property
    def length(self):
        return self.right - self.left


def cone_base(traj, t, x, s, substeps=None):
    """
    顶点 (t, x) 的特征锥在 s 时刻的底

    Args:
        traj: 轨迹
        t: 顶点时间
        x: 顶点位置
        s: 0 < s < t

    Returns:
        ConeBase: 锥底
    """
    if not 0 <= s < t:
        raise CharacteristicError(f"锥底要求 0 <= s < t: s={s}, t={t}")
    lower = backward_characteristic(traj, t, x, 'minus', t_stop=s, substeps=substeps)
    upper = backward_characteristic(traj, t, x, 'plus', t_stop=s, substeps=substeps)
    return ConeBase(s, float(lower.xi[0]), float(upper.xi[0]), (t, x))


@dataclass(frozen=True)
class ConeBoundReport:
    base: ConeBase
    jump_mass: float
    bound: float
    tolerance: float
    satisfied: bool


def check_cone_bound(traj, t, x, s, substeps=None):
    """
    锥底长度 |I_(t,x)(s)| <= -c_t(s)·ν_t({x})，容差 cone_factor·dx·c_t(s)
    """
    f = trajectory_field(traj)
    _, u_minus, u_plus = f.jump(t, x)
    base = cone_base(traj, t, x, s, substeps)
    c = c_factor(t, s, traj.u0_l1)
    jump_mass = u_plus - u_minus
    bound = _mul(-c, jump_mass) if jump_mass != 0 else 0.0
    config = get_config()
    tolerance = config.get_cone_factor() * f.dx * c * config.get_tol_scale()
    return ConeBoundReport(base, jump_mass, bound, tolerance, abs(base.length) <= bound + tolerance)


# ---------------- 不交叉与引理检查 ----------------

@dataclass(frozen=True)
class NonCrossingReport:
    max_overlap: float
    tolerance: float
    satisfied: bool


def check_non_crossing(curves):
    """
    两两检查真特征线是否交叉

    每对曲线按公共时间段末端（最晚公共时刻）的位置排序，位置相同时按顶点位置与
    SIDE_ORDER 排序；overlap = max(0, ξ_lower - ξ_upper)

    Raises:
        CharacteristicError: 空输入或没有公共时间段
    """
    curves = list(curves)
    if not curves:
        raise CharacteristicError("曲线集合为空")
    config = get_config()
    tolerance = config.get_crossing_factor() * curves[0].dx * config.get_tol_scale()
    worst = 0.0
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            a, b = curves[i], curves[j]
            lo, hi = max(a.start, b.start), min(a.end, b.end)
            if lo > hi:
                raise CharacteristicError("曲线没有公共时间段")
            samples = np.union1d(a.times, b.times)
            samples = samples[(samples >= lo) & (samples <= hi)]
            xa = np.interp(samples, a.times, a.xi)
            xb = np.interp(samples, b.times, b.xi)
            key_a = (xa[-1], a.origin.x, SIDE_ORDER[a.origin.side])
            key_b = (xb[-1], b.origin.x, SIDE_ORDER[b.origin.side])
            if key_a > key_b:
                xa, xb = xb, xa
            worst = max(worst, float(np.max(xa - xb, initial=0.0)))
    return NonCrossingReport(worst, tolerance, worst <= tolerance)


def _ordered_pair(c1, c2):
    """校验两条后向特征线起自同一时间，并按顶点位置排序（同一顶点时 minus 在前）"""
    if c1.direction != BACKWARD or c2.direction != BACKWARD:
        raise CharacteristicError("需要两条后向特征线")
    if abs(c1.origin.t - c2.origin.t) > 1e-12 * max(1.0, c1.origin.t):
        raise CharacteristicError(f"两条曲线的顶点时间不同: {c1.origin.t}, {c2.origin.t}")

    if (c1.origin.x, SIDE_ORDER[c1.origin.side]) > (c2.origin.x, SIDE_ORDER[c2.origin.side]):
        return c2, c1
    return c1, c2


def _tolerance(curve, c):
    """10(dx + dt)·c"""
    return 10.0 * (curve.dx + curve.step) * c * get_config().get_tol_scale()


@dataclass(frozen=True)
class Lemma1Report:
    max_excess: float
    eet2_lhs: float
    eet2_rhs: float
    satisfied: bool


def check_lemma1(traj, c1, c2, t0):
    """
    检查两条后向真特征线的稳定性估计与下界估计

    (1) |v2-v1|(s) + |ξ2-ξ1|(s) <= c_t(s)·(|v2-v1|(t) + |ξ2-ξ1|(t))，s ∈ [t0, t]
    (2) ξ2(t0) - ξ1(t0) >= [x2 - x1 + (v1(t0) - v2(t0))(t - t0)]/Γ_[t0,t]

    Returns:
        Lemma1Report: max_excess 为 (1) 中 lhs - rhs - tol 的最大值（<= 0 表示成立）
    """
    c1, c2 = _ordered_pair(c1, c2)
    t = c1.origin.t
    u0 = traj.u0_l1
    if not 0 < t0 <= t:
        raise BoundsDomainError(f"要求 0 < t0 <= t: t0={t0}, t={t}")
    if c1.start > t0 + 1e-12 or c2.start > t0 + 1e-12:
        raise CharacteristicError(f"曲线没有延伸到 t0={t0}")

    samples = c1.times[(c1.times >= t0) & (c1.times <= t)]
    xi1, v1 = np.interp(samples, c1.times, c1.xi), np.interp(samples, c1.times, c1.v)
    xi2, v2 = np.interp(samples, c2.times, c2.xi), np.interp(samples, c2.times, c2.v)
    lhs = np.abs(v2 - v1) + np.abs(xi2 - xi1)
    apex = abs(c2.speed_at(t) - c1.speed_at(t)) + abs(c2.position_at(t) - c1.position_at(t))

    excess = -math.inf
    for s, value in zip(samples, lhs):
        c = c_factor(t, s, u0)
        excess = max(excess, value - _mul(c, apex) - _tolerance(c1, c))

    gap = c2.position_at(t0) - c1.position_at(t0)
    numerator = (c2.origin.x - c1.origin.x) + (c1.speed_at(t0) - c2.speed_at(t0)) * (t - t0)
    rhs = numerator / big_gamma_factor(t0, t, u0)
    eet2_ok = gap >= rhs - _tolerance(c1, 1.0)
    return Lemma1Report(float(excess), float(gap), float(rhs), bool(excess <= 0.0 and eet2_ok))


@dataclass(frozen=True)
class SeparationReport:
    lhs: float
    rhs: float
    kappa: float
    satisfied: bool


def check_separation(traj, c1, c2, sigma, T):
    """
    ξ2(σ/2) - ξ1(σ/2) >= κ_[σ,T]·(v1(t) - v2(t))
    """
    c1, c2 = _ordered_pair(c1, c2)
    t = c1.origin.t
    if not sigma < t <= T:
        raise BoundsDomainError(f"要求 σ < t <= T: σ={sigma}, t={t}, T={T}")
    s = sigma / 2.0
    if c1.start > s + 1e-12 or c2.start > s + 1e-12:
        raise CharacteristicError(f"曲线没有延伸到 σ/2={s}")
    kappa = kappa_factor(sigma, T, traj.u0_l1)
    lhs = c2.position_at(s) - c1.position_at(s)
    rhs = _mul(kappa, c1.speed_at(t) - c2.speed_at(t))
    return SeparationReport(float(lhs), float(rhs), kappa, bool(lhs >= rhs - _tolerance(c1, 1.0)))


def scan_cone_bounds(traj, t_min=None, fraction=0.5, substeps=None):
    """
    在每个 t >= t_min 的快照上，对全部容许激波检查锥底长度上界，s = fraction·t

    Returns:
        list: (t, x, ConeBoundReport) 列表
    """
    if not 0 < fraction < 1:
        raise CharacteristicError(f"fraction 必须在 (0, 1) 内: {fraction}")
    if t_min is None:
        t_min = get_config().get_t_min()
    f = trajectory_field(traj)
    rows = []
    for t, p in zip(traj.times, traj.profiles):
        if t <= 0 or t < t_min:
            continue
        for j in find_jumps(p, f.theta):
            if j.admissible:
                rows.append((t, j.position, check_cone_bound(traj, t, j.position, fraction * t, substeps)))
    return rows


# ---------------- 随机曲线对 ----------------

@dataclass(frozen=True)
class PairCheck:
    x1: float
    x2: float
    lemma1: Lemma1Report
    separation: SeparationReport
    round_trip: float
    round_trip_tolerance: float

    @property
    def round_trip_ok(self):
        return self.round_trip <= self.round_trip_tolerance

    @property
    def satisfied(self):
        return self.lemma1.satisfied and self.separation.satisfied and self.round_trip_ok


def sample_apex_pairs(traj, t, n_pairs, seed=0, max_attempts=None):
    """
    在 u(t,·) 的支集凸包内随机抽取 n_pairs 对连续点 x1 < x2

    凸包两侧各收缩 max|u|·t + 4dx，保证后向特征线留在计算区域内；
    支集为空时在网格中点 ±1 内抽样。间距小于 dx 或落在激波上的点会被拒绝

    Raises:
        CharacteristicError: 窗口为空或多次尝试后仍抽不够
    """
    f = trajectory_field(traj)
    grid = traj.grid
    p = traj.profile_at(t)
    peak = float(np.max(np.abs(p.values)))
    if peak > 0:
        support = np.flatnonzero(np.abs(p.values) >= 1e-6 * peak)
        lo, hi = grid.edges[support[0]], grid.edges[support[-1] + 1]
    else:
        mid = 0.5 * (grid.x_min + grid.x_max)
        lo, hi = mid - 1.0, mid + 1.0
    margin = peak * t + 4.0 * f.dx
    lo, hi = max(lo, grid.x_min + margin), min(hi, grid.x_max - margin)
    if hi - lo <= f.dx:
        raise CharacteristicError(f"抽样窗口为空: [{lo:.6g}, {hi:.6g}]")

    rng = np.random.default_rng(seed)
    limit = max_attempts if max_attempts is not None else 100 * max(n_pairs, 1)
    pairs = []
    for _ in range(limit):
        if len(pairs) == n_pairs:
            break
        x1, x2 = sorted(float(x) for x in rng.uniform(lo, hi, size=2))
        if x2 - x1 < f.dx or f.jump(t, x1)[0] or f.jump(t, x2)[0]:
            continue
        pairs.append((x1, x2))
    if len(pairs) < n_pairs:
        raise CharacteristicError(f"{limit} 次尝试只抽到 {len(pairs)} 对连续点")
    return pairs


def random_pair_checks(traj, t, n_pairs=50, seed=0, t0=None, sigma=None, substeps=None, max_workers=4):
    """
    随机曲线对上的稳定性/下界估计、σ/2 处的分离估计以及 t0 处的往返误差

    Args:
        traj: 轨迹
        t: 顶点时间
        n_pairs: 曲线对数
        seed: 随机种子，相同种子得到相同的点对
        t0: 稳定性估计的下端时间，默认 t/2
        sigma: 分离估计的 σ，默认 t/2，T 取最后一个快照

    Returns:
        list: PairCheck 列表，顺序与抽样顺序一致
    """
    t0 = 0.5 * t if t0 is None else t0
    sigma = 0.5 * t if sigma is None else sigma
    T = traj.times[-1]
    t_stop = min(t0, 0.5 * sigma)
    if t_stop < traj.times[0]:
        raise BoundsDomainError(f"t0={t0} 或 σ/2={0.5 * sigma} 早于第一个快照")
    c = c_factor(t, t0, traj.u0_l1)
    pairs = sample_apex_pairs(traj, t, n_pairs, seed)

    def check(pair):
        x1, x2 = pair
        c1 = backward_characteristic(traj, t, x1, 'none', t_stop=t_stop, substeps=substeps)
        c2 = backward_characteristic(traj, t, x2, 'none', t_stop=t_stop, substeps=substeps)
        trip = max(round_trip_error(traj, curve, t0, substeps) for curve in (c1, c2))
        return PairCheck(
            x1, x2,
            check_lemma1(traj, c1, c2, t0),
            check_separation(traj, c1, c2, sigma, T),
            trip, _tolerance(c1, c),
        )

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        rows = list(executor.map(check, pairs))
    failed = sum(1 for r in rows if not r.satisfied)
    if failed:
        logger.warning("随机曲线对: %d/%d 对未通过", failed, len(rows))
    return rows


# ---------------- 几何泛函 F_σ ----------------

@dataclass(frozen=True)
class FSigmaPoint:
    t: float
    F: float
    overlap: float
    n_jumps: int
    region: Tuple[float, float]
    region_tv: float
    cantor_mass: float

    @property
    def overlap_flag(self):
        return self.overlap > 0.0


@dataclass(frozen=True)
class FSigmaSeries:
    sigma: float
    z1: float
    z2: float
    T: float
    dx: float
    points: Tuple[FSigmaPoint, ...]
    bound: float
    kappa: float
    m_sigma: float

    def monotonicity_violations(self):
        """
        相邻时间上 F 的下降超过 2dx·(跳跃数) 的位置

        Returns:
            list: (t_prev, t_next, drop) 列表
        """
        config = get_config()
        violations = []
        for a, b in zip(self.points, self.points[1:]):
            allowance = config.get_crossing_factor() * self.dx * max(1, a.n_jumps, b.n_jumps)
            drop = a.F - b.F
            if drop > allowance * config.get_tol_scale():
                violations.append((a.t, b.t, drop))
        return violations

    def is_non_decreasing(self):
        return not self.monotonicity_violations()

    def within_bound(self):
        """sup F <= c_T(σ/2)·M_σ^T"""
        return all(p.F <= self.bound for p in self.points)

    def cantor_conversion_flags(self):
        """
        相邻时间上 F 的增长是否不小于 κ/2·α，α 为区域内的奇异剩余；只作定性诊断

        Returns:
            list: (t, growth, κ/2·α, 是否满足)
        """
        rows = []
        for a, b in zip(self.points, self.points[1:]):
            growth = b.F - a.F
            needed = 0.5 * self.kappa * a.cantor_mass
            rows.append((a.t, growth, needed, growth >= needed))
        return rows


def _merge_intervals(intervals):
    """合并区间，返回 (并集长度, 重叠总宽度)"""
    total = 0.0
    overlap = 0.0
    current_lo = current_hi = None
    for lo, hi in sorted(intervals):
        if current_hi is None:
            current_lo, current_hi = lo, hi
            continue
        if lo < current_hi:
            overlap += min(hi, current_hi) - lo
            current_hi = max(current_hi, hi)
        else:
            total += current_hi - current_lo
            current_lo, current_hi = lo, hi
    if current_hi is not None:
        total += current_hi - current_lo
    return total, overlap


def f_sigma(traj, sigma, z1, z2, ts, T=None, substeps=None, max_workers=4):
    """
    几何泛函 F_σ(t)：区域 A(t) 内所有激波的后向特征锥在 σ/2 时刻的底的总长度

    区域 A(t) 由 (T,z1)、(T,z2) 出发的后向特征线围成；每个激波的锥底并行计算，
    按位置排序后合并，数值上出现的重叠只计一次并记录重叠宽度

    Args:
        traj: 轨迹
        sigma: σ，小于 ts 中的最小值
        z1, z2: u(T,·) 的连续点，z1 < z2
        ts: 快照时间，位于 (σ, T]
        T: 区域的终端时间，默认最后一个快照

    Returns:
        FSigmaSeries: F_σ 序列及其上界
    """
    f = trajectory_field(traj)
    if T is None:
        T = traj.times[-1]
    ts = sorted(float(t) for t in ts)
    if not ts:
        raise CharacteristicError("ts 为空")
    if not 0 < sigma < ts[0]:
        raise CharacteristicError(f"要求 0 < σ < min(ts): σ={sigma}, min(ts)={ts[0]}")
    if ts[-1] > T + 1e-12:
        raise CharacteristicError(f"ts 超出 T={T}")
    if not z1 < z2:
        raise CharacteristicError(f"要求 z1 < z2: {z1}, {z2}")
    for z in (z1, z2):
        if f.jump(T, z)[0]:
            raise CharacteristicError(f"z={z} 是 u(T,·) 的间断点")

    s = sigma / 2.0
    left_edge = backward_characteristic(traj, T, z1, 'none', t_stop=s, substeps=substeps)
    right_edge = backward_characteristic(traj, T, z2, 'none', t_stop=s, substeps=substeps)
    u0 = traj.u0_l1
    kappa = kappa_factor(sigma, T, u0)
    m_sigma = m_sigma_factor(sigma, T, u0, z1, z2)
    bound = _mul(c_factor(T, s, u0), m_sigma)

    points = []
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        for t in ts:
            p = traj.profile_at(t)
            region = (left_edge.position_at(t), right_edge.position_at(t))
            jumps = [j for j in find_jumps(p, f.theta, window=region) if j.admissible]
            apexes = sorted(j.position for j in jumps)
            bases = list(executor.map(lambda x: cone_base(traj, t, x, s, substeps), apexes))
            total, overlap = _merge_intervals([(b.left, b.right) for b in bases])
            d = decompose(p, f.theta, default_ac_scale(t, u0), window=region)
            if overlap > 0:
                logger.warning("F_σ: t=%.6g 的锥底出现数值重叠 %.3g", t, overlap)
            points.append(FSigmaPoint(
                t=t, F=total, overlap=overlap, n_jumps=len(apexes), region=region,
                region_tv=d.total_variation, cantor_mass=d.singular_residual,
            ))

    return FSigmaSeries(sigma, z1, z2, T, f.dx, tuple(points), bound, kappa, m_sigma)


def region_tv_check(series):
    """
    每个时间上区域内总变差与 M_σ^T 的比较

    Returns:
        list: (t, region_tv, M_σ^T, 是否满足)
    """
    return [(p.t, p.region_tv, series.m_sigma, p.region_tv <= series.m_sigma) for p in series.points]
