"""
网格与剖面模块
一维均匀网格、分片常数剖面（单元平均）、范数、单侧极限以及轨迹存储
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.errors import GridError, SnapshotMissingError

# 判断点是否落在单元界面上的相对容差（以 dx 为单位）
INTERFACE_TOL = 1e-9
# 轨迹时间比较的绝对容差
TIME_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """均匀网格，单元 i 覆盖 [x_min + i·dx, x_min + (i+1)·dx)"""
    x_min: float
    x_max: float
    n_cells: int

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self):
        """单元界面坐标，长度 n_cells + 1"""
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def centers(self):
        """单元中心坐标"""
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def contains(self, x):
        return self.x_min <= x <= self.x_max

    def cell_index(self, x):
        """包含 x 的单元编号（右端点归入最后一个单元）"""
        if not self.contains(x):
            raise GridError(f"点 {x} 不在网格 [{self.x_min}, {self.x_max}] 内")
        i = int(math.floor((x - self.x_min) / self.dx))
        return min(max(i, 0), self.n_cells - 1)

    def interface_index(self, x):
        """
        若 x 落在单元界面上返回界面编号 k（位于单元 k-1 与 k 之间），否则返回 None
        """
        r = (x - self.x_min) / self.dx
        k = int(round(r))
        if abs(r - k) <= INTERFACE_TOL * max(1.0, abs(r)):
            return k
        return None


def make_grid(x_min, x_max, n_cells):
    """
    创建均匀网格

    Args:
        x_min: 左端点
        x_max: 右端点
        n_cells: 单元数，至少为 2

    Returns:
        Grid: 网格对象

    Raises:
        GridError: 端点非有限、区间为空或单元数不足
    """
    try:
        x_min = float(x_min)
        x_max = float(x_max)
    except (TypeError, ValueError) as e:
        raise GridError(f"网格端点不是数字: {x_min}, {x_max}") from e
    if not (math.isfinite(x_min) and math.isfinite(x_max)):
        raise GridError(f"网格端点必须有限: {x_min}, {x_max}")
    if not x_min < x_max:
        raise GridError(f"网格区间为空: [{x_min}, {x_max}]")
    if isinstance(n_cells, bool) or int(n_cells) != n_cells or n_cells < 2:
        raise GridError(f"单元数必须是不小于 2 的整数: {n_cells}")
    return Grid(x_min, x_max, int(n_cells))


@dataclass(frozen=True, eq=False)
class CellProfile:
    """分片常数剖面，values[i] 为单元 i 上的平均值；网格外视为 0"""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_cells,):
            raise GridError(f"剖面长度 {values.shape} 与单元数 {self.grid.n_cells} 不一致")
        if not np.all(np.isfinite(values)):
            raise GridError("剖面含非有限值")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def with_values(self, values):
        """在同一网格上构造新剖面"""
        return CellProfile(self.grid, values)

    def padded(self):
        """两端各补一个零值虚单元"""
        return np.concatenate(([0.0], self.values, [0.0]))


def zero_profile(grid):
    """零剖面"""
    return CellProfile(grid, np.zeros(grid.n_cells))


def l1_norm(p):
    """L¹ 范数 Σ|u_i|·dx"""
    return float(np.sum(np.abs(p.values)) * p.grid.dx)


def linf_norm(p):
    """L∞ 范数 max|u_i|"""
    if p.values.size == 0:
        return 0.0
    return float(np.max(np.abs(p.values)))


def mass(p):
    """带符号积分 Σu_i·dx"""
    return float(np.sum(p.values) * p.grid.dx)


def one_sided_limits(p, x):
    """
    x 处的左右极限：在界面上取相邻两个单元的值，在单元内部两者都等于单元值

    Args:
        p: 剖面
        x: 位置，必须在 [x_min, x_max] 内

    Returns:
        tuple: (u_minus, u_plus)
    """
    grid = p.grid
    if not grid.contains(x):
        raise GridError(f"点 {x} 不在网格 [{grid.x_min}, {grid.x_max}] 内")
    k = grid.interface_index(x)
    if k is not None:
        u_minus = float(p.values[k - 1]) if k > 0 else 0.0
        u_plus = float(p.values[k]) if k < grid.n_cells else 0.0
        return u_minus, u_plus
    value = float(p.values[grid.cell_index(x)])
    return value, value


# ---------------- 初值预设 ----------------

PRESET_KINDS = ('zero', 'box', 'bump', 'step', 'double_step', 'sawtooth', 'cantor')


@dataclass(frozen=True)
class Preset:
    """
    初值描述

    kind 取值及参数:
        zero
        box: a, b, h
        bump: center, width, height  (h·cos²(π(x-c)/w)，|x-c| < w/2)
        step: a, m, b, u_left, u_right  ([a,m) 上取 u_left，[m,b) 上取 u_right)
        double_step: a, m1, m2, b, u1, u2, u3  (三段常数，两个内部间断)
        sawtooth: a, b, teeth, h
        cantor: a, level, h  ([a,a+1] 上的 Cantor-Vitali 迭代函数乘 h)
    """
    kind: str
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise GridError(f"未知的初值类型: {self.kind}")
        for key, value in self.params.items():
            if not math.isfinite(float(value)):
                raise GridError(f"初值参数 {key} 不是有限数: {value}")

    @classmethod
    def zero(cls):
        return cls('zero')

    @classmethod
    def box(cls, a=-1.0, b=1.0, h=1.0):
        return cls('box', {'a': a, 'b': b, 'h': h})

    @classmethod
    def bump(cls, center=0.0, width=2.0, height=1.0):
        return cls('bump', {'center': center, 'width': width, 'height': height})

    @classmethod
    def step(cls, a=-2.0, m=0.0, b=2.0, u_left=1.0, u_right=0.0):
        return cls('step', {'a': a, 'm': m, 'b': b, 'u_left': u_left, 'u_right': u_right})

    @classmethod
    def double_step(cls, a=-3.0, m1=-1.5, m2=0.0, b=2.0, u1=2.0, u2=1.0, u3=0.0):
        return cls('double_step', {'a': a, 'm1': m1, 'm2': m2, 'b': b, 'u1': u1, 'u2': u2, 'u3': u3})

    @classmethod
    def sawtooth(cls, a=-2.0, b=2.0, teeth=4, h=0.5):
        return cls('sawtooth', {'a': a, 'b': b, 'teeth': teeth, 'h': h})

    @classmethod
    def cantor(cls, a=-0.5, level=4, h=1.0):
        return cls('cantor', {'a': a, 'level': level, 'h': h})

    def param(self, key):
        try:
            return float(self.params[key])
        except KeyError as e:
            raise GridError(f"初值 {self.kind} 缺少参数 {key}") from e

    def support(self):
        """支集 [lo, hi]，零初值返回 None"""
        if self.kind == 'zero':
            return None
        if self.kind == 'bump':
            c, w = self.param('center'), self.param('width')
            return c - w / 2.0, c + w / 2.0
        if self.kind == 'cantor':
            a = self.param('a')
            return a, a + 1.0
        return self.param('a'), self.param('b')

    def primitive(self, x):
        """初值的原函数 ∫_{-∞}^x u0，用于精确单元平均"""
        x = np.asarray(x, dtype=float)
        if self.kind == 'zero':
            return np.zeros_like(x)
        if self.kind == 'bump':
            c, w, h = self.param('center'), self.param('width'), self.param('height')
            if w <= 0:
                raise GridError(f"bump 宽度必须为正: {w}")
            y = np.clip(x - c, -w / 2.0, w / 2.0)
            return h * ((y + w / 2.0) / 2.0 + w / (4.0 * math.pi) * np.sin(2.0 * math.pi * y / w))
        knots_x, knots_y = self._knots()
        return piecewise_linear_primitive(knots_x, knots_y, x)

    def _knots(self):
        kind = self.kind
        if kind == 'box':
            a, b, h = self.param('a'), self.param('b'), self.param('h')
            _require_order(a, b)
            return np.array([a, b]), np.array([h, h])
        if kind == 'step':
            a, m, b = self.param('a'), self.param('m'), self.param('b')
            ul, ur = self.param('u_left'), self.param('u_right')
            _require_order(a, m)
            _require_order(m, b)
            return np.array([a, m, m, b]), np.array([ul, ul, ur, ur])
        if kind == 'double_step':
            a, m1, m2, b = (self.param(key) for key in ('a', 'm1', 'm2', 'b'))
            u1, u2, u3 = self.param('u1'), self.param('u2'), self.param('u3')
            for lo, hi in ((a, m1), (m1, m2), (m2, b)):
                _require_order(lo, hi)
            return np.array([a, m1, m1, m2, m2, b]), np.array([u1, u1, u2, u2, u3, u3])
        if kind == 'sawtooth':
            a, b, h = self.param('a'), self.param('b'), self.param('h')
            teeth = int(self.param('teeth'))
            _require_order(a, b)
            if teeth < 1:
                raise GridError(f"锯齿数必须为正: {teeth}")
            starts = np.linspace(a, b, teeth + 1)
            xs, ys = [], []
            for left, right in zip(starts[:-1], starts[1:]):
                xs += [left, right]
                ys += [-h, h]
            return np.array(xs), np.array(ys)
        if kind == 'cantor':
            a, h = self.param('a'), self.param('h')
            xs, ys = cantor_knots(int(self.param('level')))
            return a + xs, h * ys
        raise GridError(f"初值 {kind} 没有折线表示")


def _require_order(lo, hi):
    if not lo < hi:
        raise GridError(f"区间端点顺序错误: {lo} >= {hi}")


def piecewise_linear_primitive(knots_x, knots_y, x):
    """
    分段线性函数（节点外为 0，重复节点表示跳跃）的原函数

    Args:
        knots_x: 非降的节点坐标
        knots_y: 节点处的函数值
        x: 求值点

    Returns:
        np.ndarray: ∫_{-∞}^x f
    """
    knots_x = np.asarray(knots_x, dtype=float)
    knots_y = np.asarray(knots_y, dtype=float)
    widths = np.diff(knots_x)
    if np.any(widths < 0):
        raise GridError("折线节点必须非降")
    safe = np.where(widths > 0, widths, 1.0)
    slopes = np.where(widths > 0, np.diff(knots_y) / safe, 0.0)
    seg_integrals = 0.5 * (knots_y[:-1] + knots_y[1:]) * widths
    cumulative = np.concatenate(([0.0], np.cumsum(seg_integrals)))

    x = np.asarray(x, dtype=float)
    seg = np.searchsorted(knots_x, x, side='right') - 1
    seg = np.clip(seg, 0, len(widths) - 1)
    s = np.clip(x - knots_x[seg], 0.0, widths[seg])
    inside = cumulative[seg] + knots_y[seg] * s + 0.5 * slopes[seg] * s * s
    result = np.where(x < knots_x[0], 0.0, inside)
    return np.where(x >= knots_x[-1], cumulative[-1], result)


def cantor_knots(level):
    """
    第 level 次 Cantor-Vitali 迭代函数在 [0,1] 上的折线节点

    每个保留区间（长 3^-level）上线性上升 2^-level，去掉的区间上取常数

    Returns:
        tuple: (xs, ys) 节点坐标与函数值
    """
    if level < 1:
        raise GridError(f"Cantor 迭代层数必须不小于 1: {level}")
    starts = np.array([0.0])
    for _ in range(level):
        starts = np.concatenate((starts / 3.0, 2.0 / 3.0 + starts / 3.0))
    length = 3.0 ** (-level)
    steps = np.arange(starts.size) / starts.size
    xs = np.empty(2 * starts.size)
    ys = np.empty(2 * starts.size)
    xs[0::2] = starts
    xs[1::2] = starts + length
    ys[0::2] = steps
    ys[1::2] = steps + 1.0 / starts.size
    xs[-1] = 1.0
    return xs, ys


def cell_averages(grid, primitive):
    """由原函数计算精确单元平均"""
    return np.diff(primitive(grid.edges)) / grid.dx


def sample_preset(grid, preset, pad=0.0):
    """
    在网格上采样初值（单元平均）

    Args:
        grid: 网格
        preset: 初值描述
        pad: 支集到两侧边界的最小距离

    Returns:
        CellProfile: 初值剖面

    Raises:
        GridError: 支集超出 [x_min + pad, x_max - pad]
    """
    support = preset.support()
    if support is not None:
        lo, hi = support
        slack = INTERFACE_TOL * grid.dx
        if lo < grid.x_min + pad - slack or hi > grid.x_max - pad + slack:
            raise GridError(
                f"初值支集 [{lo}, {hi}] 超出允许区域 "
                f"[{grid.x_min + pad}, {grid.x_max - pad}]（pad={pad}）"
            )
    return CellProfile(grid, cell_averages(grid, preset.primitive))


# ---------------- 轨迹 ----------------

@dataclass(frozen=True)
class SchemeInfo:
    """生成轨迹的格式参数"""
    splitting: str = 'strang'
    source_integrator: str = 'rk2'
    source_enabled: bool = True
    cfl: float = 0.45
    max_dt: float = 0.05


class Trajectory:
    """按时间排列的快照序列，所有快照共用一个网格"""

    def __init__(self, grid, scheme=None):
        self.grid = grid
        self.scheme = scheme if scheme is not None else SchemeInfo()
        self.times: List[float] = []
        self.profiles: List[CellProfile] = []
        self._u0_l1: Optional[float] = None
        self.n_steps = 0

    def __len__(self):
        return len(self.times)

    @property
    def u0_l1(self):
        """初始快照的 L¹ 范数"""
        if self._u0_l1 is None:
            raise GridError("轨迹为空")
        return self._u0_l1

    def append(self, t, profile):
        """
        追加快照

        Raises:
            GridError: 时间不严格递增、为负或网格不一致
        """
        t = float(t)
        if not math.isfinite(t) or t < 0:
            raise GridError(f"快照时间必须是非负有限数: {t}")
        if self.times and t <= self.times[-1]:
            raise GridError(f"快照时间 {t} 不大于上一个时间 {self.times[-1]}")
        if profile.grid != self.grid:
            raise GridError("快照网格与轨迹网格不一致")
        if not self.times:
            self._u0_l1 = l1_norm(profile)
        self.times.append(t)
        self.profiles.append(profile)

    def index_of(self, t, atol=1e-9):
        """快照时间 t 对应的下标"""
        if not self.times:
            raise SnapshotMissingError(f"时间 {t} 没有快照（轨迹为空）")
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > atol * max(1.0, abs(t)):
            raise SnapshotMissingError(f"时间 {t} 没有快照")
        return i

    def profile_at(self, t):
        """时间 t 的快照"""
        return self.profiles[self.index_of(t)]

    def bracket(self, s):
        """
        返回包含 s 的快照区间 (i, w)，满足 s = (1-w)·times[i] + w·times[i+1]

        超出范围时抛出 GridError
        """
        times = self.times
        if len(times) < 2:
            if times and abs(s - times[0]) <= TIME_TOL:
                return 0, 0.0
            raise GridError("轨迹快照不足，无法在时间上插值")
        if s < times[0] - TIME_TOL or s > times[-1] + TIME_TOL:
            raise GridError(f"时间 {s} 超出轨迹范围 [{times[0]}, {times[-1]}]")
        i = int(np.searchsorted(times, s, side='right')) - 1
        i = min(max(i, 0), len(times) - 2)
        w = (s - times[i]) / (times[i + 1] - times[i])
        return i, min(max(w, 0.0), 1.0)

    def values_matrix(self):
        """所有快照按行堆叠的数组"""
        return np.vstack([p.values for p in self.profiles])
