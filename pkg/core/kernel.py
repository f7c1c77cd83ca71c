"""
非局部源项模块
对分片常数剖面精确计算 Poisson 核卷积 G*u 及其导数 [G*u]_x，其中 G(x) = -½e^{-|x|}

左右两个方向的指数衰减累加和用递归滤波器（scipy.signal.lfilter）实现，总代价 O(N)
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from core.errors import GridError
from core.grid import l1_norm, linf_norm
from utils.config import get_config

MIN_PAD = 5.0


def truncation_pad(eps=None):
    """
    截断所需的边界留白 pad = max(5, -ln eps)，尾部误差不超过 e^{-pad}·‖u‖₁

    Args:
        eps: 相对尾部误差，默认取配置中的 truncation_eps
    """
    if eps is None:
        eps = get_config().get_truncation_eps()
    if not 0 < eps < 1:
        raise GridError(f"截断误差必须在 (0,1) 内: {eps}")
    return max(MIN_PAD, -math.log(eps))


@dataclass(frozen=True, eq=False)
class KernelField:
    """单元中心处的 [G*u] 与 [G*u]_x"""
    grid: object
    phi: np.ndarray
    phi_x: np.ndarray

    def interpolate(self, xs):
        """单元中心之间线性插值 [G*u]_x"""
        return np.interp(xs, self.grid.centers, self.phi_x)


def _directional_sums(values, decay):
    """
    L_i = Σ_{j<i} u_j·decay^{i-1-j}，R_i = Σ_{j>i} u_j·decay^{j-i-1}
    """
    forward = lfilter([1.0], [1.0, -decay], values)
    backward = lfilter([1.0], [1.0, -decay], values[::-1])[::-1]
    left = np.concatenate(([0.0], forward[:-1]))
    right = np.concatenate((backward[1:], [0.0]))
    return left, right


def convolve(p):
    """
    精确计算单元中心处的 G*u 与 [G*u]_x

    每个单元对指数核的积分有闭式，远处单元的贡献通过每步乘 e^{-dx} 的
    左右递推累加，两遍扫描

    Args:
        p: 剖面

    Returns:
        KernelField: 核场
    """
    dx = p.grid.dx
    u = p.values
    decay = math.exp(-dx)
    # 相邻单元整体贡献的系数 (1 - e^{-dx})·e^{-dx/2}
    far = -math.expm1(-dx) * math.exp(-dx / 2.0)
    # 自身单元 ∫_{-dx/2}^{dx/2} e^{-|z|} dz
    own = -2.0 * math.expm1(-dx / 2.0)

    left, right = _directional_sums(u, decay)
    phi = -0.5 * (far * (left + right) + own * u)
    phi_x = 0.5 * far * (left - right)
    return KernelField(p.grid, phi, phi_x)


def kernel_at(p, xs, chunk=256):
    """
    在任意点精确计算 [G*u] 与 [G*u]_x（每点 O(N)）

    Args:
        p: 剖面
        xs: 求值点
        chunk: 每批处理的点数

    Returns:
        tuple: (phi, phi_x) 两个数组
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    edges = p.grid.edges
    lo, hi = edges[:-1], edges[1:]
    u = p.values
    phi = np.empty_like(xs)
    phi_x = np.empty_like(xs)
    for start in range(0, xs.size, chunk):
        x = xs[start:start + chunk, None]
        # 单元位于 x 左侧部分的积分 ∫ e^{-(x-y)} dy
        left_part = np.exp(-np.maximum(x - hi, 0.0)) - np.exp(-np.maximum(x - lo, 0.0))
        # 单元位于 x 右侧部分的积分 ∫ e^{-(y-x)} dy
        right_part = np.exp(-np.maximum(lo - x, 0.0)) - np.exp(-np.maximum(hi - x, 0.0))
        phi[start:start + chunk] = -0.5 * (left_part + right_part) @ u
        phi_x[start:start + chunk] = 0.5 * (left_part - right_part) @ u
    return phi, phi_x


def _require_same_grid(p, k):
    if p.grid != k.grid:
        raise GridError("剖面与核场的网格不一致")


def near_jump_mask(p, width_cells=3, threshold=None):
    """
    标记距离大间断不超过 width_cells 个单元的单元

    Args:
        p: 剖面
        width_cells: 排除带宽（单元数）
        threshold: 视为间断的增量阈值，默认 0.5·√dx

    Returns:
        np.ndarray: 布尔数组，True 表示靠近间断
    """
    if threshold is None:
        threshold = 0.5 * math.sqrt(p.grid.dx)
    jumps = np.abs(np.diff(p.padded())) >= threshold
    mask = np.zeros(p.grid.n_cells, dtype=bool)
    # 界面 k 位于单元 k-1 与 k 之间
    for k in np.flatnonzero(jumps):
        lo = max(k - width_cells, 0)
        hi = min(k + width_cells, p.grid.n_cells)
        mask[lo:hi] = True
    return mask


def poisson_residual(p, k, exclude=None):
    """
    Poisson 方程残差 max |D²φ_i - φ_i - u_i|（内部单元）

    Args:
        p: 剖面
        k: 对应的核场
        exclude: 可选布尔数组，True 的单元不参与

    Returns:
        float: 残差
    """
    _require_same_grid(p, k)
    dx = p.grid.dx
    phi = k.phi
    d2 = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (dx * dx)
    residual = np.abs(d2 - phi[1:-1] - p.values[1:-1])
    if exclude is not None:
        residual = residual[~np.asarray(exclude, dtype=bool)[1:-1]]
    if residual.size == 0:
        return 0.0
    return float(np.max(residual))


@dataclass(frozen=True)
class LipschitzReport:
    """[G*u]_x 的 Lipschitz 常数与理论界 ½‖u‖₁ + ‖u‖∞ 的比较"""
    max_ratio: float
    bound: float
    satisfied: bool


def lipschitz_check(p, k, tolerance=1e-12):
    """
    检查 [G*u]_x 的差商不超过 ½‖u‖₁ + ‖u‖∞

    任意两点差商是相邻中心差商的凸组合，因此取相邻单元对的最大值即为所有单元对上的上确界

    Args:
        p: 剖面
        k: 对应的核场
        tolerance: 相对容差

    Returns:
        LipschitzReport: 检查结果
    """
    _require_same_grid(p, k)
    bound = 0.5 * l1_norm(p) + linf_norm(p)
    ratios = np.abs(np.diff(k.phi_x)) / p.grid.dx
    max_ratio = float(np.max(ratios)) if ratios.size else 0.0
    satisfied = max_ratio <= bound + tolerance * (1.0 + bound)
    return LipschitzReport(max_ratio, bound, bool(satisfied))
