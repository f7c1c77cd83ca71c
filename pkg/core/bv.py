"""
BV 分解模块
把剖面空间导数的离散增量分成绝对连续部分、跳跃部分和奇异剩余（Cantor 部分的代理），
给出 SBV 判定，并提供 Cantor-Vitali 阶梯函数作为检测器的测试样本
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import GridError
from core.grid import CellProfile, cantor_knots, cell_averages, piecewise_linear_primitive
from core.solver import oleinik_constant
from utils.config import get_config

# 判断 3^-level 是否为 dx 整数倍的相对容差
ALIGN_TOL = 1e-6


@dataclass(frozen=True)
class JumpRecord:
    """一个跳跃原子，mass = u_plus - u_minus"""
    position: float
    u_minus: float
    u_plus: float
    mass: float

    @property
    def admissible(self):
        return self.mass < 0


@dataclass(frozen=True)
class BVDecomposition:
    """总变差 = ac_mass + jump_mass + singular_residual"""
    total_variation: float
    ac_mass: float
    jump_records: Tuple[JumpRecord, ...]
    jump_mass: float
    singular_residual: float


def default_theta(dx):
    """间断阈值 θ(dx) = max(θ_abs, c_j·√dx)"""
    theta_abs, c_j = get_config().get_detector()
    return max(theta_abs, c_j * math.sqrt(dx))


def default_ac_scale(t, u0_l1):
    """绝对连续斜率上限 2K_t/t"""
    if not t > 0:
        raise GridError(f"default_ac_scale 要求 t > 0: {t}")
    return 2.0 * oleinik_constant(t, u0_l1) / t


def total_variation(p):
    """Σ|u_{i+1} - u_i|"""
    return float(np.sum(np.abs(np.diff(p.values))))


def _increments(p, window):
    """相邻单元增量及其界面坐标，可限制在开区间 window 内"""
    increments = np.diff(p.values)
    positions = p.grid.edges[1:-1]
    if window is not None:
        lo, hi = window
        keep = (positions > lo) & (positions < hi)
        return increments[keep], positions[keep]
    return increments, positions


def _group_jumps(increments, positions, values_left, values_right, theta, dx):
    """把相邻且同号的超阈值增量合并成一个跳跃"""
    records = []
    big = np.abs(increments) >= theta
    k = 0
    n = increments.size
    while k < n:
        if not big[k]:
            k += 1
            continue
        sign = np.sign(increments[k])
        end = k
        while (end + 1 < n and big[end + 1] and np.sign(increments[end + 1]) == sign
               and positions[end + 1] - positions[end] < 1.5 * dx):
            end += 1
        weights = np.abs(increments[k:end + 1])
        position = float(np.sum(weights * positions[k:end + 1]) / np.sum(weights))
        records.append(JumpRecord(
            position=position,
            u_minus=float(values_left[k]),
            u_plus=float(values_right[end]),
            mass=float(np.sum(increments[k:end + 1])),
        ))
        k = end + 1
    return records


def find_jumps(p, theta=None, window=None):
    """
    超过阈值的界面增量，连续同号的合并为一个 JumpRecord

    Args:
        p: 剖面
        theta: 阈值，默认 default_theta(dx)
        window: 可选开区间 (a, b)

    Returns:
        list: JumpRecord 列表，按位置排序
    """
    if theta is None:
        theta = default_theta(p.grid.dx)
    increments = np.diff(p.values)
    positions = p.grid.edges[1:-1]
    left = p.values[:-1]
    right = p.values[1:]
    if window is not None:
        lo, hi = window
        keep = (positions > lo) & (positions < hi)
        increments, positions, left, right = increments[keep], positions[keep], left[keep], right[keep]
    return _group_jumps(increments, positions, left, right, theta, p.grid.dx)


def decompose(p, theta=None, ac_scale=None, window=None):
    """
    三分类：|Δu| >= theta 为跳跃，|Δu|/dx <= ac_scale 为绝对连续，其余为奇异剩余

    Args:
        p: 剖面
        theta: 跳跃阈值
        ac_scale: 绝对连续斜率上限
        window: 可选开区间 (a, b)，只统计其中的界面

    Returns:
        BVDecomposition: 分解结果
    """
    dx = p.grid.dx
    if theta is None:
        theta = default_theta(dx)
    if ac_scale is None:
        raise GridError("decompose 需要 ac_scale（可用 default_ac_scale(t, u0_l1)）")
    if not (theta > 0 and ac_scale > 0):
        raise GridError(f"theta 与 ac_scale 必须为正: {theta}, {ac_scale}")

    increments, _ = _increments(p, window)
    size = np.abs(increments)
    jump = size >= theta
    ac = ~jump & (size / dx <= ac_scale)
    rest = ~jump & ~ac

    return BVDecomposition(
        total_variation=float(np.sum(size)),
        ac_mass=float(np.sum(size[ac])),
        jump_records=tuple(find_jumps(p, theta, window)),
        jump_mass=float(np.sum(size[jump])),
        singular_residual=float(np.sum(size[rest])),
    )


def cantor_staircase(grid, level, a=None):
    """
    第 level 次 Cantor-Vitali 迭代函数，映射到 [a, a+1]，左侧为 0、右侧为 1

    Args:
        grid: 网格，dx 必须整除 3^-level
        level: 迭代层数
        a: 起点，必须落在单元界面上；默认取最靠近 (中心 - 0.5) 的界面

    Returns:
        CellProfile: 阶梯剖面

    Raises:
        GridError: 分辨率不足或未对齐
    """
    if level < 1:
        raise GridError(f"Cantor 迭代层数必须不小于 1: {level}")
    dx = grid.dx
    ratio = 3.0 ** (-level) / dx
    if ratio < 1.0 - ALIGN_TOL or abs(ratio - round(ratio)) > ALIGN_TOL * ratio:
        raise GridError(f"网格 dx={dx} 不能分辨 3^-{level} 的三分区间")
    if a is None:
        k = round((0.5 * (grid.x_min + grid.x_max) - 0.5 - grid.x_min) / dx)
        a = grid.x_min + k * dx
    elif grid.interface_index(a) is None:
        raise GridError(f"起点 {a} 不在单元界面上")
    if a < grid.x_min or a + 1.0 > grid.x_max + ALIGN_TOL * dx:
        raise GridError(f"[{a}, {a + 1}] 不在网格内")

    xs, ys = cantor_knots(level)
    knots_x = np.concatenate((a + xs, [grid.x_max + dx]))
    knots_y = np.concatenate((ys, [1.0]))
    return CellProfile(grid, cell_averages(grid, lambda x: piecewise_linear_primitive(knots_x, knots_y, x)))


def sbv_verdict(d, tol):
    """奇异剩余不超过 tol·max(1, TV) 时判为 SBV"""
    if tol < 0:
        raise GridError(f"tol 必须非负: {tol}")
    return d.singular_residual <= tol * max(1.0, d.total_variation)


@dataclass(frozen=True)
class SBVRow:
    time: float
    decomposition: BVDecomposition
    verdict: bool


def sbv_scan(traj, t_min=None, tol=0.1, theta=None, ac_scale=None, max_workers=4):
    """
    对 t >= t_min 的每个快照做分解与 SBV 判定，各快照并行计算，结果按时间排序

    Args:
        traj: 轨迹
        t_min: 最早时间，默认取配置
        tol: sbv_verdict 的容差
        theta: 跳跃阈值，默认 default_theta(dx)
        ac_scale: 斜率上限，默认每个时间取 default_ac_scale(t, ‖u₀‖₁)
        max_workers: 线程数

    Returns:
        list: SBVRow 列表
    """
    if t_min is None:
        t_min = get_config().get_t_min()
    jobs = [(t, p) for t, p in zip(traj.times, traj.profiles) if t >= t_min and t > 0]

    def analyse(job):
        t, p = job
        scale = ac_scale if ac_scale is not None else default_ac_scale(t, traj.u0_l1)
        d = decompose(p, theta, scale)
        return SBVRow(t, d, sbv_verdict(d, tol))

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(analyse, jobs))
