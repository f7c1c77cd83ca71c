"""
Burgers 扫描模块
通量 f(u) = u²/2 的精确 Riemann（Godunov）通量、激波速度、CFL 时间步和一阶守恒更新
"""
import math
from dataclasses import dataclass

import numpy as np

from core.errors import InadmissibleJumpError, StabilityError
from core.grid import linf_norm

# 零剖面时的最小波速，防止除零
EPS_SPEED = 1e-12
# Godunov 更新本身在 CFL 数不超过 1 时稳定
MAX_COURANT = 1.0


@dataclass(frozen=True)
class SweepOptions:
    """时间步参数，0 < cfl < 1，max_dt > 0"""
    cfl: float = 0.45
    max_dt: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise StabilityError(f"cfl 必须在 (0,1) 内: {self.cfl}")
        if not (self.max_dt > 0.0 and math.isfinite(self.max_dt)):
            raise StabilityError(f"max_dt 必须是正有限数: {self.max_dt}")


def flux(u):
    """f(u) = u²/2"""
    return 0.5 * np.square(u)


def godunov_flux(u_left, u_right):
    """
    f(u) = u²/2 的精确 Riemann 通量

    稀疏波 (uL <= uR)：uL > 0 取 f(uL)，uR < 0 取 f(uR)，跨过 0 取 0；
    激波 (uL > uR)：速度 (uL+uR)/2 >= 0 取 f(uL)，否则取 f(uR)

    Args:
        u_left: 左状态（标量或数组）
        u_right: 右状态

    Returns:
        float 或 np.ndarray: 界面通量
    """
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    rarefaction = np.where(ul > 0.0, flux(ul), np.where(ur < 0.0, flux(ur), 0.0))
    shock = np.where(ul + ur >= 0.0, flux(ul), flux(ur))
    result = np.where(ul <= ur, rarefaction, shock)
    if result.ndim == 0:
        return float(result)
    return result


def kruzkov_flux(u_left, u_right, k):
    """
    熵 |u-k| 的数值熵通量 Q = F(uL∨k, uR∨k) - F(uL∧k, uR∧k)

    Args:
        u_left: 左状态
        u_right: 右状态
        k: Kruzkov 常数（可广播）
    """
    ul = np.asarray(u_left, dtype=float)
    ur = np.asarray(u_right, dtype=float)
    upper = godunov_flux(np.maximum(ul, k), np.maximum(ur, k))
    lower = godunov_flux(np.minimum(ul, k), np.minimum(ur, k))
    return np.asarray(upper) - np.asarray(lower)


def shock_speed(u_minus, u_plus):
    """
    Rankine-Hugoniot 速度 (u(x-) + u(x+))/2

    Raises:
        InadmissibleJumpError: u_minus <= u_plus（不满足熵条件）
    """
    if not u_minus > u_plus:
        raise InadmissibleJumpError(f"间断 ({u_minus}, {u_plus}) 不满足 u(x-) > u(x+)")
    return 0.5 * (u_minus + u_plus)


def stable_dt(p, opts):
    """
    CFL 时间步 min(max_dt, cfl·dx/max(‖u‖∞, ε))

    Args:
        p: 剖面
        opts: SweepOptions
    """
    speed = max(linf_norm(p), EPS_SPEED)
    return min(opts.max_dt, opts.cfl * p.grid.dx / speed)


def interface_fluxes(values):
    """带零虚单元的全部界面通量 F_{-1/2} ... F_{N-1/2}"""
    padded = np.concatenate(([0.0], values, [0.0]))
    return godunov_flux(padded[:-1], padded[1:])


def burgers_sweep(p, dt):
    """
    一阶守恒 Godunov 更新 u_i' = u_i - (dt/dx)(F_{i+1/2} - F_{i-1/2})

    Args:
        p: 剖面
        dt: 时间步

    Returns:
        CellProfile: 更新后的剖面

    Raises:
        StabilityError: dt 为负或 Courant 数超过 1
    """
    if dt < 0 or not math.isfinite(dt):
        raise StabilityError(f"时间步非法: {dt}")
    dx = p.grid.dx
    courant = dt * linf_norm(p) / dx
    if courant > MAX_COURANT * (1.0 + 1e-12):
        raise StabilityError(f"时间步 {dt} 的 Courant 数 {courant:.4g} 超过 {MAX_COURANT}")
    fluxes = interface_fluxes(p.values)
    return p.with_values(p.values - (dt / dx) * np.diff(fluxes))
