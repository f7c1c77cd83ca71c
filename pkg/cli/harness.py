"""
命令行实验模块
读取 key=value 实验配置，运行求解与各项诊断，把结果写成快照文件和 CSV 报表

退出码: 0 全部通过，1 有检查失败，2 配置/用法/IO 错误，3 数值中止
"""
import argparse
import os
from dataclasses import asdict, dataclass, field, replace
from typing import FrozenSet, Optional, Tuple

import numpy as np
import scipy

from core.bv import sbv_scan
from core.characteristics import (
    backward_characteristic, bounds_constants, check_non_crossing, f_sigma, forward_characteristic,
    genuine_residual, random_pair_checks, region_tv_check, scan_cone_bounds,
)
from core.errors import BPLabError, ConfigError, NumericalAbortError
from core.grid import SchemeInfo, l1_norm, linf_norm
from core.solver import entropy_check, mass_drift, run_checks, solve, solve_config_from_entries, SolveConfig
from utils.config import (
    get_config, parse_bool, parse_float, parse_float_list, parse_int, parse_key_value_file,
)
from utils.file_handler import (
    manifest_path, read_manifest, read_trajectory, write_bound_checks, write_bounds_report, write_bv,
    write_characteristics, write_csv, write_fsigma, write_jumps, write_manifest, write_trajectory,
)
from utils.logger import get_logger, safe_log_error, setup_logger

logger = get_logger()

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ABORT = 3

DIAGNOSTICS = ('oleinik', 'l1', 'linf', 'entropy', 'bv', 'fsigma', 'characteristics', 'cone', 'pairs')
BOUND_CHECKS = ('l1', 'oleinik', 'linf', 'linf_sharp')
PAIR_CHECKS = ('lemma1', 'separation', 'roundtrip')
VERIFY_CHECKS = BOUND_CHECKS + ('entropy', 'cone') + PAIR_CHECKS
DEFAULT_K_VALUES = (-1.0, -0.5, 0.0, 0.5, 1.0)
TRAJECTORY_FILE = 'trajectory.txt'


@dataclass(frozen=True)
class FSigmaParams:
    sigma: Optional[float] = None
    z1: Optional[float] = None
    z2: Optional[float] = None
    times: Tuple[float, ...] = ()

    def validate(self):
        """检查参数齐全且 σ < min(times)"""
        for name in ('sigma', 'z1', 'z2'):
            if getattr(self, name) is None:
                raise ConfigError(f"F_σ 缺少参数 {name}", key=f'fsigma.{name}')
        if not self.times:
            raise ConfigError("F_σ 缺少时间列表", key='fsigma.times')
        if not 0 < self.sigma < min(self.times):
            raise ConfigError(f"要求 0 < σ < min(times): σ={self.sigma}", key='fsigma.sigma')
        if not self.z1 < self.z2:
            raise ConfigError(f"要求 z1 < z2: {self.z1}, {self.z2}", key='fsigma.z1')
        return self


@dataclass(frozen=True)
class ExperimentConfig:
    solve: SolveConfig = field(default_factory=SolveConfig)
    diagnostics: FrozenSet[str] = frozenset()
    fsigma: FSigmaParams = field(default_factory=FSigmaParams)
    output_dir: str = 'output'
    seed: int = 0
    entries: Tuple[Tuple[str, str], ...] = ()


def load_experiment_config(path):
    """
    读取实验配置文件

    Args:
        path: key=value 文件路径

    Returns:
        ExperimentConfig: 实验配置

    Raises:
        ConfigError: 文件不可读、键未知、值无法解析或参数不一致
    """
    entries = parse_key_value_file(path)
    for key in entries:
        head = key.split('.', 1)[0]
        if key in ('output_dir', 'seed') or head in ('solve', 'fsigma'):
            continue
        if head == 'diagnostics' and key[len('diagnostics.'):] in DIAGNOSTICS:
            continue
        raise ConfigError(f"未知配置项: {key}", key=key)
    for key in entries:
        if key.startswith('fsigma.') and key not in ('fsigma.sigma', 'fsigma.z1', 'fsigma.z2', 'fsigma.times'):
            raise ConfigError(f"未知配置项: {key}", key=key)

    diagnostics = frozenset(name for name in DIAGNOSTICS if parse_bool(entries, f'diagnostics.{name}', False))
    params = FSigmaParams(
        sigma=parse_float(entries, 'fsigma.sigma', None) if 'fsigma.sigma' in entries else None,
        z1=parse_float(entries, 'fsigma.z1', None) if 'fsigma.z1' in entries else None,
        z2=parse_float(entries, 'fsigma.z2', None) if 'fsigma.z2' in entries else None,
        times=tuple(parse_float_list(entries, 'fsigma.times', ())),
    )
    if 'fsigma' in diagnostics:
        params.validate()

    solve_cfg = solve_config_from_entries(entries)
    if 'fsigma' in diagnostics:
        if max(params.times) > solve_cfg.t_end:
            raise ConfigError("fsigma.times 超出 solve.t_end", key='fsigma.times')
        times = sorted(set(solve_cfg.snapshot_times) | set(params.times))
        solve_cfg = replace(solve_cfg, snapshot_times=times)

    return ExperimentConfig(
        solve=solve_cfg,
        diagnostics=diagnostics,
        fsigma=params,
        output_dir=entries.get('output_dir', 'output'),
        seed=parse_int(entries, 'seed', 0),
        entries=tuple(entries.items()),
    )


# ---------------- 各项诊断 ----------------

def _scheme_from_manifest(trajectory_path):
    manifest = read_manifest(manifest_path(trajectory_path))
    if manifest is None or 'scheme' not in manifest:
        return None
    try:
        return SchemeInfo(**manifest['scheme'])
    except TypeError as e:
        raise ConfigError(f"清单中的格式参数无法识别: {e}", key='scheme') from e


def _load_trajectory(path):
    return read_trajectory(path, _scheme_from_manifest(path))


def run_verify(traj, out_dir, checks, k_values=DEFAULT_K_VALUES, t_min=None, n_pairs=50, seed=0, sigma=None):
    """
    界检查、熵检查与特征线检查，写 checks.csv / entropy.csv / cone.csv / pairs.csv

    lemma1、separation、roundtrip 共用一组以 seed 抽取的曲线对，顶点取最后一个快照

    Returns:
        bool: 是否全部满足
    """
    unknown = [c for c in checks if c not in VERIFY_CHECKS]
    if unknown:
        raise ConfigError(f"未知检查项: {', '.join(unknown)}", key='checks')
    ok = True
    bound_names = [c for c in checks if c in BOUND_CHECKS]
    if bound_names:
        reports = run_checks(traj, t_min=t_min, checks=bound_names)
        write_bound_checks(os.path.join(out_dir, 'checks.csv'), reports)
        for r in reports:
            if not r.satisfied:
                ok = False
                print(f"FAIL {r.name} t={r.time:.6g} margin={r.margin:.6g}")
    if 'entropy' in checks:
        report = entropy_check(traj, k_values)
        write_csv(
            os.path.join(out_dir, 'entropy.csv'),
            ('max_violation', 'tolerance', 'satisfied', 'n_steps', 'pointwise_violation'),
            [(report.max_violation, report.tolerance, report.satisfied, report.n_steps, report.pointwise_violation)],
        )
        if not report.satisfied:
            ok = False
            logger.warning("熵检查失败: 最大残差 %.6g > 容差 %.6g", report.max_violation, report.tolerance)
            print(f"FAIL entropy violation={report.max_violation:.6g} tolerance={report.tolerance:.6g}")
    if 'cone' in checks:
        ok = _run_cone(traj, out_dir, t_min) and ok
    pair_checks = [c for c in PAIR_CHECKS if c in checks]
    if pair_checks:
        ok = _run_pairs(traj, out_dir, pair_checks, n_pairs, seed, sigma) and ok
    return ok


def _run_cone(traj, out_dir, t_min):
    rows = scan_cone_bounds(traj, t_min=t_min)
    write_csv(
        os.path.join(out_dir, 'cone.csv'),
        ('t', 'x', 's', 'length', 'jump_mass', 'bound', 'tolerance', 'satisfied'),
        [(t, x, r.base.s, r.base.length, r.jump_mass, r.bound, r.tolerance, r.satisfied) for t, x, r in rows],
    )
    ok = True
    for t, x, r in rows:
        if not r.satisfied:
            ok = False
            print(f"FAIL cone t={t:.6g} x={x:.6g} length={r.base.length:.6g} bound={r.bound:.6g}")
    return ok


def _run_pairs(traj, out_dir, pair_checks, n_pairs, seed, sigma):
    if len(traj) < 2:
        raise ConfigError("曲线对检查至少需要两个快照", key='checks')
    rows = random_pair_checks(traj, traj.times[-1], n_pairs=n_pairs, seed=seed, sigma=sigma)
    write_csv(
        os.path.join(out_dir, 'pairs.csv'),
        ('x1', 'x2', 'lemma1_excess', 'eet2_lhs', 'eet2_rhs', 'lemma1_ok',
         'separation_lhs', 'separation_rhs', 'kappa', 'separation_ok',
         'round_trip', 'round_trip_tolerance', 'round_trip_ok'),
        [
            (r.x1, r.x2, r.lemma1.max_excess, r.lemma1.eet2_lhs, r.lemma1.eet2_rhs, r.lemma1.satisfied,
             r.separation.lhs, r.separation.rhs, r.separation.kappa, r.separation.satisfied,
             r.round_trip, r.round_trip_tolerance, r.round_trip_ok)
            for r in rows
        ],
    )
    ok = True
    for r in rows:
        outcome = {'lemma1': r.lemma1.satisfied, 'separation': r.separation.satisfied, 'roundtrip': r.round_trip_ok}
        for name in pair_checks:
            if not outcome[name]:
                ok = False
                print(f"FAIL {name} x1={r.x1:.6g} x2={r.x2:.6g}")
    return ok


def run_fsigma(traj, out_dir, params, T=None):
    """
    F_σ 序列及其诊断，写 fsigma.csv、fsigma_region.csv、fsigma_growth.csv、bounds.txt

    Returns:
        bool: F 单调不减、不超过上界且区域总变差满足上界
    """
    params.validate()
    series = f_sigma(traj, params.sigma, params.z1, params.z2, params.times, T=T)
    write_fsigma(os.path.join(out_dir, 'fsigma.csv'), series)

    region_rows = region_tv_check(series)
    write_csv(
        os.path.join(out_dir, 'fsigma_region.csv'),
        ('t', 'region_tv', 'bound', 'satisfied', 'n_jumps', 'left', 'right'),
        [row + (p.n_jumps, p.region[0], p.region[1]) for row, p in zip(region_rows, series.points)],
    )
    write_csv(
        os.path.join(out_dir, 'fsigma_growth.csv'),
        ('t', 'growth', 'required', 'satisfied'),
        series.cantor_conversion_flags(),
    )
    s = params.sigma / 2.0
    report = bounds_constants(series.T, s, s, params.sigma, series.T, traj.u0_l1, params.z1, params.z2)
    write_bounds_report(os.path.join(out_dir, 'bounds.txt'), report)

    ok = True
    for t_prev, t_next, drop in series.monotonicity_violations():
        ok = False
        print(f"FAIL fsigma decreasing t={t_prev:.6g}->{t_next:.6g} drop={drop:.6g}")
    if not series.within_bound():
        ok = False
        print(f"FAIL fsigma exceeds bound {series.bound:.6g}")
    for t, tv, bound, satisfied in region_rows:
        if not satisfied:
            ok = False
            print(f"FAIL region_tv t={t:.6g} tv={tv:.6g} bound={bound:.6g}")
    return ok


def run_characteristics(traj, out_dir, t, xs, sides=('minus', 'plus'), forward=False):
    """
    从 (t, x) 出发的特征线，写 characteristics.csv；后向时附带 chars_summary.csv

    Returns:
        bool: 后向真特征线互不交叉
    """
    path = os.path.join(out_dir, 'characteristics.csv')
    if forward:
        curves = [forward_characteristic(traj, t, x) for x in xs]
        write_characteristics(path, curves)
        return True

    curves = [backward_characteristic(traj, t, x, side) for x in xs for side in sides]
    write_characteristics(path, curves)
    write_csv(
        os.path.join(out_dir, 'chars_summary.csv'),
        ('curve', 'apex_x', 'side', 'genuine_residual'),
        [(i, c.origin.x, c.origin.side, genuine_residual(traj, c)) for i, c in enumerate(curves)],
    )
    report = check_non_crossing(curves)
    if not report.satisfied:
        print(f"FAIL characteristics cross overlap={report.max_overlap:.6g}")
    return report.satisfied


def run_bv(traj, out_dir, t_min=None, tol=0.1):
    """BV 分解扫描，写 bv.csv 与 jumps.csv；SBV 判定只作记录"""
    rows = sbv_scan(traj, t_min=t_min, tol=tol)
    write_bv(os.path.join(out_dir, 'bv.csv'), rows)
    write_jumps(os.path.join(out_dir, 'jumps.csv'), rows)
    return True


# ---------------- 子命令 ----------------

def _manifest(experiment, traj):
    final = traj.profiles[-1]
    return {
        'config': dict(experiment.entries),
        'seed': experiment.seed,
        'scheme': asdict(traj.scheme),
        'grid': {'x_min': traj.grid.x_min, 'x_max': traj.grid.x_max, 'n_cells': traj.grid.n_cells},
        'snapshot_times': list(traj.times),
        'n_steps': traj.n_steps,
        'norms': {
            'u0_l1': traj.u0_l1,
            'final_l1': l1_norm(final),
            'final_linf': linf_norm(final),
            'mass_drift': mass_drift(traj),
        },
        'versions': {'numpy': np.__version__, 'scipy': scipy.__version__},
    }


def cmd_solve(args):
    experiment = load_experiment_config(args.config)
    out_dir = args.out or experiment.output_dir

    traj = solve(experiment.solve)
    trajectory_path = os.path.join(out_dir, TRAJECTORY_FILE)
    write_trajectory(trajectory_path, traj)
    write_manifest(manifest_path(trajectory_path), _manifest(experiment, traj))
    logger.info("轨迹已写入 %s（%d 个快照，%d 步）", trajectory_path, len(traj), traj.n_steps)

    ok = True
    diagnostics = experiment.diagnostics
    checks = [name for name in ('l1', 'oleinik', 'linf', 'entropy', 'cone') if name in diagnostics]
    if 'pairs' in diagnostics:
        checks.extend(PAIR_CHECKS)
    if checks:
        ok = run_verify(traj, out_dir, checks, seed=experiment.seed) and ok
    if 'bv' in diagnostics:
        ok = run_bv(traj, out_dir) and ok
    if 'fsigma' in diagnostics:
        ok = run_fsigma(traj, out_dir, experiment.fsigma) and ok
    if 'characteristics' in diagnostics:
        params = experiment.fsigma
        if params.z1 is None or params.z2 is None:
            raise ConfigError("characteristics 诊断需要 fsigma.z1 与 fsigma.z2", key='diagnostics.characteristics')
        ok = run_characteristics(traj, out_dir, traj.times[-1], [params.z1, params.z2], sides=('none',)) and ok
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _experiment_or_none(args):
    return load_experiment_config(args.config) if args.config else None


def _out_dir(args, experiment):
    if args.out:
        return args.out
    return experiment.output_dir if experiment is not None else os.path.dirname(os.path.abspath(args.trajectory))


def _float_list(text, key):
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError as e:
        raise ConfigError(f"{key} 不是数字列表: {text}", key=key) from e


def _seed(args, experiment):
    """--seed 优先，其次实验配置，再次轨迹清单中记录的种子"""
    if args.seed is not None:
        return args.seed
    if experiment is not None:
        return experiment.seed
    manifest = read_manifest(manifest_path(args.trajectory))
    return int(manifest.get('seed', 0)) if manifest else 0


def cmd_verify(args):
    experiment = _experiment_or_none(args)
    traj = _load_trajectory(args.trajectory)
    checks = [c.strip() for c in args.checks.split(',') if c.strip()]
    k_values = _float_list(args.k, '--k')
    if args.pairs < 1:
        raise ConfigError(f"--pairs 必须为正: {args.pairs}", key='--pairs')
    ok = run_verify(
        traj, _out_dir(args, experiment), checks, k_values, args.t_min,
        n_pairs=args.pairs, seed=_seed(args, experiment), sigma=args.sigma,
    )
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_fsigma(args):
    experiment = _experiment_or_none(args)
    base = experiment.fsigma if experiment is not None else FSigmaParams()
    params = FSigmaParams(
        sigma=args.sigma if args.sigma is not None else base.sigma,
        z1=args.z1 if args.z1 is not None else base.z1,
        z2=args.z2 if args.z2 is not None else base.z2,
        times=tuple(_float_list(args.times, '--times')) if args.times else base.times,
    )
    traj = _load_trajectory(args.trajectory)
    ok = run_fsigma(traj, _out_dir(args, experiment), params, T=args.T)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_chars(args):
    experiment = _experiment_or_none(args)
    traj = _load_trajectory(args.trajectory)
    t = args.t if args.t is not None else (traj.times[0] if args.forward else traj.times[-1])
    sides = ('minus', 'plus') if args.side == 'both' else (args.side,)
    xs = _float_list(args.xs, '--xs')
    if not xs:
        raise ConfigError("--xs 不能为空", key='--xs')
    ok = run_characteristics(traj, _out_dir(args, experiment), t, xs, sides, args.forward)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bv(args):
    experiment = _experiment_or_none(args)
    traj = _load_trajectory(args.trajectory)
    run_bv(traj, _out_dir(args, experiment), t_min=args.t_min, tol=args.tol)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='bp_lab', description='Burgers-Poisson 数值实验')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('solve', help='求解并写出轨迹')
    p.add_argument('--config', required=True, help='key=value 实验配置文件')
    p.add_argument('--out', help='输出目录，默认取配置中的 output_dir')
    p.set_defaults(handler=cmd_solve)

    def with_trajectory(name, help_text, handler):
        q = sub.add_parser(name, help=help_text)
        q.add_argument('trajectory', help='快照文件')
        q.add_argument('--config', help='可选实验配置文件')
        q.add_argument('--out', help='输出目录，默认与轨迹同目录')
        q.set_defaults(handler=handler)
        return q

    p = with_trajectory('verify', '界检查、熵检查与特征线检查', cmd_verify)
    p.add_argument('--checks', default='l1,oleinik,linf,entropy', help='逗号分隔的检查项')
    p.add_argument('--k', default=','.join(str(k) for k in DEFAULT_K_VALUES), help='Kruzkov 常数列表')
    p.add_argument('--t-min', dest='t_min', type=float, default=None)
    p.add_argument('--pairs', type=int, default=50, help='lemma1/separation/roundtrip 的随机曲线对数')
    p.add_argument('--seed', type=int, default=None, help='曲线对抽样种子，默认取配置或清单中的 seed')
    p.add_argument('--sigma', type=float, default=None, help='分离检查的 σ，默认最后一个快照时间的一半')

    p = with_trajectory('fsigma', '几何泛函 F_σ', cmd_fsigma)
    p.add_argument('--sigma', type=float)
    p.add_argument('--z1', type=float)
    p.add_argument('--z2', type=float)
    p.add_argument('--times', help='逗号分隔的快照时间')
    p.add_argument('--T', type=float, default=None, help='区域终端时间，默认最后一个快照')

    p = with_trajectory('chars', '广义特征线', cmd_chars)
    p.add_argument('--t', type=float, default=None, help='顶点（后向）或起点（前向）时间')
    p.add_argument('--xs', required=True, help='逗号分隔的位置')
    p.add_argument('--side', choices=('minus', 'plus', 'none', 'both'), default='both')
    p.add_argument('--forward', action='store_true', help='积分前向特征线')

    p = with_trajectory('bv', 'BV 分解扫描', cmd_bv)
    p.add_argument('--t-min', dest='t_min', type=float, default=None)
    p.add_argument('--tol', type=float, default=0.1)
    return parser


def main(argv=None):
    """
    命令行主函数

    Args:
        argv: 参数列表，默认取 sys.argv

    Returns:
        int: 退出码
    """
    config = get_config()
    setup_logger(config.get_log_file(), config.get_log_level(), console=True)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    try:
        return args.handler(args)
    except NumericalAbortError as e:
        safe_log_error("数值中止: %s", e)
        return EXIT_ABORT
    except ConfigError as e:
        safe_log_error("配置错误 [%s]: %s", e.key, e)
        return EXIT_USAGE
    except (BPLabError, OSError, ValueError) as e:
        safe_log_error("运行失败: %s", e)
        return EXIT_USAGE
