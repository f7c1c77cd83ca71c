"""
文件处理工具模块
快照文本格式的读写、CSV 报表、运行清单，所有写入都先写临时文件再替换
"""
import csv
import io
import json
import os
import tempfile

import numpy as np

from core.errors import GridError
from core.grid import CellProfile, SchemeInfo, Trajectory, make_grid
from utils.logger import get_logger

logger = get_logger()

VALUE_FORMAT = '%.17g'


def atomic_write_text(path, text):
    """
    原子写入文本文件：同目录下的临时文件写完后 os.replace

    Args:
        path: 目标路径
        text: 文件内容
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp_', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug("已写入 %s", path)


def format_snapshot(t, p):
    """一个快照的文本：头行 + 每行一个单元值"""
    grid = p.grid
    lines = [f"t={VALUE_FORMAT % t} n={grid.n_cells} xmin={VALUE_FORMAT % grid.x_min} xmax={VALUE_FORMAT % grid.x_max}"]
    lines.extend(VALUE_FORMAT % v for v in p.values)
    return '\n'.join(lines) + '\n'


def format_trajectory(traj):
    """所有快照，空行分隔"""
    return '\n'.join(format_snapshot(t, p) for t, p in zip(traj.times, traj.profiles))


def write_trajectory(path, traj):
    atomic_write_text(path, format_trajectory(traj))


def _parse_header(line, lineno):
    fields = {}
    for token in line.split():
        key, sep, value = token.partition('=')
        if not sep:
            raise GridError(f"第 {lineno} 行快照头格式错误: {line}")
        fields[key] = value
    try:
        return float(fields['t']), int(fields['n']), float(fields['xmin']), float(fields['xmax'])
    except (KeyError, ValueError) as e:
        raise GridError(f"第 {lineno} 行快照头格式错误: {line}") from e


def parse_trajectory(text, scheme=None):
    """
    解析快照文本

    Args:
        text: format_trajectory 生成的文本
        scheme: 可选的格式元数据

    Returns:
        Trajectory: 轨迹

    Raises:
        GridError: 格式错误、单元数不符或快照网格不一致
    """
    blocks = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            current = None
            continue
        if current is None:
            current = {'header': _parse_header(line, lineno), 'values': []}
            blocks.append(current)
            continue
        try:
            current['values'].append(float(line))
        except ValueError as e:
            raise GridError(f"第 {lineno} 行不是数值: {line}") from e
    if not blocks:
        raise GridError("文件中没有快照")

    _, n, x_min, x_max = blocks[0]['header']
    grid = make_grid(x_min, x_max, n)
    traj = Trajectory(grid, scheme if scheme is not None else SchemeInfo())
    for block in blocks:
        t, n_b, x_min_b, x_max_b = block['header']
        if (n_b, x_min_b, x_max_b) != (n, x_min, x_max):
            raise GridError(f"t={t} 的快照网格与第一个快照不一致")
        if len(block['values']) != n:
            raise GridError(f"t={t} 的快照有 {len(block['values'])} 个值，应为 {n}")
        traj.append(t, CellProfile(grid, np.asarray(block['values'])))
    return traj


def read_trajectory(path, scheme=None):
    """读取快照文件，OSError 原样抛出"""
    with open(path, 'r', encoding='utf-8') as f:
        return parse_trajectory(f.read(), scheme)


def _format_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return VALUE_FORMAT % value
    return str(value)


def format_csv(header, rows):
    """带表头的 CSV 文本，浮点数按 %.17g 输出"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(v) for v in row])
    return buffer.getvalue()


def write_csv(path, header, rows):
    atomic_write_text(path, format_csv(header, rows))


def read_csv(path):
    """
    读取 CSV

    Returns:
        list: 每行一个 dict
    """
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))


def write_bound_checks(path, reports):
    """界检查报告：time,lhs,rhs,margin,satisfied（附加 check 列区分检查项）"""
    rows = [(r.time, r.lhs, r.rhs, r.margin, r.satisfied, r.name) for r in reports]
    write_csv(path, ('time', 'lhs', 'rhs', 'margin', 'satisfied', 'check'), rows)


def write_characteristics(path, curves):
    """特征线：s,xi,v,kind，多条曲线用 curve 列编号"""
    rows = []
    for index, curve in enumerate(curves):
        for s, xi, v, kind in zip(curve.times, curve.xi, curve.v, curve.sample_kinds()):
            rows.append((s, xi, v, kind, index))
    write_csv(path, ('s', 'xi', 'v', 'kind', 'curve'), rows)


def write_fsigma(path, series):
    """F_σ 序列：t,F,overlap_flag"""
    rows = [(p.t, p.F, p.overlap_flag) for p in series.points]
    write_csv(path, ('t', 'F', 'overlap_flag'), rows)


def write_bv(path, rows):
    """BV 分解：time,tv,ac,jump,residual,verdict"""
    out = []
    for row in rows:
        d = row.decomposition
        out.append((row.time, d.total_variation, d.ac_mass, d.jump_mass, d.singular_residual, row.verdict))
    write_csv(path, ('time', 'tv', 'ac', 'jump', 'residual', 'verdict'), out)


def write_jumps(path, rows):
    """跳跃记录：time,position,u_minus,u_plus,mass"""
    out = [
        (row.time, j.position, j.u_minus, j.u_plus, j.mass)
        for row in rows for j in row.decomposition.jump_records
    ]
    write_csv(path, ('time', 'position', 'u_minus', 'u_plus', 'mass'), out)


def format_key_values(items):
    """key=value 文本块"""
    return ''.join(f"{key}={_format_cell(value)}\n" for key, value in items)


def write_bounds_report(path, report):
    atomic_write_text(path, format_key_values(report.as_items()))


def manifest_path(trajectory_path):
    return f"{trajectory_path}.manifest.json"


def write_manifest(path, data):
    """运行清单（键排序，保证重复运行输出一致）"""
    atomic_write_text(path, json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + '\n')


def read_manifest(path):
    """
    读取运行清单，不存在时返回 None

    Raises:
        ValueError: 文件不是合法 JSON
    """
    if not os.path.exists(path):
        return None
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
