"""
配置管理模块
实验室级默认值来自 config/config.json，实验参数来自 key=value 文本文件
"""
import json
import math
import os
from pathlib import Path

from core.errors import ConfigError

TOL_SCALE_ENV = 'BP_LAB_TOL_SCALE'


class Config:
    """配置管理类"""

    def __init__(self, config_file='config/config.json'):
        """
        初始化配置

        Args:
            config_file: 配置文件路径，相对路径先按项目根目录解析
        """
        self.config_file = config_file
        self.config = self._load_config()

    def _get_resource_path(self, relative_path):
        """获取项目内资源文件的绝对路径"""
        base_path = Path(__file__).parent.parent
        return base_path / relative_path

    def _load_config(self):
        """加载配置文件，缺失或损坏时使用默认配置"""
        config_path = self._get_resource_path(self.config_file)
        if not config_path.exists():
            config_path = Path(self.config_file)
        if not config_path.exists():
            return self._get_default_config()

        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except Exception as e:
            import logging
            logging.getLogger('bp_lab').error("加载配置文件失败: %s，使用默认配置", e)
            return self._get_default_config()

        # 缺失的段落用默认值补齐
        config = self._get_default_config()
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
        return config

    def _get_default_config(self):
        """获取默认配置"""
        return {
            "log_level": "WARNING",
            "log_file": "./logs/bp_lab.log",
            "sweep": {"cfl": 0.45, "max_dt": 0.05},
            "truncation_eps": 1e-8,
            "checks": {
                "t_min": 0.05,
                "slack_factor": 10.0,
                "entropy_constant": 1.0,
                "crossing_factor": 2.0,
                "cone_factor": 10.0,
            },
            "detector": {"theta_abs": 1e-3, "c_j": 0.5},
            "characteristics": {"substeps": 2},
        }

    def get(self, key, default=None):
        """获取配置项"""
        return self.config.get(key, default)

    def _section(self, name):
        section = self.get(name)
        return section if isinstance(section, dict) else {}

    def get_log_file(self):
        """获取日志文件路径"""
        return self.get('log_file', './logs/bp_lab.log')

    def get_log_level(self):
        """获取日志级别名称"""
        return self.get('log_level', 'WARNING')

    def get_sweep_defaults(self):
        """获取 Godunov 扫描的默认 (cfl, max_dt)"""
        sweep = self._section('sweep')
        return float(sweep.get('cfl', 0.45)), float(sweep.get('max_dt', 0.05))

    def get_truncation_eps(self):
        """获取截断的相对尾部误差"""
        return float(self.get('truncation_eps', 1e-8))

    def get_t_min(self):
        """获取界检查的最早时间"""
        return float(self._section('checks').get('t_min', 0.05))

    def get_check_slack(self):
        """获取界检查的加性松弛系数（乘以 dx·(1+rhs)）"""
        return float(self._section('checks').get('slack_factor', 10.0))

    def get_entropy_constant(self):
        """获取熵检查常数 C_e"""
        return float(self._section('checks').get('entropy_constant', 1.0))

    def get_crossing_factor(self):
        """获取特征线交叉容差系数（乘以 dx）"""
        return float(self._section('checks').get('crossing_factor', 2.0))

    def get_cone_factor(self):
        """获取锥底长度检查的容差系数（乘以 dx·c_t(s)）"""
        return float(self._section('checks').get('cone_factor', 10.0))

    def get_detector(self):
        """获取间断检测参数 (theta_abs, c_j)"""
        detector = self._section('detector')
        return float(detector.get('theta_abs', 1e-3)), float(detector.get('c_j', 0.5))

    def get_char_substeps(self):
        """获取每个快照间隔内特征线积分的子步数"""
        return int(self._section('characteristics').get('substeps', 2))

    def get_tol_scale(self):
        """
        获取全局容差缩放系数，由环境变量 BP_LAB_TOL_SCALE 给出

        Returns:
            float: 缩放系数，未设置或非法时为 1.0
        """
        raw = os.environ.get(TOL_SCALE_ENV)
        if not raw:
            return 1.0
        try:
            scale = float(raw)
        except ValueError:
            return 1.0
        if not math.isfinite(scale) or scale <= 0:
            return 1.0
        return scale


# 全局配置实例
_config_instance = None


def get_config():
    """获取全局配置实例"""
    global _config_instance
    if _config_instance is None:
        _config_instance = Config()
    return _config_instance


def parse_key_value_file(path):
    """
    读取 key=value 格式的实验配置文件

    Args:
        path: 配置文件路径

    Returns:
        dict: 键到原始字符串值的映射，保持文件中的顺序

    Raises:
        ConfigError: 文件不可读、行格式错误或键重复
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}") from e

    entries = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f"第 {lineno} 行缺少 '=': {line}", key=line)
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"第 {lineno} 行键为空", key='')
        if key in entries:
            raise ConfigError(f"配置项重复: {key}", key=key)
        entries[key] = value.strip()
    return entries


def parse_float(entries, key, default=None):
    """从映射中取出浮点数，缺失时返回默认值"""
    if key not in entries:
        if default is None:
            raise ConfigError(f"缺少配置项: {key}", key=key)
        return default
    try:
        value = float(entries[key])
    except ValueError as e:
        raise ConfigError(f"配置项 {key} 不是数字: {entries[key]}", key=key) from e
    if not math.isfinite(value):
        raise ConfigError(f"配置项 {key} 不是有限数: {entries[key]}", key=key)
    return value


def parse_int(entries, key, default=None):
    """从映射中取出整数"""
    if key not in entries:
        if default is None:
            raise ConfigError(f"缺少配置项: {key}", key=key)
        return default
    try:
        return int(entries[key])
    except ValueError as e:
        raise ConfigError(f"配置项 {key} 不是整数: {entries[key]}", key=key) from e


def parse_float_list(entries, key, default=None):
    """解析逗号分隔的浮点数列表"""
    if key not in entries:
        if default is None:
            raise ConfigError(f"缺少配置项: {key}", key=key)
        return list(default)
    text = entries[key].strip()
    if not text:
        return []
    try:
        values = [float(item) for item in text.split(',') if item.strip()]
    except ValueError as e:
        raise ConfigError(f"配置项 {key} 不是数字列表: {entries[key]}", key=key) from e
    if not all(math.isfinite(v) for v in values):
        raise ConfigError(f"配置项 {key} 含非有限数", key=key)
    return values


def parse_bool(entries, key, default=False):
    """解析 true/false/on/off/1/0"""
    if key not in entries:
        return default
    text = entries[key].strip().lower()
    if text in ('true', 'on', 'yes', '1'):
        return True
    if text in ('false', 'off', 'no', '0'):
        return False
    raise ConfigError(f"配置项 {key} 不是布尔值: {entries[key]}", key=key)


def parse_choice(entries, key, choices, default):
    """解析枚举值"""
    if key not in entries:
        return default
    value = entries[key].strip().lower()
    if value not in choices:
        raise ConfigError(f"配置项 {key} 取值 {entries[key]} 不在 {sorted(choices)} 中", key=key)
    return value
