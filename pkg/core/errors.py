"""
异常定义模块
所有数值模块抛出的异常都从 BPLabError 派生，CLI 据此映射退出码
"""


class BPLabError(Exception):
    """实验室异常基类"""


class GridError(BPLabError, ValueError):
    """网格、剖面或轨迹不合法"""


class InadmissibleJumpError(BPLabError, ValueError):
    """不满足 u(x-) > u(x+) 的间断"""


class StabilityError(BPLabError, ValueError):
    """时间步长超过 CFL 稳定性限制"""


class BoundsDomainError(BPLabError, ValueError):
    """常数或检查的参数越界（如 t <= 0）"""


class SnapshotMissingError(BPLabError, KeyError):
    """请求的时间不是已保存的快照时间"""

    def __str__(self):
        # KeyError 默认会给消息加引号
        return str(self.args[0]) if self.args else ''


class CharacteristicError(BPLabError, ValueError):
    """特征线积分或检查失败"""


class NumericalAbortError(BPLabError, RuntimeError):
    """求解过程中出现非有限值"""

    def __init__(self, message, time=None, step_index=None):
        super().__init__(message)
        self.time = time
        self.step_index = step_index


class ConfigError(BPLabError, ValueError):
    """配置文件错误，key 为出错的配置项"""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
