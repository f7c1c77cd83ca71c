"""
日志管理模块
统一使用名为 bp_lab 的日志记录器
"""
import logging
import os
import sys

LOGGER_NAME = 'bp_lab'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def setup_logger(log_file=None, log_level=logging.WARNING, console=False):
    """
    设置日志记录器

    Args:
        log_file: 日志文件路径，为None时不写文件
        log_level: 日志级别，可以是整数或 'INFO' 这样的名称
        console: 是否同时输出到 stderr（命令行模式使用）

    Returns:
        logging.Logger: 配置好的日志记录器
    """
    if isinstance(log_level, str):
        log_level = logging.getLevelName(log_level.upper())
        if not isinstance(log_level, int):
            log_level = logging.WARNING

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)

    # 避免重复添加handler
    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8', errors='replace')
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    if console:
        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setLevel(log_level)
        stream_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        logger.addHandler(stream_handler)

    return logger


def get_logger():
    """获取全局日志记录器"""
    return logging.getLogger(LOGGER_NAME)


def safe_log_error(message, *args):
    """
    安全地记录错误日志，格式化失败时退化为拼接，永不抛出异常

    Args:
        message: 日志消息，可带 %s 占位符
        *args: 格式化参数
    """
    logger = get_logger()
    try:
        if not isinstance(message, str):
            message = str(message)
        if args:
            try:
                message = message % args
            except Exception:
                message = message + " " + " ".join(str(arg) for arg in args)
        logger.error(message)
    except Exception:
        pass  # 日志本身失败时放弃，不影响主流程
