"""
主程序入口
启动命令行实验工具
"""
import sys

from cli.harness import main


if __name__ == "__main__":
    sys.exit(main())
