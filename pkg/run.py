"""启动命令行求解器的脚本"""

import sys

import anyio
from conic_feasibility.cli import main

if __name__ == "__main__":
    sys.exit(anyio.run(main, backend="asyncio"))
