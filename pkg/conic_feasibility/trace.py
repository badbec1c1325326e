"""迭代轨迹记录：逐迭代、逐阶段的遥测，以 JSON 行写入轨迹文件"""

import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from .exceptions import FileOperationError


@dataclass
class TraceRecord:
    """单条轨迹记录"""
    phase: int
    iter: int
    mode: str
    phi_log: Optional[float] = None
    norm_y_dual: Optional[float] = None
    epsilon: Optional[float] = None
    alpha: Optional[float] = None
    det_growth_log: Optional[float] = None
    rescale: Optional[Dict[str, Any]] = None
    event: str = "step"
    wall_time: float = 0.0

    def to_document(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


class TraceRecorder:
    """轨迹记录器：保存在内存中，并可同时写入 JSON 行文件"""

    def __init__(
        self,
        path: Optional[Path] = None,
        keep_steps: bool = True,
    ):
        self.path = path
        self.keep_steps = keep_steps
        self.records: List[TraceRecord] = []
        self._start = time.perf_counter()
        self._handle = None
        self.logger = logging.getLogger(self.__class__.__name__)
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                self._handle = path.open("w", encoding="utf-8")
            except OSError as e:
                raise FileOperationError(f"打开轨迹文件 '{path}' 失败: {e}")

    def record(self, **fields: Any) -> TraceRecord:
        """追加一条记录"""
        rec = TraceRecord(wall_time=time.perf_counter() - self._start, **fields)
        if self.keep_steps or rec.event != "step":
            self.records.append(rec)
        if self._handle is not None:
            self._handle.write(json.dumps(rec.to_document()) + "\n")
        return rec

    def events(self, event: str) -> List[TraceRecord]:
        return [r for r in self.records if r.event == event]

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self.logger.debug(f"轨迹已写入 {self.path}")

    def __enter__(self) -> 'TraceRecorder':
        return self

    def __exit__(self, *exc) -> None:
        self.close()
