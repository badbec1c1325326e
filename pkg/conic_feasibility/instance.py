"""问题实例模块：实例读写、种植见证生成、行归一化、证书验证与解的回拉"""

import json
import logging
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonschema
import numpy as np

from .config import Config
from .exceptions import FileOperationError, SamplingError, ValidationError
from .linalg import op_norm, sym_inv_sqrt, sym_sqrt, is_psd
from .norm import NormState
from .seeding import INSTANCE_GEN, derive_rng

logger = logging.getLogger(__name__)

INSTANCE_SCHEMA = {
    "type": "object",
    "properties": {
        "n": {"type": "integer"},
        "m": {"type": "integer"},
        "rows": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}},
        },
        "planted": {
            "type": "object",
            "properties": {
                "center": {"type": "array", "items": {"type": "number"}},
                "rho": {"type": "number"},
                "construction": {"type": "string"},
            },
            "required": ["center", "rho"],
        },
    },
    "required": ["n", "m", "rows"],
}

CERTIFICATE_SCHEMA = {
    "type": "object",
    "properties": {
        "variant": {"type": "string", "enum": ["feasible", "dual_evidence", "budget_exhausted"]},
        "x": {"type": "array", "items": {"type": "number"}},
        "lambda": {"type": "array", "items": {"type": "number"}},
        "delta_achieved": {"type": "number"},
        "summary": {"type": "object"},
        "transform_log": {"type": "array", "items": {"type": "object"}},
    },
    "required": ["variant"],
}


@dataclass(frozen=True, eq=False)
class PlantedWitness:
    """种植见证：单位中心 z* 与内切半径参数 ρ（本库自行构造的实例族）"""
    center: np.ndarray
    rho: float


@dataclass(frozen=True, eq=False)
class ConeInstance:
    """开多面体锥 {x : Ax > 0} 的实例，rows 为当前工作坐标下的行"""
    rows: np.ndarray
    original_rows: np.ndarray
    planted: Optional[PlantedWitness] = None

    def __post_init__(self):
        self.rows.setflags(write=False)
        self.original_rows.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: Any, planted: Optional[PlantedWitness] = None) -> 'ConeInstance':
        """由行矩阵构造实例并检查输入"""
        arr = np.array(rows, dtype=float)
        _check_rows(arr)
        return cls(rows=arr, original_rows=arr.copy(), planted=planted)

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def with_rows(self, rows: np.ndarray) -> 'ConeInstance':
        """返回工作行替换后的新实例，原始行不变"""
        return ConeInstance(rows=np.array(rows, dtype=float), original_rows=self.original_rows,
                            planted=self.planted)

    def margins(self, x: np.ndarray, original: bool = False) -> np.ndarray:
        """⟨A_i, x⟩"""
        rows = self.original_rows if original else self.rows
        return rows @ x

    def is_strictly_feasible(self, x: np.ndarray, original: bool = False) -> bool:
        return bool(np.min(self.margins(x, original)) > 0.0)

    def to_document(self) -> Dict[str, Any]:
        """转换为实例文档（记录原始行）"""
        doc: Dict[str, Any] = {
            "n": self.n,
            "m": self.m,
            "rows": [[float(v) for v in row] for row in self.original_rows],
        }
        if self.planted is not None:
            doc["planted"] = {
                "center": [float(v) for v in self.planted.center],
                "rho": float(self.planted.rho),
                "construction": "planted-sphere-reflection",
            }
        return doc


def _check_rows(rows: np.ndarray) -> None:
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValidationError(f"行矩阵形状无效: {rows.shape}", code="malformed")
    if not np.all(np.isfinite(rows)):
        raise ValidationError("行矩阵包含非有限数", code="non_finite")
    zero = np.flatnonzero(~np.any(rows != 0.0, axis=1))
    if zero.size:
        raise ValidationError(f"第 {int(zero[0])} 行是零向量", code="zero_row")


# --- 变换记录 ---------------------------------------------------------------

class StepKind(StrEnum):
    """变换步骤类型"""
    RANK1 = "rank1"
    MULTI_RANK = "multirank"


@dataclass(frozen=True, eq=False)
class Rank1Step:
    """秩一步骤：F(c)=2c，F(x)=x 对 x ⊥ c"""
    c: np.ndarray
    kind: StepKind = StepKind.RANK1

    def __post_init__(self):
        norm = float(np.linalg.norm(self.c))
        if abs(norm - 1.0) > 1e-12:
            raise ValidationError(f"秩一步骤方向必须是单位向量，实际范数 {norm!r}", code="not_unit")

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x + self.c * (self.c @ x)

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x - 0.5 * self.c * (self.c @ x)

    def inverse_matrix(self) -> np.ndarray:
        return np.eye(self.c.size) - 0.5 * np.outer(self.c, self.c)

    def to_document(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "c": [float(v) for v in self.c]}


@dataclass(frozen=True, eq=False)
class MultiRankStep:
    """多秩步骤：F(x)=(I+αM)^{1/2}x"""
    M: np.ndarray
    alpha: float
    kind: StepKind = StepKind.MULTI_RANK

    def __post_init__(self):
        trace = float(np.trace(self.M))
        if abs(trace - 1.0) > 1e-9:
            raise ValidationError(f"多秩步骤的 M 迹必须为 1，实际 {trace!r}", code="bad_trace")
        if not np.allclose(self.M, self.M.T, atol=1e-12) or not is_psd(self.M):
            raise ValidationError("多秩步骤的 M 必须对称半正定", code="not_psd")
        bound = 1.0 / op_norm(self.M) + 1e-9
        if not 0.0 < self.alpha <= bound:
            raise ValidationError(f"α={self.alpha!r} 超出 (0, 1/‖M‖] 范围", code="bad_alpha")

    def _shifted(self) -> np.ndarray:
        return np.eye(self.M.shape[0]) + self.alpha * self.M

    def forward(self, x: np.ndarray) -> np.ndarray:
        return sym_sqrt(self._shifted()) @ x

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return sym_inv_sqrt(self._shifted()) @ x

    def inverse_matrix(self) -> np.ndarray:
        return sym_inv_sqrt(self._shifted())

    def to_document(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "alpha": float(self.alpha),
                "M": [[float(v) for v in row] for row in self.M]}


TransformStep = Union[Rank1Step, MultiRankStep]


@dataclass(frozen=True)
class TransformLog:
    """按顺序组合的重缩放步骤，用于把工作坐标下的解精确回拉到原始坐标"""
    steps: Tuple[TransformStep, ...] = ()

    def append(self, step: TransformStep) -> 'TransformLog':
        return TransformLog(steps=self.steps + (step,))

    def __len__(self) -> int:
        return len(self.steps)

    def push_forward(self, x: np.ndarray) -> np.ndarray:
        """原始坐标 → 工作坐标"""
        out = np.array(x, dtype=float)
        for step in self.steps:
            out = step.forward(out)
        return out

    def pullback_matrix(self, n: int) -> np.ndarray:
        """回拉映射的稠密矩阵 G，满足 pull_back(x) = G x"""
        G = np.eye(n)
        for step in self.steps:
            G = G @ step.inverse_matrix()
        return G

    def to_document(self) -> List[Dict[str, Any]]:
        return [step.to_document() for step in self.steps]

    @classmethod
    def from_document(cls, items: List[Dict[str, Any]]) -> 'TransformLog':
        steps: List[TransformStep] = []
        for item in items:
            kind = item.get("kind")
            if kind == StepKind.RANK1:
                steps.append(Rank1Step(c=np.array(item["c"], dtype=float)))
            elif kind == StepKind.MULTI_RANK:
                steps.append(MultiRankStep(M=np.array(item["M"], dtype=float),
                                           alpha=float(item["alpha"])))
            else:
                raise ValidationError(f"未知的变换步骤类型: {kind}", code="malformed")
        return cls(steps=tuple(steps))


# --- 证书 -------------------------------------------------------------------

class CertificateKind(StrEnum):
    """证书类型"""
    FEASIBLE = "feasible"
    DUAL_EVIDENCE = "dual_evidence"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True, eq=False)
class Feasible:
    """原始坐标下的可行点"""
    x: np.ndarray
    kind: CertificateKind = CertificateKind.FEASIBLE


@dataclass(frozen=True, eq=False)
class DualEvidence:
    """对偶证据：凸组合 λ 与达到的 ‖λA‖"""
    lambda_: np.ndarray
    delta_achieved: float
    kind: CertificateKind = CertificateKind.DUAL_EVIDENCE


@dataclass(frozen=True)
class BudgetExhausted:
    """预算耗尽：可能不可行，或 ρ 低于阈值"""
    summary: Dict[str, Any] = field(default_factory=dict)
    kind: CertificateKind = CertificateKind.BUDGET_EXHAUSTED


Certificate = Union[Feasible, DualEvidence, BudgetExhausted]


def certificate_to_document(cert: Certificate, log: Optional[TransformLog] = None) -> Dict[str, Any]:
    """证书文档，附带变换记录"""
    doc: Dict[str, Any] = {"variant": cert.kind.value}
    if isinstance(cert, Feasible):
        doc["x"] = [float(v) for v in cert.x]
    elif isinstance(cert, DualEvidence):
        doc["lambda"] = [float(v) for v in cert.lambda_]
        doc["delta_achieved"] = float(cert.delta_achieved)
    else:
        doc["summary"] = cert.summary
    doc["transform_log"] = log.to_document() if log is not None else []
    return doc


def certificate_from_document(doc: Dict[str, Any]) -> Tuple[Certificate, TransformLog]:
    """解析证书文档"""
    try:
        jsonschema.validate(doc, CERTIFICATE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ValidationError(f"证书文档格式错误: {e.message}", code="malformed")
    log = TransformLog.from_document(doc.get("transform_log", []))
    variant = doc["variant"]
    if variant == CertificateKind.FEASIBLE:
        if "x" not in doc:
            raise ValidationError("可行证书缺少 x", code="malformed")
        return Feasible(x=np.array(doc["x"], dtype=float)), log
    if variant == CertificateKind.DUAL_EVIDENCE:
        if "lambda" not in doc or "delta_achieved" not in doc:
            raise ValidationError("对偶证据缺少 lambda 或 delta_achieved", code="malformed")
        return DualEvidence(lambda_=np.array(doc["lambda"], dtype=float),
                            delta_achieved=float(doc["delta_achieved"])), log
    return BudgetExhausted(summary=doc.get("summary", {})), log


@dataclass
class VerificationReport:
    """证书验证报告"""
    kind: CertificateKind
    passed: bool
    margin: Optional[float] = None
    lambda_l1: Optional[float] = None
    evidence_norm: Optional[float] = None
    message: str = ""

    def to_document(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "passed": self.passed,
            "margin": self.margin,
            "lambda_l1": self.lambda_l1,
            "evidence_norm": self.evidence_norm,
            "message": self.message,
        }


# --- 操作 -------------------------------------------------------------------

def load_instance(source: Union[str, Path, Dict[str, Any]]) -> ConeInstance:
    """
    读取实例文档。

    Args:
        source: JSON 文本、文件路径或已解析的字典

    Returns:
        未归一化的 ConeInstance（original_rows = rows = 输入）

    Raises:
        ValidationError: 文档格式错误、零行、非有限数或 m、n < 1
        FileOperationError: 文件读取失败
    """
    if isinstance(source, Path):
        try:
            source = source.read_text(encoding="utf-8")
        except OSError as e:
            raise FileOperationError(f"读取实例文件 '{source}' 失败: {e}")
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise ValidationError(f"实例文档不是合法的 JSON: {e}", code="malformed")
    else:
        doc = source

    try:
        jsonschema.validate(doc, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise ValidationError(f"实例文档格式错误: {e.message}", code="malformed")

    n, m, rows = doc["n"], doc["m"], doc["rows"]
    if n < 1 or m < 1:
        raise ValidationError(f"维数无效: n={n}, m={m}", code="malformed")
    if len(rows) != m or any(len(row) != n for row in rows):
        raise ValidationError(f"行矩阵与声明的 {m}×{n} 不符", code="dimension_mismatch")

    planted = None
    if "planted" in doc:
        center = np.array(doc["planted"]["center"], dtype=float)
        if center.size != n:
            raise ValidationError("种植中心的维数与 n 不符", code="dimension_mismatch")
        planted = PlantedWitness(center=center, rho=float(doc["planted"]["rho"]))
    return ConeInstance.from_rows(rows, planted=planted)


def save_instance(instance: ConeInstance, path: Optional[Path] = None) -> str:
    """序列化实例；浮点数按 repr 写出，可逐位往返"""
    text = json.dumps(instance.to_document())
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise FileOperationError(f"写入实例文件 '{path}' 失败: {e}")
    return text


def generate_planted(n: int, m: int, rho: float, seed: int) -> Tuple[ConeInstance, PlantedWitness]:
    """
    生成种植实例：所有行为单位向量且 ⟨A_i, z*⟩ ≥ ρ。

    行在球面上均匀采样，⟨g, z*⟩ < 0 时关于 z* 的正交补反射，
    仍不满足 ⟨g, z*⟩ ≥ ρ 时拒绝重采样。

    Raises:
        ValidationError: 参数超出范围
        SamplingError: 某一行超过重试上限（ρ 相对 m 过于接近 1）
    """
    if not 0.0 < rho < 1.0 or m < 1 or n < 2:
        raise ValidationError(f"参数无效: n={n}, m={m}, rho={rho}", code="malformed")

    retry_cap = Config.get_instance().instance.PLANTED_RETRY_CAP
    rng = derive_rng(seed, INSTANCE_GEN)
    center = rng.standard_normal(n)
    center /= np.linalg.norm(center)

    rows = np.empty((m, n))
    total_draws = 0
    for i in range(m):
        for attempt in range(retry_cap):
            g = rng.standard_normal(n)
            g /= np.linalg.norm(g)
            t = g @ center
            if t < 0.0:
                g = g - 2.0 * t * center
                g /= np.linalg.norm(g)
            if g @ center >= rho:
                rows[i] = g
                total_draws += attempt + 1
                break
        else:
            raise SamplingError(
                f"第 {i} 行在 {retry_cap} 次重试后仍未满足 ⟨A_i, z*⟩ ≥ {rho}", code="planted_retry_cap"
            )

    logger.debug(f"种植实例生成完成: n={n}, m={m}, rho={rho}, 平均采样次数 {total_draws / m:.2f}")
    witness = PlantedWitness(center=center, rho=float(rho))
    return ConeInstance.from_rows(rows, planted=witness), witness


def normalize_rows(instance: ConeInstance, norm: NormState) -> ConeInstance:
    """
    把每一行缩放为 ‖A_i‖_{H⁻¹} = 1；正缩放不改变可行域。

    Raises:
        ValidationError: 某行的对偶范数下溢
    """
    norms = norm.dual_row_norms(instance.rows)
    floor = Config.get_instance().instance.NORMALIZE_UNDERFLOW
    small = np.flatnonzero(norms < floor)
    if small.size:
        raise ValidationError(f"第 {int(small[0])} 行的对偶范数下溢: {norms[small[0]]:.3e}", code="underflow")
    return instance.with_rows(instance.rows / norms[:, None])


def working_instance(instance: ConeInstance, log: TransformLog) -> ConeInstance:
    """按变换记录重建工作坐标下的行：normalize(original_rows · G)"""
    if len(log) == 0:
        return instance
    rows = instance.original_rows @ log.pullback_matrix(instance.n)
    return normalize_rows(instance.with_rows(rows), NormState.identity(instance.n))


def pull_back(x: np.ndarray, log: TransformLog) -> np.ndarray:
    """按逆序施加各步骤的逆映射，把工作坐标下的点回拉到原始坐标"""
    out = np.array(x, dtype=float)
    for step in reversed(log.steps):
        out = step.inverse(out)
    return out


def verify_certificate(
    instance: ConeInstance,
    cert: Certificate,
    norm: Optional[NormState] = None,
) -> VerificationReport:
    """
    独立验证证书。

    可行证书在原始坐标下检查严格可行；对偶证据在工作坐标、当前对偶范数下
    重新计算 ‖λ‖₁ 与 ‖λA‖，并以 1e-9 相对容差比较声称的 delta_achieved。

    Raises:
        ValidationError: 维数不匹配
    """
    if isinstance(cert, Feasible):
        if cert.x.shape != (instance.n,):
            raise ValidationError(f"x 的维数 {cert.x.shape} 与 n={instance.n} 不符", code="dimension_mismatch")
        if not np.all(np.isfinite(cert.x)):
            return VerificationReport(kind=cert.kind, passed=False, message="x 含非有限数")
        margin = float(np.min(instance.margins(cert.x, original=True)))
        passed = margin > 0.0
        return VerificationReport(
            kind=cert.kind, passed=passed, margin=margin,
            message="严格可行" if passed else "存在不满足严格不等式的行",
        )

    if isinstance(cert, DualEvidence):
        if cert.lambda_.shape != (instance.m,):
            raise ValidationError(
                f"λ 的维数 {cert.lambda_.shape} 与 m={instance.m} 不符", code="dimension_mismatch"
            )
        norm = norm or NormState.identity(instance.n)
        l1 = float(np.sum(np.abs(cert.lambda_)))
        evidence = norm.dual_norm(cert.lambda_ @ instance.rows)
        nonneg = bool(np.all(cert.lambda_ >= 0.0))
        simplex = nonneg and abs(l1 - 1.0) <= 1e-12
        within = evidence <= cert.delta_achieved * (1.0 + 1e-9) + 1e-300
        passed = simplex and within
        if passed:
            message = "对偶证据有效"
        elif not simplex:
            message = "λ 不是凸组合"
        else:
            message = f"重新计算的 ‖λA‖={evidence:.6e} 超过声称的 {cert.delta_achieved:.6e}"
        return VerificationReport(kind=cert.kind, passed=passed, lambda_l1=l1,
                                  evidence_norm=evidence, message=message)

    return VerificationReport(kind=cert.kind, passed=False, message="预算耗尽证书不包含可验证的内容")


def planted_containment(instance: ConeInstance, witness: PlantedWitness) -> float:
    """min_i ⟨A_i, z*⟩ − ρ‖A_i‖₂，非负即 B(z*, ρ) ⊆ P"""
    rows = instance.original_rows
    return float(np.min(rows @ witness.center - witness.rho * np.linalg.norm(rows, axis=1)))
