"""命令行入口：gen | solve | round | verify | bench | volume-mc"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .config import Config
from .driver import SolveConfig, john_ellipsoid, solve
from .exceptions import ConfigurationError, FileOperationError, SolverError, ValidationError
from .harness import (
    bench_cells,
    bench_sweep_async,
    build_report,
    mc_volume_fraction,
    planted_volume_lower_bound,
)
from .instance import (
    ConeInstance,
    certificate_from_document,
    generate_planted,
    load_instance,
    save_instance,
    verify_certificate,
    working_instance,
)
from .norm import NormState
from .phases import PhaseMode
from .rescaler import RescaleKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXHAUSTED = 2
EXIT_VERIFY_FAILED = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """参数错误以 ValidationError 抛出，由 main 映射为退出码 64"""

    def error(self, message: str):
        raise ValidationError(f"{self.prog}: {message}", code="usage")


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v]


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_solve_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--instance", type=Path, required=True)
    parser.add_argument("--phase", choices=[m.value for m in PhaseMode], default=PhaseMode.MWU_MODIFIED.value)
    parser.add_argument("--rescale", choices=[k.value for k in RescaleKind], default=RescaleKind.MULTI_RANK.value)
    parser.add_argument("--derandomize", action="store_true")
    parser.add_argument("--fixed-step", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-phases", type=int)
    parser.add_argument("--rho-hint", type=float)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--trace", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conic-feasibility", description="严格锥可行性求解器")
    parser.add_argument("--log-level", default=Config.get_instance().log_level)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="生成种植实例")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--rho", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path)

    _add_solve_arguments(sub.add_parser("solve", help="求解实例"))
    _add_solve_arguments(sub.add_parser("round", help="求解并给出近似 John 椭球"))

    verify = sub.add_parser("verify", help="验证证书")
    verify.add_argument("--instance", type=Path, required=True)
    verify.add_argument("--cert", type=Path, required=True)

    bench = sub.add_parser("bench", help="基准扫描")
    bench.add_argument("--ns", type=_int_list, required=True)
    bench.add_argument("--ms", type=_int_list, required=True)
    bench.add_argument("--rhos", type=_float_list, required=True)
    bench.add_argument("--phases", type=_str_list, default=[PhaseMode.MWU_MODIFIED.value])
    bench.add_argument("--rescales", type=_str_list, default=[RescaleKind.MULTI_RANK.value])
    bench.add_argument("--seeds", type=_int_list, default=[0])
    bench.add_argument("--max-phases", type=int)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", type=Path, required=True)
    bench.add_argument("--report", type=Path)

    volume = sub.add_parser("volume-mc", help="蒙特卡洛体积分数")
    volume.add_argument("--instance", type=Path, required=True)
    volume.add_argument("--samples", type=int, default=100_000)
    volume.add_argument("--seed", type=int, default=0)
    volume.add_argument("--norm", type=Path)
    return parser


def _emit(doc: Dict[str, Any], path: Optional[Path]) -> None:
    text = json.dumps(doc, indent=2, ensure_ascii=False)
    if path is None:
        print(text)
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise FileOperationError(f"写入结果文件 '{path}' 失败: {e}")
    logger.info(f"结果已写入 {path}")


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"读取文件 '{path}' 失败: {e}", code="io")
    except json.JSONDecodeError as e:
        raise ValidationError(f"文件 '{path}' 不是合法的 JSON: {e}", code="malformed")


def _solve_config(args: argparse.Namespace) -> SolveConfig:
    return SolveConfig(phase_mode=args.phase, rescale_mode=args.rescale, rho_hint=args.rho_hint,
                       max_phases=args.max_phases, seed=args.seed, derandomize=args.derandomize,
                       fixed_step_variant=args.fixed_step, trace_path=args.trace)


def _load(path: Path) -> ConeInstance:
    if not path.exists():
        raise ValidationError(f"实例文件 '{path}' 不存在", code="io")
    return load_instance(path)


def cmd_gen(args: argparse.Namespace) -> int:
    instance, _ = generate_planted(args.n, args.m, args.rho, args.seed)
    text = save_instance(instance, args.out)
    if args.out is None:
        print(text)
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    result = solve(instance, _solve_config(args))
    _emit(result.to_document(), args.out)
    return EXIT_OK if result.is_feasible else EXIT_EXHAUSTED


def cmd_round(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    result = john_ellipsoid(instance, _solve_config(args))
    _emit(result.to_document(), args.out)
    if not result.is_feasible:
        return EXIT_EXHAUSTED
    return EXIT_OK if result.roundedness.passed else EXIT_VERIFY_FAILED


def cmd_verify(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    certificate, log = certificate_from_document(_read_json(args.cert))
    report = verify_certificate(working_instance(instance, log), certificate)
    _emit(report.to_document(), None)
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


async def cmd_bench(args: argparse.Namespace) -> int:
    cells = bench_cells(args.ns, args.ms, args.rhos, args.phases, args.rescales, args.seeds, args.max_phases)
    for cell in cells:
        PhaseMode(cell.mode)
        RescaleKind(cell.rescale)
    rows = await bench_sweep_async(cells, args.workers)
    report = build_report(cells, rows, sum(r.wall_ms for r in rows) / 1000.0)
    report.write_csv(args.out)
    if args.report is not None:
        _emit(report.to_document(), args.report)
    return EXIT_OK


def cmd_volume(args: argparse.Namespace) -> int:
    instance = _load(args.instance)
    norm = None
    if args.norm is not None:
        doc = _read_json(args.norm)
        if "H" not in doc:
            raise ValidationError("范数文件缺少 H", code="malformed")
        norm = NormState(H=np.array(doc["H"], dtype=float))
    estimate = mc_volume_fraction(instance, norm, args.samples, args.seed)
    doc = estimate.to_document()
    if instance.planted is not None and norm is None:
        doc["planted_lower_bound"] = planted_volume_lower_bound(instance.planted, instance.n)
    _emit(doc, None)
    return EXIT_OK


_COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "round": cmd_round,
    "verify": cmd_verify,
    "volume-mc": cmd_volume,
}


async def main(argv: Optional[List[str]] = None) -> int:
    """主函数；返回进程退出码"""
    try:
        args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=str(args.log_level).upper(),
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        if args.command == "bench":
            return await cmd_bench(args)
        return _COMMANDS[args.command](args)
    except (ValidationError, ConfigurationError, ValueError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        print(f"求解器错误: {e}", file=sys.stderr)
        return EXIT_ERROR
