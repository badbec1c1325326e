import numpy as np

from ..exceptions import ConfigurationError
from .base import BasePhase, OutcomeKind, PhaseConfig, PhaseFactory, PhaseMode, PhaseOutcome


@PhaseFactory.register
class ClassicalPerceptronPhase(BasePhase):
    """
    经典感知机：每步加上违反最严重的行（下标最小者优先）。

    x_t = Σν_iA_i，所以 λ = ν/t 的证据范数就是 ‖x_t‖/t。只适用于 H = I。
    """

    name = PhaseMode.CLASSICAL.value

    def execute(self, instance, cfg: PhaseConfig, norm, recorder) -> PhaseOutcome:
        if not norm.is_identity:
            raise ConfigurationError("经典感知机只支持欧氏范数 (H = I)")
        rows = instance.rows
        budget = cfg.iteration_budget(instance.m)
        x = np.zeros(instance.n)
        visits = np.zeros(instance.m)

        for t in range(1, budget + 1):
            i = int(np.argmin(rows @ x))
            x = x + rows[i]
            visits[i] += 1.0
            evidence = float(np.linalg.norm(x)) / t
            if recorder is not None:
                recorder.record(phase=cfg.phase_index, iter=t, mode=self.name, norm_y_dual=evidence)

            if float(np.min(rows @ x)) > 0.0:
                return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=t, x=x, steps=t)
            if evidence <= cfg.delta:
                return self._evidence(visits / t, iterations=t, steps=t)

        self.logger.warning(f"经典感知机在 {budget} 次迭代内没有终止")
        return PhaseOutcome(kind=OutcomeKind.EXHAUSTED, iterations=budget, x=x, steps=budget)
