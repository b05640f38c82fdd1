# pipeline/ablation_agent.py

"""
Абляции фазы разобучения.

Одна ось за запуск: beta, alpha, lambda, anchor_fraction или classwise.
Все настройки используют одну и ту же исходную модель; настройки
независимы и могут выполняться в отдельных процессах.
"""

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .base_agent import BaseAgent
from .circuit import CircuitSpec
from .constants import ABLATION_GRID
from .data_agent import Dataset, SplitPartition, partition_forget_anchor
from .evaluation_agent import accuracy, confusion_matrix, mean_forget_prob, retained_accuracy
from .interfaces import ValidationError
from .settings import SETTINGS
from .unlearning_agent import UnlearnConfig, unlearn
from .validation_mixin import ValidationMixin

# Ось -> поле UnlearnConfig
AXIS_FIELDS = {
    "beta": "beta",
    "alpha": "alpha",
    "lambda": "lam",
    "anchor_fraction": "anchor_fraction",
}


@dataclass(frozen=True)
class AblationSetting:
    """Одна точка оси абляции"""
    axis: str
    value: float
    forget_class: int
    unlearn: UnlearnConfig

    @property
    def label(self) -> str:
        if self.axis == "classwise":
            return f"class_{int(self.value)}"
        return f"{self.axis}_{self.value:g}"


@dataclass
class AblationRow:
    """Строка таблицы абляции"""
    setting: str
    forget_class: int
    test_acc_before: float
    test_acc_after: float
    retained_acc_after: float
    p_f_before: Optional[float]
    p_f_after: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        def r(v):
            return None if v is None else round(float(v), 6)

        return {
            "setting": self.setting,
            "forget_class": self.forget_class,
            "test_acc_before": r(self.test_acc_before),
            "test_acc_after": r(self.test_acc_after),
            "retained_acc_after": r(self.retained_acc_after),
            "p_f_before": r(self.p_f_before),
            "p_f_after": r(self.p_f_after),
        }


@dataclass
class SettingOutcome:
    setting: AblationSetting
    row: AblationRow
    params: np.ndarray
    objective_history: List[float]


def sweep_settings(axis: str, base: UnlearnConfig, forget_class: Optional[int],
                   values: Optional[Sequence[float]] = None) -> List[AblationSetting]:
    """
    Настройки одной оси; остальные гиперпараметры берутся из base.

    Raises:
        ValidationError: Неизвестная ось или не задан забываемый класс
    """
    if axis not in ABLATION_GRID:
        raise ValidationError(f"Неизвестная ось абляции '{axis}'. Доступные: {', '.join(ABLATION_GRID)}")
    values = list(values) if values is not None else list(ABLATION_GRID[axis])
    if not values:
        raise ValidationError(f"Пустой список значений для оси '{axis}'")

    settings = []
    for value in values:
        if axis == "classwise":
            settings.append(AblationSetting(axis, int(value), int(value), base))
            continue
        if forget_class is None:
            raise ValidationError("Не задан забываемый класс (--forget-class)")
        config = replace(base, **{AXIS_FIELDS[axis]: float(value)})
        config.validate()
        settings.append(AblationSetting(axis, float(value), int(forget_class), config))
    return settings


def run_setting(spec: CircuitSpec, w_orig: np.ndarray, dataset: Dataset,
                partition: SplitPartition, setting: AblationSetting) -> SettingOutcome:
    """Разобучение одной настройки и метрики до/после на тестовой выборке."""
    f = setting.forget_class
    local = partition_forget_anchor(partition, dataset, f, setting.unlearn.anchor_fraction,
                                    seed=setting.unlearn.seed)
    result = unlearn(spec, w_orig, dataset, local, setting.unlearn)

    X_test, y_test = dataset.subset(partition.test)
    cm_before = confusion_matrix(spec, w_orig, X_test, y_test)
    cm_after = confusion_matrix(spec, result.params, X_test, y_test)
    X_f = X_test[y_test == f]
    p_f_before = mean_forget_prob(spec, w_orig, X_f, f) if X_f.shape[0] else None
    p_f_after = mean_forget_prob(spec, result.params, X_f, f) if X_f.shape[0] else None

    row = AblationRow(
        setting=setting.label,
        forget_class=f,
        test_acc_before=accuracy(cm_before),
        test_acc_after=accuracy(cm_after),
        retained_acc_after=retained_accuracy(cm_after, f),
        p_f_before=p_f_before,
        p_f_after=p_f_after,
    )
    return SettingOutcome(setting, row, result.params, result.objective_history)


def _run_setting_job(args: Tuple) -> SettingOutcome:
    return run_setting(*args)


class AblationAgent(BaseAgent, ValidationMixin):
    """
    Агент абляций.

    При workers > 1 настройки считаются в пуле процессов; порядок строк
    совпадает с порядком значений оси.
    """

    def __init__(self, spec: CircuitSpec, workers: Optional[int] = None):
        BaseAgent.__init__(self, name="AblationAgent")
        ValidationMixin.__init__(self)
        self.spec = spec
        self.workers = workers if workers is not None else SETTINGS.processing.ablation_workers
        if self.workers < 1:
            raise ValidationError(f"workers должно быть >= 1, получено {self.workers}")

    def _run_parallel(self, jobs: List[Tuple]) -> List[SettingOutcome]:
        outcomes: List[Optional[SettingOutcome]] = [None] * len(jobs)
        with ProcessPoolExecutor(max_workers=min(self.workers, len(jobs))) as executor:
            future_to_index = {executor.submit(_run_setting_job, job): i for i, job in enumerate(jobs)}
            for future in as_completed(future_to_index):
                i = future_to_index[future]
                outcomes[i] = future.result()
                self.log_with_emoji("info", "✅", f"Настройка {outcomes[i].row.setting} завершена")
        return outcomes

    def run(self, axis: str, w_orig: np.ndarray, dataset: Dataset, partition: SplitPartition,
            base_config: UnlearnConfig, forget_class: Optional[int] = None,
            values: Optional[Sequence[float]] = None) -> List[SettingOutcome]:
        operation_name = f"абляция по оси {axis}"
        self.start_operation(operation_name)
        try:
            w_orig = self.validate_param_vector(w_orig, self.spec.n_params)
            if forget_class is not None:
                forget_class = self.validate_forget_class(forget_class, self.spec.n_classes)
            settings = sweep_settings(axis, base_config, forget_class, values)
            for setting in settings:
                self.validate_forget_class(setting.forget_class, self.spec.n_classes)
            self.log_with_emoji("info", "🧪", f"{len(settings)} настроек, процессов: {self.workers}")

            jobs = [(self.spec, w_orig, dataset, partition, s) for s in settings]
            if self.workers > 1 and len(jobs) > 1:
                outcomes = self._run_parallel(jobs)
            else:
                outcomes = []
                for job in jobs:
                    outcomes.append(_run_setting_job(job))
                    self.log_with_emoji("info", "✅", f"Настройка {outcomes[-1].row.setting} завершена")

            for outcome in outcomes:
                row = outcome.row
                self.log_with_emoji(
                    "info", "📊",
                    f"{row.setting}: acc {row.test_acc_before:.3f} → {row.test_acc_after:.3f}, "
                    f"retained {row.retained_acc_after:.3f}, p_f → "
                    f"{row.p_f_after if row.p_f_after is None else round(row.p_f_after, 4)}"
                )
            self.end_operation(operation_name, success=True)
            return outcomes
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
