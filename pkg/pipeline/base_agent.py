# pipeline/base_agent.py

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, List, Optional

from .interfaces import PipelineError
from .monitoring import PERFORMANCE_MONITOR

# Типизированные ошибки, которые CLI переводит в коды выхода
PASSTHROUGH_ERRORS = (PipelineError, OSError, ValueError, ArithmeticError)

LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


@dataclass
class OperationRecord:
    """Одна завершённая операция агента"""
    name: str
    duration: float
    circuits_simulated: int
    success: bool


class BaseAgent(ABC):
    """
    Базовый класс агентов пайплайна (данные, обучение, разобучение, оценка, абляции, экспорт).

    Каждая операция открывается start_operation и закрывается end_operation;
    запись операции хранит длительность и число схем, просимулированных за это время.
    """

    def __init__(self, name: Optional[str] = None):
        self.name = name or self.__class__.__name__
        self.logger = logging.getLogger(f"pipeline.{self.name}")

        self.operations: List[OperationRecord] = []
        self._current: Optional[str] = None
        self._started_at: Optional[float] = None
        self._circuits_at_start = 0

        self._error_count = 0
        self._last_error: Optional[Exception] = None

    def start_operation(self, operation_name: str = "operation") -> None:
        self._current = operation_name
        self._started_at = time.perf_counter()
        self._circuits_at_start = PERFORMANCE_MONITOR.circuits_simulated
        self.logger.info(f"🔄 Начинаю {operation_name}...")

    def end_operation(self, operation_name: str = "operation", success: bool = True) -> float:
        """Возвращает длительность операции в секундах"""
        if self._started_at is None:
            self.logger.warning("⚠️ end_operation вызван без start_operation")
            return 0.0

        duration = time.perf_counter() - self._started_at
        circuits = PERFORMANCE_MONITOR.circuits_simulated - self._circuits_at_start
        self.operations.append(OperationRecord(operation_name, duration, circuits, success))

        if success:
            self.logger.info(f"✅ {operation_name} завершена за {duration:.2f}с (схем: {circuits})")
        else:
            self.logger.error(f"❌ {operation_name} завершена с ошибкой за {duration:.2f}с")

        self._current, self._started_at = None, None
        return duration

    @property
    def circuits_simulated(self) -> int:
        return sum(op.circuits_simulated for op in self.operations)

    def handle_error(self, error: Exception, operation_name: str = "operation",
                     reraise: bool = True) -> None:
        """
        Логирует ошибку операции.

        Ошибки пайплайна, ввода-вывода, значений и арифметики пробрасываются
        без изменений: по их типу CLI выбирает код выхода. Прочие оборачиваются
        в PipelineError.
        """
        self._last_error = error
        self._error_count += 1
        self.logger.error(f"❌ Ошибка в {operation_name}: {type(error).__name__}: {error}")

        if not reraise:
            return
        if isinstance(error, PASSTHROUGH_ERRORS):
            raise error
        raise PipelineError(f"Ошибка в {self.name}.{operation_name}: {error}") from error

    def log_with_emoji(self, level: str, emoji: str, message: str) -> None:
        self.logger.log(LOG_LEVELS.get(level, logging.INFO), f"{emoji} {message}")

    @abstractmethod
    def run(self, *args, **kwargs) -> Any:
        """Основная операция агента"""

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(name='{self.name}', "
            f"operations={len(self.operations)}, errors={self._error_count})"
        )
