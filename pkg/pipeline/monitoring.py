# pipeline/monitoring.py

import functools
import logging
import threading
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import psutil


@dataclass
class CommandMetrics:
    """Счётчики одной команды CLI"""
    name: str
    duration: float
    success: bool
    circuits_simulated: int
    gradient_calls: int


@dataclass
class PipelineMetrics:
    """Сводка по всем командам процесса"""
    commands_run: int
    failed_commands: int
    circuits_simulated: int
    gradient_calls: int
    current_command_time: Optional[float]
    peak_rss_mb: float


class PerformanceMonitor:
    """
    Счётчики вычислительной нагрузки: сколько схем просимулировано,
    сколько раз считался градиент, время команд и пиковая RSS процесса.

    Счётчики пополняются из circuit.forward_batch и gradients.*;
    команды CLI оборачиваются декоратором log_performance_metrics.
    """

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self._process = psutil.Process()
        self.lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        with self.lock:
            self.commands: List[CommandMetrics] = []
            self.circuits_simulated = 0
            self.gradient_calls = 0
            self.peak_rss_mb = 0.0
            self._command: Optional[str] = None
            self._command_start: Optional[float] = None
            self._circuits_at_start = 0
            self._gradients_at_start = 0

    def start_command(self, name: str) -> None:
        with self.lock:
            self._command = name
            self._command_start = time.perf_counter()
            self._circuits_at_start = self.circuits_simulated
            self._gradients_at_start = self.gradient_calls
        self.sample_memory()

    def end_command(self, success: bool = True) -> Optional[CommandMetrics]:
        """Закрывает текущую команду; счётчики команды - приращения с её начала"""
        self.sample_memory()
        with self.lock:
            if self._command_start is None:
                return None
            metrics = CommandMetrics(
                name=self._command or "command",
                duration=time.perf_counter() - self._command_start,
                success=success,
                circuits_simulated=self.circuits_simulated - self._circuits_at_start,
                gradient_calls=self.gradient_calls - self._gradients_at_start,
            )
            self.commands.append(metrics)
            self._command, self._command_start = None, None
            return metrics

    def record_circuits(self, count: int) -> None:
        """Учитывает count просимулированных схем"""
        with self.lock:
            self.circuits_simulated += int(count)

    def record_gradient_call(self) -> None:
        with self.lock:
            self.gradient_calls += 1

    def sample_memory(self) -> float:
        """RSS процесса в МБ; обновляет пик"""
        try:
            rss_mb = self._process.memory_info().rss / 1024 / 1024
        except psutil.Error as e:
            self.logger.debug(f"Не удалось получить RSS: {e}")
            return self.peak_rss_mb
        with self.lock:
            self.peak_rss_mb = max(self.peak_rss_mb, rss_mb)
        return rss_mb

    def get_pipeline_metrics(self) -> PipelineMetrics:
        with self.lock:
            return PipelineMetrics(
                commands_run=len(self.commands),
                failed_commands=sum(not c.success for c in self.commands),
                circuits_simulated=self.circuits_simulated,
                gradient_calls=self.gradient_calls,
                current_command_time=(
                    time.perf_counter() - self._command_start if self._command_start is not None else None
                ),
                peak_rss_mb=self.peak_rss_mb,
            )

    def summary(self) -> Dict[str, Any]:
        """Сводка для manifest.json: текущая команда и итог процесса"""
        metrics = self.get_pipeline_metrics()
        return {
            "circuits_simulated": metrics.circuits_simulated,
            "gradient_calls": metrics.gradient_calls,
            "command_time": None if metrics.current_command_time is None
            else round(metrics.current_command_time, 3),
            "peak_rss_mb": round(metrics.peak_rss_mb, 1),
            "commands": [asdict(c) for c in self.commands],
        }

    def log_command(self, metrics: CommandMetrics) -> None:
        status = "✅" if metrics.success else "❌"
        self.logger.info(
            f"📊 {status} {metrics.name}: схем {metrics.circuits_simulated}, "
            f"градиентов {metrics.gradient_calls}, {metrics.duration:.2f}с, "
            f"пик RSS {self.peak_rss_mb:.1f} МБ"
        )


# Глобальный монитор производительности
PERFORMANCE_MONITOR = PerformanceMonitor()


def log_performance_metrics(func):
    """Декоратор команды CLI: открывает и закрывает замер, логирует итог"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        PERFORMANCE_MONITOR.start_command(func.__name__)
        success = False
        try:
            result = func(*args, **kwargs)
            success = True
            return result
        finally:
            metrics = PERFORMANCE_MONITOR.end_command(success=success)
            if metrics is not None:
                PERFORMANCE_MONITOR.log_command(metrics)
    return wrapper
