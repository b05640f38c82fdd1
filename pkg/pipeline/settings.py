"""
Настройки пайплайна.
Все параметры, которые могут изменяться между окружениями.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

from .constants import (
    DEFAULT_ABLATION_WORKERS,
    DEFAULT_GRADIENT_WORKERS,
    DEFAULT_LOG_BACKUP_COUNT,
    DEFAULT_LOG_LEVEL,
    DEFAULT_LOG_ROTATION_MB,
    DEFAULT_SIM_CHUNK_ROWS,
)


@dataclass
class ProcessingSettings:
    """Настройки вычислений"""
    # Потоки для сдвинутых вычислений градиента (1 = без пула)
    gradient_workers: int = field(default_factory=lambda: int(os.getenv("GRADIENT_WORKERS", str(DEFAULT_GRADIENT_WORKERS))))
    # Максимум схем в одном векторизованном прогоне
    sim_chunk_rows: int = field(default_factory=lambda: int(os.getenv("SIM_CHUNK_ROWS", str(DEFAULT_SIM_CHUNK_ROWS))))
    # Процессы для абляций
    ablation_workers: int = field(default_factory=lambda: int(os.getenv("ABLATION_WORKERS", str(DEFAULT_ABLATION_WORKERS))))


@dataclass
class PathSettings:
    """Настройки путей"""
    data_dir: Path = field(default_factory=lambda: Path(os.getenv("DATA_DIR", "data/raw")))
    output_dir: Path = field(default_factory=lambda: Path(os.getenv("OUTPUT_DIR", "runs")))
    logs_dir: Path = field(default_factory=lambda: Path(os.getenv("LOGS_DIR", "logs")))


@dataclass
class LoggingSettings:
    """Настройки логирования"""
    level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", DEFAULT_LOG_LEVEL))
    rotation_mb: int = field(default_factory=lambda: int(os.getenv("LOG_ROTATION_MB", str(DEFAULT_LOG_ROTATION_MB))))
    backup_count: int = field(default_factory=lambda: int(os.getenv("LOG_BACKUP_COUNT", str(DEFAULT_LOG_BACKUP_COUNT))))
    separate_error_log: bool = field(default_factory=lambda: os.getenv("SEPARATE_ERROR_LOG", "true").lower() == "true")


class Settings:
    """Центральный класс для всех настроек"""

    def __init__(self):
        self.processing = ProcessingSettings()
        self.paths = PathSettings()
        self.logging = LoggingSettings()

    def validate(self) -> None:
        """Валидирует настройки"""
        errors = []

        if self.processing.gradient_workers <= 0:
            errors.append("GRADIENT_WORKERS должен быть больше 0")

        if self.processing.sim_chunk_rows <= 0:
            errors.append("SIM_CHUNK_ROWS должен быть больше 0")

        if self.processing.ablation_workers <= 0:
            errors.append("ABLATION_WORKERS должен быть больше 0")

        if self.logging.rotation_mb <= 0:
            errors.append("LOG_ROTATION_MB должен быть больше 0")

        if errors:
            raise ValueError(f"Ошибки конфигурации: {'; '.join(errors)}")


# Глобальный экземпляр настроек
SETTINGS = Settings()
