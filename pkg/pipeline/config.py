"""
Конфигурационный менеджер пайплайна разобучения.
Плоские ключи с точками, переопределение флагами CLI, валидация и настройка логирования.
"""

import json
import logging
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional

from .constants import DEFAULT_KL_DIRECTION, KL_DIRECTIONS, N_CLASSES, SUPPORTED_DATASETS
from .data_agent import DataConfig
from .interfaces import ConfigurationError, ValidationError
from .settings import SETTINGS
from .training_agent import TrainConfig
from .unlearning_agent import UnlearnConfig
from .utils import config_hash, load_json


@dataclass
class EvalConfig:
    """Конфигурация оценки"""
    kl_direction: str = DEFAULT_KL_DIRECTION


@dataclass
class RunConfig:
    """Полная конфигурация запуска"""
    dataset: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    forget_class: Optional[int] = None
    seed: int = 0
    out_dir: str = field(default_factory=lambda: str(SETTINGS.paths.output_dir))


SECTIONS = {
    "dataset": DataConfig,
    "train": TrainConfig,
    "unlearn": UnlearnConfig,
    "eval": EvalConfig,
}
TOP_LEVEL = {"forget_class": Optional[int], "seed": int, "out_dir": str}

# Имя ключа в файле -> имя поля dataclass
KEY_ALIASES = {"unlearn.lambda": "lam"}
# seed секций берётся из общего seed
DERIVED_FIELDS = {"train.seed", "unlearn.seed"}
# Не влияет на результат, в хэш не входит
HASH_EXCLUDED = {"out_dir"}


def _field_key(section: str, name: str) -> str:
    key = f"{section}.{name}"
    for alias, target in KEY_ALIASES.items():
        if alias.startswith(f"{section}.") and target == name:
            return alias
    return key


def _schema() -> Dict[str, Any]:
    """Плоский ключ -> тип значения."""
    schema: Dict[str, Any] = {}
    for section, cls in SECTIONS.items():
        hints = typing.get_type_hints(cls)
        for f in fields(cls):
            key = _field_key(section, f.name)
            if key not in DERIVED_FIELDS:
                schema[key] = hints[f.name]
    schema.update(TOP_LEVEL)
    return schema


def _coerce(key: str, value: Any, hint: Any) -> Any:
    args = typing.get_args(hint)
    if typing.get_origin(hint) is typing.Union and type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))

    try:
        if hint is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValueError(value)
        if hint is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if hint is float:
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if hint is str:
            return str(value)
    except (TypeError, ValueError):
        pass
    raise ConfigurationError(f"Некорректное значение '{key}': {value!r}")


def flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """{"train": {"iterations": 5}} -> {"train.iterations": 5}"""
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        full_key = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{full_key}."))
        else:
            flat[full_key] = value
    return flat


def to_flat(config: RunConfig) -> Dict[str, Any]:
    """RunConfig -> плоский словарь ключей с точками."""
    flat: Dict[str, Any] = {}
    for section in SECTIONS:
        section_obj = getattr(config, section)
        for f in fields(section_obj):
            key = _field_key(section, f.name)
            if key not in DERIVED_FIELDS:
                flat[key] = getattr(section_obj, f.name)
    for key in TOP_LEVEL:
        flat[key] = getattr(config, key)
    return flat


def from_flat(flat: Dict[str, Any]) -> RunConfig:
    """
    Плоский словарь -> RunConfig; общий seed копируется в train.seed и unlearn.seed.

    Raises:
        ConfigurationError: Неизвестный ключ или значение неверного типа
    """
    schema = _schema()
    unknown = sorted(set(flat) - set(schema))
    if unknown:
        raise ConfigurationError(f"Неизвестные ключи конфигурации: {unknown}")

    values = {key: _coerce(key, value, schema[key]) for key, value in flat.items()}
    sections: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    top: Dict[str, Any] = {}
    for key, value in values.items():
        if key in TOP_LEVEL:
            top[key] = value
            continue
        section, name = key.split(".", 1)
        sections[section][KEY_ALIASES.get(key, name)] = value

    config = RunConfig(**{name: SECTIONS[name](**kwargs) for name, kwargs in sections.items()}, **top)
    config.train.seed = config.seed
    config.unlearn.seed = config.seed
    return config


class ConfigurationManager:
    """
    Менеджер конфигурации запуска.

    Приоритет: значения по умолчанию < файл конфигурации < флаги CLI.
    Файл - JSON с плоскими ключами ("train.iterations": 300) или манифест
    запуска, в котором плоская конфигурация лежит под ключом "config".
    """

    def __init__(self, config_file: Optional[Path] = None,
                 overrides: Optional[Dict[str, Any]] = None):
        self.logger = logging.getLogger(__name__)
        self.config_file = Path(config_file) if config_file else None

        flat = to_flat(RunConfig())
        if self.config_file is not None:
            flat.update(self._load_file(self.config_file))
        if overrides:
            flat.update({k: v for k, v in overrides.items() if v is not None})

        self._config = from_flat(flat)
        self._flat = to_flat(self._config)

    def _load_file(self, path: Path) -> Dict[str, Any]:
        """
        Raises:
            FileNotFoundError: Файл не найден
            ConfigurationError: Файл не является JSON-объектом
        """
        if not path.exists():
            raise FileNotFoundError(f"Файл конфигурации не найден: {path}")
        try:
            data = load_json(path)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Ошибка разбора конфигурации {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"Конфигурация {path} должна быть JSON-объектом")

        if isinstance(data.get("config"), dict):
            self.logger.info(f"📋 Конфигурация взята из манифеста {path}")
            data = data["config"]
        return flatten(data)

    @property
    def config(self) -> RunConfig:
        return self._config

    def flat(self) -> Dict[str, Any]:
        return dict(self._flat)

    def config_hash(self) -> str:
        return config_hash({k: v for k, v in self._flat.items() if k not in HASH_EXCLUDED})

    def validate(self, require_forget_class: bool = False, check_data: bool = True) -> None:
        """
        Валидирует конфигурацию.

        Raises:
            ConfigurationError: Недопустимые значения
            FileNotFoundError: Файл данных не найден
        """
        config = self._config
        errors = []

        if config.dataset.name not in SUPPORTED_DATASETS:
            errors.append(f"dataset.name='{config.dataset.name}' (доступные: {', '.join(SUPPORTED_DATASETS)})")
        if config.eval.kl_direction not in KL_DIRECTIONS:
            errors.append(f"eval.kl_direction='{config.eval.kl_direction}' (доступные: {', '.join(KL_DIRECTIONS)})")
        if config.forget_class is not None and not 0 <= config.forget_class < N_CLASSES:
            errors.append(f"forget_class={config.forget_class} (нужно в [0, {N_CLASSES}))")
        for per_class in ("train_per_class", "val_per_class", "test_per_class"):
            value = getattr(config.dataset, per_class)
            if value is not None and value < 0:
                errors.append(f"dataset.{per_class}={value} (нужно >= 0)")

        for section in (config.train, config.unlearn):
            try:
                section.validate()
            except ValidationError as e:
                errors.append(str(e))

        if errors:
            raise ConfigurationError(f"Ошибки конфигурации: {'; '.join(errors)}")

        if require_forget_class and config.forget_class is None:
            raise ConfigurationError("Не задан забываемый класс (--forget-class)")

        if check_data and config.dataset.name in SUPPORTED_DATASETS:
            path = config.dataset.resolved_path()
            if not path.exists():
                raise FileNotFoundError(f"Файл данных не найден: {path}")

    def setup_logging(self, logs_dir: Optional[Path] = None) -> None:
        """Настраивает логирование согласно настройкам окружения"""
        from logging.handlers import RotatingFileHandler
        import datetime

        logs_dir = Path(logs_dir) if logs_dir else SETTINGS.paths.logs_dir
        logs_dir.mkdir(parents=True, exist_ok=True)

        # Кастомный форматтер для JSON логов
        class JSONFormatter(logging.Formatter):
            def format(self, record):
                log_entry = {
                    'timestamp': datetime.datetime.fromtimestamp(record.created).isoformat(),
                    'level': record.levelname,
                    'logger': record.name,
                    'message': record.getMessage(),
                    'module': record.module,
                    'function': record.funcName,
                    'line': record.lineno
                }
                if record.exc_info:
                    log_entry['exception'] = self.formatException(record.exc_info)
                return json.dumps(log_entry, ensure_ascii=False)

        root_logger = logging.getLogger()
        root_logger.setLevel(getattr(logging, SETTINGS.logging.level.upper(), logging.INFO))

        for handler in root_logger.handlers[:]:
            root_logger.removeHandler(handler)

        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        ))
        root_logger.addHandler(console_handler)

        file_handler = RotatingFileHandler(
            logs_dir / 'pipeline.log',
            maxBytes=SETTINGS.logging.rotation_mb * 1024 * 1024,
            backupCount=SETTINGS.logging.backup_count,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(JSONFormatter())
        root_logger.addHandler(file_handler)

        if SETTINGS.logging.separate_error_log:
            error_handler = RotatingFileHandler(
                logs_dir / 'errors.log',
                maxBytes=5 * 1024 * 1024,  # 5MB
                backupCount=3,
                encoding='utf-8'
            )
            error_handler.setLevel(logging.ERROR)
            error_handler.setFormatter(JSONFormatter())
            root_logger.addHandler(error_handler)
