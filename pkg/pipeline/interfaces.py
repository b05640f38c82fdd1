"""
Общие перечисления и иерархия исключений пайплайна.
"""

from enum import Enum


class ModelStage(Enum):
    """Стадии, на которых сохраняются параметры модели"""
    ORIGINAL = "original"
    GOLD = "gold"
    UNLEARNED = "unlearned"
    UNLEARNED_UNIFORM = "unlearned_uniform"
    EVAL = "eval"
    ABLATION = "ablation"


class TargetSource(Enum):
    """Способ построения целевого распределения забывания"""
    SIMILARITY = "similarity"
    UNIFORM = "uniform"


class GradientMode(Enum):
    """Режим вычисления градиента"""
    SHIFT = "shift"  # сдвиг ±π/2 прямо по скалярной функции
    EXACT = "exact"  # сдвиг по логитам + аналитическая цепочка (диагностика)


# Исключения

class PipelineError(Exception):
    """Базовое исключение пайплайна"""
    pass


class ValidationError(PipelineError, ValueError):
    """Некорректный аргумент"""
    pass


class ConfigurationError(PipelineError):
    """Ошибка конфигурации"""
    pass


class DataFormatError(PipelineError, ValueError):
    """Ошибка формата или содержимого данных"""
    pass


class CheckpointError(PipelineError):
    """Отсутствующий или повреждённый checkpoint"""
    pass


class NumericError(PipelineError, ArithmeticError):
    """Нечисловое значение или нарушение численного инварианта"""
    pass
