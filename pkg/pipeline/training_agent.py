# pipeline/training_agent.py

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from .base_agent import BaseAgent
from .circuit import CircuitSpec, forward_batch, forward_grid, init_params, softmax
from .constants import (
    DEFAULT_ADAM_BETA1,
    DEFAULT_ADAM_BETA2,
    DEFAULT_ADAM_EPS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_INIT_SIGMA,
    DEFAULT_ITERATIONS,
    DEFAULT_PEAK_LR,
    DEFAULT_TRAIN_LOG_EVERY,
    LOG_FLOOR,
)
from .data_agent import Dataset, SplitPartition
from .gradients import chain_rule_gradient, parameter_shift_gradient
from .interfaces import GradientMode, NumericError, ValidationError
from .optim import AdamState, adam_step, cosine_lr
from .settings import SETTINGS
from .validation_mixin import ValidationMixin


@dataclass
class TrainConfig:
    """Гиперпараметры обучения классификатора"""
    iterations: int = DEFAULT_ITERATIONS
    batch_size: int = DEFAULT_BATCH_SIZE
    peak_lr: float = DEFAULT_PEAK_LR
    beta1: float = DEFAULT_ADAM_BETA1
    beta2: float = DEFAULT_ADAM_BETA2
    eps: float = DEFAULT_ADAM_EPS
    init_sigma: float = DEFAULT_INIT_SIGMA
    seed: int = 0
    gradient_mode: str = GradientMode.SHIFT.value
    log_every: int = DEFAULT_TRAIN_LOG_EVERY

    def validate(self) -> None:
        errors = []
        if self.iterations < 1:
            errors.append(f"iterations={self.iterations} (нужно >= 1)")
        if self.batch_size < 1:
            errors.append(f"batch_size={self.batch_size} (нужно >= 1)")
        if not self.peak_lr > 0:
            errors.append(f"peak_lr={self.peak_lr} (нужно > 0)")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            errors.append(f"beta1={self.beta1}, beta2={self.beta2} (нужно в [0, 1))")
        if not self.eps > 0:
            errors.append(f"eps={self.eps} (нужно > 0)")
        if self.init_sigma < 0:
            errors.append(f"init_sigma={self.init_sigma} (нужно >= 0)")
        if self.gradient_mode not in {m.value for m in GradientMode}:
            errors.append(f"gradient_mode='{self.gradient_mode}'")
        if errors:
            raise ValidationError(f"Некорректная конфигурация обучения: {'; '.join(errors)}")


@dataclass
class HistoryEntry:
    """Одна итерация: потеря на пакете до шага и на валидации после шага"""
    iteration: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainedModel:
    """Параметры с лучшей валидационной потерей и история обучения"""
    params: np.ndarray
    history: List[HistoryEntry]
    config: TrainConfig
    best_iteration: int
    exclude_class: Optional[int] = None

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_iteration].val_loss

    def history_rows(self) -> List[Dict[str, Any]]:
        return [asdict(entry) for entry in self.history]


def cross_entropy_from_probs(probs: np.ndarray, y: np.ndarray) -> float:
    """Среднее -log p(y_i|x_i) с полом LOG_FLOOR."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if probs.shape[0] == 0:
        raise ValidationError("Пустой пакет")
    picked = probs[np.arange(y.shape[0]), y]
    return float(np.mean(-np.log(np.maximum(picked, LOG_FLOOR))))


def cross_entropy_loss(spec: CircuitSpec, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    """
    Кросс-энтропия классификатора на пакете.

    Raises:
        ValidationError: Пустой пакет
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("Пустой пакет")
    return cross_entropy_from_probs(softmax(forward_batch(spec, params, X)), y)


def batched_cross_entropy(spec: CircuitSpec, X: np.ndarray, y: np.ndarray):
    """Функция (M, n_params) -> (M,) потерь на одном пакете для всех наборов параметров."""
    y = np.asarray(y, dtype=np.int64)
    rows = np.arange(y.shape[0])

    def loss(param_stack: np.ndarray) -> np.ndarray:
        probs = softmax(forward_grid(spec, param_stack, X))  # (M, B, K)
        picked = probs[:, rows, y]
        return np.mean(-np.log(np.maximum(picked, LOG_FLOOR)), axis=1)

    return loss


def cross_entropy_gradient(spec: CircuitSpec, params: np.ndarray, X: np.ndarray, y: np.ndarray,
                           mode: str = GradientMode.SHIFT.value,
                           workers: Optional[int] = None) -> np.ndarray:
    """
    Градиент кросс-энтропии.

    shift: правило сдвига прямо по функции потерь.
    exact: сдвиг по логитам и dL/dlogit = (p - onehot)/B.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)

    if mode == GradientMode.EXACT.value:
        onehot = np.eye(spec.n_classes)[y]

        def upstream(logits: np.ndarray) -> np.ndarray:
            return (softmax(logits) - onehot) / y.shape[0]

        return chain_rule_gradient(spec, params, X, upstream)

    n_workers = workers if workers is not None else SETTINGS.processing.gradient_workers
    if n_workers > 1:
        return parameter_shift_gradient(
            lambda w: cross_entropy_loss(spec, w, X, y), params, workers=n_workers
        )
    return parameter_shift_gradient(batched_cross_entropy(spec, X, y), params, batched=True)


class EpochSampler:
    """
    Пакеты без возвращения внутри эпохи.

    Когда в текущей перестановке осталось меньше batch_size индексов,
    остаток отбрасывается и пул перемешивается заново.
    """

    def __init__(self, pool: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.pool = np.asarray(pool, dtype=np.int64)
        if self.pool.size == 0:
            raise ValidationError("Пустой обучающий набор")
        self.batch_size = min(batch_size, self.pool.size)
        self.rng = rng
        self._order = self.rng.permutation(self.pool)
        self._cursor = 0

    def next(self) -> np.ndarray:
        if self._cursor + self.batch_size > self._order.size:
            self._order = self.rng.permutation(self.pool)
            self._cursor = 0
        batch = self._order[self._cursor:self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return batch


def _without_class(idx: np.ndarray, y: np.ndarray, label: Optional[int]) -> np.ndarray:
    if label is None:
        return idx
    return idx[y[idx] != label]


def train(spec: CircuitSpec, dataset: Dataset, partition: SplitPartition, config: TrainConfig,
          exclude_class: Optional[int] = None, logger=None) -> TrainedModel:
    """
    Обучение Adam с косинусным расписанием и выбором лучших по валидации параметров.

    История итерации t: потеря пакета до шага, потеря валидации после шага.
    При равных валидационных потерях выигрывает более ранняя итерация.
    """
    config.validate()
    train_idx = _without_class(partition.train, dataset.y, exclude_class)
    val_idx = _without_class(partition.val, dataset.y, exclude_class)
    if val_idx.size == 0:
        raise ValidationError("Пустой валидационный набор")
    X_val, y_val = dataset.subset(val_idx)

    rng = np.random.default_rng(config.seed)
    params = init_params(config.seed, config.init_sigma, spec.n_params)
    sampler = EpochSampler(train_idx, config.batch_size, rng)
    state = AdamState.zeros(spec.n_params, config.beta1, config.beta2, config.eps)

    history: List[HistoryEntry] = []
    best_params, best_iteration, best_val = params.copy(), 0, math.inf

    for iteration in range(config.iterations):
        lr = cosine_lr(iteration, config.iterations, config.peak_lr)
        X_batch, y_batch = dataset.subset(sampler.next())

        train_loss = cross_entropy_loss(spec, params, X_batch, y_batch)
        grad = cross_entropy_gradient(spec, params, X_batch, y_batch, config.gradient_mode)
        state, params = adam_step(state, params, grad, lr)

        val_loss = cross_entropy_loss(spec, params, X_val, y_val)
        if not math.isfinite(val_loss):
            raise NumericError(f"Нечисловая валидационная потеря на итерации {iteration}")
        history.append(HistoryEntry(iteration, train_loss, val_loss, lr))

        if val_loss < best_val:
            best_val, best_iteration, best_params = val_loss, iteration, params.copy()

        if logger is not None and config.log_every > 0 and (
                iteration % config.log_every == 0 or iteration == config.iterations - 1):
            logger.info(
                f"📈 Итерация {iteration + 1}/{config.iterations}: lr={lr:.4f}, "
                f"train={train_loss:.4f}, val={val_loss:.4f}"
            )

    return TrainedModel(best_params, history, config, best_iteration, exclude_class)


def train_gold(spec: CircuitSpec, dataset: Dataset, partition: SplitPartition, config: TrainConfig,
               forget_class: Optional[int] = None, logger=None) -> TrainedModel:
    """
    Эталонная модель: то же обучение без образцов забываемого класса в train и val.

    Инициализация свежая, с тем же seed, что и у исходной модели.
    """
    label = forget_class if forget_class is not None else partition.forget_class
    if label is None:
        raise ValidationError("Для эталонной модели нужен забываемый класс")
    return train(spec, dataset, partition, config, exclude_class=int(label), logger=logger)


class TrainingAgent(BaseAgent, ValidationMixin):
    """
    Агент обучения классификатора и эталонной (gold) модели.
    """

    def __init__(self, spec: CircuitSpec):
        BaseAgent.__init__(self, name="TrainingAgent")
        ValidationMixin.__init__(self)
        self.spec = spec

    def run(self, dataset: Dataset, partition: SplitPartition, config: TrainConfig,
            gold_forget_class: Optional[int] = None) -> TrainedModel:
        """
        Args:
            gold_forget_class: Если задан, обучается эталонная модель без этого класса
        """
        operation_name = "обучение gold модели" if gold_forget_class is not None else "обучение модели"
        self.start_operation(operation_name)
        try:
            if gold_forget_class is not None:
                self.validate_forget_class(gold_forget_class, self.spec.n_classes)
                model = train_gold(self.spec, dataset, partition, config, gold_forget_class, logger=self.logger)
            else:
                model = train(self.spec, dataset, partition, config, logger=self.logger)

            self.log_with_emoji(
                "info", "🏁",
                f"Лучшая итерация {model.best_iteration}, val={model.best_val_loss:.4f}"
            )
            self.end_operation(operation_name, success=True)
            return model
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
