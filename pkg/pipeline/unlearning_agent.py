# pipeline/unlearning_agent.py

"""
Разобучение класса по целевому распределению.

Цель J(w) максимизируется градиентным подъёмом:

    J(w) = mean_F Σ_k q_k log p_w(k|x)
         + α · mean_A Σ_k p_ref(k|x) log p_w(k|x)
         - λ · ||w - w_orig||²

q - целевое распределение с q_f = 0, p_ref - кэш предсказаний исходной модели на якорях.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .base_agent import BaseAgent
from .circuit import CircuitSpec, forward_grid, predict_proba_batch, softmax
from .constants import (
    DEFAULT_ADAM_BETA1,
    DEFAULT_ADAM_BETA2,
    DEFAULT_ADAM_EPS,
    DEFAULT_ALPHA,
    DEFAULT_ANCHOR_FRACTION,
    DEFAULT_BETA,
    DEFAULT_CALIBRATION_FRACTION,
    DEFAULT_LAMBDA,
    DEFAULT_UNLEARN_LOG_EVERY,
    DEFAULT_UNLEARN_LR,
    DEFAULT_UNLEARN_STEPS,
    LOG_FLOOR,
    N_CLASSES,
)
from .data_agent import Dataset, SplitPartition, calibration_subset
from .gradients import chain_rule_gradient, parameter_shift_gradient
from .interfaces import GradientMode, NumericError, TargetSource, ValidationError
from .optim import AdamState, adam_step
from .settings import SETTINGS
from .training_agent import EpochSampler
from .validation_mixin import ValidationMixin


@dataclass
class UnlearnConfig:
    """Гиперпараметры разобучения"""
    alpha: float = DEFAULT_ALPHA
    lam: float = DEFAULT_LAMBDA
    beta: float = DEFAULT_BETA
    steps: int = DEFAULT_UNLEARN_STEPS
    lr: float = DEFAULT_UNLEARN_LR
    forget_batch_size: Optional[int] = None  # None = весь F на каждом шаге
    anchor_batch_size: Optional[int] = None  # None = весь A на каждом шаге
    calibration_fraction: float = DEFAULT_CALIBRATION_FRACTION
    anchor_fraction: float = DEFAULT_ANCHOR_FRACTION
    target_source: str = TargetSource.SIMILARITY.value
    gradient_mode: str = GradientMode.SHIFT.value
    beta1: float = DEFAULT_ADAM_BETA1
    beta2: float = DEFAULT_ADAM_BETA2
    eps: float = DEFAULT_ADAM_EPS
    seed: int = 0
    log_every: int = DEFAULT_UNLEARN_LOG_EVERY

    def validate(self) -> None:
        errors = []
        if self.alpha < 0:
            errors.append(f"alpha={self.alpha} (нужно >= 0)")
        if self.lam < 0:
            errors.append(f"lambda={self.lam} (нужно >= 0)")
        if not self.beta > 0:
            errors.append(f"beta={self.beta} (нужно > 0)")
        if self.steps < 0:
            errors.append(f"steps={self.steps} (нужно >= 0)")
        if not self.lr > 0:
            errors.append(f"lr={self.lr} (нужно > 0)")
        for name in ("forget_batch_size", "anchor_batch_size"):
            value = getattr(self, name)
            if value is not None and value < 1:
                errors.append(f"{name}={value} (нужно >= 1)")
        for name in ("calibration_fraction", "anchor_fraction"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                errors.append(f"{name}={value} (нужно в (0, 1])")
        if self.target_source not in {s.value for s in TargetSource}:
            errors.append(f"target_source='{self.target_source}'")
        if self.gradient_mode not in {m.value for m in GradientMode}:
            errors.append(f"gradient_mode='{self.gradient_mode}'")
        if errors:
            raise ValidationError(f"Некорректная конфигурация разобучения: {'; '.join(errors)}")


@dataclass(frozen=True)
class ForgetTarget:
    """Целевое распределение q на K классах с q_f = 0"""
    q: np.ndarray
    forget_class: int
    beta: float
    source: TargetSource

    def validate(self, tolerance: float = 1e-12) -> None:
        if self.q[self.forget_class] != 0.0:
            raise NumericError(f"q[{self.forget_class}] = {self.q[self.forget_class]} вместо 0")
        if np.any(self.q < 0) or abs(self.q.sum() - 1.0) > tolerance:
            raise NumericError(f"q не лежит на симплексе: {self.q.tolist()}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q": self.q.tolist(),
            "forget_class": self.forget_class,
            "beta": self.beta,
            "source": self.source.value,
        }


@dataclass(frozen=True)
class AnchorRefs:
    """Кэш p_ref(·|x) исходной модели для каждого якоря; не изменяется"""
    indices: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        self.indices.setflags(write=False)
        self.probs.setflags(write=False)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def subset(self, positions: np.ndarray) -> np.ndarray:
        return self.probs[positions]


@dataclass
class UnlearnResult:
    """Итог разобучения"""
    params: np.ndarray
    w_orig: np.ndarray
    objective_history: List[float]
    param_delta: np.ndarray
    target: ForgetTarget
    final_objective: float
    config: UnlearnConfig = field(repr=False, default=None)


# Цель и её части

def _weighted_log(weights: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # Σ_k w_k log p_k по последней оси; слагаемые с w_k = 0 пропускаются
    logs = np.log(np.maximum(probs, LOG_FLOOR))
    return np.sum(np.where(weights > 0, weights * logs, 0.0), axis=-1)


def forget_term(probs_f: np.ndarray, q: np.ndarray) -> np.ndarray:
    """L_F = mean_F Σ_k q_k log p_w(k|x); по последним двум осям"""
    return np.mean(_weighted_log(np.broadcast_to(q, probs_f.shape), probs_f), axis=-1)


def anchor_term(probs_a: np.ndarray, p_ref: np.ndarray) -> np.ndarray:
    """mean_A Σ_k p_ref log p_w"""
    return np.mean(_weighted_log(np.broadcast_to(p_ref, probs_a.shape), probs_a), axis=-1)


def anchor_kl(probs_a: np.ndarray, p_ref: np.ndarray) -> np.ndarray:
    """mean_A KL(p_ref || p_w)"""
    p_ref = np.broadcast_to(p_ref, probs_a.shape)
    return np.mean(_weighted_log(p_ref, p_ref) - _weighted_log(p_ref, probs_a), axis=-1)


def _penalty(w: np.ndarray, w_orig: np.ndarray) -> np.ndarray:
    diff = np.asarray(w) - w_orig
    return np.sum(diff * diff, axis=-1)


def compute_forget_target(spec: CircuitSpec, w_orig: np.ndarray, X_calibration: np.ndarray,
                          forget_class: int, beta: float,
                          y_calibration: Optional[np.ndarray] = None) -> ForgetTarget:
    """
    q_k = m_k^β / Σ_{j≠f} m_j^β, где m_k - средняя вероятность класса k на S; q_f = 0.

    Raises:
        ValidationError: S пусто, β <= 0 или в S есть метки другого класса
        NumericError: Все средние вероятности оставшихся классов нулевые
    """
    X_calibration = np.asarray(X_calibration, dtype=np.float64)
    if X_calibration.ndim != 2 or X_calibration.shape[0] == 0:
        raise ValidationError("Калибровочное множество S пусто")
    if not beta > 0:
        raise ValidationError(f"beta должна быть > 0, получено {beta}")
    if y_calibration is not None and np.any(np.asarray(y_calibration) != forget_class):
        raise ValidationError(f"Калибровочное множество содержит метки кроме {forget_class}")

    means = predict_proba_batch(spec, w_orig, X_calibration).mean(axis=0)
    return target_from_means(means, forget_class, beta)


def target_from_means(means: Sequence[float], forget_class: int, beta: float) -> ForgetTarget:
    """Цель по средним вероятностям классов на S."""
    means = np.array(means, dtype=np.float64)
    means[forget_class] = 0.0
    powered = np.power(means, beta)
    powered[forget_class] = 0.0
    total = powered.sum()
    if not total > 0 or not math.isfinite(total):
        raise NumericError(f"Средние вероятности оставшихся классов вырождены: {means.tolist()}")

    q = powered / total
    q[forget_class] = 0.0
    target = ForgetTarget(q, int(forget_class), float(beta), TargetSource.SIMILARITY)
    target.validate()
    return target


def uniform_forget_target(forget_class: int, n_classes: int = N_CLASSES) -> ForgetTarget:
    """q_k = 1/(K-1) для k ≠ f, q_f = 0."""
    if n_classes < 2:
        raise ValidationError(f"Нужно K >= 2 классов, получено {n_classes}")
    if not 0 <= forget_class < n_classes:
        raise ValidationError(f"Забываемый класс {forget_class} вне диапазона [0, {n_classes})")
    q = np.full(n_classes, 1.0 / (n_classes - 1))
    q[forget_class] = 0.0
    return ForgetTarget(q, int(forget_class), 0.0, TargetSource.UNIFORM)


def cache_anchor_refs(spec: CircuitSpec, w_orig: np.ndarray, X_anchor: np.ndarray,
                      indices: Optional[np.ndarray] = None) -> AnchorRefs:
    """
    Однократно вычисляет p_ref(·|x) = p_{w_orig}(·|x) для всех якорей.

    Raises:
        ValidationError: A пусто
    """
    X_anchor = np.asarray(X_anchor, dtype=np.float64)
    if X_anchor.ndim != 2 or X_anchor.shape[0] == 0:
        raise ValidationError("Множество якорей A пусто")
    if indices is None:
        indices = np.arange(X_anchor.shape[0])
    probs = predict_proba_batch(spec, w_orig, X_anchor)
    return AnchorRefs(np.array(indices, dtype=np.int64), np.array(probs))


def objective(spec: CircuitSpec, w: np.ndarray, X_forget: np.ndarray, q: np.ndarray,
              X_anchor: np.ndarray, p_ref: np.ndarray, alpha: float, lam: float,
              w_orig: np.ndarray) -> float:
    """J(w); логарифмы с полом LOG_FLOOR, слагаемые с нулевым весом пропускаются."""
    w = np.asarray(w, dtype=np.float64)
    value = forget_term(predict_proba_batch(spec, w, X_forget), q)
    if alpha != 0.0:
        value = value + alpha * anchor_term(predict_proba_batch(spec, w, X_anchor), p_ref)
    return float(value - lam * _penalty(w, w_orig))


def objective_lagrangian_form(spec: CircuitSpec, w: np.ndarray, X_forget: np.ndarray, q: np.ndarray,
                              X_anchor: np.ndarray, p_ref: np.ndarray, alpha: float, lam: float,
                              w_orig: np.ndarray) -> float:
    """J_L(w) = L_F(w) - α·mean_A KL(p_ref || p_w) - λ·||w - w_orig||²"""
    w = np.asarray(w, dtype=np.float64)
    value = forget_term(predict_proba_batch(spec, w, X_forget), q)
    if alpha != 0.0:
        value = value - alpha * anchor_kl(predict_proba_batch(spec, w, X_anchor), p_ref)
    return float(value - lam * _penalty(w, w_orig))


def verify_lagrangian_equivalence(spec: CircuitSpec, X_forget: np.ndarray, q: np.ndarray,
                                  X_anchor: np.ndarray, p_ref: np.ndarray, alpha: float, lam: float,
                                  w_orig: np.ndarray, n_pairs: int = 50, seed: int = 0) -> float:
    """
    Проверяет, что J и J_L отличаются на константу, не зависящую от w.

    Returns:
        max |(J(w1) - J(w2)) - (J_L(w1) - J_L(w2))| по n_pairs случайным парам
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        w1, w2 = rng.uniform(-np.pi, np.pi, size=(2, spec.n_params))
        args = (X_forget, q, X_anchor, p_ref, alpha, lam, w_orig)
        delta_j = objective(spec, w1, *args) - objective(spec, w2, *args)
        delta_jl = objective_lagrangian_form(spec, w1, *args) - objective_lagrangian_form(spec, w2, *args)
        worst = max(worst, abs(delta_j - delta_jl))
    return worst


def batched_objective(spec: CircuitSpec, X_forget: np.ndarray, q: np.ndarray, X_anchor: np.ndarray,
                      p_ref: np.ndarray, alpha: float, lam: float, w_orig: np.ndarray):
    """Функция (M, n_params) -> (M,) значений J; F и A симулируются одним прогоном."""
    n_forget = X_forget.shape[0]
    X_all = np.concatenate([X_forget, X_anchor], axis=0) if alpha != 0.0 else X_forget

    def value(param_stack: np.ndarray) -> np.ndarray:
        probs = softmax(forward_grid(spec, param_stack, X_all))  # (M, rows, K)
        result = forget_term(probs[:, :n_forget], q)
        if alpha != 0.0:
            result = result + alpha * anchor_term(probs[:, n_forget:], p_ref)
        return result - lam * _penalty(param_stack, w_orig)

    return value


def objective_gradient(spec: CircuitSpec, w: np.ndarray, X_forget: np.ndarray, q: np.ndarray,
                       X_anchor: np.ndarray, p_ref: np.ndarray, alpha: float, lam: float,
                       w_orig: np.ndarray, mode: str = GradientMode.SHIFT.value,
                       workers: Optional[int] = None) -> np.ndarray:
    """
    Градиент J.

    shift: правило сдвига, применённое к J целиком.
    exact: сдвиг по логитам и dJ/dlogit: (q - p)/|F| на F, α(p_ref - p)/|A| на A.
    """
    if mode == GradientMode.EXACT.value:
        n_forget, n_anchor = X_forget.shape[0], X_anchor.shape[0]
        X_all = np.concatenate([X_forget, X_anchor], axis=0)

        def upstream(logits: np.ndarray) -> np.ndarray:
            p = softmax(logits)
            d = np.empty_like(p)
            d[:n_forget] = (q - p[:n_forget]) / n_forget
            d[n_forget:] = alpha * (p_ref - p[n_forget:]) / n_anchor
            return d

        grad = chain_rule_gradient(spec, w, X_all, upstream)
        return grad - 2.0 * lam * (np.asarray(w) - w_orig)

    n_workers = workers if workers is not None else SETTINGS.processing.gradient_workers
    if n_workers > 1:
        return parameter_shift_gradient(
            lambda v: objective(spec, v, X_forget, q, X_anchor, p_ref, alpha, lam, w_orig),
            w, workers=n_workers,
        )
    fn = batched_objective(spec, X_forget, q, X_anchor, p_ref, alpha, lam, w_orig)
    return parameter_shift_gradient(fn, w, batched=True)


def build_target(spec: CircuitSpec, w_orig: np.ndarray, dataset: Dataset, partition: SplitPartition,
                 config: UnlearnConfig) -> ForgetTarget:
    """Цель по конфигурации: по сходству на S ⊆ F или равномерная."""
    f = partition.forget_class
    if config.target_source == TargetSource.UNIFORM.value:
        return uniform_forget_target(f, spec.n_classes)
    s_idx = calibration_subset(partition.forget, config.calibration_fraction, config.seed)
    X_s, y_s = dataset.subset(s_idx)
    return compute_forget_target(spec, w_orig, X_s, f, config.beta, y_s)


def unlearn(spec: CircuitSpec, w_orig: np.ndarray, dataset: Dataset, partition: SplitPartition,
            config: UnlearnConfig, target: Optional[ForgetTarget] = None,
            refs: Optional[AnchorRefs] = None, logger=None) -> UnlearnResult:
    """
    Градиентный подъём по J с Adam (config.steps шагов, постоянный lr).

    objective_history[t] - значение J на пакете шага t до обновления.
    """
    config.validate()
    if partition.forget_class is None or partition.forget.size == 0:
        raise ValidationError("Разбиение не содержит множества F")
    if partition.anchor.size == 0:
        raise ValidationError("Разбиение не содержит множества A")

    w_orig = np.array(w_orig, dtype=np.float64)
    if target is None:
        target = build_target(spec, w_orig, dataset, partition, config)
    X_forget_all = dataset.X[partition.forget]
    X_anchor_all = dataset.X[partition.anchor]
    if refs is None:
        refs = cache_anchor_refs(spec, w_orig, X_anchor_all, partition.anchor)

    rng = np.random.default_rng(config.seed)
    forget_positions = np.arange(partition.forget.size)
    anchor_positions = np.arange(partition.anchor.size)
    forget_sampler = EpochSampler(forget_positions, config.forget_batch_size, rng) \
        if config.forget_batch_size else None
    anchor_sampler = EpochSampler(anchor_positions, config.anchor_batch_size, rng) \
        if config.anchor_batch_size else None

    w = w_orig.copy()
    state = AdamState.zeros(spec.n_params, config.beta1, config.beta2, config.eps)
    history: List[float] = []

    for step in range(config.steps):
        f_pos = forget_sampler.next() if forget_sampler else forget_positions
        a_pos = anchor_sampler.next() if anchor_sampler else anchor_positions
        X_f, X_a, p_ref = X_forget_all[f_pos], X_anchor_all[a_pos], refs.subset(a_pos)
        args = (X_f, target.q, X_a, p_ref, config.alpha, config.lam, w_orig)

        value = objective(spec, w, *args)
        if not math.isfinite(value):
            raise NumericError(f"Нечисловое значение цели на шаге {step}")
        history.append(value)

        grad = objective_gradient(spec, w, *args, mode=config.gradient_mode)
        state, w = adam_step(state, w, grad, config.lr, maximize=True)

        if logger is not None and config.log_every > 0 and (
                step % config.log_every == 0 or step == config.steps - 1):
            logger.info(f"🔁 Шаг {step + 1}/{config.steps}: J={value:.5f}")

    final_objective = objective(
        spec, w, X_forget_all, target.q, X_anchor_all, refs.probs, config.alpha, config.lam, w_orig
    )
    return UnlearnResult(
        params=w,
        w_orig=w_orig,
        objective_history=history,
        param_delta=np.abs(w - w_orig),
        target=target,
        final_objective=final_objective,
        config=config,
    )


class UnlearningAgent(BaseAgent, ValidationMixin):
    """
    Агент разобучения класса.

    Строит цель (по сходству или равномерную), кэширует якорные распределения
    и выполняет подъём по J.
    """

    def __init__(self, spec: CircuitSpec):
        BaseAgent.__init__(self, name="UnlearningAgent")
        ValidationMixin.__init__(self)
        self.spec = spec

    def run(self, w_orig: np.ndarray, dataset: Dataset, partition: SplitPartition,
            config: UnlearnConfig) -> UnlearnResult:
        operation_name = f"разобучение класса {partition.forget_class} ({config.target_source})"
        self.start_operation(operation_name)
        try:
            w_orig = self.validate_param_vector(w_orig, self.spec.n_params)
            self.validate_forget_class(partition.forget_class, self.spec.n_classes)

            target = build_target(self.spec, w_orig, dataset, partition, config)
            self.log_with_emoji("info", "🎯", f"Цель q={np.round(target.q, 4).tolist()} ({target.source.value})")

            result = unlearn(self.spec, w_orig, dataset, partition, config, target=target, logger=self.logger)
            self.log_with_emoji(
                "info", "📊",
                f"J={result.final_objective:.5f}, max|Δw|={result.param_delta.max(initial=0.0):.4f}"
            )
            self.end_operation(operation_name, success=True)
            return result
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
