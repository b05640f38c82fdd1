# pipeline/optim.py

"""Adam и косинусное расписание скорости обучения."""

import math
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_ADAM_BETA1, DEFAULT_ADAM_BETA2, DEFAULT_ADAM_EPS
from .interfaces import ValidationError


def cosine_lr(iteration: int, total_iters: int, peak_lr: float) -> float:
    """peak_lr · 0.5 · (1 + cos(π · iteration / total_iters))"""
    if total_iters < 1 or not 0 <= iteration < total_iters:
        raise ValidationError(f"Итерация {iteration} вне диапазона [0, {total_iters})")
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * iteration / total_iters))


@dataclass(frozen=True)
class AdamState:
    """Моменты Adam и номер шага"""
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = DEFAULT_ADAM_BETA1
    beta2: float = DEFAULT_ADAM_BETA2
    eps: float = DEFAULT_ADAM_EPS

    @classmethod
    def zeros(cls, n: int, beta1: float = DEFAULT_ADAM_BETA1,
              beta2: float = DEFAULT_ADAM_BETA2, eps: float = DEFAULT_ADAM_EPS) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, beta1, beta2, eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float,
              maximize: bool = False):
    """
    Один шаг Adam с коррекцией смещения.

    Args:
        state: Текущие моменты
        params: Параметры
        grad: Градиент
        lr: Скорость обучения
        maximize: Подъём вместо спуска (знак градиента меняется)

    Returns:
        (новое состояние, новые параметры); входные массивы не изменяются
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (state.m.shape == state.v.shape == params.shape == grad.shape):
        raise ValidationError(
            f"Размеры не совпадают: m={state.m.shape}, params={params.shape}, grad={grad.shape}"
        )

    g = -grad if maximize else grad
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)

    new_state = AdamState(m, v, t, state.beta1, state.beta2, state.eps)
    return new_state, new_params
