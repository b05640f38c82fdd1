# pipeline/gradients.py

"""
Градиенты по правилу сдвига параметров:

    g_i = (f(w + π/2·e_i) - f(w - π/2·e_i)) / 2

Правило применяется к любой скалярной функции (функция потерь при обучении,
цель J при разобучении). Для сырых <Z> оно точно; для composed-функций
есть точный режим: сдвиг по логитам плюс аналитическая производная по логитам.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Optional, Tuple

import numpy as np

from .circuit import CircuitSpec, forward_grid
from .constants import SHIFT
from .interfaces import NumericError, ValidationError
from .monitoring import PERFORMANCE_MONITOR
from .settings import SETTINGS

logger = logging.getLogger(__name__)

ScalarFn = Callable[[np.ndarray], float]
BatchedFn = Callable[[np.ndarray], np.ndarray]


def shifted_stack(params: np.ndarray, shift: float = SHIFT) -> np.ndarray:
    """
    Матрица сдвинутых векторов (2n, n): сначала все w + shift·e_i, затем все w - shift·e_i.
    """
    params = np.asarray(params, dtype=np.float64)
    n = params.shape[0]
    offsets = shift * np.eye(n)
    return np.concatenate([params + offsets, params - offsets], axis=0)


def _evaluate_scalar(f: ScalarFn, stack: np.ndarray, workers: int) -> np.ndarray:
    values = np.empty(stack.shape[0])
    if workers <= 1:
        for idx, point in enumerate(stack):
            values[idx] = f(point)
        return values

    # Сбор по индексу: порядок редукции не зависит от порядка завершения
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_idx = {executor.submit(f, point): idx for idx, point in enumerate(stack)}
        for future in as_completed(future_to_idx):
            values[future_to_idx[future]] = future.result()
    return values


def _check_finite(values: np.ndarray, n: int) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        sign = "+" if idx < n else "-"
        raise NumericError(
            f"Нечисловое значение функции при сдвиге параметра {idx % n} ({sign}π/2): {values[idx]}"
        )


def parameter_shift_gradient(f, params: np.ndarray, *, batched: bool = False,
                             shift: float = SHIFT,
                             workers: Optional[int] = None) -> np.ndarray:
    """
    Градиент скалярной функции по правилу сдвига (2n вычислений f).

    Args:
        f: Скалярная функция f(w) -> float, либо при batched=True функция
           над стопкой параметров (M, n) -> (M,)
        params: Точка w
        batched: Передать все сдвинутые точки одним вызовом
        shift: Величина сдвига
        workers: Потоки для скалярного режима (по умолчанию из настроек)

    Returns:
        Вектор градиента длины n

    Raises:
        NumericError: f вернула нечисловое значение; сообщение называет индекс сдвига
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1:
        raise ValidationError(f"Ожидался вектор параметров, получена форма {params.shape}")

    n = params.shape[0]
    stack = shifted_stack(params, shift)

    if batched:
        values = np.asarray(f(stack), dtype=np.float64).reshape(-1)
        if values.shape[0] != 2 * n:
            raise ValidationError(f"Пакетная функция вернула {values.shape[0]} значений вместо {2 * n}")
    else:
        n_workers = workers if workers is not None else SETTINGS.processing.gradient_workers
        values = _evaluate_scalar(f, stack, n_workers)

    _check_finite(values, n)
    PERFORMANCE_MONITOR.record_gradient_call()
    return (values[:n] - values[n:]) / 2.0


def logit_jacobian(spec: CircuitSpec, params: np.ndarray,
                   X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Логиты в точке w и их точный якобиан по параметрам.

    Returns:
        (logits (B, K), jacobian (B, K, n_params))
    """
    params = np.asarray(params, dtype=np.float64)
    n = params.shape[0]
    points = np.concatenate([params.reshape(1, -1), shifted_stack(params)], axis=0)
    grid = forward_grid(spec, points, X)
    logits = grid[0]
    jacobian = (grid[1:n + 1] - grid[n + 1:]) / 2.0  # (n, B, K)
    return logits, np.transpose(jacobian, (1, 2, 0))


def chain_rule_gradient(spec: CircuitSpec, params: np.ndarray, X: np.ndarray,
                        upstream: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Точный градиент скалярной функции логитов.

    Args:
        upstream: logits (B, K) -> dF/dlogits (B, K)

    Returns:
        Вектор градиента длины n_params
    """
    logits, jacobian = logit_jacobian(spec, params, X)
    dlogits = np.asarray(upstream(logits), dtype=np.float64)
    grad = np.einsum("bk,bkp->p", dlogits, jacobian)
    _check_finite(np.concatenate([grad, grad]), grad.shape[0])
    PERFORMANCE_MONITOR.record_gradient_call()
    return grad
