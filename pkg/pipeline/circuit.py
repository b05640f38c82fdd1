# pipeline/circuit.py

"""
Шестикубитовый классификатор: карта признаков FM, анзац A, FM, A.

FM: RY(x_i) на кубитах 0-3, затем CX(a,b)·RZ(x_a·x_b)·CX(a,b) для пар (0,1),(1,2),(2,3).
A: 3 повторения {RY(w), RZ(w) на всех кубитах, кольцо CX(q, (q+1) mod 6)}.
Логит класса k равен <Z> на кубите 3+k.

Порядок параметров блочный: блок, повтор, кубит, RY перед RZ.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .constants import (
    ANSATZ_REPETITIONS,
    FEATURE_MAP_PAIRS,
    N_ANSATZ_BLOCKS,
    N_FEATURES,
    N_PARAMS,
    N_QUBITS,
    PARAM_ORDER_TAG,
    READOUT_QUBITS,
)
from .interfaces import NumericError, ValidationError
from .monitoring import PERFORMANCE_MONITOR
from .settings import SETTINGS
from .statevector import (
    AngleSource,
    Gate,
    GateKind,
    apply_gate_batch,
    check_norms,
    expectation_z_batch,
    zero_states,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CircuitSpec:
    """Неизменяемая программа вентилей классификатора"""
    gates: Tuple[Gate, ...]
    n_qubits: int = N_QUBITS
    n_params: int = N_PARAMS
    n_features: int = N_FEATURES
    readout_qubits: Tuple[int, ...] = READOUT_QUBITS
    param_order_tag: str = PARAM_ORDER_TAG
    block_sizes: Tuple[int, ...] = field(default=(), compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.readout_qubits)

    def validate(self) -> None:
        """
        Проверяет инварианты программы.

        Raises:
            ValidationError: Вентиль некорректен или параметры встречаются не ровно один раз
        """
        counts = np.zeros(self.n_params, dtype=int)
        for gate in self.gates:
            gate.validate(self.n_qubits, self.n_params)
            p = gate.source.param_index
            if p is not None:
                counts[p] += 1
        if not np.all(counts == 1):
            bad = np.flatnonzero(counts != 1).tolist()
            raise ValidationError(f"Параметры должны встречаться ровно один раз, нарушено для {bad}")


def _feature_map_gates() -> list:
    gates = [
        Gate(GateKind.RY, target=i, angle_source=AngleSource.feature(i))
        for i in range(N_FEATURES)
    ]
    for a, b in FEATURE_MAP_PAIRS:
        gates.append(Gate(GateKind.CX, target=b, control=a))
        gates.append(Gate(GateKind.RZ, target=b, angle_source=AngleSource.feature_product(a, b)))
        gates.append(Gate(GateKind.CX, target=b, control=a))
    return gates


def _ansatz_gates(first_param: int) -> list:
    gates = []
    p = first_param
    for _ in range(ANSATZ_REPETITIONS):
        for q in range(N_QUBITS):
            gates.append(Gate(GateKind.RY, target=q, angle_source=AngleSource.param(p)))
            gates.append(Gate(GateKind.RZ, target=q, angle_source=AngleSource.param(p + 1)))
            p += 2
        for q in range(N_QUBITS):
            gates.append(Gate(GateKind.CX, target=(q + 1) % N_QUBITS, control=q))
    return gates


def build_circuit_spec() -> CircuitSpec:
    """
    Строит программу классификатора FM, A, FM, A.

    Returns:
        CircuitSpec с 72 параметрами; результат одинаков при каждом вызове
    """
    per_block = ANSATZ_REPETITIONS * N_QUBITS * 2
    gates = []
    sizes = []
    for block in range(N_ANSATZ_BLOCKS):
        fm = _feature_map_gates()
        ansatz = _ansatz_gates(block * per_block)
        gates.extend(fm)
        gates.extend(ansatz)
        sizes.extend([len(fm), len(ansatz)])

    spec = CircuitSpec(gates=tuple(gates), block_sizes=tuple(sizes))
    spec.validate()
    return spec


def _check_params(spec: CircuitSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1] != spec.n_params:
        raise ValidationError(f"Ожидалось {spec.n_params} параметров, получено {params.shape[-1]}")
    if not np.all(np.isfinite(params)):
        raise NumericError("Параметры содержат нечисловые значения")
    return params


def _check_features(spec: CircuitSpec, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != spec.n_features:
        raise ValidationError(
            f"Ожидалось {spec.n_features} признака на образец, получена форма {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise NumericError("Признаки содержат нечисловые значения")
    return X


def _simulate_rows(spec: CircuitSpec, X: np.ndarray, W: np.ndarray) -> np.ndarray:
    amplitudes = simulate_states(spec, W, X)
    check_norms(amplitudes)
    return np.stack(
        [expectation_z_batch(amplitudes, spec.n_qubits, q) for q in spec.readout_qubits],
        axis=1,
    )


def _bind_rows(spec: CircuitSpec, params: np.ndarray, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    X = _check_features(spec, X)
    params = _check_params(spec, params)
    rows = X.shape[0]
    W = np.broadcast_to(params, (rows, spec.n_params)) if params.ndim == 1 else params
    if W.shape[0] != rows:
        raise ValidationError(f"Строк параметров {W.shape[0]} не равно числу образцов {rows}")
    return X, W


def simulate_states(spec: CircuitSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Векторы состояния после всей схемы, без проверки нормы и без измерения.

    Returns:
        Комплексная матрица (rows, 2^n_qubits)
    """
    X, W = _bind_rows(spec, params, X)
    # каждая строка (X[i], W[i]) - отдельная схема
    amplitudes = zero_states(X.shape[0], spec.n_qubits)
    for gate in spec.gates:
        if gate.kind is GateKind.CX:
            apply_gate_batch(amplitudes, spec.n_qubits, gate)
        else:
            apply_gate_batch(amplitudes, spec.n_qubits, gate, gate.source.bind(X, W))
    PERFORMANCE_MONITOR.record_circuits(X.shape[0])
    return amplitudes


def forward_batch(spec: CircuitSpec, params: np.ndarray, X: np.ndarray,
                  chunk_rows: Optional[int] = None) -> np.ndarray:
    """
    Логиты для пакета образцов.

    Args:
        spec: Программа классификатора
        params: Вектор (n_params,) общий для всех строк, либо матрица (rows, n_params)
        X: Признаки (rows, n_features) в [0, π]
        chunk_rows: Максимум схем за один векторизованный прогон

    Returns:
        Матрица логитов (rows, n_classes), каждый в [-1, 1]
    """
    X, W = _bind_rows(spec, params, X)
    rows = X.shape[0]

    chunk = chunk_rows or SETTINGS.processing.sim_chunk_rows
    logits = np.empty((rows, spec.n_classes))
    for start in range(0, rows, chunk):
        stop = min(start + chunk, rows)
        logits[start:stop] = _simulate_rows(spec, X[start:stop], W[start:stop])
    return np.clip(logits, -1.0, 1.0)


def forward_grid(spec: CircuitSpec, param_stack: np.ndarray, X: np.ndarray,
                 chunk_rows: Optional[int] = None) -> np.ndarray:
    """
    Логиты для всех пар (набор параметров, образец).

    Returns:
        Массив (M, rows, n_classes) для param_stack формы (M, n_params)
    """
    X = _check_features(spec, X)
    param_stack = _check_params(spec, np.atleast_2d(param_stack))
    m, rows = param_stack.shape[0], X.shape[0]
    W = np.repeat(param_stack, rows, axis=0)
    tiled = np.tile(X, (m, 1))
    return forward_batch(spec, W, tiled, chunk_rows).reshape(m, rows, spec.n_classes)


def forward(spec: CircuitSpec, params: Sequence[float], x: Sequence[float]) -> np.ndarray:
    """
    Логиты одного образца: <Z> на кубитах 3, 4, 5 после схемы из |000000>.

    Raises:
        ValidationError: Длина признаков не равна 4
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != spec.n_features:
        raise ValidationError(f"Ожидалось {spec.n_features} признака, получено {x.shape}")
    return forward_batch(spec, params, x.reshape(1, -1))[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax по последней оси с вычитанием максимума."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def predict_proba_batch(spec: CircuitSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Распределения классов (rows, n_classes)."""
    return softmax(forward_batch(spec, params, X))


def predict_proba(spec: CircuitSpec, params: Sequence[float], x: Sequence[float]) -> np.ndarray:
    return softmax(forward(spec, params, x))


def predict(spec: CircuitSpec, params: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Argmax предсказания; при равенстве выигрывает меньший индекс класса."""
    return np.argmax(predict_proba_batch(spec, params, X), axis=1)


def init_params(seed: int, sigma: float, n_params: int = N_PARAMS) -> np.ndarray:
    """Малый гауссов шум N(0, sigma^2) с фиксированным seed."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, sigma, size=n_params)
