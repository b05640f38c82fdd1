# pipeline/statevector.py

"""
Точная симуляция вектора состояния для вентилей RY, RZ и CX.

Соглашение: кубит 0 - младший бит индекса амплитуды.
Вентили применяются на месте попарным обновлением амплитуд по шагу 2^q,
без построения матриц 2^n x 2^n.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .constants import MAX_SIMULATED_QUBITS, NORM_GUARD_TOLERANCE
from .interfaces import NumericError, ValidationError


class GateKind(Enum):
    """Поддерживаемые вентили"""
    RY = "RY"
    RZ = "RZ"
    CX = "CX"


class AngleKind(Enum):
    """Источник угла поворота"""
    CONSTANT = "constant"
    FEATURE = "feature"
    FEATURE_PRODUCT = "feature_product"
    PARAM = "param"


@dataclass(frozen=True)
class AngleSource:
    """Откуда берётся угол вентиля при связывании"""
    kind: AngleKind
    indices: Tuple[int, ...] = ()
    value: float = 0.0

    @classmethod
    def constant(cls, value: float) -> "AngleSource":
        return cls(AngleKind.CONSTANT, (), float(value))

    @classmethod
    def feature(cls, i: int) -> "AngleSource":
        return cls(AngleKind.FEATURE, (i,))

    @classmethod
    def feature_product(cls, i: int, j: int) -> "AngleSource":
        return cls(AngleKind.FEATURE_PRODUCT, (i, j))

    @classmethod
    def param(cls, p: int) -> "AngleSource":
        return cls(AngleKind.PARAM, (p,))

    @property
    def param_index(self) -> Optional[int]:
        return self.indices[0] if self.kind is AngleKind.PARAM else None

    def bind(self, features: np.ndarray, params: np.ndarray) -> np.ndarray:
        """
        Вычисляет угол для каждой строки пакета.

        Args:
            features: Матрица признаков (rows, n_features)
            params: Матрица параметров (rows, n_params)

        Returns:
            Вектор углов длины rows
        """
        rows = features.shape[0]
        if self.kind is AngleKind.CONSTANT:
            return np.full(rows, self.value)
        if self.kind is AngleKind.FEATURE:
            return features[:, self.indices[0]]
        if self.kind is AngleKind.FEATURE_PRODUCT:
            i, j = self.indices
            return features[:, i] * features[:, j]
        return params[:, self.indices[0]]


@dataclass(frozen=True)
class Gate:
    """Один вентиль программы"""
    kind: GateKind
    target: int
    control: Optional[int] = None
    angle: float = 0.0
    angle_source: Optional[AngleSource] = None

    @property
    def source(self) -> AngleSource:
        """Источник угла; без явного источника используется константа angle"""
        if self.angle_source is None:
            return AngleSource.constant(self.angle)
        return self.angle_source

    def validate(self, n_qubits: int, n_params: Optional[int] = None) -> None:
        """
        Проверяет индексы вентиля.

        Raises:
            ValidationError: Нарушены инварианты вентиля
        """
        if not 0 <= self.target < n_qubits:
            raise ValidationError(f"Целевой кубит {self.target} вне диапазона [0, {n_qubits})")

        if self.kind is GateKind.CX:
            if self.control is None:
                raise ValidationError("CX требует управляющий кубит")
            if not 0 <= self.control < n_qubits:
                raise ValidationError(f"Управляющий кубит {self.control} вне диапазона [0, {n_qubits})")
            if self.control == self.target:
                raise ValidationError(f"CX: управляющий и целевой кубит совпадают ({self.target})")
        elif self.control is not None:
            raise ValidationError(f"{self.kind.value} не принимает управляющий кубит")

        p = self.source.param_index
        if p is not None and n_params is not None and not 0 <= p < n_params:
            raise ValidationError(f"Индекс параметра {p} вне диапазона [0, {n_params})")


@dataclass
class StateVector:
    """Плотный вектор состояния n кубитов"""
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValidationError(
                f"Длина вектора {self.amplitudes.shape} не равна 2^{self.n_qubits}"
            )

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


def _check_n_qubits(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_SIMULATED_QUBITS:
        raise ValidationError(f"n_qubits={n_qubits} вне диапазона [1, {MAX_SIMULATED_QUBITS}]")


def init_zero_state(n_qubits: int) -> StateVector:
    """Возвращает |0...0> на n кубитах."""
    _check_n_qubits(n_qubits)
    amplitudes = np.zeros(1 << n_qubits, dtype=np.complex128)
    amplitudes[0] = 1.0
    return StateVector(n_qubits, amplitudes)


def zero_states(rows: int, n_qubits: int) -> np.ndarray:
    """Пакет из rows состояний |0...0>, форма (rows, 2^n)."""
    _check_n_qubits(n_qubits)
    amplitudes = np.zeros((rows, 1 << n_qubits), dtype=np.complex128)
    amplitudes[:, 0] = 1.0
    return amplitudes


def _pair_view(amplitudes: np.ndarray, n_qubits: int, qubit: int) -> np.ndarray:
    # (rows, старшие биты, бит qubit, младшие биты)
    return amplitudes.reshape(amplitudes.shape[0], 1 << (n_qubits - qubit - 1), 2, 1 << qubit)


def apply_gate_batch(amplitudes: np.ndarray, n_qubits: int, gate: Gate,
                     angles: Union[np.ndarray, float] = 0.0) -> np.ndarray:
    """
    Применяет вентиль на месте ко всем строкам пакета.

    Args:
        amplitudes: C-непрерывный массив (rows, 2^n), изменяется на месте
        n_qubits: Число кубитов
        gate: Вентиль (индексы должны быть проверены)
        angles: Угол на строку либо общий угол (для CX игнорируется)

    Returns:
        Тот же массив amplitudes
    """
    if gate.kind is GateKind.CX:
        view = amplitudes.reshape((amplitudes.shape[0],) + (2,) * n_qubits)
        ax_c = 1 + (n_qubits - 1 - gate.control)
        ax_t = 1 + (n_qubits - 1 - gate.target)
        idx0 = [slice(None)] * (n_qubits + 1)
        idx0[ax_c] = 1
        idx0[ax_t] = 0
        idx1 = list(idx0)
        idx1[ax_t] = 1
        idx0, idx1 = tuple(idx0), tuple(idx1)
        lower = view[idx0].copy()
        view[idx0] = view[idx1]
        view[idx1] = lower
        return amplitudes

    theta = np.broadcast_to(np.asarray(angles, dtype=np.float64), (amplitudes.shape[0],))
    half = (theta / 2.0)[:, None, None]
    view = _pair_view(amplitudes, n_qubits, gate.target)

    if gate.kind is GateKind.RY:
        c, s = np.cos(half), np.sin(half)
        a0 = view[:, :, 0, :].copy()
        a1 = view[:, :, 1, :]
        view[:, :, 0, :] = c * a0 - s * a1
        view[:, :, 1, :] = s * a0 + c * a1
    else:
        view[:, :, 0, :] *= np.exp(-1j * half)
        view[:, :, 1, :] *= np.exp(1j * half)
    return amplitudes


def apply_gate(state: StateVector, gate: Gate, bound_angle: float = 0.0) -> StateVector:
    """
    Применяет вентиль к одному состоянию (на месте).

    Raises:
        ValidationError: Индексы вентиля некорректны для состояния
        NumericError: Угол не конечен
    """
    gate.validate(state.n_qubits)
    if gate.kind is not GateKind.CX and not np.isfinite(bound_angle):
        raise NumericError(f"Нечисловой угол для {gate.kind.value} на кубите {gate.target}")
    apply_gate_batch(state.amplitudes.reshape(1, -1), state.n_qubits, gate, bound_angle)
    return state


def expectation_z_batch(amplitudes: np.ndarray, n_qubits: int, qubit: int) -> np.ndarray:
    """<Z_qubit> для каждой строки пакета."""
    if not 0 <= qubit < n_qubits:
        raise ValidationError(f"Кубит {qubit} вне диапазона [0, {n_qubits})")
    probs = _pair_view(np.abs(amplitudes) ** 2, n_qubits, qubit)
    return probs[:, :, 0, :].sum(axis=(1, 2)) - probs[:, :, 1, :].sum(axis=(1, 2))


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> на кубите: +|a|^2 там, где бит равен 0, и -|a|^2 там, где 1."""
    value = expectation_z_batch(state.amplitudes.reshape(1, -1), state.n_qubits, qubit)[0]
    return float(np.clip(value, -1.0, 1.0))


def check_norms(amplitudes: np.ndarray, tolerance: float = NORM_GUARD_TOLERANCE) -> None:
    """
    Проверяет нормировку строк пакета; состояние не перенормируется.

    Raises:
        NumericError: Отклонение нормы больше tolerance
    """
    norms = np.einsum("ij,ij->i", amplitudes.real, amplitudes.real) + \
        np.einsum("ij,ij->i", amplitudes.imag, amplitudes.imag)
    drift = np.abs(norms - 1.0)
    worst = int(np.argmax(drift))
    if not drift[worst] <= tolerance:
        raise NumericError(f"Норма состояния нарушена в строке {worst}: |‖ψ‖² - 1| = {drift[worst]:.3e}")
