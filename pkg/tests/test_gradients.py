#!/usr/bin/env python3
"""
Тесты градиентов по правилу сдвига параметров
"""

import os
import re
import sys

import numpy as np
import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.circuit import build_circuit_spec, forward, forward_batch, forward_grid, init_params
from pipeline.gradients import (
    chain_rule_gradient,
    logit_jacobian,
    parameter_shift_gradient,
    shifted_stack,
)
from pipeline.interfaces import NumericError, ValidationError
from pipeline.statevector import Gate, GateKind, apply_gate, expectation_z, init_zero_state


class TestShiftedStack:
    """Тесты стопки сдвинутых точек"""

    @pytest.mark.unit
    def test_layout(self):
        """Тест: сначала все +сдвиги, затем все -сдвиги"""
        w = np.array([0.1, 0.2, 0.3])
        stack = shifted_stack(w, shift=1.0)
        assert stack.shape == (6, 3)
        np.testing.assert_allclose(stack[0], [1.1, 0.2, 0.3])
        np.testing.assert_allclose(stack[2], [0.1, 0.2, 1.3])
        np.testing.assert_allclose(stack[4], [0.1, -0.8, 0.3])


class TestParameterShift:
    """Тесты правила сдвига на скалярных функциях"""

    @pytest.mark.unit
    def test_single_qubit_analytic(self):
        """Тест d<Z>/dθ = -sin θ для RY(θ)|0>"""
        def f(w):
            state = apply_gate(init_zero_state(1), Gate(GateKind.RY, target=0), w[0])
            return expectation_z(state, 0)

        for theta in (-2.0, 0.0, 0.7, 3.0):
            grad = parameter_shift_gradient(f, np.array([theta]), workers=1)
            assert grad[0] == pytest.approx(-np.sin(theta), abs=1e-12)

    @pytest.mark.unit
    def test_sinusoid_exact(self):
        """Тест точности на сумме синусоид первой частоты"""
        a = np.array([1.0, -2.0, 0.5])
        b = np.array([0.3, 1.1, -0.4])
        w = np.array([0.2, -1.0, 2.5])
        grad = parameter_shift_gradient(lambda v: float(np.sum(a * np.sin(v + b))), w, workers=1)
        np.testing.assert_allclose(grad, a * np.cos(w + b), atol=1e-12)

    @pytest.mark.unit
    def test_constant_function(self):
        """Тест нулевого градиента константы"""
        grad = parameter_shift_gradient(lambda v: 4.2, np.ones(5), workers=1)
        np.testing.assert_array_equal(grad, np.zeros(5))

    @pytest.mark.unit
    def test_non_finite_value_names_index_and_sign(self):
        """Тест NumericError с индексом и знаком сдвига"""
        w = np.zeros(8)

        def f(v):
            return float("nan") if v[5] > 1.0 else float(np.sum(v))

        with pytest.raises(NumericError, match=re.escape("параметра 5 (+π/2)")):
            parameter_shift_gradient(f, w, workers=1)

    @pytest.mark.unit
    def test_non_finite_minus_shift(self):
        """Тест знака для отрицательного сдвига"""
        def f(v):
            return float("inf") if v[2] < -1.0 else 0.0

        with pytest.raises(NumericError, match=re.escape("параметра 2 (-π/2)")):
            parameter_shift_gradient(f, np.zeros(4), workers=1)

    @pytest.mark.unit
    def test_rejects_matrix_params(self):
        with pytest.raises(ValidationError):
            parameter_shift_gradient(lambda v: 0.0, np.zeros((2, 2)))

    @pytest.mark.unit
    def test_batched_length_checked(self):
        """Тест длины ответа пакетной функции"""
        with pytest.raises(ValidationError):
            parameter_shift_gradient(lambda stack: np.zeros(3), np.zeros(4), batched=True)


class TestCircuitGradients:
    """Тесты градиентов логитов схемы"""

    def setup_method(self):
        self.spec = build_circuit_spec()
        self.params = init_params(11, 0.6)
        self.x = np.array([0.4, 1.3, 2.2, 2.9])

    @pytest.mark.unit
    def test_matches_finite_difference(self):
        """Тест совпадения с центральной конечной разностью (h = 1e-6) на каждом сыром логите"""
        X = self.x.reshape(1, -1)
        _, jac = logit_jacobian(self.spec, self.params, X)
        h = 1e-6
        plus = forward_grid(self.spec, self.params + h * np.eye(72), X)[:, 0, :]
        minus = forward_grid(self.spec, self.params - h * np.eye(72), X)[:, 0, :]
        fd = (plus - minus) / (2 * h)
        np.testing.assert_allclose(jac[0], fd.T, atol=1e-6)

        def f(w):
            return float(forward(self.spec, w, self.x)[1])

        np.testing.assert_allclose(parameter_shift_gradient(f, self.params, workers=1), fd[:, 1],
                                   atol=1e-6)

    @pytest.mark.unit
    def test_batched_equals_scalar(self):
        """Тест пакетного режима против поштучного"""
        def scalar(w):
            return float(forward(self.spec, w, self.x)[2])

        def batched(stack):
            return forward_grid(self.spec, stack, self.x.reshape(1, -1))[:, 0, 2]

        np.testing.assert_allclose(
            parameter_shift_gradient(batched, self.params, batched=True),
            parameter_shift_gradient(scalar, self.params, workers=1),
            atol=1e-13,
        )

    @pytest.mark.unit
    def test_thread_pool_bitwise_identical(self):
        """Тест: результат пула потоков не зависит от порядка завершения"""
        def f(w):
            return float(forward(self.spec, w, self.x)[0])

        serial = parameter_shift_gradient(f, self.params, workers=1)
        pooled = parameter_shift_gradient(f, self.params, workers=4)
        np.testing.assert_array_equal(serial, pooled)

    @pytest.mark.unit
    def test_logit_jacobian(self):
        """Тест якобиана логитов"""
        X = np.array([self.x, [2.0, 0.1, 1.5, 0.3]])
        logits, jac = logit_jacobian(self.spec, self.params, X)
        assert logits.shape == (2, 3)
        assert jac.shape == (2, 3, 72)
        np.testing.assert_allclose(logits, forward_batch(self.spec, self.params, X), atol=1e-14)

        def f(w):
            return float(forward(self.spec, w, X[1])[0])

        np.testing.assert_allclose(jac[1, 0], parameter_shift_gradient(f, self.params, workers=1),
                                   atol=1e-13)

    @pytest.mark.unit
    def test_chain_rule_gradient(self):
        """Тест цепного правила с линейной функцией логитов"""
        X = self.x.reshape(1, -1)
        weights = np.array([[1.0, -0.5, 2.0]])
        grad = chain_rule_gradient(self.spec, self.params, X, lambda logits: weights)
        _, jac = logit_jacobian(self.spec, self.params, X)
        np.testing.assert_allclose(grad, np.einsum("bk,bkp->p", weights, jac), atol=1e-14)

        def f(w):
            return float(weights[0] @ forward(self.spec, w, self.x))

        np.testing.assert_allclose(grad, parameter_shift_gradient(f, self.params, workers=1),
                                   atol=1e-12)
