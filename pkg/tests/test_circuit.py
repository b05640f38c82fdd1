#!/usr/bin/env python3
"""
Тесты схемы классификатора
"""

import math
import os
import sys

import numpy as np
import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.circuit import (
    build_circuit_spec,
    forward,
    forward_batch,
    forward_grid,
    init_params,
    predict,
    predict_proba,
    predict_proba_batch,
    simulate_states,
    softmax,
)
from pipeline.constants import N_PARAMS, PARAM_ORDER_TAG
from pipeline.interfaces import NumericError, ValidationError
from pipeline.statevector import AngleKind, GateKind


def _dense_logits(spec, params, x):
    """Независимая симуляция умножением на матрицы 64 x 64"""
    n = spec.n_qubits
    dim = 1 << n
    state = np.zeros(dim, dtype=np.complex128)
    state[0] = 1.0
    for gate in spec.gates:
        if gate.kind is GateKind.CX:
            matrix = np.zeros((dim, dim), dtype=np.complex128)
            for i in range(dim):
                j = i ^ (1 << gate.target) if (i >> gate.control) & 1 else i
                matrix[j, i] = 1.0
        else:
            theta = gate.source.bind(np.reshape(x, (1, -1)), np.reshape(params, (1, -1)))[0]
            if gate.kind is GateKind.RY:
                c, s = math.cos(theta / 2), math.sin(theta / 2)
                single = np.array([[c, -s], [s, c]], dtype=np.complex128)
            else:
                single = np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])
            matrix = np.array([[1.0 + 0j]])
            for q in reversed(range(n)):
                matrix = np.kron(matrix, single if q == gate.target else np.eye(2))
        state = matrix @ state
    probs = np.abs(state) ** 2
    bits = np.arange(dim)
    return np.array([
        probs[((bits >> q) & 1) == 0].sum() - probs[((bits >> q) & 1) == 1].sum()
        for q in spec.readout_qubits
    ])


class TestCircuitSpec:
    """Тесты структуры схемы"""

    def setup_method(self):
        self.spec = build_circuit_spec()

    @pytest.mark.unit
    def test_parameter_count(self):
        """Тест 72 параметров, каждый ровно один раз"""
        indices = [g.source.param_index for g in self.spec.gates if g.source.param_index is not None]
        assert self.spec.n_params == N_PARAMS == 72
        assert sorted(indices) == list(range(72))

    @pytest.mark.unit
    def test_block_sizes(self):
        """Тест структуры FM, A, FM, A"""
        assert self.spec.block_sizes == (13, 54, 13, 54)
        assert len(self.spec.gates) == 134

    @pytest.mark.unit
    def test_feature_map_layout(self):
        """Тест состава блока карты признаков"""
        fm = self.spec.gates[:13]
        assert [g.kind for g in fm[:4]] == [GateKind.RY] * 4
        assert [g.source.indices for g in fm[:4]] == [(0,), (1,), (2,), (3,)]
        for k, (a, b) in enumerate([(0, 1), (1, 2), (2, 3)]):
            cx1, rz, cx2 = fm[4 + 3 * k: 7 + 3 * k]
            assert (cx1.kind, cx1.control, cx1.target) == (GateKind.CX, a, b)
            assert rz.kind is GateKind.RZ
            assert rz.source.kind is AngleKind.FEATURE_PRODUCT
            assert rz.source.indices == (a, b)
            assert (cx2.kind, cx2.control, cx2.target) == (GateKind.CX, a, b)

    @pytest.mark.unit
    def test_parameter_order(self):
        """Тест порядка: блок, повтор, кубит, RY перед RZ"""
        second_ansatz = self.spec.gates[13 + 54 + 13:]
        first_rep = second_ansatz[:18]
        assert first_rep[0].kind is GateKind.RY
        assert first_rep[0].source.param_index == 36
        assert first_rep[1].kind is GateKind.RZ
        assert first_rep[1].source.param_index == 37
        assert first_rep[2].target == 1
        assert first_rep[2].source.param_index == 38
        ring = first_rep[12:]
        assert [(g.control, g.target) for g in ring] == [(q, (q + 1) % 6) for q in range(6)]
        assert self.spec.param_order_tag == PARAM_ORDER_TAG

    @pytest.mark.unit
    def test_deterministic_construction(self):
        """Тест одинаковой программы при каждом вызове"""
        assert build_circuit_spec() == self.spec

    @pytest.mark.unit
    def test_param_locality(self):
        """Тест: параметр p влияет ровно на один вентиль"""
        used = [gate.source.param_index for gate in self.spec.gates
                if gate.source.param_index is not None]
        assert sorted(used) == list(range(N_PARAMS))


class TestForward:
    """Тесты прямого прохода"""

    def setup_method(self):
        self.spec = build_circuit_spec()
        self.rng = np.random.default_rng(0)

    @pytest.mark.unit
    def test_zero_params_zero_features(self):
        """Тест тривиального случая: логиты (1, 1, 1)"""
        logits = forward(self.spec, np.zeros(72), np.zeros(4))
        np.testing.assert_allclose(logits, [1.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(predict_proba(self.spec, np.zeros(72), np.zeros(4)),
                                   [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    @pytest.mark.unit
    def test_matches_dense_oracle(self):
        """Тест совпадения с матричной симуляцией"""
        params = self.rng.uniform(-np.pi, np.pi, size=72)
        x = self.rng.uniform(0, np.pi, size=4)
        np.testing.assert_allclose(forward(self.spec, params, x),
                                   _dense_logits(self.spec, params, x), atol=1e-12)

    @pytest.mark.unit
    def test_logit_range_and_probability_sum(self):
        """Тест диапазона логитов и суммы вероятностей"""
        W = self.rng.uniform(-np.pi, np.pi, size=(100, 72))
        X = self.rng.uniform(0, np.pi, size=(100, 4))
        logits = forward_batch(self.spec, W, X)
        assert logits.shape == (100, 3)
        assert np.all(np.abs(logits) <= 1.0)
        probs = predict_proba_batch(self.spec, W, X)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.unit
    def test_batch_matches_single(self):
        """Тест пакетного и поштучного прохода"""
        params = init_params(3, 0.5)
        X = self.rng.uniform(0, np.pi, size=(5, 4))
        batch = forward_batch(self.spec, params, X, chunk_rows=2)
        for row, x in enumerate(X):
            np.testing.assert_allclose(batch[row], forward(self.spec, params, x), atol=1e-14)

    @pytest.mark.unit
    def test_predict_proba_is_softmax_of_forward(self):
        """Тест определения predict_proba"""
        params = init_params(1, 0.3)
        x = self.rng.uniform(0, np.pi, size=4)
        np.testing.assert_array_equal(predict_proba(self.spec, params, x),
                                      softmax(forward(self.spec, params, x)))

    @pytest.mark.unit
    def test_repeated_calls_identical(self):
        """Тест детерминизма"""
        params = init_params(2, 0.5)
        x = [0.3, 1.2, 2.0, 3.1]
        assert np.array_equal(forward(self.spec, params, x), forward(self.spec, params, x))

    @pytest.mark.unit
    def test_forward_grid_shape_and_values(self):
        """Тест сетки (параметры x образцы)"""
        stack = np.stack([init_params(s, 0.4) for s in range(3)])
        X = self.rng.uniform(0, np.pi, size=(4, 4))
        grid = forward_grid(self.spec, stack, X)
        assert grid.shape == (3, 4, 3)
        np.testing.assert_allclose(grid[2], forward_batch(self.spec, stack[2], X), atol=1e-14)

    @pytest.mark.unit
    def test_predict_argmax(self):
        """Тест предсказанного класса"""
        params = init_params(5, 0.8)
        X = self.rng.uniform(0, np.pi, size=(6, 4))
        np.testing.assert_array_equal(predict(self.spec, params, X),
                                      np.argmax(forward_batch(self.spec, params, X), axis=1))

    @pytest.mark.unit
    def test_wrong_feature_length(self):
        """Тест длины признаков"""
        with pytest.raises(ValidationError):
            forward(self.spec, np.zeros(72), np.zeros(3))

    @pytest.mark.unit
    def test_wrong_param_length(self):
        """Тест длины вектора параметров"""
        with pytest.raises(ValidationError):
            forward(self.spec, np.zeros(71), np.zeros(4))

    @pytest.mark.unit
    def test_non_finite_params(self):
        """Тест нечисловых параметров"""
        params = np.zeros(72)
        params[10] = np.nan
        with pytest.raises(NumericError):
            forward(self.spec, params, np.zeros(4))

    @pytest.mark.unit
    def test_full_circuit_norm_random_bindings(self):
        """Тест нормы состояния после всей схемы для 500 случайных привязок"""
        W = self.rng.uniform(-np.pi, np.pi, size=(500, N_PARAMS))
        X = self.rng.uniform(0, np.pi, size=(500, 4))
        states = simulate_states(self.spec, W, X)
        assert states.shape == (500, 64)
        norms = np.sum(np.abs(states) ** 2, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-12

    @pytest.mark.unit
    def test_states_consistent_with_logits(self):
        """Тест: логиты - <Z> на кубитах считывания состояния simulate_states"""
        params = init_params(5, 0.7)
        X = self.rng.uniform(0, np.pi, size=(3, 4))
        states = simulate_states(self.spec, params, X)
        probs = np.abs(states) ** 2
        indices = np.arange(64)
        for k, q in enumerate(self.spec.readout_qubits):
            signs = 1.0 - 2.0 * ((indices >> q) & 1)
            np.testing.assert_allclose(forward_batch(self.spec, params, X)[:, k],
                                       probs @ signs, atol=1e-12)


class TestSoftmax:
    """Тесты softmax"""

    @pytest.mark.unit
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)
        np.testing.assert_allclose(softmax([5.0, 5.0, 5.0]), [1 / 3] * 3, atol=1e-15)

    @pytest.mark.unit
    def test_one_hot_logit(self):
        """Тест (1, 0, 0) -> e/(e+2)"""
        probs = softmax([1.0, 0.0, 0.0])
        np.testing.assert_allclose(probs, [0.576, 0.212, 0.212], atol=1e-3)
        assert probs[0] == pytest.approx(math.e / (math.e + 2))

    @pytest.mark.unit
    def test_large_logits_stable(self):
        """Тест устойчивости при больших логитах"""
        probs = softmax([1000.0, 0.0, 0.0])
        assert np.all(np.isfinite(probs))
        assert probs[0] == pytest.approx(1.0)
