"""
Quantum Unlearning Pipeline - вариационный квантовый классификатор и разобучение класса.

Этот пакет содержит:
- Симулятор вектора состояния и схему классификатора на 6 кубитах
- Градиенты по правилу сдвига параметров и оптимизатор Adam
- Агентов подготовки данных, обучения, разобучения, оценки, абляций и экспорта
"""

from .ablation_agent import AblationAgent
from .circuit import CircuitSpec, build_circuit_spec, forward, forward_batch, predict_proba
from .data_agent import DataAgent, DataConfig, Dataset, SplitPartition
from .evaluation_agent import EvaluationAgent, EvalReport, KlReport
from .export_agent import ExportAgent
from .training_agent import TrainConfig, TrainingAgent
from .unlearning_agent import ForgetTarget, UnlearnConfig, UnlearningAgent
from .utils import load_json, save_json

__all__ = [
    "AblationAgent",
    "CircuitSpec",
    "build_circuit_spec",
    "forward",
    "forward_batch",
    "predict_proba",
    "DataAgent",
    "DataConfig",
    "Dataset",
    "SplitPartition",
    "EvaluationAgent",
    "EvalReport",
    "KlReport",
    "ExportAgent",
    "TrainConfig",
    "TrainingAgent",
    "ForgetTarget",
    "UnlearnConfig",
    "UnlearningAgent",
    "load_json",
    "save_json",
]
