"""
Общие фикстуры тестов.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.circuit import build_circuit_spec  # noqa: E402

IRIS_NAMES = ("setosa", "versicolor", "virginica")
DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "raw"


def write_synthetic_iris(path: Path, per_class: int = 50, seed: int = 0) -> Path:
    """Три разделимых облака по 4 признака в формате Iris."""
    rng = np.random.default_rng(seed)
    centers = np.array([[5.0, 3.4, 1.5, 0.2], [5.9, 2.8, 4.3, 1.3], [6.6, 3.0, 5.6, 2.0]])
    lines = []
    for label, center in enumerate(centers):
        for row in center + rng.normal(0.0, 0.15, size=(per_class, 4)):
            values = ",".join(f"{v:.3f}" for v in row)
            lines.append(f"{values},Iris-{IRIS_NAMES[label]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def spec():
    return build_circuit_spec()


@pytest.fixture
def iris_csv(tmp_path):
    return write_synthetic_iris(tmp_path / "iris.csv")


@pytest.fixture(scope="session")
def prepared_iris(tmp_path_factory):
    """Синтетический Iris после масштабирования, разбиение 35/10/5, класс 2 забывается"""
    from pipeline.data_agent import DataAgent, DataConfig

    path = write_synthetic_iris(tmp_path_factory.mktemp("iris") / "iris.csv")
    return DataAgent().run(DataConfig(name="iris", path=str(path)), seed=0, forget_class=2)
