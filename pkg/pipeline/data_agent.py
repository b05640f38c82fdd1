# pipeline/data_agent.py

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .base_agent import BaseAgent
from .constants import (
    COVERTYPE_CLASSES,
    COVERTYPE_N_FEATURES,
    DEFAULT_COVERTYPE_CAP,
    DEFAULT_DATA_FILES,
    DEFAULT_SPLITS,
    IRIS_LABELS,
    IRIS_N_FEATURES,
    N_FEATURES,
    SCALE_UPPER,
    SUPPORTED_DATASETS,
)
from .interfaces import DataFormatError, ValidationError
from .settings import SETTINGS
from .validation_mixin import ValidationMixin

logger = logging.getLogger(__name__)


@dataclass
class DataConfig:
    """Параметры загрузки и разбиения данных"""
    name: str = "iris"
    path: Optional[str] = None  # по умолчанию DATA_DIR/<имя файла набора>
    header: bool = False
    train_per_class: Optional[int] = None
    val_per_class: Optional[int] = None
    test_per_class: Optional[int] = None
    covertype_cap: int = DEFAULT_COVERTYPE_CAP

    def resolved_path(self) -> Path:
        if self.path:
            return Path(self.path)
        return Path(SETTINGS.paths.data_dir) / DEFAULT_DATA_FILES[self.name]

    def per_class(self) -> Dict[str, int]:
        defaults = DEFAULT_SPLITS[self.name]
        return {
            "train": self.train_per_class if self.train_per_class is not None else defaults["train"],
            "val": self.val_per_class if self.val_per_class is not None else defaults["val"],
            "test": self.test_per_class if self.test_per_class is not None else defaults["test"],
        }


@dataclass
class Dataset:
    """Матрица признаков и метки классов"""
    X: np.ndarray
    y: np.ndarray
    name: str

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DataFormatError(
                f"{self.name}: {self.X.shape[0] if self.X.ndim else 0} строк признаков, {self.y.shape[0]} меток"
            )

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def subset(self, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.X[idx], self.y[idx]

    def class_counts(self) -> Dict[int, int]:
        labels, counts = np.unique(self.y, return_counts=True)
        return {int(k): int(c) for k, c in zip(labels, counts)}


def _index_array(values: Sequence[int] = ()) -> np.ndarray:
    return np.asarray(sorted(int(v) for v in values), dtype=np.int64)


@dataclass(frozen=True)
class SplitPartition:
    """Индексы train/val/test и разбиение train на F (забываемый класс) и A (якоря)"""
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int
    forget_class: Optional[int] = None
    forget: np.ndarray = field(default_factory=_index_array)
    anchor: np.ndarray = field(default_factory=_index_array)
    anchor_fraction: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
            "forget_class": self.forget_class,
            "forget": self.forget.tolist(),
            "anchor": self.anchor.tolist(),
            "anchor_fraction": self.anchor_fraction,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SplitPartition":
        return cls(
            train=_index_array(data["train"]),
            val=_index_array(data["val"]),
            test=_index_array(data["test"]),
            seed=int(data["seed"]),
            forget_class=data.get("forget_class"),
            forget=_index_array(data.get("forget", [])),
            anchor=_index_array(data.get("anchor", [])),
            anchor_fraction=float(data.get("anchor_fraction", 1.0)),
        )

    def same_split(self, other: "SplitPartition") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("train", "val", "test")
        )


@dataclass(frozen=True)
class PcaModel:
    """Главные компоненты, обученные на train"""
    mean: np.ndarray
    components: np.ndarray  # (k, d), строки ортонормированы
    explained_variance: np.ndarray
    residual_variance: float = 0.0  # сумма собственных значений за пределами k


@dataclass(frozen=True)
class ScalerStats:
    """Минимум и максимум столбцов по train"""
    min: np.ndarray
    max: np.ndarray
    upper: float = SCALE_UPPER

    def transform(self, X: np.ndarray) -> np.ndarray:
        scaled = self.upper * (np.asarray(X, dtype=np.float64) - self.min) / (self.max - self.min)
        return np.clip(scaled, 0.0, self.upper)


# Загрузка CSV

def _read_rows(path: Path, header: bool):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Файл данных не найден: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        for row_number, row in enumerate(reader, start=1):
            if header and row_number == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            yield row_number, [cell.strip() for cell in row]


def _parse_features(row: Sequence[str], row_number: int, path: Path) -> list:
    try:
        values = [float(cell) for cell in row]
    except ValueError:
        raise DataFormatError(f"{path}: нечисловое значение признака в строке {row_number}: {row}")
    if not all(np.isfinite(values)):
        raise DataFormatError(f"{path}: нечисловое значение признака в строке {row_number}")
    return values


def load_iris(path: Path, header: bool = False) -> Dataset:
    """
    Загружает Iris: 4 числовых столбца и метка.

    Метки setosa, versicolor, virginica (допускается префикс "Iris-") отображаются в 0, 1, 2.

    Raises:
        FileNotFoundError: Файл не найден
        DataFormatError: Неверное число столбцов, нечисловой признак или неизвестная метка
    """
    path = Path(path)
    features, labels = [], []
    expected = IRIS_N_FEATURES + 1

    for row_number, row in _read_rows(path, header):
        if len(row) != expected:
            raise DataFormatError(
                f"{path}: строка {row_number} содержит {len(row)} столбцов, ожидалось {expected}"
            )
        features.append(_parse_features(row[:IRIS_N_FEATURES], row_number, path))

        label = row[IRIS_N_FEATURES].lower()
        if label.startswith("iris-"):
            label = label[len("iris-"):]
        if label not in IRIS_LABELS:
            raise DataFormatError(f"{path}: неизвестная метка '{row[IRIS_N_FEATURES]}' в строке {row_number}")
        labels.append(IRIS_LABELS[label])

    if not features:
        raise DataFormatError(f"{path}: файл не содержит строк данных")

    dataset = Dataset(np.array(features), np.array(labels), "iris")
    logger.info(f"📂 Iris загружен: {dataset.n_samples} строк, классы {dataset.class_counts()}")
    return dataset


def load_covertype(path: Path, selected_classes: Sequence[int] = COVERTYPE_CLASSES,
                   per_class_cap: Optional[int] = DEFAULT_COVERTYPE_CAP, seed: int = 0,
                   header: bool = False) -> Dataset:
    """
    Загружает Covertype (54 признака и целочисленная метка).

    Сохраняются только строки с метками из selected_classes, перенумерованные
    по порядку (3→0, 5→1, 7→2). Не более per_class_cap строк на класс:
    первые вхождения после перемешивания с данным seed.

    Raises:
        FileNotFoundError: Файл не найден
        DataFormatError: Неверное число столбцов или нечисловое значение
    """
    path = Path(path)
    remap = {int(label): k for k, label in enumerate(selected_classes)}
    expected = COVERTYPE_N_FEATURES + 1
    features, labels = [], []

    for row_number, row in _read_rows(path, header):
        if len(row) != expected:
            raise DataFormatError(
                f"{path}: строка {row_number} содержит {len(row)} столбцов, ожидалось {expected}"
            )
        try:
            raw_label = int(row[-1])
        except ValueError:
            raise DataFormatError(f"{path}: нецелая метка '{row[-1]}' в строке {row_number}")
        if raw_label not in remap:
            continue
        features.append(_parse_features(row[:-1], row_number, path))
        labels.append(remap[raw_label])

    if not features:
        raise DataFormatError(f"{path}: нет строк с метками {list(selected_classes)}")

    X = np.array(features)
    y = np.array(labels, dtype=np.int64)

    if per_class_cap is not None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(y))
        taken = {k: 0 for k in remap.values()}
        keep = []
        for i in order:
            if taken[y[i]] < per_class_cap:
                taken[y[i]] += 1
                keep.append(i)
        keep = np.sort(np.asarray(keep, dtype=np.int64))
        X, y = X[keep], y[keep]

    dataset = Dataset(X, y, "covertype")
    logger.info(f"📂 Covertype загружен: {dataset.n_samples} строк, классы {dataset.class_counts()}")
    return dataset


# PCA

def fit_pca(X: np.ndarray, k: int = N_FEATURES) -> PcaModel:
    """
    Главные компоненты через собственное разложение выборочной ковариации.

    Знак каждой компоненты фиксирован: наибольшая по модулю координата положительна.

    Raises:
        DataFormatError: n <= k или ранг центрированных данных меньше k
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n <= k:
        raise DataFormatError(f"PCA: нужно больше {k} строк, получено {n}")

    mean = X.mean(axis=0)
    centered = X - mean
    rank = int(np.linalg.matrix_rank(centered))
    if rank < k:
        raise DataFormatError(f"PCA: вырожденная ковариация, ранг {rank} < {k}")

    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order[:k]].T.copy()

    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivots])
    components *= signs[:, None]

    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=eigvals[:k].copy(),
        residual_variance=float(eigvals[k:].sum()),
    )


def transform_pca(model: PcaModel, X: np.ndarray) -> np.ndarray:
    """Проекция центрированных строк на компоненты."""
    return (np.asarray(X, dtype=np.float64) - model.mean) @ model.components.T


# Масштабирование

def fit_minmax(X: np.ndarray, upper: float = SCALE_UPPER) -> ScalerStats:
    """
    Raises:
        DataFormatError: Постоянный столбец
    """
    X = np.asarray(X, dtype=np.float64)
    col_min, col_max = X.min(axis=0), X.max(axis=0)
    constant = np.flatnonzero(col_max <= col_min)
    if constant.size:
        raise DataFormatError(f"Постоянные столбцы {constant.tolist()}: масштабирование не определено")
    return ScalerStats(col_min, col_max, upper)


def minmax_scale(X: np.ndarray, upper: float = SCALE_UPPER) -> Tuple[np.ndarray, ScalerStats]:
    """x' = upper·(x - min)/(max - min) по статистике X."""
    stats = fit_minmax(X, upper)
    return stats.transform(X), stats


# Разбиения

def split(dataset: Dataset, seed: int, per_class: Dict[str, int]) -> SplitPartition:
    """
    Стратифицированное разбиение с фиксированным seed.

    Raises:
        DataFormatError: В каком-то классе меньше образцов, чем требуется
    """
    need = per_class["train"] + per_class["val"] + per_class["test"]
    counts = dataset.class_counts()
    short = {k: c for k, c in counts.items() if c < need}
    if short or not counts:
        raise DataFormatError(
            f"Недостаточно образцов: нужно {need} на класс ({per_class}), есть {counts}"
        )

    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for label in sorted(counts):
        idx = rng.permutation(np.flatnonzero(dataset.y == label))
        n_train, n_val = per_class["train"], per_class["val"]
        train.extend(idx[:n_train])
        val.extend(idx[n_train:n_train + n_val])
        test.extend(idx[n_train + n_val:need])

    return SplitPartition(_index_array(train), _index_array(val), _index_array(test), seed)


def partition_forget_anchor(partition: SplitPartition, dataset: Dataset, forget_class: int,
                            anchor_fraction: float = 1.0, seed: Optional[int] = None) -> SplitPartition:
    """
    F = train с меткой forget_class, A = остальные train.

    При anchor_fraction < 1 якоря прореживаются стратифицированно по классам.

    Raises:
        ValidationError: Неверный класс или доля
        DataFormatError: F пусто
    """
    if not 0 <= forget_class < int(dataset.y.max()) + 1:
        raise ValidationError(f"Забываемый класс {forget_class} отсутствует в данных")
    if not 0.0 < anchor_fraction <= 1.0:
        raise ValidationError(f"Доля якорей должна быть в (0, 1], получено {anchor_fraction}")

    train_labels = dataset.y[partition.train]
    forget = partition.train[train_labels == forget_class]
    if forget.size == 0:
        raise DataFormatError(f"Нет обучающих образцов класса {forget_class}")

    anchor = partition.train[train_labels != forget_class]
    if anchor_fraction < 1.0:
        rng = np.random.default_rng(partition.seed if seed is None else seed)
        kept = []
        for label in sorted(set(dataset.y[anchor].tolist())):
            members = anchor[dataset.y[anchor] == label]
            n_keep = max(1, int(round(anchor_fraction * members.size)))
            kept.extend(rng.choice(members, size=n_keep, replace=False))
        anchor = _index_array(kept)

    return SplitPartition(
        train=partition.train,
        val=partition.val,
        test=partition.test,
        seed=partition.seed,
        forget_class=int(forget_class),
        forget=_index_array(forget),
        anchor=_index_array(anchor),
        anchor_fraction=float(anchor_fraction),
    )


def calibration_subset(forget: np.ndarray, fraction: float = 1.0, seed: int = 0) -> np.ndarray:
    """Подмножество S ⊆ F для построения цели; при fraction = 1 возвращает F."""
    forget = np.asarray(forget, dtype=np.int64)
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"Доля калибровки должна быть в (0, 1], получено {fraction}")
    if fraction >= 1.0:
        return forget.copy()
    n_keep = max(1, int(round(fraction * forget.size)))
    rng = np.random.default_rng(seed)
    return _index_array(rng.choice(forget, size=n_keep, replace=False))


@dataclass
class PreparedData:
    """Масштабированный набор и его разбиение"""
    dataset: Dataset
    partition: SplitPartition
    scaler: ScalerStats
    pca: Optional[PcaModel] = None

    def xy(self, idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.dataset.subset(idx)


class DataAgent(BaseAgent, ValidationMixin):
    """
    Агент подготовки данных.

    Загрузка CSV, отбор классов, PCA (Covertype), масштабирование в [0, π]
    по статистике train и стратифицированные разбиения.
    """

    def __init__(self):
        BaseAgent.__init__(self, name="DataAgent")
        ValidationMixin.__init__(self)

    def load(self, config: DataConfig, seed: int) -> Dataset:
        if config.name not in SUPPORTED_DATASETS:
            raise ValidationError(f"Неизвестный набор данных '{config.name}'")
        path = config.resolved_path()
        self.validate_data_file(path)

        if config.name == "iris":
            return load_iris(path, header=config.header)
        return load_covertype(path, per_class_cap=config.covertype_cap, seed=seed, header=config.header)

    def prepare(self, config: DataConfig, seed: int) -> PreparedData:
        """
        Загружает набор, разбивает и масштабирует признаки по train.
        """
        raw = self.load(config, seed)
        partition = split(raw, seed, config.per_class())

        X = raw.X
        pca = None
        if X.shape[1] != N_FEATURES:
            pca = fit_pca(X[partition.train], N_FEATURES)
            X = transform_pca(pca, X)
            self.log_with_emoji(
                "info", "📐",
                f"PCA {raw.X.shape[1]}→{N_FEATURES}: дисперсия {np.round(pca.explained_variance, 4).tolist()}"
            )

        scaler = fit_minmax(X[partition.train])
        dataset = Dataset(scaler.transform(X), raw.y, raw.name)

        self.log_with_emoji(
            "info", "📊",
            f"{raw.name}: train={partition.train.size}, val={partition.val.size}, test={partition.test.size}"
        )
        return PreparedData(dataset, partition, scaler, pca)

    def with_forget_class(self, prepared: PreparedData, forget_class: int,
                          anchor_fraction: float = 1.0) -> PreparedData:
        forget_class = self.validate_forget_class(forget_class)
        partition = partition_forget_anchor(prepared.partition, prepared.dataset, forget_class, anchor_fraction)
        self.log_with_emoji(
            "info", "🎯",
            f"Класс {forget_class}: |F|={partition.forget.size}, |A|={partition.anchor.size}"
        )
        return PreparedData(prepared.dataset, partition, prepared.scaler, prepared.pca)

    def run(self, config: DataConfig, seed: int, forget_class: Optional[int] = None,
            anchor_fraction: float = 1.0) -> PreparedData:
        operation_name = f"подготовка данных {config.name}"
        self.start_operation(operation_name)
        try:
            prepared = self.prepare(config, seed)
            if forget_class is not None:
                prepared = self.with_forget_class(prepared, forget_class, anchor_fraction)
            self.end_operation(operation_name, success=True)
            return prepared
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
