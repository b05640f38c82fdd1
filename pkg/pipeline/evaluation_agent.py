# pipeline/evaluation_agent.py

"""
Оценка качества разобучения.

Матрицы ошибок, полнота по классам, средняя вероятность забытого класса,
KL до эталонной (gold) модели с перенормировкой на оставшиеся классы
и сводка изменений параметров.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .base_agent import BaseAgent
from .circuit import CircuitSpec, predict_proba_batch
from .constants import (
    DEFAULT_KL_DIRECTION,
    HISTOGRAM_BINS,
    KL_DIRECTIONS,
    LOG_BASE,
    LOG_FLOOR,
    RENORM_FLOOR,
)
from .data_agent import Dataset, SplitPartition
from .interfaces import ModelStage, ValidationError
from .validation_mixin import ValidationMixin


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


@dataclass
class ConfusionMatrix:
    """Строки - истинные классы, столбцы - предсказанные"""
    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {"counts": self.counts.tolist(), "total": self.total}


@dataclass
class KlReport:
    """KL между эталонной и разобученной моделью на оставшихся классах"""
    per_sample: np.ndarray
    mean: float
    std: float
    median: float
    max: float
    retained_labels: List[int]
    mean_forget_prob_gold: float
    mean_forget_prob_unlearned: float
    skipped: int = 0
    direction: str = DEFAULT_KL_DIRECTION
    log_base: str = LOG_BASE

    def to_dict(self) -> Dict[str, Any]:
        # без округления: статистики пересчитываются из per_sample
        return {
            "per_sample": self.per_sample.tolist(),
            "mean": _finite_or_none(self.mean),
            "std": _finite_or_none(self.std),
            "median": _finite_or_none(self.median),
            "max": _finite_or_none(self.max),
            "n_samples": int(self.per_sample.size),
            "skipped": self.skipped,
            "retained_labels": self.retained_labels,
            "mean_forget_prob_gold": self.mean_forget_prob_gold,
            "mean_forget_prob_unlearned": self.mean_forget_prob_unlearned,
            "direction": self.direction,
            "log_base": self.log_base,
        }


@dataclass
class DeltaSummary:
    """Распределение |w - w_orig|"""
    histogram: List[int]
    bin_edges: List[float]
    max: float
    mean: float
    l2: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "histogram": self.histogram,
            "bin_edges": [round(e, 6) for e in self.bin_edges],
            "max": round(self.max, 6),
            "mean": round(self.mean, 6),
            "l2": round(self.l2, 6),
        }


@dataclass
class ModelEvaluation:
    """Метрики одной модели на тестовой выборке"""
    stage: str
    confusion: ConfusionMatrix
    recall: np.ndarray
    accuracy: float
    retained_accuracy: Optional[float]
    forget_prob: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "confusion": self.confusion.to_dict(),
            "recall": [round(float(r), 6) for r in self.recall],
            "accuracy": round(self.accuracy, 6),
            "retained_accuracy": None if self.retained_accuracy is None else round(self.retained_accuracy, 6),
            "forget_prob": None if self.forget_prob is None else round(self.forget_prob, 6),
        }


@dataclass
class EvalReport:
    """Сводный отчёт: модели, таблица полноты до/после, KL до gold"""
    forget_class: int
    models: Dict[str, ModelEvaluation]
    recall_table: List[Dict[str, Any]]
    redistribution: Dict[str, Any]
    kl: Optional[KlReport] = None
    kl_uniform: Optional[KlReport] = None
    param_delta: Optional[DeltaSummary] = None
    param_delta_uniform: Optional[DeltaSummary] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "forget_class": self.forget_class,
            "models": {name: m.to_dict() for name, m in self.models.items()},
            "recall_table": self.recall_table,
            "redistribution": self.redistribution,
            "kl_to_gold": self.kl.to_dict() if self.kl else None,
            "kl_to_gold_uniform": self.kl_uniform.to_dict() if self.kl_uniform else None,
            "param_delta": self.param_delta.to_dict() if self.param_delta else None,
            "param_delta_uniform": self.param_delta_uniform.to_dict() if self.param_delta_uniform else None,
            "metadata": self.metadata,
        }


# Метрики

def confusion_from_predictions(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValidationError("Пустая тестовая выборка")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def confusion_matrix(spec: CircuitSpec, params: np.ndarray, X: np.ndarray, y: np.ndarray) -> ConfusionMatrix:
    """Предсказание - argmax вероятностей; при равенстве меньший индекс класса."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("Пустая тестовая выборка")
    y_pred = np.argmax(predict_proba_batch(spec, params, X), axis=1)
    return confusion_from_predictions(y, y_pred, spec.n_classes)


def classwise_recall(cm: ConfusionMatrix) -> np.ndarray:
    """
    recall_k = cm[k,k] / сумма строки k

    Raises:
        ValidationError: Пустая строка класса
    """
    rows = cm.row_sums()
    empty = np.flatnonzero(rows == 0)
    if empty.size:
        raise ValidationError(f"Нет тестовых образцов для классов {empty.tolist()}")
    return np.diag(cm.counts) / rows


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.total)


def retained_accuracy(cm: ConfusionMatrix, forget_class: int) -> float:
    """Точность только на образцах оставшихся классов."""
    keep = np.arange(cm.n_classes) != forget_class
    correct = np.diag(cm.counts)[keep].sum()
    total = cm.counts[keep].sum()
    return float(correct / total) if total else 0.0


def mean_forget_prob(spec: CircuitSpec, params: np.ndarray, X: np.ndarray, forget_class: int) -> float:
    """Средняя p(f|x) по образцам."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("Пустое множество образцов")
    return float(predict_proba_batch(spec, params, X)[:, forget_class].mean())


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """
    KL(p || q) = Σ p_k log(p_k / q_k), натуральный логарифм.

    Слагаемые с p_k = 0 равны 0; q ограничено снизу LOG_FLOOR.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(f"Размеры распределений различаются: {p.shape} и {q.shape}")
    q = np.maximum(q, LOG_FLOOR)
    mask = p > 0
    value = float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))
    return max(value, 0.0)


def renormalize(probs: np.ndarray, labels: Sequence[int]) -> np.ndarray:
    """Ограничение распределений на labels и нормировка к 1 по строкам."""
    restricted = np.asarray(probs, dtype=np.float64)[..., list(labels)]
    return restricted / restricted.sum(axis=-1, keepdims=True)


def kl_to_gold(spec: CircuitSpec, w_gold: np.ndarray, w_unlearned: np.ndarray, X_retained: np.ndarray,
               retained_labels: Sequence[int], forget_class: int,
               direction: str = DEFAULT_KL_DIRECTION, logger=None) -> KlReport:
    """
    KL между перенормированными на retained_labels распределениями gold и разобученной модели.

    Образцы со знаменателем перенормировки < RENORM_FLOOR пропускаются и считаются.
    Дополнительно: средняя p(f|x) обеих моделей без перенормировки.
    """
    if direction not in KL_DIRECTIONS:
        raise ValidationError(f"Неизвестное направление KL '{direction}'")
    X_retained = np.asarray(X_retained, dtype=np.float64)
    if X_retained.ndim != 2 or X_retained.shape[0] == 0:
        raise ValidationError("Пустое множество образцов оставшихся классов")

    labels = [int(k) for k in retained_labels]
    p_gold = predict_proba_batch(spec, w_gold, X_retained)
    p_unl = predict_proba_batch(spec, w_unlearned, X_retained)

    mass_gold = p_gold[:, labels].sum(axis=1)
    mass_unl = p_unl[:, labels].sum(axis=1)
    valid = (mass_gold >= RENORM_FLOOR) & (mass_unl >= RENORM_FLOOR)
    skipped = int((~valid).sum())
    if skipped and logger is not None:
        logger.warning(f"⚠️ Пропущено {skipped} образцов: знаменатель перенормировки < {RENORM_FLOOR}")

    r_gold = renormalize(p_gold[valid], labels)
    r_unl = renormalize(p_unl[valid], labels)
    if direction == "gold_to_unlearned":
        per_sample = np.array([kl_divergence(a, b) for a, b in zip(r_gold, r_unl)])
    else:
        per_sample = np.array([kl_divergence(b, a) for a, b in zip(r_gold, r_unl)])

    if per_sample.size == 0:
        stats = (float("nan"),) * 4
    else:
        stats = (float(per_sample.mean()), float(per_sample.std()),
                 float(np.median(per_sample)), float(per_sample.max()))

    return KlReport(
        per_sample=per_sample,
        mean=stats[0],
        std=stats[1],
        median=stats[2],
        max=stats[3],
        retained_labels=labels,
        mean_forget_prob_gold=float(p_gold[:, forget_class].mean()),
        mean_forget_prob_unlearned=float(p_unl[:, forget_class].mean()),
        skipped=skipped,
        direction=direction,
    )


def param_delta_summary(w: np.ndarray, w_orig: np.ndarray, bins: int = HISTOGRAM_BINS) -> DeltaSummary:
    """
    Гистограмма |w - w_orig| в bins равных корзинах на [0, max].

    При нулевых изменениях - одна корзина со всеми координатами.
    """
    w = np.asarray(w, dtype=np.float64)
    w_orig = np.asarray(w_orig, dtype=np.float64)
    if w.shape != w_orig.shape:
        raise ValidationError(f"Длины векторов различаются: {w.shape} и {w_orig.shape}")

    deltas = np.abs(w - w_orig)
    max_delta = float(deltas.max(initial=0.0))
    if max_delta == 0.0:
        histogram, edges = [int(deltas.size)], [0.0, 0.0]
    else:
        counts, bin_edges = np.histogram(deltas, bins=bins, range=(0.0, max_delta))
        histogram, edges = counts.tolist(), bin_edges.tolist()

    return DeltaSummary(
        histogram=histogram,
        bin_edges=edges,
        max=max_delta,
        mean=float(deltas.mean()) if deltas.size else 0.0,
        l2=float(np.sqrt(np.sum(deltas * deltas))),
    )


def redistribution(cm: ConfusionMatrix, forget_class: int) -> Dict[str, Any]:
    """Куда уходят предсказания для образцов забытого класса."""
    row = cm.counts[forget_class]
    total = int(row.sum())
    shares = (row / total).tolist() if total else [0.0] * cm.n_classes
    retained = [k for k in range(cm.n_classes) if k != forget_class]
    dominant = max(retained, key=lambda k: (row[k], -k))
    return {
        "forget_class": forget_class,
        "n_samples": total,
        "shares": [round(s, 6) for s in shares],
        "dominant_retained_class": int(dominant),
        "dominant_share": round(shares[dominant], 6),
    }


def recall_table(before: ModelEvaluation, after: ModelEvaluation) -> List[Dict[str, Any]]:
    """Полнота до и после разобучения по классам."""
    return [
        {
            "class": k,
            "recall_before": round(float(rb), 6),
            "recall_after": round(float(ra), 6),
            "delta": round(float(ra - rb), 6),
        }
        for k, (rb, ra) in enumerate(zip(before.recall, after.recall))
    ]


class EvaluationAgent(BaseAgent, ValidationMixin):
    """
    Агент оценки исходной, разобученной и эталонной моделей.
    """

    def __init__(self, spec: CircuitSpec, kl_direction: str = DEFAULT_KL_DIRECTION):
        BaseAgent.__init__(self, name="EvaluationAgent")
        ValidationMixin.__init__(self)
        if kl_direction not in KL_DIRECTIONS:
            raise ValidationError(f"Неизвестное направление KL '{kl_direction}'")
        self.spec = spec
        self.kl_direction = kl_direction

    def evaluate_model(self, stage: str, params: np.ndarray, dataset: Dataset,
                       partition: SplitPartition, forget_class: Optional[int]) -> ModelEvaluation:
        X_test, y_test = dataset.subset(partition.test)
        cm = confusion_matrix(self.spec, params, X_test, y_test)
        recall = classwise_recall(cm)

        retained_acc, forget_prob = None, None
        if forget_class is not None:
            retained_acc = retained_accuracy(cm, forget_class)
            X_f = X_test[y_test == forget_class]
            if X_f.shape[0]:
                forget_prob = mean_forget_prob(self.spec, params, X_f, forget_class)

        evaluation = ModelEvaluation(stage, cm, recall, accuracy(cm), retained_acc, forget_prob)
        self.log_with_emoji(
            "info", "📊",
            f"{stage}: acc={evaluation.accuracy:.3f}, recall={np.round(recall, 3).tolist()}"
            + (f", p_f={forget_prob:.4f}" if forget_prob is not None else "")
        )
        return evaluation

    def kl_report(self, w_gold: np.ndarray, w_unlearned: np.ndarray, dataset: Dataset,
                  partition: SplitPartition, forget_class: int) -> KlReport:
        X_test, y_test = dataset.subset(partition.test)
        retained = [k for k in range(self.spec.n_classes) if k != forget_class]
        report = kl_to_gold(
            self.spec, w_gold, w_unlearned, X_test[y_test != forget_class], retained,
            forget_class, self.kl_direction, logger=self.logger,
        )
        self.log_with_emoji(
            "info", "📐",
            f"KL до gold: mean={report.mean:.4f} ± {report.std:.4f}, median={report.median:.4f}, "
            f"max={report.max:.4f}; p_f gold={report.mean_forget_prob_gold:.3f}, "
            f"unlearned={report.mean_forget_prob_unlearned:.3f}"
        )
        return report

    def run(self, params: Dict[str, np.ndarray], dataset: Dataset, partition: SplitPartition,
            forget_class: int) -> EvalReport:
        """
        Args:
            params: Параметры по стадиям: original и unlearned обязательны,
                    gold и unlearned_uniform необязательны
        """
        operation_name = "оценка моделей"
        self.start_operation(operation_name)
        try:
            forget_class = self.validate_forget_class(forget_class, self.spec.n_classes)
            for required in (ModelStage.ORIGINAL.value, ModelStage.UNLEARNED.value):
                if required not in params:
                    raise ValidationError(f"Не переданы параметры стадии '{required}'")

            models = {
                stage: self.evaluate_model(stage, w, dataset, partition, forget_class)
                for stage, w in params.items()
            }
            original = models[ModelStage.ORIGINAL.value]
            unlearned = models[ModelStage.UNLEARNED.value]

            report = EvalReport(
                forget_class=forget_class,
                models=models,
                recall_table=recall_table(original, unlearned),
                redistribution={
                    stage: redistribution(m.confusion, forget_class)
                    for stage, m in models.items() if stage != ModelStage.ORIGINAL.value
                },
                param_delta=param_delta_summary(params[ModelStage.UNLEARNED.value],
                                                params[ModelStage.ORIGINAL.value]),
                metadata={"kl_direction": self.kl_direction, "log_base": LOG_BASE},
            )

            uniform = ModelStage.UNLEARNED_UNIFORM.value
            if uniform in params:
                report.param_delta_uniform = param_delta_summary(params[uniform], params[ModelStage.ORIGINAL.value])

            gold = params.get(ModelStage.GOLD.value)
            if gold is not None:
                report.kl = self.kl_report(gold, params[ModelStage.UNLEARNED.value], dataset, partition, forget_class)
                if uniform in params:
                    report.kl_uniform = self.kl_report(gold, params[uniform], dataset, partition, forget_class)
            else:
                self.log_with_emoji("warning", "⚠️", "Gold модель не передана, KL до gold не вычисляется")

            self.end_operation(operation_name, success=True)
            return report
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
