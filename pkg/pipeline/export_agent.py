# pipeline/export_agent.py

import csv
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from prettytable import ALL, PrettyTable

from .base_agent import BaseAgent
from .constants import HISTORY_FILE
from .evaluation_agent import ConfusionMatrix, EvalReport, KlReport
from .interfaces import ModelStage
from .utils import save_json, write_csv
from .validation_mixin import ValidationMixin

REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
SWEEP_COLUMNS = [
    "setting", "forget_class", "test_acc_before", "test_acc_after",
    "retained_acc_after", "p_f_before", "p_f_after",
]


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


class ExportAgent(BaseAgent, ValidationMixin):
    """
    Агент экспорта результатов.

    Поддерживаемые форматы:
    - CSV: история обучения, матрицы ошибок, таблицы абляций
    - JSON: машиночитаемый отчёт
    - TXT: выровненные таблицы (prettytable)
    """

    def __init__(self, overwrite_existing: bool = True):
        BaseAgent.__init__(self, name="ExportAgent")
        ValidationMixin.__init__(self)
        self.overwrite_existing = overwrite_existing

    def validate_output_dir(self, output_dir: Path) -> Path:
        """
        Raises:
            ValueError: Путь существует и не является директорией
        """
        output_dir = Path(output_dir)
        if output_dir.exists() and not output_dir.is_dir():
            raise ValueError(f"Путь указывает на файл, а не на директорию: {output_dir}")
        if not output_dir.exists():
            output_dir.mkdir(parents=True, exist_ok=True)
            self.log_with_emoji("info", "📁", f"Создана директория: {output_dir}")
        return output_dir

    # CSV

    def write_history(self, rows: List[Dict[str, Any]], output_dir: Path,
                      filename: str = HISTORY_FILE) -> Path:
        """История обучения (iteration, train_loss, val_loss, lr) или шагов разобучения."""
        path = write_csv(rows, self.validate_output_dir(output_dir) / filename)
        self.log_with_emoji("info", "💾", f"История сохранена: {path} ({len(rows)} строк)")
        return path

    def write_confusion(self, cm: ConfusionMatrix, path: Path) -> Path:
        """Матрица ошибок как сетка целых чисел через запятую."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            for row in cm.counts.tolist():
                writer.writerow(row)
        return path

    # Текстовые таблицы

    def recall_table_text(self, report: EvalReport) -> str:
        table = PrettyTable()
        table.field_names = ["Класс", "Recall (B)", "Recall (A)", "Δ"]
        for row in report.recall_table:
            marker = " (забыт)" if row["class"] == report.forget_class else ""
            table.add_row([f"{row['class']}{marker}", _fmt(row["recall_before"], 3),
                           _fmt(row["recall_after"], 3), f"{row['delta']:+.3f}"])
        table.align = "r"
        return table.get_string()

    def models_table_text(self, report: EvalReport) -> str:
        table = PrettyTable()
        table.field_names = ["Модель", "Accuracy", "Retained acc", f"p(f={report.forget_class}|x)"]
        for stage, model in report.models.items():
            table.add_row([stage, _fmt(model.accuracy), _fmt(model.retained_accuracy), _fmt(model.forget_prob)])
        table.align = "r"
        table.align["Модель"] = "l"
        return table.get_string()

    def kl_table_text(self, reports: Dict[str, KlReport]) -> str:
        table = PrettyTable()
        table.field_names = ["Цель", "KL mean", "KL std", "median", "max", "p_f gold", "p_f unlearned", "пропущено"]
        for name, kl in reports.items():
            table.add_row([name, _fmt(kl.mean), _fmt(kl.std), _fmt(kl.median), _fmt(kl.max),
                           _fmt(kl.mean_forget_prob_gold), _fmt(kl.mean_forget_prob_unlearned), kl.skipped])
        table.align = "r"
        table.align["Цель"] = "l"
        table.hrules = ALL
        return table.get_string()

    def render_report(self, report: EvalReport) -> str:
        """Сводный текстовый отчёт: полнота до/после, модели, KL до gold, перераспределение."""
        sections = [
            f"Забываемый класс: {report.forget_class}",
            "",
            "Полнота по классам до (B) и после (A) разобучения",
            self.recall_table_text(report),
            "",
            "Модели на тестовой выборке",
            self.models_table_text(report),
        ]

        original = report.models.get(ModelStage.ORIGINAL.value)
        unlearned = report.models.get(ModelStage.UNLEARNED.value)
        if original and unlearned and original.forget_prob is not None and unlearned.forget_prob is not None:
            sections += ["", f"p(f|x) на забытом классе: {original.forget_prob:.4f} → {unlearned.forget_prob:.4f}"]

        kl_reports = {}
        if report.kl is not None:
            kl_reports[ModelStage.UNLEARNED.value] = report.kl
        if report.kl_uniform is not None:
            kl_reports[ModelStage.UNLEARNED_UNIFORM.value] = report.kl_uniform
        if kl_reports:
            direction = report.metadata.get("kl_direction", "")
            sections += ["", f"KL до gold на оставшихся классах ({direction}, nats)", self.kl_table_text(kl_reports)]

        if report.redistribution:
            table = PrettyTable()
            table.field_names = ["Модель", "Доли предсказаний", "Основной класс", "Доля"]
            for stage, info in report.redistribution.items():
                table.add_row([stage, ", ".join(f"{s:.3f}" for s in info["shares"]),
                               info["dominant_retained_class"], _fmt(info["dominant_share"], 3)])
            sections += ["", "Куда уходят образцы забытого класса", table.get_string()]

        if report.param_delta is not None:
            delta = report.param_delta
            sections += ["", f"|Δw|: max={delta.max:.4f}, mean={delta.mean:.4f}, l2={delta.l2:.4f}"]

        return "\n".join(sections) + "\n"

    def render_sweep(self, axis: str, rows: Sequence[Dict[str, Any]]) -> str:
        table = PrettyTable()
        table.field_names = [axis, "f", "Test acc (B)", "Test acc (A)", "Retained acc (A)", "p_f (B)", "p_f (A)"]
        for row in rows:
            table.add_row([row["setting"], row["forget_class"], _fmt(row["test_acc_before"], 3),
                           _fmt(row["test_acc_after"], 3), _fmt(row["retained_acc_after"], 3),
                           _fmt(row["p_f_before"], 3), _fmt(row["p_f_after"], 3)])
        table.align = "r"
        return table.get_string() + "\n"

    # Запись

    def write_report(self, report: EvalReport, output_dir: Path) -> List[Path]:
        """report.json, report.txt и confusion_<стадия>.csv"""
        output_dir = self.validate_output_dir(output_dir)
        created = [save_json(report.to_dict(), output_dir / REPORT_JSON)]

        text_path = output_dir / REPORT_TXT
        text_path.write_text(self.render_report(report), encoding="utf-8")
        created.append(text_path)

        for stage, model in report.models.items():
            created.append(self.write_confusion(model.confusion, output_dir / f"confusion_{stage}.csv"))
        return created

    def write_sweep(self, axis: str, rows: Sequence[Dict[str, Any]], output_dir: Path) -> List[Path]:
        """sweep.csv, sweep.json и sweep.txt одной оси абляции."""
        output_dir = self.validate_output_dir(output_dir)
        rows = list(rows)
        created = [
            write_csv(rows, output_dir / "sweep.csv", fieldnames=SWEEP_COLUMNS),
            save_json({"axis": axis, "rows": rows}, output_dir / "sweep.json"),
        ]
        text_path = output_dir / "sweep.txt"
        text_path.write_text(self.render_sweep(axis, rows), encoding="utf-8")
        created.append(text_path)
        return created

    def run(self, report: EvalReport, output_path: Path) -> List[Path]:
        operation_name = "экспорт отчёта"
        self.start_operation(operation_name)
        try:
            created = self.write_report(report, output_path)
            for path in created:
                size_kb = path.stat().st_size / 1024
                self.log_with_emoji("info", "   ", f"{path.name}: {size_kb:.1f} KB")
            self.log_with_emoji("info", "✅", f"Создано файлов: {len(created)}")
            self.end_operation(operation_name, success=True)
            return created
        except Exception as e:
            self.end_operation(operation_name, success=False)
            self.handle_error(e, operation_name)
