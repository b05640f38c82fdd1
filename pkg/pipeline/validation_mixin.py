# pipeline/validation_mixin.py

from pathlib import Path
from typing import Optional, Set

import numpy as np

from .constants import ALLOWED_DATA_EXTENSIONS, N_CLASSES
from .interfaces import NumericError, ValidationError


class ValidationMixin:
    """
    Миксин для валидации файлов и входных массивов.

    Общие проверки агентов: файл данных, индекс забываемого класса, вектор параметров.
    """

    ALLOWED_EXTENSIONS: Set[str] = ALLOWED_DATA_EXTENSIONS

    def validate_data_file(self, file_path: Path) -> None:
        """
        Валидация файла данных.

        Raises:
            FileNotFoundError: Если файл не найден
            ValidationError: Если путь не файл или расширение не поддерживается
        """
        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f"Файл данных не найден: {file_path}")

        if not file_path.is_file():
            raise ValidationError(f"Путь не является файлом: {file_path}")

        if file_path.suffix.lower() not in self.ALLOWED_EXTENSIONS:
            raise ValidationError(
                f"Неподдерживаемое расширение файла: {file_path.suffix}. "
                f"Поддерживаемые: {', '.join(sorted(self.ALLOWED_EXTENSIONS))}"
            )

        if hasattr(self, 'logger'):
            size_kb = file_path.stat().st_size / 1024
            self.logger.debug(f"✅ Файл {file_path.name} прошел валидацию ({size_kb:.1f}KB)")

    def validate_forget_class(self, forget_class: Optional[int],
                              n_classes: int = N_CLASSES) -> int:
        """
        Валидация индекса забываемого класса.

        Returns:
            Индекс класса как int

        Raises:
            ValidationError: Класс не задан или вне диапазона
        """
        if forget_class is None:
            raise ValidationError("Не задан забываемый класс (--forget-class)")
        if isinstance(forget_class, bool) or int(forget_class) != forget_class:
            raise ValidationError(f"Забываемый класс должен быть целым числом: {forget_class!r}")
        forget_class = int(forget_class)
        if not 0 <= forget_class < n_classes:
            raise ValidationError(f"Забываемый класс {forget_class} вне диапазона [0, {n_classes})")
        return forget_class

    def validate_param_vector(self, params, n_params: int) -> np.ndarray:
        """
        Валидация вектора параметров.

        Raises:
            ValidationError: Неверная длина
            NumericError: Нечисловые значения
        """
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n_params,):
            raise ValidationError(f"Ожидался вектор из {n_params} параметров, форма {params.shape}")
        if not np.all(np.isfinite(params)):
            raise NumericError("Вектор параметров содержит нечисловые значения")
        return params
