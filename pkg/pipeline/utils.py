"""
Вспомогательные функции пайплайна: JSON, CSV и хэш конфигурации.
"""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union


def load_json(path: Path) -> Dict[str, Any]:
    """
    Загружает JSON-файл и возвращает его содержимое как словарь.

    Args:
        path: Путь к JSON-файлу

    Returns:
        Словарь с содержимым JSON-файла
    """
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def save_json(data: Union[Dict[str, Any], List[Any]], path: Path) -> Path:
    """
    Сохраняет данные в JSON-файл, создавая родительскую директорию.

    Args:
        data: Данные для сохранения (словарь или список)
        path: Путь к JSON-файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write("\n")
    return path


def canonical_json(data: Any) -> str:
    """Каноническая JSON-строка: отсортированные ключи, без пробелов."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=str)


def config_hash(flat_config: Dict[str, Any]) -> str:
    """SHA-256 канонического JSON плоской конфигурации."""
    return hashlib.sha256(canonical_json(flat_config).encode("utf-8")).hexdigest()


def write_csv(rows: Iterable[Dict[str, Any]], path: Path,
              fieldnames: Optional[Sequence[str]] = None) -> Path:
    """
    Записывает строки-словари в CSV.

    Args:
        rows: Строки
        path: Путь к файлу
        fieldnames: Порядок столбцов (по умолчанию ключи первой строки)
    """
    rows = list(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames))
        writer.writeheader()
        writer.writerows(rows)
    return path
