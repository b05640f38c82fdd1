# pipeline/checkpoint_manager.py

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .constants import (
    CHECKPOINT_FILE,
    MANIFEST_FILE,
    N_PARAMS,
    PARAM_ORDER_TAG,
    PARTITION_FILE,
)
from .data_agent import SplitPartition
from .interfaces import CheckpointError, ModelStage
from .utils import load_json, save_json


@dataclass
class ParamCheckpoint:
    """Параметры модели и метаданные их происхождения"""
    values: np.ndarray
    dataset: str
    seed: int
    stage: str
    config_hash: str = ""
    param_order_tag: str = PARAM_ORDER_TAG

    @property
    def n_params(self) -> int:
        return int(self.values.shape[0])

    def to_dict(self) -> Dict[str, Any]:
        # Без отметок времени: одинаковые параметры дают одинаковые байты
        return {
            "n_params": self.n_params,
            "param_order_tag": self.param_order_tag,
            "values": [float(v) for v in self.values],
            "metadata": {
                "dataset": self.dataset,
                "seed": self.seed,
                "stage": self.stage,
                "config_hash": self.config_hash,
            },
        }


def save_checkpoint(checkpoint: ParamCheckpoint, path: Path) -> Path:
    """Сохраняет checkpoint; float записываются с точностью, достаточной для побитового восстановления."""
    return save_json(checkpoint.to_dict(), path)


def load_checkpoint(path: Path, expected_tag: str = PARAM_ORDER_TAG,
                    expected_n_params: int = N_PARAMS) -> ParamCheckpoint:
    """
    Загружает и проверяет checkpoint.

    Raises:
        CheckpointError: Файл отсутствует, повреждён или несовместим
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint не найден: {path}")
    try:
        data = load_json(path)
        values = np.array([float(v) for v in data["values"]], dtype=np.float64)
        metadata = data.get("metadata", {})
        n_params = int(data["n_params"])
        tag = data["param_order_tag"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Повреждённый checkpoint {path}: {e}") from e

    if tag != expected_tag:
        raise CheckpointError(f"Checkpoint {path}: порядок параметров '{tag}', ожидался '{expected_tag}'")
    if n_params != expected_n_params or values.shape[0] != n_params:
        raise CheckpointError(
            f"Checkpoint {path}: {values.shape[0]} значений при n_params={n_params}, ожидалось {expected_n_params}"
        )
    if not all(math.isfinite(v) for v in values):
        raise CheckpointError(f"Checkpoint {path} содержит нечисловые значения")

    return ParamCheckpoint(
        values=values,
        dataset=metadata.get("dataset", ""),
        seed=int(metadata.get("seed", 0)),
        stage=metadata.get("stage", ""),
        config_hash=metadata.get("config_hash", ""),
        param_order_tag=tag,
    )


@dataclass
class StageRecord:
    """Запись о выполненной стадии"""
    stage: str
    timestamp: str
    outputs: Dict[str, str]
    success: bool
    error_message: Optional[str] = None


@dataclass
class RunState:
    """Состояние каталога запуска"""
    run_dir: str
    created_at: str
    last_updated: str
    completed_stages: List[str] = field(default_factory=list)
    failed_stage: Optional[str] = None
    records: List[StageRecord] = field(default_factory=list)


class CheckpointManager:
    """
    Менеджер каталога запуска.

    Каждая стадия пишет в свою поддиректорию run_dir/<stage>/:
    checkpoint.json, manifest.json и partition.json.
    Состояние стадий ведётся в run_dir/pipeline_state.json.
    """

    STATE_FILE = "pipeline_state.json"

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.logger = logging.getLogger(__name__)

    def stage_dir(self, stage: ModelStage, create: bool = False) -> Path:
        path = self.run_dir / stage.value
        if create:
            path.mkdir(parents=True, exist_ok=True)
        return path

    def checkpoint_path(self, stage: ModelStage) -> Path:
        return self.stage_dir(stage) / CHECKPOINT_FILE

    def manifest_path(self, stage: ModelStage) -> Path:
        return self.stage_dir(stage) / MANIFEST_FILE

    def partition_path(self, stage: ModelStage) -> Path:
        return self.stage_dir(stage) / PARTITION_FILE

    def has_model(self, stage: ModelStage) -> bool:
        return self.checkpoint_path(stage).exists()

    def save_model(self, stage: ModelStage, params: np.ndarray, dataset: str, seed: int,
                   config_hash: str) -> Path:
        checkpoint = ParamCheckpoint(np.asarray(params, dtype=np.float64), dataset, seed, stage.value, config_hash)
        path = save_checkpoint(checkpoint, self.checkpoint_path(stage))
        self.logger.info(f"💾 Checkpoint {stage.value} сохранён: {path}")
        return path

    def load_model(self, stage: ModelStage, path: Optional[Path] = None) -> ParamCheckpoint:
        path = Path(path) if path else self.checkpoint_path(stage)
        checkpoint = load_checkpoint(path)
        self.logger.info(f"📂 Загружен checkpoint {stage.value}: {path}")
        return checkpoint

    def save_manifest(self, stage: ModelStage, command: str, flat_config: Dict[str, Any],
                      config_hash: str, outputs: Dict[str, str],
                      extra: Optional[Dict[str, Any]] = None) -> Path:
        """Манифест запуска: полная конфигурация, её хэш и выходные файлы."""
        manifest = {
            "command": command,
            "stage": stage.value,
            "created_at": datetime.now().isoformat(),
            "config_hash": config_hash,
            "config": flat_config,
            "outputs": outputs,
        }
        if extra:
            manifest.update(extra)
        return save_json(manifest, self.manifest_path(stage))

    def load_manifest(self, stage: ModelStage) -> Dict[str, Any]:
        path = self.manifest_path(stage)
        if not path.exists():
            raise CheckpointError(f"Манифест не найден: {path}")
        return load_json(path)

    def save_partition(self, stage: ModelStage, partition: SplitPartition, config_hash: str) -> Path:
        data = partition.to_dict()
        data["config_hash"] = config_hash
        return save_json(data, self.partition_path(stage))

    def load_partition(self, stage: ModelStage) -> SplitPartition:
        path = self.partition_path(stage)
        if not path.exists():
            raise CheckpointError(f"Файл разбиения не найден: {path}")
        try:
            return SplitPartition.from_dict(load_json(path))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Повреждённый файл разбиения {path}: {e}") from e

    # Состояние стадий

    def _state_file(self) -> Path:
        return self.run_dir / self.STATE_FILE

    def load_state(self) -> Optional[RunState]:
        state_file = self._state_file()
        if not state_file.exists():
            return None
        try:
            data = load_json(state_file)
            records = [StageRecord(**r) for r in data.get("records", [])]
            return RunState(
                run_dir=data["run_dir"],
                created_at=data["created_at"],
                last_updated=data["last_updated"],
                completed_stages=data.get("completed_stages", []),
                failed_stage=data.get("failed_stage"),
                records=records,
            )
        except Exception as e:
            self.logger.error(f"❌ Ошибка загрузки состояния {state_file}: {e}")
            return None

    def record_stage(self, stage: ModelStage, outputs: Dict[str, str], success: bool = True,
                     error_message: Optional[str] = None) -> None:
        """Отмечает стадию выполненной или упавшей."""
        now = datetime.now().isoformat()
        state = self.load_state() or RunState(str(self.run_dir), now, now)
        state.records.append(StageRecord(stage.value, now, outputs, success, error_message))
        state.last_updated = now

        if success:
            if stage.value not in state.completed_stages:
                state.completed_stages.append(stage.value)
            state.failed_stage = None
            self.logger.info(f"✅ Стадия {stage.value} завершена")
        else:
            state.failed_stage = stage.value
            self.logger.error(f"❌ Стадия {stage.value} с ошибкой: {error_message}")

        save_json(asdict(state), self._state_file())

    def validate_checkpoint_files(self) -> Dict[str, bool]:
        """Проверяет, что файлы успешных стадий существуют и читаются."""
        state = self.load_state()
        if state is None:
            return {}

        results = {}
        for record in state.records:
            if not record.success:
                continue
            for path_str in record.outputs.values():
                path = Path(path_str)
                is_valid = False
                if path.exists() and path.stat().st_size > 0:
                    try:
                        if path.name == CHECKPOINT_FILE:
                            load_checkpoint(path)
                        elif path.suffix == ".json":
                            load_json(path)
                        is_valid = True
                    except Exception as e:
                        self.logger.warning(f"⚠️ Невалидный файл {path}: {e}")
                results[path_str] = is_valid
        return results

    def get_run_summary(self) -> Optional[Dict[str, Any]]:
        state = self.load_state()
        if state is None:
            return None
        return {
            "run_dir": state.run_dir,
            "status": "failed" if state.failed_stage else "ok",
            "created_at": state.created_at,
            "last_updated": state.last_updated,
            "completed_stages": state.completed_stages,
            "failed_stage": state.failed_stage,
            "total_records": len(state.records),
        }
