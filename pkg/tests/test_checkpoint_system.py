#!/usr/bin/env python3
"""
Тесты checkpoint-системы каталога запуска
"""

import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.checkpoint_manager import (
    CheckpointManager,
    ParamCheckpoint,
    load_checkpoint,
    save_checkpoint,
)
from pipeline.constants import PARAM_ORDER_TAG
from pipeline.data_agent import SplitPartition
from pipeline.interfaces import CheckpointError, ModelStage


class TestParamCheckpoint:
    """Тесты файла параметров"""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.values = np.random.default_rng(0).normal(size=72) * np.pi

    def teardown_method(self):
        if self.temp_dir.exists():
            shutil.rmtree(self.temp_dir)

    @pytest.mark.unit
    def test_bit_exact_roundtrip(self):
        """Тест побитового восстановления значений"""
        path = save_checkpoint(ParamCheckpoint(self.values, "iris", 0, "original", "abc"), self.temp_dir / "c.json")
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.values, self.values)
        assert loaded.values.tobytes() == self.values.tobytes()
        assert (loaded.dataset, loaded.seed, loaded.stage, loaded.config_hash) == ("iris", 0, "original", "abc")

    @pytest.mark.unit
    def test_format(self):
        path = save_checkpoint(ParamCheckpoint(self.values, "iris", 1, "gold"), self.temp_dir / "c.json")
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["n_params"] == 72
        assert data["param_order_tag"] == PARAM_ORDER_TAG
        assert set(data["metadata"]) == {"dataset", "seed", "stage", "config_hash"}

    @pytest.mark.unit
    def test_identical_bytes(self):
        """Тест: одинаковые параметры дают одинаковые байты"""
        first = save_checkpoint(ParamCheckpoint(self.values, "iris", 0, "original"), self.temp_dir / "a.json")
        second = save_checkpoint(ParamCheckpoint(self.values.copy(), "iris", 0, "original"), self.temp_dir / "b.json")
        assert first.read_bytes() == second.read_bytes()

    @pytest.mark.unit
    def test_missing(self):
        with pytest.raises(CheckpointError, match="не найден"):
            load_checkpoint(self.temp_dir / "absent.json")

    @pytest.mark.unit
    def test_corrupt(self):
        path = self.temp_dir / "bad.json"
        path.write_text("{\"values\": [1, 2", encoding="utf-8")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    @pytest.mark.unit
    def test_wrong_tag(self):
        checkpoint = ParamCheckpoint(self.values, "iris", 0, "original", param_order_tag="other/v0")
        path = save_checkpoint(checkpoint, self.temp_dir / "c.json")
        with pytest.raises(CheckpointError, match="other/v0"):
            load_checkpoint(path)

    @pytest.mark.unit
    def test_wrong_count(self):
        path = save_checkpoint(ParamCheckpoint(self.values[:70], "iris", 0, "original"), self.temp_dir / "c.json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    @pytest.mark.unit
    def test_non_finite(self):
        path = save_checkpoint(ParamCheckpoint(self.values, "iris", 0, "original"), self.temp_dir / "c.json")
        data = json.loads(path.read_text(encoding="utf-8"))
        data["values"][0] = "nan"
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(CheckpointError, match="нечисловые"):
            load_checkpoint(path)


class TestCheckpointManager:
    """Тесты для CheckpointManager"""

    def setup_method(self):
        """Настройка для каждого теста"""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.manager = CheckpointManager(self.temp_dir / "run")
        self.params = np.linspace(-1.0, 1.0, 72)

    def teardown_method(self):
        """Очистка после каждого теста"""
        if self.temp_dir.exists():
            shutil.rmtree(self.temp_dir)

    @pytest.mark.unit
    def test_stage_layout(self):
        """Тест структуры каталога стадии"""
        path = self.manager.save_model(ModelStage.ORIGINAL, self.params, "iris", 0, "h")
        assert path == self.temp_dir / "run" / "original" / "checkpoint.json"
        assert self.manager.has_model(ModelStage.ORIGINAL)
        assert not self.manager.has_model(ModelStage.GOLD)
        np.testing.assert_array_equal(self.manager.load_model(ModelStage.ORIGINAL).values, self.params)

    @pytest.mark.unit
    def test_manifest(self):
        self.manager.save_manifest(ModelStage.GOLD, "gold", {"seed": 0}, "h", {"checkpoint": "x"},
                                   extra={"best_iteration": 3})
        manifest = self.manager.load_manifest(ModelStage.GOLD)
        assert manifest["command"] == "gold"
        assert manifest["config"] == {"seed": 0}
        assert manifest["best_iteration"] == 3
        assert "created_at" in manifest

    @pytest.mark.unit
    def test_missing_manifest(self):
        with pytest.raises(CheckpointError):
            self.manager.load_manifest(ModelStage.UNLEARNED)

    @pytest.mark.unit
    def test_partition_roundtrip(self):
        partition = SplitPartition(np.array([0, 1, 2]), np.array([3]), np.array([4]), 7,
                                   forget_class=1, forget=np.array([1]), anchor=np.array([0, 2]))
        self.manager.save_partition(ModelStage.ORIGINAL, partition, "h")
        loaded = self.manager.load_partition(ModelStage.ORIGINAL)
        assert loaded.same_split(partition)
        assert loaded.seed == 7
        np.testing.assert_array_equal(loaded.anchor, [0, 2])

    @pytest.mark.unit
    def test_record_stage_success(self):
        """Тест записи состояния успешной стадии"""
        path = self.manager.save_model(ModelStage.ORIGINAL, self.params, "iris", 0, "h")
        self.manager.record_stage(ModelStage.ORIGINAL, {"checkpoint": str(path)})
        state = self.manager.load_state()
        assert state is not None
        assert state.completed_stages == ["original"]
        assert state.failed_stage is None
        summary = self.manager.get_run_summary()
        assert summary["status"] == "ok"
        assert summary["total_records"] == 1

    @pytest.mark.unit
    def test_record_stage_failure(self):
        self.manager.record_stage(ModelStage.UNLEARNED, {}, success=False, error_message="boom")
        state = self.manager.load_state()
        assert state.failed_stage == "unlearned"
        assert state.records[0].error_message == "boom"
        assert self.manager.get_run_summary()["status"] == "failed"

    @pytest.mark.unit
    def test_repeat_stage_not_duplicated(self):
        self.manager.record_stage(ModelStage.ORIGINAL, {})
        self.manager.record_stage(ModelStage.ORIGINAL, {})
        state = self.manager.load_state()
        assert state.completed_stages == ["original"]
        assert len(state.records) == 2

    @pytest.mark.unit
    def test_validate_checkpoint_files(self):
        """Тест проверки файлов завершённых стадий"""
        good = self.manager.save_model(ModelStage.ORIGINAL, self.params, "iris", 0, "h")
        bad = self.manager.checkpoint_path(ModelStage.GOLD)
        bad.parent.mkdir(parents=True)
        bad.write_text("{}", encoding="utf-8")
        self.manager.record_stage(ModelStage.ORIGINAL, {"checkpoint": str(good)})
        self.manager.record_stage(ModelStage.GOLD, {"checkpoint": str(bad)})
        results = self.manager.validate_checkpoint_files()
        assert results[str(good)] is True
        assert results[str(bad)] is False

    @pytest.mark.unit
    def test_no_state(self):
        assert self.manager.load_state() is None
        assert self.manager.get_run_summary() is None
        assert self.manager.validate_checkpoint_files() == {}
