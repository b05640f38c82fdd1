#!/usr/bin/env python3
"""
Тесты конфигурационного менеджера
"""

import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.config import ConfigurationManager, RunConfig, flatten, from_flat, to_flat
from pipeline.interfaces import ConfigurationError


class TestFlatConfig:
    """Тесты плоского представления"""

    @pytest.mark.unit
    def test_defaults_roundtrip(self):
        flat = to_flat(RunConfig())
        assert flat["dataset.name"] == "iris"
        assert "unlearn.lambda" in flat
        assert "unlearn.lam" not in flat
        assert "train.seed" not in flat
        assert to_flat(from_flat(flat)) == flat

    @pytest.mark.unit
    def test_flatten_nested(self):
        assert flatten({"train": {"iterations": 5}, "seed": 1}) == {"train.iterations": 5, "seed": 1}

    @pytest.mark.unit
    def test_seed_propagates(self):
        config = from_flat({"seed": 7})
        assert config.train.seed == 7
        assert config.unlearn.seed == 7

    @pytest.mark.unit
    def test_lambda_alias(self):
        assert from_flat({"unlearn.lambda": 0.25}).unlearn.lam == 0.25

    @pytest.mark.unit
    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="train.iters"):
            from_flat({"train.iters": 5})

    @pytest.mark.unit
    @pytest.mark.parametrize("key,value", [
        ("train.iterations", "many"), ("train.iterations", 2.5), ("dataset.header", "maybe"),
        ("unlearn.alpha", True),
    ])
    def test_bad_types(self, key, value):
        with pytest.raises(ConfigurationError, match=key):
            from_flat({key: value})

    @pytest.mark.unit
    def test_string_coercion(self):
        config = from_flat({"train.iterations": "12", "dataset.header": "true", "forget_class": None})
        assert config.train.iterations == 12
        assert config.dataset.header is True
        assert config.forget_class is None


class TestConfigurationManager:
    """Тесты ConfigurationManager"""

    def setup_method(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name, data):
        path = self.temp_dir / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    @pytest.mark.unit
    def test_precedence(self):
        """Тест: умолчания < файл < флаги"""
        path = self._write("config.json", {"train.iterations": 50, "unlearn.alpha": 2.0})
        manager = ConfigurationManager(path, overrides={"train.iterations": 5, "unlearn.beta": None})
        config = manager.config
        assert config.train.iterations == 5
        assert config.unlearn.alpha == 2.0
        assert config.unlearn.beta == 1.0

    @pytest.mark.unit
    def test_manifest_input(self):
        """Тест: конфигурация из манифеста предыдущего запуска"""
        path = self._write("manifest.json", {"command": "train", "config": {"seed": 3, "forget_class": 1}})
        config = ConfigurationManager(path).config
        assert config.seed == 3
        assert config.forget_class == 1

    @pytest.mark.unit
    def test_nested_file(self):
        path = self._write("nested.json", {"unlearn": {"lambda": 0.5}})
        assert ConfigurationManager(path).config.unlearn.lam == 0.5

    @pytest.mark.unit
    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            ConfigurationManager(self.temp_dir / "absent.json")

    @pytest.mark.unit
    def test_invalid_json(self):
        path = self.temp_dir / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            ConfigurationManager(path)

    @pytest.mark.unit
    def test_hash_ignores_out_dir(self):
        first = ConfigurationManager(overrides={"out_dir": "a"})
        second = ConfigurationManager(overrides={"out_dir": "b"})
        third = ConfigurationManager(overrides={"out_dir": "a", "seed": 1})
        assert first.config_hash() == second.config_hash()
        assert first.config_hash() != third.config_hash()

    @pytest.mark.unit
    def test_validate_errors(self):
        manager = ConfigurationManager(overrides={"unlearn.alpha": -1.0, "forget_class": 5})
        with pytest.raises(ConfigurationError) as exc_info:
            manager.validate(check_data=False)
        assert "alpha" in str(exc_info.value)
        assert "forget_class=5" in str(exc_info.value)

    @pytest.mark.unit
    def test_require_forget_class(self):
        with pytest.raises(ConfigurationError, match="--forget-class"):
            ConfigurationManager().validate(require_forget_class=True, check_data=False)

    @pytest.mark.unit
    def test_missing_data_file(self):
        manager = ConfigurationManager(overrides={"dataset.path": str(self.temp_dir / "none.csv")})
        with pytest.raises(FileNotFoundError, match="none.csv"):
            manager.validate()

    @pytest.mark.unit
    def test_flat_file_reload(self):
        manager = ConfigurationManager(overrides={"seed": 4, "unlearn.lambda": 0.1})
        path = self.temp_dir / "saved.json"
        path.write_text(json.dumps(manager.flat()), encoding="utf-8")
        reloaded = ConfigurationManager(path)
        assert reloaded.flat() == manager.flat()
        assert reloaded.config_hash() == manager.config_hash()

    @pytest.mark.unit
    def test_setup_logging(self):
        root = logging.getLogger()
        saved = root.handlers[:]
        try:
            ConfigurationManager().setup_logging(self.temp_dir / "logs")
            logging.getLogger("pipeline.test").info("проверка")
            for handler in root.handlers:
                handler.flush()
            assert (self.temp_dir / "logs" / "pipeline.log").exists()
        finally:
            for handler in root.handlers[:]:
                root.removeHandler(handler)
                handler.close()
            for handler in saved:
                root.addHandler(handler)
