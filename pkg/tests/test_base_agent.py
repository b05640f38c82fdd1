#!/usr/bin/env python3
"""
Тесты BaseAgent и монитора производительности
"""

import os
import sys

import numpy as np
import pytest

# Добавляем корневую директорию в путь
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from pipeline.base_agent import BaseAgent
from pipeline.circuit import forward_batch
from pipeline.interfaces import NumericError, PipelineError
from pipeline.monitoring import PerformanceMonitor, log_performance_metrics, PERFORMANCE_MONITOR


class DummyAgent(BaseAgent):
    def __init__(self, spec=None):
        super().__init__()
        self.spec = spec

    def run(self, rows=0):
        self.start_operation("прогон")
        try:
            if rows:
                forward_batch(self.spec, np.zeros(72), np.zeros((rows, 4)))
            self.end_operation("прогон")
            return rows
        except Exception as e:
            self.end_operation("прогон", success=False)
            self.handle_error(e, "прогон")


class TestBaseAgent:
    """Тесты BaseAgent"""

    @pytest.mark.unit
    def test_operation_records_circuits(self, spec):
        """Тест: запись операции учитывает число схем"""
        agent = DummyAgent(spec)
        agent.run(rows=3)
        assert len(agent.operations) == 1
        record = agent.operations[0]
        assert record.success
        assert record.circuits_simulated == 3
        assert agent.circuits_simulated == 3
        assert agent.logger.name == "pipeline.DummyAgent"

    @pytest.mark.unit
    def test_end_without_start(self):
        assert DummyAgent().end_operation("x") == 0.0

    @pytest.mark.unit
    def test_typed_errors_pass_through(self):
        agent = DummyAgent()
        with pytest.raises(NumericError):
            agent.handle_error(NumericError("норма"), "x")
        with pytest.raises(FileNotFoundError):
            agent.handle_error(FileNotFoundError("нет"), "x")

    @pytest.mark.unit
    def test_other_errors_wrapped(self):
        agent = DummyAgent()
        with pytest.raises(PipelineError, match="DummyAgent.x"):
            agent.handle_error(KeyError("k"), "x")
        assert agent._error_count == 1

    @pytest.mark.unit
    def test_no_reraise(self):
        agent = DummyAgent()
        agent.handle_error(RuntimeError("r"), "x", reraise=False)
        assert isinstance(agent._last_error, RuntimeError)


class TestPerformanceMonitor:
    """Тесты PerformanceMonitor"""

    def setup_method(self):
        self.monitor = PerformanceMonitor()

    @pytest.mark.unit
    def test_command_increments(self):
        self.monitor.record_circuits(5)
        self.monitor.start_command("train")
        self.monitor.record_circuits(7)
        self.monitor.record_gradient_call()
        metrics = self.monitor.end_command()
        assert metrics.name == "train"
        assert metrics.circuits_simulated == 7
        assert metrics.gradient_calls == 1
        assert self.monitor.circuits_simulated == 12

    @pytest.mark.unit
    def test_end_without_start(self):
        assert self.monitor.end_command() is None

    @pytest.mark.unit
    def test_summary(self):
        self.monitor.start_command("eval")
        summary = self.monitor.summary()
        assert summary["command_time"] is not None
        assert summary["commands"] == []
        self.monitor.end_command(success=False)
        pipeline_metrics = self.monitor.get_pipeline_metrics()
        assert pipeline_metrics.commands_run == 1
        assert pipeline_metrics.failed_commands == 1
        assert self.monitor.peak_rss_mb > 0.0

    @pytest.mark.unit
    def test_decorator_records_failure(self):
        @log_performance_metrics
        def failing():
            raise ValueError("плохо")

        before = len(PERFORMANCE_MONITOR.commands)
        with pytest.raises(ValueError):
            failing()
        assert len(PERFORMANCE_MONITOR.commands) == before + 1
        assert PERFORMANCE_MONITOR.commands[-1].name == "failing"
        assert PERFORMANCE_MONITOR.commands[-1].success is False
