"""
Testes do formato estruturado e do contexto de execução nos logs
"""

import json
import logging

import pytest

from .logging_config import StructuredFormatter, TrainingLogger, add_run_context, setup_logging


@pytest.fixture
def restore_factory():
    factory = logging.getLogRecordFactory()
    yield
    logging.setLogRecordFactory(factory)


def _record(name="semitts.train", factory=None, **attrs):
    record = (factory or logging.getLogRecordFactory())(name, logging.INFO, __file__, 10, "passo %d", (3,), None)
    for key, value in attrs.items():
        setattr(record, key, value)
    return record


def test_structured_formatter_fields():
    record = _record(factory=logging.LogRecord, step=3, duration=1.5, extra_data={"type": "x"})
    entry = json.loads(StructuredFormatter().format(record))
    assert entry["message"] == "passo 3"
    assert entry["component"] == "train"
    assert entry["step"] == 3
    assert entry["duration_ms"] == 1.5
    assert entry["extra"] == {"type": "x"}
    assert "run" not in entry


def test_run_context_tags_records(restore_factory):
    add_run_context("exp-1", "abc123")
    add_run_context("exp-2", "def456")
    entry = json.loads(StructuredFormatter().format(_record(name="semitts.sweep")))
    assert (entry["run"], entry["config_hash"], entry["component"]) == ("exp-2", "def456", "sweep")


def test_training_logger_writes_json_file(tmp_path, restore_factory):
    log_file = tmp_path / "logs" / "semitts.log"
    setup_logging(log_level="INFO", log_file=str(log_file), enable_console=False)
    add_run_context("exp", "h")
    TrainingLogger().log_train_step("finetune", 5, 0.25, 0.5, 1.0, 0.01)
    TrainingLogger().log_sweep_cell("t-base__1min__seed0", 12.0, False, error="boom")
    for handler in logging.getLogger("semitts.performance").handlers:
        handler.flush()
    lines = [json.loads(line) for line in log_file.read_text(encoding="utf-8").splitlines()]
    assert lines[0]["extra"]["metrics"]["mel_l1"] == 0.25
    assert lines[0]["step"] == 5
    assert lines[1]["level"] == "ERROR"
    assert lines[1]["extra"]["cell"] == "t-base__1min__seed0"
