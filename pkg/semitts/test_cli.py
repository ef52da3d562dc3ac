"""
Testes da linha de comando (fluxo completo num corpus mínimo)
"""

import json

import numpy as np
import pytest

from . import pipeline
from .cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from .errors import ContractViolation
from .dsp import load_wav
from .evaluation import read_report
from .text_frontend import Lexicon
from .conftest import tiny_experiment


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(tiny_experiment(tmp_path)), encoding="utf-8")
    return path


def _run(command, config_path, *extra):
    return main([command, "--config", str(config_path), *extra])


def test_base_variant_with_conditioning_exits_1(config_path):
    assert _run("train", config_path, "--set", "model.conditioning.enabled=true") == EXIT_VALIDATION


def test_missing_config_exits_1(tmp_path):
    assert _run("prepare", tmp_path / "absent.json") == EXIT_VALIDATION


def test_eval_without_checkpoint_exits_1(config_path):
    assert _run("prepare", config_path) == EXIT_OK
    assert _run("eval", config_path) == EXIT_VALIDATION


def test_prepare_train_eval_synth(tmp_path, config_path, capsys):
    assert _run("prepare", config_path) == EXIT_OK
    assert _run("train", config_path) == EXIT_OK
    run_dir = tmp_path / "runs" / "tiny"
    assert (run_dir / "checkpoints" / "best.ckpt").exists()
    assert (run_dir / "reports" / "train.csv").exists()

    assert _run("eval", config_path) == EXIT_OK
    report = read_report(run_dir / "reports" / "eval.csv")
    assert len(report.rows) == 2
    assert report.checkpoint_tag == "finetuned"

    word = sorted(Lexicon.load(tmp_path / "data" / "lexicon.json").words)[0]
    output = tmp_path / "out" / "word.wav"
    assert _run("synth", config_path, "--text", word, "--output", str(output)) == EXIT_OK
    assert load_wav(output).sample_rate == 8000
    assert output.with_suffix(".png").exists()
    assert "synth concluído" in capsys.readouterr().out

    with open(run_dir / "logs" / "semitts.log", encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    assert records and all(record["run"] == "tiny" for record in records)

    # outra configuração de modelo no mesmo diretório de execução
    assert _run("train", config_path, "--set", "model.decoder_rnn_dim=6") == EXIT_VALIDATION


def test_plot_command(tmp_path):
    csv_path = tmp_path / "sweep.csv"
    csv_path.write_text("variant,paired_minutes,seed,mcd\nt-base,1.0,0,8.0\nt-dec,1.0,0,7.0\n", encoding="utf-8")
    assert main(["plot", "--csv", str(csv_path)]) == EXIT_OK
    assert "<svg" in (tmp_path / "sweep.svg").read_text(encoding="utf-8")


def test_foreign_value_error_is_a_runtime_failure(config_path, monkeypatch):
    def broken_prepare(cfg):
        return np.zeros(3).reshape(2, 2)

    monkeypatch.setattr(pipeline, "prepare", broken_prepare)
    assert _run("prepare", config_path) == EXIT_RUNTIME


def test_package_contract_violation_exits_1(config_path, monkeypatch):
    def rejecting_prepare(cfg):
        raise ContractViolation("corpus inválido")

    monkeypatch.setattr(pipeline, "prepare", rejecting_prepare)
    assert _run("prepare", config_path) == EXIT_VALIDATION


def test_broken_lexicon_file_exits_1(tmp_path, config_path):
    assert _run("prepare", config_path) == EXIT_OK
    (tmp_path / "data" / "lexicon.json").write_text('{"words": {}}', encoding="utf-8")
    assert _run("train", config_path) == EXIT_VALIDATION
