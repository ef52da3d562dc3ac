"""
Linha de comando do semitts

    python -m semitts <subcomando> --config configs/toy.json [--set train.seed=7 ...]

Subcomandos: prepare, trainwv, pretrain, train, synth, eval, sweep, plot.
Códigos de saída: 0 sucesso, 1 erro de validação, 2 falha de execução.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError as PydanticValidationError

from . import pipeline
from .config import RunEnvironment
from .errors import ConfigValidationError, ValidationFailure
from .logging_config import add_run_context, setup_logging
from .models import ExperimentConfig, load_config, load_sweep
from .plotting import emit_plot
from .sweep import run_sweep
from .utils import config_hash, to_jsonable

logger = logging.getLogger("semitts")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
DEFAULT_CONFIG = "configs/toy.json"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semitts", description="Tacotron semi-supervisionado (corpus sintético)")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="Configuração JSON do experimento")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="CHAVE=VALOR",
                        help="Override por caminho pontuado, valor lido como JSON (ex.: train.seed=7)")
    common.add_argument("--run-root", default=None, help="Raiz das execuções (padrão: SEMITTS_RUN_ROOT ou run_root)")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="Gera o corpus sintético")
    trainwv = sub.add_parser("trainwv", parents=[common], help="Treina os vetores de palavras (skip-gram)")
    trainwv.add_argument("--force", action="store_true", help="Retreina mesmo se a tabela existir")
    sub.add_parser("pretrain", parents=[common], help="Pré-treina o decoder em áudio sem par")
    sub.add_parser("train", parents=[common], help="Fine-tuning em dados pareados")

    synth = sub.add_parser("synth", parents=[common], help="Sintetiza um texto em WAV")
    synth.add_argument("--text", required=True)
    synth.add_argument("--output", default=None, help="WAV de saída (padrão: <run>/synth/<texto>.wav)")
    synth.add_argument("--checkpoint", default=None)

    evaluate = sub.add_parser("eval", parents=[common], help="MCD no conjunto de avaliação")
    evaluate.add_argument("--checkpoint", default=None)
    evaluate.add_argument("--workers", type=int, default=None)

    sweep = sub.add_parser("sweep", parents=[common], help="Sweep variante x dados pareados x semente")
    sweep.add_argument("--sweep", required=True, help="Especificação JSON do sweep")
    sweep.add_argument("--sweep-set", dest="sweep_overrides", action="append", default=[], metavar="CHAVE=VALOR")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.add_argument("--output", default=None, help="Diretório do sweep (padrão: <run>/sweep)")

    plot = sub.add_parser("plot", help="Regera o SVG a partir de um CSV de sweep")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--svg", default=None, help="SVG de saída (padrão: ao lado do CSV)")
    plot.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def _print_result(command: str, result: Dict[str, Any]) -> None:
    print(f"✅ {command} concluído")
    print(json.dumps(to_jsonable(result), sort_keys=True, indent=2, default=str))


def _run_command(args: argparse.Namespace, cfg: ExperimentConfig, run_dir: Path, env: RunEnvironment) -> Dict[str, Any]:
    command = args.command
    if command == "prepare":
        return pipeline.prepare(cfg)
    if command == "trainwv":
        return pipeline.train_word_vectors(cfg, force=args.force)
    if command == "pretrain":
        return pipeline.pretrain(cfg, run_dir)
    if command == "train":
        return pipeline.train(cfg, run_dir)
    if command == "synth":
        return pipeline.synth(cfg, run_dir, args.text, output=args.output, checkpoint_path=args.checkpoint)
    if command == "eval":
        return pipeline.evaluate(cfg, run_dir, checkpoint_path=args.checkpoint, workers=args.workers or env.workers)
    if command == "sweep":
        spec = load_sweep(args.sweep, args.sweep_overrides)
        sweep_dir = Path(args.output) if args.output else run_dir / "sweep"
        result = run_sweep(cfg, spec, sweep_dir, workers=args.workers or spec.workers or env.workers)
        return {
            "success": not result.failed,
            "csv": str(result.csv_path),
            "svg": str(result.svg_path),
            "cells": len(result.rows),
            "failed": result.failed,
            "skipped": len(result.skipped),
            "summary": result.summary,
        }
    raise ConfigValidationError(f"Subcomando desconhecido: {command}")


def _plot(args: argparse.Namespace) -> Dict[str, Any]:
    svg_path = Path(args.svg) if args.svg else Path(args.csv).with_suffix(".svg")
    curves = emit_plot(args.csv, svg_path)
    return {"success": True, "svg": str(svg_path), "variants": sorted(curves)}


def main(argv: Optional[List[str]] = None) -> int:
    """Ponto de entrada; devolve o código de saída"""
    args = build_parser().parse_args(argv)
    env = RunEnvironment.from_env()
    log_level = args.log_level or env.log_level

    try:
        if args.command == "plot":
            setup_logging(log_level=log_level, enable_json=env.log_json)
            _print_result("plot", _plot(args))
            return EXIT_OK

        cfg = load_config(args.config, args.overrides)
        run_dir = cfg.run_dir(args.run_root or env.run_root)
        setup_logging(log_level=log_level, log_file=str(pipeline.RunLayout(run_dir).log_file), enable_json=env.log_json)
        add_run_context(cfg.name, config_hash(cfg.to_json_dict()))
        logger.info(f"🚀 {args.command}: execução '{cfg.name}' ({cfg.variant.value}) em {run_dir}")

        result = _run_command(args, cfg, run_dir, env)
        _print_result(args.command, result)
        return EXIT_OK if result.get("success", True) else EXIT_RUNTIME
    except ConfigValidationError as e:
        print(f"❌ Configuração inválida: {e}", file=sys.stderr)
        for error in e.errors:
            print(f"   {error['field']}: {error['message']}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValidationFailure, PydanticValidationError) as e:
        logger.error(f"Erro de validação: {e}")
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        print("\n👋 Interrompido pelo usuário", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception(f"Falha em {args.command}")
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
