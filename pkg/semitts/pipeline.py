"""
Etapas do pipeline de uma execução: prepare → trainwv → pretrain → train → eval, mais synth

Cada etapa recebe a configuração validada e devolve um dict de resultado
(mesmo formato para a CLI e para as células do sweep).

Layout do diretório da execução `runs/<nome>/`:

    config.json                 snapshot da configuração + hash do modelo
    checkpoints/pretrained.ckpt decoder pré-treinado (t-dec, t-enc-dec)
    checkpoints/best.ckpt       melhor validação do fine-tuning
    checkpoints/last.ckpt       último passo do fine-tuning (com estado do Adam)
    reports/pretrain.csv        uma linha por passo de pré-treino
    reports/train.csv           uma linha por passo de fine-tuning
    reports/eval.csv/.json      relatório MCD e resumo
    synth/<nome>.wav/.png       áudio sintetizado e alinhamento
    logs/semitts.log            log estruturado (JSON)
"""

import json
import logging
import math
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, model_config_hash
from .dsp import save_wav
from .errors import ConfigMismatchError, ContractViolation, PipelineError
from .evaluation import SynthesisContext, evaluate_set, synthesize_text
from .models import ExperimentConfig, Manifest, ManifestKind
from .plotting import save_alignment_image
from .tacotron import seconds_for
from .text_frontend import Lexicon
from .toy_corpus import generate_toy_corpus
from .training import PRETRAINED_TAG, finetune, load_utterances, model_from_checkpoint, pretrain_decoder
from .utils import config_hash, to_jsonable, write_atomic_text
from .word_vectors import WordVectorTable, load_table, read_corpus, save_table, train_skipgram

logger = logging.getLogger("semitts")


@dataclass
class RunLayout:
    """Caminhos fixos dentro do diretório de uma execução"""
    root: Path

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def synth(self) -> Path:
        return self.root / "synth"

    @property
    def log_file(self) -> Path:
        return self.root / "logs" / "semitts.log"

    @property
    def pretrained(self) -> Path:
        return self.checkpoints / "pretrained.ckpt"

    @property
    def best(self) -> Path:
        return self.checkpoints / "best.ckpt"

    @property
    def last(self) -> Path:
        return self.checkpoints / "last.ckpt"

    @property
    def eval_csv(self) -> Path:
        return self.reports / "eval.csv"


# ============================================================================
# RESOLUÇÃO DE CONFIGURAÇÃO E DADOS
# ============================================================================

def load_lexicon(cfg: ExperimentConfig) -> Lexicon:
    path = cfg.data.resolve("lexicon")
    if not path.exists():
        raise ContractViolation(f"Léxico não encontrado: {path} (rode 'prepare' antes)")
    return Lexicon.load(path)


def resolve_model_config(cfg: ExperimentConfig, lexicon: Lexicon) -> ModelConfig:
    """n_tokens = 0 é preenchido pelo léxico; um valor explícito precisa coincidir"""
    if cfg.model.n_tokens == 0:
        return cfg.model.with_tokens(lexicon.n_tokens)
    if cfg.model.n_tokens != lexicon.n_tokens:
        raise ConfigMismatchError(f"model.n_tokens={cfg.model.n_tokens}, léxico com {lexicon.n_tokens} símbolos")
    return cfg.model


def load_manifest(cfg: ExperimentConfig, name: str, kind: ManifestKind) -> Manifest:
    path = cfg.data.resolve(name)
    if path is None or not path.exists():
        raise ContractViolation(f"Manifest '{name}' não encontrado: {path}")
    return Manifest.load(path, kind)


def load_word_vectors(cfg: ExperimentConfig) -> Optional[WordVectorTable]:
    if not cfg.uses_word_vectors:
        return None
    path = cfg.data.resolve("wordvec_table")
    if not path.exists():
        raise ContractViolation(f"Tabela de vetores não encontrada: {path} (rode 'trainwv' antes)")
    return load_table(path)


def pad_value(cfg: ExperimentConfig) -> float:
    """Frames de preenchimento valem o piso logarítmico (silêncio)"""
    return math.log(cfg.dsp.floor)


def cache_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.data.corpus_dir) / "cache"


def write_config_snapshot(cfg: ExperimentConfig, layout: RunLayout, model_config: ModelConfig) -> str:
    """Grava config.json; uma execução existente com outra configuração de modelo é rejeitada"""
    digest = model_config_hash(model_config)
    if layout.config_path.exists():
        previous = json.loads(layout.config_path.read_text(encoding="utf-8"))
        if previous.get("config_hash") != digest:
            raise ConfigMismatchError(
                f"{layout.root} pertence a outra configuração de modelo "
                f"({str(previous.get('config_hash'))[:12]} != {digest[:12]})"
            )
    snapshot = {"config": cfg.to_json_dict(), "config_hash": digest, "experiment_hash": config_hash(cfg.to_json_dict())}
    write_atomic_text(layout.config_path, json.dumps(snapshot, sort_keys=True, indent=2) + "\n")
    return digest


def check_checkpoint(checkpoint: Checkpoint, model_config: ModelConfig, path: Union[str, Path]) -> None:
    expected = model_config_hash(model_config)
    if checkpoint.config_hash != expected:
        raise ConfigMismatchError(f"{path}: checkpoint de outra configuração ({checkpoint.config_hash[:12]} != {expected[:12]})")


def _prepare_run(cfg: ExperimentConfig, run_dir: Union[str, Path]):
    layout = RunLayout(Path(run_dir))
    lexicon = load_lexicon(cfg)
    model_config = resolve_model_config(cfg, lexicon)
    write_config_snapshot(cfg, layout, model_config)
    return layout, lexicon, model_config


# ============================================================================
# ETAPAS
# ============================================================================

def prepare(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Gera o corpus sintético em data.corpus_dir"""
    started = time.perf_counter()
    corpus = generate_toy_corpus(cfg.data.corpus_dir, cfg.toy, cfg.dsp)
    return {
        "success": True,
        "corpus_dir": str(corpus.root),
        "lexicon": str(corpus.lexicon_path),
        "paired_manifest": str(corpus.paired_manifest),
        "unpaired_manifest": str(corpus.unpaired_manifest),
        "eval_manifest": str(corpus.eval_manifest),
        "text_corpus": str(corpus.text_corpus),
        "seconds": time.perf_counter() - started,
    }


def train_word_vectors(cfg: ExperimentConfig, force: bool = False) -> Dict[str, Any]:
    """Skip-gram sobre o corpus de texto; tabela existente é reaproveitada salvo force=True"""
    table_path = cfg.data.resolve("wordvec_table") or Path(cfg.data.corpus_dir) / "wordvec.txt"
    if table_path.exists() and not force:
        table = load_table(table_path)
        logger.info(f"Tabela de vetores existente reaproveitada: {table_path} ({len(table)} palavras)")
        return {"success": True, "table": str(table_path), "words": len(table), "reused": True}

    corpus_path = cfg.data.resolve("text_corpus")
    if not corpus_path.exists():
        raise ContractViolation(f"Corpus de texto não encontrado: {corpus_path}")
    wv = cfg.wordvec
    table = train_skipgram(read_corpus(corpus_path), dim=wv.dim, window=wv.window, epochs=wv.epochs,
                           seed=cfg.train.seed, negatives=wv.negatives, learning_rate=wv.learning_rate,
                           min_count=wv.min_count)
    save_table(table, table_path)
    logger.info(f"Tabela de vetores salva: {table_path} ({len(table)} palavras, dim {table.dim})")
    return {"success": True, "table": str(table_path), "words": len(table), "reused": False}


def pretrain(cfg: ExperimentConfig, run_dir: Union[str, Path], shared_dir: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Pré-treina o decoder no manifest sem par

    Args:
        shared_dir: diretório onde checkpoints pré-treinados são reaproveitados entre execuções
            com mesma configuração de modelo, treino e manifest (células do sweep)
    """
    if not cfg.uses_pretraining:
        raise ContractViolation(f"A variante {cfg.variant.value} não usa pré-treino")
    layout, _, model_config = _prepare_run(cfg, run_dir)
    manifest = load_manifest(cfg, "unpaired_manifest", ManifestKind.UNPAIRED)

    shared_path = None
    if shared_dir is not None:
        key = config_hash({
            "model": model_config.to_dict(),
            "train": cfg.to_json_dict()["train"],
            "dsp": cfg.to_json_dict()["dsp"],
            "manifest": [entry.model_dump(exclude_none=True) for entry in manifest.entries],
        })[:24]
        shared_path = Path(shared_dir) / f"{key}.ckpt"
        if shared_path.exists():
            checkpoint = load_checkpoint(shared_path)
            save_checkpoint(layout.pretrained, checkpoint)
            logger.info(f"Decoder pré-treinado reaproveitado: {shared_path}")
            return {"success": True, "checkpoint": str(layout.pretrained), "reused": True,
                    "final_loss": checkpoint.metadata.get("final_loss")}

    started = time.perf_counter()
    utterances = load_utterances(manifest, cfg.dsp, cache_dir=cache_dir(cfg))
    report_path = layout.reports / "pretrain.csv"
    report_path.unlink(missing_ok=True)
    checkpoint = pretrain_decoder(utterances, model_config, cfg.train, pad_value=pad_value(cfg), report_path=report_path)
    save_checkpoint(layout.pretrained, checkpoint)
    if shared_path is not None:
        save_checkpoint(shared_path, checkpoint)
    return {
        "success": True,
        "checkpoint": str(layout.pretrained),
        "reused": False,
        "final_loss": checkpoint.metadata["final_loss"],
        "seconds": time.perf_counter() - started,
    }


def _init_checkpoint(cfg: ExperimentConfig, layout: RunLayout) -> Optional[Checkpoint]:
    if not cfg.uses_pretraining:
        return None
    path = Path(cfg.init_checkpoint) if cfg.init_checkpoint else layout.pretrained
    if not path.exists():
        raise ContractViolation(f"Checkpoint pré-treinado não encontrado: {path} (rode 'pretrain' antes)")
    checkpoint = load_checkpoint(path)
    if checkpoint.tag != PRETRAINED_TAG:
        raise ContractViolation(f"{path}: tag '{checkpoint.tag}', esperado '{PRETRAINED_TAG}'")
    return checkpoint


def train(cfg: ExperimentConfig, run_dir: Union[str, Path], manifest: Optional[Manifest] = None) -> Dict[str, Any]:
    """Fine-tuning em dados pareados; grava best.ckpt e last.ckpt"""
    layout, lexicon, model_config = _prepare_run(cfg, run_dir)
    manifest = manifest or load_manifest(cfg, "paired_manifest", ManifestKind.PAIRED)
    table = load_word_vectors(cfg)
    init = _init_checkpoint(cfg, layout)

    started = time.perf_counter()
    utterances = load_utterances(manifest, cfg.dsp, lexicon, table, cache_dir=cache_dir(cfg))
    report_path = layout.reports / "train.csv"
    report_path.unlink(missing_ok=True)
    result = finetune(utterances, model_config, cfg.train, init=init, pad_value=pad_value(cfg), report_path=report_path)
    save_checkpoint(layout.best, result.best)
    save_checkpoint(layout.last, result.last)
    write_atomic_text(layout.reports / "validation.json", json.dumps(to_jsonable({
        "config_hash": result.best.config_hash,
        "history": result.validation_history,
        "best_step": result.best.step,
        "stopped_early": result.stopped_early,
    }), sort_keys=True, indent=2) + "\n")
    return {
        "success": True,
        "checkpoint": str(layout.best),
        "best_step": result.best.step,
        "last_step": result.last.step,
        "best_validation_loss": result.best.metadata.get("best_validation_loss"),
        "validation_history": [list(item) for item in result.validation_history],
        "stopped_early": result.stopped_early,
        "n_paired": len(utterances),
        "seconds": time.perf_counter() - started,
    }


def evaluate(cfg: ExperimentConfig, run_dir: Union[str, Path], checkpoint_path: Optional[Union[str, Path]] = None,
             workers: int = 1) -> Dict[str, Any]:
    """MCD no manifest de avaliação; grava reports/eval.csv e o resumo .json"""
    layout, lexicon, model_config = _prepare_run(cfg, run_dir)
    checkpoint_path = Path(checkpoint_path) if checkpoint_path else layout.best
    if not checkpoint_path.exists():
        raise ContractViolation(f"Checkpoint não encontrado: {checkpoint_path} (rode 'train' antes)")
    check_checkpoint(load_checkpoint(checkpoint_path), model_config, checkpoint_path)
    manifest = load_manifest(cfg, "eval_manifest", ManifestKind.PAIRED)
    table_path = cfg.data.resolve("wordvec_table") if cfg.uses_word_vectors else None

    report = evaluate_set(checkpoint_path, manifest, cfg.dsp, lexicon, table_path=table_path,
                          griffin_lim_seed=cfg.griffin_lim_seed, csv_path=layout.eval_csv, workers=workers)
    failures = [row for row in report.rows if row["error"]]
    if report.rows and len(failures) == len(report.rows):
        raise PipelineError(f"Todos os {len(failures)} enunciados falharam na avaliação: {failures[0]['error']}")
    return {"success": True, "report": str(layout.eval_csv), **report.summary()}


def _slug(text: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug[:48] or "utterance"


def synth(cfg: ExperimentConfig, run_dir: Union[str, Path], text: str, output: Optional[Union[str, Path]] = None,
          checkpoint_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Sintetiza um texto: WAV (Griffin-Lim) + imagem de alinhamento ao lado"""
    layout, lexicon, model_config = _prepare_run(cfg, run_dir)
    checkpoint_path = Path(checkpoint_path) if checkpoint_path else layout.best
    if not checkpoint_path.exists():
        raise ContractViolation(f"Checkpoint não encontrado: {checkpoint_path} (rode 'train' antes)")
    checkpoint = load_checkpoint(checkpoint_path)
    check_checkpoint(checkpoint, model_config, checkpoint_path)

    table = load_word_vectors(cfg) if model_config.conditioning.enabled else None
    context = SynthesisContext(model_from_checkpoint(checkpoint), cfg.dsp, lexicon, table, cfg.griffin_lim_seed)
    wave, result = synthesize_text(context, text)

    wav_path = Path(output) if output else layout.synth / f"{_slug(text)}.wav"
    clipped = save_wav(wav_path, wave)
    alignment_path = wav_path.with_suffix(".png")
    save_alignment_image(result.alignment, alignment_path)
    if result.truncated:
        logger.warning(f"Síntese truncada em {result.n_steps} passos (sem token de parada)")
    return {
        "success": True,
        "wav": str(wav_path),
        "alignment": str(alignment_path),
        "decoder_steps": result.n_steps,
        "frames": int(result.mel.shape[0]),
        "duration_seconds": wave.duration,
        "expected_seconds": seconds_for(result.n_steps, model_config, cfg.dsp.hop_length, cfg.dsp.sample_rate),
        "truncated": result.truncated,
        "clipped_samples": clipped,
    }


def run_all(cfg: ExperimentConfig, run_dir: Union[str, Path], manifest: Optional[Manifest] = None,
            shared_dir: Optional[Union[str, Path]] = None, workers: int = 1) -> Dict[str, Any]:
    """pretrain (quando a variante usa) → train → eval; o corpus e a tabela de vetores já devem existir"""
    results: Dict[str, Any] = {"variant": cfg.variant.value}
    if cfg.uses_pretraining and not cfg.init_checkpoint:
        results["pretrain"] = pretrain(cfg, run_dir, shared_dir=shared_dir)
    results["train"] = train(cfg, run_dir, manifest=manifest)
    results["eval"] = evaluate(cfg, run_dir, workers=workers)
    return results
