"""
Perdas, montagem de lotes, pré-treino do decoder com áudio sem transcrição e fine-tuning do modelo completo
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, no_grad
from .checkpoint import Checkpoint
from .config import DSPConfig, ModelConfig, TrainConfig, decoder_signature
from .dsp import MelFilterbank, cached_mel
from .errors import ConfigMismatchError, ContractViolation, EmptyBatchError, WavFormatError
from .logging_config import TrainingLogger
from .models import Manifest, ManifestKind
from .optim import AdamState, adam_step, clip_grad_norm
from .tacotron import PAIRED, PRETRAIN, PRETRAIN_FROZEN_PREFIXES, TacotronModel, TextInputs, build_text_inputs
from .text_frontend import Lexicon, TokenSequence, text_to_sequence
from .utils import append_line_locked, derive_seed
from .word_vectors import WordVectorTable, lookup_matrix

logger = logging.getLogger("semitts.train")
performance = TrainingLogger()

REPORT_HEADER = "step,mel_l1,stop_bce,grad_norm,seconds"
PRETRAINED_TAG = "pretrained-decoder"
FINETUNED_TAG = "finetuned"
BEST_TAG = "best-validation"


# ============================================================================
# DADOS
# ============================================================================

@dataclass
class Utterance:
    """Alvo mel de um enunciado e, quando pareado, seu texto tokenizado"""
    id: str
    mel: np.ndarray
    tokens: Optional[TokenSequence] = None
    word_vectors: Optional[np.ndarray] = None

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]


@dataclass(frozen=True)
class UnpairedBatch:
    """Somente alvos mel e máscaras; não há campo de texto"""
    ids: Tuple[str, ...]
    mels: np.ndarray          # (B, T', M), T' múltiplo de r
    frame_mask: np.ndarray    # (B, T')
    stop_targets: np.ndarray  # (B, T'/r)
    group_mask: np.ndarray    # (B, T'/r)


@dataclass(frozen=True)
class PairedBatch:
    """Alvos mel + entradas textuais com padding"""
    ids: Tuple[str, ...]
    mels: np.ndarray
    frame_mask: np.ndarray
    stop_targets: np.ndarray
    group_mask: np.ndarray
    text: TextInputs


@dataclass
class TrainReport:
    """Uma linha do relatório de treino"""
    step: int
    mel_l1: float
    stop_bce: float
    grad_norm: float
    seconds: float

    def csv_row(self) -> str:
        return f"{self.step},{self.mel_l1!r},{self.stop_bce!r},{self.grad_norm!r},{self.seconds:.6f}"


@dataclass
class LossResult:
    total: Tensor
    mel_l1: float
    stop_bce: float


def load_utterances(manifest: Manifest, dsp_config: DSPConfig, lexicon: Optional[Lexicon] = None,
                    table: Optional[WordVectorTable] = None, cache_dir: Optional[Union[str, Path]] = None,
                    token_mode: str = "phoneme") -> List[Utterance]:
    """
    Extrai alvos mel (com cache) e, em manifests pareados, tokens e vetores de palavras

    Raises:
        WavFormatError: áudio ilegível, com o id do enunciado na mensagem
    """
    filterbank = MelFilterbank.from_config(dsp_config)
    paired = manifest.kind == ManifestKind.PAIRED
    if paired and lexicon is None:
        raise ContractViolation("Manifest pareado exige léxico")

    utterances = []
    for entry in manifest.entries:
        try:
            spec = cached_mel(manifest.audio_path(entry), filterbank, dsp_config, cache_dir)
        except (WavFormatError, OSError, RuntimeError) as e:
            raise WavFormatError(f"Enunciado {entry.id}: áudio ilegível ({e})") from e
        if spec.n_frames == 0:
            raise WavFormatError(f"Enunciado {entry.id}: áudio vazio")
        utterance = Utterance(id=entry.id, mel=spec.values)
        if paired:
            utterance.tokens = text_to_sequence(entry.text, lexicon, mode=token_mode)
            if table is not None:
                utterance.word_vectors, oov = lookup_matrix(table, utterance.tokens.words)
                if oov.any():
                    logger.debug(f"{entry.id}: {int(oov.sum())} palavra(s) fora da tabela de vetores")
        utterances.append(utterance)
    logger.info(f"{len(utterances)} enunciados carregados ({manifest.kind.value})")
    return utterances


# ============================================================================
# LOTES
# ============================================================================

def _pad_targets(items: Sequence[Utterance], r: int, pad_value: float):
    n_mels = items[0].mel.shape[1]
    lengths = np.array([item.n_frames for item in items])
    padded_length = int(math.ceil(lengths.max() / r) * r)
    mels = np.full((len(items), padded_length, n_mels), pad_value)
    frame_mask = np.zeros((len(items), padded_length))
    n_groups = padded_length // r
    stop_targets = np.zeros((len(items), n_groups))
    group_mask = np.zeros((len(items), n_groups))
    for b, item in enumerate(items):
        if item.mel.shape[1] != n_mels:
            raise ContractViolation(f"{item.id}: {item.mel.shape[1]} canais mel, lote usa {n_mels}")
        mels[b, :item.n_frames] = item.mel
        frame_mask[b, :item.n_frames] = 1.0
        real_groups = int(math.ceil(item.n_frames / r))
        group_mask[b, :real_groups] = 1.0
        stop_targets[b, real_groups - 1] = 1.0
    return mels, frame_mask, stop_targets, group_mask


def collate_unpaired(items: Sequence[Utterance], r: int, pad_value: float = 0.0) -> UnpairedBatch:
    if not items:
        raise EmptyBatchError("Lote vazio")
    mels, frame_mask, stop_targets, group_mask = _pad_targets(items, r, pad_value)
    return UnpairedBatch(tuple(i.id for i in items), mels, frame_mask, stop_targets, group_mask)


def collate_paired(items: Sequence[Utterance], r: int, pad_value: float = 0.0) -> PairedBatch:
    if not items:
        raise EmptyBatchError("Lote vazio")
    missing = [item.id for item in items if item.tokens is None]
    if missing:
        raise ContractViolation(f"Enunciados sem texto em lote pareado: {missing}")
    with_vectors = all(item.word_vectors is not None for item in items)
    text = build_text_inputs([item.tokens for item in items],
                             [item.word_vectors for item in items] if with_vectors else None)
    mels, frame_mask, stop_targets, group_mask = _pad_targets(items, r, pad_value)
    return PairedBatch(tuple(i.id for i in items), mels, frame_mask, stop_targets, group_mask, text)


def make_batches(items: Sequence[Utterance], batch_size: int, r: int, seed: int, epoch: int = 0,
                 paired: bool = False, bucket_batches: int = 4, pad_value: float = 0.0
                 ) -> List[Union[PairedBatch, UnpairedBatch]]:
    """
    Embaralhamento determinístico por (seed, epoch) com bucketing por comprimento

    Itens são permutados, agrupados em blocos de batch_size * bucket_batches ordenados por
    comprimento e cortados em lotes; os lotes completos são embaralhados e o lote parcial fica por último.
    """
    if batch_size < 1:
        raise ContractViolation("batch_size deve ser >= 1")
    if not items:
        return []
    rng = np.random.default_rng(derive_seed(seed, "batches", epoch))
    order = [items[i] for i in rng.permutation(len(items))]
    chunk = batch_size * max(bucket_batches, 1)
    bucketed: List[Utterance] = []
    for start in range(0, len(order), chunk):
        bucketed.extend(sorted(order[start:start + chunk], key=lambda item: (item.n_frames, item.id)))

    groups = [bucketed[i:i + batch_size] for i in range(0, len(bucketed), batch_size)]
    full = [g for g in groups if len(g) == batch_size]
    partial = [g for g in groups if len(g) < batch_size]
    full = [full[i] for i in rng.permutation(len(full))]
    collate = collate_paired if paired else collate_unpaired
    return [collate(group, r, pad_value) for group in full + partial]


def evaluation_batches(items: Sequence[Utterance], batch_size: int, r: int, paired: bool = False,
                       pad_value: float = 0.0) -> List[Union[PairedBatch, UnpairedBatch]]:
    """Lotes em ordem fixa (por id), sem embaralhamento"""
    ordered = sorted(items, key=lambda item: item.id)
    collate = collate_paired if paired else collate_unpaired
    return [collate(ordered[i:i + batch_size], r, pad_value) for i in range(0, len(ordered), batch_size)]


def _batch_stream(items: Sequence[Utterance], train: TrainConfig, r: int, paired: bool,
                  pad_value: float) -> Iterator[Union[PairedBatch, UnpairedBatch]]:
    epoch = 0
    while True:
        yield from make_batches(items, train.batch_size, r, train.seed, epoch, paired,
                                train.bucket_batches, pad_value)
        epoch += 1


# ============================================================================
# PERDA
# ============================================================================

def loss(pred_mel: Tensor, target_mel: np.ndarray, frame_mask: np.ndarray, stop_logits: Tensor,
         stop_targets: np.ndarray, group_mask: Optional[np.ndarray] = None, pos_weight: float = 5.0,
         stop_weight: float = 1.0) -> LossResult:
    """
    L1 mascarado sobre frames reais + stop_weight * BCE mascarada da parada

    O padding contribui exatamente zero; somas completas usam math.fsum.

    Raises:
        EmptyBatchError: máscara sem nenhum frame real
    """
    target_mel = np.asarray(target_mel, dtype=np.float64)
    frame_mask = np.asarray(frame_mask, dtype=np.float64)
    if pred_mel.shape != target_mel.shape:
        raise ContractViolation(f"Previsão {pred_mel.shape} e alvo {target_mel.shape} com shapes diferentes")
    if frame_mask.shape != target_mel.shape[:2]:
        raise ContractViolation(f"Máscara {frame_mask.shape} não corresponde ao alvo {target_mel.shape[:2]}")
    n_real = float(frame_mask.sum())
    if n_real == 0:
        raise EmptyBatchError("Máscara sem frames reais")
    if group_mask is None:
        group_mask = np.ones(stop_targets.shape)
    n_groups = float(group_mask.sum())
    if n_groups == 0:
        raise EmptyBatchError("Máscara de grupos sem grupos reais")
    if stop_logits.shape != stop_targets.shape:
        raise ContractViolation(f"Logits de parada {stop_logits.shape} e alvos {stop_targets.shape} diferem")

    # sobre frames de padding o termo é multiplicado por zero e não entra na soma
    safe_target = np.where(frame_mask[:, :, None] > 0, target_mel, 0.0)
    error = ad.tabs(pred_mel - safe_target) * frame_mask[:, :, None]
    mel_l1 = ad.tsum(error) / (n_real * target_mel.shape[2])

    y = np.asarray(stop_targets, dtype=np.float64)
    bce = (pos_weight * y) * ad.softplus(ad.neg(stop_logits)) + (1.0 - y) * ad.softplus(stop_logits)
    stop_bce = ad.tsum(bce * group_mask) / n_groups

    total = mel_l1 + stop_weight * stop_bce
    return LossResult(total=total, mel_l1=mel_l1.item(), stop_bce=stop_bce.item())


def batch_loss(model: TacotronModel, batch, mode: str, train: TrainConfig, training: bool,
               rng: Optional[np.random.Generator] = None) -> LossResult:
    pred, stops = model.forward_teacher_forced(batch, mode, training=training, rng=rng)
    return loss(pred, batch.mels, batch.frame_mask, stops, batch.stop_targets, batch.group_mask,
                train.stop_pos_weight, train.stop_loss_weight)


def evaluate_loss(model: TacotronModel, batches: Sequence, mode: str, train: TrainConfig) -> float:
    """Perda determinística (sem dropout, zoneout em expectativa), ponderada por frames reais"""
    if not batches:
        raise EmptyBatchError("Nenhum lote para avaliar")
    totals, weights = [], []
    with no_grad():
        for batch in batches:
            result = batch_loss(model, batch, mode, train, training=False)
            totals.append(result.total.item() * float(batch.frame_mask.sum()))
            weights.append(float(batch.frame_mask.sum()))
    return math.fsum(totals) / math.fsum(weights)


# ============================================================================
# LAÇO DE OTIMIZAÇÃO
# ============================================================================

def _write_report(report_path: Optional[Path], report: TrainReport) -> None:
    if report_path is None:
        return
    if not report_path.exists():
        append_line_locked(report_path, REPORT_HEADER)
    append_line_locked(report_path, report.csv_row())


def _optimization_step(model: TacotronModel, batch, mode: str, train: TrainConfig, adam: AdamState,
                       rng: np.random.Generator) -> Tuple[LossResult, float]:
    result = batch_loss(model, batch, mode, train, training=True, rng=rng)
    grads = backward(result.total, model.params)
    grads = {name: g for name, g in grads.items() if name not in model.params.freeze_mask}
    norm = clip_grad_norm(grads, train.grad_clip)
    if not math.isfinite(norm):
        raise ContractViolation(f"Norma de gradiente não finita ({norm})")
    adam_step(model.params, grads, adam)
    return result, norm


def _new_adam(model: TacotronModel, train: TrainConfig) -> AdamState:
    return AdamState.for_params(model.params, lr=train.learning_rate, beta1=train.beta1,
                                beta2=train.beta2, epsilon=train.epsilon)


def _train_config_metadata(train: TrainConfig) -> Dict:
    return dataclasses.asdict(train)


def pretrain_decoder(utterances: Sequence[Utterance], model_config: ModelConfig, train: TrainConfig,
                     pad_value: float = 0.0, report_path: Optional[Union[str, Path]] = None) -> Checkpoint:
    """
    Pré-treina o decoder como preditor do próximo grupo de frames (teacher forcing, contexto nulo)

    Encoder, condicionamento e a projeção da atenção ficam congelados e nunca são lidos.

    Raises:
        EmptyBatchError: nenhum enunciado sem par
    """
    if not utterances:
        raise EmptyBatchError("Manifest sem enunciados para o pré-treino")
    if any(item.tokens is not None for item in utterances):
        raise ContractViolation("O pré-treino usa somente áudio; remova o texto dos enunciados")

    r = model_config.reduction_factor
    model = TacotronModel.initialize(model_config, train.seed)
    frozen = model.params.freeze(PRETRAIN_FROZEN_PREFIXES)
    adam = _new_adam(model, train)
    report_path = Path(report_path) if report_path else None
    stream = _batch_stream(utterances, train, r, paired=False, pad_value=pad_value)

    logger.info(f"Pré-treino do decoder: {len(utterances)} enunciados, {train.pretrain_steps} passos, "
                f"{len(frozen)} parâmetros congelados")
    for step in range(1, train.pretrain_steps + 1):
        started = time.perf_counter()
        rng = np.random.default_rng(derive_seed(train.seed, "pretrain-step", step))
        result, norm = _optimization_step(model, next(stream), PRETRAIN, train, adam, rng)
        report = TrainReport(step, result.mel_l1, result.stop_bce, norm, time.perf_counter() - started)
        _write_report(report_path, report)
        if step % train.log_interval == 0 or step == train.pretrain_steps:
            performance.log_train_step("pretrain", step, report.mel_l1, report.stop_bce, norm, report.seconds)

    eval_batches = evaluation_batches(utterances, train.batch_size, r, paired=False, pad_value=pad_value)
    final_loss = evaluate_loss(model, eval_batches, PRETRAIN, train)
    logger.info(f"Pré-treino concluído: perda determinística {final_loss:.6f}")
    return Checkpoint(
        model_config=model_config.to_dict(),
        params=model.params,
        adam=adam,
        step=train.pretrain_steps,
        rng_state={"seed": train.seed, "stream": "pretrain-step", "step": train.pretrain_steps},
        tag=PRETRAINED_TAG,
        metadata={"final_loss": final_loss, "train": _train_config_metadata(train),
                  "n_utterances": len(utterances), "pad_value": pad_value},
    )


@dataclass
class FinetuneResult:
    best: Checkpoint
    last: Checkpoint
    validation_history: List[Tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False


def split_validation(items: Sequence[Utterance], fraction: float, seed: int) -> Tuple[List[Utterance], List[Utterance]]:
    """Separa uma fração fixa pela semente; com menos de 2 itens não há validação"""
    ordered = sorted(items, key=lambda item: item.id)
    n_valid = int(round(fraction * len(ordered)))
    if fraction > 0 and len(ordered) >= 2:
        n_valid = min(max(n_valid, 1), len(ordered) - 1)
    else:
        n_valid = 0
    rng = np.random.default_rng(derive_seed(seed, "validation-split"))
    permutation = rng.permutation(len(ordered))
    valid_index = set(permutation[:n_valid].tolist())
    train_items = [item for i, item in enumerate(ordered) if i not in valid_index]
    valid_items = [item for i, item in enumerate(ordered) if i in valid_index]
    return train_items, valid_items


def load_pretrained_decoder(model: TacotronModel, init: Checkpoint) -> List[str]:
    """
    Copia decoder.* de um checkpoint pré-treinado; os demais parâmetros ficam como inicializados

    Raises:
        ConfigMismatchError: shapes do decoder incompatíveis
    """
    source_config = ModelConfig.from_dict(init.model_config)
    if decoder_signature(source_config) != decoder_signature(model.config):
        raise ConfigMismatchError(
            "Checkpoint pré-treinado com decoder incompatível "
            f"({decoder_signature(source_config)[:12]} != {decoder_signature(model.config)[:12]})"
        )
    names = [name for name in init.params.names() if name.startswith("decoder.")]
    return model.params.assign(init.params.snapshot(), names=names)


def finetune(utterances: Sequence[Utterance], model_config: ModelConfig, train: TrainConfig,
             init: Optional[Checkpoint] = None, pad_value: float = 0.0,
             report_path: Optional[Union[str, Path]] = None) -> FinetuneResult:
    """
    Treina o modelo completo em dados pareados, com validação a cada validation_interval passos

    Com init pré-treinado, os parâmetros do decoder são copiados e os momentos do Adam recomeçam.
    O checkpoint de melhor validação é mantido; para após `patience` avaliações sem melhora.
    """
    if not utterances:
        raise EmptyBatchError("Manifest pareado sem enunciados")
    r = model_config.reduction_factor
    model = TacotronModel.initialize(model_config, train.seed)
    init_kind = "fresh"
    if init is not None:
        copied = load_pretrained_decoder(model, init)
        init_kind = "pretrained"
        logger.info(f"Decoder pré-treinado carregado: {len(copied)} parâmetros (passo {init.step})")
    model.params.unfreeze_all()
    adam = _new_adam(model, train)

    train_items, valid_items = split_validation(utterances, train.validation_fraction, train.seed)
    if not valid_items:
        logger.warning("Sem conjunto de validação separado; validando no próprio treino")
        valid_items = train_items
    valid_batches = evaluation_batches(valid_items, train.batch_size, r, paired=True, pad_value=pad_value)
    stream = _batch_stream(train_items, train, r, paired=True, pad_value=pad_value)
    report_path = Path(report_path) if report_path else None

    best_loss, best_step = math.inf, 0
    best_params = model.params.snapshot()
    history: List[Tuple[int, float]] = []
    evaluations_without_improvement = 0
    stopped_early = False
    step = 0

    logger.info(f"Fine-tuning ({init_kind}): {len(train_items)} treino / {len(valid_items)} validação, "
                f"até {train.finetune_steps} passos")
    for step in range(1, train.finetune_steps + 1):
        started = time.perf_counter()
        rng = np.random.default_rng(derive_seed(train.seed, "finetune-step", step))
        result, norm = _optimization_step(model, next(stream), PAIRED, train, adam, rng)
        report = TrainReport(step, result.mel_l1, result.stop_bce, norm, time.perf_counter() - started)
        _write_report(report_path, report)
        if step % train.log_interval == 0:
            performance.log_train_step("finetune", step, report.mel_l1, report.stop_bce, norm, report.seconds)

        if step % train.validation_interval == 0 or step == train.finetune_steps:
            valid_loss = evaluate_loss(model, valid_batches, PAIRED, train)
            history.append((step, valid_loss))
            improved = valid_loss < best_loss
            if improved:
                best_loss, best_step = valid_loss, step
                best_params = model.params.snapshot()
                evaluations_without_improvement = 0
            else:
                evaluations_without_improvement += 1
            performance.log_validation(step, valid_loss, best_loss, improved)
            if evaluations_without_improvement >= train.patience:
                logger.info(f"Parada antecipada no passo {step} (melhor passo {best_step})")
                stopped_early = True
                break

    metadata = {
        "init": init_kind,
        "init_config_hash": init.config_hash if init is not None else None,
        "validation_history": [[s, v] for s, v in history],
        "best_step": best_step,
        "best_validation_loss": best_loss if history else None,
        "validation_ids": sorted(item.id for item in valid_items),
        "train": _train_config_metadata(train),
        "pad_value": pad_value,
    }
    last = Checkpoint(model_config=model_config.to_dict(), params=model.params, adam=adam, step=step,
                      rng_state={"seed": train.seed, "stream": "finetune-step", "step": step},
                      tag=FINETUNED_TAG, metadata=dict(metadata))

    best_set = ad.ParameterSet()
    for name, array in best_params.items():
        best_set.add(name, array)
    best = Checkpoint(model_config=model_config.to_dict(), params=best_set, adam=None, step=best_step,
                      rng_state={"seed": train.seed, "stream": "finetune-step", "step": best_step},
                      tag=BEST_TAG, metadata=dict(metadata))
    return FinetuneResult(best=best, last=last, validation_history=history, stopped_early=stopped_early)


def steps_to_reach(history: Sequence[Tuple[int, float]], threshold: float) -> Optional[int]:
    """Primeiro passo cuja perda de validação é <= threshold, ou None"""
    for step, value in history:
        if value <= threshold:
            return step
    return None


def convergence_ratio(baseline_history: Sequence[Tuple[int, float]],
                      other_history: Sequence[Tuple[int, float]]) -> Optional[float]:
    """
    Passos até `other` alcançar a melhor validação do baseline, divididos pelos passos do baseline

    None quando algum histórico está vazio ou quando `other` nunca alcança o limiar.
    """
    if not baseline_history or not other_history:
        return None
    threshold = min(value for _, value in baseline_history)
    other_steps = steps_to_reach(other_history, threshold)
    if other_steps is None:
        return None
    return other_steps / steps_to_reach(baseline_history, threshold)


def model_from_checkpoint(checkpoint: Checkpoint) -> TacotronModel:
    return TacotronModel(ModelConfig.from_dict(checkpoint.model_config), checkpoint.params)
