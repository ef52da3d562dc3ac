"""
Avaliação objetiva: cepstros mel, alinhamento DTW, MCD e relatórios por conjunto
"""

import csv
import io
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from dtw import dtw
from scipy.fft import dct

from .checkpoint import Checkpoint, load_checkpoint
from .config import DSPConfig, ModelConfig
from .dsp import MEL_LOG, MelFilterbank, Spectrogram, Waveform, griffin_lim, load_wav, mel_log_spectrogram, mel_to_linear
from .errors import ContractViolation, ShapeError
from .logging_config import TrainingLogger
from .models import Manifest, ManifestEntry
from .tacotron import TacotronModel
from .text_frontend import Lexicon, text_to_sequence
from .utils import to_jsonable, write_atomic_text
from .word_vectors import WordVectorTable, load_table, lookup_matrix

logger = logging.getLogger("semitts.eval")
performance = TrainingLogger()

MCD_SCALE = 10.0 / math.log(10.0)
EVAL_HEADER = ["id", "mcd_db", "frames", "path_len", "error"]


@dataclass
class DTWPath:
    """Caminho monótono de pares (i, j) e custo total (soma das distâncias euclidianas)"""
    index_a: np.ndarray
    index_b: np.ndarray
    cost: float

    def __len__(self) -> int:
        return len(self.index_a)

    def pairs(self) -> List[Tuple[int, int]]:
        return list(zip(self.index_a.tolist(), self.index_b.tolist()))


@dataclass
class MCDResult:
    utterance_id: str
    mcd_db: float
    frames: int
    path_len: int


@dataclass
class EvalReport:
    """Linhas por enunciado (ordenadas por id) + resumo"""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    config_hash: Optional[str] = None
    checkpoint_tag: Optional[str] = None
    checkpoint_step: Optional[int] = None

    @property
    def scores(self) -> List[float]:
        return [row["mcd_db"] for row in self.rows if not row["error"]]

    @property
    def mean_mcd(self) -> Optional[float]:
        return math.fsum(self.scores) / len(self.scores) if self.scores else None

    @property
    def median_mcd(self) -> Optional[float]:
        return float(statistics.median(self.scores)) if self.scores else None

    def summary(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "checkpoint_tag": self.checkpoint_tag,
            "checkpoint_step": self.checkpoint_step,
            "n_utterances": len(self.rows),
            "n_failed": sum(1 for row in self.rows if row["error"]),
            "mean_mcd_db": self.mean_mcd,
            "median_mcd_db": self.median_mcd,
        }


# ============================================================================
# CEPSTROS, DTW E MCD
# ============================================================================

def mel_cepstra(spec: Spectrogram, n_coeffs: int = 13) -> np.ndarray:
    """DCT-II ortonormal ao longo do eixo mel; mantém c1..c_n (c0, energia, é descartado)"""
    if spec.kind != MEL_LOG:
        raise ContractViolation(f"mel_cepstra exige espectrograma {MEL_LOG}, recebido {spec.kind}")
    n_mels = spec.values.shape[1]
    if n_coeffs < 1 or n_coeffs >= n_mels:
        raise ContractViolation(f"n_coeffs ({n_coeffs}) deve estar em [1, {n_mels})")
    coefficients = dct(spec.values, type=2, norm="ortho", axis=1)
    return coefficients[:, 1:n_coeffs + 1]


def dtw_align(a: np.ndarray, b: np.ndarray) -> DTWPath:
    """DTW com custo euclidiano e passos (1,0), (0,1), (1,1) sem pesos"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("dtw_align espera matrizes frames x coeficientes")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractViolation("dtw_align exige sequências não vazias")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"Dimensões diferentes: {a.shape[1]} e {b.shape[1]}")
    alignment = dtw(a, b, dist_method="euclidean", step_pattern="symmetric1", keep_internals=False)
    return DTWPath(np.asarray(alignment.index1, dtype=np.int64), np.asarray(alignment.index2, dtype=np.int64),
                   float(alignment.distance))


def mcd_from_cepstra(reference: np.ndarray, synthesis: np.ndarray, path: Optional[DTWPath] = None) -> float:
    """Média sobre os pares alinhados de (10/ln 10)·sqrt(2·Σ_d (c_d − c'_d)²)"""
    if path is None:
        path = dtw_align(reference, synthesis)
    diff = reference[path.index_a] - synthesis[path.index_b]
    per_pair = MCD_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1))
    return math.fsum(per_pair.tolist()) / len(per_pair)


def mcd(reference: Waveform, synthesis: Waveform, dsp_config: DSPConfig,
        filterbank: Optional[MelFilterbank] = None, utterance_id: str = "", n_coeffs: int = 13) -> MCDResult:
    """MCD entre duas formas de onda, com cepstros do mesmo enquadramento"""
    if reference.sample_rate != synthesis.sample_rate:
        raise ContractViolation(f"Taxas diferentes: {reference.sample_rate} e {synthesis.sample_rate}")
    if reference.sample_rate != dsp_config.sample_rate:
        raise ContractViolation(f"Taxa {reference.sample_rate} difere da configuração ({dsp_config.sample_rate})")
    filterbank = filterbank or MelFilterbank.from_config(dsp_config)
    ref_c = mel_cepstra(mel_log_spectrogram(reference, filterbank, dsp_config), n_coeffs)
    syn_c = mel_cepstra(mel_log_spectrogram(synthesis, filterbank, dsp_config), n_coeffs)
    path = dtw_align(ref_c, syn_c)
    return MCDResult(utterance_id, mcd_from_cepstra(ref_c, syn_c, path), ref_c.shape[0], len(path))


# ============================================================================
# SÍNTESE + AVALIAÇÃO DE CONJUNTO
# ============================================================================

@dataclass
class SynthesisContext:
    """Tudo o que a síntese de um texto precisa"""
    model: TacotronModel
    dsp: DSPConfig
    lexicon: Lexicon
    table: Optional[WordVectorTable] = None
    griffin_lim_seed: int = 0
    filterbank: MelFilterbank = None

    def __post_init__(self):
        """Validação após inicialização"""
        if self.filterbank is None:
            self.filterbank = MelFilterbank.from_config(self.dsp)
        if self.model.config.n_mels != self.dsp.n_mels:
            raise ShapeError(f"Modelo com {self.model.config.n_mels} canais mel, DSP com {self.dsp.n_mels}")
        if self.model.config.conditioning.enabled and self.table is None:
            raise ContractViolation("Modelo condicionado exige a tabela de vetores de palavras")


def synthesize_text(context: SynthesisContext, text: str, max_steps: Optional[int] = None):
    """Texto → mel → linear → Griffin-Lim; devolve (Waveform, SynthesisResult)"""
    tokens = text_to_sequence(text, context.lexicon)
    vectors = None
    if context.model.config.conditioning.enabled:
        vectors, _ = lookup_matrix(context.table, tokens.words)
    result = context.model.synthesize(tokens, vectors, max_steps)
    spec = Spectrogram(result.mel, MEL_LOG, context.dsp.n_fft, context.dsp.hop_length, context.dsp.win_length,
                       context.dsp.sample_rate, context.dsp.floor)
    wave, _ = griffin_lim(mel_to_linear(spec, context.filterbank), context.dsp.griffin_lim_iters,
                          seed=context.griffin_lim_seed)
    return wave, result


def evaluate_utterance(context: SynthesisContext, manifest: Manifest, entry: ManifestEntry) -> Dict[str, Any]:
    """Uma linha do relatório; falhas ficam registradas na coluna de erro"""
    started = time.perf_counter()
    try:
        reference = load_wav(manifest.audio_path(entry))
        synthesis, _ = synthesize_text(context, entry.text)
        result = mcd(reference, synthesis, context.dsp, context.filterbank, entry.id)
        row = {"id": entry.id, "mcd_db": result.mcd_db, "frames": result.frames,
               "path_len": result.path_len, "error": ""}
    except Exception as e:
        row = {"id": entry.id, "mcd_db": None, "frames": None, "path_len": None,
               "error": f"{type(e).__name__}: {e}"}
    duration_ms = (time.perf_counter() - started) * 1000.0
    performance.log_utterance_eval(entry.id, duration_ms, not row["error"], row["mcd_db"], row["error"] or None)
    return row


_worker_context: Optional[SynthesisContext] = None
_worker_manifest: Optional[Manifest] = None


def _init_worker(checkpoint_path: str, dsp: DSPConfig, lexicon: Lexicon, table_path: Optional[str],
                 griffin_lim_seed: int, manifest: Manifest) -> None:
    global _worker_context, _worker_manifest
    checkpoint = load_checkpoint(checkpoint_path)
    model = TacotronModel(ModelConfig.from_dict(checkpoint.model_config), checkpoint.params)
    table = load_table(table_path) if table_path else None
    _worker_context = SynthesisContext(model, dsp, lexicon, table, griffin_lim_seed)
    _worker_manifest = manifest


def _evaluate_in_worker(entry: ManifestEntry) -> Dict[str, Any]:
    return evaluate_utterance(_worker_context, _worker_manifest, entry)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(report: EvalReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(EVAL_HEADER)
    for row in report.rows:
        writer.writerow([_format_value(row[column]) for column in EVAL_HEADER])
    return buffer.getvalue()


def write_report(report: EvalReport, csv_path: Union[str, Path]) -> None:
    """CSV + sidecar JSON (mesmo nome, extensão .json)"""
    csv_path = Path(csv_path)
    write_atomic_text(csv_path, report_csv(report))
    write_atomic_text(csv_path.with_suffix(".json"),
                      json.dumps(to_jsonable(report.summary()), sort_keys=True, indent=2) + "\n")


def evaluate_set(checkpoint_path: Union[str, Path], manifest: Manifest, dsp: DSPConfig, lexicon: Lexicon,
                 table_path: Optional[Union[str, Path]] = None, griffin_lim_seed: int = 0,
                 csv_path: Optional[Union[str, Path]] = None, workers: int = 1) -> EvalReport:
    """
    Sintetiza cada enunciado do manifest, inverte com Griffin-Lim e mede MCD contra o áudio original

    Args:
        checkpoint_path: checkpoint do modelo
        manifest: manifest pareado de avaliação
        workers: processos paralelos (1 = sequencial)

    Returns:
        EvalReport com linhas ordenadas por id; determinístico dado checkpoint e semente do Griffin-Lim
    """
    checkpoint: Checkpoint = load_checkpoint(checkpoint_path)
    report = EvalReport(config_hash=checkpoint.config_hash, checkpoint_tag=checkpoint.tag,
                        checkpoint_step=checkpoint.step)
    entries = sorted(manifest.entries, key=lambda e: e.id)
    table_path = str(table_path) if table_path else None

    if entries and workers > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(str(checkpoint_path), dsp, lexicon, table_path,
                                           griffin_lim_seed, manifest)) as executor:
            rows = list(executor.map(_evaluate_in_worker, entries))
    elif entries:
        model = TacotronModel(ModelConfig.from_dict(checkpoint.model_config), checkpoint.params)
        table = load_table(table_path) if table_path else None
        context = SynthesisContext(model, dsp, lexicon, table, griffin_lim_seed)
        rows = [evaluate_utterance(context, manifest, entry) for entry in entries]
    else:
        rows = []

    report.rows = sorted(rows, key=lambda row: row["id"])
    if report.rows:
        logger.info(f"Avaliação: {len(report.scores)}/{len(report.rows)} enunciados, "
                    f"MCD médio {report.mean_mcd if report.mean_mcd is not None else float('nan'):.3f} dB")
    if csv_path is not None:
        write_report(report, csv_path)
    return report


def read_report(csv_path: Union[str, Path]) -> EvalReport:
    report = EvalReport()
    with open(csv_path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [column for column in EVAL_HEADER if column not in (reader.fieldnames or [])]
        if missing:
            raise ContractViolation(f"{csv_path}: colunas ausentes {missing}")
        for row in reader:
            report.rows.append({
                "id": row["id"],
                "mcd_db": float(row["mcd_db"]) if row["mcd_db"] else None,
                "frames": int(row["frames"]) if row["frames"] else None,
                "path_len": int(row["path_len"]) if row["path_len"] else None,
                "error": row["error"],
            })
    sidecar = Path(csv_path).with_suffix(".json")
    if sidecar.exists():
        summary = json.loads(sidecar.read_text(encoding="utf-8"))
        report.config_hash = summary.get("config_hash")
        report.checkpoint_tag = summary.get("checkpoint_tag")
        report.checkpoint_step = summary.get("checkpoint_step")
    return report
