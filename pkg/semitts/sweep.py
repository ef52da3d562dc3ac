"""
Sweep (variante x minutos de dados pareados x semente)

Cada célula roda o pipeline completo da variante num subconjunto aninhado do manifest pareado
e é avaliada sempre no mesmo conjunto de avaliação. Células concluídas deixam um marcador DONE
e são puladas ao retomar o sweep enquanto a configuração da célula não mudar.
"""

import csv
import io
import json
import logging
import math
import shutil
import statistics
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from . import pipeline
from .errors import ConfigMismatchError, ContractViolation
from .logging_config import TrainingLogger
from .models import ExperimentConfig, Manifest, ManifestKind, SweepSpec, validate_config
from .plotting import emit_plot, median_curves
from .training import convergence_ratio
from .utils import append_line_locked, config_hash, derive_seed, write_atomic_text

logger = logging.getLogger("semitts.sweep")
performance = TrainingLogger()

SWEEP_HEADER = ["variant", "paired_minutes", "seed", "mcd", "median_mcd", "n_paired", "paired_seconds",
                "best_step", "best_validation_loss", "error"]
DONE_MARKER = "DONE"
BASELINE_VARIANT = "t-base"
PRETRAINED_VARIANTS = ("t-dec", "t-enc-dec")


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    csv_path: Path
    svg_path: Path
    failed: List[str] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


# ============================================================================
# SUBAMOSTRAGEM
# ============================================================================

def subsample_order(manifest: Manifest, seed: int) -> List[str]:
    """Permutação dos ids pela semente; todas as frações tomam prefixos desta ordem"""
    ids = sorted(entry.id for entry in manifest.entries)
    rng = np.random.default_rng(derive_seed(seed, "paired-subsample"))
    return [ids[i] for i in rng.permutation(len(ids))]


def subsample_manifest(manifest: Manifest, minutes: float, seed: int) -> Manifest:
    """
    Menor prefixo da permutação cuja duração acumulada atinge `minutes`

    Raises:
        ContractViolation: manifest mais curto que a fração pedida
    """
    target = minutes * 60.0
    if target > manifest.total_seconds + 1e-9:
        raise ContractViolation(
            f"Fração de {minutes} min insatisfazível: o manifest pareado tem {manifest.total_seconds / 60.0:.3f} min"
        )
    durations = {entry.id: entry.duration_seconds for entry in manifest.entries}
    chosen, total = [], 0.0
    for utterance_id in subsample_order(manifest, seed):
        if total >= target - 1e-9:
            break
        chosen.append(utterance_id)
        total += durations[utterance_id]
    return manifest.subset(chosen)


def check_fractions(manifest: Manifest, fractions_minutes: List[float]) -> None:
    largest = max(fractions_minutes)
    if largest * 60.0 > manifest.total_seconds + 1e-9:
        raise ContractViolation(
            f"Fração de {largest} min insatisfazível: o manifest pareado tem {manifest.total_seconds / 60.0:.3f} min"
        )


def absolute_manifest(manifest: Manifest) -> Manifest:
    """Cópia com caminhos de áudio absolutos (o manifest da célula mora em outro diretório)"""
    entries = [entry.model_copy(update={"audio_path": str(manifest.audio_path(entry).resolve())})
               for entry in manifest.entries]
    return Manifest(kind=manifest.kind, entries=entries, base_dir=None)


# ============================================================================
# CÉLULAS
# ============================================================================

def cell_name(variant: str, minutes: float, seed: int) -> str:
    return f"{variant.replace(':', '_')}__{minutes:g}min__seed{seed}"


def cell_config(base: ExperimentConfig, variant: str, minutes: float, seed: int) -> ExperimentConfig:
    """Configuração da célula: variante aplicada, semente de treino deslocada pelo índice da semente"""
    data = base.for_variant(variant, name=cell_name(variant, minutes, seed)).to_json_dict()
    data["train"]["seed"] = base.train.seed + seed
    return validate_config(data)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def row_csv_line(row: Dict[str, Any]) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="\n").writerow([_format(row.get(column)) for column in SWEEP_HEADER])
    return buffer.getvalue()


def run_cell(base_data: Dict[str, Any], variant: str, minutes: float, seed: int,
             sweep_dir: str) -> Tuple[Dict[str, Any], bool]:
    """
    Executa uma célula (função de topo: roda em processos do pool)

    O marcador DONE guarda o hash da configuração da célula; um DONE de outra configuração
    é descartado e a célula é recalculada.

    Returns:
        (linha do CSV, pulada); falhas viram linha com a coluna de erro preenchida
    """
    started = time.perf_counter()
    name = cell_name(variant, minutes, seed)
    cell_dir = Path(sweep_dir) / "cells" / name
    done_path = cell_dir / DONE_MARKER

    row: Dict[str, Any] = {"variant": variant, "paired_minutes": float(minutes), "seed": seed}
    try:
        base = validate_config(base_data)
        cfg = cell_config(base, variant, minutes, seed)
        digest = config_hash(cfg.to_json_dict())
        if done_path.exists():
            done = json.loads(done_path.read_text(encoding="utf-8"))
            if done.get("config_hash") == digest:
                performance.log_sweep_cell(name, (time.perf_counter() - started) * 1000.0, True, skipped=True)
                return done["row"], True
            logger.warning(f"Célula {name}: DONE de outra configuração "
                           f"({str(done.get('config_hash'))[:12]} != {digest[:12]}), recalculando")
            shutil.rmtree(cell_dir)

        paired = pipeline.load_manifest(base, "paired_manifest", ManifestKind.PAIRED)
        subset = absolute_manifest(subsample_manifest(paired, minutes, cfg.train.seed))
        subset.save(cell_dir / "paired.jsonl")

        results = pipeline.run_all(cfg, cell_dir, manifest=subset, shared_dir=Path(sweep_dir) / "pretrained")
        evaluation = results["eval"]
        row.update({
            "mcd": evaluation["mean_mcd_db"],
            "median_mcd": evaluation["median_mcd_db"],
            "n_paired": len(subset),
            "paired_seconds": subset.total_seconds,
            "best_step": results["train"]["best_step"],
            "best_validation_loss": results["train"]["best_validation_loss"],
            "validation_history": results["train"]["validation_history"],
            "error": "",
        })
        write_atomic_text(done_path, json.dumps({"config_hash": digest, "row": row}, sort_keys=True) + "\n")
        success, error = True, None
    except Exception as e:
        logger.exception(f"Célula {name} falhou")
        row.update({"mcd": None, "median_mcd": None, "n_paired": None, "paired_seconds": None,
                    "best_step": None, "best_validation_loss": None, "validation_history": None,
                    "error": f"{type(e).__name__}: {e}"})
        success, error = False, row["error"]

    append_line_locked(Path(sweep_dir) / "sweep.progress.csv", row_csv_line(row))
    performance.log_sweep_cell(name, (time.perf_counter() - started) * 1000.0, success, error=error)
    return row, False


# ============================================================================
# SWEEP
# ============================================================================

def _sort_key(row: Dict[str, Any]):
    return (row["variant"], float(row["paired_minutes"]), int(row["seed"]))


def write_sweep_csv(rows: List[Dict[str, Any]], csv_path: Union[str, Path]) -> None:
    lines = [",".join(SWEEP_HEADER) + "\n"] + [row_csv_line(row) for row in sorted(rows, key=_sort_key)]
    write_atomic_text(csv_path, "".join(lines))


def check_sweep_base(base: ExperimentConfig, sweep_dir: Path) -> str:
    """
    Hash da configuração base; um sweep.json existente de outra configuração é rejeitado

    Raises:
        ConfigMismatchError: o diretório já contém células de outra configuração base
    """
    digest = config_hash(base.to_json_dict())
    manifest_path = sweep_dir / "sweep.json"
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text(encoding="utf-8"))
        previous_digest = config_hash(previous.get("base", {}))
        if previous_digest != digest:
            raise ConfigMismatchError(
                f"{sweep_dir} pertence a outra configuração base ({previous_digest[:12]} != {digest[:12]})"
            )
    return digest


def run_sweep(base: ExperimentConfig, spec: SweepSpec, sweep_dir: Union[str, Path],
              workers: Optional[int] = None) -> SweepResult:
    """
    Roda todas as células de `spec` sobre a configuração base

    Frações insatisfazíveis, variantes inválidas e diretórios de outra configuração base são
    rejeitados antes de qualquer célula. O CSV final é ordenado por (variante, minutos, semente),
    o SVG é regerado a partir dele e summary.json traz as diferenças de MCD e a razão de convergência.
    """
    sweep_dir = Path(sweep_dir)
    workers = workers or spec.workers or 1
    paired = pipeline.load_manifest(base, "paired_manifest", ManifestKind.PAIRED)
    check_fractions(paired, spec.fractions_minutes)
    pipeline.load_manifest(base, "eval_manifest", ManifestKind.PAIRED)
    cells = spec.cells()
    for variant in spec.variants:
        cell_config(base, variant, spec.fractions_minutes[0], 0)
    base_digest = check_sweep_base(base, sweep_dir)

    word_vector_variants = [v for v in spec.variants if base.for_variant(v).uses_word_vectors]
    if word_vector_variants:
        pipeline.train_word_vectors(base.for_variant(word_vector_variants[0]))

    sweep_dir.mkdir(parents=True, exist_ok=True)
    write_atomic_text(sweep_dir / "sweep.json", json.dumps({
        "base": base.to_json_dict(), "base_hash": base_digest, "sweep": spec.model_dump(mode="json"),
    }, sort_keys=True, indent=2) + "\n")
    logger.info(f"Sweep: {len(cells)} células ({len(spec.variants)} variantes x "
                f"{len(spec.fractions_minutes)} frações x {spec.seeds} sementes), {workers} processo(s)")

    base_data = base.to_json_dict()
    rows: List[Dict[str, Any]] = []
    skipped: List[str] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_cell, base_data, variant, minutes, seed, str(sweep_dir)):
                       cell_name(variant, minutes, seed) for variant, minutes, seed in cells}
            for i, future in enumerate(as_completed(futures)):
                row, was_skipped = future.result()
                rows.append(row)
                if was_skipped:
                    skipped.append(futures[future])
                logger.info(f"Progresso do sweep: {i + 1}/{len(cells)}")
    else:
        for variant, minutes, seed in cells:
            row, was_skipped = run_cell(base_data, variant, minutes, seed, str(sweep_dir))
            rows.append(row)
            if was_skipped:
                skipped.append(cell_name(variant, minutes, seed))

    rows.sort(key=_sort_key)
    csv_path, svg_path = sweep_dir / "sweep.csv", sweep_dir / "sweep.svg"
    write_sweep_csv(rows, csv_path)
    emit_plot(csv_path, svg_path)
    summary = sweep_summary(rows)
    write_atomic_text(sweep_dir / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for variant, gaps in summary["mcd_gap_by_fraction"].items():
        logger.info(f"MCD {BASELINE_VARIANT} − {variant} por fração: {gaps}")
    for variant, ratios in summary["convergence_ratio_by_fraction"].items():
        logger.info(f"Razão de convergência {variant}/{BASELINE_VARIANT} por fração: {ratios}")
    failed = [cell_name(row["variant"], float(row["paired_minutes"]), int(row["seed"])) for row in rows if row["error"]]
    if failed:
        logger.warning(f"{len(failed)} célula(s) falharam: {', '.join(failed)}")
    return SweepResult(rows=rows, csv_path=csv_path, svg_path=svg_path, failed=failed, skipped=skipped,
                       summary=summary)


# ============================================================================
# RESUMO
# ============================================================================

def gap_by_fraction(rows: List[Dict[str, Any]], baseline: str = BASELINE_VARIANT,
                    other: str = "t-dec") -> Dict[float, float]:
    """Diferença das medianas de MCD (baseline − outra variante) por fração"""
    curves = median_curves([{k: _format(v) for k, v in row.items()} for row in rows])
    base_points = dict(curves.get(baseline, []))
    other_points = dict(curves.get(other, []))
    return {minutes: base_points[minutes] - other_points[minutes]
            for minutes in sorted(base_points) if minutes in other_points}


def convergence_by_fraction(rows: List[Dict[str, Any]], baseline: str = BASELINE_VARIANT,
                            other: str = "t-dec") -> Dict[float, Optional[float]]:
    """
    Mediana entre sementes de convergence_ratio(baseline, outra) por fração

    Uma semente em que a outra variante nunca alcança a melhor validação do baseline conta como
    infinito; mediana infinita vira None.
    """
    histories: Dict[Tuple[str, float, int], List] = {}
    for row in rows:
        if not row.get("error") and row.get("validation_history"):
            histories[(row["variant"], float(row["paired_minutes"]), int(row["seed"]))] = row["validation_history"]

    ratios: Dict[float, List[float]] = {}
    for (variant, minutes, seed), history in histories.items():
        if variant != baseline or (other, minutes, seed) not in histories:
            continue
        ratio = convergence_ratio([tuple(item) for item in history],
                                  [tuple(item) for item in histories[(other, minutes, seed)]])
        ratios.setdefault(minutes, []).append(math.inf if ratio is None else ratio)

    result: Dict[float, Optional[float]] = {}
    for minutes in sorted(ratios):
        median = float(statistics.median(ratios[minutes]))
        result[minutes] = median if math.isfinite(median) else None
    return result


def sweep_summary(rows: List[Dict[str, Any]], baseline: str = BASELINE_VARIANT) -> Dict[str, Any]:
    """Diferenças de MCD para cada variante e razão de convergência para as variantes com pré-treino"""
    variants = sorted({row["variant"] for row in rows} - {baseline})
    pretrained = [v for v in variants if v.split(":")[0] in PRETRAINED_VARIANTS]
    return {
        "baseline": baseline,
        "mcd_gap_by_fraction": {
            variant: {f"{minutes:g}": gap for minutes, gap in gap_by_fraction(rows, baseline, variant).items()}
            for variant in variants
        },
        "convergence_ratio_by_fraction": {
            variant: {f"{minutes:g}": ratio for minutes, ratio in convergence_by_fraction(rows, baseline, variant).items()}
            for variant in pretrained
        },
    }
