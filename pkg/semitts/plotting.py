"""
Gráficos: curva MCD x minutos de dados pareados (SVG) e imagem de alinhamento (PNG)
"""

import csv
import io
import logging
import statistics
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .errors import ContractViolation  # noqa: E402
from .utils import write_atomic_text  # noqa: E402

logger = logging.getLogger("semitts.eval")

SWEEP_COLUMNS = ("variant", "paired_minutes", "seed", "mcd")


def read_sweep_rows(csv_path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(csv_path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for column in SWEEP_COLUMNS:
            if column not in (reader.fieldnames or []):
                raise ContractViolation(f"{csv_path}: coluna ausente '{column}'")
        return list(reader)


def median_curves(rows: List[Dict[str, str]]) -> Dict[str, List[Tuple[float, float]]]:
    """Variante -> [(minutos, mediana do MCD entre sementes)], ignorando células sem MCD"""
    grouped: Dict[str, Dict[float, List[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if not row.get("mcd"):
            continue
        grouped[row["variant"]][float(row["paired_minutes"])].append(float(row["mcd"]))
    return {
        variant: [(minutes, float(statistics.median(values))) for minutes, values in sorted(by_minutes.items())]
        for variant, by_minutes in sorted(grouped.items())
    }


def render_svg(curves: Dict[str, List[Tuple[float, float]]], title: str = "MCD x dados pareados") -> str:
    """SVG determinístico: uma linha por variante, marcador isolado quando há um único ponto"""
    with plt.rc_context({"svg.hashsalt": "semitts", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for variant, points in curves.items():
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            ax.plot(xs, ys, marker="o", linestyle="-" if len(points) > 1 else "none", label=variant)
        ax.set_xlabel("minutos de dados pareados")
        ax.set_ylabel("MCD (dB), mediana entre sementes")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        if curves:
            ax.legend()
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buffer.getvalue()


def emit_plot(csv_path: Union[str, Path], svg_path: Union[str, Path]) -> Dict[str, List[Tuple[float, float]]]:
    """Lê o CSV do sweep e grava o SVG; devolve as curvas desenhadas"""
    curves = median_curves(read_sweep_rows(csv_path))
    write_atomic_text(svg_path, render_svg(curves))
    logger.info(f"Gráfico salvo: {svg_path} ({len(curves)} variantes)")
    return curves


def save_alignment_image(alignment: np.ndarray, path: Union[str, Path], scale: int = 4) -> None:
    """Pesos de atenção (passos x tokens) como imagem em tons de cinza; tokens no eixo vertical"""
    alignment = np.asarray(alignment, dtype=np.float64)
    if alignment.ndim != 2 or alignment.size == 0:
        raise ContractViolation("Alinhamento deve ser uma matriz não vazia")
    peak = alignment.max()
    normalized = alignment / peak if peak > 0 else alignment
    pixels = (255.0 * (1.0 - np.clip(normalized.T[::-1], 0.0, 1.0))).round().astype(np.uint8)
    image = Image.fromarray(pixels)
    image = image.resize((pixels.shape[1] * scale, pixels.shape[0] * scale), Image.Resampling.NEAREST)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")
