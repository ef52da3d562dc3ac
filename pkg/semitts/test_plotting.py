"""
Testes das curvas do sweep e da imagem de alinhamento
"""

import numpy as np
import pytest
from PIL import Image

from .errors import ContractViolation
from .plotting import emit_plot, median_curves, read_sweep_rows, render_svg, save_alignment_image


def _write_sweep(path, rows):
    lines = ["variant,paired_minutes,seed,mcd,error"]
    lines += [",".join(str(value) for value in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_median_curves_groups_and_skips_failures():
    rows = [
        {"variant": "t-base", "paired_minutes": "2.0", "seed": "0", "mcd": "9.0"},
        {"variant": "t-base", "paired_minutes": "2.0", "seed": "1", "mcd": "7.0"},
        {"variant": "t-base", "paired_minutes": "2.0", "seed": "2", "mcd": "8.5"},
        {"variant": "t-base", "paired_minutes": "1.0", "seed": "0", "mcd": "11.0"},
        {"variant": "t-dec", "paired_minutes": "1.0", "seed": "0", "mcd": ""},
        {"variant": "t-dec", "paired_minutes": "1.0", "seed": "1", "mcd": "6.0"},
    ]
    curves = median_curves(rows)
    assert curves == {"t-base": [(1.0, 11.0), (2.0, 8.5)], "t-dec": [(1.0, 6.0)]}


def test_svg_is_deterministic():
    curves = {"t-base": [(1.0, 10.0), (2.0, 8.0)], "t-enc": [(1.0, 9.0)]}
    first = render_svg(curves)
    assert first == render_svg(curves)
    assert first.lstrip().startswith("<?xml")
    assert "t-enc" in first


def test_emit_plot_writes_svg(tmp_path):
    _write_sweep(tmp_path / "sweep.csv", [("t-base", 1.0, 0, 9.5, ""), ("t-base", 1.0, 1, "", "boom")])
    curves = emit_plot(tmp_path / "sweep.csv", tmp_path / "plot.svg")
    assert curves == {"t-base": [(1.0, 9.5)]}
    assert "<svg" in (tmp_path / "plot.svg").read_text(encoding="utf-8")


def test_sweep_csv_requires_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("variant,seed,mcd\nt-base,0,1.0\n", encoding="utf-8")
    with pytest.raises(ContractViolation):
        read_sweep_rows(tmp_path / "bad.csv")


def test_alignment_image(tmp_path):
    alignment = np.zeros((5, 3))
    alignment[np.arange(5), [0, 0, 1, 2, 2]] = 1.0
    save_alignment_image(alignment, tmp_path / "align" / "a.png", scale=4)
    with Image.open(tmp_path / "align" / "a.png") as image:
        assert image.size == (20, 12)
        pixels = np.asarray(image)
    # token 0 fica na última linha; peso máximo é preto
    assert pixels[-1, 0] == 0
    assert pixels[0, 0] == 255


def test_alignment_image_rejects_empty(tmp_path):
    with pytest.raises(ContractViolation):
        save_alignment_image(np.zeros((0, 3)), tmp_path / "a.png")
    with pytest.raises(ContractViolation):
        save_alignment_image(np.zeros(4), tmp_path / "a.png")
