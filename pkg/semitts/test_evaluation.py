"""
Testes de cepstros, DTW, MCD e relatórios de avaliação
"""

import math

import numpy as np
import pytest

from .checkpoint import Checkpoint, save_checkpoint
from .dsp import LINEAR_LOG, MEL_LOG, Spectrogram, Waveform, save_wav
from .errors import ContractViolation, ShapeError
from .evaluation import (
    EVAL_HEADER,
    MCD_SCALE,
    EvalReport,
    dtw_align,
    evaluate_set,
    mcd,
    mcd_from_cepstra,
    mel_cepstra,
    read_report,
    report_csv,
    write_report,
)
from .models import Manifest, ManifestEntry, ManifestKind
from .tacotron import TacotronModel
from .conftest import tiny_model_config


def _mel(values):
    values = np.asarray(values, dtype=np.float64)
    return Spectrogram(values, MEL_LOG, 256, 64, 256, 8000, 1e-5)


def _best_path_cost(a, b):
    """Enumera todos os caminhos monótonos com passos (1,0), (0,1), (1,1)"""
    distance = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    n, m = distance.shape
    best = math.inf

    def walk(i, j, total):
        nonlocal best
        total += distance[i, j]
        if (i, j) == (n - 1, m - 1):
            best = min(best, total)
            return
        if i + 1 < n:
            walk(i + 1, j, total)
        if j + 1 < m:
            walk(i, j + 1, total)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total)

    walk(0, 0, 0.0)
    return best


# ============================================================================
# CEPSTROS
# ============================================================================

def test_constant_frame_has_zero_cepstra():
    cepstra = mel_cepstra(_mel(np.full((3, 20), -2.5)))
    assert cepstra.shape == (3, 13)
    np.testing.assert_allclose(cepstra, 0.0, atol=1e-12)


def test_cepstra_match_direct_dct(rng):
    values = rng.normal(size=(4, 20))
    cepstra = mel_cepstra(_mel(values), n_coeffs=5)
    n = np.arange(20)
    for k in range(1, 6):
        basis = math.sqrt(2.0 / 20) * np.cos(math.pi * k * (2 * n + 1) / 40)
        np.testing.assert_allclose(cepstra[:, k - 1], values @ basis, atol=1e-9)


def test_orthonormal_dct_preserves_energy(rng):
    values = rng.normal(size=(2, 10))
    cepstra = mel_cepstra(_mel(values), n_coeffs=9)
    c0 = values.sum(axis=1) / math.sqrt(10)
    np.testing.assert_allclose(c0 ** 2 + np.sum(cepstra ** 2, axis=1), np.sum(values ** 2, axis=1), rtol=1e-12)


def test_cepstra_contracts():
    with pytest.raises(ContractViolation):
        mel_cepstra(_mel(np.zeros((2, 13))), n_coeffs=13)
    linear = Spectrogram(np.zeros((2, 129)), LINEAR_LOG, 256, 64, 256, 8000, 1e-5)
    with pytest.raises(ContractViolation):
        mel_cepstra(linear)


# ============================================================================
# DTW
# ============================================================================

def test_identical_sequences_align_on_diagonal(rng):
    a = rng.normal(size=(6, 3))
    path = dtw_align(a, a)
    assert path.pairs() == [(i, i) for i in range(6)]
    assert path.cost == pytest.approx(0.0, abs=1e-12)


def test_dtw_matches_brute_force(rng):
    for n in range(1, 7):
        for m in range(1, 7):
            a, b = rng.normal(size=(n, 2)), rng.normal(size=(m, 2))
            _check_against_brute_force(a, b)


def _check_against_brute_force(a, b):
    path = dtw_align(a, b)
    assert path.cost == pytest.approx(_best_path_cost(a, b), rel=1e-12)
    pairs = path.pairs()
    assert pairs[0] == (0, 0) and pairs[-1] == (len(a) - 1, len(b) - 1)
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        assert (i1 - i0, j1 - j0) in ((1, 0), (0, 1), (1, 1))
    along_path = sum(np.linalg.norm(a[i] - b[j]) for i, j in pairs)
    assert along_path == pytest.approx(path.cost, rel=1e-12)


def test_dtw_contracts():
    with pytest.raises(ContractViolation):
        dtw_align(np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        dtw_align(np.zeros((2, 2)), np.zeros((3, 3)))


# ============================================================================
# MCD
# ============================================================================

def test_mcd_of_identical_waves_is_zero(small_dsp, rng):
    wave = Waveform(rng.normal(size=4000) * 0.1, 8000)
    result = mcd(wave, wave, small_dsp, utterance_id="same")
    assert result.mcd_db == pytest.approx(0.0, abs=1e-9)
    assert result.path_len == result.frames


def test_single_coefficient_offset():
    reference = np.zeros((1, 13))
    synthesis = np.zeros((1, 13))
    synthesis[0, 0] = 1.0
    assert mcd_from_cepstra(reference, synthesis) == pytest.approx(MCD_SCALE * math.sqrt(2.0))
    assert MCD_SCALE * math.sqrt(2.0) == pytest.approx(6.1418, abs=1e-4)


def test_mcd_rejects_mismatched_rates(small_dsp):
    with pytest.raises(ContractViolation):
        mcd(Waveform(np.zeros(800), 8000), Waveform(np.zeros(1600), 16000), small_dsp)


# ============================================================================
# RELATÓRIOS
# ============================================================================

def _eval_fixture(tmp_path, lexicon, small_dsp, ids=("b", "a")):
    model = TacotronModel.initialize(tiny_model_config(n_tokens=lexicon.n_tokens, n_mels=small_dsp.n_mels), seed=2)
    checkpoint_path = tmp_path / "model.ckpt"
    save_checkpoint(checkpoint_path, Checkpoint(model_config=model.config.to_dict(), params=model.params, step=7))
    entries = []
    for index, utterance_id in enumerate(ids):
        t = np.arange(3200) / 8000
        save_wav(tmp_path / f"{utterance_id}.wav", Waveform(0.3 * np.sin(2 * np.pi * (300 + 100 * index) * t), 8000))
        entries.append(ManifestEntry(id=utterance_id, audio_path=f"{utterance_id}.wav", text="thank you",
                                     duration_seconds=0.4))
    manifest = Manifest(kind=ManifestKind.PAIRED, entries=entries, base_dir=str(tmp_path))
    return checkpoint_path, manifest


def test_empty_manifest_writes_header_only(tmp_path, lexicon, small_dsp):
    checkpoint_path, _ = _eval_fixture(tmp_path, lexicon, small_dsp, ids=())
    empty = Manifest(kind=ManifestKind.PAIRED, entries=[], base_dir=str(tmp_path))
    report = evaluate_set(checkpoint_path, empty, small_dsp, lexicon, csv_path=tmp_path / "eval.csv")
    assert report.rows == []
    assert report.mean_mcd is None
    assert (tmp_path / "eval.csv").read_text() == ",".join(EVAL_HEADER) + "\n"


def test_evaluate_set_is_sorted_and_reproducible(tmp_path, lexicon, small_dsp):
    checkpoint_path, manifest = _eval_fixture(tmp_path, lexicon, small_dsp)
    first = evaluate_set(checkpoint_path, manifest, small_dsp, lexicon, csv_path=tmp_path / "one.csv")
    evaluate_set(checkpoint_path, manifest, small_dsp, lexicon, csv_path=tmp_path / "two.csv")
    assert [row["id"] for row in first.rows] == ["a", "b"]
    assert all(row["error"] == "" and row["mcd_db"] >= 0 for row in first.rows)
    assert first.checkpoint_step == 7
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()


def test_parallel_evaluation_matches_sequential(tmp_path, lexicon, small_dsp):
    checkpoint_path, manifest = _eval_fixture(tmp_path, lexicon, small_dsp)
    sequential = evaluate_set(checkpoint_path, manifest, small_dsp, lexicon)
    parallel = evaluate_set(checkpoint_path, manifest, small_dsp, lexicon, workers=2)
    assert report_csv(sequential) == report_csv(parallel)


def test_missing_audio_becomes_error_row(tmp_path, lexicon, small_dsp):
    checkpoint_path, manifest = _eval_fixture(tmp_path, lexicon, small_dsp)
    (tmp_path / "b.wav").unlink()
    report = evaluate_set(checkpoint_path, manifest, small_dsp, lexicon)
    rows = {row["id"]: row for row in report.rows}
    assert rows["a"]["error"] == ""
    assert rows["b"]["mcd_db"] is None and rows["b"]["error"]
    assert report.summary()["n_failed"] == 1
    assert report.mean_mcd == rows["a"]["mcd_db"]


def test_report_round_trip(tmp_path):
    report = EvalReport(rows=[
        {"id": "a", "mcd_db": 4.25, "frames": 10, "path_len": 12, "error": ""},
        {"id": "b", "mcd_db": None, "frames": None, "path_len": None, "error": "WavFormatError: x"},
    ], config_hash="abc", checkpoint_tag="finetuned", checkpoint_step=3)
    write_report(report, tmp_path / "r.csv")
    loaded = read_report(tmp_path / "r.csv")
    assert loaded.rows == report.rows
    assert (loaded.config_hash, loaded.checkpoint_tag, loaded.checkpoint_step) == ("abc", "finetuned", 3)
    assert loaded.median_mcd == 4.25


def test_read_report_requires_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("id,mcd_db\nx,1.0\n")
    with pytest.raises(ContractViolation):
        read_report(tmp_path / "bad.csv")
