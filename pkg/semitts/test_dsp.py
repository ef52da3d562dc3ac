"""
Testes de STFT, banco mel, Griffin-Lim e WAV
"""

import math
import os

import numpy as np
import pytest
import soundfile as sf

from .config import DSPConfig
from .dsp import (
    LINEAR_LOG,
    MEL_LOG,
    MelFilterbank,
    Spectrogram,
    Waveform,
    cached_mel,
    griffin_lim,
    istft,
    linear_log_spectrogram,
    load_spectrogram,
    load_wav,
    mel_log_spectrogram,
    mel_to_linear,
    num_frames,
    save_spectrogram,
    save_wav,
    stft,
)
from .errors import ContractViolation, ShapeError, WavFormatError


def _tone(freq, sample_rate, seconds, amplitude=0.5):
    t = np.arange(int(sample_rate * seconds)) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t)


def test_istft_inverts_stft(rng):
    signal = rng.normal(size=2000) * 0.3
    spectrum = stft(signal, n_fft=256, hop_length=64, win_length=256)
    assert spectrum.shape == (num_frames(2000, 64), 129)
    rebuilt = istft(spectrum, n_fft=256, hop_length=64, win_length=256, length=2000)
    assert np.max(np.abs(rebuilt - signal)) < 1e-6


def test_tone_peaks_at_expected_bin():
    """440 Hz a 16 kHz com n_fft 1024: bin round(440*1024/16000) = 28"""
    signal = _tone(440.0, 16000, 0.5)
    magnitude = np.abs(stft(signal, n_fft=1024, hop_length=256, win_length=1024))
    # bordas usam padding reflexivo; quadros internos contêm só o tom
    interior = magnitude[4:-4]
    assert interior.shape[0] > 10
    assert np.all(np.argmax(interior, axis=1) == 28)


def test_silence_maps_to_log_floor(small_dsp):
    bank = MelFilterbank.from_config(small_dsp)
    spec = mel_log_spectrogram(Waveform(np.zeros(1000), 8000), bank, small_dsp)
    assert spec.kind == MEL_LOG
    np.testing.assert_array_equal(spec.values, math.log(small_dsp.floor))


def test_empty_signal_has_zero_frames(small_dsp):
    spec = linear_log_spectrogram(Waveform(np.zeros(0), 8000), small_dsp)
    assert spec.values.shape == (0, small_dsp.n_bins)


def test_framing_contract():
    with pytest.raises(ContractViolation):
        stft(np.zeros(100), n_fft=128, hop_length=256, win_length=128)


def test_filterbank_is_nonnegative_with_no_empty_filters(small_dsp):
    bank = MelFilterbank.from_config(small_dsp)
    assert bank.matrix.shape == (small_dsp.n_mels, small_dsp.n_bins)
    assert np.all(bank.matrix >= 0)
    assert np.all(bank.matrix.sum(axis=1) > 0)


def test_filterbank_geometry_mismatch(small_dsp):
    bank = MelFilterbank.create(16000, 512, n_mels=20)
    with pytest.raises(ShapeError):
        mel_log_spectrogram(Waveform(np.zeros(100), 8000), bank, small_dsp)


def test_mel_to_linear_of_floor_stays_at_floor(small_dsp):
    bank = MelFilterbank.from_config(small_dsp)
    floor = math.log(small_dsp.floor)
    mel = Spectrogram(np.full((5, small_dsp.n_mels), floor), MEL_LOG, small_dsp.n_fft,
                      small_dsp.hop_length, small_dsp.win_length, small_dsp.sample_rate, small_dsp.floor)
    linear = mel_to_linear(mel, bank)
    assert linear.kind == LINEAR_LOG
    np.testing.assert_array_equal(linear.values, floor)


def test_mel_to_linear_is_nonnegative_and_consistent(small_dsp):
    bank = MelFilterbank.from_config(small_dsp)
    mel = mel_log_spectrogram(Waveform(_tone(600.0, 8000, 0.3), 8000), bank, small_dsp)
    linear = mel_to_linear(mel, bank)
    assert linear.values.shape == (mel.n_frames, small_dsp.n_bins)
    assert np.all(linear.values >= math.log(small_dsp.floor))


def test_griffin_lim_converges_on_tone(small_dsp):
    spec = linear_log_spectrogram(Waveform(_tone(500.0, 8000, 1.0), 8000), small_dsp)
    wave, convergence = griffin_lim(spec, n_iters=60, seed=0)
    assert len(convergence) == 60
    assert len(wave.samples) == spec.n_frames * small_dsp.hop_length
    assert convergence[-1] < 0.05
    assert all(b <= a + 1e-9 for a, b in zip(convergence[1:], convergence[2:]))


def test_griffin_lim_requires_linear_input(small_dsp):
    bank = MelFilterbank.from_config(small_dsp)
    mel = mel_log_spectrogram(Waveform(_tone(500.0, 8000, 0.1), 8000), bank, small_dsp)
    with pytest.raises(ContractViolation):
        griffin_lim(mel)


def test_wav_roundtrip_within_one_step(tmp_path):
    ramp = np.linspace(-1.0, 1.0, 4001)
    path = tmp_path / "ramp.wav"
    assert save_wav(path, Waveform(ramp, 8000)) == 0
    loaded = load_wav(path)
    assert loaded.sample_rate == 8000
    assert np.max(np.abs(loaded.samples - ramp)) <= 1.0 / 32767


def test_wav_clipping_is_counted(tmp_path):
    assert save_wav(tmp_path / "loud.wav", Waveform([0.0, 1.5, -2.0, 0.5], 8000)) == 2
    np.testing.assert_allclose(load_wav(tmp_path / "loud.wav").samples, [0.0, 1.0, -1.0, 0.5], atol=1e-4)


def test_invalid_wav_header(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"definitely not audio " * 8)
    with pytest.raises(WavFormatError):
        load_wav(path)


def test_stereo_and_float_wavs_rejected(tmp_path):
    sf.write(str(tmp_path / "stereo.wav"), np.zeros((100, 2), dtype=np.int16), 8000, subtype="PCM_16")
    sf.write(str(tmp_path / "float.wav"), np.zeros(100), 8000, subtype="FLOAT")
    with pytest.raises(WavFormatError):
        load_wav(tmp_path / "stereo.wav")
    with pytest.raises(WavFormatError):
        load_wav(tmp_path / "float.wav")


def test_spectrogram_cache(tmp_path, small_dsp):
    wav_path = tmp_path / "tone.wav"
    save_wav(wav_path, Waveform(_tone(700.0, 8000, 0.2), 8000))
    bank = MelFilterbank.from_config(small_dsp)
    first = cached_mel(wav_path, bank, small_dsp, cache_dir=tmp_path / "cache")
    assert len(list((tmp_path / "cache").glob("*.mel"))) == 1
    second = cached_mel(wav_path, bank, small_dsp, cache_dir=tmp_path / "cache")
    assert first.values.tobytes() == second.values.tobytes()
    assert second.framing() == first.framing()


def test_rewritten_wav_invalidates_cache(tmp_path, small_dsp):
    wav_path = tmp_path / "tone.wav"
    bank = MelFilterbank.from_config(small_dsp)
    save_wav(wav_path, Waveform(_tone(700.0, 8000, 0.2), 8000))
    first = cached_mel(wav_path, bank, small_dsp, cache_dir=tmp_path / "cache")

    save_wav(wav_path, Waveform(_tone(1500.0, 8000, 0.3), 8000))
    longer = cached_mel(wav_path, bank, small_dsp, cache_dir=tmp_path / "cache")
    assert longer.n_frames > first.n_frames

    save_wav(wav_path, Waveform(_tone(300.0, 8000, 0.3), 8000))
    stat = wav_path.stat()
    os.utime(wav_path, ns=(stat.st_atime_ns, stat.st_mtime_ns + 1_000_000_000))
    same_size = cached_mel(wav_path, bank, small_dsp, cache_dir=tmp_path / "cache")
    direct = mel_log_spectrogram(load_wav(wav_path), bank, small_dsp)
    assert same_size.values.tobytes() == direct.values.tobytes()
    assert same_size.values.tobytes() != longer.values.tobytes()
    assert len(list((tmp_path / "cache").glob("*.mel"))) == 3


def test_spectrogram_sidecar_mismatch(tmp_path, small_dsp):
    spec = linear_log_spectrogram(Waveform(_tone(300.0, 8000, 0.1), 8000), small_dsp)
    path = tmp_path / "x.spec"
    save_spectrogram(path, spec)
    sidecar = tmp_path / "x.spec.json"
    sidecar.write_text(sidecar.read_text().replace(str(small_dsp.hop_length), "999"))
    with pytest.raises(ShapeError):
        load_spectrogram(path)


def test_dsp_config_validation():
    with pytest.raises(ValueError):
        DSPConfig(hop_length=600, win_length=512, n_fft=512)
    with pytest.raises(ValueError):
        DSPConfig(fmax=9000.0)
