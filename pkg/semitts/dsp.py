"""
Processamento de sinais: WAV, STFT/ISTFT, espectrogramas mel e Griffin-Lim

Convenções:
    - janela Hann periódica de win_length amostras, centrada em n_fft
    - padding reflexivo de n_fft//2 à esquerda; número de frames = ceil(len/hop)
    - espectrogramas guardam log(max(magnitude, floor)), frames x bins
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import librosa
import numpy as np
import soundfile as sf
from scipy.signal import get_window

from .checkpoint import decode_container, encode_container, write_atomic
from .config import DSPConfig
from .errors import ContractViolation, ShapeError, WavFormatError
from .utils import config_hash, write_atomic_text

logger = logging.getLogger("semitts.dsp")

LINEAR_LOG = "linear-log"
MEL_LOG = "mel-log"
PCM16_SCALE = 32767.0


@dataclass
class Waveform:
    """Amostras float em [-1, 1] e taxa de amostragem"""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        """Validação após inicialização"""
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ContractViolation("sample_rate deve ser positivo")
        if not np.all(np.isfinite(self.samples)):
            raise ContractViolation("Waveform contém valores não finitos")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """Matriz frames x bins de log-magnitudes com metadados de enquadramento"""
    values: np.ndarray
    kind: str
    n_fft: int
    hop_length: int
    win_length: int
    sample_rate: int
    floor: float = 1e-5

    def __post_init__(self):
        """Validação após inicialização"""
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in (LINEAR_LOG, MEL_LOG):
            raise ContractViolation(f"kind desconhecido: {self.kind}")
        if self.values.ndim != 2:
            raise ShapeError(f"Espectrograma deve ser 2-D, recebido shape {self.values.shape}")
        if self.kind == LINEAR_LOG and self.values.shape[1] != self.n_fft // 2 + 1:
            raise ShapeError(f"Espectrograma linear precisa de {self.n_fft // 2 + 1} bins, tem {self.values.shape[1]}")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def log_floor(self) -> float:
        return math.log(self.floor)

    def framing(self) -> dict:
        return {
            "kind": self.kind,
            "n_fft": self.n_fft,
            "hop_length": self.hop_length,
            "win_length": self.win_length,
            "sample_rate": self.sample_rate,
            "floor": self.floor,
        }


@dataclass
class MelFilterbank:
    """Filtros triangulares (escala HTK) n_mels x (n_fft/2 + 1)"""
    matrix: np.ndarray
    sample_rate: int
    n_fft: int
    fmin: float
    fmax: float

    def __post_init__(self):
        """Validação após inicialização"""
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.n_fft // 2 + 1:
            raise ShapeError(f"Banco mel com shape {self.matrix.shape} incompatível com n_fft={self.n_fft}")
        if np.any(self.matrix < 0):
            raise ContractViolation("Banco mel deve ser não negativo")

    @property
    def n_mels(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def create(cls, sample_rate: int, n_fft: int, n_mels: int = 80, fmin: float = 50.0,
               fmax: Optional[float] = None) -> "MelFilterbank":
        fmax = sample_rate / 2.0 if fmax is None else float(fmax)
        matrix = librosa.filters.mel(
            sr=sample_rate, n_fft=n_fft, n_mels=n_mels, fmin=fmin, fmax=fmax,
            htk=True, norm=None, dtype=np.float64,
        )
        empty = np.flatnonzero(matrix.sum(axis=1) <= 0)
        if empty.size:
            raise ContractViolation(f"Filtros mel vazios {empty.tolist()}: reduza n_mels ou aumente n_fft")
        return cls(matrix=matrix, sample_rate=sample_rate, n_fft=n_fft, fmin=fmin, fmax=fmax)

    @classmethod
    def from_config(cls, dsp: DSPConfig) -> "MelFilterbank":
        return cls.create(dsp.sample_rate, dsp.n_fft, dsp.n_mels, dsp.fmin, dsp.fmax_hz)

    def check_geometry(self, n_fft: int, sample_rate: int) -> None:
        if n_fft != self.n_fft or sample_rate != self.sample_rate:
            raise ShapeError(
                f"Banco mel para n_fft={self.n_fft}/sr={self.sample_rate}, "
                f"espectro com n_fft={n_fft}/sr={sample_rate}"
            )


# ============================================================================
# WAV
# ============================================================================

def load_wav(path: Union[str, Path]) -> Waveform:
    """Lê WAV PCM16 mono"""
    try:
        info = sf.info(str(path))
    except RuntimeError as e:
        raise WavFormatError(f"{path}: cabeçalho RIFF/WAVE inválido ({e})") from e
    if info.format != "WAV":
        raise WavFormatError(f"{path}: formato {info.format} não suportado (apenas WAV)")
    if info.subtype != "PCM_16":
        raise WavFormatError(f"{path}: subtipo {info.subtype} não suportado (apenas PCM_16)")
    if info.channels != 1:
        raise WavFormatError(f"{path}: {info.channels} canais, apenas mono é suportado")

    data, sample_rate = sf.read(str(path), dtype="int16", always_2d=False)
    return Waveform(samples=data.astype(np.float64) / PCM16_SCALE, sample_rate=int(sample_rate))


def save_wav(path: Union[str, Path], wave: Waveform) -> int:
    """
    Grava WAV PCM16 mono

    Returns:
        Número de amostras cortadas em [-1, 1]
    """
    clipped = int(np.count_nonzero(np.abs(wave.samples) > 1.0))
    if clipped:
        logger.warning(f"{path}: {clipped} amostras fora de [-1, 1] foram cortadas")
    quantized = np.round(np.clip(wave.samples, -1.0, 1.0) * PCM16_SCALE).astype(np.int16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), quantized, wave.sample_rate, subtype="PCM_16", format="WAV")
    return clipped


# ============================================================================
# STFT
# ============================================================================

def _window(n_fft: int, win_length: int) -> np.ndarray:
    window = get_window("hann", win_length, fftbins=True).astype(np.float64)
    left = (n_fft - win_length) // 2
    return np.pad(window, (left, n_fft - win_length - left))


def _check_framing(n_fft: int, hop_length: int, win_length: int) -> None:
    if not (1 <= hop_length <= win_length <= n_fft):
        raise ContractViolation(f"É preciso hop <= win <= n_fft (hop={hop_length}, win={win_length}, n_fft={n_fft})")


def num_frames(length: int, hop_length: int) -> int:
    return -(-length // hop_length)


def _padded_index(length: int, n_fft: int, hop_length: int) -> Tuple[np.ndarray, int]:
    """Mapa índice-no-sinal-estendido -> índice-no-sinal para o padding reflexivo"""
    n_frames = num_frames(length, hop_length)
    left = n_fft // 2
    right = max(0, (n_frames - 1) * hop_length + n_fft - left - length)
    index = np.pad(np.arange(length), (left, right), mode="reflect")
    return index, n_frames


def stft(samples: np.ndarray, n_fft: int, hop_length: int, win_length: int) -> np.ndarray:
    """STFT complexo frames x (n_fft/2 + 1)"""
    _check_framing(n_fft, hop_length, win_length)
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        return np.zeros((0, n_fft // 2 + 1), dtype=np.complex128)

    index, n_frames = _padded_index(samples.size, n_fft, hop_length)
    padded = samples[index]
    starts = np.arange(n_frames)[:, None] * hop_length
    frames = padded[starts + np.arange(n_fft)[None, :]] * _window(n_fft, win_length)
    return np.fft.rfft(frames, n=n_fft, axis=1)


def istft(spectrum: np.ndarray, n_fft: int, hop_length: int, win_length: int,
          length: Optional[int] = None) -> np.ndarray:
    """
    Inversa de mínimos quadrados do STFT

    Overlap-add ponderado pela janela, dobrado de volta através do mesmo padding
    reflexivo usado no stft, e normalizado pela soma das janelas ao quadrado.
    """
    _check_framing(n_fft, hop_length, win_length)
    n_frames = spectrum.shape[0]
    if length is None:
        length = n_frames * hop_length
    if n_frames == 0 or length == 0:
        return np.zeros(length)
    if num_frames(length, hop_length) != n_frames:
        raise ShapeError(f"{n_frames} frames incompatíveis com {length} amostras e hop {hop_length}")

    window = _window(n_fft, win_length)
    index, _ = _padded_index(length, n_fft, hop_length)
    frames = np.fft.irfft(spectrum, n=n_fft, axis=1) * window

    positions = (np.arange(n_frames)[:, None] * hop_length + np.arange(n_fft)[None, :]).ravel()
    ola = np.bincount(positions, weights=frames.ravel(), minlength=index.size)
    norm = np.bincount(positions, weights=np.tile(window * window, n_frames), minlength=index.size)

    signal = np.bincount(index, weights=ola, minlength=length)
    weight = np.bincount(index, weights=norm, minlength=length)
    return signal / np.maximum(weight, np.finfo(np.float64).tiny)


# ============================================================================
# ESPECTROGRAMAS
# ============================================================================

def linear_log_spectrogram(wave: Waveform, framing: DSPConfig) -> Spectrogram:
    if wave.sample_rate != framing.sample_rate:
        raise ShapeError(f"Taxa {wave.sample_rate} Hz difere do enquadramento ({framing.sample_rate} Hz)")
    magnitude = np.abs(stft(wave.samples, framing.n_fft, framing.hop_length, framing.win_length))
    return Spectrogram(
        values=np.log(np.maximum(magnitude, framing.floor)),
        kind=LINEAR_LOG,
        n_fft=framing.n_fft,
        hop_length=framing.hop_length,
        win_length=framing.win_length,
        sample_rate=framing.sample_rate,
        floor=framing.floor,
    )


def mel_log_spectrogram(wave: Waveform, filterbank: MelFilterbank, framing: DSPConfig) -> Spectrogram:
    """log(max(banco·|STFT|, floor)) por frame"""
    filterbank.check_geometry(framing.n_fft, wave.sample_rate)
    if framing.n_mels != filterbank.n_mels:
        raise ShapeError(f"Enquadramento pede {framing.n_mels} canais mel, banco tem {filterbank.n_mels}")
    magnitude = np.abs(stft(wave.samples, framing.n_fft, framing.hop_length, framing.win_length))
    return Spectrogram(
        values=np.log(np.maximum(magnitude @ filterbank.matrix.T, framing.floor)),
        kind=MEL_LOG,
        n_fft=framing.n_fft,
        hop_length=framing.hop_length,
        win_length=framing.win_length,
        sample_rate=framing.sample_rate,
        floor=framing.floor,
    )


def linear_to_mel(spec: Spectrogram, filterbank: MelFilterbank) -> Spectrogram:
    if spec.kind != LINEAR_LOG:
        raise ContractViolation(f"linear_to_mel espera {LINEAR_LOG}, recebido {spec.kind}")
    filterbank.check_geometry(spec.n_fft, spec.sample_rate)
    magnitude = _energy(spec)
    mel = magnitude @ filterbank.matrix.T
    return Spectrogram(
        values=np.log(np.maximum(mel, spec.floor)),
        kind=MEL_LOG,
        n_fft=spec.n_fft,
        hop_length=spec.hop_length,
        win_length=spec.win_length,
        sample_rate=spec.sample_rate,
        floor=spec.floor,
    )


def _energy(spec: Spectrogram) -> np.ndarray:
    # valores no piso representam energia nula
    return np.where(spec.values <= spec.log_floor, 0.0, np.exp(spec.values))


def mel_to_linear(spec: Spectrogram, filterbank: MelFilterbank) -> Spectrogram:
    """Mínimos quadrados não negativos sobre o mel exponenciado, re-logado com piso"""
    if spec.kind != MEL_LOG:
        raise ContractViolation(f"mel_to_linear espera {MEL_LOG}, recebido {spec.kind}")
    filterbank.check_geometry(spec.n_fft, spec.sample_rate)
    if spec.values.shape[1] != filterbank.n_mels:
        raise ShapeError(f"Espectrograma com {spec.values.shape[1]} canais, banco com {filterbank.n_mels}")

    mel = _energy(spec)
    if spec.n_frames == 0 or not np.any(mel > 0):
        linear = np.zeros((spec.n_frames, filterbank.matrix.shape[1]))
    else:
        linear = librosa.util.nnls(filterbank.matrix, mel.T).T
    return Spectrogram(
        values=np.log(np.maximum(linear, spec.floor)),
        kind=LINEAR_LOG,
        n_fft=spec.n_fft,
        hop_length=spec.hop_length,
        win_length=spec.win_length,
        sample_rate=spec.sample_rate,
        floor=spec.floor,
    )


# ============================================================================
# GRIFFIN-LIM
# ============================================================================

_two_sided_cache = {}


def _two_sided_weights(n_bins: int, n_fft: int) -> np.ndarray:
    key = (n_bins, n_fft)
    if key not in _two_sided_cache:
        weights = np.full(n_bins, 2.0)
        weights[0] = 1.0
        if n_fft % 2 == 0:
            weights[-1] = 1.0
        _two_sided_cache[key] = weights
    return _two_sided_cache[key]


def spectral_convergence(estimate: np.ndarray, target: np.ndarray, n_fft: int) -> float:
    """‖|X| − |S|‖F / ‖S‖F medido sobre o espectro bilateral"""
    weights = _two_sided_weights(target.shape[1], n_fft)
    denominator = math.sqrt(float(np.sum(weights * target * target)))
    if denominator == 0.0:
        return 0.0
    diff = np.abs(estimate) - target
    return math.sqrt(float(np.sum(weights * diff * diff))) / denominator


def griffin_lim(spec: Spectrogram, n_iters: int = 60, seed: int = 0) -> Tuple[Waveform, List[float]]:
    """
    Reconstrói a forma de onda a partir de magnitudes lineares

    Returns:
        (waveform com n_frames * hop amostras, convergência espectral por iteração)
    """
    if spec.kind != LINEAR_LOG:
        raise ContractViolation("griffin_lim exige espectrograma linear (use mel_to_linear antes)")
    if n_iters < 1:
        raise ContractViolation("n_iters deve ser >= 1")

    length = spec.n_frames * spec.hop_length
    if spec.n_frames == 0:
        return Waveform(np.zeros(0), spec.sample_rate), []

    magnitude = np.exp(spec.values)
    rng = np.random.default_rng(seed)
    # uniforme em (-pi, pi]
    phase = -rng.uniform(-np.pi, np.pi, size=magnitude.shape)
    convergence: List[float] = []
    samples = np.zeros(length)

    for _ in range(n_iters):
        samples = istft(magnitude * np.exp(1j * phase), spec.n_fft, spec.hop_length, spec.win_length, length=length)
        rebuilt = stft(samples, spec.n_fft, spec.hop_length, spec.win_length)
        convergence.append(spectral_convergence(rebuilt, magnitude, spec.n_fft))
        phase = np.angle(rebuilt)

    logger.debug(f"Griffin-Lim: {n_iters} iterações, convergência final {convergence[-1]:.4f}")
    return Waveform(samples, spec.sample_rate), convergence


# ============================================================================
# CACHE DE ESPECTROGRAMAS
# ============================================================================

def save_spectrogram(path: Union[str, Path], spec: Spectrogram) -> None:
    """Bloco de tensores + sidecar JSON com o enquadramento"""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    write_atomic_text(sidecar, json.dumps(spec.framing(), sort_keys=True, indent=2))
    write_atomic(path, encode_container(spec.framing(), {"values": spec.values}))


def load_spectrogram(path: Union[str, Path]) -> Spectrogram:
    path = Path(path)
    header, tensors = decode_container(path.read_bytes())
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        framing = json.loads(sidecar.read_text(encoding="utf-8"))
        if framing != header:
            raise ShapeError(f"{sidecar}: enquadramento difere do cabeçalho do cache")
    return Spectrogram(values=tensors["values"], **header)


def cached_mel(wav_path: Union[str, Path], filterbank: MelFilterbank, framing: DSPConfig,
               cache_dir: Optional[Union[str, Path]] = None) -> Spectrogram:
    """mel_log_spectrogram com cache opcional em disco por (arquivo, mtime, tamanho, enquadramento)"""
    wav_path = Path(wav_path)
    if cache_dir is None or not wav_path.is_file():
        return mel_log_spectrogram(load_wav(wav_path), filterbank, framing)

    stat = wav_path.stat()
    key = config_hash({
        "wav": str(wav_path.resolve()),
        "mtime_ns": stat.st_mtime_ns,
        "size": stat.st_size,
        "framing": dataclasses.asdict(framing),
    })[:24]
    cache_path = Path(cache_dir) / f"{key}.mel"
    if cache_path.exists():
        return load_spectrogram(cache_path)
    spec = mel_log_spectrogram(load_wav(wav_path), filterbank, framing)
    save_spectrogram(cache_path, spec)
    return spec
