"""
Corpus sintético determinístico: cada fonema é um tom de 60 ms, <sil> é silêncio

Gera léxico, manifests pareado / sem par / de avaliação e um corpus de texto para o skip-gram.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .config import DSPConfig, ToyCorpusConfig
from .dsp import Waveform, save_wav
from .errors import ContractViolation
from .models import Manifest, ManifestEntry, ManifestKind
from .text_frontend import EOS_ID, SIL_ID, Lexicon, tokenize
from .utils import derive_seed

logger = logging.getLogger("semitts")

CONSONANTS = ("k", "t", "m", "s", "n", "r", "l", "p")
VOWELS = ("a", "i", "o")
TOY_PHONEMES = tuple(c + v for c in CONSONANTS for v in VOWELS)
SEGMENT_SECONDS = 0.06
FADE_SECONDS = 0.005
BASE_FREQUENCY = 250.0
FREQUENCY_STEP = 140.0
AMPLITUDE = 0.5
TOPIC_STICKINESS = 0.8


def phoneme_frequency(index: int) -> float:
    """Frequência do tom do i-ésimo fonema do inventário"""
    return BASE_FREQUENCY + FREQUENCY_STEP * index


def lexicon_capacity(n_phonemes: int = len(TOY_PHONEMES)) -> int:
    """Palavras distintas de 2 ou 3 fonemas sem repetição de fonema"""
    return n_phonemes * (n_phonemes - 1) + n_phonemes * (n_phonemes - 1) * (n_phonemes - 2)


def generate_lexicon(size: int, seed: int) -> Lexicon:
    if size > lexicon_capacity():
        raise ContractViolation(f"lexicon_size {size} excede a capacidade do inventário ({lexicon_capacity()})")
    rng = np.random.default_rng(derive_seed(seed, "lexicon"))
    words: Dict[str, List[str]] = {}
    while len(words) < size:
        length = int(rng.integers(2, 4))
        pronunciation = [TOY_PHONEMES[i] for i in rng.choice(len(TOY_PHONEMES), size=length, replace=False)]
        spelling = "".join(pronunciation)
        if spelling not in words:
            words[spelling] = pronunciation
    return Lexicon(phonemes=list(TOY_PHONEMES), words=words)


def _segment(n_samples: int, frequency: float, sample_rate: int) -> np.ndarray:
    t = np.arange(n_samples) / sample_rate
    tone = AMPLITUDE * np.sin(2.0 * np.pi * frequency * t)
    ramp = min(int(round(FADE_SECONDS * sample_rate)), n_samples // 2)
    if ramp > 0:
        envelope = np.linspace(0.0, 1.0, ramp, endpoint=False)
        tone[:ramp] *= envelope
        tone[-ramp:] *= envelope[::-1]
    return tone


def render_tokens(token_ids: Sequence[int], lexicon: Lexicon, sample_rate: int) -> Waveform:
    """Concatena um segmento por token: tom para fonema, silêncio para <sil>, nada para <eos>"""
    n_samples = int(round(SEGMENT_SECONDS * sample_rate))
    phoneme_offset = lexicon.symbol_id(lexicon.phonemes[0])
    pieces = []
    for token_id in token_ids:
        if token_id == EOS_ID:
            continue
        if token_id == SIL_ID:
            pieces.append(np.zeros(n_samples))
            continue
        index = token_id - phoneme_offset
        if not (0 <= index < len(lexicon.phonemes)):
            raise ContractViolation(f"Token {lexicon.symbols[token_id]} não é um fonema do corpus sintético")
        pieces.append(_segment(n_samples, phoneme_frequency(index), sample_rate))
    samples = np.concatenate(pieces) if pieces else np.zeros(0)
    return Waveform(samples, sample_rate)


def _topics(lexicon: Lexicon, n_topics: int) -> List[List[str]]:
    words = sorted(lexicon.words)
    return [words[i::n_topics] for i in range(n_topics)]


def sample_sentences(lexicon: Lexicon, spec: ToyCorpusConfig, count: int, stream: str) -> List[List[str]]:
    """Sentenças temáticas: cada palavra vem do tópico da sentença com probabilidade 0.8"""
    rng = np.random.default_rng(derive_seed(spec.seed, "sentences", stream))
    topics = [topic for topic in _topics(lexicon, spec.n_topics) if topic]
    all_words = sorted(lexicon.words)
    sentences = []
    for _ in range(count):
        topic = topics[int(rng.integers(len(topics)))]
        length = int(rng.integers(spec.min_words, spec.max_words + 1))
        sentence = []
        for _ in range(length):
            pool = topic if rng.random() < TOPIC_STICKINESS else all_words
            sentence.append(pool[int(rng.integers(len(pool)))])
        sentences.append(sentence)
    return sentences


@dataclass
class ToyCorpus:
    root: Path
    lexicon_path: Path
    paired_manifest: Path
    unpaired_manifest: Path
    eval_manifest: Path
    text_corpus: Path


def _write_split(root: Path, prefix: str, sentences: List[List[str]], lexicon: Lexicon, dsp: DSPConfig,
                 kind: ManifestKind) -> Manifest:
    entries = []
    for i, words in enumerate(sentences):
        utterance_id = f"{prefix}-{i:04d}"
        wave = render_tokens(tokenize(words, lexicon).token_ids, lexicon, dsp.sample_rate)
        relative = Path("wavs") / f"{utterance_id}.wav"
        save_wav(root / relative, wave)
        entries.append(ManifestEntry(
            id=utterance_id,
            audio_path=str(relative),
            text=" ".join(words) if kind == ManifestKind.PAIRED else None,
            duration_seconds=wave.duration,
        ))
    return Manifest(kind=kind, entries=entries, base_dir=str(root))


def generate_toy_corpus(root: Union[str, Path], spec: ToyCorpusConfig, dsp: DSPConfig) -> ToyCorpus:
    """
    Gera o corpus em `root`; mesma semente → WAVs e manifests idênticos byte a byte

    Returns:
        Caminhos dos artefatos gerados
    """
    root = Path(root)
    lexicon = generate_lexicon(spec.lexicon_size, spec.seed)
    paired = sample_sentences(lexicon, spec, spec.n_paired, "paired")
    evaluation = sample_sentences(lexicon, spec, spec.n_eval, "eval")
    # os textos do áudio sem par são descartados após a síntese
    unpaired = sample_sentences(lexicon, spec, spec.n_unpaired, "unpaired")
    text_corpus = sample_sentences(lexicon, spec, spec.corpus_sentences, "text")

    corpus = ToyCorpus(
        root=root,
        lexicon_path=root / "lexicon.json",
        paired_manifest=root / "paired.jsonl",
        unpaired_manifest=root / "unpaired.jsonl",
        eval_manifest=root / "eval.jsonl",
        text_corpus=root / "corpus.txt",
    )
    root.mkdir(parents=True, exist_ok=True)
    lexicon.save(corpus.lexicon_path)
    _write_split(root, "paired", paired, lexicon, dsp, ManifestKind.PAIRED).save(corpus.paired_manifest)
    _write_split(root, "eval", evaluation, lexicon, dsp, ManifestKind.PAIRED).save(corpus.eval_manifest)
    _write_split(root, "unpaired", unpaired, lexicon, dsp, ManifestKind.UNPAIRED).save(corpus.unpaired_manifest)
    corpus.text_corpus.write_text("\n".join(" ".join(s) for s in text_corpus + paired) + "\n", encoding="utf-8")

    logger.info(f"Corpus sintético em {root}: {len(paired)} pareados, {len(unpaired)} sem par, "
                f"{len(evaluation)} de avaliação, {len(lexicon.words)} palavras")
    return corpus


def phoneme_segments(token_ids: Sequence[int], sample_rate: int) -> List[Tuple[int, int, int]]:
    """(token, início, fim) em amostras de cada segmento com áudio"""
    n_samples = int(round(SEGMENT_SECONDS * sample_rate))
    segments, cursor = [], 0
    for token_id in token_ids:
        if token_id == EOS_ID:
            continue
        segments.append((token_id, cursor, cursor + n_samples))
        cursor += n_samples
    return segments
