"""
Testes do corpus sintético
"""

import numpy as np
import pytest

from .dsp import load_wav
from .errors import ContractViolation
from .models import Manifest, ManifestKind
from .text_frontend import Lexicon, tokenize
from .toy_corpus import (
    SEGMENT_SECONDS,
    TOY_PHONEMES,
    generate_lexicon,
    generate_toy_corpus,
    lexicon_capacity,
    phoneme_frequency,
    phoneme_segments,
    render_tokens,
)


def _toy_lexicon():
    return Lexicon(phonemes=list(TOY_PHONEMES), words={"kataki": ["ka", "ta", "ki"], "mo": ["mo"]})


def test_three_phoneme_word_lasts_180_ms():
    lexicon = _toy_lexicon()
    wave = render_tokens(tokenize(["kataki"], lexicon).token_ids, lexicon, 16000)
    assert len(wave.samples) == int(round(3 * SEGMENT_SECONDS * 16000))
    assert wave.duration == pytest.approx(0.18)


def test_segment_peaks_at_phoneme_frequency():
    lexicon = _toy_lexicon()
    tokens = tokenize(["kataki"], lexicon).token_ids
    wave = render_tokens(tokens, lexicon, 16000)
    for token_id, start, end in phoneme_segments(tokens, 16000):
        index = token_id - lexicon.symbol_id(TOY_PHONEMES[0])
        spectrum = np.abs(np.fft.rfft(wave.samples[start:end], n=16000))
        assert abs(int(np.argmax(spectrum)) - phoneme_frequency(index)) <= 2


def test_silence_between_words():
    lexicon = _toy_lexicon()
    tokens = tokenize(["mo", "mo"], lexicon).token_ids
    wave = render_tokens(tokens, lexicon, 8000)
    segment = int(round(SEGMENT_SECONDS * 8000))
    assert len(wave.samples) == 3 * segment
    np.testing.assert_array_equal(wave.samples[segment:2 * segment], 0.0)


def test_lexicon_is_seeded():
    first, second = generate_lexicon(20, seed=3), generate_lexicon(20, seed=3)
    assert first.words == second.words
    assert len(first.words) == 20
    assert all(2 <= len(pron) <= 3 for pron in first.words.values())
    with pytest.raises(ContractViolation):
        generate_lexicon(lexicon_capacity() + 1, seed=0)


def test_corpus_is_byte_identical_per_seed(tmp_path, tiny_toy, small_dsp):
    first = generate_toy_corpus(tmp_path / "a", tiny_toy, small_dsp)
    generate_toy_corpus(tmp_path / "b", tiny_toy, small_dsp)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 5 + tiny_toy.n_paired + tiny_toy.n_unpaired + tiny_toy.n_eval
    for relative in files:
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()

    paired = Manifest.load(first.paired_manifest, ManifestKind.PAIRED)
    unpaired = Manifest.load(first.unpaired_manifest, ManifestKind.UNPAIRED)
    assert len(paired) == tiny_toy.n_paired
    assert all(entry.text is None for entry in unpaired.entries)
    wave = load_wav(paired.audio_path(paired.entries[0]))
    assert wave.sample_rate == small_dsp.sample_rate
    assert wave.duration == pytest.approx(paired.entries[0].duration_seconds)
