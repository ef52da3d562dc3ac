"""
Testes de normalização e tokenização
"""

import pytest

from .errors import ContractViolation, OutOfVocabularyError
from .text_frontend import (
    CHARACTER_MODE,
    EOS_ID,
    SIL_ID,
    Lexicon,
    TokenSequence,
    normalize_text,
    text_to_sequence,
    tokenize,
)


@pytest.mark.parametrize("raw, expected", [
    ("Thank you.", ["thank", "you"]),
    ("  Hello,   WORLD!! ", ["hello", "world"]),
    ("Café com pão", ["cafe", "com", "pao"]),
    ("", []),
    ("...", []),
])
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


def test_thank_you_spans(lexicon):
    sequence = text_to_sequence("thank you", lexicon)
    assert lexicon.decode(sequence.token_ids) == ["th", "a", "ng", "k", "<sil>", "y", "uu", "<eos>"]
    assert sequence.word_spans == ((0, 0, 4), (1, 5, 7))
    assert sequence.words == ("thank", "you")
    assert sequence.token_ids[4] == SIL_ID
    assert sequence.token_ids[-1] == EOS_ID


def test_empty_text_is_only_eos(lexicon):
    sequence = text_to_sequence("", lexicon)
    assert sequence.token_ids == (EOS_ID,)
    assert sequence.word_spans == ()


def test_grapheme_fallback(lexicon):
    sequence = text_to_sequence("hi zebra", lexicon)
    start, end = sequence.word_spans[1][1:]
    assert lexicon.decode(sequence.token_ids[start:end]) == ["#z", "#e", "#b", "#r", "#a"]


def test_out_of_vocabulary_without_fallback(lexicon):
    with pytest.raises(OutOfVocabularyError):
        text_to_sequence("hello zebra", lexicon, grapheme_fallback=False)


def test_character_mode_covers_every_letter(lexicon):
    sequence = tokenize(["hi"], lexicon, mode=CHARACTER_MODE)
    assert lexicon.decode(sequence.token_ids) == ["#h", "#i", "<eos>"]


def test_spans_partition_word_tokens(lexicon):
    """Cada token pertence a no máximo uma palavra; só <sil>/<eos> ficam fora"""
    sequence = text_to_sequence("hello world thank you", lexicon)
    covered = [0] * len(sequence)
    for _, start, end in sequence.word_spans:
        for position in range(start, end):
            covered[position] += 1
    for position, count in enumerate(covered):
        assert count == (0 if sequence.token_ids[position] in (SIL_ID, EOS_ID) else 1)


def test_token_sequence_contract():
    with pytest.raises(ContractViolation):
        TokenSequence(token_ids=(3, 4, 2), word_spans=((0, 1, 1),), words=("a",))
    with pytest.raises(ContractViolation):
        TokenSequence(token_ids=(3, 4, 2), word_spans=((0, 0, 1),), words=("a", "b"))


def test_lexicon_validation():
    with pytest.raises(ValueError):
        Lexicon(phonemes=["a", "a"])
    with pytest.raises(ValueError):
        Lexicon(phonemes=["<sil>"])
    with pytest.raises(ValueError):
        Lexicon(phonemes=["a"], words={"b": ["x"]})


def test_lexicon_save_load(tmp_path, lexicon):
    path = tmp_path / "lexicon.json"
    lexicon.save(path)
    loaded = Lexicon.load(path)
    assert loaded.symbols == lexicon.symbols
    assert loaded.words == lexicon.words
