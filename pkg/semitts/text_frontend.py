"""
Normalização de texto e tokenização com mapa palavra -> faixa de tokens
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

from .errors import ContractViolation, OutOfVocabularyError
from .utils import fold_accents

logger = logging.getLogger(__name__)

PAD, SIL, EOS = "<pad>", "<sil>", "<eos>"
RESERVED = (PAD, SIL, EOS)
PAD_ID, SIL_ID, EOS_ID = 0, 1, 2
CHAR_PREFIX = "#"
DEFAULT_CHARACTERS = "abcdefghijklmnopqrstuvwxyz0123456789'"
PHONEME_MODE = "phoneme"
CHARACTER_MODE = "character"

DEFAULT_LEXICON_PATH = Path(__file__).parent / "data" / "toy_lexicon.json"

_WORD_PATTERN = re.compile(r"[a-z0-9']+")


def normalize_text(raw: str) -> List[str]:
    """Minúsculas, sem acentos; pontuação e espaços viram fronteiras de palavra"""
    if not raw:
        return []
    text = fold_accents(raw).lower()
    words = (match.strip("'") for match in _WORD_PATTERN.findall(text))
    return [word for word in words if word]


@dataclass
class Lexicon:
    """Pronúncias por palavra e inventário de símbolos"""
    phonemes: List[str]
    words: Dict[str, List[str]] = field(default_factory=dict)
    characters: str = DEFAULT_CHARACTERS

    def __post_init__(self):
        """Validação após inicialização"""
        if len(set(self.phonemes)) != len(self.phonemes):
            raise ContractViolation("Inventário de fonemas com símbolos repetidos")
        if any(p in RESERVED or p.startswith(CHAR_PREFIX) or not p for p in self.phonemes):
            raise ContractViolation("Nomes de fonema não podem ser reservados, vazios ou começar com '#'")
        if len(set(self.characters)) != len(self.characters):
            raise ContractViolation("Inventário de caracteres com símbolos repetidos")

        known = set(self.phonemes)
        for word, pronunciation in self.words.items():
            if not pronunciation:
                raise ContractViolation(f"Pronúncia vazia para '{word}'")
            unknown = [p for p in pronunciation if p not in known]
            if unknown:
                raise ContractViolation(f"'{word}' usa fonemas fora do inventário: {unknown}")

        self.symbols: List[str] = list(RESERVED) + list(self.phonemes) + [CHAR_PREFIX + c for c in self.characters]
        self._ids: Dict[str, int] = {symbol: i for i, symbol in enumerate(self.symbols)}

    @property
    def n_tokens(self) -> int:
        return len(self.symbols)

    def symbol_id(self, symbol: str) -> int:
        return self._ids[symbol]

    def phoneme_ids(self, word: str) -> List[int]:
        return [self._ids[p] for p in self.words[word]]

    def character_ids(self, word: str) -> List[int]:
        ids = [self._ids[CHAR_PREFIX + c] for c in word if CHAR_PREFIX + c in self._ids]
        if not ids:
            raise ContractViolation(f"Palavra '{word}' sem nenhum caractere do inventário")
        return ids

    def decode(self, token_ids: Sequence[int]) -> List[str]:
        return [self.symbols[i] for i in token_ids]

    @classmethod
    def load(cls, path: Union[str, Path] = DEFAULT_LEXICON_PATH) -> "Lexicon":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        if "phonemes" not in data:
            raise ContractViolation(f"{path}: campo 'phonemes' ausente")
        return cls(
            phonemes=list(data["phonemes"]),
            words={word: list(pron) for word, pron in data.get("words", {}).items()},
            characters=data.get("characters", DEFAULT_CHARACTERS),
        )

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = {"phonemes": self.phonemes, "words": self.words}
        if self.characters != DEFAULT_CHARACTERS:
            data["characters"] = self.characters
        path.write_text(json.dumps(data, indent=2, sort_keys=False, ensure_ascii=False) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class TokenSequence:
    """Ids de tokens + faixas (índice da palavra, início, fim exclusivo)"""
    token_ids: Tuple[int, ...]
    word_spans: Tuple[Tuple[int, int, int], ...]
    words: Tuple[str, ...]

    def __post_init__(self):
        """Validação após inicialização"""
        if len(self.word_spans) != len(self.words):
            raise ContractViolation("Número de faixas difere do número de palavras")
        previous_end = 0
        for expected_index, (word_index, start, end) in enumerate(self.word_spans):
            if word_index != expected_index:
                raise ContractViolation("Faixas fora de ordem")
            if not (previous_end <= start < end <= len(self.token_ids)):
                raise ContractViolation(f"Faixa ({word_index}, {start}, {end}) inválida")
            previous_end = end

    def __len__(self) -> int:
        return len(self.token_ids)


def tokenize(words: Sequence[str], lexicon: Lexicon, mode: str = PHONEME_MODE,
             grapheme_fallback: bool = True) -> TokenSequence:
    """
    Converte palavras normalizadas em tokens

    Um <sil> separa palavras consecutivas e <eos> fecha a sequência.

    Raises:
        OutOfVocabularyError: palavra fora do léxico com fallback desativado
    """
    if mode not in (PHONEME_MODE, CHARACTER_MODE):
        raise ContractViolation(f"mode deve ser '{PHONEME_MODE}' ou '{CHARACTER_MODE}'")

    token_ids: List[int] = []
    spans: List[Tuple[int, int, int]] = []
    for index, word in enumerate(words):
        if index > 0:
            token_ids.append(SIL_ID)
        if mode == CHARACTER_MODE:
            ids = lexicon.character_ids(word)
        elif word in lexicon.words:
            ids = lexicon.phoneme_ids(word)
        elif grapheme_fallback:
            logger.debug(f"'{word}' fora do léxico, usando grafemas")
            ids = lexicon.character_ids(word)
        else:
            raise OutOfVocabularyError(word)
        start = len(token_ids)
        token_ids.extend(ids)
        spans.append((index, start, len(token_ids)))
    token_ids.append(EOS_ID)
    return TokenSequence(token_ids=tuple(token_ids), word_spans=tuple(spans), words=tuple(words))


def text_to_sequence(raw: str, lexicon: Lexicon, mode: str = PHONEME_MODE,
                     grapheme_fallback: bool = True) -> TokenSequence:
    return tokenize(normalize_text(raw), lexicon, mode=mode, grapheme_fallback=grapheme_fallback)
