"""
Tabelas de vetores de palavras: leitura/escrita em texto, consulta e treino skip-gram
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, WordVectorParseError
from .text_frontend import normalize_text
from .utils import fold_accents, to_jsonable

logger = logging.getLogger(__name__)


def normalize_word(word: str) -> str:
    return fold_accents(word).lower().strip()


class Lookup(NamedTuple):
    vector: np.ndarray
    oov: bool


@dataclass
class WordVectorTable:
    """Vocabulário -> vetores de dimensão fixa"""
    dim: int
    vectors: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)
    duplicate_count: int = 0

    def __post_init__(self):
        """Validação após inicialização"""
        if self.dim < 1:
            raise ContractViolation("dim deve ser >= 1")
        normalized: Dict[str, np.ndarray] = {}
        for word, vector in self.vectors.items():
            vector = np.asarray(vector, dtype=np.float64)
            if vector.shape != (self.dim,):
                raise ContractViolation(f"Vetor de '{word}' com shape {vector.shape}, esperado ({self.dim},)")
            if not np.all(np.isfinite(vector)):
                raise ContractViolation(f"Vetor de '{word}' contém valores não finitos")
            normalized[normalize_word(word)] = vector
        self.vectors = normalized

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return normalize_word(word) in self.vectors

    def words(self) -> List[str]:
        return list(self.vectors)


def load_table(path: Union[str, Path], source: Optional[str] = None) -> WordVectorTable:
    """
    Lê vetores em texto: uma entrada por linha, palavra seguida de D floats

    D é inferido da primeira entrada; palavras repetidas: vale a última.
    """
    path = Path(path)
    vectors: Dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    duplicates = 0

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise WordVectorParseError("entrada sem valores", line_number)
                dim = len(values)
            elif len(values) != dim:
                raise WordVectorParseError(f"{len(values)} valores, esperado {dim}", line_number)
            try:
                vector = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as e:
                raise WordVectorParseError(f"valor não numérico ({e})", line_number) from e
            if not np.all(np.isfinite(vector)):
                raise WordVectorParseError("valor não finito", line_number)
            key = normalize_word(word)
            if key in vectors:
                duplicates += 1
            vectors[key] = vector

    if dim is None:
        raise WordVectorParseError("arquivo sem entradas", 0)
    if duplicates:
        logger.warning(f"{path}: {duplicates} palavras repetidas (mantido o último vetor)")

    metadata: Dict[str, Any] = {"source": source or path.name}
    sidecar = path.with_name(path.name + ".meta.json")
    if sidecar.exists():
        metadata.update(json.loads(sidecar.read_text(encoding="utf-8")))
    return WordVectorTable(dim=dim, vectors=vectors, metadata=metadata, duplicate_count=duplicates)


def save_table(table: WordVectorTable, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for word, vector in table.vectors.items():
            f.write(word + " " + " ".join(repr(float(v)) for v in vector) + "\n")
    sidecar = path.with_name(path.name + ".meta.json")
    sidecar.write_text(json.dumps(to_jsonable(table.metadata), sort_keys=True, indent=2), encoding="utf-8")


def lookup(table: WordVectorTable, word: str) -> Lookup:
    """Vetor armazenado, ou vetor nulo com flag OOV"""
    vector = table.vectors.get(normalize_word(word))
    if vector is None:
        return Lookup(np.zeros(table.dim), True)
    return Lookup(vector.copy(), False)


def lookup_matrix(table: WordVectorTable, words: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
    """W x D + máscara booleana de OOV"""
    matrix = np.zeros((len(words), table.dim))
    oov = np.zeros(len(words), dtype=bool)
    for i, word in enumerate(words):
        matrix[i], oov[i] = lookup(table, word)
    return matrix, oov


def table_overlap(a: WordVectorTable, b: WordVectorTable, words: Optional[Iterable[str]] = None) -> Dict[str, Any]:
    """Compara vocabulários de duas tabelas (e a cobertura de uma lista de palavras)"""
    vocab_a, vocab_b = set(a.vectors), set(b.vectors)
    summary: Dict[str, Any] = {
        "dim_a": a.dim,
        "dim_b": b.dim,
        "shared": len(vocab_a & vocab_b),
        "only_a": len(vocab_a - vocab_b),
        "only_b": len(vocab_b - vocab_a),
    }
    if words is not None:
        tokens = [normalize_word(w) for w in words]
        total = max(len(tokens), 1)
        summary["coverage_a"] = sum(t in vocab_a for t in tokens) / total
        summary["coverage_b"] = sum(t in vocab_b for t in tokens) / total
    return summary


# ============================================================================
# SKIP-GRAM COM AMOSTRAGEM NEGATIVA
# ============================================================================

def _corpus_id(sentences: Sequence[Sequence[str]]) -> str:
    digest = hashlib.sha256()
    for sentence in sentences:
        digest.update(" ".join(sentence).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()[:16]


def train_skipgram(
    sentences: Sequence[Sequence[str]],
    dim: int = 16,
    window: int = 2,
    epochs: int = 5,
    seed: int = 0,
    negatives: int = 5,
    learning_rate: float = 0.025,
    min_count: int = 1,
) -> WordVectorTable:
    """
    Treina vetores skip-gram (SGD, amostragem negativa com distribuição unigrama^0.75)

    Args:
        sentences: corpus já tokenizado
        dim: dimensão D
        window: janela máxima de contexto (reduzida aleatoriamente por posição)
        epochs: passadas sobre o corpus; 0 devolve os vetores iniciais normalizados
        seed: semente única de toda a aleatoriedade

    Returns:
        Tabela com vetores de norma unitária e histórico de perda por época nos metadados
    """
    sentences = [[normalize_word(w) for w in s if normalize_word(w)] for s in sentences]
    counts: Dict[str, int] = {}
    for sentence in sentences:
        for word in sentence:
            counts[word] = counts.get(word, 0) + 1
    vocab = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if len(vocab) < 2:
        raise ContractViolation(f"Vocabulário com {len(vocab)} palavra(s); são necessárias ao menos 2")

    index = {word: i for i, word in enumerate(vocab)}
    encoded = [np.array([index[w] for w in s if w in index], dtype=np.int64) for s in sentences]
    encoded = [s for s in encoded if s.size > 0]
    n_words = len(vocab)

    rng = np.random.default_rng(seed)
    syn0 = (rng.random((n_words, dim)) - 0.5) / dim
    syn1neg = np.zeros((n_words, dim))

    frequencies = np.array([counts[w] for w in vocab], dtype=np.float64) ** 0.75
    cumulative = np.cumsum(frequencies / frequencies.sum())
    cumulative[-1] = 1.0

    total_positions = max(1, epochs * sum(s.size for s in encoded))
    processed = 0
    labels = np.zeros(negatives + 1)
    labels[0] = 1.0
    epoch_losses: List[float] = []

    for epoch in range(epochs):
        loss_sum, pairs = 0.0, 0
        for sentence in encoded:
            for position, center in enumerate(sentence):
                alpha = max(learning_rate * (1.0 - processed / total_positions), learning_rate * 1e-4)
                processed += 1
                reduced = window - int(rng.integers(0, window))
                start, end = max(0, position - reduced), min(sentence.size, position + reduced + 1)
                for context_position in range(start, end):
                    if context_position == position:
                        continue
                    noise = np.searchsorted(cumulative, rng.random(negatives), side="right")
                    targets = np.concatenate(([sentence[context_position]], noise))
                    l1 = syn0[center]
                    scores = syn1neg[targets] @ l1
                    f = expit(scores)
                    loss_sum += -np.log(max(f[0], 1e-12)) - np.sum(np.log(np.maximum(1.0 - f[1:], 1e-12)))
                    pairs += 1
                    g = (labels - f) * alpha
                    update = g @ syn1neg[targets]
                    np.add.at(syn1neg, targets, np.outer(g, l1))
                    syn0[center] += update
        epoch_losses.append(loss_sum / max(pairs, 1))
        logger.info(f"skip-gram época {epoch + 1}/{epochs}: perda média {epoch_losses[-1]:.4f}")

    norms = np.linalg.norm(syn0, axis=1, keepdims=True)
    unit = syn0 / np.maximum(norms, 1e-12)
    return WordVectorTable(
        dim=dim,
        vectors={word: unit[i] for i, word in enumerate(vocab)},
        metadata={
            "source": "skipgram",
            "corpus_id": _corpus_id(sentences),
            "seed": seed,
            "window": window,
            "epochs": epochs,
            "negatives": negatives,
            "epoch_losses": epoch_losses,
        },
    )


def read_corpus(path: Union[str, Path]) -> List[List[str]]:
    """Corpus em texto puro, uma sentença por linha"""
    with open(path, "r", encoding="utf-8") as f:
        return [words for words in (normalize_text(line) for line in f) if words]
