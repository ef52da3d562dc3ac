import fcntl
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

from .errors import ContractViolation

try:
    import unicodedata2 as unicodedata
except ImportError:  # pragma: no cover
    import unicodedata

logger = logging.getLogger(__name__)


def canonical_json(data: Any) -> str:
    """JSON com chaves ordenadas e separadores compactos (base de todos os hashes)"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def config_hash(data: Any) -> str:
    """sha256 hexadecimal do JSON canônico"""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def derive_seed(base_seed: int, *labels: Any) -> int:
    """Semente derivada e estável entre processos (não usa hash() do Python)"""
    key = canonical_json([int(base_seed), [str(label) for label in labels]])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little") >> 1


def fold_accents(text: str) -> str:
    """Remove acentos (NFD, descarta marcas combinantes)"""
    if not text:
        return ""
    text = unicodedata.normalize("NFD", text)
    return "".join(char for char in text if unicodedata.category(char) != "Mn")


def append_line_locked(path: Union[str, Path], line: str) -> None:
    """Acrescenta uma linha sob flock exclusivo (vários processos escrevendo)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        fcntl.flock(f.fileno(), fcntl.LOCK_EX)
        try:
            f.write(line if line.endswith("\n") else line + "\n")
            f.flush()
        finally:
            fcntl.flock(f.fileno(), fcntl.LOCK_UN)


def read_jsonl(path: Union[str, Path]) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ContractViolation(f"{path}: linha {line_number} não é JSON válido: {e}") from e
    return rows


def write_jsonl(path: Union[str, Path], rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(canonical_json(row) + "\n")


def to_jsonable(value: Any) -> Any:
    """Converte escalares/arrays numpy em tipos nativos para serialização"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def write_atomic_text(path: Union[str, Path], text: str) -> None:
    """Grava em arquivo temporário e substitui o destino com os.replace"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
