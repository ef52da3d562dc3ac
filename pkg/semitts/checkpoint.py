"""
Contêiner binário de checkpoints (e de espectrogramas em cache)

Layout little-endian:
    magic(4) | versão(u16) | tamanho do JSON(u32) | JSON | n blocos(u32) |
    blocos {nome(u16 + utf8), ndim(u8), dims(u32 * ndim), float64 * prod(dims)} |
    sha256(32) de tudo o que vem antes
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .autodiff import ParameterSet
from .errors import CheckpointIntegrityError, UnsupportedVersionError
from .optim import AdamState
from .utils import canonical_json, config_hash

logger = logging.getLogger("semitts.train")

MAGIC = b"SMTT"
FORMAT_VERSION = 1
_DIGEST_SIZE = 32
_PARAM_PREFIX = "param/"
_ADAM_M_PREFIX = "adam.m/"
_ADAM_V_PREFIX = "adam.v/"


def encode_container(header: Dict[str, Any], tensors: Dict[str, np.ndarray], version: int = FORMAT_VERSION) -> bytes:
    """Serializa cabeçalho JSON + blocos de tensores nomeados"""
    header_bytes = canonical_json(header).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", version, len(header_bytes)), header_bytes, struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        array = np.ascontiguousarray(array, dtype="<f8")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def decode_container(blob: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Inverso de encode_container; confere versão antes do checksum"""
    if len(blob) < len(MAGIC) + 6 or blob[: len(MAGIC)] != MAGIC:
        raise CheckpointIntegrityError("Assinatura do arquivo inválida")
    (version,) = struct.unpack_from("<H", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"Versão de formato {version} não suportada (esperado {FORMAT_VERSION})")
    if len(blob) < len(MAGIC) + 6 + 4 + _DIGEST_SIZE:
        raise CheckpointIntegrityError("Arquivo truncado")

    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError("Checksum não confere (arquivo truncado ou corrompido)")

    try:
        offset = len(MAGIC) + 2
        (header_len,) = struct.unpack_from("<I", body, offset)
        offset += 4
        header = json.loads(body[offset: offset + header_len].decode("utf-8"))
        offset += header_len
        (count,) = struct.unpack_from("<I", body, offset)
        offset += 4
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset: offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", body, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", body, offset)
            offset += 4 * ndim
            n_values = int(np.prod(shape)) if ndim else 1
            values = np.frombuffer(body, dtype="<f8", count=n_values, offset=offset)
            offset += 8 * n_values
            tensors[name] = values.astype(np.float64).reshape(shape)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CheckpointIntegrityError(f"Estrutura interna inválida: {e}") from e
    if offset != len(body):
        raise CheckpointIntegrityError("Bytes extras após o último bloco")
    return header, tensors


def write_atomic(path: Union[str, Path], blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.{os.getpid()}.tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    """Parâmetros + configuração do modelo + estado do otimizador"""
    model_config: Dict[str, Any]
    params: ParameterSet
    adam: Optional[AdamState] = None
    step: int = 0
    rng_state: Optional[Dict[str, Any]] = None
    tag: str = "finetuned"
    metadata: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    @property
    def config_hash(self) -> str:
        return config_hash(self.model_config)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> None:
    """Grava o checkpoint de forma atômica"""
    header = {
        "format_version": checkpoint.format_version,
        "model_config": checkpoint.model_config,
        "config_hash": checkpoint.config_hash,
        "tag": checkpoint.tag,
        "step": checkpoint.step,
        "rng_state": checkpoint.rng_state,
        "freeze_mask": sorted(checkpoint.params.freeze_mask),
        "metadata": checkpoint.metadata,
        "adam": None,
    }
    tensors: Dict[str, np.ndarray] = {}
    for name, tensor in checkpoint.params.items():
        tensors[_PARAM_PREFIX + name] = tensor.data
    if checkpoint.adam is not None:
        header["adam"] = dict(checkpoint.adam.hyperparameters(), t=checkpoint.adam.t)
        for name in checkpoint.params.names():
            if name in checkpoint.adam.m:
                tensors[_ADAM_M_PREFIX + name] = checkpoint.adam.m[name]
                tensors[_ADAM_V_PREFIX + name] = checkpoint.adam.v[name]

    write_atomic(path, encode_container(header, tensors, version=checkpoint.format_version))
    logger.info(f"Checkpoint salvo: {path} (tag={checkpoint.tag}, passo={checkpoint.step})")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Lê um checkpoint; versão e checksum são verificados"""
    with open(path, "rb") as f:
        blob = f.read()
    header, tensors = decode_container(blob)

    params = ParameterSet(freeze_mask=header.get("freeze_mask", []))
    adam = None
    if header.get("adam") is not None:
        adam_header = dict(header["adam"])
        adam = AdamState(
            lr=adam_header["lr"],
            beta1=adam_header["beta1"],
            beta2=adam_header["beta2"],
            epsilon=adam_header["epsilon"],
            t=adam_header["t"],
        )
    for key, array in tensors.items():
        if key.startswith(_PARAM_PREFIX):
            params.add(key[len(_PARAM_PREFIX):], array)
        elif key.startswith(_ADAM_M_PREFIX) and adam is not None:
            adam.m[key[len(_ADAM_M_PREFIX):]] = array.copy()
        elif key.startswith(_ADAM_V_PREFIX) and adam is not None:
            adam.v[key[len(_ADAM_V_PREFIX):]] = array.copy()

    checkpoint = Checkpoint(
        model_config=header["model_config"],
        params=params,
        adam=adam,
        step=header["step"],
        rng_state=header.get("rng_state"),
        tag=header["tag"],
        metadata=header.get("metadata", {}),
        format_version=header["format_version"],
    )
    if checkpoint.config_hash != header.get("config_hash"):
        raise CheckpointIntegrityError("Hash de configuração embutido não confere com a configuração")
    return checkpoint
