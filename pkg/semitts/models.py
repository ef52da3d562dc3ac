"""
Modelos Pydantic para validação dos documentos externos: manifests, configuração de experimento e sweep
"""

import copy
import json
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from .config import (
    CONDITIONING_LOCATIONS,
    CONDITIONING_METHODS,
    DSPConfig,
    ModelConfig,
    ToyCorpusConfig,
    TrainConfig,
    WordVectorConfig,
)
from .errors import ConfigValidationError
from .utils import read_jsonl, write_jsonl


class Variant(str, Enum):
    """Variantes de experimento"""
    T_BASE = "t-base"
    T_ENC = "t-enc"
    T_DEC = "t-dec"
    T_ENC_DEC = "t-enc-dec"


class ManifestKind(str, Enum):
    PAIRED = "paired"
    UNPAIRED = "unpaired"


_VARIANT_PATTERN = re.compile(
    r"^(?P<base>t-base|t-enc|t-dec|t-enc-dec)(?::(?P<method>[a-z]+)-(?P<location>[a-z]+))?$"
)

_DEFAULT_NAMES = {
    "paired_manifest": "paired.jsonl",
    "eval_manifest": "eval.jsonl",
    "lexicon": "lexicon.json",
    "text_corpus": "corpus.txt",
}

# ============================================================================
# MANIFESTS
# ============================================================================

class ManifestEntry(BaseModel):
    """Uma linha do manifest JSON-lines"""
    id: str = Field(..., min_length=1, description="Identificador único do enunciado")
    audio_path: str = Field(..., min_length=1, description="Caminho do WAV (relativo ao manifest ou absoluto)")
    text: Optional[str] = Field(None, description="Transcrição (ausente em dados sem par)")
    duration_seconds: float = Field(..., ge=0, description="Duração do áudio em segundos")


class Manifest(BaseModel):
    """Lista de enunciados; ids únicos, e sem texto quando unpaired"""
    kind: ManifestKind
    entries: List[ManifestEntry] = Field(default_factory=list)
    base_dir: Optional[str] = Field(None, description="Diretório usado para resolver audio_path relativo")

    @model_validator(mode="after")
    def check_entries(self):
        seen = set()
        for entry in self.entries:
            if entry.id in seen:
                raise ValueError(f"id repetido no manifest: {entry.id}")
            seen.add(entry.id)
            if self.kind == ManifestKind.UNPAIRED and entry.text is not None:
                raise ValueError(f"Manifest unpaired não pode ter texto (id {entry.id})")
            if self.kind == ManifestKind.PAIRED and not entry.text:
                raise ValueError(f"Manifest paired exige texto (id {entry.id})")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total_seconds(self) -> float:
        return sum(entry.duration_seconds for entry in self.entries)

    def audio_path(self, entry: ManifestEntry) -> Path:
        path = Path(entry.audio_path)
        if path.is_absolute() or self.base_dir is None:
            return path
        return Path(self.base_dir) / path

    def subset(self, ids) -> "Manifest":
        wanted = set(ids)
        return Manifest(kind=self.kind, base_dir=self.base_dir, entries=[e for e in self.entries if e.id in wanted])

    @classmethod
    def load(cls, path: Union[str, Path], kind: Union[str, ManifestKind]) -> "Manifest":
        path = Path(path)
        return cls(kind=kind, entries=[ManifestEntry(**row) for row in read_jsonl(path)], base_dir=str(path.parent))

    def save(self, path: Union[str, Path]) -> None:
        write_jsonl(path, (entry.model_dump(exclude_none=True) for entry in self.entries))


# ============================================================================
# CONFIGURAÇÃO DE EXPERIMENTO
# ============================================================================

class DataPaths(BaseModel):
    """Caminhos dos dados; vazios são derivados de corpus_dir (exceto o manifest sem par)"""
    corpus_dir: str = "data/toy"
    paired_manifest: Optional[str] = None
    unpaired_manifest: Optional[str] = None
    eval_manifest: Optional[str] = None
    lexicon: Optional[str] = None
    wordvec_table: Optional[str] = None
    text_corpus: Optional[str] = None

    def resolve(self, name: str) -> Optional[Path]:
        value = getattr(self, name)
        if value:
            return Path(value)
        default = _DEFAULT_NAMES.get(name)
        return Path(self.corpus_dir) / default if default else None


def _coerce_dataclass(cls, value):
    if value is None:
        return cls()
    return cls.from_dict(value) if isinstance(value, dict) else value


class ExperimentConfig(BaseModel):
    """Documento JSON de um experimento"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = Field(..., min_length=1, pattern=r"^[A-Za-z0-9_.:+-]+$")
    variant: Variant = Variant.T_BASE
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dsp: DSPConfig = Field(default_factory=DSPConfig)
    wordvec: WordVectorConfig = Field(default_factory=WordVectorConfig)
    toy: ToyCorpusConfig = Field(default_factory=ToyCorpusConfig)
    data: DataPaths = Field(default_factory=DataPaths)
    run_root: str = "runs"
    init_checkpoint: Optional[str] = Field(None, description="Checkpoint de decoder pré-treinado")
    griffin_lim_seed: int = 0

    @field_validator("model", mode="before")
    @classmethod
    def build_model(cls, v):
        return _coerce_dataclass(ModelConfig, v)

    @field_validator("train", mode="before")
    @classmethod
    def build_train(cls, v):
        return _coerce_dataclass(TrainConfig, v)

    @field_validator("dsp", mode="before")
    @classmethod
    def build_dsp(cls, v):
        return _coerce_dataclass(DSPConfig, v)

    @field_validator("wordvec", mode="before")
    @classmethod
    def build_wordvec(cls, v):
        return _coerce_dataclass(WordVectorConfig, v)

    @field_validator("toy", mode="before")
    @classmethod
    def build_toy(cls, v):
        return _coerce_dataclass(ToyCorpusConfig, v)

    @model_validator(mode="after")
    def check_variant_rules(self):
        conditioning = self.model.conditioning
        if self.model.n_mels != self.dsp.n_mels:
            raise ValueError(f"model.n_mels ({self.model.n_mels}) difere de dsp.n_mels ({self.dsp.n_mels})")
        if self.variant in (Variant.T_BASE, Variant.T_DEC) and conditioning.enabled:
            raise ValueError(f"A variante {self.variant.value} não admite condicionamento do encoder")
        if self.variant in (Variant.T_BASE, Variant.T_ENC) and self.init_checkpoint:
            raise ValueError(f"A variante {self.variant.value} não admite inicialização pré-treinada")
        if self.variant in (Variant.T_ENC, Variant.T_ENC_DEC):
            if not conditioning.enabled:
                raise ValueError(f"A variante {self.variant.value} exige model.conditioning.enabled=true")
            if not self.data.wordvec_table:
                raise ValueError(f"A variante {self.variant.value} exige data.wordvec_table")
            if conditioning.wordvec_dim != self.wordvec.dim:
                raise ValueError("model.conditioning.wordvec_dim deve ser igual a wordvec.dim")
        if self.variant in (Variant.T_DEC, Variant.T_ENC_DEC) and self.data.resolve("unpaired_manifest") is None:
            raise ValueError(f"A variante {self.variant.value} exige um manifest sem par para o pré-treino")
        return self

    @property
    def uses_pretraining(self) -> bool:
        return self.variant in (Variant.T_DEC, Variant.T_ENC_DEC)

    @property
    def uses_word_vectors(self) -> bool:
        return self.variant in (Variant.T_ENC, Variant.T_ENC_DEC)

    def run_dir(self, run_root: Optional[str] = None) -> Path:
        return Path(run_root or self.run_root) / self.name

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def for_variant(self, variant: str, name: Optional[str] = None) -> "ExperimentConfig":
        """
        Cópia da configuração para uma variante do sweep

        Aceita também `t-enc:<concat|attention>-<input|top>` para escolher método e local.
        """
        base, method, location = parse_variant(variant)
        data = copy.deepcopy(self.to_json_dict())
        data["variant"] = base
        data["name"] = name or data["name"]
        data["init_checkpoint"] = None
        conditioning = data["model"]["conditioning"]
        conditioning["enabled"] = base in (Variant.T_ENC.value, Variant.T_ENC_DEC.value)
        if method:
            conditioning["method"], conditioning["location"] = method, location
        if conditioning["enabled"]:
            conditioning["wordvec_dim"] = data["wordvec"]["dim"]
            if not data["data"].get("wordvec_table"):
                data["data"]["wordvec_table"] = str(Path(data["data"]["corpus_dir"]) / "wordvec.txt")
        if base in (Variant.T_DEC.value, Variant.T_ENC_DEC.value) and not data["data"].get("unpaired_manifest"):
            data["data"]["unpaired_manifest"] = str(Path(data["data"]["corpus_dir"]) / "unpaired.jsonl")
        return validate_config(data)


def parse_variant(variant: str) -> Tuple[str, Optional[str], Optional[str]]:
    match = _VARIANT_PATTERN.match(variant)
    if not match:
        raise ConfigValidationError(f"Variante desconhecida: {variant}",
                                    [{"field": "variant", "message": f"Variante desconhecida: {variant}"}])
    base, method, location = match.group("base"), match.group("method"), match.group("location")
    if method is not None:
        if base not in (Variant.T_ENC.value, Variant.T_ENC_DEC.value):
            raise ConfigValidationError(f"{base} não aceita método de condicionamento",
                                        [{"field": "variant", "message": variant}])
        if method not in CONDITIONING_METHODS or location not in CONDITIONING_LOCATIONS:
            raise ConfigValidationError(f"Condicionamento inválido em {variant}",
                                        [{"field": "variant", "message": variant}])
    return base, method, location


class SweepSpec(BaseModel):
    """Grade (variante, minutos de dados pareados, semente)"""
    fractions_minutes: List[float] = Field(..., min_length=1, description="Quantidades de dados pareados em minutos")
    variants: List[str] = Field(default_factory=lambda: [v.value for v in Variant])
    seeds: int = Field(3, ge=1, description="Sementes por célula")
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("fractions_minutes")
    @classmethod
    def check_fractions(cls, v):
        if any(f <= 0 for f in v):
            raise ValueError("Frações devem ser positivas")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("Frações devem ser estritamente crescentes")
        return v

    @field_validator("variants")
    @classmethod
    def check_variants(cls, v):
        if not v:
            raise ValueError("Ao menos uma variante")
        for variant in v:
            if not _VARIANT_PATTERN.match(variant):
                raise ValueError(f"Variante desconhecida: {variant}")
        if len(set(v)) != len(v):
            raise ValueError("Variantes repetidas")
        return v

    def cells(self) -> List[Tuple[str, float, int]]:
        return [(variant, minutes, seed)
                for variant in self.variants
                for minutes in self.fractions_minutes
                for seed in range(self.seeds)]


# ============================================================================
# UTILITÁRIOS DE VALIDAÇÃO
# ============================================================================

class ValidationError(BaseModel):
    """Modelo para erros de validação"""
    field: str = Field(..., description="Campo com erro")
    message: str = Field(..., description="Mensagem de erro")
    value: Optional[str] = Field(None, description="Valor que causou o erro")


def validate_request_model(model_class, data: dict) -> Tuple[bool, Union[BaseModel, List[ValidationError]]]:
    """
    Valida dados usando um modelo Pydantic

    Returns:
        Tuple com (sucesso, modelo_validado_ou_erros)
    """
    try:
        return True, model_class(**data)
    except PydanticValidationError as e:
        errors = []
        for error in e.errors():
            field = '.'.join(str(loc) for loc in error['loc']) or 'root'
            errors.append(ValidationError(field=field, message=error['msg'], value=str(error.get('input', ''))[:200]))
        return False, errors
    except (ValueError, TypeError) as e:
        return False, [ValidationError(field='root', message=str(e), value='')]


def _validate(model_class, data: dict, what: str):
    ok, result = validate_request_model(model_class, data)
    if not ok:
        summary = "; ".join(f"{err.field}: {err.message}" for err in result)
        raise ConfigValidationError(f"{what} inválido(a): {summary}",
                                    [{"field": err.field, "message": err.message} for err in result])
    return result


def validate_config(data: dict) -> ExperimentConfig:
    return _validate(ExperimentConfig, data, "Configuração")


def validate_sweep(data: dict) -> SweepSpec:
    return _validate(SweepSpec, data, "Sweep")


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """
    Aplica `a.b.c=valor` ao JSON bruto (valor lido como JSON, senão string)
    """
    result = copy.deepcopy(data)
    for override in overrides or []:
        if "=" not in override:
            raise ConfigValidationError(f"Override sem '=': {override}",
                                        [{"field": override, "message": "formato esperado a.b=valor"}])
        path, raw = override.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigValidationError(f"Override sem caminho: {override}",
                                        [{"field": override, "message": "caminho vazio"}])
        node = result
        for key in keys[:-1]:
            child = node.get(key)
            if child is None:
                child = node[key] = {}
            elif not isinstance(child, dict):
                raise ConfigValidationError(f"Override {path}: '{key}' não é um objeto",
                                            [{"field": path, "message": f"'{key}' não é um objeto"}])
            node = child
        node[keys[-1]] = _parse_override_value(raw)
    return result


def _read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigValidationError(f"Arquivo não encontrado: {path}", [{"field": "root", "message": f"{path} não existe"}])
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"{path}: JSON inválido ({e})", [{"field": "root", "message": str(e)}]) from e


def load_config(path: Union[str, Path], overrides: Optional[List[str]] = None) -> ExperimentConfig:
    return validate_config(apply_overrides(_read_json(path), overrides or []))


def load_sweep(path: Union[str, Path], overrides: Optional[List[str]] = None) -> SweepSpec:
    return validate_sweep(apply_overrides(_read_json(path), overrides or []))
