import os
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional
import logging

from dotenv import load_dotenv

from .utils import config_hash

logger = logging.getLogger(__name__)

CONDITIONING_METHODS = ("concat", "attention")
CONDITIONING_LOCATIONS = ("input", "top")


def _from_dict(cls, data: Dict[str, Any]):
    """Constrói um dataclass a partir de um dicionário, recusando chaves desconhecidas"""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ValueError(f"{cls.__name__} espera um objeto JSON, recebido {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{cls.__name__}: campos desconhecidos {unknown}")
    return cls(**data)


@dataclass
class DSPConfig:
    """Enquadramento do STFT, banco mel e Griffin-Lim"""
    sample_rate: int = 8000
    n_fft: int = 512
    hop_length: int = 128
    win_length: int = 512
    n_mels: int = 80
    fmin: float = 50.0
    fmax: Optional[float] = None
    floor: float = 1e-5
    griffin_lim_iters: int = 60

    def __post_init__(self):
        """Validação após inicialização"""
        if self.sample_rate <= 0:
            raise ValueError("sample_rate deve ser positivo")
        if not (1 <= self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError("É preciso hop_length <= win_length <= n_fft")
        if self.n_mels < 1:
            raise ValueError("n_mels deve ser >= 1")
        if not (0 <= self.fmin < self.fmax_hz <= self.sample_rate / 2):
            raise ValueError("É preciso 0 <= fmin < fmax <= sample_rate/2")
        if self.floor <= 0:
            raise ValueError("floor deve ser positivo")
        if self.griffin_lim_iters < 1:
            raise ValueError("griffin_lim_iters deve ser >= 1")

    @property
    def fmax_hz(self) -> float:
        return float(self.fmax) if self.fmax is not None else self.sample_rate / 2.0

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DSPConfig":
        return _from_dict(cls, data)


@dataclass
class ConditioningConfig:
    """Condicionamento do encoder por vetores de palavras"""
    enabled: bool = False
    method: str = "concat"
    location: str = "top"
    wordvec_dim: int = 16
    attention_dim: int = 64

    def __post_init__(self):
        """Validação após inicialização"""
        if self.method not in CONDITIONING_METHODS:
            raise ValueError(f"method deve ser um de {CONDITIONING_METHODS}")
        if self.location not in CONDITIONING_LOCATIONS:
            raise ValueError(f"location deve ser um de {CONDITIONING_LOCATIONS}")
        if self.wordvec_dim < 1 or self.attention_dim < 1:
            raise ValueError("wordvec_dim e attention_dim devem ser >= 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConditioningConfig":
        return _from_dict(cls, data)


@dataclass
class ModelConfig:
    """Dimensões do encoder, da atenção GMM e do decoder"""
    n_tokens: int = 0  # 0 = derivado do léxico
    embedding_dim: int = 64
    encoder_prenet_dims: List[int] = field(default_factory=lambda: [64, 64])
    encoder_hidden: int = 64
    prenet_dropout: float = 0.5
    decoder_prenet_dims: List[int] = field(default_factory=lambda: [64, 64])
    attention_rnn_dim: int = 64
    decoder_rnn_dim: int = 64
    n_mixtures: int = 4
    zoneout: float = 0.1
    reduction_factor: int = 2
    n_mels: int = 80
    max_decoder_steps: int = 200
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)

    def __post_init__(self):
        """Validação após inicialização"""
        if isinstance(self.conditioning, dict):
            self.conditioning = ConditioningConfig.from_dict(self.conditioning)
        self.encoder_prenet_dims = list(self.encoder_prenet_dims)
        self.decoder_prenet_dims = list(self.decoder_prenet_dims)

        if self.n_tokens < 0:
            raise ValueError("n_tokens deve ser >= 0 (0 = derivado do léxico)")
        dims = [
            self.embedding_dim, self.encoder_hidden, self.attention_rnn_dim, self.decoder_rnn_dim,
            self.n_mixtures, self.n_mels, self.max_decoder_steps,
        ] + self.encoder_prenet_dims + self.decoder_prenet_dims
        if any(int(d) < 1 for d in dims):
            raise ValueError("Todas as dimensões do modelo devem ser >= 1")
        if not self.encoder_prenet_dims or not self.decoder_prenet_dims:
            raise ValueError("As pre-nets precisam de ao menos uma camada")
        if not (0.0 <= self.zoneout <= 1.0):
            raise ValueError("zoneout deve estar em [0, 1]")
        if not (0.0 <= self.prenet_dropout < 1.0):
            raise ValueError("prenet_dropout deve estar em [0, 1)")
        if self.reduction_factor < 1:
            raise ValueError("reduction_factor deve ser >= 1")

    @property
    def conditioning_dim(self) -> int:
        return self.conditioning.wordvec_dim if self.conditioning.enabled else 0

    @property
    def encoder_input_dim(self) -> int:
        extra = self.conditioning_dim if self.conditioning.location == "input" else 0
        return self.embedding_dim + extra

    @property
    def memory_dim(self) -> int:
        extra = self.conditioning_dim if self.conditioning.location == "top" else 0
        return 2 * self.encoder_hidden + extra

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        return _from_dict(cls, data)

    def with_tokens(self, n_tokens: int) -> "ModelConfig":
        return dataclasses.replace(self, n_tokens=n_tokens, conditioning=dataclasses.replace(self.conditioning))


def model_config_hash(model: ModelConfig) -> str:
    return config_hash(model.to_dict())


def decoder_signature(model: ModelConfig) -> str:
    """Hash apenas dos campos que determinam os shapes dos parâmetros do decoder"""
    return config_hash({
        "n_mels": model.n_mels,
        "reduction_factor": model.reduction_factor,
        "decoder_prenet_dims": model.decoder_prenet_dims,
        "attention_rnn_dim": model.attention_rnn_dim,
        "decoder_rnn_dim": model.decoder_rnn_dim,
        "n_mixtures": model.n_mixtures,
        "memory_dim": model.memory_dim,
    })


@dataclass
class TrainConfig:
    """Agendas de pré-treino e fine-tuning"""
    seed: int = 0
    batch_size: int = 8
    bucket_batches: int = 4
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    grad_clip: float = 1.0
    pretrain_steps: int = 5000
    finetune_steps: int = 10000
    validation_interval: int = 100
    patience: int = 5
    validation_fraction: float = 0.1
    stop_pos_weight: float = 5.0
    stop_loss_weight: float = 1.0
    log_interval: int = 10

    def __post_init__(self):
        """Validação após inicialização"""
        if self.batch_size < 1 or self.bucket_batches < 1:
            raise ValueError("batch_size e bucket_batches devem ser >= 1")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate e epsilon devem ser positivos")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 e beta2 devem estar em (0, 1)")
        if self.pretrain_steps < 0 or self.finetune_steps < 0:
            raise ValueError("Número de passos não pode ser negativo")
        if self.validation_interval < 1 or self.patience < 1 or self.log_interval < 1:
            raise ValueError("validation_interval, patience e log_interval devem ser >= 1")
        if not (0.0 <= self.validation_fraction < 1.0):
            raise ValueError("validation_fraction deve estar em [0, 1)")
        if self.stop_pos_weight <= 0 or self.stop_loss_weight < 0:
            raise ValueError("Pesos da perda de parada inválidos")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        return _from_dict(cls, data)


@dataclass
class WordVectorConfig:
    """Treino skip-gram com amostragem negativa"""
    dim: int = 16
    window: int = 2
    epochs: int = 5
    negatives: int = 5
    learning_rate: float = 0.025
    min_count: int = 1

    def __post_init__(self):
        """Validação após inicialização"""
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.min_count < 1:
            raise ValueError("dim, window, negatives e min_count devem ser >= 1")
        if self.epochs < 0:
            raise ValueError("epochs não pode ser negativo")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate deve ser positivo")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WordVectorConfig":
        return _from_dict(cls, data)


@dataclass
class ToyCorpusConfig:
    """Tamanhos do corpus sintético"""
    n_paired: int = 20
    n_unpaired: int = 500
    n_eval: int = 5
    lexicon_size: int = 40
    n_topics: int = 4
    min_words: int = 2
    max_words: int = 5
    corpus_sentences: int = 2000
    seed: int = 0

    def __post_init__(self):
        """Validação após inicialização"""
        if min(self.n_paired, self.n_unpaired, self.n_eval, self.lexicon_size, self.n_topics) < 1:
            raise ValueError("Tamanhos do corpus sintético devem ser >= 1")
        if not (1 <= self.min_words <= self.max_words):
            raise ValueError("É preciso 1 <= min_words <= max_words")
        if self.corpus_sentences < 1:
            raise ValueError("corpus_sentences deve ser >= 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ToyCorpusConfig":
        return _from_dict(cls, data)


class EnvironmentValidator:
    """Validador de variáveis de ambiente"""

    OPTIONAL_VARS = {
        'SEMITTS_RUN_ROOT': {'description': 'Diretório raiz das execuções', 'default': ''},
        'SEMITTS_LOG_LEVEL': {'description': 'Nível de log', 'default': 'INFO', 'options': ['DEBUG', 'INFO', 'WARNING', 'ERROR']},
        'SEMITTS_LOG_JSON': {'description': 'Logs em JSON estruturado', 'default': 'false', 'type': bool},
        'SEMITTS_WORKERS': {'description': 'Processos paralelos do sweep e da avaliação', 'default': '1', 'type': int},
    }

    @staticmethod
    def _convert(value_str: str, kind):
        if kind == bool:
            return value_str.lower() in ('true', '1', 'yes', 'on')
        return kind(value_str)

    @classmethod
    def validate_all(cls) -> Dict[str, Any]:
        """Valida todas as variáveis de ambiente"""
        results = {'valid': True, 'errors': [], 'warnings': [], 'config': {}}

        for var_name, spec in cls.OPTIONAL_VARS.items():
            value_str = os.getenv(var_name, spec['default'])
            value: Any = value_str

            if 'type' in spec:
                try:
                    value = cls._convert(value_str, spec['type'])
                except (ValueError, TypeError):
                    results['warnings'].append({
                        'variable': var_name, 'warning': f'Valor inválido "{value_str}", usando padrão: {spec["default"]}',
                        'description': spec['description']
                    })
                    value = cls._convert(spec['default'], spec['type'])

            if 'options' in spec:
                value = value.upper()
                if value not in spec['options']:
                    results['warnings'].append({
                        'variable': var_name, 'warning': f'Valor não reconhecido, opções válidas: {spec["options"]}',
                        'description': spec['description']
                    })
                    value = spec['default']

            results['config'][var_name] = value

        if results['config']['SEMITTS_WORKERS'] < 1:
            results['warnings'].append({
                'variable': 'SEMITTS_WORKERS', 'warning': 'Deve ser >= 1, usando 1',
                'description': cls.OPTIONAL_VARS['SEMITTS_WORKERS']['description']
            })
            results['config']['SEMITTS_WORKERS'] = 1

        return results


@dataclass
class RunEnvironment:
    """Configuração vinda do ambiente (.env incluído)"""
    run_root: Optional[str] = None
    log_level: str = "INFO"
    log_json: bool = False
    workers: int = 1

    @classmethod
    def from_env(cls, dotenv: bool = True) -> "RunEnvironment":
        if dotenv:
            load_dotenv()
        validation = EnvironmentValidator.validate_all()
        for warning in validation['warnings']:
            logger.warning(f"⚠️  {warning['variable']}: {warning['warning']}")
        values = validation['config']
        return cls(
            run_root=values['SEMITTS_RUN_ROOT'] or None,
            log_level=values['SEMITTS_LOG_LEVEL'],
            log_json=values['SEMITTS_LOG_JSON'],
            workers=values['SEMITTS_WORKERS'],
        )
