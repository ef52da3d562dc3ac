"""
semitts - Tacotron semi-supervisionado em escala de bancada
Condicionamento do encoder por vetores de palavras e pré-treino do decoder com áudio sem transcrição
"""

__version__ = "1.0.0"
__description__ = "Tacotron semi-supervisionado com autodiff próprio, Griffin-Lim e avaliação por MCD"

from .errors import SemiTTSError, ValidationFailure
from .config import ModelConfig, TrainConfig, DSPConfig, ConditioningConfig

__all__ = [
    'SemiTTSError',
    'ValidationFailure',
    'ModelConfig',
    'TrainConfig',
    'DSPConfig',
    'ConditioningConfig',
]
