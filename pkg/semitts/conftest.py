"""
Fixtures compartilhadas dos testes
"""

import numpy as np
import pytest

from .config import ConditioningConfig, DSPConfig, ModelConfig, ToyCorpusConfig, TrainConfig
from .text_frontend import Lexicon


def tiny_model_config(n_tokens: int = 10, conditioning: ConditioningConfig = None, **overrides) -> ModelConfig:
    """Dimensões mínimas (E=H=M=8, K=2) para testes de gradiente e de contrato"""
    values = dict(
        n_tokens=n_tokens,
        embedding_dim=8,
        encoder_prenet_dims=[8],
        encoder_hidden=4,
        prenet_dropout=0.5,
        decoder_prenet_dims=[8],
        attention_rnn_dim=8,
        decoder_rnn_dim=8,
        n_mixtures=2,
        zoneout=0.1,
        reduction_factor=2,
        n_mels=8,
        max_decoder_steps=12,
        conditioning=conditioning or ConditioningConfig(),
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lexicon():
    """Léxico distribuído com o pacote (contém 'thank' e 'you')"""
    return Lexicon.load()


@pytest.fixture
def small_dsp():
    return DSPConfig(sample_rate=8000, n_fft=256, hop_length=64, win_length=256, n_mels=20, griffin_lim_iters=30)


@pytest.fixture
def tiny_train():
    return TrainConfig(seed=0, batch_size=2, bucket_batches=2, pretrain_steps=3, finetune_steps=4,
                       validation_interval=2, patience=3, log_interval=1)


@pytest.fixture
def tiny_toy():
    return ToyCorpusConfig(n_paired=6, n_unpaired=6, n_eval=2, lexicon_size=8, n_topics=2,
                           min_words=1, max_words=2, corpus_sentences=30, seed=0)


def tiny_experiment(root, variant: str = "t-base", name: str = "tiny") -> dict:
    """Documento de experimento mínimo com corpus e execuções dentro de `root`"""
    return {
        "name": name,
        "variant": variant,
        "model": {
            "n_tokens": 0, "embedding_dim": 8, "encoder_prenet_dims": [8], "encoder_hidden": 4,
            "decoder_prenet_dims": [8], "attention_rnn_dim": 8, "decoder_rnn_dim": 8, "n_mixtures": 2,
            "reduction_factor": 2, "n_mels": 20, "max_decoder_steps": 12,
            "conditioning": {"enabled": False, "wordvec_dim": 4, "attention_dim": 4},
        },
        "train": {"seed": 0, "batch_size": 2, "bucket_batches": 2, "pretrain_steps": 3, "finetune_steps": 4,
                  "validation_interval": 2, "patience": 3, "log_interval": 1},
        "dsp": {"sample_rate": 8000, "n_fft": 256, "hop_length": 64, "win_length": 256, "n_mels": 20,
                "griffin_lim_iters": 30},
        "wordvec": {"dim": 4, "epochs": 1},
        "toy": {"n_paired": 6, "n_unpaired": 6, "n_eval": 2, "lexicon_size": 8, "n_topics": 2,
                "min_words": 1, "max_words": 2, "corpus_sentences": 30, "seed": 0},
        "data": {"corpus_dir": str(root / "data")},
        "run_root": str(root / "runs"),
    }
