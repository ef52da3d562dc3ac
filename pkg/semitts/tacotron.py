"""
Modelo Tacotron: encoder, condicionamento por vetores de palavras,
atenção GMM e decoder autorregressivo com LSTMs com zoneout

Convenções de shape (modo em lote):
    tokens (B, T) · memória do encoder (B, T, C) · alvos mel (B, T', M), T' múltiplo de r
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor, init_uniform, no_grad
from .config import ModelConfig
from .errors import ContractViolation, ShapeError
from .text_frontend import PAD_ID, TokenSequence

logger = logging.getLogger(__name__)

PAIRED = "paired"
PRETRAIN = "pretrain"
PRETRAIN_FROZEN_PREFIXES = ("encoder.", "conditioning.", "decoder.attention.")
_MASK_PENALTY = 1e9


# ============================================================================
# PARÂMETROS
# ============================================================================

def _linear_shapes(prefix: str, n_in: int, n_out: int) -> List[Tuple[str, Tuple[int, ...], int]]:
    return [(f"{prefix}.weight", (n_in, n_out), n_in), (f"{prefix}.bias", (n_out,), n_in)]


def _lstm_shapes(prefix: str, n_in: int, n_hidden: int) -> List[Tuple[str, Tuple[int, ...], int]]:
    return _linear_shapes(prefix, n_in + n_hidden, 4 * n_hidden)


def parameter_layout(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...], int]]:
    """(nome, shape, fan_in) de cada parâmetro, na ordem de inicialização"""
    if config.n_tokens < 3:
        raise ContractViolation("n_tokens não resolvido: derive-o do léxico antes de criar o modelo")
    cond = config.conditioning
    layout: List[Tuple[str, Tuple[int, ...], int]] = [("encoder.embedding", (config.n_tokens, config.embedding_dim), 1)]

    n_in = config.encoder_input_dim
    for i, dim in enumerate(config.encoder_prenet_dims):
        layout += _linear_shapes(f"encoder.prenet.{i}", n_in, dim)
        n_in = dim
    layout += _lstm_shapes("encoder.lstm_fw", n_in, config.encoder_hidden)
    layout += _lstm_shapes("encoder.lstm_bw", n_in, config.encoder_hidden)

    if cond.enabled and cond.method == "attention":
        query_dim = config.embedding_dim if cond.location == "input" else 2 * config.encoder_hidden
        layout += [
            ("conditioning.query.weight", (query_dim, cond.attention_dim), query_dim),
            ("conditioning.memory.weight", (cond.wordvec_dim, cond.attention_dim), cond.wordvec_dim),
            ("conditioning.score.weight", (cond.attention_dim, 1), cond.attention_dim),
        ]

    n_in = config.n_mels
    for i, dim in enumerate(config.decoder_prenet_dims):
        layout += _linear_shapes(f"decoder.prenet.{i}", n_in, dim)
        n_in = dim
    memory_dim = config.memory_dim
    layout += _lstm_shapes("decoder.attention_rnn", n_in + memory_dim, config.attention_rnn_dim)
    layout += _linear_shapes("decoder.attention", config.attention_rnn_dim, 3 * config.n_mixtures)
    layout += _lstm_shapes("decoder.decoder_rnn", config.attention_rnn_dim + memory_dim, config.decoder_rnn_dim)
    projection_in = config.decoder_rnn_dim + memory_dim
    layout += _linear_shapes("decoder.frame_proj", projection_in, config.reduction_factor * config.n_mels)
    layout += _linear_shapes("decoder.stop_proj", projection_in, 1)
    return layout


def init_parameters(config: ModelConfig, seed: int) -> ParameterSet:
    """uniform(-k, k), k = 1/sqrt(fan_in), todos a partir de um único gerador"""
    rng = np.random.default_rng(seed)
    params = ParameterSet()
    for name, shape, fan_in in parameter_layout(config):
        params.add(name, init_uniform(rng, shape, fan_in))
    return params


def check_parameters(config: ModelConfig, params: ParameterSet) -> None:
    expected = {name: shape for name, shape, _ in parameter_layout(config)}
    missing = sorted(set(expected) - set(params.names()))
    extra = sorted(set(params.names()) - set(expected))
    if missing or extra:
        raise ShapeError(f"Parâmetros incompatíveis com a configuração: faltando {missing}, sobrando {extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"Parâmetro {name}: shape {params[name].shape}, esperado {shape}")


# ============================================================================
# BLOCOS
# ============================================================================

def linear(x: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    return x @ params[f"{prefix}.weight"] + params[f"{prefix}.bias"]


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: ParameterSet, prefix: str) -> Tuple[Tensor, Tensor]:
    """Passo LSTM com portões na ordem (entrada, esquecimento, candidato, saída)"""
    n = h.shape[-1]
    z = linear(ad.concat([x, h], axis=-1), params, prefix)
    i = ad.sigmoid(z[:, :n])
    f = ad.sigmoid(z[:, n:2 * n])
    g = ad.tanh(z[:, 2 * n:3 * n])
    o = ad.sigmoid(z[:, 3 * n:])
    c_new = f * c + i * g
    return o * ad.tanh(c_new), c_new


def zoneout(previous: Tensor, candidate: Tensor, rate: float, training: bool,
            rng: Optional[np.random.Generator]) -> Tensor:
    """
    Treino: d ~ Bernoulli(rate), h = d*h_prev + (1-d)*h_novo
    Inferência: h = rate*h_prev + (1-rate)*h_novo
    """
    if rate == 0.0:
        return candidate
    if training:
        keep = (rng.random(previous.shape) < rate).astype(np.float64)
        return keep * previous + (1.0 - keep) * candidate
    return rate * previous + (1.0 - rate) * candidate


def _dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * mask


def prenet(x: Tensor, params: ParameterSet, prefix: str, n_layers: int, dropout: float,
           training: bool, rng: Optional[np.random.Generator]) -> Tensor:
    for i in range(n_layers):
        x = _dropout(ad.relu(linear(x, params, f"{prefix}.{i}")), dropout, training, rng)
    return x


# ============================================================================
# CONDICIONAMENTO
# ============================================================================

def span_matrix(spans: Sequence[Tuple[int, int, int]], n_tokens: int, n_words: int) -> np.ndarray:
    """Matriz T x W com 1 onde o token pertence à palavra"""
    matrix = np.zeros((n_tokens, n_words))
    for word_index, start, end in spans:
        if not (0 <= word_index < n_words) or not (0 <= start < end <= n_tokens):
            raise ContractViolation(f"Faixa ({word_index}, {start}, {end}) fora dos limites T={n_tokens}, W={n_words}")
        matrix[start:end, word_index] = 1.0
    return matrix


def attention_context(query: Tensor, values: np.ndarray, word_mask: np.ndarray,
                      params: ParameterSet) -> Tuple[Tensor, Tensor]:
    """
    Atenção aditiva (tanh) da sequência de consultas sobre os vetores de palavras

    Args:
        query: (B, T, F)
        values: (B, W, D) vetores de palavras (constantes)
        word_mask: (B, W) 1 para palavras reais

    Returns:
        (contexto (B, T, D), pesos (B, T, W))
    """
    batch, steps, _ = query.shape
    n_words, dim = values.shape[1], values.shape[2]
    if n_words == 0:
        return Tensor(np.zeros((batch, steps, dim))), Tensor(np.zeros((batch, steps, 0)))

    attention_dim = params["conditioning.score.weight"].shape[0]
    projected_query = ad.reshape(query @ params["conditioning.query.weight"], (batch, steps, 1, attention_dim))
    projected_keys = ad.reshape(Tensor(values) @ params["conditioning.memory.weight"], (batch, 1, n_words, attention_dim))
    hidden = ad.tanh(projected_query + projected_keys)
    scores = ad.reshape(hidden @ params["conditioning.score.weight"], (batch, steps, n_words))
    penalty = ((word_mask - 1.0) * _MASK_PENALTY)[:, None, :]
    weights = ad.softmax(scores + penalty, axis=-1)
    has_words = (word_mask.sum(axis=1) > 0).astype(np.float64)[:, None, None]
    weights = weights * has_words
    return weights @ Tensor(values), weights


def additive_attention(query, keys, params: ParameterSet) -> Tuple[Tensor, Tensor]:
    """
    e_k = v·tanh(Wq·q + Wm·m_k); pesos = softmax(e); contexto = Σ pesos_k·m_k

    Args:
        query: vetor (F,)
        keys: matriz (W, D), W >= 1 (chaves e valores)
    """
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ContractViolation("additive_attention exige ao menos uma chave (W >= 1)")
    query = ad.as_tensor(query)
    context, weights = attention_context(
        ad.reshape(query, (1, 1, query.shape[-1])), keys[None], np.ones((1, keys.shape[0])), params
    )
    return ad.reshape(context, (keys.shape[1],)), ad.reshape(weights, (keys.shape[0],))


def _condition_batch(features: Tensor, method: str, word_vectors: np.ndarray, spans: np.ndarray,
                     word_mask: np.ndarray, token_mask: np.ndarray, params: ParameterSet) -> Tensor:
    if method == "concat":
        appended = Tensor(np.matmul(spans, word_vectors))
    else:
        context, _ = attention_context(features, word_vectors, word_mask, params)
        appended = context * token_mask[:, :, None]
    return ad.concat([features, appended], axis=-1)


def condition_features(features, word_vectors, spans: Sequence[Tuple[int, int, int]], method: str,
                       params: Optional[ParameterSet] = None) -> Tensor:
    """
    Acrescenta D colunas derivadas dos vetores de palavras a cada linha T x F

    concat: linhas dentro da faixa da palavra w recebem vector(w); demais linhas, zeros.
    attention: contexto da atenção aditiva por linha (exige params de conditioning.*).
    """
    features = ad.as_tensor(features)
    word_vectors = np.asarray(word_vectors, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"features deve ser T x F, recebido {features.shape}")
    if word_vectors.ndim != 2:
        raise ShapeError(f"word_vectors deve ser W x D, recebido {word_vectors.shape}")
    if word_vectors.shape[0] != len(spans):
        raise ContractViolation(f"{word_vectors.shape[0]} vetores para {len(spans)} faixas")
    if method not in ("concat", "attention"):
        raise ContractViolation(f"Método de condicionamento desconhecido: {method}")
    if method == "attention" and params is None:
        raise ContractViolation("O método attention exige os parâmetros conditioning.*")

    steps, n_words = features.shape[0], word_vectors.shape[0]
    matrix = span_matrix(spans, steps, n_words)
    batched = _condition_batch(
        ad.reshape(features, (1,) + features.shape), method, word_vectors[None], matrix[None],
        np.ones((1, n_words)), np.ones((1, steps)), params,
    )
    return ad.reshape(batched, batched.shape[1:])


# ============================================================================
# ATENÇÃO GMM
# ============================================================================

def gmm_attention_step(kappa: Tensor, query: Tensor, memory: Tensor, memory_mask: np.ndarray,
                       params: ParameterSet, n_mixtures: int) -> Tuple[Tensor, Tensor, Tensor]:
    """
    α = exp(α̂), β = exp(β̂), κ' = κ + exp(κ̂)
    φ(u) = Σ_k α_k·exp(−β_k(κ'_k − u)²) nas posições inteiras u, não normalizado

    Returns:
        (contexto (B, C), pesos φ (B, T), κ' (B, K))
    """
    batch, steps, _ = memory.shape
    k = n_mixtures
    raw = linear(query, params, "decoder.attention")
    alpha = ad.reshape(ad.exp(raw[:, :k]), (batch, k, 1))
    beta = ad.reshape(ad.exp(raw[:, k:2 * k]), (batch, k, 1))
    new_kappa = kappa + ad.exp(raw[:, 2 * k:])

    positions = np.arange(steps, dtype=np.float64)[None, None, :]
    distance = ad.reshape(new_kappa, (batch, k, 1)) - positions
    phi = ad.tsum(alpha * ad.exp(ad.neg(beta * distance * distance)), axis=1)
    phi = phi * memory_mask
    context = ad.reshape(ad.reshape(phi, (batch, 1, steps)) @ memory, (batch, memory.shape[2]))
    return context, phi, new_kappa


def mean_attention_positions(alignment: np.ndarray) -> np.ndarray:
    """Σ_u u·φ(u) / Σ_u φ(u) por passo do decoder"""
    alignment = np.asarray(alignment, dtype=np.float64)
    positions = np.arange(alignment.shape[1], dtype=np.float64)
    mass = alignment.sum(axis=1)
    return (alignment @ positions) / np.maximum(mass, np.finfo(np.float64).tiny)


# ============================================================================
# DECODER
# ============================================================================

@dataclass
class DecoderState:
    """Estados das duas LSTMs, médias κ da atenção, último contexto e último grupo de frames"""
    attention_h: Tensor
    attention_c: Tensor
    decoder_h: Tensor
    decoder_c: Tensor
    kappa: Tensor
    context: Tensor
    prev_frames: Tensor


@dataclass
class TextInputs:
    """Entradas textuais em lote, com padding"""
    tokens: np.ndarray          # (B, T) int
    lengths: np.ndarray         # (B,)
    spans: np.ndarray           # (B, T, W)
    word_mask: np.ndarray       # (B, W)
    word_vectors: Optional[np.ndarray] = None  # (B, W, D)

    @property
    def token_mask(self) -> np.ndarray:
        return (np.arange(self.tokens.shape[1])[None, :] < self.lengths[:, None]).astype(np.float64)


def build_text_inputs(sequences: Sequence[TokenSequence],
                      word_vectors: Optional[Sequence[np.ndarray]] = None) -> TextInputs:
    """Empilha sequências de tokens (e seus W x D vetores de palavras) com padding"""
    if not sequences:
        raise ContractViolation("Lote sem sequências")
    batch = len(sequences)
    max_tokens = max(len(s) for s in sequences)
    max_words = max(len(s.words) for s in sequences)
    tokens = np.full((batch, max_tokens), PAD_ID, dtype=np.int64)
    lengths = np.zeros(batch, dtype=np.int64)
    spans = np.zeros((batch, max_tokens, max_words))
    word_mask = np.zeros((batch, max_words))
    stacked = None
    if word_vectors is not None:
        if len(word_vectors) != batch:
            raise ContractViolation("Número de matrizes de vetores difere do número de sequências")
        dim = np.asarray(word_vectors[0]).shape[-1] if batch else 0
        stacked = np.zeros((batch, max_words, dim))

    for b, sequence in enumerate(sequences):
        tokens[b, :len(sequence)] = sequence.token_ids
        lengths[b] = len(sequence)
        n_words = len(sequence.words)
        spans[b, :len(sequence), :n_words] = span_matrix(sequence.word_spans, len(sequence), n_words)
        word_mask[b, :n_words] = 1.0
        if stacked is not None:
            matrix = np.asarray(word_vectors[b], dtype=np.float64).reshape(-1, stacked.shape[2])
            if matrix.shape[0] != n_words:
                raise ContractViolation(f"{matrix.shape[0]} vetores para {n_words} palavras")
            stacked[b, :n_words] = matrix
    return TextInputs(tokens=tokens, lengths=lengths, spans=spans, word_mask=word_mask, word_vectors=stacked)


@dataclass
class SynthesisResult:
    """Saída da síntese autorregressiva"""
    mel: np.ndarray              # (passos * r, M)
    alignment: np.ndarray        # (passos, T)
    kappa: np.ndarray            # (passos, K)
    stop_logits: np.ndarray      # (passos,)
    truncated: bool

    @property
    def n_steps(self) -> int:
        return self.alignment.shape[0]


class TacotronModel:
    """Parâmetros + configuração; todas as passagens são funções dos parâmetros atuais"""

    def __init__(self, config: ModelConfig, params: ParameterSet):
        check_parameters(config, params)
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "TacotronModel":
        return cls(config, init_parameters(config, seed))

    # ------------------------------------------------------------------ encoder
    def _bilstm_direction(self, x: Tensor, mask: np.ndarray, prefix: str, reverse: bool) -> List[Tensor]:
        batch, steps, _ = x.shape
        hidden = self.config.encoder_hidden
        h = Tensor(np.zeros((batch, hidden)))
        c = Tensor(np.zeros((batch, hidden)))
        outputs: List[Optional[Tensor]] = [None] * steps
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for t in order:
            h_new, c_new = lstm_cell(x[:, t, :], h, c, self.params, prefix)
            m = mask[:, t:t + 1]
            if np.all(m == 1.0):
                h, c = h_new, c_new
                outputs[t] = h
            else:
                h = m * h_new + (1.0 - m) * h
                c = m * c_new + (1.0 - m) * c
                outputs[t] = h * m
        return outputs

    def encode(self, inputs: TextInputs, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        Saídas do BiLSTM (B, T, 2H); posições de padding zeradas

        Com condicionamento na entrada, os vetores são acrescentados aos embeddings antes da pre-net.
        """
        config = self.config
        if inputs.tokens.size and (inputs.tokens.min() < 0 or inputs.tokens.max() >= config.n_tokens):
            raise ContractViolation(f"Ids de token fora do inventário [0, {config.n_tokens})")
        mask = inputs.token_mask
        features = ad.getitem(self.params["encoder.embedding"], inputs.tokens)
        if config.conditioning.enabled and config.conditioning.location == "input":
            features = self._condition(features, inputs)
        x = prenet(features, self.params, "encoder.prenet", len(config.encoder_prenet_dims),
                   config.prenet_dropout, training, rng)
        forward = self._bilstm_direction(x, mask, "encoder.lstm_fw", reverse=False)
        backward = self._bilstm_direction(x, mask, "encoder.lstm_bw", reverse=True)
        return ad.stack([ad.concat([f, b], axis=-1) for f, b in zip(forward, backward)], axis=1)

    def _condition(self, features: Tensor, inputs: TextInputs) -> Tensor:
        cond = self.config.conditioning
        vectors = inputs.word_vectors
        if vectors is None:
            vectors = np.zeros((inputs.tokens.shape[0], inputs.word_mask.shape[1], cond.wordvec_dim))
        if vectors.shape[2] != cond.wordvec_dim:
            raise ShapeError(f"Vetores de palavras com D={vectors.shape[2]}, modelo espera {cond.wordvec_dim}")
        return _condition_batch(features, cond.method, vectors, inputs.spans, inputs.word_mask,
                                inputs.token_mask, self.params)

    def memory(self, inputs: TextInputs, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, np.ndarray]:
        """Memória da atenção (B, T, C) e máscara (B, T)"""
        outputs = self.encode(inputs, training, rng)
        if self.config.conditioning.enabled and self.config.conditioning.location == "top":
            outputs = self._condition(outputs, inputs)
        return outputs, inputs.token_mask

    # ------------------------------------------------------------------ decoder
    def initial_state(self, batch: int) -> DecoderState:
        config = self.config
        zeros = lambda dim: Tensor(np.zeros((batch, dim)))  # noqa: E731
        return DecoderState(
            attention_h=zeros(config.attention_rnn_dim),
            attention_c=zeros(config.attention_rnn_dim),
            decoder_h=zeros(config.decoder_rnn_dim),
            decoder_c=zeros(config.decoder_rnn_dim),
            kappa=zeros(config.n_mixtures),
            context=zeros(config.memory_dim),
            prev_frames=zeros(config.reduction_factor * config.n_mels),
        )

    def decoder_step(self, state: DecoderState, memory: Optional[Tensor] = None,
                     memory_mask: Optional[np.ndarray] = None, zero_context: bool = False,
                     training: bool = False, rng: Optional[np.random.Generator] = None
                     ) -> Tuple[Tensor, Tensor, DecoderState, Optional[Tensor]]:
        """
        Um passo do decoder

        Returns:
            (r frames achatados (B, r*M), logit de parada (B,), novo estado, pesos φ ou None)
        """
        config = self.config
        if not zero_context and memory is None:
            raise ContractViolation("decoder_step sem memória exige zero_context=True")
        batch = state.prev_frames.shape[0]
        previous = state.prev_frames[:, -config.n_mels:]
        p = prenet(previous, self.params, "decoder.prenet", len(config.decoder_prenet_dims),
                   config.prenet_dropout, training, rng)

        context_in = Tensor(np.zeros((batch, config.memory_dim))) if zero_context else state.context
        h1_new, c1_new = lstm_cell(ad.concat([p, context_in], axis=-1), state.attention_h, state.attention_c,
                                   self.params, "decoder.attention_rnn")
        h1 = zoneout(state.attention_h, h1_new, config.zoneout, training, rng)
        c1 = zoneout(state.attention_c, c1_new, config.zoneout, training, rng)

        if zero_context:
            context, weights, kappa = Tensor(np.zeros((batch, config.memory_dim))), None, state.kappa
        else:
            if memory_mask is None:
                memory_mask = np.ones(memory.shape[:2])
            context, weights, kappa = gmm_attention_step(state.kappa, h1, memory, memory_mask,
                                                         self.params, config.n_mixtures)

        h2_new, c2_new = lstm_cell(ad.concat([h1, context], axis=-1), state.decoder_h, state.decoder_c,
                                   self.params, "decoder.decoder_rnn")
        h2 = zoneout(state.decoder_h, h2_new, config.zoneout, training, rng)
        c2 = zoneout(state.decoder_c, c2_new, config.zoneout, training, rng)

        projection_in = ad.concat([h2, context], axis=-1)
        frames = linear(projection_in, self.params, "decoder.frame_proj")
        stop = ad.reshape(linear(projection_in, self.params, "decoder.stop_proj"), (batch,))
        new_state = DecoderState(h1, c1, h2, c2, kappa, context, frames)
        return frames, stop, new_state, weights

    def forward_teacher_forced(self, batch, mode: str = PAIRED, training: bool = True,
                               rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """
        Passo t consome o grupo de frames reais t−1 (grupo "go" nulo em t=0)

        Args:
            batch: PairedBatch ou UnpairedBatch (modo pretrain dispensa texto)
            mode: "paired" ou "pretrain" (contexto nulo, encoder não é executado)

        Returns:
            (mel previsto (B, T', M), logits de parada (B, T'/r))
        """
        config = self.config
        r, n_mels = config.reduction_factor, config.n_mels
        mels = np.asarray(batch.mels, dtype=np.float64)
        n_batch, n_frames, mel_dim = mels.shape
        if mel_dim != n_mels:
            raise ShapeError(f"Alvos com {mel_dim} canais mel, modelo espera {n_mels}")
        if n_frames == 0 or n_frames % r:
            raise ContractViolation(f"Comprimento do alvo ({n_frames}) deve ser múltiplo positivo de r={r}")
        if training and rng is None:
            rng = np.random.default_rng(0)

        if mode == PAIRED:
            text = getattr(batch, "text", None)
            if text is None:
                raise ContractViolation("Modo paired exige lote com texto")
            memory, memory_mask = self.memory(text, training, rng)
            zero_context = False
        elif mode == PRETRAIN:
            memory, memory_mask, zero_context = None, None, True
        else:
            raise ContractViolation(f"Modo desconhecido: {mode}")

        groups = mels.reshape(n_batch, n_frames // r, r * n_mels)
        state = self.initial_state(n_batch)
        frames_out, stops = [], []
        for g in range(groups.shape[1]):
            if g > 0:
                state = replace(state, prev_frames=Tensor(groups[:, g - 1]))
            frames, stop, state, _ = self.decoder_step(state, memory, memory_mask, zero_context, training, rng)
            frames_out.append(frames)
            stops.append(stop)
        predicted = ad.reshape(ad.stack(frames_out, axis=1), (n_batch, n_frames, n_mels))
        return predicted, ad.stack(stops, axis=1)

    def synthesize(self, tokens: TokenSequence, word_vectors: Optional[np.ndarray] = None,
                   max_steps: Optional[int] = None) -> SynthesisResult:
        """
        Decodificação autorregressiva (zoneout em modo de expectativa, sem dropout)

        Para quando sigmoid(logit de parada) > 0.5 ou ao atingir max_steps (truncated=True).
        """
        max_steps = self.config.max_decoder_steps if max_steps is None else max_steps
        if max_steps < 1:
            raise ContractViolation("max_steps deve ser >= 1")
        vectors = None if word_vectors is None else [np.asarray(word_vectors, dtype=np.float64)]
        inputs = build_text_inputs([tokens], vectors)

        frames, alignment, kappas, stops = [], [], [], []
        truncated = True
        with no_grad():
            memory, memory_mask = self.memory(inputs)
            state = self.initial_state(1)
            for _ in range(max_steps):
                frame, stop, state, weights = self.decoder_step(state, memory, memory_mask)
                frames.append(frame.data[0])
                alignment.append(weights.data[0])
                kappas.append(state.kappa.data[0])
                stops.append(stop.item())
                if stops[-1] > 0.0:
                    truncated = False
                    break
        if truncated:
            logger.info(f"Síntese atingiu max_steps={max_steps} sem sinal de parada")

        return SynthesisResult(
            mel=np.stack(frames).reshape(-1, self.config.n_mels),
            alignment=np.stack(alignment),
            kappa=np.stack(kappas),
            stop_logits=np.array(stops),
            truncated=truncated,
        )


def expected_frames(n_steps: int, config: ModelConfig) -> int:
    return n_steps * config.reduction_factor


def audio_samples_for(n_steps: int, config: ModelConfig, hop_length: int) -> int:
    return expected_frames(n_steps, config) * hop_length


def seconds_for(n_steps: int, config: ModelConfig, hop_length: int, sample_rate: int) -> float:
    return audio_samples_for(n_steps, config, hop_length) / float(sample_rate)
