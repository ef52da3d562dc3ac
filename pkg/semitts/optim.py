"""
Otimizador Adam, clipping por norma global e verificação de gradientes
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Tuple

import numpy as np

from .autodiff import ParameterSet, Tensor, backward, no_grad
from .errors import ContractViolation, NonDeterministicClosureError, ShapeError

logger = logging.getLogger("semitts.train")


@dataclass
class AdamState:
    """Momentos por parâmetro, contador de passos e hiperparâmetros do Adam"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        """Validação após inicialização"""
        if self.lr <= 0 or self.epsilon <= 0:
            raise ValueError("lr e epsilon devem ser positivos")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 e beta2 devem estar em (0, 1)")
        if self.t < 0:
            raise ValueError("t deve ser >= 0")

    @classmethod
    def for_params(cls, params: ParameterSet, **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, tensor in params.items():
            state.m[name] = np.zeros_like(tensor.data)
            state.v[name] = np.zeros_like(tensor.data)
        return state

    def hyperparameters(self) -> Dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}


def adam_step(params: ParameterSet, grads: Dict[str, np.ndarray], state: AdamState) -> Tuple[ParameterSet, AdamState]:
    """
    Aplica um passo de Adam com correção de viés

    Parâmetros na freeze_mask não são tocados (nem seus momentos).
    """
    unknown = set(grads) - set(params.names())
    if unknown:
        raise ContractViolation(f"Gradientes para parâmetros desconhecidos: {sorted(unknown)}")

    state.t += 1
    bias1 = 1.0 - state.beta1 ** state.t
    bias2 = 1.0 - state.beta2 ** state.t

    for name, grad in grads.items():
        if name in params.freeze_mask:
            continue
        tensor = params[name]
        if grad.shape != tensor.shape:
            raise ShapeError(f"Gradiente de {name} com shape {grad.shape}, parâmetro {tensor.shape}")
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        tensor.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

    return params, state


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float, exclude=()) -> float:
    """
    Reescala os gradientes in-place para norma global <= max_norm

    Returns:
        Norma global antes do clipping
    """
    exclude = set(exclude)
    total = float(np.sqrt(sum(float(np.sum(g * g)) for name, g in grads.items() if name not in exclude)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name, g in grads.items():
            if name not in exclude:
                g *= scale
    return total


def grad_check(
    closure: Callable[[], Tensor],
    params: ParameterSet,
    eps: float = 1e-5,
    max_coords_per_param: int = 8,
    seed: int = 0,
    names=None,
    floor: float = 1e-8,
) -> float:
    """
    Compara gradiente analítico e diferenças finitas centrais

    Args:
        closure: função sem argumentos que devolve a perda escalar (determinística)
        params: parâmetros usados pela closure
        eps: passo das diferenças finitas
        max_coords_per_param: coordenadas amostradas por parâmetro
        seed: semente da amostragem de coordenadas
        names: subconjunto opcional de parâmetros a verificar
        floor: denominador mínimo (gradientes menores que isso são comparados em termos absolutos)

    Returns:
        Maior erro relativo |a - n| / max(|a|, |n|, floor)
    """
    with no_grad():
        first = closure().item()
        second = closure().item()
    if first != second:
        raise NonDeterministicClosureError(f"closure não determinística: {first!r} != {second!r}")

    analytic = backward(closure(), params)
    rng = np.random.default_rng(seed)
    worst = 0.0

    for name in (names if names is not None else params.names()):
        tensor = params[name]
        flat = tensor.data.reshape(-1)
        count = min(max_coords_per_param, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        for coord in coords:
            original = flat[coord]
            with no_grad():
                flat[coord] = original + eps
                plus = closure().item()
                flat[coord] = original - eps
                minus = closure().item()
            flat[coord] = original
            numeric = (plus - minus) / (2.0 * eps)
            a = float(analytic[name].reshape(-1)[coord])
            error = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if error > worst:
                worst = error
                logger.debug(f"grad_check {name}[{coord}]: analítico={a:.6e} numérico={numeric:.6e}")
    return worst
