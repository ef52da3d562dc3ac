"""
Motor mínimo de diferenciação automática em modo reverso

Cada primitiva registra seus pais e uma função de retropropagação; backward()
percorre o registro em ordem topológica reversa e depois o descarta.
Tudo em float64.
"""

import itertools
import math
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, GradientError, ShapeError

_node_ids = itertools.count()
_grad_enabled: ContextVar[bool] = ContextVar("semitts_grad_enabled", default=True)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Array denso float64 que participa do registro de computação"""

    __slots__ = ("data", "requires_grad", "name", "node_id", "op", "_parents", "_backward")
    # ndarray <op> Tensor delega aos operadores refletidos
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _op: str = "leaf",
        _backward: Optional[BackwardFn] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.node_id = next(_node_ids)
        self.op = _op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    # operadores
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Desliga o registro de computação (inferência)"""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn: BackwardFn) -> Tensor:
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _op=op, _backward=backward_fn)
    return Tensor(data, _op=op)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduz um gradiente broadcast de volta ao shape original"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ============================================================================
# PRIMITIVAS
# ============================================================================

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), "add", backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), "sub", backward_fn)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), "neg", lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), "mul", backward_fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _record(a.data / b.data, (a, b), "div", backward_fn)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul exige tensores com ao menos 2 dimensões: {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul com dimensões incompatíveis: {a.shape} @ {b.shape}")

    def backward_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(np.matmul(a.data, b.data), (a, b), "matmul", backward_fn)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _record(y, (a,), "tanh", lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = expit(a.data)
    return _record(y, (a,), "sigmoid", lambda g: (g * y * (1.0 - y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)
    return _record(y, (a,), "exp", lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    active = (a.data > 0).astype(np.float64)
    return _record(a.data * active, (a,), "relu", lambda g: (g * active,))


def tabs(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _record(np.abs(a.data), (a,), "abs", lambda g: (g * sign,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward_fn(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _record(y, (a,), "softmax", backward_fn)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("concat de uma lista vazia")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tensors, "concat", backward_fn)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractViolation("stack de uma lista vazia")

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _record(np.stack([t.data for t in tensors], axis=axis), tensors, "stack", backward_fn)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), "slice", backward_fn)


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    return _record(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(original),))


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    """
    Soma. A redução total usa math.fsum (arredondamento exato), de modo que
    zeros extras nunca alteram o resultado
    """
    a = as_tensor(a)
    if axis is None:
        value = np.array(math.fsum(a.data.ravel()))
        if keepdims:
            value = value.reshape((1,) * a.ndim)

        def backward_fn(g):
            return (np.broadcast_to(np.asarray(g).reshape((1,) * a.ndim), a.shape).copy(),)

        return _record(value, (a,), "sum", backward_fn)

    value = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(value, (a,), "sum", backward_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    total = tsum(a, axis=axis, keepdims=keepdims)
    return mul(total, 1.0 / count) if count else total


def softplus(a) -> Tensor:
    """log(1 + exp(a)) numericamente estável: relu(a) + log(1 + exp(-|a|))"""
    a = as_tensor(a)
    return relu(a) + log(1.0 + exp(neg(tabs(a))))


# ============================================================================
# RETROPROPAGAÇÃO
# ============================================================================

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited: Set[int] = set()
    stack_: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack_.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.node_id not in visited:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional["ParameterSet"] = None) -> Dict[str, np.ndarray]:
    """
    Calcula gradientes da perda escalar em relação às folhas com requires_grad

    Args:
        loss: tensor escalar produzido pelas primitivas registradas
        params: conjunto de parâmetros; folhas fora do caminho recebem zeros

    Returns:
        Dicionário nome-do-parâmetro -> gradiente
    """
    if loss.size != 1:
        raise ContractViolation(f"backward exige perda escalar, recebido shape {loss.shape}")
    if not np.all(np.isfinite(loss.data)):
        raise GradientError(loss.op, "perda não finita")

    order = _topological_order(loss) if loss.requires_grad else []
    grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaf_grads: Dict[int, np.ndarray] = {}

    try:
        for node in reversed(order):
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            if node._backward is None:
                leaf_grads[node.node_id] = g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(parent_grad)):
                    raise GradientError(node.op, f"gradiente não finito (nó {node.node_id})")
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + parent_grad
                else:
                    grads[parent.node_id] = parent_grad
    finally:
        # o registro é descartado mesmo em caso de erro
        for node in order:
            node._parents = ()
            node._backward = None

    if params is None:
        return {node.name: leaf_grads[node.node_id] for node in order if node.name and node.node_id in leaf_grads}

    result: Dict[str, np.ndarray] = {}
    for name, tensor in params.items():
        g = leaf_grads.get(tensor.node_id)
        result[name] = np.zeros_like(tensor.data) if g is None else g.reshape(tensor.shape)
    return result


# ============================================================================
# PARÂMETROS
# ============================================================================

class ParameterSet:
    """Mapa nome -> Tensor folha, com máscara de congelamento"""

    def __init__(self, freeze_mask: Iterable[str] = ()):
        self._tensors: Dict[str, Tensor] = {}
        self.freeze_mask: Set[str] = set(freeze_mask)

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ContractViolation(f"Parâmetro duplicado: {name}")
        tensor = Tensor(np.array(array, dtype=np.float64, copy=True), requires_grad=True, name=name)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def freeze(self, prefixes: Iterable[str]) -> Set[str]:
        """Congela todos os parâmetros cujo nome começa com algum dos prefixos"""
        prefixes = tuple(prefixes)
        frozen = {name for name in self._tensors if name.startswith(prefixes)}
        self.freeze_mask |= frozen
        return frozen

    def unfreeze_all(self) -> None:
        self.freeze_mask = set()

    def trainable_names(self) -> List[str]:
        return [name for name in self._tensors if name not in self.freeze_mask]

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._tensors.items()}

    def assign(self, arrays: Dict[str, np.ndarray], names: Optional[Iterable[str]] = None) -> List[str]:
        """Copia valores para parâmetros existentes, conferindo shapes"""
        assigned = []
        for name in (names if names is not None else arrays):
            if name not in self._tensors:
                raise ContractViolation(f"Parâmetro desconhecido: {name}")
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != self._tensors[name].shape:
                raise ShapeError(
                    f"Parâmetro {name}: shape {value.shape} difere de {self._tensors[name].shape}"
                )
            self._tensors[name].data[...] = value
            assigned.append(name)
        return assigned


def init_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    """uniform(-k, k) com k = 1/sqrt(fan_in)"""
    k = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-k, k, size=shape)
