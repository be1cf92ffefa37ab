"""
Dense float64 tensors with define-by-run reverse-mode differentiation, and the
Adam optimizer.

Every differentiable operation records a node on the Graph of its inputs; a
Graph is built for one batch, differentiated once with ``Graph.backward`` and
then discarded (or ``reset``). Parameters live in plain numpy arrays owned by
the backbones and enter a graph through ``Graph.parameter``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from errors import ConfigError, DimensionError, GraphContractError


class Tensor:
    """A float64 array that may be a node of a Graph."""

    __slots__ = ("value", "grad", "graph", "parents", "backward_fn", "name")

    def __init__(self, value, graph=None, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.graph = graph
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def data(self):
        """Flat row-major view of the values."""
        return self.value.reshape(-1)

    def item(self):
        if self.value.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self):
        tracked = "tracked" if self.graph is not None else "constant"
        return f"Tensor(shape={self.shape}, {tracked})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def tensor(value):
    """Wrap a value as an untracked constant tensor."""
    return value if isinstance(value, Tensor) else Tensor(value)


class Graph:
    """Recording of primitive operations for one forward/backward pass."""

    def __init__(self):
        self.nodes = []
        self._leaves = {}
        self._backpropagated = False

    def parameter(self, array, name=None):
        """
        Return the leaf node bound to a persistent parameter array.

        The same array always maps to the same leaf within one graph, so a
        parameter reused across time steps accumulates a single gradient.

        Args:
            array (np.ndarray): float64 parameter storage, updated in place by the optimizer.
            name (str, optional): Label used in error messages.

        Returns:
            Tensor: The leaf node.
        """
        leaf = self._leaves.get(id(array))
        if leaf is None:
            if array.dtype != np.float64:
                raise DimensionError(f"parameter '{name}' must be float64, got {array.dtype}")
            leaf = Tensor(array, graph=self, name=name)
            self._leaves[id(array)] = leaf
            self.nodes.append(leaf)
        return leaf

    def record(self, value, parents, backward_fn):
        node = Tensor(value, graph=self, parents=parents, backward_fn=backward_fn)
        self.nodes.append(node)
        return node

    def backward(self, root):
        """
        Populate gradients by reverse traversal of the recording order.

        Args:
            root (Tensor): Scalar node of this graph.

        Returns:
            list[np.ndarray]: Gradients of all parameter leaves, in binding order.
        """
        if root.graph is not self:
            raise GraphContractError("backward root does not belong to this graph")
        if root.value.size != 1:
            raise GraphContractError(f"backward root must be a scalar, got shape {root.shape}")
        if self._backpropagated:
            raise GraphContractError("backward already ran on this graph; call reset() first")
        self._backpropagated = True

        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes):
            if node.grad is None or node.backward_fn is None:
                continue
            for parent, parent_grad in zip(node.parents, node.backward_fn(node.grad)):
                if parent.graph is None or parent_grad is None:
                    continue
                parent.grad = parent_grad if parent.grad is None else parent.grad + parent_grad
        return [self._grad_or_zeros(leaf) for leaf in self._leaves.values()]

    def gradient(self, array):
        """Gradient accumulated for a parameter array (zeros if it did not contribute)."""
        leaf = self._leaves.get(id(array))
        if leaf is None:
            return np.zeros_like(array)
        return self._grad_or_zeros(leaf)

    def reset(self):
        """Zero every accumulator so backward may run again."""
        for node in self.nodes:
            node.grad = None
        self._backpropagated = False

    @staticmethod
    def _grad_or_zeros(leaf):
        return np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad


def _graph_of(tensors):
    graph = None
    for t in tensors:
        if t.graph is None:
            continue
        if graph is None:
            graph = t.graph
        elif t.graph is not graph:
            raise GraphContractError("operands belong to different graphs")
    return graph


def _emit(value, parents, backward_fn):
    graph = _graph_of(parents)
    if graph is None:
        return Tensor(value)
    return graph.record(value, parents, backward_fn)


def _check_elementwise(a, b, op):
    if a.shape == b.shape or a.value.ndim == 0 or b.value.ndim == 0:
        return
    raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    return np.asarray(np.sum(grad)).reshape(shape)


def add(a, b):
    a, b = tensor(a), tensor(b)
    _check_elementwise(a, b, "add")
    return _emit(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = tensor(a), tensor(b)
    _check_elementwise(a, b, "sub")
    return _emit(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = tensor(a), tensor(b)
    _check_elementwise(a, b, "mul")
    return _emit(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def neg(x):
    x = tensor(x)
    return _emit(-x.value, (x,), lambda g: (-g,))


def matmul(a, b):
    """Matrix product of an m×k and a k×n tensor."""
    a, b = tensor(a), tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    return _emit(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def add_bias(x, bias):
    """Add a length-n vector to every row of a B×n tensor."""
    x, bias = tensor(x), tensor(bias)
    if x.value.ndim != 2 or bias.value.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias: shape mismatch {x.shape} vs {bias.shape}")
    return _emit(x.value + bias.value, (x, bias), lambda g: (g, g.sum(axis=0)))


def reshape(x, shape):
    x = tensor(x)
    original = x.shape
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {original} as {shape}") from None
    return _emit(value, (x,), lambda g: (g.reshape(original),))


def relu(x):
    """Elementwise max(0, x); the gradient at exactly 0 is 0."""
    x = tensor(x)
    mask = x.value > 0
    return _emit(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def tanh_act(x):
    x = tensor(x)
    y = np.tanh(x.value)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid_act(x):
    x = tensor(x)
    y = expit(x.value)
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def abs_val(x):
    """Elementwise |x|; the gradient at exactly 0 is 0."""
    x = tensor(x)
    return _emit(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))


def square(x):
    x = tensor(x)
    return _emit(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def sum_all(x):
    x = tensor(x)
    return _emit(np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean_all(x):
    x = tensor(x)
    return mul(sum_all(x), 1.0 / x.value.size)


def finite_difference_gradient(fn, array, h=1e-5):
    """
    Central-difference gradient of a scalar function of a parameter array.

    Args:
        fn (callable): Zero-argument function returning a float; reads ``array``.
        array (np.ndarray): Parameter perturbed in place (restored afterwards).
        h (float): Step size.

    Returns:
        np.ndarray: Estimated gradient with the shape of ``array``.
    """
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + h
        upper = fn()
        array[index] = original - h
        lower = fn()
        array[index] = original
        grad[index] = (upper - lower) / (2.0 * h)
    return grad


@dataclass
class AdamState:
    """Moment estimates and step counter of the Adam optimizer."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_parameters(cls, params, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """
    Apply one bias-corrected Adam update in place.

    Weight decay enters as the L2 gradient term ``weight_decay * param``.

    Args:
        params (list[np.ndarray]): Parameter arrays, updated in place.
        grads (list[np.ndarray]): Gradients matching ``params``.
        state (AdamState): Optimizer state, updated in place.
        lr (float): Learning rate, must be positive.
        weight_decay (float): L2 coefficient.

    Returns:
        tuple: (params, state)
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise DimensionError(
            f"adam_step: {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moment arrays"
        )
    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"adam_step: shape mismatch {p.shape} / {g.shape} / {m.shape}")

    state.step_count += 1
    bias_correction1 = 1.0 - state.beta1**state.step_count
    bias_correction2 = 1.0 - state.beta2**state.step_count

    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if weight_decay:
            g = g + weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        p -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state
