"""
Per-variable contribution networks.

Each backbone reads the past of one variable and emits N outputs, one
contribution towards every variable. The MLP consumes a whole lag window at
once; the LSTM consumes one observation per step.
"""

import math

import numpy as np

from config import BackboneKind
from errors import ConfigError, DimensionError
from numerics import (
    Graph,
    Tensor,
    add,
    add_bias,
    matmul,
    mul,
    relu,
    reshape,
    sigmoid_act,
    tanh_act,
)

LSTM_GATES = ("input", "forget", "cell", "output")
FORGET_BIAS_INIT = 1.0


class MlpBackbone:
    """ReLU MLP from a K-lag window to N contributions (linear output layer)."""

    kind = BackboneKind.MLP

    def __init__(self, weights, biases, K, N):
        if len(weights) != len(biases) or len(weights) < 2:
            raise DimensionError("an MLP backbone needs matching weights/biases for >= 2 layers")
        if weights[0].shape[0] != K or weights[-1].shape[1] != N:
            raise DimensionError(
                f"MLP layers {weights[0].shape}..{weights[-1].shape} do not map K={K} to N={N}"
            )
        self.layer_weights = list(weights)
        self.layer_biases = list(biases)
        self.K = K
        self.N = N

    @property
    def hidden_layers(self):
        return len(self.layer_weights) - 1

    @property
    def hidden_units(self):
        return self.layer_weights[0].shape[1]

    def named_parameters(self):
        named = {}
        for layer, (w, b) in enumerate(zip(self.layer_weights, self.layer_biases)):
            named[f"layer{layer}.weight"] = w
            named[f"layer{layer}.bias"] = b
        return named

    def parameters(self):
        return list(self.named_parameters().values())

    @classmethod
    def from_named_parameters(cls, named, K, N):
        layers = len(named) // 2
        weights = [named[f"layer{layer}.weight"] for layer in range(layers)]
        biases = [named[f"layer{layer}.bias"] for layer in range(layers)]
        return cls(weights, biases, K, N)


class LstmBackbone:
    """Single-layer LSTM over scalar observations with an N-output projection."""

    kind = BackboneKind.LSTM

    def __init__(self, gates, projection, projection_bias, N):
        hidden = projection.shape[0]
        for name in LSTM_GATES:
            w_x, w_h, b = gates[name]
            if w_x.shape != (1, hidden) or w_h.shape != (hidden, hidden) or b.shape != (hidden,):
                raise DimensionError(f"LSTM gate '{name}' does not match hidden size {hidden}")
        if projection.shape != (hidden, N) or projection_bias.shape != (N,):
            raise DimensionError(f"LSTM projection {projection.shape} does not map H={hidden} to N={N}")
        self.gates = gates
        self.output_projection = projection
        self.output_bias = projection_bias
        self.N = N
        self.hidden_state = None
        self.cell_state = None
        self._graph = None

    @property
    def hidden_units(self):
        return self.output_projection.shape[0]

    def named_parameters(self):
        named = {}
        for name in LSTM_GATES:
            w_x, w_h, b = self.gates[name]
            named[f"{name}.input_weight"] = w_x
            named[f"{name}.hidden_weight"] = w_h
            named[f"{name}.bias"] = b
        named["projection.weight"] = self.output_projection
        named["projection.bias"] = self.output_bias
        return named

    def parameters(self):
        return list(self.named_parameters().values())

    @classmethod
    def from_named_parameters(cls, named, N):
        gates = {
            name: (
                named[f"{name}.input_weight"],
                named[f"{name}.hidden_weight"],
                named[f"{name}.bias"],
            )
            for name in LSTM_GATES
        }
        return cls(gates, named["projection.weight"], named["projection.bias"], N)

    def reset_state(self, batch_size, graph=None):
        """Zero the hidden and cell state for a new batch of sequences."""
        self._graph = graph or Graph()
        self.hidden_state = Tensor(np.zeros((batch_size, self.hidden_units)))
        self.cell_state = Tensor(np.zeros((batch_size, self.hidden_units)))


def mlp_forward(net, window, graph=None, mask_from_lag=None):
    """
    Contributions of one variable's lag window(s) to all N variables.

    Args:
        net (MlpBackbone): The backbone.
        window (np.ndarray): Length-K window, or a B×K batch of windows, ordered
            from lag K (oldest) to lag 1 (most recent).
        graph (Graph, optional): Graph to record on; a private one is used if omitted.
        mask_from_lag (int, optional): Replace inputs at lags greater than this with 0.

    Returns:
        Tensor: N-vector for a single window, B×N for a batch.
    """
    values = np.asarray(window, dtype=np.float64)
    single = values.ndim == 1
    if single:
        values = values[None, :]
    if values.ndim != 2 or values.shape[1] != net.K:
        raise DimensionError(f"MLP expects windows of length K={net.K}, got shape {np.shape(window)}")
    if mask_from_lag is not None:
        if not 0 <= mask_from_lag <= net.K:
            raise DimensionError(f"mask lag must be in [0, {net.K}], got {mask_from_lag}")
        values = values.copy()
        values[:, : net.K - mask_from_lag] = 0.0

    graph = graph or Graph()
    hidden = Tensor(values)
    last = len(net.layer_weights) - 1
    for layer, (w, b) in enumerate(zip(net.layer_weights, net.layer_biases)):
        hidden = add_bias(
            matmul(hidden, graph.parameter(w, f"layer{layer}.weight")),
            graph.parameter(b, f"layer{layer}.bias"),
        )
        if layer < last:
            hidden = relu(hidden)
    return reshape(hidden, (net.N,)) if single else hidden


def lstm_forward_step(net, x_t):
    """
    Advance the LSTM by one observation and project to N contributions.

    Args:
        net (LstmBackbone): Backbone whose state was set by ``reset_state``.
        x_t (float or np.ndarray): One observation, or one per sequence in the batch.

    Returns:
        Tensor: N-vector for a scalar input, B×N for a batch.
    """
    if net.hidden_state is None:
        raise DimensionError("LSTM state not initialised; call reset_state() first")
    single = np.ndim(x_t) == 0
    x = Tensor(np.asarray(x_t, dtype=np.float64).reshape(-1, 1))
    if x.shape[0] != net.hidden_state.shape[0]:
        raise DimensionError(
            f"LSTM state holds {net.hidden_state.shape[0]} sequences, got {x.shape[0]} inputs"
        )

    graph = net._graph
    h_prev, c_prev = net.hidden_state, net.cell_state

    def gate(name, activation):
        w_x, w_h, b = net.gates[name]
        pre = add(
            matmul(x, graph.parameter(w_x, f"{name}.input_weight")),
            matmul(h_prev, graph.parameter(w_h, f"{name}.hidden_weight")),
        )
        return activation(add_bias(pre, graph.parameter(b, f"{name}.bias")))

    input_gate = gate("input", sigmoid_act)
    forget_gate = gate("forget", sigmoid_act)
    candidate = gate("cell", tanh_act)
    output_gate = gate("output", sigmoid_act)

    cell = add(mul(forget_gate, c_prev), mul(input_gate, candidate))
    hidden = mul(output_gate, tanh_act(cell))
    net.hidden_state, net.cell_state = hidden, cell

    out = add_bias(
        matmul(hidden, graph.parameter(net.output_projection, "projection.weight")),
        graph.parameter(net.output_bias, "projection.bias"),
    )
    return reshape(out, (net.N,)) if single else out


def lstm_forward_sequence(net, sequences, graph=None):
    """
    Run a batch of equal-length sequences from a zero state.

    Args:
        net (LstmBackbone): The backbone.
        sequences (np.ndarray): B×L observations of this backbone's variable.
        graph (Graph, optional): Graph to record on.

    Returns:
        list[Tensor]: One B×N contribution tensor per step.
    """
    values = np.asarray(sequences, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"LSTM expects a B×L batch of sequences, got shape {values.shape}")
    net.reset_state(values.shape[0], graph)
    return [lstm_forward_step(net, values[:, step]) for step in range(values.shape[1])]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_backbone(kind, K, N, hidden_units, hidden_layers, seed):
    """
    Create a backbone with fan-in scaled uniform weights and zero biases.

    Args:
        kind (BackboneKind): MLP or LSTM.
        K (int): Lag window length (MLP input size).
        N (int): Number of variables (output size).
        hidden_units (int): Units per hidden layer.
        hidden_layers (int): Hidden layer count (LSTM supports 1).
        seed: Anything accepted by ``np.random.default_rng``.

    Returns:
        MlpBackbone or LstmBackbone
    """
    if hidden_units < 1 or hidden_layers < 1 or K < 1 or N < 1:
        raise ConfigError(
            f"invalid backbone sizes: K={K}, N={N}, hidden_units={hidden_units}, "
            f"hidden_layers={hidden_layers}"
        )
    rng = np.random.default_rng(seed)
    kind = BackboneKind(kind)

    if kind is BackboneKind.MLP:
        sizes = [K] + [hidden_units] * hidden_layers + [N]
        weights = [_uniform(rng, fan_in, (fan_in, fan_out)) for fan_in, fan_out in zip(sizes, sizes[1:])]
        biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
        return MlpBackbone(weights, biases, K, N)

    if hidden_layers != 1:
        raise ConfigError(f"the LSTM backbone has a single recurrent layer, got hidden_layers={hidden_layers}")
    gates = {}
    for name in LSTM_GATES:
        bias = np.full(hidden_units, FORGET_BIAS_INIT if name == "forget" else 0.0)
        gates[name] = (
            _uniform(rng, 1, (1, hidden_units)),
            _uniform(rng, hidden_units, (hidden_units, hidden_units)),
            bias,
        )
    projection = _uniform(rng, hidden_units, (hidden_units, N))
    return LstmBackbone(gates, projection, np.zeros(N), N)
