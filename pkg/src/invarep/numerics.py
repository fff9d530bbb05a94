"""Dense feed-forward networks with hand-derived gradients, plus Adam.

Everything runs on 64-bit numpy arrays.  A network is a list of
(weight, bias, activation) layers; the forward pass records a tape of
layer inputs and pre-activations so the backward pass is exact.  There is
no general autodiff here: each activation carries its own derivative and
the chain rule is applied layer by layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

ACTIVATIONS = ("relu", "identity", "sigmoid", "softplus")


def g17(x) -> str:
    """Shortest round-trippable decimal for a float64; all logs and
    delimited outputs go through this so reruns are byte-identical."""
    return "%.17g" % float(x)


def sigmoid(x):
    # computed via softplus so large |x| cannot overflow
    return np.exp(-np.logaddexp(0.0, -x))


def softplus(x):
    return np.logaddexp(0.0, x)


def _act_forward(name, pre):
    if name == "relu":
        return np.maximum(0.0, pre)
    if name == "identity":
        return pre
    if name == "sigmoid":
        return sigmoid(pre)
    if name == "softplus":
        return softplus(pre)
    raise ConfigError(f"unknown activation {name!r}")


def _act_deriv(name, pre):
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(pre)
    if name == "sigmoid":
        s = sigmoid(pre)
        return s * (1.0 - s)
    if name == "softplus":
        return sigmoid(pre)
    raise ConfigError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str


@dataclass
class Mlp:
    """A chain of dense layers.  ``layers[k].weight.shape[1]`` must equal
    ``layers[k+1].weight.shape[0]``."""

    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (weight, bias per layer)."""
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def param_names(self) -> list[str]:
        out = []
        for i in range(len(self.layers)):
            out.append(f"layer{i}.weight")
            out.append(f"layer{i}.bias")
        return out

    def set_params(self, arrays: list[np.ndarray]) -> None:
        expect = self.params()
        if len(arrays) != len(expect):
            raise ConfigError(
                f"expected {len(expect)} parameter arrays, got {len(arrays)}"
            )
        for i, layer in enumerate(self.layers):
            w, b = arrays[2 * i], arrays[2 * i + 1]
            if w.shape != layer.weight.shape or b.shape != layer.bias.shape:
                raise ConfigError(f"parameter shape mismatch at layer {i}")
            layer.weight = np.asarray(w, dtype=np.float64)
            layer.bias = np.asarray(b, dtype=np.float64)


def mlp_create(sizes, activations, rng) -> Mlp:
    """Build an Mlp with Gaussian init, std sqrt(2/fan_in), zero biases.

    ``sizes`` is [input_dim, h1, ..., output_dim]; ``activations`` has one
    entry per layer (len(sizes) - 1).
    """
    if len(activations) != len(sizes) - 1:
        raise ConfigError(
            f"need {len(sizes) - 1} activations for {len(sizes)} sizes, "
            f"got {len(activations)}"
        )
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        if act not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {act!r}")
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        layers.append(Layer(w, np.zeros(fan_out), act))
    return Mlp(layers)


def mlp_forward(net: Mlp, x: np.ndarray):
    """Run the network on a (batch, input_dim) matrix.

    Returns (out, tape); the tape holds each layer's input and
    pre-activation and is consumed by :func:`mlp_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ConfigError(
            f"input has shape {x.shape}, expected (batch, {net.input_dim})"
        )
    tape = []
    h = x
    for layer in net.layers:
        pre = h @ layer.weight + layer.bias
        tape.append((h, pre))
        h = _act_forward(layer.activation, pre)
    return h, tape


def mlp_backward(net: Mlp, tape, out_grad: np.ndarray):
    """Backpropagate ``out_grad`` (d loss / d output) through the net.

    Returns (param_grads, input_grad) where param_grads matches the layout
    of :meth:`Mlp.params`.
    """
    if len(tape) != len(net.layers):
        raise RuntimeError(
            f"tape has {len(tape)} entries for {len(net.layers)} layers"
        )
    grads = [None] * (2 * len(net.layers))
    d = np.asarray(out_grad, dtype=np.float64)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        h_in, pre = tape[i]
        if d.shape != pre.shape:
            raise RuntimeError(
                f"gradient shape {d.shape} does not match layer {i} "
                f"output {pre.shape}; stale tape?"
            )
        d_pre = d * _act_deriv(layer.activation, pre)
        grads[2 * i] = h_in.T @ d_pre
        grads[2 * i + 1] = d_pre.sum(axis=0)
        d = d_pre @ layer.weight.T
    return grads, d


@dataclass
class AdamState:
    """Per-parameter Adam accumulators.  Step count starts at 0 and is
    incremented by each :func:`adam_step`."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params, grads, state: AdamState):
    """Apply one bias-corrected Adam update in place.

    ``params`` and ``grads`` are parallel lists of arrays matching the
    shapes in ``state``.  Returns ``state`` for chaining.
    """
    if not (len(params) == len(grads) == len(state.m)):
        raise ConfigError("params/grads/state lengths differ")
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ConfigError(
                f"gradient shape {g.shape} does not match parameter {p.shape}"
            )
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
