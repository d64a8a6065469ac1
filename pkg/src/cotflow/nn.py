"""Small SELU multilayer perceptron with hand-written backprop and Adam.

Parameters live in one flat float64 vector. Each layer's weight matrix
``(fan_in, fan_out)`` and bias ``(fan_out,)`` are views into it, so an
in-place Adam update is visible to the forward pass without repacking.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .kernels import selu as _selu_kernel

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class InputShapeError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_dims: tuple = (64, 64, 64, 64)
    activation: str = "selu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be non-empty")
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer sizes must be >= 1, got {dims}")
        if self.activation != "selu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def layer_dims(self):
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self):
        return sum(i * o + o for i, o in self.layer_dims)


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "constant"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < self.beta2 < 1):
            raise ValueError("need 0 < beta1 < beta2 < 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.schedule != "constant":
            raise ValueError(f"unsupported schedule {self.schedule!r}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class FlowModel:
    spec: MlpSpec
    parameters: np.ndarray
    adam_state: AdamState
    _layers: List = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.parameters = np.ascontiguousarray(self.parameters, dtype=np.float64)
        if self.parameters.shape != (self.spec.n_params,):
            raise ValueError(
                f"expected {self.spec.n_params} parameters, got {self.parameters.shape}"
            )
        if self.adam_state.m.shape != self.parameters.shape or self.adam_state.v.shape != self.parameters.shape:
            raise ValueError("adam moments must match the parameter vector")
        self._layers = _layer_views(self.spec, self.parameters)

    @property
    def layers(self):
        return self._layers

    def copy(self):
        return FlowModel(
            self.spec,
            self.parameters.copy(),
            AdamState(self.adam_state.m.copy(), self.adam_state.v.copy(), self.adam_state.step),
        )


def _layer_views(spec, flat):
    views = []
    off = 0
    for fan_in, fan_out in spec.layer_dims:
        w = flat[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = flat[off:off + fan_out]
        off += fan_out
        views.append((w, b))
    return views


def init_model(spec: MlpSpec) -> FlowModel:
    """Kaiming-uniform (fan-in, SELU gain 3/4) weights, PyTorch-style biases."""
    rng = np.random.default_rng(int(spec.seed))
    flat = np.empty(spec.n_params)
    gain = 0.75
    for w, b in _layer_views(spec, flat):
        fan_in = w.shape[0]
        bound = gain * np.sqrt(3.0 / fan_in)
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-1 / np.sqrt(fan_in), 1 / np.sqrt(fan_in), size=b.shape)
    zeros = np.zeros_like(flat)
    return FlowModel(spec, flat, AdamState(zeros.copy(), zeros.copy(), 0))


def from_parameters(spec: MlpSpec, parameters) -> FlowModel:
    parameters = np.array(parameters, dtype=np.float64)
    zeros = np.zeros_like(parameters)
    return FlowModel(spec, parameters, AdamState(zeros.copy(), zeros.copy(), 0))


def selu(x):
    return _selu_kernel.selu(x)


def stack_inputs(t, x, c):
    """Concatenate ``[t, x, c]`` row-wise; ``t`` may be a scalar or a column."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    c = np.asarray(c, dtype=np.float64).reshape(n, -1) if np.size(c) else np.zeros((n, 0))
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (n, 1))
    return np.concatenate([t, x, c], axis=1)


def forward_batch(model: FlowModel, inputs):
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.spec.input_dim:
        raise InputShapeError(
            f"expected inputs of shape (N, {model.spec.input_dim}), got {inputs.shape}"
        )
    h = inputs
    last = len(model.layers) - 1
    for k, (w, b) in enumerate(model.layers):
        h = h @ w + b
        if k != last:
            h = _selu_kernel.selu(h)
    return h


def forward(model: FlowModel, t, x, c_raw=()):
    """Evaluate the field at a single point ``(t, x | c)``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    c_raw = np.asarray(c_raw, dtype=np.float64).ravel()
    if x.size + c_raw.size + 1 != model.spec.input_dim:
        raise InputShapeError(
            f"len(x)+len(c)+1 = {x.size + c_raw.size + 1} != input_dim {model.spec.input_dim}"
        )
    if model.spec.output_dim != x.size:
        raise InputShapeError(f"output_dim {model.spec.output_dim} != len(x) {x.size}")
    row = np.concatenate([[float(t)], x, c_raw])[None, :]
    return forward_batch(model, row)[0]


def loss_and_grad(model: FlowModel, inputs, targets):
    """Mean over rows of the squared error and its gradient w.r.t. the flat parameters."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("batch must be a non-empty 2-D array")
    if targets.shape != (inputs.shape[0], model.spec.output_dim):
        raise InputShapeError(
            f"targets shape {targets.shape} != ({inputs.shape[0]}, {model.spec.output_dim})"
        )
    if inputs.shape[1] != model.spec.input_dim:
        raise InputShapeError(f"inputs have {inputs.shape[1]} columns, expected {model.spec.input_dim}")
    if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
        raise ValueError("non-finite values in batch")

    n = inputs.shape[0]
    layers = model.layers
    last = len(layers) - 1
    acts = [inputs]
    ders = []
    h = inputs
    for k, (w, b) in enumerate(layers):
        z = h @ w + b
        if k != last:
            h, d = _selu_kernel.selu_pair(z)
            ders.append(d)
        else:
            h = z
        acts.append(h)

    resid = h - targets
    loss = float(np.einsum("ij,ij->", resid, resid)) / n

    grad = np.empty_like(model.parameters)
    gviews = _layer_views(model.spec, grad)
    delta = (2.0 / n) * resid
    for k in range(last, -1, -1):
        gw, gb = gviews[k]
        np.dot(acts[k].T, delta, out=gw)
        delta.sum(axis=0, out=gb)
        if k > 0:
            delta = (delta @ layers[k][0].T) * ders[k - 1]
    return loss, grad


def adam_step(model: FlowModel, grad, cfg: OptimizerConfig) -> FlowModel:
    """Bias-corrected Adam, applied in place; returns ``model`` for chaining."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.parameters.shape:
        raise ValueError(f"grad shape {grad.shape} != parameter shape {model.parameters.shape}")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    st = model.adam_state
    st.step += 1
    st.m *= cfg.beta1
    st.m += (1 - cfg.beta1) * grad
    st.v *= cfg.beta2
    st.v += (1 - cfg.beta2) * grad * grad
    m_hat = st.m / (1 - cfg.beta1 ** st.step)
    v_hat = st.v / (1 - cfg.beta2 ** st.step)
    model.parameters -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return model
