"""
Dense feedforward networks with hand-written backpropagation and Adam.

Layers compute ``a @ W + b`` with W shaped (fan_in, fan_out); hidden layers use
ReLU and the output layer is Tanh or Linear. Everything is float64.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from app.errors import ContractViolation, NumericalError


# Largest double strictly below 1.0; saturated tanh outputs are pulled back to it.
_TANH_BOUND = float(np.nextafter(1.0, 0.0))


class OutputActivation(str, enum.Enum):
    TANH = "tanh"
    LINEAR = "linear"


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...]
    output_dim: int
    output_activation: OutputActivation = OutputActivation.LINEAR

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if not self.hidden_dims:
            raise ContractViolation("MlpSpec needs at least one hidden layer.")
        if min((self.input_dim, self.output_dim) + self.hidden_dims) < 1:
            raise ContractViolation(f"All layer widths must be >= 1, got {self.layer_dims}.")
        object.__setattr__(self, "output_activation", OutputActivation(self.output_activation))

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return len(self.layer_dims) - 1

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in zip(dims[:-1], dims[1:]))


@dataclass
class MlpParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> List[np.ndarray]:
        """Weights then biases, in layer order. Adam state is laid out the same way."""
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def check_shapes(self, spec: MlpSpec) -> None:
        dims = spec.layer_dims
        expected_w = [(i, o) for i, o in zip(dims[:-1], dims[1:])]
        got_w = [w.shape for w in self.weights]
        got_b = [b.shape for b in self.biases]
        if got_w != expected_w or got_b != [(o,) for _, o in expected_w]:
            raise ContractViolation(
                f"Parameter shapes {got_w} / {got_b} do not match layer sizes {dims}."
            )


@dataclass
class ForwardTrace:
    # activations[0] is the input batch; activations[l+1] is the output of layer l.
    activations: List[np.ndarray]
    pre_activations: List[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 1e-3, **hyper: float) -> "AdamState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], lr=lr, **hyper)


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """He scaling for ReLU layers, Xavier-style sqrt(1/fan_in) for the output layer, zero biases."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    weights: List[np.ndarray] = []
    biases: List[np.ndarray] = []
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        is_output = layer == spec.depth - 1
        std = np.sqrt((1.0 if is_output else 2.0) / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(spec: MlpSpec, batch_inputs: np.ndarray) -> np.ndarray:
    x = np.asarray(batch_inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ContractViolation(
            f"Expected inputs of shape (batch, {spec.input_dim}), got {np.shape(batch_inputs)}."
        )
    return x


def forward(spec: MlpSpec, params: MlpParams, batch_inputs: np.ndarray) -> Tuple[np.ndarray, ForwardTrace]:
    a = _as_batch(spec, batch_inputs)
    activations = [a]
    pre_activations: List[np.ndarray] = []
    last = spec.depth - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre_activations.append(z)
        if layer < last:
            a = np.maximum(z, 0.0)
        elif spec.output_activation is OutputActivation.TANH:
            a = np.clip(np.tanh(z), -_TANH_BOUND, _TANH_BOUND)
        else:
            a = z
        activations.append(a)
    return a, ForwardTrace(activations, pre_activations)


def backward(
    spec: MlpSpec,
    params: MlpParams,
    trace: ForwardTrace,
    output_grads: np.ndarray,
) -> Tuple[MlpParams, np.ndarray]:
    """
    Gradients of L = sum(outputs * output_grads) with respect to every parameter
    and to the inputs. ReLU'(0) is taken as 0.
    """
    if len(trace.pre_activations) != spec.depth:
        raise ContractViolation("Trace depth does not match the network spec.")
    outputs = trace.activations[-1]
    delta = np.asarray(output_grads, dtype=np.float64)
    if delta.shape != outputs.shape:
        raise ContractViolation(f"output_grads shape {delta.shape} != outputs shape {outputs.shape}.")

    if spec.output_activation is OutputActivation.TANH:
        delta = delta * (1.0 - outputs**2)

    grad_w: List[np.ndarray] = [np.empty(0)] * spec.depth
    grad_b: List[np.ndarray] = [np.empty(0)] * spec.depth
    for layer in range(spec.depth - 1, -1, -1):
        grad_w[layer] = trace.activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer].T
        if layer > 0:
            delta = delta * (trace.pre_activations[layer - 1] > 0.0)
    return MlpParams(grad_w, grad_b), delta


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam step, applied in place. Non-finite grads leave everything untouched."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if [p.shape for p in p_arrays] != [g.shape for g in g_arrays] or len(state.m) != len(p_arrays):
        raise ContractViolation("Gradient / optimizer state shapes do not match the parameters.")
    if not grads.all_finite():
        raise NumericalError("Refusing Adam step on non-finite gradients.")

    state.t += 1
    bias1 = 1.0 - state.beta1**state.t
    bias2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params, state


def concat_columns(*blocks: Sequence[float] | np.ndarray) -> np.ndarray:
    """Stack 1-D or 2-D blocks side by side into one (batch, features) matrix."""
    cols = [np.asarray(b, dtype=np.float64) for b in blocks]
    cols = [c.reshape(-1, 1) if c.ndim == 1 else c for c in cols]
    return np.hstack(cols)
