"""Feed-forward alignment heads with reverse-mode gradients and Adam, no ML framework."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class DivergenceError(RuntimeError):
    """Training produced a non-finite quantity."""


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)


@dataclass(frozen=True)
class AlignmentHead:
    """Parameters of one alignment function.

    The standard architecture (built by init_head) is input -> two hidden
    layers of width in_dim with rectified-linear activations -> linear
    output of width out_dim. forward/backward work for any layer chain
    whose shapes are consistent.
    """

    layers: tuple[Layer, ...]
    in_dim: int
    out_dim: int


def init_head(in_dim: int, out_dim: int, seed: int) -> AlignmentHead:
    """Deterministically initialize a two-hidden-layer head.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)); biases are zero.
    """
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"dimensions must be positive, got in={in_dim} out={out_dim}")
    rng = np.random.default_rng(seed)
    shapes = [(in_dim, in_dim), (in_dim, in_dim), (in_dim, out_dim)]
    layers = []
    for fan_in, fan_out in shapes:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(Layer(weights, np.zeros(fan_out)))
    return AlignmentHead(tuple(layers), in_dim, out_dim)


def forward(head: AlignmentHead, x: np.ndarray) -> np.ndarray:
    """Apply the head to a vector or to a matrix of row vectors."""
    a = np.asarray(x, dtype=np.float64)
    if a.shape[-1] != head.in_dim:
        raise ValueError(f"input dimension {a.shape[-1]} != head in_dim {head.in_dim}")
    for layer in head.layers[:-1]:
        a = np.maximum(a @ layer.weights + layer.bias, 0.0)
    last = head.layers[-1]
    return a @ last.weights + last.bias


def backward(
    head: AlignmentHead, x: np.ndarray, grad_output: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Gradients of <grad_output, forward(head, x)> w.r.t. parameters and input.

    Accepts a single vector or row-stacked batches; batched rows contribute
    additively to the parameter gradients. Returns (per-layer (dW, db)
    pairs, gradient w.r.t. x with the same shape as x).
    """
    x_arr = np.asarray(x, dtype=np.float64)
    g_arr = np.asarray(grad_output, dtype=np.float64)
    single = x_arr.ndim == 1
    x2 = np.atleast_2d(x_arr)
    g2 = np.atleast_2d(g_arr)
    if x2.shape[1] != head.in_dim:
        raise ValueError(f"input dimension {x2.shape[1]} != head in_dim {head.in_dim}")
    if g2.shape != (x2.shape[0], head.out_dim):
        raise ValueError(
            f"grad_output shape {g_arr.shape} inconsistent with "
            f"{x2.shape[0]} inputs and out_dim {head.out_dim}"
        )
    n_layers = len(head.layers)
    activations = [x2]
    pre_acts = []
    a = x2
    for i, layer in enumerate(head.layers):
        z = a @ layer.weights + layer.bias
        pre_acts.append(z)
        a = z if i == n_layers - 1 else np.maximum(z, 0.0)
        activations.append(a)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * n_layers  # type: ignore[list-item]
    delta = g2
    for i in range(n_layers - 1, -1, -1):
        grads[i] = (activations[i].T @ delta, delta.sum(axis=0))
        delta = delta @ head.layers[i].weights.T
        if i > 0:
            delta = delta * (pre_acts[i - 1] > 0.0)
    grad_input = delta[0] if single else delta
    return grads, grad_input


@dataclass(frozen=True)
class AdamState:
    """Adam accumulators shaped like the head parameters, plus hyperparameters."""

    first_moment: tuple[tuple[np.ndarray, np.ndarray], ...]
    second_moment: tuple[tuple[np.ndarray, np.ndarray], ...]
    step: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(
    head: AlignmentHead,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    zeros = tuple(
        (np.zeros_like(layer.weights), np.zeros_like(layer.bias)) for layer in head.layers
    )
    zeros2 = tuple(
        (np.zeros_like(layer.weights), np.zeros_like(layer.bias)) for layer in head.layers
    )
    return AdamState(zeros, zeros2, 0, learning_rate, beta1, beta2, eps)


def adam_step(
    head: AlignmentHead,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
) -> tuple[AlignmentHead, AdamState]:
    """One bias-corrected Adam update. Returns the new head and state."""
    if len(grads) != len(head.layers):
        raise ValueError(f"got {len(grads)} gradient pairs for {len(head.layers)} layers")
    t = state.step + 1
    new_layers = []
    new_m = []
    new_v = []
    for layer, (g_w, g_b), (m_w, m_b), (v_w, v_b) in zip(
        head.layers, grads, state.first_moment, state.second_moment
    ):
        if g_w.shape != layer.weights.shape or g_b.shape != layer.bias.shape:
            raise ValueError(
                f"gradient shapes {g_w.shape}/{g_b.shape} do not match "
                f"parameter shapes {layer.weights.shape}/{layer.bias.shape}"
            )
        updated = []
        moments = []
        for param, grad, m, v in ((layer.weights, g_w, m_w, v_w), (layer.bias, g_b, m_b, v_b)):
            m_new = state.beta1 * m + (1.0 - state.beta1) * grad
            v_new = state.beta2 * v + (1.0 - state.beta2) * grad * grad
            m_hat = m_new / (1.0 - state.beta1**t)
            v_hat = v_new / (1.0 - state.beta2**t)
            updated.append(param - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps))
            moments.append((m_new, v_new))
        new_layers.append(Layer(updated[0], updated[1]))
        new_m.append((moments[0][0], moments[1][0]))
        new_v.append((moments[0][1], moments[1][1]))
    new_head = AlignmentHead(tuple(new_layers), head.in_dim, head.out_dim)
    new_state = replace(state, first_moment=tuple(new_m), second_moment=tuple(new_v), step=t)
    return new_head, new_state
