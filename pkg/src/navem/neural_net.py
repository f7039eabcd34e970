"""Minimal dense feed-forward network with hand-rolled training machinery.

Float64 throughout: the boundary-trace losses have to reach ~1e-10 and the
quasi-Newton phase would stall in single precision. Forward/backward are
batched over samples; all reductions happen in fixed order so training is
bit-reproducible for fixed seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingDivergenceError

__all__ = [
    "AdamState",
    "BfgsResult",
    "Mlp",
    "adam_step",
    "bfgs_minimize",
    "init_glorot",
]


@dataclass
class Mlp:
    """Fully-connected network: tanh hidden layers, affine output layer.

    ``weights[n]`` has shape ``(sizes[n+1], sizes[n])``; biases match the
    output side. ``z_{n} = tanh(A_n z_{n-1} + b_n)`` for hidden layers and
    the last layer drops the nonlinearity.
    """

    layer_sizes: list
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output layer")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        for n, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[n + 1], self.layer_sizes[n])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(f"layer {n}: weight shape {w.shape} != {expected}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass; input ``(batch, N0)`` or ``(N0,)``."""
        out, _ = self.forward_cached(np.atleast_2d(x))
        return out if np.ndim(x) > 1 else out[0]

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer activations for backprop."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input width {a.shape[1]} != layer size {self.layer_sizes[0]}"
            )
        activations = [a]
        for n in range(self.n_layers - 1):
            a = np.tanh(a @ self.weights[n].T + self.biases[n])
            activations.append(a)
        out = a @ self.weights[-1].T + self.biases[-1]
        return out, activations

    def backprop(self, activations, grad_output: np.ndarray):
        """Gradients of ``sum(grad_output * output)`` w.r.t. parameters.

        Returns ``(weight_grads, bias_grads, input_grad)`` summed over the
        batch (parameters) and per-sample (input).
        """
        if len(activations) != self.n_layers:
            raise ValueError("activation cache does not match the architecture")
        delta = np.atleast_2d(np.asarray(grad_output, dtype=float))
        weight_grads = [None] * self.n_layers
        bias_grads = [None] * self.n_layers
        for n in range(self.n_layers - 1, -1, -1):
            weight_grads[n] = delta.T @ activations[n]
            bias_grads[n] = delta.sum(axis=0)
            delta = delta @ self.weights[n]
            if n > 0:
                delta = delta * (1.0 - activations[n] ** 2)
        return weight_grads, bias_grads, delta

    def flatten(self) -> np.ndarray:
        """Parameters as one vector, layer order, weights before biases."""
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b)
        return np.concatenate(chunks)

    def set_flat(self, vector: np.ndarray):
        vector = np.asarray(vector, dtype=float)
        if vector.size != self.n_parameters:
            raise ValueError(f"expected {self.n_parameters} parameters, got {vector.size}")
        pos = 0
        for n, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[n] = vector[pos : pos + w.size].reshape(w.shape)
            pos += w.size
            self.biases[n] = vector[pos : pos + b.size].copy()
            pos += b.size

    def flatten_like(self, weight_grads, bias_grads) -> np.ndarray:
        chunks = []
        for w, b in zip(weight_grads, bias_grads):
            chunks.append(np.asarray(w).ravel())
            chunks.append(np.asarray(b).ravel())
        return np.concatenate(chunks)

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def init_glorot(layer_sizes, seed=0) -> Mlp:
    """Glorot-normal weights (variance ``2 / (fan_in + fan_out)``), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = math.sqrt(2.0 / (n_in + n_out))
        weights.append(rng.normal(0.0, std, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Mlp(list(layer_sizes), weights, biases)


@dataclass
class AdamState:
    """Bias-corrected Adam with an exponentially decaying learning rate:
    ``lr(t) = lr0 * decay**(t / decay_every)``."""

    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.97
    decay_every: float = 100.0
    step: int = 0
    m: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One Adam update; mutates ``state`` and returns the new parameters."""
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError("non-finite gradient in Adam step")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step += 1
    t = state.step
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad**2
    m_hat = state.m / (1 - state.beta1**t)
    v_hat = state.v / (1 - state.beta2**t)
    lr = state.lr0 * state.decay ** ((t - 1) / state.decay_every)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad_inf_norm: float
    n_iterations: int
    status: str
    history: list = field(default_factory=list, repr=False)


class _DenseInverseHessian:
    def __init__(self, n):
        self.h_inv = np.eye(n)

    def direction(self, g):
        return -self.h_inv @ g

    def reset(self):
        self.h_inv = np.eye(len(self.h_inv))

    def update(self, s, y, rho):
        hy = self.h_inv @ y
        # BFGS inverse update, written to keep symmetry exactly
        self.h_inv -= rho * (np.outer(s, hy) + np.outer(hy, s))
        self.h_inv += rho * (1.0 + rho * (y @ hy)) * np.outer(s, s)


class _LimitedMemoryInverseHessian:
    """Two-loop recursion with the usual ``(s.y / y.y)`` initial scaling."""

    def __init__(self, memory):
        self.memory = memory
        self.pairs = []

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            alpha = rho * (s @ q)
            q -= alpha * y
            alphas.append(alpha)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), alpha in zip(self.pairs, reversed(alphas)):
            beta = rho * (y @ q)
            q += (alpha - beta) * s
        return -q

    def reset(self):
        self.pairs.clear()

    def update(self, s, y, rho):
        self.pairs.append((s, y, rho))
        if len(self.pairs) > self.memory:
            self.pairs.pop(0)


def bfgs_minimize(
    loss_fn,
    grad_fn,
    x0: np.ndarray,
    max_iter: int = 10_000,
    grad_tol: float = 1e-8,
    rel_loss_tol: float = 1e-12,
    record_every: int = 0,
    memory: int | None = None,
) -> BfgsResult:
    """BFGS with a strong-Wolfe line search.

    Stops when the max-norm of the gradient drops below ``grad_tol``, when
    the relative loss decrease falls below ``rel_loss_tol``, or when the
    iteration budget runs out. The inverse-Hessian update is skipped (and
    therefore stays symmetric positive definite) whenever the curvature
    ``s . y`` is not safely positive.

    ``memory=None`` keeps the dense inverse Hessian; an integer switches to
    the limited-memory two-loop recursion, which is the right choice once
    the dense update dominates the per-iteration cost (a few thousand
    parameters is already enough on desktop hardware).
    """
    x = np.asarray(x0, dtype=float).copy()
    f = loss_fn(x)
    g = grad_fn(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise TrainingDivergenceError("non-finite loss or gradient at the BFGS start")
    hessian = (
        _DenseInverseHessian(x.size)
        if memory is None
        else _LimitedMemoryInverseHessian(memory)
    )
    history = []
    status = "budget-exhausted"

    for it in range(max_iter):
        g_norm = float(np.max(np.abs(g)))
        if record_every and it % record_every == 0:
            history.append((it, f, g_norm))
        if g_norm < grad_tol:
            status = "gradient-converged"
            break

        direction = hessian.direction(g)
        if direction @ g >= 0:
            # safeguard: reset to steepest descent if curvature went bad
            hessian.reset()
            direction = -g

        step, f_new, g_new = _wolfe_line_search(loss_fn, grad_fn, x, f, g, direction)
        if step is None:
            status = "line-search-failed"
            break
        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            raise TrainingDivergenceError(
                f"non-finite loss/gradient at BFGS iteration {it}"
            )

        s = step * direction
        y = g_new - g
        rel_drop = abs(f - f_new) / max(abs(f), 1e-300)
        x = x + s
        f, g = f_new, g_new
        if rel_drop < rel_loss_tol:
            status = "loss-stalled"
            break

        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            hessian.update(s, y, 1.0 / sy)
    else:
        it = max_iter

    return BfgsResult(x, f, float(np.max(np.abs(g))), it, status, history)


def _wolfe_line_search(
    loss_fn, grad_fn, x, f0, g0, direction, c1=1e-4, c2=0.9, max_steps=40
):
    """Strong-Wolfe bracketing line search (textbook bracket/zoom scheme)."""
    slope0 = float(g0 @ direction)
    if slope0 >= 0:
        return None, None, None

    def phi(alpha):
        f = loss_fn(x + alpha * direction)
        g = grad_fn(x + alpha * direction)
        return f, g, float(g @ direction)

    alpha_prev, f_prev = 0.0, f0
    alpha = 1.0
    f_a, g_a, slope_a = None, None, None
    for i in range(max_steps):
        f_a, g_a, slope_a = phi(alpha)
        if (not np.isfinite(f_a)) or f_a > f0 + c1 * alpha * slope0 or (
            i > 0 and f_a >= f_prev
        ):
            return _zoom(
                phi, alpha_prev, f_prev, alpha, f0, slope0, c1, c2, direction
            )
        if abs(slope_a) <= -c2 * slope0:
            return alpha, f_a, g_a
        if slope_a >= 0:
            return _zoom(phi, alpha, f_a, alpha_prev, f0, slope0, c1, c2, direction)
        alpha_prev, f_prev = alpha, f_a
        alpha *= 2.0
    return None, None, None


def _zoom(phi, alpha_lo, f_lo, alpha_hi, f0, slope0, c1, c2, direction, max_steps=50):
    f_a, g_a = None, None
    for _ in range(max_steps):
        alpha = 0.5 * (alpha_lo + alpha_hi)
        f_a, g_a, slope_a = phi(alpha)
        if (not np.isfinite(f_a)) or f_a > f0 + c1 * alpha * slope0 or f_a >= f_lo:
            alpha_hi = alpha
        else:
            if abs(slope_a) <= -c2 * slope0:
                return alpha, f_a, g_a
            if slope_a * (alpha_hi - alpha_lo) >= 0:
                alpha_hi = alpha_lo
            alpha_lo, f_lo = alpha, f_a
        if abs(alpha_hi - alpha_lo) < 1e-16 * max(1.0, abs(alpha_lo)):
            break
    # accept the best sufficient-decrease point even without curvature
    if f_a is not None and np.isfinite(f_a) and f_a < f0:
        return alpha, f_a, g_a
    return None, None, None
