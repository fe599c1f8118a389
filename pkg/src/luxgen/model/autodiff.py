"""Minimal reverse-mode autodiff over numpy arrays.

Just the ops the encoder-decoder needs. Every op records a closure that
accumulates vector-Jacobian products into its parents; ``backward`` walks
the graph in reverse topological order. Ops preserve the dtype of their
inputs, so the same graph runs in float32 for training and float64 for the
finite-difference harness.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    grad = np.asarray(grad, dtype=t.data.dtype)
    if t.grad is None:
        # Copy: incoming grads can be views into buffers owned by other ops.
        t.grad = grad.copy() if grad.shape == t.data.shape else np.broadcast_to(grad, t.data.shape).copy()
    else:
        t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root."""
    if root.data.size != 1:
        raise ValueError("backward expects a scalar root")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        # Nodes off every gradient-carrying path keep grad None (e.g. when an
        # all-masked loss contributes nothing); their closures are skipped.
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# -- arithmetic ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _from_op(data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _from_op(data, (a, b), back)


def add_const(a: Tensor, const: np.ndarray) -> Tensor:
    data = a.data + const

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))

    return _from_op(data, (a,), back)


def scale(a: Tensor, factor: float) -> Tensor:
    data = a.data * factor

    def back(g):
        _accumulate(a, g * factor)

    return _from_op(data, (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = np.matmul(a.data, b.data)

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.data.shape))
        if b.requires_grad:
            if b.data.ndim == 2 and g.ndim > 2:
                # Weight matrix under a batched activation: one flat GEMM
                # instead of a batched product plus reduction.
                cols = b.data.shape[0]
                grad_b = a.data.reshape(-1, cols).T @ g.reshape(-1, g.shape[-1])
                _accumulate(b, grad_b)
            else:
                _accumulate(b, _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.data.shape))

    return _from_op(data, (a, b), back)


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    data = a.data * keep

    def back(g):
        _accumulate(a, g * keep)

    return _from_op(data, (a,), back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def back(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _from_op(data, (a,), back)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def back(g):
        _accumulate(a, g.transpose(inverse))

    return _from_op(data, (a,), back)


# -- neural-net ops -----------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    data = table.data[ids]

    def back(g):
        grad_table = np.zeros_like(table.data)
        np.add.at(grad_table, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        _accumulate(table, grad_table)

    return _from_op(data, (table,), back)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    data = exp / exp.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, data * (g - inner))

    return _from_op(data, (a,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = gain.data * xhat + bias.data

    def back(g):
        _accumulate(gain, _unbroadcast(g * xhat, gain.data.shape))
        _accumulate(bias, _unbroadcast(g, bias.data.shape))
        gx = g * gain.data
        mean_g = gx.mean(axis=-1, keepdims=True)
        mean_gx = (gx * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (gx - mean_g - xhat * mean_gx))

    return _from_op(data, (x, gain, bias), back)


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean token-level cross-entropy over positions where mask is true.

    An all-false mask yields loss 0 with zero gradients.
    """
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=bool)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    denom = int(mask.sum())
    if denom == 0:
        return _from_op(np.zeros((), dtype=logits.data.dtype), (logits,), lambda g: None)
    data = -(picked * mask).sum() / denom

    def back(g):
        probs = np.exp(logp)
        grad = probs.copy()
        np.subtract.at(
            grad.reshape(-1, grad.shape[-1]),
            (np.arange(targets.size), targets.reshape(-1)),
            1.0,
        )
        grad *= mask[..., None] * (float(g) / denom)
        _accumulate(logits, grad)

    return _from_op(np.asarray(data, dtype=logits.data.dtype), (logits,), back)
