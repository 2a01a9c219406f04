"""
Differentiation Core - Reverse-mode automatic differentiation over dense tensors
Tape-recorded primitives, stop-gradient and Adam with decoupled weight decay
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, softmax as _softmax

from errors import GradientError, NumericalError, ShapeError

DEFAULT_LEAKY_SLOPE = 0.2


class Tensor:
    """
    Dense float64 array with an optional gradient buffer.

    Leaves are created by users; every other tensor is the output of a
    primitive and remembers its inputs and local gradient rule, so that
    backward() can rebuild the tape from any scalar root.
    """

    __slots__ = ("values", "grad", "requires_grad", "name", "_inputs", "_rule", "_op")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.array(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._inputs = ()
        self._rule = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    @property
    def ndim(self):
        return self.values.ndim

    def item(self):
        if self.values.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.values.reshape(()))

    def numpy(self):
        return self.values.copy()

    def detach(self):
        return stop_gradient(self)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op!r}{label}, requires_grad={self.requires_grad})"

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


@dataclass
class TapeEntry:
    """One recorded primitive: inputs, output and local gradient rule."""
    op: str
    inputs: tuple
    output: Tensor
    rule: Callable


@dataclass
class Tape:
    """Primitives reachable from a root, in topological order."""
    entries: list = field(default_factory=list)

    @classmethod
    def record(cls, root):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._inputs:
                if id(parent) not in visited:
                    stack.append((parent, False))

        return cls([TapeEntry(node._op, node._inputs, node, node._rule)
                    for node in order if node._rule is not None])

    def leaves(self):
        seen = {}
        for entry in self.entries:
            for tensor in entry.inputs:
                if tensor._rule is None and tensor.requires_grad:
                    seen[id(tensor)] = tensor
        return list(seen.values())


def as_tensor(x):
    """Wrap arrays and scalars as constant tensors; tensors pass through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op, values, inputs, rule):
    out = Tensor.__new__(Tensor)
    out.values = np.asarray(values, dtype=np.float64)
    out.grad = None
    out.name = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad:
        out._inputs = tuple(inputs)
        out._rule = rule
    else:
        out._inputs = ()
        out._rule = None
    out._op = op
    return out


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _expand(grad, shape, axis, keepdims):
    """Undo a reduction so a reduced gradient broadcasts over the input."""
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


# ----------------------------------------------------------------------------
# Elementwise primitives
# ----------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _result("add", a.values + b.values, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _result("sub", a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _result("mul", a.values * b.values, (a, b),
                   lambda g: (g * b.values, g * a.values))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    return _result("div", a.values / b.values, (a, b),
                   lambda g: (g / b.values, -g * a.values / (b.values * b.values)))


def neg(x):
    x = as_tensor(x)
    return _result("neg", -x.values, (x,), lambda g: (-g,))


def scale(x, factor):
    """Multiply by a python scalar."""
    x = as_tensor(x)
    factor = float(factor)
    return _result("scale", x.values * factor, (x,), lambda g: (g * factor,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.values)
    return _result("exp", out, (x,), lambda g: (g * out,))


def softplus(x):
    """log(1 + e^x), computed stably."""
    x = as_tensor(x)
    return _result("softplus", np.logaddexp(0.0, x.values), (x,),
                   lambda g: (g * expit(x.values),))


def leaky_relu(x, slope=DEFAULT_LEAKY_SLOPE):
    x = as_tensor(x)
    positive = x.values > 0
    return _result("leaky_relu", np.where(positive, x.values, slope * x.values), (x,),
                   lambda g: (g * np.where(positive, 1.0, slope),))


# ----------------------------------------------------------------------------
# Linear algebra and shape primitives
# ----------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return _result("matmul", a.values @ b.values, (a, b),
                   lambda g: (g @ b.values.T, a.values.T @ g))


def reshape(x, shape):
    x = as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}")
    return _result("reshape", x.values.reshape(shape), (x,),
                   lambda g: (g.reshape(x.shape),))


def take_rows(x, index):
    """Gather rows x[index]; repeated rows accumulate their gradients."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    if x.ndim != 2:
        raise ShapeError(f"take_rows: expected a matrix, got shape {x.shape}")

    def rule(g):
        scattered = np.zeros_like(x.values)
        np.add.at(scattered, index, g)
        return (scattered,)

    return _result("take_rows", x.values[index], (x,), rule)


# ----------------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------------

def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    return _result("sum", x.values.sum(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (_expand(g, x.shape, axis, keepdims),))


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return _result("mean", x.values.mean(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (_expand(g, x.shape, axis, keepdims) / count,))


def sum_squares(x, axis=None, keepdims=False):
    """Squared L2 norm, over all entries or along one axis."""
    x = as_tensor(x)
    return _result("sum_squares", (x.values * x.values).sum(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (2.0 * x.values * _expand(g, x.shape, axis, keepdims),))


def l1_norm(x, axis=None, keepdims=False):
    x = as_tensor(x)
    return _result("l1_norm", np.abs(x.values).sum(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (np.sign(x.values) * _expand(g, x.shape, axis, keepdims),))


def cosine(a, b):
    """Cosine of the angle between a and b along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim == 0:
        raise ShapeError(f"cosine: incompatible shapes {a.shape} and {b.shape}")

    norm_a = np.linalg.norm(a.values, axis=-1, keepdims=True)
    norm_b = np.linalg.norm(b.values, axis=-1, keepdims=True)
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise NumericalError("cosine: angle undefined for a zero-length vector")

    dot = (a.values * b.values).sum(axis=-1, keepdims=True)
    cos = dot / (norm_a * norm_b)

    def rule(g):
        g = np.asarray(g)[..., None]
        grad_a = g * (b.values / (norm_a * norm_b) - cos * a.values / (norm_a * norm_a))
        grad_b = g * (a.values / (norm_a * norm_b) - cos * b.values / (norm_b * norm_b))
        return grad_a, grad_b

    return _result("cosine", cos[..., 0], (a, b), rule)


def softmax(x, axis=-1):
    x = as_tensor(x)
    out = _softmax(x.values, axis=axis)

    def rule(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result("softmax", out, (x,), rule)


def stop_gradient(x):
    """Identity in the forward pass; contributes no gradient to x."""
    x = as_tensor(x)
    out = _result("stop_gradient", x.values, (), None)
    return out


# ----------------------------------------------------------------------------
# Backward pass
# ----------------------------------------------------------------------------

def _accumulate(tensor, grad):
    grad = _unbroadcast(np.asarray(grad, dtype=np.float64), tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.values)
    tensor.grad = tensor.grad + grad


def backward(root):
    """
    Populate .grad of every requires_grad tensor reachable from root with
    d(root)/d(tensor). Leaf gradients accumulate across calls.
    """
    if root.values.size != 1:
        raise GradientError(f"backward: root must be a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return

    tape = Tape.record(root)
    for leaf in tape.leaves():
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.values)
    for entry in tape.entries:
        entry.output.grad = np.zeros_like(entry.output.values)

    root.grad = np.ones_like(root.values)
    for entry in reversed(tape.entries):
        grads = entry.rule(entry.output.grad)
        for tensor, grad in zip(entry.inputs, grads):
            if tensor.requires_grad and grad is not None:
                _accumulate(tensor, grad)


def numerical_gradient(fn, tensor, h=1e-4):
    """
    Central-difference gradient of the scalar fn() with respect to tensor.
    fn must rebuild its graph from tensor.values on every call.
    """
    original = tensor.values
    grad = np.zeros_like(original)
    for index in np.ndindex(original.shape):
        shifted = original.copy()
        shifted[index] += h
        tensor.values = shifted
        upper = fn().item()
        shifted = original.copy()
        shifted[index] -= h
        tensor.values = shifted
        lower = fn().item()
        grad[index] = (upper - lower) / (2.0 * h)
    tensor.values = original
    return grad


# ----------------------------------------------------------------------------
# Optimizer
# ----------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moments and hyperparameters; weight decay is decoupled."""
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState):
    """Apply one bias-corrected Adam update to params, then clear their grads."""
    for position, param in enumerate(params):
        if param.grad is None:
            label = param.name or f"param[{position}]"
            raise GradientError(f"adam_step: parameter {label} has no gradient")

    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    elif len(state.m) != len(params):
        raise GradientError(
            f"adam_step: optimizer tracks {len(state.m)} parameters, got {len(params)}")

    state.step_count += 1
    correction1 = 1.0 - state.beta1 ** state.step_count
    correction2 = 1.0 - state.beta2 ** state.step_count

    for param, m, v in zip(params, state.m, state.v):
        g = param.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)

        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.values = param.values - state.lr * update - state.lr * state.weight_decay * param.values
        param.grad = None
