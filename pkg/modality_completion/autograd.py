"""
Reverse-mode differentiation over numpy arrays.

A ``Tensor`` holds a float64 array and, when it was produced by a ``Function``,
the context needed to push gradients back to its parents. ``Tensor.backward``
orders the graph topologically (iteratively, so long recurrences do not hit the
recursion limit) and accumulates ``.grad`` on every tensor that requires it.

Model parameters live in dataclasses whose array fields are enumerated with
``named_arrays`` and rebuilt with ``map_arrays``; the forward code of the
pipeline is written once against ``Tensor`` and reused for plain inference by
wrapping the arrays as constants.
"""

import dataclasses

import numpy as np
from scipy.special import expit, softmax

from .errors import ShapeError, shape_mismatch


class Tensor:
    __slots__ = ('value', 'grad', 'requires_grad', '_ctx')

    def __init__(self, value, requires_grad=False, ctx=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._ctx = ctx

    def __repr__(self):
        return f'Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})'

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return Add.apply(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return Scale.apply(self, factor=float(other))
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return Scale.apply(self, factor=-1.0)

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def __getitem__(self, key):
        return Slice.apply(self, key=key)

    @property
    def T(self):
        return Transpose.apply(self)

    def sigmoid(self):
        return Sigmoid.apply(self)

    def tanh(self):
        return Tanh.apply(self)

    def relu(self):
        return Relu.apply(self)

    def log(self):
        return Log.apply(self)

    def square(self):
        return Mul.apply(self, self)

    def sum(self):
        return Sum.apply(self)

    def mean(self):
        return Scale.apply(Sum.apply(self), factor=1.0 / max(self.value.size, 1))

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ShapeError(f'backward needs an explicit gradient for shape {self.value.shape}')
            grad = np.ones_like(self.value)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in seen:
                        stack.append((parent, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._ctx is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._ctx.parents, node._ctx.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    def __init__(self, *parents):
        self.parents = parents

    @classmethod
    def apply(cls, *args, **kwargs):
        parents = tuple(as_tensor(a) for a in args)
        fn = cls(*parents)
        value = fn.forward(*[p.value for p in parents], **kwargs)
        requires_grad = any(p.requires_grad for p in parents)
        return Tensor(value, requires_grad, fn if requires_grad else None)

    def forward(self, *values, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Add(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.shapes[0]), -unbroadcast(grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a.shape), unbroadcast(grad * self.a, self.b.shape)


class Scale(Function):
    def forward(self, a, factor):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise shape_mismatch('matmul', a.shape, b.shape)
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Transpose(Function):
    def forward(self, a):
        return a.T

    def backward(self, grad):
        return (grad.T,)


class Slice(Function):
    def forward(self, a, key):
        self.shape, self.key = a.shape, key
        return a[key]

    def backward(self, grad):
        out = np.zeros(self.shape)
        out[self.key] += grad
        return (out,)


class Sum(Function):
    def forward(self, a):
        self.shape = a.shape
        return np.array(a.sum())

    def backward(self, grad):
        return (np.full(self.shape, float(grad)),)


class Sigmoid(Function):
    def forward(self, a):
        self.out = expit(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Relu(Function):
    def forward(self, a):
        self.positive = a > 0
        return np.where(self.positive, a, 0.0)

    def backward(self, grad):
        return (grad * self.positive,)


class Log(Function):
    """Natural log with the argument clamped from below"""

    def forward(self, a, floor=1e-12):
        self.clamped = np.maximum(a, floor)
        self.active = a >= floor
        return np.log(self.clamped)

    def backward(self, grad):
        return (grad * self.active / self.clamped,)


class SoftmaxRows(Function):
    def forward(self, a):
        self.out = softmax(a, axis=1)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=1, keepdims=True)),)


class LayerNormRows(Function):
    def forward(self, a, eps):
        mu = a.mean(axis=1, keepdims=True)
        xc = a - mu
        var = (xc * xc).mean(axis=1, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + eps)
        self.out = xc * self.inv
        return self.out

    def backward(self, grad):
        y = self.out
        g_mean = grad.mean(axis=1, keepdims=True)
        gy_mean = (grad * y).mean(axis=1, keepdims=True)
        return (self.inv * (grad - g_mean - y * gy_mean),)


class ConcatCols(Function):
    def forward(self, *arrays):
        self.widths = [a.shape[1] for a in arrays]
        return np.concatenate(arrays, axis=1)

    def backward(self, grad):
        bounds = np.cumsum([0] + self.widths)
        return tuple(grad[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))


class Lstm(Function):
    """
    Whole-sequence LSTM with zero initial state.

    Gate blocks of W (d_in x 4H), U (H x 4H) and b (1 x 4H) are ordered
    input, forget, output, candidate.
    """

    def forward(self, x, W, U, b):
        T = x.shape[0]
        H = U.shape[0]
        if W.shape[0] != x.shape[1]:
            raise shape_mismatch('lstm input', x.shape, W.shape)
        if W.shape[1] != 4 * H or U.shape[1] != 4 * H or b.shape != (1, 4 * H):
            raise ShapeError(f'lstm gate blocks disagree: W {W.shape}, U {U.shape}, b {b.shape}')
        self.x, self.W, self.U = x, W, U
        xw = x @ W + b
        gates = np.zeros((T, 4 * H))
        h = np.zeros((T + 1, H))
        c = np.zeros((T + 1, H))
        for t in range(T):
            z = xw[t] + h[t] @ U
            gates[t, :3 * H] = expit(z[:3 * H])
            gates[t, 3 * H:] = np.tanh(z[3 * H:])
            i, f, o, g = np.split(gates[t], 4)
            c[t + 1] = f * c[t] + i * g
            h[t + 1] = o * np.tanh(c[t + 1])
        self.gates, self.h, self.c = gates, h, c
        return h[1:].copy()

    def backward(self, grad):
        T = self.x.shape[0]
        H = self.U.shape[0]
        dz = np.zeros((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            i, f, o, g = np.split(self.gates[t], 4)
            tc = np.tanh(self.c[t + 1])
            dh = grad[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[t] = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * self.c[t] * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g * g),
            ])
            dc_next = dc * f
            dh_next = dz[t] @ self.U.T
        dx = dz @ self.W.T
        dW = self.x.T @ dz
        dU = self.h[:-1].T @ dz
        db = dz.sum(axis=0, keepdims=True)
        return dx, dW, dU, db


def softmax_rows(t):
    return SoftmaxRows.apply(t)


def layer_norm_rows(t, eps):
    return LayerNormRows.apply(t, eps=eps)


def concat_cols(tensors):
    return ConcatCols.apply(*tensors)


def lstm(x, W, U, b):
    return Lstm.apply(x, W, U, b)


def log(t, floor=1e-12):
    return Log.apply(t, floor=floor)


def _is_leaf(value):
    return isinstance(value, (np.ndarray, Tensor))


def named_arrays(obj, prefix=''):
    """List (dotted name, array) pairs of a dataclass parameter tree, in field order"""
    out = []
    if _is_leaf(obj):
        out.append((prefix, obj))
    elif dataclasses.is_dataclass(obj):
        for field in dataclasses.fields(obj):
            name = f'{prefix}.{field.name}' if prefix else field.name
            out.extend(named_arrays(getattr(obj, field.name), name))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            out.extend(named_arrays(item, f'{prefix}.{i}' if prefix else str(i)))
    return out


def map_arrays(obj, fn, prefix=''):
    """Rebuild a parameter tree with every array leaf replaced by ``fn(name, leaf)``"""
    if _is_leaf(obj):
        return fn(prefix, obj)
    if dataclasses.is_dataclass(obj):
        changes = {}
        for field in dataclasses.fields(obj):
            if not field.init:
                continue
            name = f'{prefix}.{field.name}' if prefix else field.name
            changes[field.name] = map_arrays(getattr(obj, field.name), fn, name)
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, (list, tuple)):
        items = [map_arrays(item, fn, f'{prefix}.{i}' if prefix else str(i)) for i, item in enumerate(obj)]
        return type(obj)(items)
    return obj


def as_tensors(obj, requires_grad=True):
    return map_arrays(obj, lambda _, a: Tensor(a.value if isinstance(a, Tensor) else a, requires_grad))


def constants(obj):
    return as_tensors(obj, requires_grad=False)


def values_of(obj):
    return map_arrays(obj, lambda _, a: a.value if isinstance(a, Tensor) else a)


def grads_of(obj):
    """Gradient tree matching ``obj``; missing gradients become zeros"""
    return map_arrays(obj, lambda _, a: np.zeros_like(a.value) if a.grad is None else a.grad)
