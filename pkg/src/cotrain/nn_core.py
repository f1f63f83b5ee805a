"""Dense float64 tensors with reverse-mode differentiation, MLP views and SGD.

Graphs are built eagerly: every operation on a :class:`Tensor` records its
parents and a closure that maps the output gradient to parent gradients.
:meth:`Tensor.backward` walks the graph once. After that the graph is
released, so a second call on the same root raises :class:`GraphStateError`
instead of silently double-counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GraphStateError, ShapeError

ACTIVATIONS = ("relu", "identity")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        """Constant view of the same buffer; gradients stop here."""
        return Tensor(self.data)

    @property
    def is_leaf(self):
        return self._backward is None

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every leaf with ``requires_grad``.

        ``self`` must be a scalar produced by at least one recorded op.
        Intermediate gradients are not kept. The graph is freed afterwards.
        """
        if self._consumed:
            raise GraphStateError("backward already ran on this graph")
        if self.is_leaf:
            raise GraphStateError("no recorded forward pass for this tensor")
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {self.shape}")

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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _needs_grad(parent):
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

        for node in order:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
                node._consumed = True
        self._consumed = True

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, rows):
        return take_rows(self, rows)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)


def _needs_grad(t):
    return t.requires_grad or not t.is_leaf


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(*parents):
    return any(_needs_grad(p) for p in parents)


def _make(data, parents, backward):
    if _track(*parents):
        return Tensor(data, _parents=parents, _backward=backward)
    return Tensor(data)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not chain")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, w, b):
    """x @ w.T + b for weight ``w`` of shape [out, in] and bias ``b`` of shape [out]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")

    want_x, want_w = _needs_grad(x), _needs_grad(w) or _needs_grad(b)

    def backward(g):
        gx = g @ w.data if want_x else None
        if not want_w:
            return gx, None, None
        return gx, g.T @ x.data, g.sum(axis=0)

    return _make(x.data @ w.data.T + b.data, (x, w, b), backward)


def relu(a):
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def log(a):
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def clamp(a, lo, hi):
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


def softmax(a):
    """Row-wise softmax over the last axis with max subtraction."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (a,), backward)


def tsum(a, axis=None):
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def tmean(a, axis=None):
    n = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def take_rows(a, rows):
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        return (full,)

    return _make(a.data[rows], (a,), backward)


def concat_rows(parts):
    parts = [as_tensor(p) for p in parts]
    sizes = np.cumsum([0] + [len(p) for p in parts])

    def backward(g):
        return tuple(g[sizes[i] : sizes[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


# ---------------------------------------------------------------------------
# views


@dataclass
class Layer:
    weight: Tensor  # [out, in]
    bias: Tensor  # [out]
    activation: str = "relu"

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class ViewModel:
    """One view: hidden layers form the representation, the last layer classifies."""

    layers: list
    seed: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("a view needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        for layer in self.layers:
            if layer.activation not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {layer.activation!r}")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeError(f"bias shape {layer.bias.shape} != ({layer.out_dim},)")

    @property
    def layer_dims(self):
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def num_classes(self):
        return self.layers[-1].out_dim

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def clear_grad(self):
        for p in self.parameters():
            p.grad = None

    def copy(self):
        return ViewModel(
            [
                Layer(
                    Tensor(l.weight.data.copy(), requires_grad=True),
                    Tensor(l.bias.data.copy(), requires_grad=True),
                    l.activation,
                )
                for l in self.layers
            ],
            seed=self.seed,
        )

    def flat_parameters(self):
        return np.concatenate([p.data.ravel() for p in self.parameters()])

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())


def init_view(layer_dims, seed):
    """Build an MLP view with Glorot-uniform weights and zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ConfigError(f"layer_dims needs at least 2 entries, got {dims}", field="layer_dims")
    if any(int(d) != d or d <= 0 for d in dims):
        raise ConfigError(f"layer_dims must be positive integers, got {dims}", field="layer_dims")
    rng = np.random.default_rng(seed)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_out, fan_in))
        act = "identity" if k == len(dims) - 2 else "relu"
        layers.append(
            Layer(
                Tensor(w, requires_grad=True),
                Tensor(np.zeros(fan_out), requires_grad=True),
                act,
            )
        )
    return ViewModel(layers, seed=seed)


def logits(model, x, *, track_params=True):
    """Pre-softmax outputs for a batch ``x`` of shape [batch, in_dim]."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"input shape {x.shape} does not match view input dim {model.in_dim}")
    h = x
    for layer in model.layers:
        w, b = layer.weight, layer.bias
        if not track_params:
            w, b = w.detach(), b.detach()
        h = linear(h, w, b)
        if layer.activation == "relu":
            h = relu(h)
    return h


def forward(model, x, *, track_params=True):
    """Class probabilities p(x) = softmax(f(v(x))), one row per input row."""
    return softmax(logits(model, x, track_params=track_params))


def predict(model, x):
    """Argmax class per row; ties go to the lowest index."""
    return np.argmax(forward(model, x, track_params=False).data, axis=1)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    velocities: list
    momentum: float = 0.9
    weight_decay: float = 1e-4

    @classmethod
    def for_model(cls, model, momentum=0.9, weight_decay=1e-4):
        return cls([np.zeros_like(p.data) for p in model.parameters()], momentum, weight_decay)

    def copy(self):
        return OptimizerState([v.copy() for v in self.velocities], self.momentum, self.weight_decay)


def sgd_step(model, state, lr):
    """Classic momentum SGD with L2 weight decay on every parameter.

    v <- momentum * v + (grad + weight_decay * theta); theta <- theta - lr * v.
    Gradients are cleared afterwards.
    """
    params = model.parameters()
    if len(params) != len(state.velocities):
        raise ShapeError("optimizer state does not match model parameters")
    for p in params:
        if p.grad is None:
            raise GraphStateError("sgd_step called before gradients were populated")
    for p, v in zip(params, state.velocities):
        if v.shape != p.data.shape:
            raise ShapeError(f"velocity shape {v.shape} != parameter shape {p.data.shape}")
        v *= state.momentum
        v += p.grad + state.weight_decay * p.data
        p.data -= lr * v
        p.grad = None
