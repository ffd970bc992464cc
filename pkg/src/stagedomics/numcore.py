"""Dense float64 matrices with reverse-mode gradients.

Only the handful of ops the GCN/VCDN networks need are provided. A ``Tensor``
wraps a 2-D (or 0-d, for losses) ndarray; calling ``backward()`` on a scalar
fills ``.grad`` on every upstream tensor created with ``requires_grad=True``.

Every op output is checked for NaN/Inf and raises ``NumericError``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ShapeError

LOG_CLAMP = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad=False, name=None, _parents=(), _backward=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim not in (0, 2):
            raise ShapeError(f"tensor must be 2-D or scalar, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values produced{f' in {name}' if name else ''}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.value.shape

    def __array__(self, dtype=None, copy=None):
        return self.value if dtype is None else self.value.astype(dtype)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.value)
        order = []
        seen = set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value, parents, backward, name=None):
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=needs, name=name, _parents=parents if needs else (),
                  _backward=backward if needs else None)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    av, bv = a.value, b.value

    def back(g):
        return (g @ bv.T if a.requires_grad else None,
                av.T @ g if b.requires_grad else None)

    # overflow surfaces as NumericError from the finiteness check instead
    with np.errstate(over="ignore", invalid="ignore"):
        out = av @ bv
    return _result(out, (a, b), back, "matmul")


def add(a, b):
    """Elementwise sum. ``b`` may be a 1×k row broadcast over the rows of ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        return _result(a.value + b.value, (a, b), lambda g: (g, g), "add")
    if a.value.ndim == 2 and b.shape == (1, a.shape[1]):
        return _result(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)), "add")
    raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")


def total(*terms):
    """Sum of scalar tensors."""
    terms = [as_tensor(t) for t in terms]
    for t in terms:
        if t.value.size != 1:
            raise ShapeError(f"total() takes scalars, got shape {t.shape}")
    value = np.asarray(sum(float(t.value) for t in terms))
    return _result(value, tuple(terms), lambda g: tuple(g for _ in terms), "total")


def relu(x):
    x = as_tensor(x)
    mask = x.value > 0
    return _result(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def dropout(x, rate, rng):
    """Inverted dropout: zero each entry with probability ``rate``, rescale survivors."""
    x = as_tensor(x)
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.value * keep, (x,), lambda g: (g * keep,), "dropout")


def softmax_rows(x):
    x = as_tensor(x)
    if x.value.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got {x.shape}")
    z = x.value - x.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - np.sum(g * y, axis=1, keepdims=True)),)

    return _result(y, (x,), back, "softmax")


def _check_labels(labels, n_rows, n_classes):
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise ShapeError(f"need one label per row: {labels.shape} labels for {n_rows} rows")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)
                        or labels.min() < 0 or labels.max() >= n_classes):
        raise DomainError(f"labels must be integers in [0, {n_classes - 1}]")
    return labels.astype(np.int64)


def cross_entropy(probs, labels):
    """Mean of -ln p[row, label] with p clamped below at 1e-12."""
    probs = as_tensor(probs)
    n, c = probs.shape
    labels = _check_labels(labels, n, c)
    rows = np.arange(n)
    picked = probs.value[rows, labels]
    clamped = np.maximum(picked, LOG_CLAMP)
    loss = -np.mean(np.log(clamped))

    def back(g):
        grad = np.zeros_like(probs.value)
        live = picked > LOG_CLAMP
        grad[rows[live], labels[live]] = -float(g) / (n * picked[live])
        return (grad,)

    return _result(np.asarray(loss), (probs,), back, "cross_entropy")


def take_rows(x, index):
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, index, g)
        return (out,)

    return _result(x.value[index], (x,), back, "take_rows")


def outer_rows(dists):
    """Row-wise outer product of m distributions, flattened with the first factor slowest.

    For inputs of shape n×c the result is n×c**m.
    """
    dists = [as_tensor(d) for d in dists]
    if not dists:
        raise ShapeError("outer_rows needs at least one input")
    n = dists[0].shape[0]
    for d in dists:
        if d.value.ndim != 2 or d.shape[0] != n:
            raise ShapeError(f"outer_rows inputs must share row count, got {[d.shape for d in dists]}")
    cs = [d.shape[1] for d in dists]
    m = len(dists)
    letters = "abcdefgh"[:m]
    subscripts = ",".join(f"i{ch}" for ch in letters) + "->i" + letters
    full = np.einsum(subscripts, *[d.value for d in dists])

    def back(g):
        g = g.reshape((n, *cs))
        out = []
        for k in range(m):
            if not dists[k].requires_grad:
                out.append(None)
                continue
            others = [j for j in range(m) if j != k]
            sub = "i" + letters + "," + ",".join(f"i{letters[j]}" for j in others) + f"->i{letters[k]}"
            out.append(np.einsum(sub, g, *[dists[j].value for j in others]))
        return tuple(out)

    return _result(full.reshape(n, -1), tuple(dists), back, "outer_rows")


# ---------------------------------------------------------------- optimizer


@dataclass
class ParamStore:
    """Named parameters plus Adam moment estimates."""

    params: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        self.params = {k: np.asarray(p, dtype=np.float64) for k, p in self.params.items()}
        for k, p in self.params.items():
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))
            if self.m[k].shape != p.shape or self.v[k].shape != p.shape:
                raise ShapeError(f"moment shape mismatch for parameter {k!r}")

    def leaves(self, requires_grad=True):
        """Fresh leaf tensors over the current parameter values."""
        return {k: Tensor(p, requires_grad=requires_grad, name=k) for k, p in self.params.items()}

    def copy(self):
        return ParamStore({k: p.copy() for k, p in self.params.items()},
                          {k: a.copy() for k, a in self.m.items()},
                          {k: a.copy() for k, a in self.v.items()}, self.step)


def adam_step(store, grads, lr):
    """One Adam update (bias-corrected). Parameters missing from ``grads`` get a zero gradient."""
    t = store.step + 1
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in store.params.items():
        g = grads.get(k)
        g = np.zeros_like(p) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {k!r} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {k!r}")
        m = ADAM_BETA1 * store.m[k] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * store.v[k] + (1.0 - ADAM_BETA2) * g * g
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        new_m[k], new_v[k] = m, v
    store.params, store.m, store.v = new_params, new_m, new_v
    store.step = t
    return store


# ---------------------------------------------------------------- randomness


def seeded_rng(seed):
    """Philox-4x64 counter-based stream: same seed gives the same draws on every platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(seed, *keys):
    """Stable 63-bit child seed from a parent seed and integer keys (SeedSequence hash)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
