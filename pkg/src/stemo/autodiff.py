"""Minimal dense float64 tensor core with reverse-mode differentiation.

Everything learnable in the package (GRU cells, graph convolutions, the
Q-network) is built from the primitives here. The design is define-by-run:
each forward pass records primitive ops on an active ``Tape``, and
``Tape.backward`` replays the record once in reverse creation order, which
is a valid reverse topological order.

Only the broadcasting the layers actually need is supported: same-shape
elementwise ops, row-vector bias addition, and scalar factors.
"""

from __future__ import annotations

import numpy as np

# Assert finiteness of values/grads after backward and optimizer steps.
# Cheap at the array sizes this package works with.
CHECK_FINITE = True


class ShapeError(ValueError):
    """Raised when primitive operands have incompatible shapes."""


class TapeError(RuntimeError):
    """Raised on tape misuse (backward twice, backward without a tape)."""


_active_tape: "Tape | None" = None


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A float64 array with an optional gradient accumulator.

    ``track`` marks tensors that participate in differentiation, either
    because they are parameters (``requires_grad=True``) or because they
    were produced from tracked inputs while a tape was active.
    """

    __slots__ = ("values", "grad", "track")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_array(values)
        self.grad: np.ndarray | None = None
        self.track = bool(requires_grad)

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, track={self.track})"


class Tape:
    """Ordered record of primitive ops for one forward pass.

    Usable as a context manager; ops executed inside record themselves.
    ``backward`` may run exactly once per recorded forward pass.
    """

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._consumed = False
        self._outer = None

    def __enter__(self) -> "Tape":
        global _active_tape
        self._outer = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._outer
        return False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn):
        self._ops.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor):
        """Populate ``grad`` on every tracked tensor reachable from ``loss``."""
        if self._consumed:
            raise TapeError("backward called twice on the same tape; re-run the forward pass")
        if loss.values.size != 1:
            raise ShapeError(f"backward expects a scalar loss, got shape {loss.values.shape}")
        self._consumed = True
        if CHECK_FINITE and not np.all(np.isfinite(loss.values)):
            raise FloatingPointError("non-finite loss value at backward")
        loss.grad = np.ones_like(loss.values)
        for out, inputs, backward_fn in reversed(self._ops):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.track:
                    continue
                if inp.grad is None:
                    # Own the buffer: backward_fn may return out.grad or a view.
                    inp.grad = np.array(g)
                else:
                    inp.grad += g


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _active_tape
    if tape is not None and any(i.track for i in inputs):
        out.track = True
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (handles the row-vector/scalar cases)."""
    if grad.shape == tuple(shape):
        return grad
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def constant(values) -> Tensor:
    return Tensor(values)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


# ---------------------------------------------------------------------------
# Primitive operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.values.shape} @ {b.values.shape}")
    out = Tensor(a.values @ b.values)

    def backward_fn(g):
        return g @ b.values.T, a.values.T @ g

    return _record(out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.values + b.values)
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.values.shape} + {b.values.shape}") from exc

    def backward_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _record(out, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.values - b.values)
    except ValueError as exc:
        raise ShapeError(f"sub: incompatible shapes {a.values.shape} - {b.values.shape}") from exc

    def backward_fn(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _record(out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product (either operand may also be a broadcastable row/scalar)."""
    try:
        out = Tensor(a.values * b.values)
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.values.shape} * {b.values.shape}") from exc

    def backward_fn(g):
        return _unbroadcast(g * b.values, a.values.shape), _unbroadcast(g * a.values, b.values.shape)

    return _record(out, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.values * c)

    def backward_fn(g):
        return (g * c,)

    return _record(out, (a,), backward_fn)


def sigmoid(a: Tensor) -> Tensor:
    # Clipping at |40| is exact in float64: sigmoid saturates to 0/1 well before.
    s = 1.0 / (1.0 + np.exp(-np.clip(a.values, -40.0, 40.0)))
    out = Tensor(s)

    def backward_fn(g):
        return (g * s * (1.0 - s),)

    return _record(out, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.values)
    out = Tensor(t)

    def backward_fn(g):
        return (g * (1.0 - t * t),)

    return _record(out, (a,), backward_fn)


def absolute(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.values))
    sign = np.sign(a.values)

    def backward_fn(g):
        return (g * sign,)

    return _record(out, (a,), backward_fn)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.values * a.values)

    def backward_fn(g):
        return (g * 2.0 * a.values,)

    return _record(out, (a,), backward_fn)


def total(a: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    out = Tensor(np.array([[a.values.sum()]]))

    def backward_fn(g):
        return (np.full_like(a.values, g.reshape(-1)[0]),)

    return _record(out, (a,), backward_fn)


def mean(a: Tensor) -> Tensor:
    n = a.values.size
    out = Tensor(np.array([[a.values.mean()]]))

    def backward_fn(g):
        return (np.full_like(a.values, g.reshape(-1)[0] / n),)

    return _record(out, (a,), backward_fn)


def concat_cols(tensors: list[Tensor]) -> Tensor:
    arrs = [t.values for t in tensors]
    rows = {arr.shape[0] for arr in arrs}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[a.shape for a in arrs]}")
    out = Tensor(np.concatenate(arrs, axis=1))
    widths = [arr.shape[1] for arr in arrs]

    def backward_fn(g):
        grads = []
        start = 0
        for w in widths:
            grads.append(g[:, start:start + w])
            start += w
        return tuple(grads)

    return _record(out, tuple(tensors), backward_fn)


def add_n(tensors: list[Tensor]) -> Tensor:
    """Sum a list of same-shape tensors."""
    shapes = {t.values.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"add_n: mixed shapes {sorted(shapes)}")
    out = Tensor(np.sum([t.values for t in tensors], axis=0))

    def backward_fn(g):
        return tuple(g for _ in tensors)

    return _record(out, tuple(tensors), backward_fn)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class Linear:
    """Affine map x @ W + b with W (in, out) and b (1, out)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.w = parameter(glorot_uniform(rng, (in_dim, out_dim)))
        self.b = parameter(np.zeros((1, out_dim)))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def params(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}


class GRUCell:
    """Standard GRU update applied row-wise with shared weights.

    h' = (1 - z) * h + z * c, with update gate z, reset gate r and
    candidate c = tanh(x Wc + (r * h) Uc + bc).
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.hidden = hidden
        self.wz = parameter(glorot_uniform(rng, (in_dim, hidden)))
        self.uz = parameter(glorot_uniform(rng, (hidden, hidden)))
        self.bz = parameter(np.zeros((1, hidden)))
        self.wr = parameter(glorot_uniform(rng, (in_dim, hidden)))
        self.ur = parameter(glorot_uniform(rng, (hidden, hidden)))
        self.br = parameter(np.zeros((1, hidden)))
        self.wc = parameter(glorot_uniform(rng, (in_dim, hidden)))
        self.uc = parameter(glorot_uniform(rng, (hidden, hidden)))
        self.bc = parameter(np.zeros((1, hidden)))

    def __call__(self, x: Tensor, h_prev: Tensor) -> Tensor:
        if x.values.shape[1] != self.in_dim:
            raise ShapeError(f"gru_cell: input width {x.values.shape[1]}, expected {self.in_dim}")
        if h_prev.values.shape[1] != self.hidden:
            raise ShapeError(f"gru_cell: hidden width {h_prev.values.shape[1]}, expected {self.hidden}")
        z = sigmoid(add(add(matmul(x, self.wz), matmul(h_prev, self.uz)), self.bz))
        r = sigmoid(add(add(matmul(x, self.wr), matmul(h_prev, self.ur)), self.br))
        c = tanh(add(add(matmul(x, self.wc), matmul(mul(r, h_prev), self.uc)), self.bc))
        one_minus_z = sub(constant(np.ones_like(z.values)), z)
        return add(mul(one_minus_z, h_prev), mul(z, c))

    def params(self) -> dict[str, Tensor]:
        return {
            "wz": self.wz, "uz": self.uz, "bz": self.bz,
            "wr": self.wr, "ur": self.ur, "br": self.br,
            "wc": self.wc, "uc": self.uc, "bc": self.bc,
        }


def gru_cell(x: Tensor, h_prev: Tensor, cell: GRUCell) -> Tensor:
    return cell(x, h_prev)


class MLP:
    """Fully-connected net with tanh hidden activations and linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.layers = [Linear(sizes[i], sizes[i + 1], rng) for i in range(len(sizes) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = tanh(layer(x))
        return self.layers[-1](x)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"l{i}.{k}"] = v
        return out


def namespaced(prefix: str, params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {f"{prefix}.{k}": v for k, v in params.items()}


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class Adam:
    """Standard Adam over a name -> Tensor parameter map.

    ``step`` consumes grads without zeroing them; callers call ``zero_grad``.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if CHECK_FINITE and not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter: {k}")
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.values -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            if CHECK_FINITE and not np.all(np.isfinite(p.values)):
                raise FloatingPointError(f"non-finite parameter after Adam step: {k}")

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: dict[str, Tensor | np.ndarray]):
    """Write a name -> array map; float64 values round-trip exactly."""
    arrays = {k: (v.values if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}
    np.savez(path, **arrays)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with np.load(path) as data:
        return {k: data[k].copy() for k in data.files}


def load_into(params: dict[str, Tensor], arrays: dict[str, np.ndarray]):
    """Copy checkpoint arrays into existing parameter tensors, by name."""
    for k, p in params.items():
        if k not in arrays:
            raise KeyError(f"checkpoint missing parameter {k!r}")
        if arrays[k].shape != p.values.shape:
            raise ShapeError(f"checkpoint shape {arrays[k].shape} != {p.values.shape} for {k!r}")
        p.values[...] = arrays[k]
