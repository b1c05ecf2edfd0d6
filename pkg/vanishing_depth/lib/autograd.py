"""
autograd.py - Small reverse-mode autodiff over numpy arrays

Nodes hold an immutable float64 value, a lazily allocated gradient and the
record of the op that produced them. backward() walks the graph once in
reverse topological order and accumulates (+=) into every node that
requires a gradient. Call zero_grad() between independent passes.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation, DomainError


# --- Nodes ---

def _freeze(value):
    arr = np.array(value, dtype=np.float64)
    arr.flags.writeable = False
    return arr


class Node:
    """A value in the graph plus what is needed to differentiate through it."""

    __slots__ = ("value", "grad", "op", "parents", "requires_grad", "visits", "_backward")

    def __init__(self, value, requires_grad=False):
        self.value = _freeze(value)
        self.grad = None
        self.op = "leaf"
        self.parents = ()
        self.requires_grad = requires_grad
        self.visits = 0
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def gradient(self):
        """Accumulated gradient, zeros if nothing has flowed here yet."""
        if self.grad is None:
            return np.zeros_like(self.value)
        return self.grad

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar, all routed through the ops below
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

    def __neg__(self):
        return mul(self, -1.0)


def constant(value):
    return Node(value, requires_grad=False)


def parameter(value):
    return Node(value, requires_grad=True)


def _result(value, op, parents, backward):
    node = Node.__new__(Node)
    arr = np.asarray(value, dtype=np.float64)
    arr.flags.writeable = False
    node.value = arr
    node.grad = None
    node.op = op
    node.parents = tuple(parents)
    node.requires_grad = any(p.requires_grad for p in parents)
    node.visits = 0
    node._backward = backward
    return node


def _as_node(x):
    return x if isinstance(x, Node) else constant(x)


# --- Elementwise ops ---

def _binary_shapes(kind, a, b):
    if a.shape != b.shape and a.value.ndim != 0 and b.value.ndim != 0:
        raise ContractViolation(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def _sum_to(grad, shape):
    # only scalar broadcasting exists, so a mismatch means `shape` is ()
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def add(a, b):
    a, b = _as_node(a), _as_node(b)
    _binary_shapes("add", a, b)

    def backward(g):
        return _sum_to(g, a.shape), _sum_to(g, b.shape)

    return _result(a.value + b.value, "add", (a, b), backward)


def sub(a, b):
    a, b = _as_node(a), _as_node(b)
    _binary_shapes("sub", a, b)

    def backward(g):
        return _sum_to(g, a.shape), _sum_to(-g, b.shape)

    return _result(a.value - b.value, "sub", (a, b), backward)


def mul(a, b):
    a, b = _as_node(a), _as_node(b)
    _binary_shapes("mul", a, b)

    def backward(g):
        return _sum_to(g * b.value, a.shape), _sum_to(g * a.value, b.shape)

    return _result(a.value * b.value, "mul", (a, b), backward)


def log(x):
    x = _as_node(x)
    if np.any(x.value <= 0):
        raise DomainError("log of a nonpositive value")

    def backward(g):
        return (g / x.value,)

    return _result(np.log(x.value), "log", (x,), backward)


def sigmoid(x):
    x = _as_node(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _result(out, "sigmoid", (x,), backward)


def leaky_relu(x, slope=0.01):
    x = _as_node(x)
    positive = x.value > 0

    def backward(g):
        return (np.where(positive, g, slope * g),)

    return _result(np.where(positive, x.value, slope * x.value), "leaky_relu", (x,), backward)


def square(x):
    x = _as_node(x)

    def backward(g):
        return (2.0 * x.value * g,)

    return _result(x.value * x.value, "square", (x,), backward)


def sqrt(x):
    x = _as_node(x)
    if np.any(x.value < 0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(x.value)

    def backward(g):
        # subgradient 0 at the origin
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _result(out, "sqrt", (x,), backward)


def clamp_min(x, lo):
    x = _as_node(x)
    active = x.value > lo

    def backward(g):
        return (np.where(active, g, 0.0),)

    return _result(np.maximum(x.value, lo), "clamp_min", (x,), backward)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "log": log,
    "sigmoid": sigmoid,
    "square": square,
    "sqrt": sqrt,
}


def elementwise(kind, *inputs, slope=0.01):
    """Dispatch by name; leaky_relu takes its negative slope as a keyword."""
    if kind == "leaky_relu":
        return leaky_relu(*inputs, slope=slope)
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractViolation(f"unknown elementwise op '{kind}'") from None
    return fn(*inputs)


# --- Shape ops ---

def broadcast_to(x, shape):
    """Expand size-1 / missing leading axes; backward sums them back."""
    x = _as_node(x)
    shape = tuple(shape)
    try:
        ok = np.broadcast_shapes(x.shape, shape) == shape
    except ValueError:
        ok = False
    if not ok:
        raise ContractViolation(f"cannot broadcast {x.shape} to {shape}")

    def backward(g):
        grad = g
        while grad.ndim > x.value.ndim:
            grad = grad.sum(axis=0)
        for axis, n in enumerate(x.shape):
            if n == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return (grad,)

    return _result(np.broadcast_to(x.value, shape).copy(), "broadcast", (x,), backward)


def reshape(x, shape):
    x = _as_node(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.value.size:
        raise ContractViolation(f"cannot reshape {x.shape} to {shape}")

    def backward(g):
        return (g.reshape(x.shape),)

    return _result(x.value.reshape(shape), "reshape", (x,), backward)


def concat(nodes, axis=0):
    nodes = [_as_node(n) for n in nodes]
    if not nodes:
        raise ContractViolation("concat of nothing")
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError as e:
        raise ContractViolation(f"concat: {e}") from None
    cuts = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(out, "concat", nodes, backward)


def channels(x, start, stop):
    """Slice [start:stop] along the leading axis."""
    x = _as_node(x)
    if not 0 <= start < stop <= x.shape[0]:
        raise ContractViolation(f"channel slice {start}:{stop} outside {x.shape[0]}")

    def backward(g):
        grad = np.zeros_like(x.value)
        grad[start:stop] = g
        return (grad,)

    return _result(x.value[start:stop], "channels", (x,), backward)


def select(x, mask):
    """Gather x[mask] into a flat vector."""
    x = _as_node(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ContractViolation(f"select: mask {mask.shape} vs value {x.shape}")

    def backward(g):
        grad = np.zeros_like(x.value)
        grad[mask] = g
        return (grad,)

    return _result(x.value[mask], "select", (x,), backward)


# --- Reductions ---

def reduce(kind, x, axes=None, keepdims=False):
    x = _as_node(x)
    ndim = x.value.ndim
    if axes is None:
        axes = tuple(range(ndim))
    elif isinstance(axes, int):
        axes = (axes,)
    for a in axes:
        if not -ndim <= a < ndim:
            raise ContractViolation(f"axis {a} invalid for shape {x.shape}")
    axes = tuple(sorted({a % ndim for a in axes}))
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 0
    if not axes or count == 0:
        raise ContractViolation("reduction over an empty set")
    if kind not in ("sum", "mean"):
        raise ContractViolation(f"unknown reduction '{kind}'")

    out = x.value.sum(axis=axes, keepdims=keepdims)
    scale = 1.0 / count if kind == "mean" else 1.0

    def backward(g):
        expanded = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(expanded * scale, x.shape).copy(),)

    return _result(out * scale, kind, (x,), backward)


def total(x):
    return reduce("sum", x)


def mean(x):
    return reduce("mean", x)


# --- Convolution / resampling ---

def conv2d(x, kernel, bias=None, stride=1, padding=0):
    """Cross-correlation of a C×H×W input with an O×C×k×k kernel, zero padded."""
    x, kernel = _as_node(x), _as_node(kernel)
    if x.value.ndim != 3 or kernel.value.ndim != 4:
        raise ContractViolation(f"conv2d expects C×H×W and O×C×k×k, got {x.shape}, {kernel.shape}")
    C, H, W = x.shape
    O, Ck, k, kw = kernel.shape
    if Ck != C or k != kw:
        raise ContractViolation(f"conv2d kernel {kernel.shape} does not fit input {x.shape}")
    if stride < 1 or padding < 0:
        raise ContractViolation(f"conv2d stride={stride} padding={padding}")
    if k > H + 2 * padding or k > W + 2 * padding:
        raise ContractViolation(f"kernel {k} larger than padded input {H}×{W}+{padding}")

    p = padding
    xp = np.pad(x.value, ((0, 0), (p, p), (p, p))) if p else x.value
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    Ho, Wo = windows.shape[1], windows.shape[2]
    out = np.tensordot(kernel.value, windows, axes=([1, 2, 3], [0, 3, 4]))

    parents = [x, kernel]
    if bias is not None:
        bias = _as_node(bias)
        if bias.shape != (O,):
            raise ContractViolation(f"conv2d bias {bias.shape}, expected ({O},)")
        out = out + bias.value[:, None, None]
        parents.append(bias)

    def backward(g):
        gk = np.tensordot(g, windows, axes=([1, 2], [1, 2]))
        cols = np.tensordot(kernel.value, g, axes=([0], [0]))  # C, k, k, Ho, Wo
        gxp = np.zeros(xp.shape)
        span_h = stride * (Ho - 1) + 1
        span_w = stride * (Wo - 1) + 1
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + span_h:stride, j:j + span_w:stride] += cols[:, i, j]
        gx = gxp[:, p:p + H, p:p + W] if p else gxp
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(1, 2))

    return _result(out, "conv2d", parents, backward)


def _interp_matrix(n_in, n_out):
    # align_corners=False: output pixel centers mapped back onto input centers
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, None)
    i0 = np.minimum(np.floor(src).astype(int), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w1 = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - w1)
    np.add.at(m, (rows, i1), w1)
    return m


def bilinear_resize(x, out_h, out_w):
    x = _as_node(x)
    if x.value.ndim != 3:
        raise ContractViolation(f"bilinear_resize expects C×H×W, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ContractViolation(f"bilinear_resize target {out_h}×{out_w}")
    _, H, W = x.shape
    ry = _interp_matrix(H, out_h)
    rx = _interp_matrix(W, out_w)

    def backward(g):
        return (ry.T @ g @ rx,)

    return _result(ry @ x.value @ rx.T, "bilinear_resize", (x,), backward)


# --- Backward pass ---

def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    """Accumulate dRoot/dNode into every reachable node that requires grad."""
    if root.value.shape != ():
        raise ContractViolation(f"backward needs a scalar root, got shape {root.shape}")
    pending = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological_order(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        node.visits += 1
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


# --- Parameters ---

class ParameterStore:
    """Named parameters; iteration is always in sorted-name order."""

    def __init__(self):
        self._nodes = {}

    def add(self, name, value, requires_grad=True):
        if name in self._nodes:
            raise ContractViolation(f"duplicate parameter name '{name}'")
        node = Node(value, requires_grad=requires_grad)
        self._nodes[name] = node
        return node

    def __getitem__(self, name):
        return self._nodes[name]

    def __contains__(self, name):
        return name in self._nodes

    def __len__(self):
        return len(self._nodes)

    def __iter__(self):
        return iter(self.names())

    def names(self):
        return sorted(self._nodes)

    def items(self):
        return [(name, self._nodes[name]) for name in self.names()]

    def set_value(self, name, value):
        node = self._nodes[name]
        value = _freeze(value)
        if value.shape != node.shape:
            raise ContractViolation(f"{name}: shape {value.shape} vs {node.shape}")
        node.value = value

    def zero_grad(self):
        for node in self._nodes.values():
            node.zero_grad()

    def size(self):
        return sum(node.value.size for node in self._nodes.values())


# --- Gradient verification ---

def finite_difference_check(f, store, eps=1e-6, names=None, max_entries=None, seed=0):
    """
    Compare backward() against central differences for f(store).

    Returns max |analytic - numeric| / max(1, |analytic|) over the checked
    entries. Step size is eps scaled by the entry magnitude. max_entries
    samples that many entries per parameter instead of checking all of them.
    """
    store.zero_grad()
    out = f(store)
    if not np.isfinite(out.value).all():
        raise DomainError("function is not finite at the evaluation point")
    backward(out)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names or store.names():
        node = store[name]
        if not node.requires_grad:
            continue
        analytic = node.gradient.reshape(-1)
        original = node.value
        entries = np.arange(original.size)
        if max_entries is not None and entries.size > max_entries:
            entries = rng.choice(entries.size, size=max_entries, replace=False)
        try:
            for idx in entries:
                x = original.reshape(-1)[idx]
                h = eps * max(1.0, abs(x))
                plus = original.copy()
                minus = original.copy()
                plus.reshape(-1)[idx] = x + h
                minus.reshape(-1)[idx] = x - h
                node.value = _freeze(plus)
                f_plus = float(f(store).value)
                node.value = _freeze(minus)
                f_minus = float(f(store).value)
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise DomainError(f"function is not finite near {name}[{idx}]")
                step = plus.reshape(-1)[idx] - minus.reshape(-1)[idx]
                numeric = (f_plus - f_minus) / step
                err = abs(analytic[idx] - numeric) / max(1.0, abs(analytic[idx]))
                worst = max(worst, err)
        finally:
            node.value = original
    return worst
