"""Dense float64 tensors with a reverse-mode tape.

Everything downstream (encoder, interaction matrix, decoder) is expressed
through the ops in this module.  Tensors are immutable values; recording
happens only while a Graph is active on the current thread, so the same
forward code serves both training (traced) and inference (untraced).
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class ContractViolation(RuntimeError):
    """An operation was called outside its stated preconditions."""


class Tensor:
    """Immutable dense array of 64-bit reals, row-major.

    Do not mutate ``data`` after construction; ops always allocate fresh
    outputs and the tape assumes recorded values never change.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the payload."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def tolist(self):
        return self.data.tolist()

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    # Arithmetic sugar; delegates to the recorded ops below.
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

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def ones(*shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=np.float64))


class Node:
    """One recorded op: inputs, output, and its local backward/forward."""

    __slots__ = ("op", "inputs", "out", "bwd", "fwd")

    def __init__(self, op, inputs, out, bwd, fwd):
        self.op = op
        self.inputs = inputs  # tuple of Tensor (non-tensor args live in closures)
        self.out = out
        self.bwd = bwd  # grad_out -> tuple of grad arrays aligned with inputs
        self.fwd = fwd  # tuple of input arrays -> output array (replay)


_tls = threading.local()


def _active_graph():
    return getattr(_tls, "graph", None)


class Graph:
    """Single-writer tape of recorded ops, in execution (topological) order.

    One training step owns one Graph; activate with ``with Graph() as g``.
    Parameters must be registered via ``watch`` to receive gradients.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._node_of: dict[int, Node] = {}
        self._watched: list[Tensor] = []
        self._watched_ids: set[int] = set()

    def __enter__(self):
        if _active_graph() is not None:
            raise ContractViolation("a Graph is already active on this thread")
        _tls.graph = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _tls.graph = None
        return False

    def watch(self, *tensors: Tensor):
        """Register parameter leaves; backward() reports a gradient for each."""
        for t in tensors:
            if id(t) not in self._watched_ids:
                self._watched_ids.add(id(t))
                self._watched.append(t)

    def record(self, op, inputs, out, bwd, fwd):
        node = Node(op, inputs, out, bwd, fwd)
        self.nodes.append(node)
        self._node_of[id(out)] = node
        return node

    def node_of(self, t: Tensor):
        return self._node_of.get(id(t))

    def replay(self) -> list[np.ndarray]:
        """Recompute every node output from leaf values, in recorded order.

        Replaying with unchanged inputs must reproduce the recorded values
        bit-for-bit; the determinism test asserts exactly that.
        """
        computed: dict[int, np.ndarray] = {}
        outs = []
        for node in self.nodes:
            in_arrays = tuple(
                computed.get(id(t), t.data) for t in node.inputs
            )
            val = node.fwd(in_arrays)
            computed[id(node.out)] = val
            outs.append(val)
        return outs


def backward(graph: Graph, loss: Tensor) -> dict[Tensor, Tensor]:
    """Reverse-mode sweep from a scalar loss over the recorded tape.

    Returns a gradient tensor per watched parameter (zeros if the loss does
    not depend on it).  Unwatched leaves get no gradient entry.
    """
    if loss.size != 1:
        raise ContractViolation(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )
    if graph.node_of(loss) is None:
        raise ContractViolation("loss tensor was not produced on this graph")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    # Nodes were appended in execution order, so reversed() is a reverse
    # topological order and each node is visited exactly once.
    for node in reversed(graph.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.bwd(g)
        for t, ig in zip(node.inputs, in_grads):
            if ig is None:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = ig if acc is None else acc + ig
    out: dict[Tensor, Tensor] = {}
    for p in graph._watched:
        g = grads.get(id(p))
        out[p] = Tensor(g) if g is not None else zeros(*p.shape)
    return out


def _record(op, inputs, out_array, bwd, fwd) -> Tensor:
    out = Tensor(out_array)
    g = _active_graph()
    if g is not None:
        g.record(op, tuple(inputs), out, bwd, fwd)
    return out


def _as_operand(x):
    """Normalize a binary operand: Tensor stays, numbers become floats."""
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return float(x)
    raise TypeError(f"unsupported operand type {type(x)!r}")


def _binary(op_name, a, b, f, df_a, df_b) -> Tensor:
    """Elementwise binary op with equal shapes or a scalar operand.

    ``df_a``/``df_b`` map (grad_out, a_val, b_val) to the elementwise grad
    contribution; scalar operands get their contribution sum-reduced.
    """
    a = _as_operand(a)
    b = _as_operand(b)
    a_t = a if isinstance(a, Tensor) else None
    b_t = b if isinstance(b, Tensor) else None
    av = a.data if a_t is not None else np.float64(a)
    bv = b.data if b_t is not None else np.float64(b)
    a_scalar = a_t is None or a_t.size == 1
    b_scalar = b_t is None or b_t.size == 1
    if not a_scalar and not b_scalar and a_t.shape != b_t.shape:
        raise ShapeError(
            f"{op_name}: shape mismatch {a_t.shape} vs {b_t.shape}"
        )
    out = f(av, bv)
    inputs = tuple(t for t in (a_t, b_t) if t is not None)

    def bwd(g):
        grads = []
        if a_t is not None:
            ga = df_a(g, av, bv)
            if a_scalar:
                ga = np.array(ga.sum()).reshape(a_t.shape)
            grads.append(ga)
        if b_t is not None:
            gb = df_b(g, av, bv)
            if b_scalar:
                gb = np.array(gb.sum()).reshape(b_t.shape)
            grads.append(gb)
        return tuple(grads)

    def fwd(arrs):
        it = iter(arrs)
        ra = next(it) if a_t is not None else av
        rb = next(it) if b_t is not None else bv
        return f(ra, rb)

    return _record(op_name, inputs, out, bwd, fwd)


def add(a, b) -> Tensor:
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _binary("div", a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def scale(a: Tensor, s) -> Tensor:
    """Multiply by a scalar (python number or size-1 tensor)."""
    if isinstance(s, Tensor) and s.size != 1:
        raise ShapeError(f"scale expects a scalar, got shape {s.shape}")
    return mul(a, s)


def _unary(op_name, x: Tensor, f, df) -> Tensor:
    x = tensor(x)
    out = f(x.data)

    def bwd(g):
        return (df(g, x.data, out),)

    def fwd(arrs):
        return f(arrs[0])

    return _record(op_name, (x,), out, bwd, fwd)


def _sigmoid_arr(x):
    # Evaluate via |x| to avoid overflow in exp for large negative inputs.
    pos = x >= 0
    z = np.exp(-np.abs(x))
    return np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x) -> Tensor:
    return _unary("sigmoid", x, _sigmoid_arr,
                  lambda g, x_, out: g * out * (1.0 - out))


def tanh(x) -> Tensor:
    return _unary("tanh", x, np.tanh,
                  lambda g, x_, out: g * (1.0 - out * out))


def relu(x) -> Tensor:
    return _unary("relu", x, lambda v: np.maximum(v, 0.0),
                  lambda g, x_, out: g * (x_ > 0))


def log(x) -> Tensor:
    """Floored log: log(max(x, 1e-12)), zero gradient below the floor."""
    return _unary(
        "log", x,
        lambda v: np.log(np.maximum(v, LOG_FLOOR)),
        lambda g, x_, out: np.where(x_ > LOG_FLOOR, g / np.maximum(x_, LOG_FLOOR), 0.0),
    )


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: sigmoid|tanh|add|sub|mul|scale."""
    table = {"sigmoid": sigmoid, "tanh": tanh, "add": add, "sub": sub,
             "mul": mul, "scale": scale}
    if op not in table:
        raise ValueError(f"unknown elementwise op {op!r}")
    return table[op](*args)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = tensor(a), tensor(b)
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree, {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return (g @ b.data.T, a.data.T @ g)

    def fwd(arrs):
        return arrs[0] @ arrs[1]

    return _record("matmul", (a, b), out, bwd, fwd)


def transpose(a: Tensor) -> Tensor:
    a = tensor(a)
    if len(a.shape) != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")
    return _record("transpose", (a,), a.data.T.copy(),
                   lambda g: (g.T,), lambda arrs: arrs[0].T.copy())


def reshape(a: Tensor, *shape) -> Tensor:
    a = tensor(a)
    out = a.data.reshape(shape)  # raises if sizes disagree
    return _record("reshape", (a,), out.copy(),
                   lambda g: (g.reshape(a.shape),),
                   lambda arrs: arrs[0].reshape(shape).copy())


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    a = tensor(a)
    if len(a.shape) != 2:
        raise ShapeError(f"softmax_rows needs a 2-D tensor, got {a.shape}")

    def f(v):
        shifted = v - v.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    out = f(a.data)

    def bwd(g):
        # dX = S * (g - rowsum(g * S))
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax_rows", (a,), out, bwd, lambda arrs: f(arrs[0]))


def sum_all(a: Tensor) -> Tensor:
    a = tensor(a)
    out = np.array([[a.data.sum()]])
    return _record("sum_all", (a,), out,
                   lambda g: (np.full(a.shape, g.reshape(-1)[0]),),
                   lambda arrs: np.array([[arrs[0].sum()]]))


def gather_rows(a: Tensor, idx: Sequence[int]) -> Tensor:
    a = tensor(a)
    if len(a.shape) != 2:
        raise ShapeError(f"gather_rows needs a 2-D tensor, got {a.shape}")
    idx = tuple(int(i) for i in idx)
    n = a.shape[0]
    for i in idx:
        if not 0 <= i < n:
            raise ShapeError(f"gather_rows: row {i} out of range for {a.shape}")
    out = a.data[list(idx), :].copy()

    def bwd(g):
        acc = np.zeros(a.shape)
        np.add.at(acc, list(idx), g)
        return (acc,)

    return _record("gather_rows", (a,), out, bwd,
                   lambda arrs: arrs[0][list(idx), :].copy())


def gather_cols(a: Tensor, idx: Sequence[int]) -> Tensor:
    a = tensor(a)
    if len(a.shape) != 2:
        raise ShapeError(f"gather_cols needs a 2-D tensor, got {a.shape}")
    idx = tuple(int(i) for i in idx)
    m = a.shape[1]
    for i in idx:
        if not 0 <= i < m:
            raise ShapeError(f"gather_cols: col {i} out of range for {a.shape}")
    out = a.data[:, list(idx)].copy()

    def bwd(g):
        acc = np.zeros(a.shape)
        np.add.at(acc.T, list(idx), g.T)
        return (acc,)

    return _record("gather_cols", (a,), out, bwd,
                   lambda arrs: arrs[0][:, list(idx)].copy())


def _concat(op_name, parts, axis) -> Tensor:
    parts = tuple(tensor(p) for p in parts)
    if not parts:
        raise ShapeError(f"{op_name}: nothing to concatenate")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(piece)
                     for piece in np.split(g, splits, axis=axis))

    return _record(op_name, parts, out, bwd,
                   lambda arrs: np.concatenate(list(arrs), axis=axis))


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    return _concat("concat_rows", parts, axis=0)


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    return _concat("concat_cols", parts, axis=1)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization with learnable gain/bias (1 x n each)."""
    x, gamma, beta = tensor(x), tensor(gamma), tensor(beta)
    n = x.shape[1]
    if gamma.shape != (1, n) or beta.shape != (1, n):
        raise ShapeError(
            f"layer_norm: gain/bias must be (1, {n}), got {gamma.shape}, {beta.shape}"
        )

    def f(xv, gv, bv):
        mu = xv.mean(axis=1, keepdims=True)
        var = xv.var(axis=1, keepdims=True)
        xhat = (xv - mu) / np.sqrt(var + eps)
        return xhat * gv + bv

    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data

    def bwd(g):
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv_std
        dgamma = (g * xhat).sum(axis=0, keepdims=True)
        dbeta = g.sum(axis=0, keepdims=True)
        return (dx, dgamma, dbeta)

    return _record("layer_norm", (x, gamma, beta), out, bwd,
                   lambda arrs: f(arrs[0], arrs[1], arrs[2]))


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - fd| / max(1, |fd|); the
    analytic side runs once under a fresh tape, the finite-difference side
    re-evaluates f untraced at x +/- eps per coordinate.
    """
    x = tensor(x)
    with Graph() as g:
        g.watch(x)
        y = f(x)
    analytic = backward(g, y)[x].data.reshape(-1)
    flat = x.data.reshape(-1).copy()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(flat.reshape(x.shape))).item()
        flat[i] = orig - eps
        lo = f(Tensor(flat.reshape(x.shape))).item()
        flat[i] = orig
        fd = (hi - lo) / (2.0 * eps)
        err = abs(analytic[i] - fd) / max(1.0, abs(fd))
        worst = max(worst, err)
    return worst
