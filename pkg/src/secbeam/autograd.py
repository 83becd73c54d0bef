"""Minimal reverse-mode automatic differentiation over real-valued arrays.

A :class:`Graph` is an append-only Wengert list of nodes.  Node values are
computed eagerly at construction time (so routing decisions, e.g. top-k
gating or power-budget branches, may inspect values while the graph is
being built), and ``backward`` runs one reverse topological sweep.

Adjoint buffers materialize lazily: nodes untouched by the sweep hold
None internally, and the public accessor returns a zero buffer of the
value's shape.  Complex quantities elsewhere in the package are carried
as paired real and imaginary arrays, so this engine only ever sees
float64 buffers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Graph", "NodeRef"]

_UNARY = {"tanh", "relu", "exp", "log", "square", "sqrt", "softplus", "neg"}
_BINARY = {"add", "sub", "mul", "div"}
_REDUCTIONS = {"sum", "mean", "max", "min", "softmax_lastdim", "logsumexp"}


def _sigmoid(x):
    # stable: never exponentiates a positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Node:
    __slots__ = ("op", "inputs", "value", "adjoint", "meta")

    def __init__(self, op, inputs, value, meta=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.adjoint = None
        self.meta = meta


class NodeRef:
    """Handle to one node; valid only against the graph that issued it."""

    __slots__ = ("graph", "nid")

    def __init__(self, graph: "Graph", nid: int):
        self.graph = graph
        self.nid = nid

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.nid].value

    @property
    def shape(self):
        return self.graph.nodes[self.nid].value.shape

    def _wrap(self, other):
        if isinstance(other, NodeRef):
            return other
        return self.graph.constant(np.asarray(other, dtype=np.float64))

    def __add__(self, other):
        return self.graph.elementwise("add", self, self._wrap(other))

    def __radd__(self, other):
        return self._wrap(other) + self

    def __sub__(self, other):
        return self.graph.elementwise("sub", self, self._wrap(other))

    def __rsub__(self, other):
        return self.graph.elementwise("sub", self._wrap(other), self)

    def __mul__(self, other):
        return self.graph.elementwise("mul", self, self._wrap(other))

    def __rmul__(self, other):
        return self._wrap(other) * self

    def __truediv__(self, other):
        return self.graph.elementwise("div", self, self._wrap(other))

    def __rtruediv__(self, other):
        return self.graph.elementwise("div", self._wrap(other), self)

    def __neg__(self):
        return self.graph.elementwise("neg", self)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)


class Graph:
    """Append-only computation graph; single-threaded during build/backward."""

    def __init__(self):
        self.nodes: list[Node] = []

    # -- bookkeeping --------------------------------------------------

    def _push(self, op, value, inputs=(), meta=None) -> NodeRef:
        self.nodes.append(Node(op, inputs, value, meta))
        return NodeRef(self, len(self.nodes) - 1)

    def _node(self, ref: NodeRef) -> Node:
        if ref.graph is not self:
            raise ValueError("NodeRef belongs to a different graph")
        return self.nodes[ref.nid]

    def value(self, ref: NodeRef) -> np.ndarray:
        return self._node(ref).value

    def adjoint(self, ref: NodeRef) -> np.ndarray:
        node = self._node(ref)
        if node.adjoint is None:
            node.adjoint = np.zeros_like(node.value)
        return node.adjoint

    def __len__(self) -> int:
        return len(self.nodes)

    # -- leaves -------------------------------------------------------

    def constant(self, values, shape=None) -> NodeRef:
        """Gradient-free leaf. ``values`` length must match ``shape``."""
        arr = np.asarray(values, dtype=np.float64)
        if shape is not None:
            shape = tuple(shape)
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise ValueError(
                    f"constant: {arr.size} values do not fill shape {shape}")
            arr = arr.reshape(shape)
        return self._push("const", arr.copy())

    # parameters are structurally constants; their adjoints are read after
    # backward, so give them a distinct tag for introspection only
    def leaf(self, values) -> NodeRef:
        return self._push("leaf", np.asarray(values, dtype=np.float64).copy())

    # -- elementwise ----------------------------------------------------

    def elementwise(self, op: str, a: NodeRef, b: NodeRef | None = None) -> NodeRef:
        if op in _UNARY:
            if b is not None:
                raise ValueError(f"elementwise: {op} is unary")
            x = self._node(a).value
            if op == "tanh":
                val = np.tanh(x)
            elif op == "relu":
                val = np.maximum(x, 0.0)
            elif op == "exp":
                val = np.exp(x)
            elif op == "log":
                if np.any(x <= 0.0):
                    raise ValueError("log of non-positive value")
                val = np.log(x)
            elif op == "square":
                val = x * x
            elif op == "sqrt":
                if np.any(x < 0.0):
                    raise ValueError("sqrt of negative value")
                val = np.sqrt(x)
            elif op == "softplus":
                val = np.logaddexp(0.0, x)
            else:  # neg
                val = -x
            return self._push(op, val, (a.nid,))

        if op in _BINARY:
            if b is None:
                raise ValueError(f"elementwise: {op} is binary")
            x, y = self._node(a).value, self._node(b).value
            if x.shape != y.shape and x.size != 1 and y.size != 1:
                raise ValueError(
                    f"elementwise {op}: shapes {x.shape} and {y.shape} do not "
                    "match and neither is scalar")
            if op == "add":
                val = x + y
            elif op == "sub":
                val = x - y
            elif op == "mul":
                val = x * y
            else:
                val = x / y
            return self._push(op, val, (a.nid, b.nid))

        raise ValueError(f"unknown elementwise op {op!r}")

    def clip(self, a: NodeRef, lo: float, hi: float) -> NodeRef:
        """Hard clamp; gradient passes only strictly inside (lo, hi)."""
        x = self._node(a).value
        return self._push("clip", np.clip(x, lo, hi), (a.nid,),
                          meta=(float(lo), float(hi)))

    # -- matrix product -------------------------------------------------

    def matmul(self, a: NodeRef, b: NodeRef) -> NodeRef:
        """2D x 2D, stacked 3D x 3D, or 3D x 2D (shared right factor)."""
        x, y = self._node(a).value, self._node(b).value
        if x.ndim == 2 and y.ndim == 2:
            if x.shape[1] != y.shape[0]:
                raise ValueError(f"matmul: inner dims {x.shape} x {y.shape}")
            val = x @ y
        elif x.ndim == 3 and y.ndim == 3:
            if x.shape[0] != y.shape[0] or x.shape[2] != y.shape[1]:
                raise ValueError(f"matmul: stacked dims {x.shape} x {y.shape}")
            val = np.matmul(x, y)
        elif x.ndim == 3 and y.ndim == 2:
            if x.shape[2] != y.shape[0]:
                raise ValueError(f"matmul: inner dims {x.shape} x {y.shape}")
            # one flat gemm instead of a stack of tiny per-item gemms
            val = (x.reshape(-1, x.shape[2]) @ y).reshape(
                x.shape[0], x.shape[1], y.shape[1])
        else:
            raise ValueError(f"matmul: unsupported ranks {x.ndim} x {y.ndim}")
        return self._push("matmul", val, (a.nid, b.nid))

    def matmul_t(self, a: NodeRef, b: NodeRef) -> NodeRef:
        """a @ b.T for 2D b; a may carry leading batch axes."""
        x, y = self._node(a).value, self._node(b).value
        if y.ndim != 2 or x.shape[-1] != y.shape[1]:
            raise ValueError(f"matmul_t: {x.shape} x {y.shape}^T")
        if x.ndim == 2:
            val = x @ y.T
        else:
            val = (x.reshape(-1, x.shape[-1]) @ y.T).reshape(
                x.shape[:-1] + (y.shape[0],))
        return self._push("matmul_t", val, (a.nid, b.nid))

    # -- reductions -------------------------------------------------------

    def reduce(self, op: str, a: NodeRef, axis: int | None = None) -> NodeRef:
        if op not in _REDUCTIONS:
            raise ValueError(f"unknown reduction {op!r}")
        x = self._node(a).value
        if axis is not None and not -x.ndim <= axis < x.ndim:
            raise ValueError(f"axis {axis} invalid for shape {x.shape}")
        if (x.size == 0) or (axis is not None and x.shape[axis] == 0):
            raise ValueError("empty reduction axis")
        if op == "sum":
            val = np.sum(x, axis=axis)
        elif op == "mean":
            val = np.mean(x, axis=axis)
        elif op == "max":
            val = np.max(x, axis=axis)
        elif op == "min":
            val = np.min(x, axis=axis)
        elif op == "softmax_lastdim":
            shifted = x - np.max(x, axis=-1, keepdims=True)
            e = np.exp(shifted)
            val = e / np.sum(e, axis=-1, keepdims=True)
            axis = -1
        else:  # logsumexp
            m = np.max(x, axis=axis, keepdims=True)
            val = np.squeeze(m, axis=axis) + np.log(
                np.sum(np.exp(x - m), axis=axis))
        return self._push(op, val, (a.nid,), meta=axis)

    def sum(self, a, axis=None):
        return self.reduce("sum", a, axis)

    def mean(self, a, axis=None):
        return self.reduce("mean", a, axis)

    def softmax_lastdim(self, a):
        return self.reduce("softmax_lastdim", a)

    # -- structure ----------------------------------------------------

    def reshape(self, a: NodeRef, shape) -> NodeRef:
        x = self._node(a).value
        return self._push("reshape", x.reshape(shape), (a.nid,))

    def swap_last2(self, a: NodeRef) -> NodeRef:
        """Transpose the last two axes (plain transpose for 2D)."""
        x = self._node(a).value
        if x.ndim < 2:
            raise ValueError("swap_last2 needs rank >= 2")
        return self._push("swap_last2", np.swapaxes(x, -1, -2), (a.nid,))

    def transpose(self, a: NodeRef, perm) -> NodeRef:
        """General axis permutation."""
        x = self._node(a).value
        perm = tuple(perm)
        if sorted(perm) != list(range(x.ndim)):
            raise ValueError(f"transpose: {perm} is not a permutation "
                             f"of rank {x.ndim}")
        return self._push("transpose", np.transpose(x, perm), (a.nid,),
                          meta=perm)

    def concat(self, parts, axis: int) -> NodeRef:
        if not parts:
            raise ValueError("concat of nothing")
        vals = [self._node(p).value for p in parts]
        widths = [v.shape[axis] for v in vals]
        return self._push("concat", np.concatenate(vals, axis=axis),
                          tuple(p.nid for p in parts), meta=(axis, widths))

    def slice_axis(self, a: NodeRef, axis: int, start: int, stop: int) -> NodeRef:
        x = self._node(a).value
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, stop)
        return self._push("slice", x[tuple(sl)].copy(), (a.nid,),
                          meta=(axis, start, stop))

    def take_rows(self, a: NodeRef, idx: np.ndarray) -> NodeRef:
        x = self._node(a).value
        if x.ndim != 2:
            raise ValueError("take_rows needs a 2D operand")
        idx = np.asarray(idx, dtype=np.intp)
        return self._push("take_rows", x[idx], (a.nid,), meta=idx)

    def scatter_rows(self, src: NodeRef, idx: np.ndarray, n_rows: int) -> NodeRef:
        """Place rows of src at positions idx of a zero [n_rows x k] matrix."""
        x = self._node(src).value
        idx = np.asarray(idx, dtype=np.intp)
        out = np.zeros((n_rows, x.shape[1]))
        np.add.at(out, idx, x)
        return self._push("scatter_rows", out, (src.nid,), meta=idx)

    # row-broadcast helpers; kept out of `elementwise` so its strict
    # equal-shape-or-scalar contract stays intact
    def add_rowvec(self, a: NodeRef, b: NodeRef) -> NodeRef:
        """a[..., n] + b[n], broadcast across leading axes."""
        x, y = self._node(a).value, self._node(b).value
        if y.ndim != 1 or x.shape[-1] != y.shape[0]:
            raise ValueError(f"add_rowvec: {x.shape} + {y.shape}")
        return self._push("add_rowvec", x + y, (a.nid, b.nid))

    def mul_rowvec(self, a: NodeRef, b: NodeRef) -> NodeRef:
        """a[..., n] * b[n], broadcast across leading axes."""
        x, y = self._node(a).value, self._node(b).value
        if y.ndim != 1 or x.shape[-1] != y.shape[0]:
            raise ValueError(f"mul_rowvec: {x.shape} * {y.shape}")
        return self._push("mul_rowvec", x * y, (a.nid, b.nid))

    def mul_rowscalar(self, a: NodeRef, s: NodeRef) -> NodeRef:
        """Scale row i of a[T, n] by the scalar s[T][i]."""
        x, y = self._node(a).value, self._node(s).value
        self._check_rowscalar(x, y)
        return self._push("mul_rowscalar", x * y[:, None], (a.nid, s.nid))

    def sub_rowscalar(self, a: NodeRef, s: NodeRef) -> NodeRef:
        x, y = self._node(a).value, self._node(s).value
        self._check_rowscalar(x, y)
        return self._push("sub_rowscalar", x - y[:, None], (a.nid, s.nid))

    def div_rowscalar(self, a: NodeRef, s: NodeRef) -> NodeRef:
        x, y = self._node(a).value, self._node(s).value
        self._check_rowscalar(x, y)
        return self._push("div_rowscalar", x / y[:, None], (a.nid, s.nid))

    @staticmethod
    def _check_rowscalar(x, y):
        if x.ndim != 2 or y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError(f"row-scalar op: {x.shape} with {y.shape}")

    # -- backward ----------------------------------------------------

    def backward(self, root: NodeRef) -> None:
        """Populate adjoints of every node reachable from ``root``.

        Resets all adjoints first, so repeated calls are idempotent.
        """
        rnode = self._node(root)
        if rnode.value.size != 1:
            raise ValueError(
                f"backward root must be scalar-shaped, got {rnode.value.shape}")
        for n in self.nodes:
            n.adjoint = None
        rnode.adjoint = np.ones_like(rnode.value)
        nodes = self.nodes
        for nid in range(root.nid, -1, -1):
            node = nodes[nid]
            if node.adjoint is not None and node.inputs:
                _BACKWARD[node.op](self, node)


def _acc(target: Node, grad, fresh: bool):
    """Accumulate grad into target.adjoint.

    fresh=True means grad is a private temporary this rule just built, so
    it may be adopted directly; shared views are copied on first touch.
    """
    if target.adjoint is None:
        target.adjoint = grad if fresh else grad.copy()
    else:
        target.adjoint += grad


def _acc_bcast(target: Node, grad, out_shape, fresh: bool):
    # binary ops allow scalar broadcast; reduce the gradient back if so
    if target.value.shape != out_shape and target.value.size == 1:
        _acc(target, np.asarray(np.sum(grad)).reshape(target.value.shape), True)
    else:
        _acc(target, grad, fresh)


def _ensure(node: Node):
    if node.adjoint is None:
        node.adjoint = np.zeros_like(node.value)
    return node.adjoint


def _bw_add(g: Graph, n: Node):
    shape = n.value.shape
    _acc_bcast(g.nodes[n.inputs[0]], n.adjoint, shape, False)
    _acc_bcast(g.nodes[n.inputs[1]], n.adjoint, shape, False)


def _bw_sub(g: Graph, n: Node):
    shape = n.value.shape
    _acc_bcast(g.nodes[n.inputs[0]], n.adjoint, shape, False)
    _acc_bcast(g.nodes[n.inputs[1]], -n.adjoint, shape, True)


def _bw_mul(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    shape = n.value.shape
    _acc_bcast(a, n.adjoint * b.value, shape, True)
    _acc_bcast(b, n.adjoint * a.value, shape, True)


def _bw_div(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    shape = n.value.shape
    _acc_bcast(a, n.adjoint / b.value, shape, True)
    _acc_bcast(b, -n.adjoint * a.value / (b.value * b.value), shape, True)


def _bw_tanh(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], n.adjoint * (1.0 - n.value * n.value), True)


def _bw_relu(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, n.adjoint * (a.value > 0.0), True)


def _bw_exp(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], n.adjoint * n.value, True)


def _bw_log(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, n.adjoint / a.value, True)


def _bw_square(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, 2.0 * n.adjoint * a.value, True)


def _bw_sqrt(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], 0.5 * n.adjoint / n.value, True)


def _bw_softplus(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, n.adjoint * _sigmoid(a.value), True)


def _bw_neg(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], -n.adjoint, True)


def _bw_clip(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    lo, hi = n.meta
    _acc(a, n.adjoint * ((a.value > lo) & (a.value < hi)), True)


def _bw_matmul(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    x, y, grad = a.value, b.value, n.adjoint
    if x.ndim == y.ndim:  # (2D,2D) or (3D,3D)
        _acc(a, np.matmul(grad, np.swapaxes(y, -1, -2)), True)
        _acc(b, np.matmul(np.swapaxes(x, -1, -2), grad), True)
    else:  # (3D,2D): right factor shared across the batch; flat gemms
        g2 = grad.reshape(-1, grad.shape[2])
        x2 = x.reshape(-1, x.shape[2])
        _acc(a, (g2 @ y.T).reshape(x.shape), True)
        _acc(b, x2.T @ g2, True)


def _bw_matmul_t(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    x, y, grad = a.value, b.value, n.adjoint
    if x.ndim == 2:
        _acc(a, grad @ y, True)
        _acc(b, grad.T @ x, True)
    else:
        g2 = grad.reshape(-1, grad.shape[-1])
        x2 = x.reshape(-1, x.shape[-1])
        _acc(a, (g2 @ y).reshape(x.shape), True)
        _acc(b, g2.T @ x2, True)


def _expand(grad, shape, axis):
    if axis is None:
        return np.broadcast_to(grad, shape)
    return np.broadcast_to(np.expand_dims(grad, axis), shape)


def _bw_sum(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, _expand(n.adjoint, a.value.shape, n.meta), False)


def _bw_mean(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    count = a.value.size if n.meta is None else a.value.shape[n.meta]
    _acc(a, _expand(n.adjoint, a.value.shape, n.meta) / count, True)


def _bw_extremum(g: Graph, n: Node, arg):
    # gradient routed to the first attaining index (determinism)
    a = g.nodes[n.inputs[0]]
    axis = n.meta
    grad = np.zeros_like(a.value)
    if axis is None:
        grad.reshape(-1)[arg(a.value)] = n.adjoint
    else:
        idx = arg(a.value, axis=axis)
        np.put_along_axis(grad, np.expand_dims(idx, axis),
                          np.expand_dims(n.adjoint, axis), axis)
    _acc(a, grad, True)


def _bw_softmax(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    y, grad = n.value, n.adjoint
    dot = np.sum(grad * y, axis=-1, keepdims=True)
    _acc(a, (grad - dot) * y, True)


def _bw_logsumexp(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    axis = n.meta
    m = np.max(a.value, axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    soft = e / np.sum(e, axis=axis, keepdims=True)
    grad = n.adjoint if axis is None else np.expand_dims(n.adjoint, axis)
    _acc(a, grad * soft, True)


def _bw_reshape(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    _acc(a, n.adjoint.reshape(a.value.shape), False)


def _bw_swap_last2(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], np.swapaxes(n.adjoint, -1, -2), False)


def _bw_transpose(g: Graph, n: Node):
    inverse = np.argsort(n.meta)
    _acc(g.nodes[n.inputs[0]], np.transpose(n.adjoint, inverse), False)


def _bw_concat(g: Graph, n: Node):
    axis, widths = n.meta
    offset = 0
    for nid, w in zip(n.inputs, widths):
        sl = [slice(None)] * n.adjoint.ndim
        sl[axis] = slice(offset, offset + w)
        _acc(g.nodes[nid], n.adjoint[tuple(sl)], False)
        offset += w


def _bw_slice(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    axis, start, stop = n.meta
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(start, stop)
    _ensure(a)[tuple(sl)] += n.adjoint


def _bw_take_rows(g: Graph, n: Node):
    a = g.nodes[n.inputs[0]]
    np.add.at(_ensure(a), n.meta, n.adjoint)


def _bw_scatter_rows(g: Graph, n: Node):
    _acc(g.nodes[n.inputs[0]], n.adjoint[n.meta], True)


def _bw_add_rowvec(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    _acc(a, n.adjoint, False)
    _acc(b, n.adjoint.reshape(-1, n.adjoint.shape[-1]).sum(axis=0), True)


def _bw_mul_rowvec(g: Graph, n: Node):
    a, b = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    _acc(a, n.adjoint * b.value, True)
    flat = (n.adjoint * a.value).reshape(-1, n.adjoint.shape[-1])
    _acc(b, flat.sum(axis=0), True)


def _bw_mul_rowscalar(g: Graph, n: Node):
    a, s = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    _acc(a, n.adjoint * s.value[:, None], True)
    _acc(s, np.sum(n.adjoint * a.value, axis=1), True)


def _bw_sub_rowscalar(g: Graph, n: Node):
    a, s = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    _acc(a, n.adjoint, False)
    _acc(s, -np.sum(n.adjoint, axis=1), True)


def _bw_div_rowscalar(g: Graph, n: Node):
    a, s = g.nodes[n.inputs[0]], g.nodes[n.inputs[1]]
    _acc(a, n.adjoint / s.value[:, None], True)
    _acc(s, -np.sum(n.adjoint * a.value, axis=1) / (s.value * s.value), True)


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "div": _bw_div,
    "tanh": _bw_tanh,
    "relu": _bw_relu,
    "exp": _bw_exp,
    "log": _bw_log,
    "square": _bw_square,
    "sqrt": _bw_sqrt,
    "softplus": _bw_softplus,
    "neg": _bw_neg,
    "clip": _bw_clip,
    "matmul": _bw_matmul,
    "matmul_t": _bw_matmul_t,
    "sum": _bw_sum,
    "mean": _bw_mean,
    "max": lambda g, n: _bw_extremum(g, n, np.argmax),
    "min": lambda g, n: _bw_extremum(g, n, np.argmin),
    "softmax_lastdim": _bw_softmax,
    "logsumexp": _bw_logsumexp,
    "reshape": _bw_reshape,
    "swap_last2": _bw_swap_last2,
    "transpose": _bw_transpose,
    "concat": _bw_concat,
    "slice": _bw_slice,
    "take_rows": _bw_take_rows,
    "scatter_rows": _bw_scatter_rows,
    "add_rowvec": _bw_add_rowvec,
    "mul_rowvec": _bw_mul_rowvec,
    "mul_rowscalar": _bw_mul_rowscalar,
    "sub_rowscalar": _bw_sub_rowscalar,
    "div_rowscalar": _bw_div_rowscalar,
}
