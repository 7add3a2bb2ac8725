"""Dense float64 tensors with a reverse-mode gradient tape.

Every primitive records (op id, inputs, output, saved values) on the active
tape; `backward` walks the records in reverse and `Tape.replay` re-executes
them forward, bit-exactly, for determinism checks.  Tensors are plain value
holders: parameters are immutable during forward/backward and mutated only
by the optimizer between steps.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError

# Diagnostic counter: softmax rows where every logit was mask-suppressed.
# Such rows are defined as uniform; callers can inspect/reset the count.
_FULLY_MASKED_ROWS = 0
_MASK_FLOOR = -1e8

_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> bool:
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def fully_masked_row_count() -> int:
    return _FULLY_MASKED_ROWS


def reset_fully_masked_row_count() -> None:
    global _FULLY_MASKED_ROWS
    _FULLY_MASKED_ROWS = 0


class Tensor:
    """A float64 ndarray plus a gradient-participation flag."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # Operator sugar; every path goes through primitive_forward.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return multiply(self, _wrap(other))

    def __rmul__(self, other):
        return multiply(_wrap(other), self)

    def __neg__(self):
        return multiply(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Node:
    __slots__ = ("op", "inputs", "output", "saved")

    def __init__(self, op, inputs, output, saved):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.saved = saved


class Tape:
    """Ordered record of primitive applications (inputs precede consumers)."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, op, inputs, output, saved):
        self.nodes.append(Node(op, inputs, output, saved))

    def replay(self, verify: bool = True) -> bool:
        """Re-execute the tape forward from current leaf values.

        With unchanged leaves the recomputed outputs must equal the recorded
        ones bit-exactly.  Returns True when they do (always True when
        verify=False, after refreshing the recomputed value map).
        """
        values: dict[int, np.ndarray] = {}
        ok = True
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            out = _OPS[node.op].forward(node.saved, *args)
            values[id(node.output)] = out
            if verify and not np.array_equal(out, node.output.data):
                ok = False
        return ok


_TAPE_STACK: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class _Op:
    __slots__ = ("name", "forward", "vjp")

    def __init__(self, name, forward, vjp):
        self.name = name
        self.forward = forward
        self.vjp = vjp


_OPS: dict[str, _Op] = {}


def _register(name, forward, vjp):
    _OPS[name] = _Op(name, forward, vjp)


def primitive_forward(op: str, inputs, **saved) -> Tensor:
    """Apply primitive `op`, recording it on the active tape if any."""
    if op not in _OPS:
        raise LookupError(f"unknown primitive {op!r}")
    tensors = [_wrap(x) for x in inputs]
    arrays = [t.data for t in tensors]
    # overflow/invalid surface as NumericError below, not as warnings
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out_data = _OPS[op].forward(saved, *arrays)
        # single-reduction probe: any NaN/Inf makes the sum non-finite
        if _FINITE_CHECKS and not np.isfinite(np.sum(out_data)) \
                and not np.all(np.isfinite(out_data)):
            raise NumericError(f"{op}: non-finite output")
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        tape.record(op, tuple(tensors), out, saved)
    return out


def backward(tape: Tape, output: Tensor, seed: Tensor | np.ndarray | None = None,
             params=None):
    """Reverse-sweep the tape from `output` seeded with `seed`.

    Returns a dict mapping Tensor -> gradient array for every requires_grad
    leaf encountered.  When `params` (iterable of Tensors) is given,
    unreachable entries are filled with zeros.
    """
    produced = {id(node.output) for node in tape.nodes}
    if id(output) not in produced:
        raise LookupError("output is not recorded on this tape")
    if seed is None:
        seed_arr = np.ones_like(output.data)
    else:
        seed_arr = seed.data if isinstance(seed, Tensor) else np.asarray(seed, dtype=np.float64)
    if seed_arr.shape != output.data.shape:
        raise DimensionError(
            f"seed gradient shape {seed_arr.shape} != output shape {output.data.shape}")

    grads: dict[int, np.ndarray] = {id(output): seed_arr}
    holder: dict[int, Tensor] = {id(output): output}
    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.output))
        if g_out is None:
            continue
        in_arrays = [t.data for t in node.inputs]
        in_grads = _OPS[node.op].vjp(node.saved, g_out, in_arrays, node.output.data)
        for t, g in zip(node.inputs, in_grads):
            if g is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                holder[key] = t

    result: dict[Tensor, np.ndarray] = {}
    for key, tensor in holder.items():
        if tensor.requires_grad and id(tensor) not in produced:
            result[tensor] = grads[key]
    if params is not None:
        for p in params:
            if p not in result:
                result[p] = np.zeros_like(p.data)
    return result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- primitives

def _matmul_fwd(saved, a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    return np.matmul(a, b)


def _matmul_vjp(saved, g, inputs, out):
    a, b = inputs
    ga = _unbroadcast(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
    gb = _unbroadcast(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
    return ga, gb


_register("matmul", _matmul_fwd, _matmul_vjp)


def _binary_shape_check(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


def _add_fwd(saved, a, b):
    _binary_shape_check("add", a, b)
    return a + b


_register("add", _add_fwd,
          lambda saved, g, inputs, out: (_unbroadcast(g, inputs[0].shape),
                                         _unbroadcast(g, inputs[1].shape)))


def _sub_fwd(saved, a, b):
    _binary_shape_check("sub", a, b)
    return a - b


_register("sub", _sub_fwd,
          lambda saved, g, inputs, out: (_unbroadcast(g, inputs[0].shape),
                                         _unbroadcast(-g, inputs[1].shape)))


def _mul_fwd(saved, a, b):
    _binary_shape_check("multiply", a, b)
    return a * b


_register("multiply", _mul_fwd,
          lambda saved, g, inputs, out: (_unbroadcast(g * inputs[1], inputs[0].shape),
                                         _unbroadcast(g * inputs[0], inputs[1].shape)))

_register("relu", lambda saved, x: np.maximum(x, 0.0),
          lambda saved, g, inputs, out: (g * (inputs[0] > 0.0),))


def _sigmoid_fwd(saved, x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_register("sigmoid", _sigmoid_fwd,
          lambda saved, g, inputs, out: (g * out * (1.0 - out),))

_register("tanh", lambda saved, x: np.tanh(x),
          lambda saved, g, inputs, out: (g * (1.0 - out * out),))

_register("exp", lambda saved, x: np.exp(x),
          lambda saved, g, inputs, out: (g * out,))


def _log_fwd(saved, x):
    if np.any(x <= 0.0):
        raise NumericError("log: non-positive input")
    return np.log(x)


_register("log", _log_fwd,
          lambda saved, g, inputs, out: (g / inputs[0],))


def _softmax_fwd(saved, x):
    global _FULLY_MASKED_ROWS
    row_max = np.max(x, axis=-1, keepdims=True)
    masked = int(np.count_nonzero(row_max < _MASK_FLOOR))
    if masked:
        _FULLY_MASKED_ROWS += masked
    e = np.exp(x - row_max)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(saved, g, inputs, out):
    dot = np.sum(g * out, axis=-1, keepdims=True)
    return (out * (g - dot),)


_register("softmax", _softmax_fwd, _softmax_vjp)


def _layer_norm_fwd(saved, x):
    eps = saved.get("eps", 1e-5)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return (x - mu) * inv


def _layer_norm_vjp(saved, g, inputs, out):
    x = inputs[0]
    eps = saved.get("eps", 1e-5)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    gmean = g.mean(axis=-1, keepdims=True)
    gxmean = (g * xhat).mean(axis=-1, keepdims=True)
    return (inv * (g - gmean - xhat * gxmean),)


_register("layer_norm", _layer_norm_fwd, _layer_norm_vjp)


def _dropout_fwd(saved, x):
    mask = saved["mask"]
    if mask.shape != x.shape:
        raise DimensionError(f"dropout mask shape {mask.shape} != input {x.shape}")
    return x * (mask / (1.0 - saved["rate"]))


def _dropout_vjp(saved, g, inputs, out):
    return (g * (saved["mask"] / (1.0 - saved["rate"])),)


_register("dropout", _dropout_fwd, _dropout_vjp)


def _concat_fwd(saved, *arrays):
    return np.concatenate(arrays, axis=saved["axis"])


def _concat_vjp(saved, g, inputs, out):
    axis = saved["axis"]
    sizes = [a.shape[axis] for a in inputs]
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.split(g, splits, axis=axis))


_register("concat", _concat_fwd, _concat_vjp)


def _slice_fwd(saved, x):
    sel = [slice(None)] * x.ndim
    sel[saved["axis"]] = slice(saved["start"], saved["stop"], saved.get("step"))
    return x[tuple(sel)].copy()


def _slice_vjp(saved, g, inputs, out):
    grad = np.zeros_like(inputs[0])
    sel = [slice(None)] * grad.ndim
    sel[saved["axis"]] = slice(saved["start"], saved["stop"], saved.get("step"))
    grad[tuple(sel)] = g
    return (grad,)


_register("slice", _slice_fwd, _slice_vjp)

_register("reshape", lambda saved, x: x.reshape(saved["shape"]),
          lambda saved, g, inputs, out: (g.reshape(inputs[0].shape),))

_register("transpose", lambda saved, x: np.swapaxes(x, -1, -2).copy(),
          lambda saved, g, inputs, out: (np.swapaxes(g, -1, -2),))


def _tile_fwd(saved, x):
    reps = saved["reps"]
    if len(reps) != x.ndim:
        raise DimensionError("tile reps must match tensor rank")
    return np.tile(x, reps)


def _tile_vjp(saved, g, inputs, out):
    x = inputs[0]
    reps = saved["reps"]
    inter = []
    for r, s in zip(reps, x.shape):
        inter.extend((r, s))
    g = g.reshape(inter)
    return (g.sum(axis=tuple(range(0, 2 * x.ndim, 2))),)


_register("tile", _tile_fwd, _tile_vjp)


def _gather_fwd(saved, x):
    return np.take(x, saved["indices"], axis=0)


def _gather_vjp(saved, g, inputs, out):
    grad = np.zeros_like(inputs[0])
    np.add.at(grad, saved["indices"], g)
    return (grad,)


_register("gather", _gather_fwd, _gather_vjp)


def _sum_fwd(saved, x):
    return np.sum(x, axis=saved.get("axis"), keepdims=saved.get("keepdims", False))


def _reduction_vjp(saved, g, x, scale):
    axis = saved.get("axis")
    keepdims = saved.get("keepdims", False)
    if axis is None:
        return np.broadcast_to(np.asarray(g) * scale, x.shape).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g * scale, x.shape).copy()


_register("sum", _sum_fwd,
          lambda saved, g, inputs, out: (_reduction_vjp(saved, g, inputs[0], 1.0),))


def _mean_fwd(saved, x):
    return np.mean(x, axis=saved.get("axis"), keepdims=saved.get("keepdims", False))


def _mean_vjp(saved, g, inputs, out):
    x = inputs[0]
    axis = saved.get("axis")
    count = x.size if axis is None else x.shape[axis]
    return (_reduction_vjp(saved, g, x, 1.0 / count),)


_register("mean", _mean_fwd, _mean_vjp)

_register("square", lambda saved, x: x * x,
          lambda saved, g, inputs, out: (2.0 * inputs[0] * g,))


def _clip_fwd(saved, x):
    return np.clip(x, saved["lo"], saved["hi"])


def _clip_vjp(saved, g, inputs, out):
    x = inputs[0]
    return (g * ((x > saved["lo"]) & (x < saved["hi"])),)


_register("clip", _clip_fwd, _clip_vjp)


# ------------------------------------------------------------ name bindings

def matmul(a, b) -> Tensor:
    return primitive_forward("matmul", (a, b))


def add(a, b) -> Tensor:
    return primitive_forward("add", (a, b))


def sub(a, b) -> Tensor:
    return primitive_forward("sub", (a, b))


def multiply(a, b) -> Tensor:
    return primitive_forward("multiply", (a, b))


def relu(x) -> Tensor:
    return primitive_forward("relu", (x,))


def sigmoid(x) -> Tensor:
    return primitive_forward("sigmoid", (x,))


def tanh(x) -> Tensor:
    return primitive_forward("tanh", (x,))


def exp(x) -> Tensor:
    return primitive_forward("exp", (x,))


def log(x) -> Tensor:
    return primitive_forward("log", (x,))


def softmax(x) -> Tensor:
    return primitive_forward("softmax", (x,))


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    return primitive_forward("layer_norm", (x,), eps=eps)


def dropout(x, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _wrap(x)
    mask = (rng.random(x.shape) >= rate).astype(np.float64)
    return primitive_forward("dropout", (x,), mask=mask, rate=float(rate))


def concat(tensors, axis: int = -1) -> Tensor:
    return primitive_forward("concat", tuple(tensors), axis=axis)


def slice_axis(x, axis: int, start, stop, step=None) -> Tensor:
    return primitive_forward("slice", (x,), axis=axis, start=start, stop=stop, step=step)


def reshape(x, shape) -> Tensor:
    return primitive_forward("reshape", (x,), shape=tuple(shape))


def transpose(x) -> Tensor:
    return primitive_forward("transpose", (x,))


def tile(x, reps) -> Tensor:
    return primitive_forward("tile", (x,), reps=tuple(reps))


def gather(x, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    return primitive_forward("gather", (x,), indices=idx)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    return primitive_forward("sum", (x,), axis=axis, keepdims=keepdims)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    return primitive_forward("mean", (x,), axis=axis, keepdims=keepdims)


def square(x) -> Tensor:
    return primitive_forward("square", (x,))


def clip(x, lo: float, hi: float) -> Tensor:
    return primitive_forward("clip", (x,), lo=float(lo), hi=float(hi))


def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def softplus(x) -> Tensor:
    """log(1 + e^x), computed without overflow for large |x|."""
    ax = add(relu(x), relu(-x))
    return add(relu(x), log(add(Tensor(1.0), exp(-ax))))


def primitive_names() -> tuple:
    return tuple(sorted(_OPS))
