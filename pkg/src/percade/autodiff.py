"""Define-by-run reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to :class:`Tensor` values;
``backward`` replays the records in reverse and accumulates exact gradients
for every tensor created with ``requires_grad=True``.  Tapes are rebuilt for
each forward pass: the graphs here are small, and rebuilding keeps replay
bitwise deterministic.

Every op validates operand shapes and raises :class:`NonFiniteValue` if it
produces a NaN or infinity, so numerical blow-ups surface at their source.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class DiffError(ValueError):
    """Base class for tape construction / differentiation errors."""


class ShapeMismatch(DiffError):
    pass


class NonFiniteValue(DiffError):
    pass


class NonDeterministicBuilder(DiffError):
    pass


class Tensor:
    """Dense float64 array with an optional gradient requirement.

    Tensors are value-semantic: ops never mutate their inputs, and a tensor
    may be transferred between threads freely.  Per-tape bookkeeping lives on
    the tape, not on the tensor, so one parameter tensor can participate in
    many tapes.
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        # asarray with order="C" keeps 0-d scalars 0-d (ascontiguousarray would
        # promote them to shape (1,))
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"


def _as_index(idx) -> np.ndarray:
    out = np.asarray(idx, dtype=np.int64)
    if out.ndim != 1:
        raise ShapeMismatch("index arrays must be 1-D")
    return out


class Tape:
    """Append-only record of a forward computation.

    Records are stored in topological order by construction (an op can only
    consume tensors that already exist), which ``backward`` asserts.  A tape
    is single-threaded; run independent tapes for parallel forwards.
    """

    def __init__(self):
        self._records: list[tuple] = []  # (op, out, inputs, ctx)
        self._index: dict[int, int] = {}  # id(tensor) -> insertion order
        self._needs: dict[int, bool] = {}  # id(tensor) -> grad flows here
        self._tensors: dict[int, Tensor] = {}
        self._counter = 0

    # -- bookkeeping ----------------------------------------------------

    def _touch(self, t: Tensor) -> None:
        key = id(t)
        if key not in self._index:
            self._index[key] = self._counter
            self._counter += 1
            self._needs[key] = t.requires_grad
            self._tensors[key] = t

    def _emit(self, op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], ctx) -> Tensor:
        for t in inputs:
            self._touch(t)
        if not np.all(np.isfinite(out_data)):
            raise NonFiniteValue(f"op '{op}' produced a non-finite value")
        out = Tensor(out_data)
        key = id(out)
        self._index[key] = self._counter
        self._counter += 1
        self._needs[key] = any(self._needs[id(t)] for t in inputs)
        self._tensors[key] = out
        self._records.append((op, out, inputs, ctx))
        return out

    # -- primitives ------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
        return self._emit("add", a.data + b.data, (a, b), None)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")
        return self._emit("sub", a.data - b.data, (a, b), None)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")
        return self._emit("mul", a.data * b.data, (a, b), None)

    def scale(self, a: Tensor, c: float) -> Tensor:
        return self._emit("scale", a.data * float(c), (a,), float(c))

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.data.ndim != 2 or b.data.ndim not in (1, 2):
            raise ShapeMismatch("matmul expects 2-D @ (1-D or 2-D)")
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        return self._emit("matmul", a.data @ b.data, (a, b), None)

    def transpose(self, a: Tensor) -> Tensor:
        if a.data.ndim != 2:
            raise ShapeMismatch("transpose expects a matrix")
        return self._emit("transpose", np.ascontiguousarray(a.data.T), (a,), None)

    def concat(self, parts: list[Tensor], axis: int) -> Tensor:
        if not parts:
            raise ShapeMismatch("concat of nothing")
        ref = parts[0].shape
        for p in parts[1:]:
            if len(p.shape) != len(ref):
                raise ShapeMismatch("concat: rank mismatch")
            for ax, (ra, pa) in enumerate(zip(ref, p.shape)):
                if ax != axis and ra != pa:
                    raise ShapeMismatch(f"concat: {ref} vs {p.shape} along axis {axis}")
        widths = [p.shape[axis] for p in parts]
        out = np.concatenate([p.data for p in parts], axis=axis)
        return self._emit("concat", out, tuple(parts), (axis, widths))

    def sum(self, a: Tensor) -> Tensor:
        return self._emit("sum", np.asarray(a.data.sum()), (a,), a.shape)

    def sigmoid(self, a: Tensor) -> Tensor:
        x = a.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return self._emit("sigmoid", out, (a,), out)

    def relu(self, a: Tensor) -> Tensor:
        return self._emit("relu", np.maximum(a.data, 0.0), (a,), a.data > 0)

    def leaky_relu(self, a: Tensor, alpha: float = 0.2) -> Tensor:
        x = a.data
        out = np.where(x > 0, x, alpha * x)
        return self._emit("leaky_relu", out, (a,), (x > 0, float(alpha)))

    def tanh(self, a: Tensor) -> Tensor:
        out = np.tanh(a.data)
        return self._emit("tanh", out, (a,), out)

    def softmax(self, a: Tensor) -> Tensor:
        if a.data.ndim != 1:
            raise ShapeMismatch("softmax expects a vector")
        z = a.data - a.data.max()
        e = np.exp(z)
        out = e / e.sum()
        return self._emit("softmax", out, (a,), out)

    def reciprocal(self, a: Tensor) -> Tensor:
        with np.errstate(divide="ignore"):
            out = 1.0 / a.data
        return self._emit("reciprocal", out, (a,), out)

    def gather_rows(self, a: Tensor, idx) -> Tensor:
        idx = _as_index(idx)
        if a.data.ndim not in (1, 2):
            raise ShapeMismatch("gather_rows expects a 1-D or 2-D tensor")
        return self._emit("gather_rows", a.data[idx], (a,), (idx, a.shape))

    def scale_rows(self, a: Tensor, s: Tensor) -> Tensor:
        if a.data.ndim != 2 or s.data.ndim != 1 or a.shape[0] != s.shape[0]:
            raise ShapeMismatch(f"scale_rows: {a.shape} by {s.shape}")
        out = kernels.scale_rows(a.data, s.data)
        return self._emit("scale_rows", out, (a, s), None)

    def segment_sum(self, a: Tensor, seg, n: int) -> Tensor:
        seg = _as_index(seg)
        if seg.shape[0] != a.shape[0]:
            raise ShapeMismatch("segment_sum: segment ids must match rows")
        if a.data.ndim == 2:
            out = kernels.segment_sum_rows(a.data, seg, n)
        elif a.data.ndim == 1:
            out = kernels.segment_sum_vec(a.data, seg, n)
        else:
            raise ShapeMismatch("segment_sum expects a 1-D or 2-D tensor")
        return self._emit("segment_sum", out, (a,), seg)

    def segment_softmax(self, a: Tensor, seg, n: int) -> Tensor:
        """Softmax of a vector within each segment (max-subtracted)."""
        seg = _as_index(seg)
        if a.data.ndim != 1 or seg.shape[0] != a.shape[0]:
            raise ShapeMismatch("segment_softmax expects matching vectors")
        mx = kernels.segment_max_vec(a.data, seg, n)
        e = np.exp(a.data - mx[seg])
        tot = kernels.segment_sum_vec(e, seg, n)
        out = e / tot[seg]
        return self._emit("segment_softmax", out, (a,), (seg, n, out))

    # -- reverse pass ----------------------------------------------------

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Exact gradients of a scalar ``loss`` for every requires_grad leaf.

        Accumulation happens in reverse record order, which fixes the
        floating-point result: replaying an identical tape reproduces the
        gradients bitwise.
        """
        if loss.shape != ():
            raise DiffError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._index:
            raise DiffError("loss tensor does not live on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}

        for op, out, inputs, ctx in reversed(self._records):
            for t in inputs:
                # append-only tapes cannot form cycles
                assert self._index[id(t)] < self._index[id(out)]
            g = grads.get(id(out))
            if g is None:
                continue
            for t, piece in zip(inputs, self._input_grads(op, out, inputs, ctx, g)):
                if piece is None or not self._needs[id(t)]:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + piece
                else:
                    grads[key] = piece

        return {
            t: grads[key]
            for key, t in self._tensors.items()
            if t.requires_grad and key in grads
        }

    @staticmethod
    def _input_grads(op, out, inputs, ctx, g):
        if op == "add":
            return (g, g)
        if op == "sub":
            return (g, -g)
        if op == "mul":
            a, b = inputs
            return (g * b.data, g * a.data)
        if op == "scale":
            return (g * ctx,)
        if op == "matmul":
            a, b = inputs
            if b.data.ndim == 1:
                return (np.outer(g, b.data), a.data.T @ g)
            return (g @ b.data.T, a.data.T @ g)
        if op == "transpose":
            return (np.ascontiguousarray(g.T),)
        if op == "concat":
            axis, widths = ctx
            pieces = []
            start = 0
            for w in widths:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(start, start + w)
                pieces.append(np.ascontiguousarray(g[tuple(sl)]))
                start += w
            return tuple(pieces)
        if op == "sum":
            return (np.full(ctx, float(g)),)
        if op == "sigmoid":
            y = ctx
            return (g * y * (1.0 - y),)
        if op == "relu":
            return (g * ctx,)
        if op == "leaky_relu":
            mask, alpha = ctx
            return (g * np.where(mask, 1.0, alpha),)
        if op == "tanh":
            y = ctx
            return (g * (1.0 - y * y),)
        if op == "softmax":
            y = ctx
            return (y * (g - float(np.dot(y, g))),)
        if op == "reciprocal":
            y = ctx
            return (-g * y * y,)
        if op == "gather_rows":
            idx, shape = ctx
            if len(shape) == 2:
                da = kernels.segment_sum_rows(np.ascontiguousarray(g), idx, shape[0])
            else:
                da = kernels.segment_sum_vec(np.ascontiguousarray(g), idx, shape[0])
            return (da,)
        if op == "scale_rows":
            a, s = inputs
            return (kernels.scale_rows(g, s.data), np.sum(g * a.data, axis=1))
        if op == "segment_sum":
            seg = ctx
            return (np.ascontiguousarray(g[seg]),)
        if op == "segment_softmax":
            seg, n, y = ctx
            t = kernels.segment_sum_vec(y * g, seg, n)
            return (y * (g - t[seg]),)
        raise DiffError(f"unknown op '{op}'")  # pragma: no cover


def finite_diff_check(builder, params: list[Tensor], step: float = 1e-5) -> float:
    """Worst relative error between tape gradients and central differences.

    ``builder`` must deterministically map the current contents of ``params``
    to a ``(tape, loss)`` pair; determinism is verified by evaluating it
    twice.  The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    tape, loss = builder()
    _, loss_again = builder()
    if float(loss.data) != float(loss_again.data):
        raise NonDeterministicBuilder("builder produced two different forward values")
    grads = tape.backward(loss)

    worst = 0.0
    for p in params:
        analytic = grads.get(p)
        if analytic is None:
            analytic = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        aflat = np.asarray(analytic, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            _, lp = builder()
            flat[i] = keep - step
            _, lm = builder()
            flat[i] = keep
            numeric = (float(lp.data) - float(lm.data)) / (2.0 * step)
            err = abs(float(aflat[i]) - numeric) / max(abs(float(aflat[i])), abs(numeric), 1e-8)
            if err > worst:
                worst = err
    return worst
