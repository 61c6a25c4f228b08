"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a :class:`Tensor` wraps a numpy array,
every differentiable operation appends one node to a thread-local
:class:`Tape`, and :func:`backward` sweeps the tape in reverse execution
order.  Recording order is topological by construction, so the sweep
visits each node exactly once and accumulates (sums) gradients at fan-in
points.

All data is float64.  Reductions use numpy's fixed summation order, so
results are reproducible bit-for-bit on one machine for a given seed.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "no_grad",
    "new_tape",
    "backward",
    "grad_check",
    "add",
    "sub",
    "mul",
    "neg",
    "exp",
    "relu",
    "sigmoid",
    "softplus",
    "silu",
    "mean",
    "tsum",
    "reshape",
    "reverse",
    "pad1d",
    "narrow",
    "matmul",
    "conv1d",
    "causal_depthwise_conv1d",
    "maxpool1d",
    "dropout",
    "softmax_cross_entropy",
    "selective_scan",
]

# exp() saturates here so that finite inputs can never produce inf
_EXP_CLIP = 700.0


class Tensor:
    """A dense float64 array that can participate in gradient taping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are wrapped as constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a recorded primitive")
        return mul(self, _as_tensor(1.0 / other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "inputs", "backward_fn", "name")

    def __init__(self, out, inputs, backward_fn, name):
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.name = name


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        self.nodes.clear()


class _TapeState(threading.local):
    def __init__(self):
        self.stack = [Tape()]
        self.enabled = True


_STATE = _TapeState()


def current_tape() -> Tape:
    return _STATE.stack[-1]


@contextmanager
def no_grad():
    """Disable tape recording inside the context (eval-mode forward passes)."""
    prev = _STATE.enabled
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = prev


@contextmanager
def new_tape():
    """Record onto a fresh tape, isolated from the caller's graph."""
    tape = Tape()
    _STATE.stack.append(tape)
    try:
        yield tape
    finally:
        _STATE.stack.pop()


def _record(out_data, inputs, backward_fn, name):
    """Wrap ``out_data`` and append a tape node when recording is active."""
    track = _STATE.enabled and any(i.requires_grad for i in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        current_tape().nodes.append(_Node(out, tuple(inputs), backward_fn, name))
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def backward(loss: Tensor, retain: bool = False) -> None:
    """Populate ``grad`` of every reachable requires_grad tensor.

    ``loss`` must be a scalar recorded on the active tape.  Gradients
    accumulate into ``.grad`` (callers zero them between steps).  The tape
    is cleared afterwards unless ``retain`` is true.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    tape = current_tape()
    produced = {id(node.out) for node in tape.nodes}
    if id(loss) not in produced:
        raise ContractError("loss is not on the active tape")

    adjoint = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        g = adjoint.pop(id(node.out), None)
        if g is None:
            continue
        grads = node.backward_fn(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if id(inp) in produced:
                key = id(inp)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + gi
                else:
                    adjoint[key] = gi
            else:
                inp.grad = gi if inp.grad is None else inp.grad + gi
    if not retain:
        tape.clear()


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record(out, (a, b), bwd, "mul")


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Tensor) -> Tensor:
    """Elementwise exponential, saturating above 700 to stay finite."""
    clipped = np.minimum(a.data, _EXP_CLIP)
    out = np.exp(clipped)
    live = a.data < _EXP_CLIP

    def bwd(g):
        return (g * out * live,)

    return _record(out, (a,), bwd, "exp")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = a.data * mask

    def bwd(g):
        return (g * mask,)

    return _record(out, (a,), bwd, "relu")


def sigmoid(a: Tensor) -> Tensor:
    """Numerically stable logistic; output is strictly inside (0, 1)."""
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), bwd, "sigmoid")


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x) computed without overflow; derivative is sigmoid(x)."""
    x = a.data
    out = np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))

    def bwd(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _record(out, (a,), bwd, "softplus")


def silu(a: Tensor) -> Tensor:
    return mul(a, sigmoid(a))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.mean(axis=axis)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.full(shape, g / a.data.size),)
        n = shape[axis]
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return _record(out, (a,), bwd, "mean")


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.sum(axis=axis)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            return (np.full(shape, g),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _record(out, (a,), bwd, "sum")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape).copy()
    orig = a.data.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _record(out, (a,), bwd, "reshape")


def reverse(a: Tensor, axis: int = -1) -> Tensor:
    """Flip along ``axis`` (the time axis by default)."""
    out = np.flip(a.data, axis=axis).copy()

    def bwd(g):
        return (np.flip(g, axis=axis).copy(),)

    return _record(out, (a,), bwd, "reverse")


def pad1d(a: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    if left < 0 or right < 0:
        raise ContractError("pad1d amounts must be non-negative")
    width = [(0, 0)] * (a.data.ndim - 1) + [(left, right)]
    out = np.pad(a.data, width)
    n = a.data.shape[-1]

    def bwd(g):
        return (g[..., left:left + n].copy(),)

    return _record(out, (a,), bwd, "pad1d")


def narrow(a: Tensor, start: int, length: int, axis: int = -1) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    ax = axis % a.data.ndim
    if start < 0 or start + length > a.data.shape[ax]:
        raise ShapeError(
            f"narrow [{start}:{start + length}] out of range for axis {ax} "
            f"of size {a.data.shape[ax]}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[ax] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx].copy()
    shape = a.data.shape

    def bwd(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _record(out, (a,), bwd, "narrow")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner axes disagree: {a.data.shape} vs {b.data.shape}"
        )
    out = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = np.matmul(g, bd.swapaxes(-1, -2))
        gb = np.matmul(ad.swapaxes(-1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record(out, (a, b), bwd, "matmul")


def _to_batched(x: np.ndarray, what: str):
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"{what} must be 2-D (C,L) or 3-D (B,C,L), got {x.ndim}-D")


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Strided cross-correlation along the last axis (no kernel flip).

    ``x`` is (C_in, L) or (B, C_in, L); ``weight`` is (C_out, C_in, k);
    ``bias`` is (C_out,).  Output length is
    ``floor((L + 2*padding - k)/stride) + 1``.
    """
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ContractError(f"padding must be >= 0, got {padding}")
    xd, squeeze = _to_batched(x.data, "conv1d input")
    wd = weight.data
    if wd.ndim != 3:
        raise ShapeError(f"conv1d weight must be (C_out, C_in, k), got {wd.shape}")
    bsz, c_in, length = xd.shape
    c_out, wc_in, k = wd.shape
    if wc_in != c_in:
        raise ShapeError(
            f"conv1d channel axes disagree: input has {c_in} channels, "
            f"weight expects {wc_in}"
        )
    if k > length + 2 * padding:
        raise ShapeError(
            f"kernel size {k} exceeds padded length {length + 2 * padding}"
        )
    if bias is not None and bias.data.shape != (c_out,):
        raise ShapeError(
            f"conv1d bias must be ({c_out},), got {bias.data.shape}"
        )

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding))) if padding else xd
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    out = np.einsum("bcik,ock->boi", win, wd, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None]
    l_out = out.shape[-1]

    def bwd(g):
        if squeeze:
            g = g[None] if g.ndim == 2 else g
        gw = np.einsum("boi,bcik->ock", g, win, optimize=True)
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        gxp = np.zeros_like(xp)
        for j in range(k):
            seg = gxp[:, :, j:j + stride * l_out:stride]
            seg += np.einsum("boi,oc->bci", g, wd[:, :, j], optimize=True)
        gx = gxp[:, :, padding:padding + length] if padding else gxp
        if squeeze:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(gb)
        return tuple(grads)

    if squeeze:
        out = out[0]
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, bwd, "conv1d")


def causal_depthwise_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel causal convolution: output at t sees inputs t-k+1 .. t.

    ``x`` is (B, C, L) or (C, L); ``weight`` is (C, k); ``bias`` is (C,).
    """
    xd, squeeze = _to_batched(x.data, "causal conv input")
    wd = weight.data
    if wd.ndim != 2 or wd.shape[0] != xd.shape[1]:
        raise ShapeError(
            f"depthwise weight must be (C={xd.shape[1]}, k), got {wd.shape}"
        )
    k = wd.shape[1]
    length = xd.shape[2]
    xp = np.pad(xd, ((0, 0), (0, 0), (k - 1, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)
    out = np.einsum("bcik,ck->bci", win, wd, optimize=True)
    if bias is not None:
        out = out + bias.data[:, None]

    def bwd(g):
        if squeeze:
            g = g[None] if g.ndim == 2 else g
        gw = np.einsum("bci,bcik->ck", g, win, optimize=True)
        gb = g.sum(axis=(0, 2)) if bias is not None else None
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, :, j:j + length] += g * wd[:, j][None, :, None]
        gx = gxp[:, :, k - 1:]
        if squeeze:
            gx = gx[0]
        grads = [gx, gw]
        if bias is not None:
            grads.append(gb)
        return tuple(grads)

    if squeeze:
        out = out[0]
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, bwd, "causal_depthwise_conv1d")


def maxpool1d(x: Tensor, kernel: int, stride: int | None = None) -> Tensor:
    """Max pooling along the last axis; ties keep the first position."""
    if kernel < 1:
        raise ContractError(f"pool kernel must be >= 1, got {kernel}")
    stride = kernel if stride is None else stride
    if stride < 1:
        raise ContractError(f"pool stride must be >= 1, got {stride}")
    xd, squeeze = _to_batched(x.data, "maxpool1d input")
    bsz, channels, length = xd.shape
    if kernel > length:
        raise ShapeError(f"pool kernel {kernel} exceeds length {length}")
    win = np.lib.stride_tricks.sliding_window_view(xd, kernel, axis=2)[:, :, ::stride, :]
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    l_out = out.shape[-1]

    def bwd(g):
        if squeeze:
            g = g[None] if g.ndim == 2 else g
        gx = np.zeros_like(xd)
        starts = np.arange(l_out) * stride
        cols = starts[None, None, :] + arg  # absolute source index per window
        bidx = np.arange(bsz)[:, None, None]
        cidx = np.arange(channels)[None, :, None]
        np.add.at(gx, (bidx, cidx, cols), g)
        if squeeze:
            gx = gx[0]
        return (gx,)

    if squeeze:
        out = out[0]
    return _record(out, (x,), bwd, "maxpool1d")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None = None, train: bool = True) -> Tensor:
    """Inverted dropout: train-time E[output] equals the input; eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ContractError("train-mode dropout needs an explicit Generator")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = x.data * mask

    def bwd(g):
        return (g * mask,)

    return _record(out, (x,), bwd, "dropout")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits).

    Computed with max-subtraction so large logits cannot overflow.
    """
    ld = logits.data
    if ld.ndim != 2:
        raise ShapeError(f"logits must be (B, K), got {ld.shape}")
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.shape[0] != ld.shape[0]:
        raise ShapeError(
            f"labels must be ({ld.shape[0]},), got {lab.shape}"
        )
    k = ld.shape[1]
    if lab.size and (lab.min() < 0 or lab.max() >= k):
        bad = int(np.argmax((lab < 0) | (lab >= k)))
        raise IndexError(f"label {lab[bad]} at position {bad} outside [0, {k})")
    lab = lab.astype(np.int64)
    z = ld - ld.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    n = ld.shape[0]
    out = -logp[np.arange(n), lab].mean()

    def bwd(g):
        soft = np.exp(logp)
        soft[np.arange(n), lab] -= 1.0
        return (g * soft / n,)

    return _record(out, (logits,), bwd, "softmax_cross_entropy")


# ---------------------------------------------------------------------------
# fused selective scan


def selective_scan(
    u: Tensor,
    delta: Tensor,
    a: Tensor,
    b: Tensor,
    c: Tensor,
    d: Tensor,
) -> Tensor:
    """Input-dependent diagonal state-space recurrence, fused for speed.

    Shapes: ``u``/``delta`` (B, D, L); ``b``/``c`` (B, N, L); ``a`` (D, N);
    ``d`` (D,).  Per timestep the state h (B, D, N) evolves as

        h_t = exp(delta_t * a) * h_{t-1} + delta_t * b_t * u_t
        y_t = sum_n h_t * c_t + d * u_t

    The backward rule is the hand-derived adjoint recurrence; the state
    trajectory is saved so no re-forward is needed.
    """
    ud, dd, ad, bd, cd, vd = u.data, delta.data, a.data, b.data, c.data, d.data
    if ud.ndim != 3 or dd.shape != ud.shape:
        raise ShapeError(f"u and delta must share shape (B,D,L): {ud.shape} vs {dd.shape}")
    bsz, dim, length = ud.shape
    n = ad.shape[1] if ad.ndim == 2 else 0
    if ad.shape != (dim, n):
        raise ShapeError(f"state matrix must be (D,N)=({dim},n), got {ad.shape}")
    if bd.shape != (bsz, n, length) or cd.shape != (bsz, n, length):
        raise ShapeError(
            f"b and c must be (B,N,L)=({bsz},{n},{length}), got {bd.shape}, {cd.shape}"
        )
    if vd.shape != (dim,):
        raise ShapeError(f"feedthrough must be ({dim},), got {vd.shape}")

    # precompute decay factors for all steps: (L, B, D, N)
    decay = np.exp(np.einsum("bdl,dn->lbdn", dd, ad, optimize=True))
    du_prod = dd * ud  # (B, D, L)
    hs = np.empty((length, bsz, dim, n))
    ys = np.empty((bsz, dim, length))
    h = np.zeros((bsz, dim, n))
    for t in range(length):
        h = decay[t] * h + du_prod[:, :, t, None] * bd[:, None, :, t]
        hs[t] = h
        ys[:, :, t] = np.einsum("bdn,bn->bd", h, cd[:, :, t], optimize=True)
    out = ys + vd[None, :, None] * ud

    def bwd(g):
        gu = g * vd[None, :, None]
        gdelta = np.zeros_like(dd)
        ga = np.zeros_like(ad)
        gb = np.empty_like(bd)
        gc = np.empty_like(cd)
        gv = (g * ud).sum(axis=(0, 2))
        gh = np.zeros((bsz, dim, n))
        for t in range(length - 1, -1, -1):
            gy = g[:, :, t]
            gh = gh + gy[:, :, None] * cd[:, None, :, t]
            gc[:, :, t] = np.einsum("bdn,bd->bn", hs[t], gy, optimize=True)
            h_prev = hs[t - 1] if t > 0 else 0.0
            gdecay = gh * h_prev  # d/d(decay_t)
            # decay_t = exp(delta_t * a)
            da_term = gdecay * decay[t]
            gdelta[:, :, t] = (da_term * ad[None]).sum(axis=-1)
            ga += np.einsum("bdn,bd->dn", da_term, dd[:, :, t], optimize=True)
            # injection term delta_t * b_t * u_t
            binj = (gh * bd[:, None, :, t]).sum(axis=-1)  # (B, D)
            gdelta[:, :, t] += binj * ud[:, :, t]
            gu[:, :, t] += binj * dd[:, :, t]
            gb[:, :, t] = np.einsum("bdn,bd->bn", gh, du_prod[:, :, t], optimize=True)
            gh = gh * decay[t]
        return gu, gdelta, ga, gb, gc, gv

    return _record(out, (u, delta, a, b, c, d), bwd, "selective_scan")


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Compare tape gradients of scalar-valued ``f`` against central differences.

    Returns the max over coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps must be within [1e-7, 1e-3], got {eps}")
    if not isinstance(x, Tensor):
        raise ContractError("grad_check point must be a Tensor")
    x.data = np.ascontiguousarray(x.data)  # flat view below must alias x.data
    x.requires_grad = True
    x.zero_grad()
    with new_tape():
        out = f(x)
        if out.data.shape != ():
            raise ContractError("grad_check target must return a scalar")
        backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(x).item()
            flat[i] = orig - eps
            lo = f(x).item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise ContractError(
                    f"non-finite output while perturbing coordinate {i}"
                )
            numeric[i] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(x.data.shape)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def _away_from_kinks(x: np.ndarray, margin: float = 0.05) -> np.ndarray:
    """Shift entries off zero so relu/max choices are stable under eps."""
    return x + np.sign(x + 1e-12) * margin


def primitive_gradchecks(seed: int = 0, eps: float = 1e-5) -> dict[str, float]:
    """Max grad_check error per primitive at random points.

    Each entry perturbs one input of one primitive, contracting the
    output to a scalar with fixed random weights so coordinate mixups
    cannot cancel out.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def weighted(op):
        w = None

        def f(t):
            nonlocal w
            out = op(t)
            if w is None:
                w = rng.standard_normal(out.data.shape)
            return tsum(mul(out, Tensor(w)))

        return f

    x34 = rng.standard_normal((3, 4))
    other = Tensor(rng.standard_normal((3, 4)))
    checks: dict[str, float] = {}

    def run(name, op, point):
        checks[name] = grad_check(weighted(op), Tensor(point.copy()), eps=eps)

    run("add", lambda t: add(t, other), x34)
    run("sub", lambda t: sub(other, t), x34)
    run("mul", lambda t: mul(t, other), x34)
    run("neg", neg, x34)
    run("exp", exp, x34 * 0.5)
    run("relu", relu, _away_from_kinks(x34))
    run("sigmoid", sigmoid, x34)
    run("softplus", softplus, x34)
    run("mean", lambda t: mean(t, axis=1), x34)
    run("sum", lambda t: tsum(t, axis=0), x34)
    run("reshape", lambda t: reshape(t, (4, 3)), x34)
    run("reverse", lambda t: reverse(t, axis=1), x34)
    run("pad1d", lambda t: pad1d(t, 2, 3), x34)
    run("narrow", lambda t: narrow(t, 1, 2, axis=1), x34)

    m_left = Tensor(rng.standard_normal((2, 3)))
    run("matmul", lambda t: matmul(m_left, t), x34)

    xc = rng.standard_normal((2, 3, 11))
    wc = Tensor(rng.standard_normal((4, 3, 3)))
    bc = Tensor(rng.standard_normal(4))
    run("conv1d.x", lambda t: conv1d(t, wc, bc, stride=2, padding=1), xc)
    run(
        "conv1d.w",
        lambda t: conv1d(Tensor(xc), t, bc, stride=2, padding=1),
        wc.data,
    )
    run(
        "conv1d.b",
        lambda t: conv1d(Tensor(xc), wc, t, stride=2, padding=1),
        bc.data,
    )

    wd = Tensor(rng.standard_normal((3, 4)))
    bd = Tensor(rng.standard_normal(3))
    run("causal_conv.x", lambda t: causal_depthwise_conv1d(t, wd, bd), xc)
    run(
        "causal_conv.w",
        lambda t: causal_depthwise_conv1d(Tensor(xc), t, bd),
        wd.data,
    )

    xp = _away_from_kinks(rng.standard_normal((2, 3, 12))) * 3.0
    run("maxpool1d", lambda t: maxpool1d(t, 3, stride=2), xp)

    def drop(t):
        return dropout(t, 0.4, rng=np.random.Generator(np.random.PCG64(11)), train=True)

    run("dropout", drop, x34)

    labels = rng.integers(0, 4, size=5)
    run(
        "softmax_cross_entropy",
        lambda t: softmax_cross_entropy(t, labels),
        rng.standard_normal((5, 4)),
    )

    bsz, dim, length, n = 2, 3, 6, 4
    su = rng.standard_normal((bsz, dim, length))
    sdelta = rng.uniform(0.05, 0.8, size=(bsz, dim, length))
    sa = -rng.uniform(0.2, 2.0, size=(dim, n))
    sb = rng.standard_normal((bsz, n, length))
    sc = rng.standard_normal((bsz, n, length))
    sd = rng.standard_normal(dim)
    consts = {
        "u": Tensor(su), "delta": Tensor(sdelta), "a": Tensor(sa),
        "b": Tensor(sb), "c": Tensor(sc), "d": Tensor(sd),
    }

    def scan_wrt(which, point):
        def op(t):
            args = dict(consts)
            args[which] = t
            return selective_scan(
                args["u"], args["delta"], args["a"], args["b"], args["c"], args["d"]
            )

        run(f"selective_scan.{which}", op, point)

    scan_wrt("u", su)
    scan_wrt("delta", sdelta)
    scan_wrt("a", sa)
    scan_wrt("b", sb)
    scan_wrt("c", sc)
    scan_wrt("d", sd)
    return checks
