"""Channel attention without dimensionality reduction.

Each channel is summarized by its time mean, a small 1-D convolution
runs across the channel axis (so a channel's weight depends on its
neighbors in the fixed channel order), and a sigmoid turns the result
into per-channel gains in (0, 1) that rescale the input rows.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, DomainError, ShapeError
from .tensor import Tensor

__all__ = [
    "channel_descriptor",
    "adaptive_kernel_size",
    "channel_weights",
    "apply_attention",
    "EcaLayer",
]


def channel_descriptor(x: Tensor) -> Tensor:
    """Mean over time per channel: (C,L) -> (C,) or (B,C,L) -> (B,C)."""
    if x.ndim not in (2, 3):
        raise ShapeError(f"descriptor input must be (C,L) or (B,C,L), got {x.shape}")
    if x.shape[-1] == 0:
        raise DomainError("cannot summarize zero-length channels")
    return T.mean(x, axis=x.ndim - 1)


def adaptive_kernel_size(channels: int, gamma: float = 2.0, b: float = 1.0) -> int:
    """Smallest odd k >= |log2(C)/gamma + b/gamma|, clamped to at least 3."""
    if channels < 1:
        raise DomainError(f"channel count must be >= 1, got {channels}")
    t = abs(np.log2(channels) / gamma + b / gamma)
    k = int(np.ceil(t))
    if k % 2 == 0:
        k += 1
    return max(k, 3)


def channel_weights(s: Tensor, conv_w: Tensor) -> Tensor:
    """sigmoid(conv(s)) across the channel axis, zero-padded, no bias.

    ``s`` is (C,) or (B,C); ``conv_w`` is (1,1,k) with odd k.  Output
    matches the shape of ``s`` with every entry strictly in (0,1).
    """
    if conv_w.ndim != 3 or conv_w.shape[:2] != (1, 1):
        raise ShapeError(f"attention conv weight must be (1,1,k), got {conv_w.shape}")
    k = conv_w.shape[2]
    if k % 2 == 0:
        raise ContractError(f"attention kernel size must be odd, got {k}")
    if s.ndim == 1:
        row = T.reshape(s, (1, s.shape[0]))
        z = T.conv1d(row, conv_w, padding=(k - 1) // 2)
        return T.sigmoid(T.reshape(z, (s.shape[0],)))
    if s.ndim == 2:
        rows = T.reshape(s, (s.shape[0], 1, s.shape[1]))
        z = T.conv1d(rows, conv_w, padding=(k - 1) // 2)
        return T.sigmoid(T.reshape(z, s.shape))
    raise ShapeError(f"descriptor must be (C,) or (B,C), got {s.shape}")


def apply_attention(x: Tensor, w: Tensor) -> Tensor:
    """Scale channel c of ``x`` by gain w_c; shapes must agree on C."""
    if x.ndim == w.ndim + 1 and x.shape[:-1] == w.shape:
        return T.mul(x, T.reshape(w, w.shape + (1,)))
    raise ShapeError(
        f"attention weights {w.shape} do not match input channels {x.shape}"
    )


class EcaLayer:
    """Descriptor -> conv-across-channels -> sigmoid -> rescale, learned."""

    def __init__(self, channels: int, rng: np.random.Generator, k: int | None = None):
        if k is None:
            k = 3
        if k % 2 == 0:
            raise ContractError(f"attention kernel size must be odd, got {k}")
        self.channels = channels
        self.k = k
        self.conv_w = Tensor(
            rng.standard_normal((1, 1, k)) / np.sqrt(k), requires_grad=True
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"conv_w": self.conv_w}

    def forward(self, x: Tensor) -> Tensor:
        s = channel_descriptor(x)
        w = channel_weights(s, self.conv_w)
        return apply_attention(x, w)
