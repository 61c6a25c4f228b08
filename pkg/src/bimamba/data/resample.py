"""Rational-ratio polyphase resampling for biosignal series."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from ..errors import DomainError

__all__ = ["resample"]


def resample(x, from_hz: float, to_hz: float) -> np.ndarray:
    """Resample a 1-D series with a Kaiser (beta=12) low-pass FIR.

    The ratio is reduced to a rational up/down pair; output length is
    round(len(x) * to_hz / from_hz), rounding half away from zero,
    computed exactly in rational arithmetic.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError(f"resample expects a 1-D series, got shape {x.shape}")
    if not (np.isfinite(from_hz) and np.isfinite(to_hz) and from_hz > 0 and to_hz > 0):
        raise DomainError(f"rates must be positive and finite: {from_hz}, {to_hz}")
    if not np.all(np.isfinite(x)):
        bad = int(np.argmax(~np.isfinite(x)))
        raise DomainError(f"non-finite sample at index {bad}")
    if from_hz == to_hz:
        return x.copy()

    ratio = (Fraction(to_hz) / Fraction(from_hz)).limit_denominator(10**6)
    target = Fraction(len(x)) * ratio
    n_out = math.floor(target + Fraction(1, 2))
    if len(x) == 0 or n_out == 0:
        return np.zeros(0, dtype=np.float64)
    y = resample_poly(
        x, ratio.numerator, ratio.denominator, window=("kaiser", 12.0), padtype="line"
    )
    if len(y) < n_out:  # can only happen off the rational path; extend by edge hold
        y = np.concatenate([y, np.full(n_out - len(y), y[-1])])
    return y[:n_out]
