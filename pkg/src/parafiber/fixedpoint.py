"""Saturating fixed-point arithmetic for the deterministic engine core.

Values are stored as raw integers scaled by ``2**frac_bits`` (numpy int64
scalars or arrays).  The default format is a signed 32-bit word with 16
integer and 15 fraction bits.  All conversions and multiplications round
to nearest; results outside the representable range saturate, and every
saturation is counted so overflow stays observable instead of silently
wrapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed fixed-point format with ``int_bits``.``frac_bits`` split."""

    int_bits: int = 16
    frac_bits: int = 15

    def __post_init__(self) -> None:
        if self.int_bits < 1 or self.frac_bits < 1:
            raise ValueError("fixed-point format needs at least 1 integer and 1 fraction bit")
        if self.int_bits + self.frac_bits > 62:
            raise ValueError("fixed-point word too wide for int64 intermediates")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def max_raw(self) -> int:
        return (1 << (self.int_bits + self.frac_bits)) - 1

    @property
    def min_raw(self) -> int:
        return -(1 << (self.int_bits + self.frac_bits))

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale


@dataclass
class SaturationCounter:
    """Tallies saturating operations (one count per clipped element)."""

    count: int = field(default=0)

    def add(self, n: int) -> None:
        self.count += int(n)


def saturate(raw, fmt: FixedPointFormat, counter: SaturationCounter | None = None):
    """Clip raw values into the representable range, counting clipped elements."""
    arr = np.asarray(raw)
    clipped = np.clip(arr, fmt.min_raw, fmt.max_raw)
    if counter is not None:
        counter.add(np.count_nonzero(clipped != arr))
    return clipped.astype(np.int64, copy=False)


def to_raw(value, fmt: FixedPointFormat, counter: SaturationCounter | None = None):
    """Convert float(s) to raw fixed-point, round-to-nearest, saturating."""
    scaled = np.rint(np.asarray(value, dtype=np.float64) * fmt.scale)
    # Clip in float space first so casting huge floats to int64 cannot wrap;
    # stay one unit outside the range so saturate() still sees the overflow.
    scaled = np.clip(scaled, float(fmt.min_raw) - 1.0, float(fmt.max_raw) + 1.0)
    return saturate(scaled.astype(np.int64), fmt, counter)


def from_raw(raw, fmt: FixedPointFormat):
    """Convert raw fixed-point back to float64."""
    return np.asarray(raw, dtype=np.float64) / fmt.scale


def fx_add(a, b, fmt: FixedPointFormat, counter: SaturationCounter | None = None):
    return saturate(np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64), fmt, counter)


def fx_mul(a, b, fmt: FixedPointFormat, counter: SaturationCounter | None = None):
    """Raw multiply with round-to-nearest (ties toward +inf) and saturation.

    Operands must already be in range; the int64 intermediate cannot
    overflow because |a*b| < 2**62 for any in-range pair.
    """
    prod = np.asarray(a, dtype=np.int64) * np.asarray(b, dtype=np.int64)
    half = 1 << (fmt.frac_bits - 1)
    return saturate((prod + half) >> fmt.frac_bits, fmt, counter)
