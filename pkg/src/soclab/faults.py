"""Bit-level fault injection into float64 sensor streams.

Faults are stuck-at-0, stuck-at-1, or bit-flip on a single bit of every
IEEE 754 binary64 value of one channel, applied before inference to the
whole series (permanent-fault semantics).

Bit indices are MSB-first, 1-based:

    bit 1       sign
    bits 2-12   exponent (bit 2 = exponent MSB)
    bits 13-64  significand

so bit k sits at position (64 - k) counting from the least significant bit
of the raw 64-bit pattern.  Injection can produce any pattern, including
Inf/NaN; results are returned unmodified and downstream code decides what
to do with them.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

INPUT_CHANNELS = 3


class Channel(enum.Enum):
    """Sensor input channel; the value is the frame column index."""

    VOLTAGE = 0
    CURRENT = 1
    TEMPERATURE = 2

    @property
    def letter(self) -> str:
        return {"VOLTAGE": "V", "CURRENT": "I", "TEMPERATURE": "T"}[self.name]

    @classmethod
    def from_letter(cls, letter: str) -> "Channel":
        table = {"V": cls.VOLTAGE, "I": cls.CURRENT, "T": cls.TEMPERATURE}
        key = letter.strip().upper()
        if key not in table:
            raise ValueError(f"unknown channel {letter!r}; expected one of V, I, T")
        return table[key]


class FaultMode(enum.Enum):
    STUCK_AT_0 = "SA0"
    STUCK_AT_1 = "SA1"
    BIT_FLIP = "FLIP"

    @classmethod
    def from_token(cls, token: str) -> "FaultMode":
        key = token.strip().upper()
        for mode in cls:
            if mode.value == key:
                return mode
        raise ValueError(f"unknown fault mode {token!r}; expected SA0, SA1 or FLIP")


@dataclass(frozen=True)
class FaultSpec:
    """One fault-injection experiment: channel x bit x mode, whole cycle."""

    channel: Channel
    bit_index: int
    mode: FaultMode

    def __post_init__(self) -> None:
        _check_bit_index(self.bit_index)

    def token(self) -> str:
        """Compact form used in CSV reports and CLI flags, e.g. ``V:11:SA1``."""
        return f"{self.channel.letter}:{self.bit_index}:{self.mode.value}"

    @classmethod
    def from_token(cls, token: str) -> "FaultSpec":
        parts = token.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad fault token {token!r}; expected '<channel>:<bit>:<mode>'")
        return cls(Channel.from_letter(parts[0]), int(parts[1]), FaultMode.from_token(parts[2]))


@dataclass(frozen=True)
class CorruptedSeries:
    """Normalized frames with one fault applied to every sample of one channel."""

    original_frames: np.ndarray
    fault: FaultSpec
    corrupted_frames: np.ndarray


def _check_bit_index(bit_index: int) -> None:
    if not 1 <= bit_index <= 64:
        raise ValueError(f"bit index {bit_index} out of range [1, 64]")


def float_to_bits(value: float) -> int:
    """Raw 64-bit pattern of a float, as an unsigned int."""
    return struct.unpack("<Q", struct.pack("<d", value))[0]


def bits_to_float(word: int) -> float:
    """Float whose raw 64-bit pattern is ``word``."""
    return struct.unpack("<d", struct.pack("<Q", word))[0]


def read_bit(value: float, bit_index: int) -> int:
    """Bit at MSB-first position ``bit_index`` of the value's raw pattern."""
    _check_bit_index(bit_index)
    return (float_to_bits(value) >> (64 - bit_index)) & 1


def inject_bit(value: float, bit_index: int, mode: FaultMode) -> float:
    """Force or flip one bit of a float64; all other bits are unchanged."""
    _check_bit_index(bit_index)
    mask = 1 << (64 - bit_index)
    word = float_to_bits(value)
    if mode is FaultMode.STUCK_AT_0:
        word &= ~mask
    elif mode is FaultMode.STUCK_AT_1:
        word |= mask
    else:
        word ^= mask
    return bits_to_float(word)


def inject_series(values: np.ndarray, bit_index: int, mode: FaultMode) -> np.ndarray:
    """Vectorized :func:`inject_bit` over a float64 array (returns a copy)."""
    _check_bit_index(bit_index)
    out = np.ascontiguousarray(values, dtype=np.float64).copy()
    words = out.view(np.uint64)
    mask = np.uint64(1 << (64 - bit_index))
    if mode is FaultMode.STUCK_AT_0:
        words &= ~mask
    elif mode is FaultMode.STUCK_AT_1:
        words |= mask
    else:
        words ^= mask
    return out


def corrupt_series(frames: np.ndarray, fault: FaultSpec) -> CorruptedSeries:
    """Apply a fault to every sample of its channel in a normalized frame series.

    Non-target channels stay bit-identical to the input.  The input array is
    not modified.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != INPUT_CHANNELS:
        raise ValueError(f"expected frames of shape (n, {INPUT_CHANNELS}), got {frames.shape}")
    if frames.shape[0] == 0:
        raise ValueError("empty frame series")
    corrupted = frames.copy()
    col = fault.channel.value
    corrupted[:, col] = inject_series(frames[:, col], fault.bit_index, fault.mode)
    return CorruptedSeries(original_frames=frames, fault=fault, corrupted_frames=corrupted)


def enumerate_campaign(
    channels: tuple[Channel, ...] = tuple(Channel),
    bit_range: tuple[int, int] = (3, 64),
    modes: tuple[FaultMode, ...] = (FaultMode.STUCK_AT_0, FaultMode.STUCK_AT_1),
) -> list[FaultSpec]:
    """Cross product of channels x bits x modes in deterministic order.

    The default sweep (3 channels, bits 3..64 inclusive, both stuck-at
    polarities) yields 372 specs.  Bits 1 and 2 stay injectable through
    :func:`inject_bit` but are excluded from the default range because they
    can turn values into Inf/NaN.
    """
    lo, hi = bit_range
    if not (1 <= lo <= 64 and 1 <= hi <= 64):
        raise ValueError(f"bit range {bit_range} outside [1, 64]")
    if lo > hi:
        raise ValueError(f"empty bit range {bit_range}")
    if not channels:
        raise ValueError("no channels selected")
    if not modes:
        raise ValueError("no fault modes selected")
    return [
        FaultSpec(channel, bit, mode)
        for channel in channels
        for bit in range(lo, hi + 1)
        for mode in modes
    ]


def uniform_one_bits(values: np.ndarray) -> list[int]:
    """Bit indices that read 1 in *every* value of the series.

    Stuck-at-1 on any of these bits is an exact no-op for the series, so
    downstream RMSE must be exactly zero.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty series")
    word = np.bitwise_and.reduce(arr.view(np.uint64).ravel())
    return [b for b in range(1, 65) if (int(word) >> (64 - b)) & 1]


def bit_region(bit_index: int) -> str:
    """Field of the binary64 layout a bit belongs to: sign, exponent or significand."""
    _check_bit_index(bit_index)
    if bit_index == 1:
        return "sign"
    if bit_index <= 12:
        return "exponent"
    return "significand"
