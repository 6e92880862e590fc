"""Multipath Rayleigh channels with exponential power delay profile."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fbmc import BasebandSignal
from .streams import complex_normal


@dataclass(frozen=True)
class ChannelProfile:
    """Exponential PDP ``alpha(l) = exp(-beta * l)`` over ``L`` taps."""

    L: int
    beta: float = 0.5
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ValueError(f"channel length must be >= 1, got {self.L}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def powers(self) -> np.ndarray:
        p = np.exp(-self.beta * np.arange(self.L))
        if self.normalize:
            p /= p.sum()
        return p


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray

    def __post_init__(self) -> None:
        taps = np.atleast_1d(np.asarray(self.taps, dtype=complex))
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("taps must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def L(self) -> int:
        return self.taps.size

    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))

    def frequency_response(self, M: int) -> np.ndarray:
        """``H[f] = sum_l h[l] exp(-j 2 pi f l / M)`` for ``f = 0..M-1``."""
        folded = np.pad(self.taps, (0, -self.L % M)).reshape(-1, M).sum(axis=0)
        return np.fft.fft(folded)


@dataclass
class ChannelSet:
    """Per-user channels plus per-(user, cell) cross-gains in [0, 1]."""

    channels: list[ChannelRealization]
    cross_gains: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        if self.cross_gains is None:
            self.cross_gains = np.ones((len(self.channels), 1))
        self.cross_gains = np.asarray(self.cross_gains, dtype=float)
        if self.cross_gains.shape[0] != len(self.channels):
            raise ValueError("cross_gains needs one row per user")
        if np.any(self.cross_gains < 0) or np.any(self.cross_gains > 1):
            raise ValueError("cross-gains must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.channels)

    @property
    def lengths(self) -> list[int]:
        return [c.L for c in self.channels]


def sample_channel(profile: ChannelProfile, rng: np.random.Generator) -> ChannelRealization:
    """Draw independent Rayleigh taps with variances given by the profile."""
    taps = complex_normal(rng, profile.L) * np.sqrt(profile.powers())
    return ChannelRealization(taps)


def sample_taps(
    profile: ChannelProfile, rng: np.random.Generator, shape: tuple[int, ...] = ()
) -> np.ndarray:
    """Vectorised :func:`sample_channel`: array of shape ``shape + (L,)``."""
    shape = tuple(shape)
    return complex_normal(rng, shape + (profile.L,)) * np.sqrt(profile.powers())


def apply_channel(x: BasebandSignal, h: ChannelRealization) -> BasebandSignal:
    """Linear convolution; output length is ``len(x) + L - 1``."""
    return BasebandSignal(np.convolve(x.samples, h.taps), x.sample_offset)


def add_awgn(x: BasebandSignal, sigma2: float, rng: np.random.Generator) -> BasebandSignal:
    if sigma2 < 0:
        raise ValueError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return BasebandSignal(x.samples.copy(), x.sample_offset)
    noise = complex_normal(rng, x.samples.shape, sigma2)
    return BasebandSignal(x.samples + noise, x.sample_offset)


def scale_crossgain(h: ChannelRealization, g: float) -> ChannelRealization:
    """Scale taps by ``sqrt(g)`` so the received power scales by ``g``."""
    if not 0.0 <= g <= 1.0:
        raise ValueError(f"cross-gain must lie in [0, 1], got {g}")
    return ChannelRealization(h.taps * np.sqrt(g))


def convolve_batch(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Convolve one signal with a batch of channels.

    Args:
        x: Signal of length N.
        taps: Array of shape ``(..., L)``.

    Returns:
        Array of shape ``(..., N + L - 1)``.
    """
    x = np.asarray(x)
    taps = np.asarray(taps)
    N, L = x.shape[-1], taps.shape[-1]
    n_out = N + L - 1
    nfft = 1 << (n_out - 1).bit_length()
    out = np.fft.ifft(np.fft.fft(x, nfft) * np.fft.fft(taps, nfft, axis=-1), axis=-1)
    return out[..., :n_out]


def receive(
    signals: Sequence[np.ndarray],
    taps: Sequence[np.ndarray],
    length: int,
) -> np.ndarray:
    """Noiseless superposition ``sum_u h_u * x_u`` truncated or zero-padded to ``length``.

    ``taps[u]`` may carry leading batch dimensions (trials, antennas); they
    broadcast across users.
    """
    total = None
    for x, h in zip(signals, taps):
        y = convolve_batch(x, h)
        if y.shape[-1] < length:
            pad = [(0, 0)] * (y.ndim - 1) + [(0, length - y.shape[-1])]
            y = np.pad(y, pad)
        y = y[..., :length]
        total = y if total is None else total + y
    return total
