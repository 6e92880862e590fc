"""Discrete-time SMT/OQAM modulator and demodulator.

Basis functions follow

    g_{m,n}[k] = g[k - n M/2] exp(j 2 pi m k / M) exp(j pi (m + n) / 2)

with the grid time origin mapped to sample 0.  Synthesis and analysis are
FFT based; :func:`basis_function` evaluates the formula directly and is what
the tests use as the reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Published PHYDYAS frequency-domain coefficients, indexed by overlapping factor.
PHYDYAS_COEFFICIENTS = {
    2: (1.0, np.sqrt(2.0) / 2.0),
    3: (1.0, 0.91143783, 0.41143783),
    4: (1.0, 0.97195983, np.sqrt(2.0) / 2.0, 0.23514695),
}

ROLE_GUARD = -1
ROLE_DATA = -2


def build_prototype(kappa: int, M: int) -> np.ndarray:
    """PHYDYAS prototype filter of length ``kappa * M`` with unit energy.

    The taps are the first ``kappa * M`` samples of the frequency-sampling
    design, so the pulse is centred on sample ``kappa * M / 2`` and
    ``g[k] == g[kappa*M - k]`` for ``1 <= k < kappa*M``.  Tap 0 is the
    design's vanishing edge sample (about 1e-10 after normalisation).

    Args:
        kappa: Overlapping factor, one of 2, 3, 4.
        M: Number of subcarriers, even and at least 2.

    Returns:
        Real tap vector of length ``kappa * M``.
    """
    if kappa not in PHYDYAS_COEFFICIENTS:
        raise ValueError(
            f"PHYDYAS coefficients are tabulated for kappa in 2..4, got {kappa}"
        )
    if M < 2 or M % 2:
        raise ValueError(f"M must be an even integer >= 2, got {M}")
    coeffs = PHYDYAS_COEFFICIENTS[kappa]
    length = kappa * M
    k = np.arange(length)
    g = np.full(length, coeffs[0], dtype=float)
    for i in range(1, kappa):
        g += 2.0 * (-1) ** i * coeffs[i] * np.cos(2.0 * np.pi * i * k / length)
    return g / np.linalg.norm(g)


@dataclass(frozen=True)
class FbmcConfig:
    """Static waveform parameters."""

    M: int
    kappa: int
    prototype: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.M < 2 or self.M % 2:
            raise ValueError(f"M must be a positive even integer, got {self.M}")
        if self.kappa < 1:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        proto = np.asarray(self.prototype, dtype=float)
        if proto.shape != (self.kappa * self.M,):
            raise ValueError(
                f"prototype must have kappa*M = {self.kappa * self.M} taps, "
                f"got shape {proto.shape}"
            )
        proto = proto.copy()
        proto.flags.writeable = False
        object.__setattr__(self, "prototype", proto)

    @classmethod
    def phydyas(cls, M: int = 128, kappa: int = 4) -> "FbmcConfig":
        return cls(M=M, kappa=kappa, prototype=build_prototype(kappa, M))

    @property
    def symbol_advance(self) -> int:
        return self.M // 2

    @property
    def filter_length(self) -> int:
        return self.kappa * self.M

    def slot_start(self, n: int) -> int:
        """First sample of the support of any basis function in time slot ``n``."""
        return n * self.symbol_advance

    def signal_length(self, n_slots: int) -> int:
        return (n_slots - 1) * self.symbol_advance + self.filter_length

    def key(self) -> tuple:
        """Hashable identity, used for caching derived matrices."""
        return (self.M, self.kappa, self.prototype.tobytes())


@dataclass
class TfGrid:
    """Real OQAM symbols on an ``M x N_t`` time-frequency grid.

    ``roles`` holds the owning user index (>= 0) for pilot slots,
    :data:`ROLE_GUARD` for guards and :data:`ROLE_DATA` for data.
    """

    symbols: np.ndarray
    roles: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.symbols = np.asarray(self.symbols, dtype=float)
        if self.symbols.ndim != 2:
            raise ValueError("symbols must be a 2-D M x N_t array")
        if self.roles is None:
            self.roles = np.full(self.symbols.shape, ROLE_DATA, dtype=int)
        else:
            self.roles = np.asarray(self.roles, dtype=int)
        if self.roles.shape != self.symbols.shape:
            raise ValueError("roles and symbols must have the same shape")
        if np.any(self.symbols[self.roles == ROLE_GUARD] != 0.0):
            raise ValueError("guard slots must carry exactly zero")

    @classmethod
    def zeros(cls, M: int, N_t: int) -> "TfGrid":
        return cls(np.zeros((M, N_t)))

    @property
    def M(self) -> int:
        return self.symbols.shape[0]

    @property
    def N_t(self) -> int:
        return self.symbols.shape[1]

    def pilot_slots(self, user: int) -> list[tuple[int, int]]:
        ms, ns = np.nonzero(self.roles == user)
        return list(zip(ms.tolist(), ns.tolist()))


@dataclass
class BasebandSignal:
    """Complex baseband samples; ``samples[i]`` sits at time ``sample_offset + i``."""

    samples: np.ndarray
    sample_offset: int = 0

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=complex)

    def __len__(self) -> int:
        return self.samples.shape[-1]

    @property
    def stop(self) -> int:
        return self.sample_offset + len(self)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))


def _oqam_phase(m, n):
    # exp(j*pi*(m+n)/2) evaluated exactly on the unit circle points
    return np.array([1, 1j, -1, -1j])[np.mod(np.add(m, n), 4)]


def basis_function(cfg: FbmcConfig, m: int, n: int) -> BasebandSignal:
    """Evaluate ``g_{m,n}[k]`` on its support ``[n M/2, n M/2 + kappa M)``."""
    if not 0 <= m < cfg.M:
        raise ValueError(f"subcarrier index {m} outside [0, {cfg.M})")
    start = cfg.slot_start(n)
    k = start + np.arange(cfg.filter_length)
    samples = cfg.prototype * np.exp(2j * np.pi * m * k / cfg.M) * _oqam_phase(m, n)
    return BasebandSignal(samples, start)


def synthesize(cfg: FbmcConfig, grid: TfGrid) -> BasebandSignal:
    """Transmit signal ``x[k] = sum_{m,n} s_{m,n} g_{m,n}[k]``.

    The output starts at sample 0 and has length
    ``(N_t - 1) M/2 + kappa M``.
    """
    if grid.M != cfg.M:
        raise ValueError(f"grid has {grid.M} subcarriers, config has {cfg.M}")
    M, half = cfg.M, cfg.symbol_advance
    out = np.zeros(cfg.signal_length(grid.N_t), dtype=complex)
    m = np.arange(M)
    for n in range(grid.N_t):
        col = grid.symbols[:, n]
        if not np.any(col):
            continue
        # exp(j 2 pi m (k' + n M/2) / M) = (-1)^{m n} exp(j 2 pi m k' / M)
        coeff = col * _oqam_phase(m, n) * np.where((m * n) % 2, -1.0, 1.0)
        period = np.fft.ifft(coeff) * M
        start = n * half
        out[start:start + cfg.filter_length] += cfg.prototype * np.tile(period, cfg.kappa)
    return BasebandSignal(out, 0)


def demodulate(
    cfg: FbmcConfig,
    samples: np.ndarray,
    sample_offset: int,
    slots: Sequence[tuple[int, int]],
) -> np.ndarray:
    """Batch form of :func:`analyze`.

    ``samples`` may carry leading batch dimensions; the result has shape
    ``samples.shape[:-1] + (len(slots),)``.
    """
    samples = np.asarray(samples)
    M = cfg.M
    slots = [(int(m), int(n)) for m, n in slots]
    out = np.zeros(samples.shape[:-1] + (len(slots),), dtype=complex)
    if not slots:
        return out
    n_total = samples.shape[-1]
    by_slot: dict[int, list[int]] = {}
    for idx, (m, n) in enumerate(slots):
        if not 0 <= m < M:
            raise ValueError(f"subcarrier index {m} outside [0, {M})")
        by_slot.setdefault(n, []).append(idx)
    for n, idxs in by_slot.items():
        lo = cfg.slot_start(n) - sample_offset
        hi = lo + cfg.filter_length
        if lo < 0 or hi > n_total:
            raise ValueError(
                f"slot n={n} needs samples [{lo + sample_offset}, {hi + sample_offset}) "
                f"but the signal covers [{sample_offset}, {sample_offset + n_total})"
            )
        seg = samples[..., lo:hi] * cfg.prototype
        folded = seg.reshape(seg.shape[:-1] + (cfg.kappa, M)).sum(axis=-2)
        spectrum = np.fft.fft(folded, axis=-1)
        ms = np.array([slots[i][0] for i in idxs])
        phase = np.conj(_oqam_phase(ms, n)) * np.where((ms * n) % 2, -1.0, 1.0)
        out[..., idxs] = spectrum[..., ms] * phase
    return out


def analyze(
    cfg: FbmcConfig, y: BasebandSignal, slots: Iterable[tuple[int, int]]
) -> np.ndarray:
    """Demodulated values ``z_{m,n} = sum_k y[k] conj(g_{m,n}[k])`` (no real part taken)."""
    return demodulate(cfg, y.samples, y.sample_offset, list(slots))


def basis_matrix(
    cfg: FbmcConfig, slots: Sequence[tuple[int, int]], start: int, length: int
) -> np.ndarray:
    """Columns are the basis functions of ``slots`` sampled on ``[start, start+length)``."""
    G = np.zeros((length, len(slots)), dtype=complex)
    for j, (m, n) in enumerate(slots):
        g = basis_function(cfg, m, n)
        lo = g.sample_offset - start
        if lo < 0 or lo + len(g) > length:
            raise ValueError(f"slot ({m}, {n}) support falls outside the window")
        G[lo:lo + len(g), j] = g.samples
    return G
