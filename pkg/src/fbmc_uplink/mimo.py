"""Massive-MIMO uplink sum-rate with per-antenna channel estimation and MRC.

The receiver model is narrowband per subcarrier: the combiner for user ``u``
on subcarrier ``f`` is the estimated frequency response across antennas;
signal, interference and noise terms use the true responses.  Data power is
one per user.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelProfile, receive, sample_taps
from .estimators import FullPilotReceiver, fullpilot_plan, gls_solver
from .fbmc import FbmcConfig
from .link import PreambleLink
from .parallel import run_trials
from .pilots import PilotPlan, design_plan
from .streams import complex_normal, stream
from .system import system_for

METHODS = ("proposed", "baseline")


def overhead_factor(preamble_slots: int, coherence_slots: int) -> float:
    """Fraction of the coherence interval left for data."""
    if coherence_slots <= 0:
        raise ValueError("coherence interval must be positive")
    if not 0 <= preamble_slots <= coherence_slots:
        raise ValueError(
            f"preamble of {preamble_slots} slots does not fit a {coherence_slots}-slot interval"
        )
    return (coherence_slots - preamble_slots) / coherence_slots


def sum_rate(sinrs: Sequence[float] | np.ndarray, gamma: float) -> float:
    """``gamma * sum_u log2(1 + SINR_u)`` in bits/s/Hz."""
    sinrs = np.asarray(sinrs, dtype=float)
    if np.any(sinrs < 0):
        raise ValueError("SINR values must be non-negative")
    return float(gamma * np.sum(np.log2(1.0 + sinrs)))


@dataclass
class MimoChannelTensor:
    """Impulse responses ``taps[r, k, :]`` from user ``k`` to antenna ``r``.

    ``taps`` already include the cross-gain scaling; ``cell[k]`` gives the
    cell of user ``k``.  Cell 0 is the cell of interest.
    """

    taps: np.ndarray
    cell: np.ndarray
    M: int
    _freq: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=complex)
        self.cell = np.asarray(self.cell, dtype=int)
        if self.taps.ndim != 3 or self.taps.shape[1] != self.cell.size:
            raise ValueError("taps must have shape (R, K, L) with one cell label per user")

    @property
    def R(self) -> int:
        return self.taps.shape[0]

    @property
    def in_cell(self) -> np.ndarray:
        return np.flatnonzero(self.cell == 0)

    def frequency_response(self) -> np.ndarray:
        """``H[r, k, f]`` on the ``M`` subcarriers."""
        if self._freq is None:
            self._freq = _freq(self.taps, self.M)
        return self._freq


def _freq(taps: np.ndarray, M: int) -> np.ndarray:
    L = taps.shape[-1]
    if L > M:
        pad = -L % M
        taps = np.pad(taps, [(0, 0)] * (taps.ndim - 1) + [(0, pad)])
        taps = taps.reshape(taps.shape[:-1] + (-1, M)).sum(axis=-2)
    return np.fft.fft(taps, n=M, axis=-1)


def mrc_sinr(tensor: MimoChannelTensor, estimates: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-user MRC SINR for the in-cell users, averaged over subcarriers.

    Args:
        tensor: True channels of every user (all cells).
        estimates: Estimated taps, shape ``(R, U, L)``, for the in-cell users
            in the order of ``tensor.in_cell``.
        sigma2: Per-antenna noise variance during data.

    Returns:
        Array of ``U`` SINR values.
    """
    users = tensor.in_cell
    estimates = np.asarray(estimates)
    if estimates.ndim != 3 or estimates.shape[:2] != (tensor.R, users.size):
        raise ValueError(
            f"need estimates of shape ({tensor.R}, {users.size}, L), got {estimates.shape}"
        )
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    H = tensor.frequency_response()
    W = _freq(estimates, tensor.M)
    gains = np.einsum("ruf,rkf->ukf", W.conj(), H)
    power = np.abs(gains) ** 2
    desired = power[np.arange(users.size), users]
    interference = power.sum(axis=1) - desired
    noise = sigma2 * np.sum(np.abs(W) ** 2, axis=0)
    denom = interference + noise
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(denom > 0, desired / np.where(denom > 0, denom, 1.0), np.inf)
    sinr = np.where((desired == 0) & (denom == 0), 0.0, sinr)
    return sinr.mean(axis=-1)


@dataclass(frozen=True)
class ScenarioConfig:
    """One sum-rate experiment.

    Noise variance at ``snr`` (linear) is ``P_t / (L * snr)``: the SNR per
    pilot sample of the ``N_p = L`` plan, equal to the per-antenna data SNR
    when ``P_t = L`` and channels have unit power.
    """

    R: int = 128
    U: int = 4
    cells: int = 1
    M: int = 128
    kappa: int = 4
    L: int = 16
    coherence_slots: int = 84
    snr_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 200
    pilot_power: float | None = None
    beta_interest: float = 0.5
    beta_range: tuple[float, float] = (0.4, 0.6)
    cross_gain: str | float = "uniform"
    disjoint_cells: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.R < 1 or self.U < 1:
            raise ValueError("need at least one antenna and one user")
        if self.cells not in (1, 2):
            raise ValueError("cells must be 1 or 2")
        if not self.snr_db:
            raise ValueError("SNR grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.L < 1 or self.L > self.M:
            raise ValueError("channel length must lie in [1, M]")
        lo, hi = self.beta_range
        if lo < 0 or hi < lo or self.beta_interest < 0:
            raise ValueError("invalid PDP decay rates")
        if isinstance(self.cross_gain, str):
            if self.cross_gain != "uniform":
                raise ValueError("cross_gain must be 'uniform' or a number in [0, 1]")
        elif not 0.0 <= float(self.cross_gain) <= 1.0:
            raise ValueError("cross_gain must lie in [0, 1]")
        for method in METHODS:
            overhead_factor(self.preamble_slots(method), self.coherence_slots)

    @property
    def power(self) -> float:
        return float(self.L if self.pilot_power is None else self.pilot_power)

    @property
    def total_users(self) -> int:
        return self.U * self.cells

    def noise_variance(self, snr_db: float) -> float:
        return self.power / (self.L * 10.0 ** (snr_db / 10.0))

    def plan(self, method: str) -> PilotPlan:
        if method == "proposed":
            n_users = self.total_users if (self.cells == 2 and self.disjoint_cells) else self.U
            return design_plan(self.M, [self.L] * n_users, self.power, seed=self.seed)
        if method == "baseline":
            cfg = FbmcConfig.phydyas(self.M, self.kappa)
            return fullpilot_plan(cfg, [self.L] * self.U, self.power, seed=self.seed)
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")

    def preamble_slots(self, method: str) -> int:
        return self.plan(method).n_slots + self.kappa - 1

    def gamma(self, method: str) -> float:
        return overhead_factor(self.preamble_slots(method), self.coherence_slots)


def draw_tensor(cfg: ScenarioConfig, trial: int) -> MimoChannelTensor:
    """Channels of every user to every antenna for one trial."""
    K = cfg.total_users
    betas = np.empty(K)
    betas[0] = cfg.beta_interest
    betas[1:] = stream(cfg.seed, "beta", trial).uniform(*cfg.beta_range, size=K - 1)
    rng = stream(cfg.seed, "channel", trial)
    taps = np.stack(
        [sample_taps(ChannelProfile(cfg.L, b), rng, (cfg.R,)) for b in betas], axis=1
    )
    cell = np.repeat(np.arange(cfg.cells), cfg.U)
    gains = np.ones(K)
    if cfg.cells == 2:
        if cfg.cross_gain == "uniform":
            gains[cfg.U:] = stream(cfg.seed, "crossgain", trial).uniform(0.0, 1.0, cfg.U)
        else:
            gains[cfg.U:] = float(cfg.cross_gain)
    taps *= np.sqrt(gains)[None, :, None]
    return MimoChannelTensor(taps, cell, cfg.M)


class _Receiver:
    """Per-antenna estimation for one method, built once per scenario."""

    def __init__(self, cfg: ScenarioConfig, method: str):
        self.fbmc = FbmcConfig.phydyas(cfg.M, cfg.kappa)
        self.plan = cfg.plan(method)
        self.link = PreambleLink(self.fbmc, self.plan)
        self.U = cfg.U
        # which plan signal each physical user puts on the air
        self.source = np.arange(cfg.total_users) % self.plan.U
        if method == "proposed":
            solver = gls_solver(system_for(self.fbmc, self.plan))
            self._estimate = solver.estimate_users
        else:
            self._estimate = FullPilotReceiver(self.fbmc, self.plan).estimate_users

    def observations(self, tensor: MimoChannelTensor, noise: np.ndarray):
        signals = [self.link.signals[s] for s in self.source]
        taps = [tensor.taps[:, k, :] for k in range(tensor.taps.shape[1])]
        clean = self.link.demodulate(receive(signals, taps, self.link.window))
        return clean, self.link.demodulate(noise)

    def estimate(self, z: np.ndarray) -> np.ndarray:
        per_user = self._estimate(z)
        return np.stack(per_user[: self.U], axis=1)


@dataclass
class ScenarioResult:
    method: str
    snr_db: np.ndarray
    gamma: float
    sum_rate: np.ndarray  # (trials, n_snr)
    sinr: np.ndarray  # (trials, n_snr, U)

    @property
    def mean(self) -> np.ndarray:
        return self.sum_rate.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        n = self.sum_rate.shape[0]
        if n < 2:
            return np.zeros(self.sum_rate.shape[1])
        return self.sum_rate.std(axis=0, ddof=1) / np.sqrt(n)


def run_cell_scenario(
    cfg: ScenarioConfig,
    method: str,
    threads: int = 1,
    perfect_csi: bool = False,
) -> ScenarioResult:
    """Monte-Carlo sum-rate of the cell of interest over the SNR grid.

    Channels are keyed by trial only, so both methods (and the perfect-CSI
    reference) see identical channel draws.  Noise for all SNR points of a
    trial comes from one unit-variance draw, scaled.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rx = _Receiver(cfg, method)
    gamma = cfg.gamma(method)
    method_id = METHODS.index(method)
    sigma2s = np.array([cfg.noise_variance(s) for s in cfg.snr_db])

    def trial(t: int):
        tensor = draw_tensor(cfg, t)
        unit_noise = complex_normal(stream(cfg.seed, "noise", t, method_id), (cfg.R, rx.link.window))
        clean, noise = rx.observations(tensor, unit_noise)
        rates = np.empty(sigma2s.size)
        sinrs = np.empty((sigma2s.size, cfg.U))
        for i, s2 in enumerate(sigma2s):
            if perfect_csi:
                est = tensor.taps[:, tensor.in_cell, :]
            else:
                est = rx.estimate(clean + np.sqrt(s2) * noise)
            sinrs[i] = mrc_sinr(tensor, est, s2)
            rates[i] = sum_rate(sinrs[i], gamma)
        return rates, sinrs

    out = run_trials(trial, cfg.trials, threads)
    return ScenarioResult(
        method=method,
        snr_db=np.asarray(cfg.snr_db, dtype=float),
        gamma=gamma,
        sum_rate=np.stack([r for r, _ in out]),
        sinr=np.stack([s for _, s in out]),
    )
