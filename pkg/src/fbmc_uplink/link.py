"""Batched preamble transmission: synthesize, convolve, add noise, demodulate."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .channel import receive
from .fbmc import FbmcConfig, demodulate
from .pilots import PilotPlan
from .system import transmit_signals


class PreambleLink:
    """Precomputed transmit side of one pilot plan.

    Only the samples ``[0, window)`` reach any pilot slot's demodulator, so
    received signals and noise are cut to that window.
    """

    def __init__(self, cfg: FbmcConfig, plan: PilotPlan):
        if plan.n_slots == 0:
            raise ValueError("plan has no pilots")
        self.cfg = cfg
        self.plan = plan
        self.signals = transmit_signals(cfg, plan)
        self.slots = plan.all_slots()
        self.window = cfg.signal_length(plan.n_slots)

    def received(self, taps: Sequence[np.ndarray]) -> np.ndarray:
        """Noiseless received window for per-user taps of shape ``(..., L_u)``."""
        return receive(self.signals, taps, self.window)

    def demodulate(self, y: np.ndarray) -> np.ndarray:
        return demodulate(self.cfg, y, 0, self.slots)

    def observe(self, taps: Sequence[np.ndarray], noise: np.ndarray | None = None) -> np.ndarray:
        """Demodulated pilots ``z`` with shape ``(..., N_p^t)``.

        ``noise`` is added in the time domain and must already carry the
        desired variance; its shape is ``(..., window)``.
        """
        y = self.received(taps)
        if noise is not None:
            y = y + noise
        return self.demodulate(y)
