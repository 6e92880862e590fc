"""Least-squares channel estimators, their MSE, and the Cramer-Rao bound.

Solves go through a Cholesky whitening of ``C0`` followed by a QR
factorisation of the whitened system matrix; inverses are only formed where
a trace of ``F^-1`` is needed, by triangular solves against the identity.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .channel import ChannelSet
from .fbmc import FbmcConfig
from .link import PreambleLink
from .pilots import PilotPlan, design_plan
from .streams import complex_normal
from .system import SystemMatrices, system_for

RANK_TOL = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """The system (or noise covariance) is numerically rank deficient."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


def _qr(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    if A.shape[0] < A.shape[1]:
        raise SingularSystemError(
            f"system is underdetermined: {A.shape[0]} rows for {A.shape[1]} unknowns", np.inf
        )
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.abs(np.diag(R))
    cond = np.inf if d.min() == 0 else float(np.linalg.cond(R))
    if d.min() <= RANK_TOL * d.max() or not np.isfinite(cond) or cond > 1.0 / RANK_TOL:
        raise SingularSystemError("system matrix is rank deficient", cond)
    return Q, R, cond


def _as_columns(z: np.ndarray, n_rows: int) -> tuple[np.ndarray, tuple]:
    z = np.asarray(z)
    if z.shape[-1] != n_rows:
        raise ValueError(f"observation has {z.shape[-1]} entries, system has {n_rows} rows")
    batch = z.shape[:-1]
    return z.reshape(-1, n_rows).T, batch


def ls_estimate(z: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Least-squares ``argmin ||z - A h||``.

    ``z`` may be a vector or carry leading batch dimensions (pilots on the
    last axis); the result has the same batch shape.
    """
    Q, R, _ = _qr(np.asarray(A))
    cols, batch = _as_columns(z, A.shape[0])
    h = solve_triangular(R, Q.conj().T @ cols)
    return h.T.reshape(batch + (A.shape[1],))


def ls_mse(A: np.ndarray, sigma2: float, C0: np.ndarray | None = None) -> float:
    """MSE of plain LS when the noise covariance is ``sigma2 * C0`` (white if None)."""
    Q, R, _ = _qr(np.asarray(A))
    Rinv = solve_triangular(R, np.eye(R.shape[0], dtype=complex))
    if C0 is None:
        return float(sigma2 * np.sum(np.abs(Rinv) ** 2))
    P = Rinv @ Q.conj().T
    return float(sigma2 * np.real(np.trace(P @ C0 @ P.conj().T)))


class GlsSolver:
    """Whitened least squares for one set of system matrices.

    The projector ``(A^H C^-1 A)^-1 A^H C^-1`` does not depend on the noise
    level, so one solver serves every SNR point.
    """

    def __init__(self, S: SystemMatrices):
        self.S = S
        try:
            self._chol = np.linalg.cholesky(S.C0)
        except np.linalg.LinAlgError:
            ev = np.linalg.eigvalsh(S.C0)
            raise SingularSystemError(
                "noise covariance is not positive definite",
                float(np.abs(ev).max() / max(ev.min(), 1e-300)),
            ) from None
        W = solve_triangular(self._chol, S.A_bar, lower=True)
        self._Q, self._R, self.condition = _qr(W)

    def estimate(self, z_bar: np.ndarray) -> np.ndarray:
        """Stacked estimate; batch dimensions as in :func:`ls_estimate`."""
        cols, batch = _as_columns(z_bar, self.S.A_bar.shape[0])
        white = solve_triangular(self._chol, cols, lower=True)
        h = solve_triangular(self._R, self._Q.conj().T @ white)
        return h.T.reshape(batch + (self.S.A_bar.shape[1],))

    def estimate_users(self, z_bar: np.ndarray) -> list[np.ndarray]:
        h = self.estimate(z_bar)
        c = self.S.col_bounds
        return [h[..., c[u]:c[u + 1]] for u in range(self.S.U)]

    @cached_property
    def _R_inv(self) -> np.ndarray:
        return solve_triangular(self._R, np.eye(self._R.shape[0], dtype=complex))

    @cached_property
    def projector(self) -> np.ndarray:
        """Explicit estimator matrix, for precompute-and-reuse."""
        white = solve_triangular(self._chol, np.eye(self._chol.shape[0], dtype=complex), lower=True)
        return self._R_inv @ (self._Q.conj().T @ white)

    def fisher_inverse_trace(self) -> float:
        """``tr[(A^H C0^-1 A)^-1]``, i.e. the CRLB at unit noise variance."""
        return float(np.sum(np.abs(self._R_inv) ** 2))

    def error_covariance_trace(self) -> float:
        """``tr(W C0 W^H)`` for the explicit projector ``W``."""
        W = self.projector
        return float(np.real(np.einsum("ij,jk,ik->", W, self.S.C0, W.conj())))


_solvers: dict[int, tuple[SystemMatrices, GlsSolver]] = {}
_solver_lock = threading.Lock()


def gls_solver(S: SystemMatrices) -> GlsSolver:
    """Solver for ``S``, reused while ``S`` is alive (keyed by identity)."""
    hit = _solvers.get(id(S))
    if hit is not None and hit[0] is S:
        return hit[1]
    solver = GlsSolver(S)
    with _solver_lock:
        if len(_solvers) >= 256:
            _solvers.clear()
        _solvers[id(S)] = (S, solver)
    return solver


def gls_estimate(z_bar: np.ndarray, S: SystemMatrices) -> list[np.ndarray]:
    """Correlation-aware LS estimate, split per user."""
    return gls_solver(S).estimate_users(z_bar)


def crlb(S: SystemMatrices, sigma2: float) -> float:
    """``tr(F^-1)`` with Fisher matrix ``F = A^H (sigma2 C0)^-1 A``."""
    if sigma2 <= 0:
        raise ValueError("CRLB needs a positive noise variance")
    return sigma2 * gls_solver(S).fisher_inverse_trace()


def analytic_mse_multi(S: SystemMatrices, sigma2: float) -> float:
    """MSE of :func:`gls_estimate`, from the estimator's error covariance."""
    if sigma2 <= 0:
        raise ValueError("MSE needs a positive noise variance")
    return sigma2 * gls_solver(S).error_covariance_trace()


def analytic_mse_single(sigma2: float, L: int, P_t: float) -> float:
    """Closed form ``sigma2 * L / P_t`` for equally spaced, interference-free pilots."""
    if P_t <= 0:
        raise ValueError("pilot power must be positive")
    return sigma2 * L / P_t


def nmse(h_hat, h_true) -> float:
    """Normalised squared error; lists of per-user vectors are pooled."""
    if isinstance(h_true, (list, tuple)):
        h_hat = np.concatenate([np.ravel(h) for h in h_hat])
        h_true = np.concatenate([np.ravel(h) for h in h_true])
    h_hat, h_true = np.asarray(h_hat), np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError(f"shape mismatch {h_hat.shape} vs {h_true.shape}")
    ref = np.sum(np.abs(h_true) ** 2)
    if ref == 0:
        raise ValueError("true channel has zero energy")
    return float(np.sum(np.abs(h_hat - h_true) ** 2) / ref)


def nmse_per_user(h_hat: Sequence[np.ndarray], h_true: Sequence[np.ndarray]) -> np.ndarray:
    return np.array([nmse(a, b) for a, b in zip(h_hat, h_true)])


@dataclass
class EstimationReport:
    h_hat: list[np.ndarray]
    nmse: float
    nmse_per_user: np.ndarray
    crlb: float
    analytic_mse: float
    preamble_slots: int
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.h_hat) != len(self.nmse_per_user):
            raise ValueError("one estimate per user required")


def _observe(
    cfg: FbmcConfig, plan: PilotPlan, channels: ChannelSet, sigma2: float, rng
) -> tuple[np.ndarray, list[np.ndarray]]:
    link = PreambleLink(cfg, plan)
    taps = [c.taps for c in channels.channels]
    noise = complex_normal(rng, link.window, sigma2) if sigma2 > 0 else None
    return link.observe(taps, noise), taps


def proposed_estimate(
    cfg: FbmcConfig,
    plan: PilotPlan,
    channels: ChannelSet,
    sigma2: float,
    rng: np.random.Generator,
    n_guard: int | None = None,
) -> EstimationReport:
    """One link-level run of the interleaved plan with joint GLS estimation."""
    if list(plan.lengths) != channels.lengths:
        raise ValueError("plan lengths and channel lengths differ")
    S = system_for(cfg, plan)
    z, taps = _observe(cfg, plan, channels, sigma2, rng)
    h_hat = gls_estimate(z, S)
    n_guard = cfg.kappa - 1 if n_guard is None else n_guard
    bound = crlb(S, sigma2) if sigma2 > 0 else 0.0
    return EstimationReport(
        h_hat=h_hat,
        nmse=nmse(h_hat, taps),
        nmse_per_user=nmse_per_user(h_hat, taps),
        crlb=bound,
        analytic_mse=analytic_mse_multi(S, sigma2) if sigma2 > 0 else 0.0,
        preamble_slots=plan.n_slots + n_guard,
    )


def fullpilot_plan(
    cfg: FbmcConfig,
    lengths: Sequence[int],
    power: float | Sequence[float],
    n_guard: int | None = None,
    seed: int = 0,
) -> PilotPlan:
    """Conventional layout: all ``M`` subcarriers per user, users separated by guards."""
    n_guard = cfg.kappa - 1 if n_guard is None else n_guard
    return design_plan(
        cfg.M,
        lengths,
        power,
        pilot_counts=[cfg.M] * len(lengths),
        separate_users=n_guard,
        seed=seed,
    )


class FullPilotReceiver:
    """Per-user LS on the guard-separated, full-subcarrier preamble.

    Each user's block is solved in isolation, so the (small) leakage between
    time-separated users is treated as noise.
    """

    def __init__(self, cfg: FbmcConfig, plan: PilotPlan):
        self.cfg = cfg
        self.plan = plan
        self.S = system_for(cfg, plan)
        self.link = PreambleLink(cfg, plan)
        self.rows = plan.row_bounds()
        self._blocks = [self.S.block(u, u) for u in range(plan.U)]

    def estimate_users(self, z: np.ndarray) -> list[np.ndarray]:
        r = self.rows
        return [ls_estimate(z[..., r[u]:r[u + 1]], A) for u, A in enumerate(self._blocks)]

    def analytic_mse(self, sigma2: float) -> float:
        r = self.rows
        return sum(
            ls_mse(A, sigma2, self.S.C0[r[u]:r[u + 1], r[u]:r[u + 1]])
            for u, A in enumerate(self._blocks)
        )

    def crlb(self, sigma2: float) -> float:
        r = self.rows
        total = 0.0
        for u in range(self.plan.U):
            sl = slice(r[u], r[u + 1])
            sub = SystemMatrices(
                self._blocks[u], self.S.C0[sl, sl], self.S.slot_order[sl], (self.S.lengths[u],)
            )
            total += crlb(sub, sigma2)
        return total

    @property
    def preamble_slots(self) -> int:
        return self.plan.n_slots + self.cfg.kappa - 1


def baseline_fullpilot_estimate(
    cfg: FbmcConfig,
    channels: ChannelSet,
    sigma2: float,
    rng: np.random.Generator,
    power: float | Sequence[float] | None = None,
    seed: int = 0,
) -> EstimationReport:
    """Full-pilot, guard-separated baseline with per-user LS (``N_p = M``).

    ``power`` defaults to ``L_u`` per user, i.e. unit-magnitude pilots on
    the equivalent sparse plan.
    """
    lengths = channels.lengths
    power = lengths if power is None else power
    plan = fullpilot_plan(cfg, lengths, power, seed=seed)
    rx = FullPilotReceiver(cfg, plan)
    z, taps = _observe(cfg, plan, channels, sigma2, rng)
    h_hat = rx.estimate_users(z)
    return EstimationReport(
        h_hat=h_hat,
        nmse=nmse(h_hat, taps),
        nmse_per_user=nmse_per_user(h_hat, taps),
        crlb=rx.crlb(sigma2) if sigma2 > 0 else 0.0,
        analytic_mse=rx.analytic_mse(sigma2),
        preamble_slots=rx.preamble_slots,
    )
