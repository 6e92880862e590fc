"""System matrices of the demodulated pilot model ``z = A h + eta``.

Columns are built by transmitting each user's preamble through a unit tap at
every delay and demodulating at all pilot slots.  The noise covariance is
kept with the noise variance factored out, ``C = sigma2 * C0``.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fbmc import FbmcConfig, basis_matrix, demodulate, synthesize
from .pilots import PilotPlan, PreambleLayout, render_preamble

TOL_ORTH = 5e-3


@dataclass(frozen=True)
class SystemMatrices:
    """Stacked multiuser matrix and unit-noise covariance for one pilot plan.

    Rows of ``A_bar`` and rows/columns of ``C0`` follow ``slot_order``;
    column block ``u`` of ``A_bar`` holds user ``u``'s ``lengths[u]`` taps.
    """

    A_bar: np.ndarray
    C0: np.ndarray
    slot_order: tuple[tuple[int, int, int], ...]
    lengths: tuple[int, ...]

    def __post_init__(self) -> None:
        n_rows = len(self.slot_order)
        if self.A_bar.shape != (n_rows, sum(self.lengths)):
            raise ValueError(
                f"A_bar has shape {self.A_bar.shape}, expected ({n_rows}, {sum(self.lengths)})"
            )
        if self.C0.shape != (n_rows, n_rows):
            raise ValueError(f"C0 has shape {self.C0.shape}, expected ({n_rows}, {n_rows})")

    @property
    def U(self) -> int:
        return len(self.lengths)

    @property
    def row_bounds(self) -> np.ndarray:
        users = np.array([u for u, _, _ in self.slot_order], dtype=int)
        counts = np.bincount(users, minlength=self.U) if users.size else np.zeros(self.U, int)
        return np.concatenate([[0], np.cumsum(counts)])

    @property
    def col_bounds(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.lengths)])

    def C(self, sigma2: float) -> np.ndarray:
        return sigma2 * self.C0

    def block(self, u1: int, u2: int) -> np.ndarray:
        """``A_u`` when ``u1 == u2``, otherwise the interference block of ``u2`` on ``u1``."""
        r, c = self.row_bounds, self.col_bounds
        return self.A_bar[r[u1]:r[u1 + 1], c[u2]:c[u2 + 1]]

    def split(self, h_bar: np.ndarray) -> list[np.ndarray]:
        """Cut a stacked tap vector (or matrix of column vectors) into per-user pieces."""
        c = self.col_bounds
        return [h_bar[c[u]:c[u + 1]] for u in range(self.U)]


def _check_lengths(cfg: FbmcConfig, plan: PilotPlan, lengths: Sequence[int]) -> list[int]:
    lengths = [int(L) for L in lengths]
    if len(lengths) != plan.U:
        raise ValueError(f"{len(lengths)} channel lengths for {plan.U} users")
    for u, L in enumerate(lengths):
        if not 1 <= L <= cfg.M:
            raise ValueError(f"user {u}: channel length {L} outside [1, M={cfg.M}]")
    return lengths


def transmit_signals(cfg: FbmcConfig, plan: PilotPlan) -> list[np.ndarray]:
    """Each user's transmitted preamble (pilot time slots only), starting at sample 0."""
    layout = PreambleLayout(max(plan.n_slots, 1), 0)
    return [
        synthesize(cfg, render_preamble(plan, layout, users=[u])).samples for u in range(plan.U)
    ]


def delay_matrix(x: np.ndarray, L: int) -> np.ndarray:
    """Rows are ``x`` delayed by ``0..L-1`` samples, each of length ``len(x) + L - 1``."""
    out = np.zeros((L, x.size + L - 1), dtype=complex)
    for l in range(L):
        out[l, l:l + x.size] = x
    return out


def build_multiuser_A(
    cfg: FbmcConfig, plan: PilotPlan, lengths: Sequence[int] | None = None
) -> np.ndarray:
    """Stacked system matrix with diagonal blocks ``A_u`` and interference blocks.

    Column ``(u2, l)`` is the demodulated response at every pilot slot when
    only user ``u2`` transmits, through a unit tap at delay ``l``.
    """
    lengths = _check_lengths(cfg, plan, plan.lengths if lengths is None else lengths)
    slots = plan.all_slots()
    cols = []
    for x, L in zip(transmit_signals(cfg, plan), lengths):
        received = delay_matrix(x, L)
        cols.append(demodulate(cfg, received, 0, slots).T)
    if not cols:
        return np.zeros((0, 0), dtype=complex)
    return np.hstack(cols)


def build_single_user_A(cfg: FbmcConfig, plan: PilotPlan, L: int | None = None) -> np.ndarray:
    if plan.U != 1:
        raise ValueError(f"single-user system matrix needs a one-user plan, got {plan.U} users")
    return build_multiuser_A(cfg, plan, [plan.lengths[0] if L is None else L])


def build_noise_covariance(cfg: FbmcConfig, plan: PilotPlan, sigma2: float = 1.0) -> np.ndarray:
    """``C[i, j] = sigma2 * <g_j, g_i>`` over the plan's pilot slots."""
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    slots = plan.all_slots()
    if not slots:
        return np.zeros((0, 0), dtype=complex)
    G = basis_matrix(cfg, slots, 0, cfg.signal_length(plan.n_slots))
    C = G.conj().T @ G
    C = 0.5 * (C + C.conj().T)
    return sigma2 * C


def build_system(
    cfg: FbmcConfig, plan: PilotPlan, lengths: Sequence[int] | None = None
) -> SystemMatrices:
    lengths = plan.lengths if lengths is None else tuple(lengths)
    return SystemMatrices(
        A_bar=build_multiuser_A(cfg, plan, lengths),
        C0=build_noise_covariance(cfg, plan, 1.0),
        slot_order=tuple(plan.slot_order()),
        lengths=tuple(int(L) for L in lengths),
    )


_cache: dict[tuple, SystemMatrices] = {}
_cache_lock = threading.Lock()


def system_for(
    cfg: FbmcConfig, plan: PilotPlan, lengths: Sequence[int] | None = None
) -> SystemMatrices:
    """Cached :func:`build_system`; safe to call from many threads."""
    lengths = tuple(plan.lengths if lengths is None else lengths)
    key = (cfg.key(), plan.key(), lengths)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    built = build_system(cfg, plan, lengths)
    with _cache_lock:
        return _cache.setdefault(key, built)


# Binary layout (little endian):
#   8s  magic b"FBMCSYS\0"
#   I   version
#   I   n_rows, I n_cols, I n_users
#   n_users x I      channel lengths
#   n_rows x 3 i     slot order (user, m, n)
#   n_rows*n_cols    complex64 A_bar, row-major
#   n_rows*n_rows    complex64 C0, row-major
MAGIC = b"FBMCSYS\0"
FORMAT_VERSION = 1


def dump_system(S: SystemMatrices, path: str | os.PathLike) -> None:
    n_rows, n_cols = S.A_bar.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", FORMAT_VERSION, n_rows, n_cols, S.U))
        fh.write(np.asarray(S.lengths, dtype="<u4").tobytes())
        fh.write(np.asarray(S.slot_order, dtype="<i4").reshape(n_rows, 3).tobytes())
        fh.write(np.ascontiguousarray(S.A_bar, dtype="<c8").tobytes())
        fh.write(np.ascontiguousarray(S.C0, dtype="<c8").tobytes())


def load_system(path: str | os.PathLike) -> SystemMatrices:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a system-matrix dump")
    version, n_rows, n_cols, n_users = struct.unpack_from("<IIII", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    pos = 24
    lengths = np.frombuffer(data, "<u4", n_users, pos)
    pos += 4 * n_users
    order = np.frombuffer(data, "<i4", 3 * n_rows, pos).reshape(n_rows, 3)
    pos += 12 * n_rows
    A = np.frombuffer(data, "<c8", n_rows * n_cols, pos).reshape(n_rows, n_cols)
    pos += 8 * n_rows * n_cols
    C0 = np.frombuffer(data, "<c8", n_rows * n_rows, pos).reshape(n_rows, n_rows)
    return SystemMatrices(
        A_bar=A.astype(complex),
        C0=C0.astype(complex),
        slot_order=tuple(tuple(int(v) for v in row) for row in order),
        lengths=tuple(int(L) for L in lengths),
    )
