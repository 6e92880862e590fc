"""Interleaved multiuser pilot preambles.

Each user gets ``N_p^u`` (default ``L_u``) pilots equally spaced in frequency
with spacing ``M / N_p^u``.  Users' combs are packed side by side with
consecutive frequency offsets and no guard between them; a comb moves to the
next OQAM time slot only when the current one is full.  Guards are placed
only between the preamble and the data.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fbmc import ROLE_GUARD, BasebandSignal, TfGrid
from .streams import stream


class PlanCapacityError(ValueError):
    """The requested pilots do not fit in the available time-frequency slots."""


@dataclass(frozen=True)
class PilotPlan:
    """Pilot slots and values for every user.

    ``slots[u]`` is an ``(N_p^u, 2)`` integer array of ``(m, n)`` pairs and
    ``values[u]`` the matching real pilot values.
    """

    M: int
    slots: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]
    lengths: tuple[int, ...]
    near_uniform: bool = False

    def __post_init__(self) -> None:
        slots = tuple(np.asarray(s, dtype=int).reshape(-1, 2) for s in self.slots)
        values = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.values)
        lengths = tuple(int(L) for L in self.lengths)
        if not (len(slots) == len(values) == len(lengths)):
            raise ValueError("slots, values and lengths need one entry per user")
        seen: set[tuple[int, int]] = set()
        for u, (s, v, L) in enumerate(zip(slots, values, lengths)):
            if s.shape[0] != v.shape[0]:
                raise ValueError(f"user {u}: {s.shape[0]} slots but {v.shape[0]} values")
            if s.shape[0] < L:
                raise ValueError(f"user {u}: {s.shape[0]} pilots cannot resolve {L} taps")
            if np.any(s[:, 0] < 0) or np.any(s[:, 0] >= self.M) or np.any(s[:, 1] < 0):
                raise ValueError(f"user {u}: slot index out of range")
            here = {(int(m), int(n)) for m, n in s}
            if len(here) != s.shape[0]:
                raise ValueError(f"user {u}: repeated pilot slot")
            if here & seen:
                raise ValueError(f"user {u}: pilot slots collide with another user")
            seen |= here
        for name, val in (("slots", slots), ("values", values), ("lengths", lengths)):
            object.__setattr__(self, name, val)

    @property
    def U(self) -> int:
        return len(self.slots)

    @property
    def pilot_counts(self) -> list[int]:
        return [s.shape[0] for s in self.slots]

    @property
    def total_pilots(self) -> int:
        return sum(self.pilot_counts)

    @property
    def power(self) -> np.ndarray:
        return np.array([np.sum(v**2) for v in self.values])

    @property
    def n_slots(self) -> int:
        """Number of OQAM time slots touched by pilots (0 for an empty plan)."""
        ns = [int(s[:, 1].max()) for s in self.slots if s.size]
        return max(ns) + 1 if ns else 0

    def slot_order(self) -> list[tuple[int, int, int]]:
        """Row order ``(user, m, n)`` shared by z, the system matrix and C."""
        return [(u, int(m), int(n)) for u, s in enumerate(self.slots) for m, n in s]

    def all_slots(self) -> list[tuple[int, int]]:
        return [(m, n) for _, m, n in self.slot_order()]

    def row_bounds(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.pilot_counts)])

    def comb_offsets(self) -> dict[int, tuple[int, int]]:
        """``user -> (first pilot subcarrier, time slot)`` for each user."""
        return {u: (int(s[0, 0]), int(s[0, 1])) for u, s in enumerate(self.slots) if s.size}

    def scaled(self, c: float) -> "PilotPlan":
        return PilotPlan(
            self.M, self.slots, tuple(v * c for v in self.values), self.lengths, self.near_uniform
        )

    def subset(self, users: Sequence[int]) -> "PilotPlan":
        return PilotPlan(
            self.M,
            tuple(self.slots[u] for u in users),
            tuple(self.values[u] for u in users),
            tuple(self.lengths[u] for u in users),
            self.near_uniform,
        )

    def key(self) -> tuple:
        return (
            self.M,
            self.lengths,
            tuple(s.tobytes() for s in self.slots),
            tuple(v.tobytes() for v in self.values),
        )


@dataclass(frozen=True)
class PreambleLayout:
    n_pilot_slots: int
    n_guard: int = 3

    def __post_init__(self) -> None:
        if self.n_pilot_slots < 0 or self.n_guard < 0:
            raise ValueError("slot counts must be non-negative")

    @classmethod
    def for_plan(cls, plan: PilotPlan, kappa: int = 4) -> "PreambleLayout":
        return cls(max(plan.n_slots, 1), kappa - 1)

    @property
    def n_slots(self) -> int:
        return self.n_pilot_slots + self.n_guard


def _comb(M: int, count: int, offset: int) -> tuple[np.ndarray, bool]:
    if M % count == 0:
        return offset + np.arange(count) * (M // count), False
    return (offset + np.floor(np.arange(count) * M / count).astype(int)) % M, True


def design_plan(
    M: int,
    lengths: Sequence[int],
    power: float | Sequence[float],
    *,
    pilot_counts: Sequence[int] | None = None,
    max_pilot_slots: int = 2,
    separate_users: int | None = None,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> PilotPlan:
    """Build an equally spaced, interleaved pilot plan.

    Args:
        M: Number of subcarriers.
        lengths: Channel length ``L_u`` per user.
        power: Pilot power budget ``P_t`` (scalar or per user).
        pilot_counts: Pilots per user, defaults to ``lengths``.
        max_pilot_slots: Time slots the interleaved combs may occupy.
        separate_users: If given, put each user in its own time slot with this
            many empty guard slots between consecutive users (the
            conventional, guard-separated layout).
        seed: Seed for the pilot sign stream, used when ``rng`` is None.
        rng: Generator for the pseudo-random pilot signs.

    Returns:
        The plan.  ``near_uniform`` is set when some ``M / N_p^u`` is not an
        integer and that user's comb is only approximately uniform.
    """
    lengths = [int(L) for L in lengths]
    U = len(lengths)
    counts = list(lengths) if pilot_counts is None else [int(c) for c in pilot_counts]
    if len(counts) != U:
        raise ValueError("pilot_counts needs one entry per user")
    powers = np.broadcast_to(np.asarray(power, dtype=float), (U,))
    if np.any(powers <= 0):
        raise ValueError("pilot power must be positive")
    for u, (c, L) in enumerate(zip(counts, lengths)):
        if not 1 <= c <= M:
            raise PlanCapacityError(f"user {u}: {c} pilots do not fit in {M} subcarriers")
        if c < L:
            raise ValueError(f"user {u}: {c} pilots cannot resolve {L} taps")
    if rng is None:
        rng = stream(seed, "pilot_signs")

    occupied: set[tuple[int, int]] = set()
    slots, values = [], []
    flagged = False
    for u, c in enumerate(counts):
        placed = None
        candidates = (
            [u * (separate_users + 1)] if separate_users is not None else range(max_pilot_slots)
        )
        for n in candidates:
            for offset in range(max(M // c, 1) if M % c == 0 else M):
                ms, approx = _comb(M, c, offset)
                if all((int(m), n) not in occupied for m in ms):
                    placed = (ms, n, approx)
                    break
            if placed:
                break
        if placed is None:
            raise PlanCapacityError(
                f"no room for user {u}'s {c} pilots in {list(candidates)} time slots "
                f"(total requested {sum(counts)}, capacity {M * max_pilot_slots})"
            )
        ms, n, approx = placed
        flagged |= approx
        s = np.column_stack([ms, np.full(c, n)])
        occupied |= {(int(m), n) for m in ms}
        signs = rng.choice(np.array([-1.0, 1.0]), size=c)
        slots.append(s)
        values.append(signs * np.sqrt(powers[u] / c))
    if flagged:
        warnings.warn(
            "M is not divisible by every pilot count; combs are only near-uniform",
            stacklevel=2,
        )
    return PilotPlan(M, tuple(slots), tuple(values), tuple(lengths), flagged)


def render_preamble(
    plan: PilotPlan, layout: PreambleLayout, users: Sequence[int] | None = None
) -> TfGrid:
    """Preamble grid: pilots at plan slots, zeros (guard role) everywhere else.

    With ``users`` given, only those users' pilots are written, which is what
    an individual transmitter puts on the air.
    """
    if layout.n_pilot_slots < plan.n_slots:
        raise ValueError(
            f"layout has {layout.n_pilot_slots} pilot slots, plan needs {plan.n_slots}"
        )
    shape = (plan.M, layout.n_slots)
    symbols = np.zeros(shape)
    roles = np.full(shape, ROLE_GUARD, dtype=int)
    for u in range(plan.U) if users is None else users:
        s = plan.slots[u]
        symbols[s[:, 0], s[:, 1]] = plan.values[u]
        roles[s[:, 0], s[:, 1]] = u
    return TfGrid(symbols, roles)


def measure_papr(x: BasebandSignal | np.ndarray, trim: bool = True) -> float:
    """Peak-to-average power ratio in dB.

    With ``trim`` the average runs over the signal's support only, from the
    first to the last non-zero sample.
    """
    samples = x.samples if isinstance(x, BasebandSignal) else np.asarray(x)
    p = np.abs(samples) ** 2
    nz = np.flatnonzero(p)
    if nz.size == 0:
        raise ValueError("PAPR of an all-zero signal is undefined")
    if trim:
        p = p[nz[0]:nz[-1] + 1]
    return float(10.0 * np.log10(p.max() / p.mean()))


PLAN_HEADER = "# fbmc-uplink pilot plan v1"


def save_plan(plan: PilotPlan, path: str | os.PathLike) -> None:
    """Write one ``user,m,n,value`` record per pilot, plus a small header."""
    offsets = ";".join(f"{u}:{m}@{n}" for u, (m, n) in plan.comb_offsets().items())
    lines = [
        PLAN_HEADER,
        f"# M={plan.M}",
        f"# lengths={','.join(map(str, plan.lengths))}",
        f"# comb_offsets={offsets}",
        f"# near_uniform={int(plan.near_uniform)}",
        "user,m,n,value",
    ]
    for u, (s, v) in enumerate(zip(plan.slots, plan.values)):
        lines.extend(f"{u},{m},{n},{val!r}" for (m, n), val in zip(s.tolist(), v.tolist()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_plan(path: str | os.PathLike) -> PilotPlan:
    M = None
    near_uniform = False
    lengths: list[int] = []
    records: list[tuple[int, int, int, float]] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "M":
                    M = int(val)
                elif key == "lengths" and val:
                    lengths = [int(x) for x in val.split(",")]
                elif key == "near_uniform":
                    near_uniform = bool(int(val))
                continue
            if line.startswith("user"):
                continue
            u, m, n, v = line.split(",")
            records.append((int(u), int(m), int(n), float(v)))
    if M is None:
        raise ValueError(f"{path}: missing '# M=' header")
    U = len(lengths)
    slots = [[] for _ in range(U)]
    values = [[] for _ in range(U)]
    for u, m, n, v in records:
        if not 0 <= u < U:
            raise ValueError(f"{path}: user {u} not declared in lengths header")
        slots[u].append((m, n))
        values[u].append(v)
    return PilotPlan(M, tuple(np.array(s, dtype=int).reshape(-1, 2) for s in slots),
                     tuple(np.array(v) for v in values), tuple(lengths), near_uniform)
