"""Experiment configuration files (INI syntax, one file per figure)."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from ..fbmc import PHYDYAS_COEFFICIENTS

KINDS = ("nmse_single", "nmse_multi", "sumrate_cell")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int = 0
    trials: int = 1000
    snr_db: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0)
    # waveform
    M: int = 128
    kappa: int = 4
    # channel
    users: int = 1
    lengths: tuple[int, ...] = (32,)
    beta_interest: float = 0.5
    beta_others: tuple[float, float] = (0.4, 0.6)
    # pilots
    pilot_counts: tuple[int, ...] = ()
    power: float | None = None
    baseline: bool = True
    # scenario (sum-rate)
    antennas: int = 128
    cells: int = 1
    coherence_slots: int = 84
    cross_gain: str | float = "uniform"
    disjoint_cells: bool = True
    notes: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        validate(self)

    @property
    def pilot_power(self) -> float:
        """Per-user pilot power; defaults to the channel length (unit-magnitude pilots)."""
        return float(self.lengths[0] if self.power is None else self.power)

    def noise_variance(self, snr_db: float) -> float:
        """Noise variance for an SNR per pilot sample of the ``N_p = L`` plan."""
        return self.pilot_power / (self.lengths[0] * 10.0 ** (snr_db / 10.0))

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.compare}
        blob = json.dumps(payload, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def validate(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError("experiment.kind", f"must be one of {KINDS}, got {cfg.kind!r}")
    if cfg.trials < 1:
        raise ConfigError("experiment.trials", "must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("experiment.seed", "must be non-negative")
    if not cfg.snr_db:
        raise ConfigError("experiment.snr_db", "SNR grid is empty")
    if cfg.M < 2 or cfg.M % 2:
        raise ConfigError("waveform.M", "must be an even integer >= 2")
    if cfg.kappa not in PHYDYAS_COEFFICIENTS:
        raise ConfigError("waveform.kappa", f"PHYDYAS supports {sorted(PHYDYAS_COEFFICIENTS)}")
    if cfg.users < 1:
        raise ConfigError("channel.users", "must be >= 1")
    if len(cfg.lengths) != cfg.users:
        raise ConfigError("channel.lengths", f"need {cfg.users} lengths, got {len(cfg.lengths)}")
    if any(not 1 <= L <= cfg.M for L in cfg.lengths):
        raise ConfigError("channel.lengths", f"each length must lie in [1, M={cfg.M}]")
    lo, hi = cfg.beta_others
    if cfg.beta_interest < 0 or lo < 0 or hi < lo:
        raise ConfigError("channel.beta_others", "decay rates must be >= 0 with low <= high")
    if cfg.power is not None and cfg.power <= 0:
        raise ConfigError("pilots.power", "must be positive")
    if cfg.kind == "nmse_single":
        if cfg.users != 1:
            raise ConfigError("channel.users", "nmse_single needs exactly one user")
        for c in cfg.pilot_counts or (cfg.lengths[0],):
            if not cfg.lengths[0] <= c <= cfg.M:
                raise ConfigError("pilots.pilot_counts", f"{c} outside [L, M]")
    if cfg.kind == "nmse_multi" and sum(cfg.lengths) > 2 * cfg.M:
        raise ConfigError("channel.lengths", "total pilots exceed two OQAM time slots")
    if cfg.kind == "sumrate_cell":
        if len(set(cfg.lengths)) != 1:
            raise ConfigError("channel.lengths", "sum-rate scenarios use one common length")
        if cfg.antennas < 1:
            raise ConfigError("scenario.antennas", "must be >= 1")
        if cfg.cells not in (1, 2):
            raise ConfigError("scenario.cells", "must be 1 or 2")
        if cfg.users * cfg.cells * cfg.lengths[0] > 2 * cfg.M:
            raise ConfigError("scenario.cells", "pilots of all cells exceed two time slots")
        if isinstance(cfg.cross_gain, str):
            if cfg.cross_gain != "uniform":
                raise ConfigError("scenario.cross_gain", "must be 'uniform' or a number in [0, 1]")
        elif not 0.0 <= cfg.cross_gain <= 1.0:
            raise ConfigError("scenario.cross_gain", "must lie in [0, 1]")
        guard = cfg.kappa - 1
        baseline_slots = cfg.users * (1 + guard)
        if baseline_slots > cfg.coherence_slots:
            raise ConfigError(
                "scenario.coherence_slots",
                f"baseline preamble needs {baseline_slots} slots",
            )


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _get(parser, section, key, conv, fieldname):
    if not parser.has_option(section, key):
        return None
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(fieldname, f"cannot parse {raw!r}: {exc}") from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _cross_gain(text: str) -> str | float:
    text = text.strip()
    return text if text == "uniform" else float(text)


_SCHEMA = {
    ("experiment", "kind"): ("kind", str.strip),
    ("experiment", "seed"): ("seed", int),
    ("experiment", "trials"): ("trials", int),
    ("experiment", "snr_db"): ("snr_db", _floats),
    ("experiment", "notes"): ("notes", str.strip),
    ("waveform", "m"): ("M", int),
    ("waveform", "kappa"): ("kappa", int),
    ("channel", "users"): ("users", int),
    ("channel", "lengths"): ("lengths", _ints),
    ("channel", "beta_interest"): ("beta_interest", float),
    ("channel", "beta_others"): ("beta_others", _floats),
    ("pilots", "pilot_counts"): ("pilot_counts", _ints),
    ("pilots", "power"): ("power", float),
    ("pilots", "baseline"): ("baseline", _bool),
    ("scenario", "antennas"): ("antennas", int),
    ("scenario", "cells"): ("cells", int),
    ("scenario", "coherence_slots"): ("coherence_slots", int),
    ("scenario", "cross_gain"): ("cross_gain", _cross_gain),
    ("scenario", "disjoint_cells"): ("disjoint_cells", _bool),
}


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    known = {s for s, _ in _SCHEMA}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(section, "unknown section")
        for key in parser.options(section):
            if (section, key) not in _SCHEMA:
                raise ConfigError(f"{section}.{key}", "unknown key")
    if not parser.has_option("experiment", "kind"):
        raise ConfigError("experiment.kind", "missing")
    values = {}
    for (section, key), (name, conv) in _SCHEMA.items():
        val = _get(parser, section, key, conv, f"{section}.{key}")
        if val is not None:
            values[name] = val
    if "lengths" in values and "users" not in values:
        values["users"] = len(values["lengths"])
    if "users" in values and "lengths" in values and len(values["lengths"]) == 1:
        values["lengths"] = values["lengths"] * values["users"]
    if "beta_others" in values and len(values["beta_others"]) == 1:
        values["beta_others"] = values["beta_others"] * 2
    if "beta_others" in values and len(values["beta_others"]) != 2:
        raise ConfigError("channel.beta_others", "expected 'low, high'")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError("file", str(exc)) from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("file", f"cannot read {path}: {exc}") from None
    return parse_config(text, source=str(path))
