"""Interleaved multiuser pilots and channel estimation for FBMC/OQAM uplinks."""

__version__ = "0.1.0"

from .channel import ChannelProfile, ChannelRealization, ChannelSet, sample_channel
from .estimators import (
    SingularSystemError,
    analytic_mse_multi,
    analytic_mse_single,
    crlb,
    gls_estimate,
    ls_estimate,
    nmse,
)
from .fbmc import FbmcConfig, TfGrid, analyze, basis_function, build_prototype, synthesize
from .pilots import PilotPlan, design_plan, measure_papr
from .system import SystemMatrices, build_system

__all__ = [
    "ChannelProfile",
    "ChannelRealization",
    "ChannelSet",
    "FbmcConfig",
    "PilotPlan",
    "SingularSystemError",
    "SystemMatrices",
    "TfGrid",
    "analytic_mse_multi",
    "analytic_mse_single",
    "analyze",
    "basis_function",
    "build_prototype",
    "build_system",
    "crlb",
    "design_plan",
    "gls_estimate",
    "ls_estimate",
    "measure_papr",
    "nmse",
    "sample_channel",
    "synthesize",
]
