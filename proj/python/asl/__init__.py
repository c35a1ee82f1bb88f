"""Acoustic source localization toolkit (C++ core)."""

from ._asl import (
    Checkpoint,
    ConfigError,
    FormatError,
    Geometry,
    MissingInputError,
    NumericError,
    fractional_delay,
    gcc_phat,
    motp,
    relative_improvement,
    simulate_window,
    source_box,
    srp_localize,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "FormatError",
    "Geometry",
    "MissingInputError",
    "NumericError",
    "fractional_delay",
    "gcc_phat",
    "motp",
    "relative_improvement",
    "simulate_window",
    "source_box",
    "srp_localize",
]
