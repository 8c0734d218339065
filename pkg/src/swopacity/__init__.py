"""Opacity-preserving finite abstractions of networks of switched systems."""

from .gains import GainFunction, IDENTITY, ZERO, gain_compose, gain_eval, gain_invert, gain_lt_identity
from .model import (NetworkSpec, StabilityCertificate, SwitchedSubsystem, derive_affine_certificate,
                    parse_network_spec)
from .sets import BoxUnion, Interval, IntervalBox
from .transys import FiniteTransitionSystem

__version__ = "0.1.0"

__all__ = [
    "BoxUnion", "FiniteTransitionSystem", "GainFunction", "IDENTITY", "Interval", "IntervalBox",
    "NetworkSpec", "StabilityCertificate", "SwitchedSubsystem", "ZERO", "derive_affine_certificate",
    "gain_compose", "gain_eval", "gain_invert", "gain_lt_identity", "parse_network_spec",
]
