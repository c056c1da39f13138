"""Explicit symplectic plug: construction and numerical verification."""

from .core import PlugParams, PlugPoint, load_config, validate_params
from .flow import Status, Trajectory, integrate
from .harness import demo_destroy_orbit
from .verifier import EntrySpec, find_trapped_entry

__all__ = [
    "EntrySpec",
    "PlugParams",
    "PlugPoint",
    "Status",
    "Trajectory",
    "demo_destroy_orbit",
    "find_trapped_entry",
    "integrate",
    "load_config",
    "validate_params",
]
