"""Deterministic gathering of homonymous mobile agents on anonymous
port-labeled graphs: execution engine, algorithms, adversarial scenarios."""

from .engine import Gathered, Diverged, Timeout, World, run, step
from .graph import PortGraph, build_from_edge_list, build_k2, build_ring, random_connected
from .memory import ArrivalInfo, Memory, compare, decode, encode, extend, leaf
from .scenarios import Scenario, gatherable, symmetry_index, team_indices

__all__ = [
    "ArrivalInfo",
    "Diverged",
    "Gathered",
    "Memory",
    "PortGraph",
    "Scenario",
    "Timeout",
    "World",
    "build_from_edge_list",
    "build_k2",
    "build_ring",
    "compare",
    "decode",
    "encode",
    "extend",
    "gatherable",
    "leaf",
    "random_connected",
    "run",
    "step",
    "symmetry_index",
    "team_indices",
]
