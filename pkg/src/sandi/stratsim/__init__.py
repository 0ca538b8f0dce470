"""Sender strategy game: exact solver, brute-force oracle, structure check, Monte Carlo."""

from sandi.stratsim.game import WAIT, GameSpec, MessageType
from sandi.stratsim.montecarlo import SimResult, simulate
from sandi.stratsim.oracle import brute_force_value
from sandi.stratsim.solver import Policy, optimal_policy
from sandi.stratsim.structure import StructureReport, verify_theorem_structure

__all__ = [
    "WAIT",
    "GameSpec",
    "MessageType",
    "Policy",
    "SimResult",
    "StructureReport",
    "brute_force_value",
    "optimal_policy",
    "simulate",
    "verify_theorem_structure",
]
