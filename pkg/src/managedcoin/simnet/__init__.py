"""Deterministic network simulator for miner revolts and management quotas."""

from .engine import Simulation, run_scenario, step
from .report import SimReport
from .scenario import Action, NodeSpec, SimScenario

__all__ = ["Action", "NodeSpec", "SimReport", "SimScenario", "Simulation", "run_scenario", "step"]
