"""Agent-based simulation of intergroup attitudes under terrorist threat messages."""

__version__ = "0.1.0"

from .core import (
    AcceptanceSegment,
    CulturalIdentity,
    DegenerateTargetSegment,
    Grid,
    ModelParams,
    WorldviewId,
    attitude_to_identity,
    attitude_to_position,
    attitude_to_segment,
    group_of,
)
from .population import Population
from .threat import (
    ScenarioResult,
    ScenarioSpec,
    TerroristProfile,
    ThreatUpdateRecord,
    apply_threat,
    reaction_intensity,
    run_scenario,
    scenario_step,
)

__all__ = [
    "AcceptanceSegment",
    "CulturalIdentity",
    "DegenerateTargetSegment",
    "Grid",
    "ModelParams",
    "Population",
    "ScenarioResult",
    "ScenarioSpec",
    "TerroristProfile",
    "ThreatUpdateRecord",
    "WorldviewId",
    "apply_threat",
    "attitude_to_identity",
    "attitude_to_position",
    "attitude_to_segment",
    "group_of",
    "reaction_intensity",
    "run_scenario",
    "scenario_step",
]
