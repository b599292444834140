"""Adaptive block compressed sensing for polar radar frames."""

from .allocation import BudgetLP, RateSolution, SamplingPlan, allocate, solve_rates
from .geometry import BlockIndex, FrameGeometry, PolarFrame
from .importance import Detection, PatternVariant, build_mask
from .pipeline import SceneConfig, SceneRun, run_scene
from .sensing import BPSolverConfig, reconstruct_frame, sense_frame

__version__ = "0.1.0"

__all__ = [
    "BPSolverConfig",
    "BlockIndex",
    "BudgetLP",
    "Detection",
    "FrameGeometry",
    "PatternVariant",
    "PolarFrame",
    "RateSolution",
    "SamplingPlan",
    "SceneConfig",
    "SceneRun",
    "allocate",
    "build_mask",
    "reconstruct_frame",
    "run_scene",
    "sense_frame",
    "solve_rates",
]
