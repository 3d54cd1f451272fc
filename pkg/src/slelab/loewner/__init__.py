"""Discretised chordal Loewner evolution."""

from .chain import (
    DrivingPath,
    LoewnerChain,
    TraceSample,
    BoundaryTrack,
    SwallowedError,
    sample_driving,
    evolve_chain,
    evaluate_map,
    map_derivative,
    trace_points,
    dist_to_point,
    track_boundary,
    q_ratio,
    upsilon,
)

__all__ = [
    "DrivingPath",
    "LoewnerChain",
    "TraceSample",
    "BoundaryTrack",
    "SwallowedError",
    "sample_driving",
    "evolve_chain",
    "evaluate_map",
    "map_derivative",
    "trace_points",
    "dist_to_point",
    "track_boundary",
    "q_ratio",
    "upsilon",
]
