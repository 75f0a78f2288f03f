"""Task metrics for single-joint articulation."""

from __future__ import annotations


def normalized_distance(j_init: float, j_end: float, j_goal: float) -> float:
    """Remaining fraction of the joint range: |j_end - j_goal| / |j_goal - j_init|."""
    span = abs(j_goal - j_init)
    if span == 0:
        raise ValueError("zero-range joint: j_goal equals j_init")
    return abs(j_end - j_goal) / span


def success(e_goal: float, delta: float = 0.1) -> bool:
    if e_goal < 0:
        raise ValueError("e_goal must be non-negative")
    return e_goal <= delta
