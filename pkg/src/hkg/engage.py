"""Four-way student engagement labels from video and assessment behaviour.

The label is a monotone threshold rule over two axes: mean fraction of
videos watched (V) and mean final assessment grade (A), both in [0, 1].
Students with no assessment attempts use A = 0; no video interaction uses
V = 0. Thresholds are configuration-overridable.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .errors import DomainError


class EngagementLevel(IntEnum):
    """Ordered worst to best so comparisons express the level ordering."""

    AtRisk = 0
    PotentialAtRisk = 1
    NormalEngagement = 2
    HighEngagement = 3


@dataclass(frozen=True)
class EngageThresholds:
    v_high: float = 0.7
    a_high: float = 0.7
    v_norm: float = 0.4
    a_norm: float = 0.5


DEFAULT_THRESHOLDS = EngageThresholds()


def label_student(
    mean_watch: float,
    mean_final_grade: float,
    thresholds: EngageThresholds = DEFAULT_THRESHOLDS,
) -> EngagementLevel:
    """Map (V, A) in [0,1]^2 to exactly one engagement level.

    HighEngagement:   V >= v_high and A >= a_high
    NormalEngagement: V >= v_norm and A >= a_norm
    PotentialAtRisk:  V >= v_norm or  A >= a_norm
    AtRisk:           otherwise
    """
    v, a = mean_watch, mean_final_grade
    for value, axis in ((v, "mean_watch"), (a, "mean_final_grade")):
        if not (0.0 <= value <= 1.0):
            raise DomainError(f"{axis}={value!r} outside [0, 1]")
    if v >= thresholds.v_high and a >= thresholds.a_high:
        return EngagementLevel.HighEngagement
    if v >= thresholds.v_norm and a >= thresholds.a_norm:
        return EngagementLevel.NormalEngagement
    if v >= thresholds.v_norm or a >= thresholds.a_norm:
        return EngagementLevel.PotentialAtRisk
    return EngagementLevel.AtRisk
