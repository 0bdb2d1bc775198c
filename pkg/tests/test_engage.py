from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkg.engage import EngagementLevel, EngageThresholds, label_student
from hkg.errors import DomainError

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_high_engagement():
    assert label_student(0.9, 0.9) is EngagementLevel.HighEngagement


def test_floor_case():
    assert label_student(0.0, 0.0) is EngagementLevel.AtRisk


def test_one_strong_axis_is_potential_at_risk():
    # V=0.8 clears the video bar but A=0.3 misses both grade bars
    assert label_student(0.8, 0.3) is EngagementLevel.PotentialAtRisk


def test_normal_band():
    assert label_student(0.5, 0.6) is EngagementLevel.NormalEngagement


def test_boundaries_inclusive():
    assert label_student(0.7, 0.7) is EngagementLevel.HighEngagement
    assert label_student(0.4, 0.5) is EngagementLevel.NormalEngagement
    assert label_student(0.0, 0.5) is EngagementLevel.PotentialAtRisk


def test_out_of_domain():
    with pytest.raises(DomainError):
        label_student(1.2, 0.0)
    with pytest.raises(DomainError):
        label_student(0.0, -0.1)


def test_custom_thresholds():
    loose = EngageThresholds(v_high=0.5, a_high=0.5)
    assert label_student(0.6, 0.6, loose) is EngagementLevel.HighEngagement


@given(v=unit, a=unit)
@settings(max_examples=300, deadline=None)
def test_totality(v, a):
    assert label_student(v, a) in EngagementLevel


@given(v=unit, a=unit, dv=st.floats(0, 0.5), da=st.floats(0, 0.5))
@settings(max_examples=300, deadline=None)
def test_monotonicity(v, a, dv, da):
    before = label_student(v, a)
    after = label_student(min(v + dv, 1.0), min(a + da, 1.0))
    assert after >= before
