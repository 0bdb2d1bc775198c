from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from hkg.engage import EngagementLevel
from hkg.errors import EmptyGraph, EmptyPage
from hkg.events import AssessmentPayload, ClickEvent, EventType, Source, VideoPayload
from hkg.graph import (
    ASSESSMENT,
    PAGE,
    REL_ASSESSMENT_ON_PAGE,
    REL_ATTEMPTS,
    REL_PASSES,
    REL_VIDEO_ON_PAGE,
    REL_WATCHES,
    STUDENT,
    VIDEO,
    assemble_hkg,
    assessment_edge_features,
    from_bytes,
    hkg_equal,
    link_content_to_pages,
    page_pass_label,
    to_bytes,
    to_json_dict,
    watch_fraction,
)

T0 = datetime(2021, 9, 1, 9, 0, 0, tzinfo=timezone.utc)


def vev(user, vid, position, minutes=0.0, duration=None, page=None, kind=EventType.VideoPlay):
    return ClickEvent(
        user, kind, T0 + timedelta(minutes=minutes), Source.Browser, page, vid,
        VideoPayload(vid, position, duration),
    )


def aev(user, aid, grade, max_grade=10.0, minutes=0.0, page=None, attempt=1):
    return ClickEvent(
        user, EventType.ProblemSubmit, T0 + timedelta(minutes=minutes), Source.Browser, page, aid,
        AssessmentPayload(aid, grade, max_grade, attempt),
    )


class TestWatchFraction:
    def test_ratio(self):
        assert watch_fraction([vev("u", "v", 30.0, duration=60.0)]) == 0.5

    def test_seek_overshoot_clamps(self):
        assert watch_fraction([vev("u", "v", 70.0, duration=60.0)]) == 1.0

    def test_max_position_over_duration(self):
        events = [vev("u", "v", p, minutes=i, duration=90.0) for i, p in enumerate((10.0, 45.0, 20.0))]
        assert watch_fraction(events) == 0.5

    def test_no_duration_with_stop(self):
        events = [vev("u", "v", 10.0), vev("u", "v", 50.0, minutes=1, kind=EventType.VideoStop)]
        assert watch_fraction(events) == 1.0

    def test_no_duration_without_stop(self):
        assert watch_fraction([vev("u", "v", 10.0)]) == 0.5

    def test_external_duration_wins_over_fallback(self):
        assert watch_fraction([vev("u", "v", 10.0)], duration_s=40.0) == 0.25


class TestAssessmentFeatures:
    def test_improving_grades(self):
        events = [aev("u", "a", 40.0, 100.0, 0), aev("u", "a", 80.0, 100.0, 5, attempt=2)]
        assert assessment_edge_features(events) == (0.4, 0.8, 2)

    def test_single_submit(self):
        assert assessment_edge_features([aev("u", "a", 100.0, 100.0)]) == (1.0, 1.0, 1)

    def test_final_may_drop(self):
        events = [aev("u", "a", 80.0, 100.0, 0), aev("u", "a", 40.0, 100.0, 5, attempt=2)]
        assert assessment_edge_features(events) == (0.8, 0.4, 2)


class TestPagePassLabel:
    def test_assessment_mean_above(self):
        assert page_pass_label(["a1", "a2"], [], {"a1": 0.7, "a2": 0.8}, {}) == 1

    def test_exactly_seventy_percent_fails(self):
        assert page_pass_label(["a1"], [], {"a1": 0.70}, {}) == 0

    def test_just_above_seventy_passes(self):
        assert page_pass_label(["a1"], [], {"a1": 0.7000001}, {}) == 1

    def test_missing_attempts_count_zero(self):
        # (0.9 + 0.9 + 0) / 3 = 0.6 -> fail
        assert page_pass_label(["a1", "a2", "a3"], [], {"a1": 0.9, "a2": 0.9}, {}) == 0

    def test_video_only_page(self):
        fractions = {f"v{i}": f for i, f in enumerate((0.9, 0.8, 0.75, 0.71, 0.1))}
        assert page_pass_label([], list(fractions), {}, fractions) == 1  # 4/5 = 0.8 > 0.7

    def test_video_only_watched_boundary(self):
        fractions = {"v0": 0.9, "v1": 0.7}  # 0.7 is not > 0.7 -> only 1 of 2 watched
        assert page_pass_label([], ["v0", "v1"], {}, fractions) == 0

    def test_assessment_rule_wins_on_mixed_pages(self):
        # videos all watched, but the assessment mean rules
        assert page_pass_label(["a1"], ["v1"], {"a1": 0.2}, {"v1": 1.0}) == 0

    def test_empty_page(self):
        with pytest.raises(EmptyPage):
            page_pass_label([], [], {}, {})


class TestLinkContent:
    def test_shared_page_groups(self):
        events = [vev("u", "v1", 1.0, page="p1", duration=10.0), aev("u", "a1", 5.0, page="p1", minutes=1)]
        video_page, assessment_page, durations, coverage = link_content_to_pages(events)
        assert video_page == {"v1": "p1"} and assessment_page == {"a1": "p1"}
        assert coverage == 1.0

    def test_unlinked_video_retained(self):
        events = [vev("u", "v1", 1.0, page="p1", duration=10.0), vev("u", "v2", 1.0, minutes=1, duration=10.0)]
        video_page, _, durations, coverage = link_content_to_pages(events)
        assert "v2" not in video_page and "v2" in durations
        assert coverage == 0.5

    def test_no_content(self):
        video_page, assessment_page, durations, coverage = link_content_to_pages([])
        assert not video_page and not assessment_page and not durations
        assert coverage == 1.0

    def test_catalog_overrides_and_extends(self):
        events = [vev("u", "v1", 1.0, page="p1", duration=10.0)]
        catalog = {"videos": [{"id": "v1", "page": "p9"}, {"id": "v2", "duration": 20.0}]}
        video_page, _, durations, coverage = link_content_to_pages(events, catalog)
        assert video_page["v1"] == "p9"
        assert durations["v2"] == 20.0
        assert coverage == 0.5


def fixture_events() -> list[ClickEvent]:
    """Three students, two pages, one unlinked video; all counts enumerated
    by hand in TestAssemble."""
    return [
        # s1: full watch of v1, a1 4->8 of 10, v2 at 150/200
        vev("s1", "v1", 0.0, minutes=0, duration=100.0, page="p1"),
        vev("s1", "v1", 100.0, minutes=1, duration=100.0, page="p1", kind=EventType.VideoStop),
        aev("s1", "a1", 4.0, 10.0, minutes=2, page="p1"),
        aev("s1", "a1", 8.0, 10.0, minutes=3, page="p1", attempt=2),
        vev("s1", "v2", 150.0, minutes=4, duration=200.0, page="p2"),
        # s2: v1 at 30/100, a1 9/10, v3 unlinked and without duration
        vev("s2", "v1", 30.0, minutes=0, duration=100.0, page="p1"),
        aev("s2", "a1", 9.0, 10.0, minutes=1, page="p1"),
        vev("s2", "v3", 50.0, minutes=2),
        # s3: v2 at 20/200 only
        vev("s3", "v2", 20.0, minutes=0, duration=200.0, page="p2"),
    ]


class TestAssemble:
    def test_fixture_counts(self):
        hkg = assemble_hkg(fixture_events())
        assert hkg.node_count(STUDENT) == 3
        assert hkg.node_count(VIDEO) == 3
        assert hkg.node_count(ASSESSMENT) == 1
        assert hkg.node_count(PAGE) == 2
        assert len(hkg.edges[REL_WATCHES]) == 5
        assert len(hkg.edges[REL_ATTEMPTS]) == 2
        assert len(hkg.edges[REL_VIDEO_ON_PAGE]) == 2
        assert len(hkg.edges[REL_ASSESSMENT_ON_PAGE]) == 1
        assert len(hkg.edges[REL_PASSES]) == 4
        assert hkg.coverage == 0.75
        assert hkg.meta["no_duration_pairs"] == 1

    def test_fixture_labels(self):
        hkg = assemble_hkg(fixture_events())
        sup = hkg.edges[REL_PASSES]
        got = {
            (hkg.ids[STUDENT][s], hkg.ids[PAGE][p]): int(label)
            for s, p, label in zip(sup.src, sup.dst, sup.labels)
        }
        assert got == {("s1", "p1"): 1, ("s1", "p2"): 1, ("s2", "p1"): 1, ("s3", "p2"): 0}

    def test_fixture_watch_weights(self):
        hkg = assemble_hkg(fixture_events())
        watches = hkg.edges[REL_WATCHES]
        got = {
            (hkg.ids[STUDENT][s], hkg.ids[VIDEO][v]): w
            for s, v, w in zip(watches.src, watches.dst, watches.features[:, 0])
        }
        assert got == {
            ("s1", "v1"): 1.0,
            ("s1", "v2"): 0.75,
            ("s2", "v1"): 0.3,
            ("s2", "v3"): 0.5,  # unknown duration, no stop seen
            ("s3", "v2"): 0.1,
        }

    def test_fixture_engagement_onehot(self):
        hkg = assemble_hkg(fixture_events())
        rows = hkg.features[STUDENT].rows
        onehot = rows[:, 7:]
        expected = {
            "s1": EngagementLevel.HighEngagement,
            "s2": EngagementLevel.NormalEngagement,
            "s3": EngagementLevel.AtRisk,
        }
        for i, sid in enumerate(hkg.ids[STUDENT]):
            assert onehot[i, int(expected[sid])] == 1.0
            assert onehot[i].sum() == 1.0

    def test_feature_ranges(self):
        hkg = assemble_hkg(fixture_events())
        for table in hkg.features.values():
            assert np.all(np.isfinite(table.rows))
            assert table.rows.min() >= 0.0 and table.rows.max() <= 1.0
        watches = hkg.edges[REL_WATCHES].features
        assert watches.min() >= 0.0 and watches.max() <= 1.0
        grades = hkg.edges[REL_ATTEMPTS].features[:, :2]
        assert grades.min() >= 0.0 and grades.max() <= 1.0
        assert np.all(hkg.edges[REL_ATTEMPTS].features[:, 2] >= 1)
        assert set(np.unique(hkg.edges[REL_PASSES].labels)) <= {0, 1}

    def test_order_independence(self):
        events = fixture_events()
        reversed_hkg = assemble_hkg(list(reversed(events)))
        assert hkg_equal(assemble_hkg(events), reversed_hkg)

    def test_supervision_only_touched_pages(self):
        hkg = assemble_hkg(fixture_events())
        sup = hkg.edges[REL_PASSES]
        # s2 never touched p2, s3 never touched p1
        pairs = {(hkg.ids[STUDENT][s], hkg.ids[PAGE][p]) for s, p in zip(sup.src, sup.dst)}
        assert ("s2", "p2") not in pairs and ("s3", "p1") not in pairs

    def test_empty_stream_raises(self):
        with pytest.raises(EmptyGraph):
            assemble_hkg([])

    def test_unlinked_only_interactions_raise(self):
        with pytest.raises(EmptyGraph):
            assemble_hkg([vev("u", "vX", 5.0, duration=10.0)])


class TestSerialization:
    def test_round_trip_bit_exact(self, tiny_hkg):
        blob = to_bytes(tiny_hkg)
        again = from_bytes(blob)
        assert hkg_equal(tiny_hkg, again)
        assert to_bytes(again) == blob

    def test_fixture_round_trip(self):
        hkg = assemble_hkg(fixture_events())
        assert hkg_equal(hkg, from_bytes(to_bytes(hkg)))

    def test_json_export_shape(self):
        hkg = assemble_hkg(fixture_events())
        doc = to_json_dict(hkg)
        assert doc["coverage"] == 0.75
        assert set(doc["nodes"]) == {STUDENT, VIDEO, ASSESSMENT, PAGE}
        assert doc["edges"][REL_PASSES]["labels"] == [1, 1, 1, 0]
