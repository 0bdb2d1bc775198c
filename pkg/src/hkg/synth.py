"""Synthetic course and learner generator with plantable signal.

The generator lays out a four-submodule course (content counts default to
the real course structure totals: 442 videos, 216 ungraded, 235 coding and
295 graded exercises), groups content onto chapter pages, and simulates
students from two latent traits: skill drives assessment grades, diligence
drives watch fractions and how much of the course a student visits. Page
pass labels are never assigned directly; they fall out of the real page
pass rule applied to the simulated interactions, so any learnable signal
has to flow through features and edges. Shuffled mode permutes the labels
of the assembled graph afterwards, destroying the signal while keeping the
graph shape identical.

``emit_event_log`` serializes the exact same simulated interactions as raw
log lines (plus a sprinkle of noise records the filter must drop), so the
full ingest+build pipeline over the emitted log reproduces ``generate``'s
graph bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import ConfigError
from .events import (
    AssessmentPayload,
    ClickEvent,
    EventType,
    Source,
    VideoPayload,
    serialize_event,
)
from .graph import Hkg, assemble_hkg
from .tensor import RngStream

BASE_TIME = datetime(2021, 9, 1, 8, 0, 0, tzinfo=timezone.utc)

# (kind, per-submodule counts, max grade points); totals 442/216/235/295
CONTENT_PLAN = (
    ("video", (160, 122, 117, 43), None),
    ("ungraded", (56, 85, 77, 85), 10.0),
    ("coding", (54, 77, 44, 60), 50.0),
    ("graded", (67, 85, 111, 32), 100.0),
)


@dataclass(frozen=True)
class SynthConfig:
    students: int = 2000
    chapters_per_submodule: int = 5
    pages_per_chapter: int = 4
    min_pages_per_student: int = 2
    max_pages_per_student: int = 4
    noise: float = 0.15
    signal: str = "planted"
    page_link_rate: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.students < 0 or self.noise < 0:
            raise ConfigError("students and noise must be nonnegative")
        if self.signal not in ("planted", "shuffled"):
            raise ConfigError(f"signal must be planted or shuffled, got {self.signal!r}")
        if not 0 <= self.page_link_rate <= 1:
            raise ConfigError("page_link_rate must lie in [0, 1]")
        if self.min_pages_per_student < 1 or self.max_pages_per_student < self.min_pages_per_student:
            raise ConfigError("invalid pages-per-student range")
        if self.chapters_per_submodule < 1 or self.pages_per_chapter < 1:
            raise ConfigError("course needs at least one page")


PRESETS = {
    "campus": SynthConfig(students=2000),
    "online": SynthConfig(students=20000),
}


@dataclass(frozen=True)
class ContentItem:
    content_id: str
    kind: str
    page: str | None
    duration: float | None
    max_grade: float | None


def plan_course(cfg: SynthConfig, rng: RngStream) -> tuple[list[str], list[ContentItem]]:
    """Deterministic course layout: pages plus content assigned to them.

    Content with an unlucky ``page_link_rate`` draw carries no page at all,
    mimicking logs where the page property cannot be resolved.
    """
    pages = [
        f"page_s{s}_c{c:02d}_p{p:02d}"
        for s in range(4)
        for c in range(cfg.chapters_per_submodule)
        for p in range(cfg.pages_per_chapter)
    ]
    per_submodule = cfg.chapters_per_submodule * cfg.pages_per_chapter
    items: list[ContentItem] = []
    for kind, counts, max_grade in CONTENT_PLAN:
        for sub, count in enumerate(counts):
            sub_rng = rng.derive("content", kind, sub)
            page_choice = sub_rng.integers(0, per_submodule, count)
            linked = sub_rng.random(count) < cfg.page_link_rate
            durations = np.round(sub_rng.uniform(60, 900, count)) if kind == "video" else None
            for j in range(count):
                items.append(
                    ContentItem(
                        content_id=f"{kind}_s{sub}_{j:04d}",
                        kind=kind,
                        page=pages[sub * per_submodule + int(page_choice[j])] if linked[j] else None,
                        duration=float(durations[j]) if durations is not None else None,
                        max_grade=max_grade,
                    )
                )
    return pages, items


def _video_events(
    user: str, item: ContentItem, frac: float, clock: datetime, gaps: np.ndarray, gi: int,
    want_seek: bool,
) -> tuple[list[ClickEvent], datetime, int]:
    position = round(frac * item.duration, 3)
    events = [
        ClickEvent(
            user, EventType.VideoPlay, clock, Source.Browser, item.page, item.content_id,
            VideoPayload(item.content_id, 0.0, item.duration),
        )
    ]
    clock += timedelta(seconds=int(gaps[gi])); gi += 1
    if want_seek and position > 0:
        events.append(
            ClickEvent(
                user, EventType.VideoSeek, clock, Source.Browser, item.page, item.content_id,
                VideoPayload(item.content_id, round(position / 2, 3)),
            )
        )
        clock += timedelta(seconds=int(gaps[gi])); gi += 1
    kind = EventType.VideoStop if frac >= 0.95 else EventType.VideoPause
    events.append(
        ClickEvent(
            user, kind, clock, Source.Browser, item.page, item.content_id,
            VideoPayload(item.content_id, position),
        )
    )
    clock += timedelta(seconds=int(gaps[gi])); gi += 1
    return events, clock, gi


def _assessment_events(
    user: str, item: ContentItem, final: float, attempts: int, first_share: float,
    clock: datetime, gaps: np.ndarray, gi: int,
) -> tuple[list[ClickEvent], datetime, int]:
    final_pts = round(final * item.max_grade, 2)
    if attempts == 1:
        grades = [final_pts]
    else:
        first_pts = round(final_pts * first_share, 2)
        grades = [
            round(first_pts + (final_pts - first_pts) * k / (attempts - 1), 2)
            for k in range(attempts)
        ]
    events = []
    for a, pts in enumerate(grades, start=1):
        events.append(
            ClickEvent(
                user, EventType.ProblemSubmit, clock, Source.Browser, item.page, item.content_id,
                AssessmentPayload(item.content_id, pts, item.max_grade, a),
            )
        )
        clock += timedelta(seconds=int(gaps[gi])); gi += 1
    return events, clock, gi


def plan_events(cfg: SynthConfig) -> tuple[list[ClickEvent], np.ndarray, np.ndarray]:
    """Simulate every student's clickstream. Returns (events, skill, diligence)."""
    cfg.validate()
    rng = RngStream(cfg.seed)
    pages, items = plan_course(cfg, rng)
    by_page: dict[str, list[ContentItem]] = {p: [] for p in pages}
    for item in items:
        if item.page is not None:
            by_page[item.page].append(item)

    skill = rng.derive("skill").random(cfg.students)
    diligence = rng.derive("diligence").random(cfg.students)
    span = cfg.max_pages_per_student - cfg.min_pages_per_student
    events: list[ClickEvent] = []

    for i in range(cfg.students):
        user = f"user_{i:05d}"
        srng = rng.derive("student", i)
        n_pages = min(cfg.min_pages_per_student + int(round(diligence[i] * span)), len(pages))
        chosen = sorted(int(p) for p in srng.permutation(len(pages))[:n_pages])
        start = BASE_TIME + timedelta(days=int(srng.integers(0, 45)))
        for visit, page_pos in enumerate(chosen):
            page_items = by_page[pages[page_pos]]
            if not page_items:
                continue
            prng = srng.derive("visit", visit)
            clock = start + timedelta(days=visit, minutes=int(prng.integers(0, 240)))
            videos = [it for it in page_items if it.kind == "video"]
            assessments = [it for it in page_items if it.kind != "video"]
            fracs = np.clip(diligence[i] + prng.normal(0, cfg.noise, len(videos)), 0, 1)
            seeks = prng.random(len(videos)) < 0.3
            finals = np.clip(skill[i] + prng.normal(0, cfg.noise, len(assessments)), 0, 1)
            attempts = np.minimum(prng.gen.geometric(0.6, len(assessments)), 4)
            first_shares = prng.uniform(0.3, 1.0, len(assessments))
            gaps = prng.integers(45, 180, 3 * len(videos) + 4 * len(assessments) + 2)
            gi = 0
            for v, item in enumerate(videos):
                evs, clock, gi = _video_events(
                    user, item, float(fracs[v]), clock, gaps, gi, bool(seeks[v])
                )
                events.extend(evs)
            for a, item in enumerate(assessments):
                evs, clock, gi = _assessment_events(
                    user, item, float(finals[a]), int(attempts[a]), float(first_shares[a]),
                    clock, gaps, gi,
                )
                events.extend(evs)
        # noise records the ingest filter must drop
        nrng = srng.derive("noise")
        if nrng.random() < 0.2:
            events.append(
                ClickEvent(user, EventType.Other, start + timedelta(minutes=1), Source.Browser)
            )
        if items and nrng.random() < 0.1:
            item = items[int(nrng.integers(0, len(items)))]
            if item.kind == "video":
                events.append(
                    ClickEvent(
                        user, EventType.VideoPlay, start + timedelta(minutes=2), Source.Mobile,
                        item.page, item.content_id, VideoPayload(item.content_id, 0.0, item.duration),
                    )
                )
    return events, skill, diligence


def generate(cfg: SynthConfig, return_latents: bool = False):
    """Assemble the synthetic graph; optionally also return the latents.

    Labels come from the ordinary assembly path. In shuffled mode they are
    permuted in place afterwards (the event log itself always reflects the
    organic behavior).
    """
    events, skill, diligence = plan_events(cfg)
    hkg = assemble_hkg(events)
    if cfg.signal == "shuffled":
        labels = hkg.supervision.labels
        perm = RngStream(cfg.seed).derive("label_shuffle").permutation(len(labels))
        hkg.supervision.labels = labels[perm]
    if return_latents:
        return hkg, skill, diligence
    return hkg


def emit_event_log(cfg: SynthConfig) -> list[str]:
    """The simulated clickstream as raw log lines, one JSON record each."""
    events, _, _ = plan_events(cfg)
    return [serialize_event(e) for e in events]
