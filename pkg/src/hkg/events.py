"""Clickstream ingestion: parse raw log records, filter, sessionize, summarize.

Input is newline-delimited JSON, one event per line, with fields
``username``, ``event_type``, ``event`` (payload object), ``page``,
``time`` (ISO-8601), ``agent``. Only user-initiated video interactions and
assessment submissions recorded from a browser are kept; everything else
(unknown event names, mobile-app and server-side records) is dropped by
the filter. Malformed lines raise :class:`ParseError` and are counted and
skipped by callers, never fatal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import EmptyInput, ParseError, UnsortedInput

DEFAULT_SESSION_GAP = timedelta(minutes=30)


class EventType(str, Enum):
    VideoPlay = "play_video"
    VideoPause = "pause_video"
    VideoSeek = "seek_video"
    VideoStop = "stop_video"
    ProblemSubmit = "problem_check"
    Other = "other"


class Source(str, Enum):
    Browser = "browser"
    Mobile = "mobile"
    Server = "server"


VIDEO_EVENT_TYPES = frozenset(
    {EventType.VideoPlay, EventType.VideoPause, EventType.VideoSeek, EventType.VideoStop}
)
KEPT_EVENT_TYPES = VIDEO_EVENT_TYPES | {EventType.ProblemSubmit}

_EVENT_NAMES = {t.value: t for t in EventType if t is not EventType.Other}


@dataclass(frozen=True)
class VideoPayload:
    video_id: str
    position_s: float
    duration_s: float | None = None


@dataclass(frozen=True)
class AssessmentPayload:
    assessment_id: str
    grade: float
    max_grade: float
    attempt: int


@dataclass(frozen=True)
class ClickEvent:
    user_id: str
    event_type: EventType
    timestamp: datetime
    source: Source
    page_id: str | None = None
    content_id: str | None = None
    payload: VideoPayload | AssessmentPayload | None = None


@dataclass(frozen=True)
class Session:
    user_id: str
    start: datetime
    end: datetime
    event_count: int


@dataclass(frozen=True)
class StudentStats:
    user_id: str
    session_count: int
    event_counts: dict[EventType, int]
    first_access: datetime
    last_access: datetime

    @property
    def total_events(self) -> int:
        return sum(self.event_counts.values())

    @property
    def active_day_span(self) -> float:
        return (self.last_access - self.first_access).total_seconds() / 86400.0


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 instant into UTC with millisecond precision."""
    if not isinstance(raw, str) or not raw:
        raise ParseError(f"missing or invalid time field: {raw!r}")
    text = raw.replace("Z", "+00:00") if raw.endswith("Z") else raw
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"unparseable time {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=(ts.microsecond // 1000) * 1000)


def format_timestamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def _classify_source(agent) -> Source:
    if not isinstance(agent, str):
        return Source.Browser
    lowered = agent.lower()
    if "mobile" in lowered:
        return Source.Mobile
    if "server" in lowered:
        return Source.Server
    return Source.Browser


def _float_field(obj: dict, key: str, default=None) -> float | None:
    value = obj.get(key, default)
    if value is None:
        return None
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"field {key!r} is not numeric: {value!r}") from exc
    if not (value == value and abs(value) != float("inf")):
        raise ParseError(f"field {key!r} is not finite")
    return value


def parse_event_line(line: str) -> ClickEvent:
    """Parse one raw log line into a :class:`ClickEvent`.

    Unknown event names map to ``Other``; structural problems (bad JSON,
    missing user or time, broken payload) raise :class:`ParseError`.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ParseError("record is not an object")

    user_id = record.get("username")
    if not isinstance(user_id, str) or not user_id:
        raise ParseError("missing username")
    raw_type = record.get("event_type")
    if not isinstance(raw_type, str):
        raise ParseError("missing event_type")
    event_type = _EVENT_NAMES.get(raw_type, EventType.Other)
    timestamp = parse_timestamp(record.get("time"))
    source = _classify_source(record.get("agent"))
    page = record.get("page")
    page_id = page if isinstance(page, str) and page else None

    payload: VideoPayload | AssessmentPayload | None = None
    content_id: str | None = None
    body = record.get("event")
    if event_type in VIDEO_EVENT_TYPES:
        if not isinstance(body, dict) or not isinstance(body.get("id"), str) or not body["id"]:
            raise ParseError(f"{raw_type} record lacks a video id")
        position = _float_field(body, "currentTime", 0.0)
        duration = _float_field(body, "duration")
        if duration is not None and duration <= 0:
            duration = None
        payload = VideoPayload(body["id"], max(position, 0.0), duration)
        content_id = payload.video_id
    elif event_type is EventType.ProblemSubmit:
        if not isinstance(body, dict) or not isinstance(body.get("id"), str) or not body["id"]:
            raise ParseError("problem_check record lacks an assessment id")
        grade = _float_field(body, "grade")
        max_grade = _float_field(body, "max_grade")
        if grade is None or max_grade is None or max_grade <= 0:
            raise ParseError("problem_check record needs grade and positive max_grade")
        attempt = body.get("attempts", 1)
        if not isinstance(attempt, int) or attempt < 1:
            raise ParseError(f"invalid attempts value {attempt!r}")
        payload = AssessmentPayload(body["id"], min(max(grade, 0.0), max_grade), max_grade, attempt)
        content_id = payload.assessment_id

    return ClickEvent(user_id, event_type, timestamp, source, page_id, content_id, payload)


def serialize_event(event: ClickEvent) -> str:
    """Canonical one-line JSON form; parsing it back yields an equal event."""
    body: dict | None = None
    if isinstance(event.payload, VideoPayload):
        body = {"id": event.payload.video_id, "currentTime": event.payload.position_s}
        if event.payload.duration_s is not None:
            body["duration"] = event.payload.duration_s
    elif isinstance(event.payload, AssessmentPayload):
        body = {
            "id": event.payload.assessment_id,
            "grade": event.payload.grade,
            "max_grade": event.payload.max_grade,
            "attempts": event.payload.attempt,
        }
    record = {
        "username": event.user_id,
        "event_type": event.event_type.value if event.event_type is not EventType.Other else "other",
        "time": format_timestamp(event.timestamp),
        "agent": event.source.value,
        "page": event.page_id,
        "event": body,
    }
    return json.dumps(record, separators=(",", ":"))


def filter_events(events: Sequence[ClickEvent]) -> list[ClickEvent]:
    """Keep browser-originated video interactions and assessment submissions."""
    return [
        e for e in events if e.event_type in KEPT_EVENT_TYPES and e.source is Source.Browser
    ]


def sort_events(events: Iterable[ClickEvent]) -> list[ClickEvent]:
    """Canonical order: by user then timestamp, input order breaking ties."""
    return sorted(events, key=lambda e: (e.user_id, e.timestamp))


def sessionize(events: Sequence[ClickEvent], gap: timedelta = DEFAULT_SESSION_GAP) -> list[Session]:
    """Partition one user's time-sorted events into sessions.

    A new session starts whenever the inter-event gap exceeds ``gap``.
    """
    if not events:
        return []
    sessions: list[Session] = []
    start = prev = events[0].timestamp
    count = 1
    for event in events[1:]:
        if event.timestamp < prev:
            raise UnsortedInput(f"timestamps decrease at {event.timestamp} for {event.user_id}")
        if event.timestamp - prev > gap:
            sessions.append(Session(events[0].user_id, start, prev, count))
            start = event.timestamp
            count = 0
        prev = event.timestamp
        count += 1
    sessions.append(Session(events[0].user_id, start, prev, count))
    return sessions


def aggregate_user_stats(events: Sequence[ClickEvent], sessions: Sequence[Session]) -> StudentStats:
    """Exact per-user summary: session count, per-type counts, access span."""
    if not events:
        raise EmptyInput("no events for user")
    counts: dict[EventType, int] = {}
    for event in events:
        counts[event.event_type] = counts.get(event.event_type, 0) + 1
    stamps = [e.timestamp for e in events]
    return StudentStats(
        user_id=events[0].user_id,
        session_count=len(sessions),
        event_counts=counts,
        first_access=min(stamps),
        last_access=max(stamps),
    )


def parse_lines(lines: Iterable[str]) -> tuple[list[ClickEvent], int]:
    """Parse many lines, skipping malformed ones. Returns (events, skipped)."""
    events: list[ClickEvent] = []
    skipped = 0
    for line in lines:
        if not line.strip():
            continue
        try:
            events.append(parse_event_line(line))
        except ParseError:
            skipped += 1
    return events, skipped


def iter_lines(paths: Sequence[Path]) -> Iterator[str]:
    for path in paths:
        with open(path, "r", encoding="utf-8") as handle:
            yield from handle


def ingest_paths(
    paths: Sequence[Path], gap: timedelta = DEFAULT_SESSION_GAP
) -> tuple[list[ClickEvent], dict]:
    """Run the full ingest stage over log files.

    Files may be parsed in any order; the result is canonically sorted by
    (user, timestamp) so downstream output does not depend on file layout.
    Returns the kept events plus the ingest report counters.
    """
    events, skipped = parse_lines(iter_lines(paths))
    parsed = len(events)
    kept = sort_events(filter_events(events))
    by_user: dict[str, list[ClickEvent]] = {}
    for event in kept:
        by_user.setdefault(event.user_id, []).append(event)
    session_total = sum(len(sessionize(evs, gap)) for evs in by_user.values())
    report = {
        "parsed": parsed,
        "skipped": skipped,
        "kept_after_filter": len(kept),
        "users": len(by_user),
        "sessions": session_total,
    }
    return kept, report


def write_events_file(events: Sequence[ClickEvent], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for event in events:
            handle.write(serialize_event(event))
            handle.write("\n")


def read_events_file(path: Path) -> list[ClickEvent]:
    with open(path, "r", encoding="utf-8") as handle:
        return [parse_event_line(line) for line in handle if line.strip()]
