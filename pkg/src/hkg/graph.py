"""Heterogeneous knowledge graph assembly from filtered clickstream events.

Node types: student, video, assessment, page. Relations: students watch
videos (edge weight = fraction of the video watched), students attempt
assessments (first grade, final grade, attempt count), content sits on
pages, and the supervision relation student_passes_page carries the binary
pass/fail labels the model is trained on.

The on-disk form is a little-endian binary container (JSON header followed
by raw float64/int64 blobs) that round-trips bit-exactly; a JSON export
exists for inspection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .engage import DEFAULT_THRESHOLDS, EngageThresholds, label_student
from .errors import EmptyGraph, EmptyInput, EmptyPage, ParseError
from .events import (
    DEFAULT_SESSION_GAP,
    ClickEvent,
    EventType,
    VIDEO_EVENT_TYPES,
    aggregate_user_stats,
    filter_events,
    sessionize,
    sort_events,
)

STUDENT = "student"
VIDEO = "video"
ASSESSMENT = "assessment"
PAGE = "page"
NODE_TYPES = (STUDENT, VIDEO, ASSESSMENT, PAGE)

REL_WATCHES = "student_watches_video"
REL_ATTEMPTS = "student_attempts_assessment"
REL_VIDEO_ON_PAGE = "video_on_page"
REL_ASSESSMENT_ON_PAGE = "assessment_on_page"
REL_PASSES = "student_passes_page"

# relation -> (src type, dst type, edge feature dim, carries labels)
RELATION_SCHEMA: dict[str, tuple[str, str, int, bool]] = {
    REL_WATCHES: (STUDENT, VIDEO, 1, False),
    REL_ATTEMPTS: (STUDENT, ASSESSMENT, 3, False),
    REL_VIDEO_ON_PAGE: (VIDEO, PAGE, 0, False),
    REL_ASSESSMENT_ON_PAGE: (ASSESSMENT, PAGE, 0, False),
    REL_PASSES: (STUDENT, PAGE, 0, True),
}
MESSAGE_RELATIONS = (REL_WATCHES, REL_ATTEMPTS, REL_VIDEO_ON_PAGE, REL_ASSESSMENT_ON_PAGE)

PASS_THRESHOLD = 0.7

# Student feature columns: session count, one count per kept event type,
# active-day span, then the 4-way engagement one-hot.
STUDENT_NUMERIC_COLUMNS = (
    "session_count",
    "video_play",
    "video_pause",
    "video_seek",
    "video_stop",
    "problem_submit",
    "active_day_span",
)
STUDENT_FEATURE_DIM = len(STUDENT_NUMERIC_COLUMNS) + 4


@dataclass(frozen=True)
class NodeRef:
    node_type: str
    index: int


@dataclass
class FeatureTable:
    node_type: str
    dim: int
    rows: np.ndarray

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64).reshape(-1, self.dim)


@dataclass
class EdgeTable:
    relation: str
    src: np.ndarray
    dst: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        fdim = RELATION_SCHEMA[self.relation][2]
        self.features = np.asarray(self.features, dtype=np.float64).reshape(len(self.src), fdim)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.src)


@dataclass
class Hkg:
    features: dict[str, FeatureTable]
    edges: dict[str, EdgeTable]
    ids: dict[str, list[str]]
    coverage: float
    meta: dict = field(default_factory=dict)

    def node_count(self, node_type: str) -> int:
        return len(self.ids[node_type])

    def ref(self, node_type: str, external_id: str) -> NodeRef:
        return NodeRef(node_type, self._index()[node_type][external_id])

    def _index(self) -> dict[str, dict[str, int]]:
        if not hasattr(self, "_id_index"):
            object.__setattr__(
                self, "_id_index", {t: {s: i for i, s in enumerate(ids)} for t, ids in self.ids.items()}
            )
        return self._id_index

    @property
    def supervision(self) -> EdgeTable:
        return self.edges[REL_PASSES]


def hkg_equal(a: Hkg, b: Hkg) -> bool:
    """Bit-exact equality over ids, features, edges, labels and coverage."""
    if a.ids != b.ids or a.coverage != b.coverage:
        return False
    if set(a.features) != set(b.features) or set(a.edges) != set(b.edges):
        return False
    for t, table in a.features.items():
        if table.dim != b.features[t].dim or not np.array_equal(table.rows, b.features[t].rows):
            return False
    for name, e in a.edges.items():
        o = b.edges[name]
        if not (np.array_equal(e.src, o.src) and np.array_equal(e.dst, o.dst)):
            return False
        if not np.array_equal(e.features, o.features):
            return False
        if (e.labels is None) != (o.labels is None):
            return False
        if e.labels is not None and not np.array_equal(e.labels, o.labels):
            return False
    return True


def watch_fraction(events: Sequence[ClickEvent], duration_s: float | None = None) -> float:
    """Fraction of a video one student watched, from their events on it.

    The weight is the furthest playback position over the known duration,
    clamped to [0, 1]. When no duration is known at all the fallback is
    1.0 if a stop event was seen (the student reached the end) and 0.5
    otherwise; callers count those fallbacks in the build report.
    """
    if not events:
        raise EmptyInput("watch_fraction needs at least one event")
    max_pos = 0.0
    saw_stop = False
    duration = duration_s
    for event in events:
        payload = event.payload
        max_pos = max(max_pos, payload.position_s)
        if payload.duration_s is not None:
            duration = max(duration or 0.0, payload.duration_s)
        if event.event_type is EventType.VideoStop:
            saw_stop = True
    if duration is None or duration <= 0:
        return 1.0 if saw_stop else 0.5
    return min(max(max_pos / duration, 0.0), 1.0)


def assessment_edge_features(events: Sequence[ClickEvent]) -> tuple[float, float, int]:
    """(first grade, final grade, attempts) for one (student, assessment).

    Grades are normalized by max_grade; first/final come from the earliest
    and latest submissions, attempts is the submission count. The final
    grade may be lower than the first.
    """
    if not events:
        raise EmptyInput("assessment_edge_features needs at least one submission")
    first = events[0].payload
    last = events[-1].payload
    return first.grade / first.max_grade, last.grade / last.max_grade, len(events)


def page_pass_label(
    page_assessments: Sequence[str],
    page_videos: Sequence[str],
    final_grades: Mapping[str, float],
    fractions_watched: Mapping[str, float],
) -> int:
    """Binary pass criterion for one (student, page).

    Pages with assessments: pass iff the mean final grade over all page
    assessments exceeds 0.7, with unattempted assessments scoring 0.
    Video-only pages: pass iff more than 70% of the page's videos were
    watched beyond the 0.7 fraction. Both inequalities are strict.
    """
    if page_assessments:
        mean = sum(final_grades.get(a, 0.0) for a in page_assessments) / len(page_assessments)
        return 1 if mean > PASS_THRESHOLD else 0
    if page_videos:
        watched = sum(1 for v in page_videos if fractions_watched.get(v, 0.0) > PASS_THRESHOLD)
        return 1 if watched / len(page_videos) > PASS_THRESHOLD else 0
    raise EmptyPage("page has no linked content")


def load_catalog(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        catalog = json.load(handle)
    if not isinstance(catalog, dict):
        raise ParseError("catalog must be a JSON object")
    return catalog


def link_content_to_pages(
    events: Sequence[ClickEvent], catalog: dict | None = None
) -> tuple[dict[str, str], dict[str, str], dict[str, float], float]:
    """Resolve content ids, durations and content-to-page linkage.

    The page of a content item is its first observed ``page`` field in
    canonical event order; a catalog entry overrides the observed value.
    Content without any page stays in the graph unlinked. Returns
    (video_page, assessment_page, video_duration, coverage); unlinked
    content appears in the duration map but not in the page maps.
    """
    video_page: dict[str, str] = {}
    assessment_page: dict[str, str] = {}
    video_duration: dict[str, float] = {}
    videos: set[str] = set()
    assessments: set[str] = set()
    for event in events:
        if event.event_type in VIDEO_EVENT_TYPES:
            vid = event.payload.video_id
            videos.add(vid)
            if event.payload.duration_s is not None:
                video_duration[vid] = max(video_duration.get(vid, 0.0), event.payload.duration_s)
            if event.page_id and vid not in video_page:
                video_page[vid] = event.page_id
        elif event.event_type is EventType.ProblemSubmit:
            aid = event.payload.assessment_id
            assessments.add(aid)
            if event.page_id and aid not in assessment_page:
                assessment_page[aid] = event.page_id
    for entry in (catalog or {}).get("videos", []):
        vid = entry["id"]
        videos.add(vid)
        if entry.get("duration") is not None:
            video_duration[vid] = float(entry["duration"])
        if entry.get("page"):
            video_page[vid] = entry["page"]
    for entry in (catalog or {}).get("assessments", []):
        aid = entry["id"]
        assessments.add(aid)
        if entry.get("page"):
            assessment_page[aid] = entry["page"]
    total = len(videos) + len(assessments)
    linked = len(video_page) + len(assessment_page)
    coverage = linked / total if total else 1.0
    duration_map = {v: video_duration.get(v) for v in videos}
    return video_page, assessment_page, duration_map, coverage


def assemble_hkg(
    events: Sequence[ClickEvent],
    catalog: dict | None = None,
    gap: timedelta = DEFAULT_SESSION_GAP,
    engage_thresholds: EngageThresholds = DEFAULT_THRESHOLDS,
) -> Hkg:
    """Build the full graph from events: nodes, features, edges, labels.

    Events are filtered and canonically sorted first, so the result is
    independent of input order. A supervision edge (student, page) exists
    for every page whose linked content the student interacted with; the
    label applies the page pass criterion. Raises EmptyGraph when no
    supervision label can be produced.
    """
    evs = sort_events(filter_events(events))
    video_page, assessment_page, video_duration, coverage = link_content_to_pages(evs, catalog)

    videos = sorted(video_duration)
    assessments_all: set[str] = set(assessment_page)
    by_user: dict[str, list[ClickEvent]] = {}
    for event in evs:
        by_user.setdefault(event.user_id, []).append(event)
        if event.event_type is EventType.ProblemSubmit:
            assessments_all.add(event.payload.assessment_id)
    for entry in (catalog or {}).get("assessments", []):
        assessments_all.add(entry["id"])
    assessments = sorted(assessments_all)
    pages = sorted(set(video_page.values()) | set(assessment_page.values()))
    students = sorted(by_user)

    page_videos: dict[str, list[str]] = {p: [] for p in pages}
    page_assessments: dict[str, list[str]] = {p: [] for p in pages}
    for vid in videos:
        if vid in video_page:
            page_videos[video_page[vid]].append(vid)
    for aid in assessments:
        if aid in assessment_page:
            page_assessments[assessment_page[aid]].append(aid)

    vid_index = {v: i for i, v in enumerate(videos)}
    aid_index = {a: i for i, a in enumerate(assessments)}
    page_index = {p: i for i, p in enumerate(pages)}

    watch_edges: list[tuple[int, int, float]] = []
    attempt_edges: list[tuple[int, int, float, float, float]] = []
    pass_edges: list[tuple[int, int, int]] = []
    student_rows = np.zeros((len(students), STUDENT_FEATURE_DIM))
    no_duration = 0

    for s_idx, user in enumerate(students):
        user_events = by_user[user]
        per_video: dict[str, list[ClickEvent]] = {}
        per_assessment: dict[str, list[ClickEvent]] = {}
        for event in user_events:
            if event.event_type in VIDEO_EVENT_TYPES:
                per_video.setdefault(event.payload.video_id, []).append(event)
            elif event.event_type is EventType.ProblemSubmit:
                per_assessment.setdefault(event.payload.assessment_id, []).append(event)

        fractions: dict[str, float] = {}
        for vid in sorted(per_video):
            duration = video_duration.get(vid)
            if duration is None:
                no_duration += 1
            weight = watch_fraction(per_video[vid], duration)
            fractions[vid] = weight
            watch_edges.append((s_idx, vid_index[vid], weight))

        finals: dict[str, float] = {}
        for aid in sorted(per_assessment):
            first, final, attempts = assessment_edge_features(per_assessment[aid])
            finals[aid] = final
            attempt_edges.append((s_idx, aid_index[aid], first, final, float(attempts)))

        touched_pages = sorted(
            {video_page[v] for v in per_video if v in video_page}
            | {assessment_page[a] for a in per_assessment if a in assessment_page}
        )
        for page in touched_pages:
            label = page_pass_label(page_assessments[page], page_videos[page], finals, fractions)
            pass_edges.append((s_idx, page_index[page], label))

        stats = aggregate_user_stats(user_events, sessionize(user_events, gap))
        mean_watch = sum(fractions.values()) / len(fractions) if fractions else 0.0
        mean_grade = sum(finals.values()) / len(finals) if finals else 0.0
        level = label_student(mean_watch, mean_grade, engage_thresholds)
        counts = stats.event_counts
        student_rows[s_idx, :7] = [
            stats.session_count,
            counts.get(EventType.VideoPlay, 0),
            counts.get(EventType.VideoPause, 0),
            counts.get(EventType.VideoSeek, 0),
            counts.get(EventType.VideoStop, 0),
            counts.get(EventType.ProblemSubmit, 0),
            stats.active_day_span,
        ]
        student_rows[s_idx, 7 + int(level)] = 1.0

    if not pass_edges:
        raise EmptyGraph("no supervision labels could be derived")

    # Per-column max normalization of the numeric student columns.
    for col in range(7):
        top = student_rows[:, col].max()
        if top > 0:
            student_rows[:, col] /= top
    video_rows = np.array([[video_duration.get(v) or 0.0] for v in videos]).reshape(len(videos), 1)
    if len(videos) and video_rows.max() > 0:
        video_rows /= video_rows.max()

    def edge_table(relation: str, rows: list[tuple], fdim: int, labeled: bool) -> EdgeTable:
        rows = sorted(rows, key=lambda r: (r[0], r[1]))
        src = [r[0] for r in rows]
        dst = [r[1] for r in rows]
        feats = [r[2 : 2 + fdim] for r in rows]
        labels = [r[2] for r in rows] if labeled else None
        return EdgeTable(relation, src, dst, feats, labels)

    video_on_page = [(vid_index[v], page_index[p]) for v, p in video_page.items()]
    assessment_on_page = [(aid_index[a], page_index[p]) for a, p in assessment_page.items()]

    hkg = Hkg(
        features={
            STUDENT: FeatureTable(STUDENT, STUDENT_FEATURE_DIM, student_rows),
            VIDEO: FeatureTable(VIDEO, 1, video_rows),
            ASSESSMENT: FeatureTable(ASSESSMENT, 1, np.zeros((len(assessments), 1))),
            PAGE: FeatureTable(PAGE, 1, np.zeros((len(pages), 1))),
        },
        edges={
            REL_WATCHES: edge_table(REL_WATCHES, watch_edges, 1, False),
            REL_ATTEMPTS: edge_table(REL_ATTEMPTS, attempt_edges, 3, False),
            REL_VIDEO_ON_PAGE: edge_table(REL_VIDEO_ON_PAGE, video_on_page, 0, False),
            REL_ASSESSMENT_ON_PAGE: edge_table(REL_ASSESSMENT_ON_PAGE, assessment_on_page, 0, False),
            REL_PASSES: edge_table(REL_PASSES, pass_edges, 0, True),
        },
        ids={STUDENT: students, VIDEO: videos, ASSESSMENT: assessments, PAGE: pages},
        coverage=coverage,
        meta={"no_duration_pairs": no_duration},
    )
    return hkg


MAGIC = b"HKGRAPH1"


def save_hkg(hkg: Hkg, path: Path) -> None:
    with open(path, "wb") as handle:
        handle.write(to_bytes(hkg))


def load_hkg(path: Path) -> Hkg:
    with open(path, "rb") as handle:
        return from_bytes(handle.read())


def to_bytes(hkg: Hkg) -> bytes:
    """Container layout: magic, u32 header length, JSON header, raw blobs.

    Blobs follow in header order: per node type the float64 feature matrix,
    per relation the int64 src and dst arrays, the float64 edge feature
    matrix and, when present, the int64 label vector. Little-endian.
    """
    header = {
        "schema_version": 1,
        "coverage": hkg.coverage,
        "meta": hkg.meta,
        "node_types": [
            {"name": t, "count": hkg.node_count(t), "dim": hkg.features[t].dim, "ids": hkg.ids[t]}
            for t in NODE_TYPES
        ],
        "relations": [
            {
                "name": name,
                "count": len(table),
                "feature_dim": RELATION_SCHEMA[name][2],
                "has_labels": table.labels is not None,
            }
            for name, table in hkg.edges.items()
        ],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(head)), head]
    for t in NODE_TYPES:
        parts.append(hkg.features[t].rows.astype("<f8").tobytes())
    for table in hkg.edges.values():
        parts.append(table.src.astype("<i8").tobytes())
        parts.append(table.dst.astype("<i8").tobytes())
        parts.append(table.features.astype("<f8").tobytes())
        if table.labels is not None:
            parts.append(table.labels.astype("<i8").tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> Hkg:
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError("not a graph container (bad magic)")
    head_len = struct.unpack_from("<I", blob, len(MAGIC))[0]
    offset = len(MAGIC) + 4
    header = json.loads(blob[offset : offset + head_len].decode("utf-8"))
    offset += head_len

    def take(count: int, dtype: str) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).copy()
        offset += arr.nbytes
        return arr

    features: dict[str, FeatureTable] = {}
    ids: dict[str, list[str]] = {}
    for spec in header["node_types"]:
        rows = take(spec["count"] * spec["dim"], "<f8").reshape(spec["count"], spec["dim"])
        features[spec["name"]] = FeatureTable(spec["name"], spec["dim"], rows)
        ids[spec["name"]] = list(spec["ids"])
    edges: dict[str, EdgeTable] = {}
    for spec in header["relations"]:
        n, fdim = spec["count"], spec["feature_dim"]
        src = take(n, "<i8")
        dst = take(n, "<i8")
        feats = take(n * fdim, "<f8").reshape(n, fdim)
        labels = take(n, "<i8") if spec["has_labels"] else None
        edges[spec["name"]] = EdgeTable(spec["name"], src, dst, feats, labels)
    return Hkg(features, edges, ids, header["coverage"], header.get("meta", {}))


def to_json_dict(hkg: Hkg) -> dict:
    """Inspection-friendly JSON form of the whole graph."""
    return {
        "coverage": hkg.coverage,
        "meta": hkg.meta,
        "nodes": {
            t: {"ids": hkg.ids[t], "features": hkg.features[t].rows.tolist()} for t in NODE_TYPES
        },
        "edges": {
            name: {
                "src": table.src.tolist(),
                "dst": table.dst.tolist(),
                "features": table.features.tolist(),
                **({"labels": table.labels.tolist()} if table.labels is not None else {}),
            }
            for name, table in hkg.edges.items()
        },
    }
