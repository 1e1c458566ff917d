"""Annotation schema, validation, and confidence-summed label aggregation.

Documents are plain JSON with the layout::

    {
      "schema_version": "1.0",
      "mode": "simple" | "rationale",
      "emotions": [<the 10 labels in canonical order>],
      "confidence_scale": {"min": 0, "max": 5, "zero_means": "not_selected"},
      "video": {"name": "<source video>", "fps": 1},
      "frames": {"<t>": [{"annotator": "...", "scores": {"<emotion>": <int>},
                          "rationale"?: "..."}]}
    }

Per frame, each rater's per-class confidence scores are summed into a single
score vector; the frame label is the argmax, with ties kept explicitly and
broken deterministically by canonical label order. All functions here are
pure and safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    AllZeroScores,
    AnnotatorWithNoSelections,
    ConfidenceOutOfRange,
    DuplicateAnnotator,
    EmptyInput,
    MalformedDocument,
    RationaleInSimpleMode,
    SchemaVersionUnknown,
    UnknownEmotion,
)
from .taxonomy import CANONICAL_NAMES, CANONICAL_ORDER, EmotionLabel, canonical_first, parse_label

SUPPORTED_SCHEMA_VERSIONS = ("1.0",)
CONFIDENCE_MIN = 0
CONFIDENCE_MAX = 5
CONFIDENCE_SCALE = {"min": CONFIDENCE_MIN, "max": CONFIDENCE_MAX, "zero_means": "not_selected"}

MODES = ("simple", "rationale")

# An annotator dominating a single class beyond this fraction of their own
# selections is flagged as abnormally biased.
BIAS_DOMINANCE_THRESHOLD = 0.70


@dataclass(frozen=True)
class RaterFrameRecord:
    """One rater's scores for one frame. Absent classes mean score 0."""

    annotator_id: str
    scores: dict[EmotionLabel, int] = field(default_factory=dict)
    rationale: str | None = None

    def score(self, label: EmotionLabel) -> int:
        return self.scores.get(label, 0)

    def selected(self) -> set[EmotionLabel]:
        return {label for label, s in self.scores.items() if s > 0}

    def to_dict(self) -> dict:
        out: dict = {
            "annotator": self.annotator_id,
            "scores": {label.value: s for label, s in self.scores.items()},
        }
        if self.rationale is not None:
            out["rationale"] = self.rationale
        return out


@dataclass
class AnnotationDocument:
    """Validated per-clip container of multi-rater frame records."""

    schema_version: str
    mode: str
    source_video_name: str
    sampling_rate_fps: float
    frames: dict[int, list[RaterFrameRecord]]

    @property
    def roster(self) -> list[str]:
        """Distinct annotator ids across the document, in first-seen order."""
        seen: dict[str, None] = {}
        for t in sorted(self.frames):
            for rec in self.frames[t]:
                seen.setdefault(rec.annotator_id, None)
        return list(seen)

    def underfilled_frames(self) -> list[int]:
        """Frames with fewer rater records than the roster size (flag, not error)."""
        n = len(self.roster)
        return sorted(t for t, recs in self.frames.items() if len(recs) < n)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "emotions": list(CANONICAL_NAMES),
            "confidence_scale": dict(CONFIDENCE_SCALE),
            "video": {"name": self.source_video_name, "fps": self.sampling_rate_fps},
            "frames": {
                str(t): [rec.to_dict() for rec in self.frames[t]] for t in sorted(self.frames)
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class AggregatedFrameLabel:
    """Confidence-summed score vector with its argmax tie set."""

    scores: dict[EmotionLabel, int]
    tie_set: frozenset[EmotionLabel]
    canonical_label: EmotionLabel
    max_score: int

    def to_dict(self) -> dict:
        return {
            "scores": {l.value: s for l, s in self.scores.items() if s > 0},
            "tie_set": sorted(l.value for l in self.tie_set),
            "canonical_label": self.canonical_label.value,
            "max_score": self.max_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregatedFrameLabel":
        scores = {label: 0 for label in CANONICAL_ORDER}
        for name, s in d["scores"].items():
            scores[parse_label(name)] = int(s)
        return cls(
            scores=scores,
            tie_set=frozenset(parse_label(n) for n in d["tie_set"]),
            canonical_label=parse_label(d["canonical_label"]),
            max_score=int(d["max_score"]),
        )


@dataclass(frozen=True)
class DocumentAggregate:
    """Per-frame aggregates plus the timestamps excluded for all-zero scores."""

    frames: dict[int, AggregatedFrameLabel]
    excluded: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "frames": {str(t): self.frames[t].to_dict() for t in sorted(self.frames)},
            "excluded": list(self.excluded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentAggregate":
        return cls(
            frames={int(t): AggregatedFrameLabel.from_dict(v) for t, v in d["frames"].items()},
            excluded=tuple(int(t) for t in d["excluded"]),
        )


# --- validation ---------------------------------------------------------------


def _check_score(value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfidenceOutOfRange(value)
    if not CONFIDENCE_MIN <= value <= CONFIDENCE_MAX:
        raise ConfidenceOutOfRange(value)
    return value


def _parse_record(frame: int, raw: dict, mode: str) -> RaterFrameRecord:
    annotator = raw.get("annotator")
    if not isinstance(annotator, str) or not annotator:
        raise MalformedDocument(f"missing annotator id in frame {frame}")
    scores: dict[EmotionLabel, int] = {}
    for name, value in raw.get("scores", {}).items():
        scores[parse_label(name)] = _check_score(value)
    rationale = raw.get("rationale")
    if rationale is not None and mode != "rationale":
        raise RationaleInSimpleMode(frame)
    return RaterFrameRecord(annotator_id=annotator, scores=scores, rationale=rationale)


def validate_document(raw_bytes: bytes | str) -> AnnotationDocument:
    """Parse and fully validate a UTF-8 JSON annotation document.

    Raises the specific schema error for the first violation found; the
    returned document satisfies every structural invariant.
    """
    if isinstance(raw_bytes, bytes):
        raw_bytes = raw_bytes.decode("utf-8")
    data = json.loads(raw_bytes)

    version = data.get("schema_version")
    if version not in SUPPORTED_SCHEMA_VERSIONS:
        raise SchemaVersionUnknown(version)

    mode = data.get("mode")
    if mode not in MODES:
        raise MalformedDocument(f"mode must be one of {MODES}, got {mode!r}")

    emotions = data.get("emotions")
    if tuple(emotions or ()) != CANONICAL_NAMES:
        # Any unlisted name is reported first; a reorder of valid names is a
        # schema violation too.
        for name in emotions or ():
            parse_label(name)
        raise UnknownEmotion(f"emotion class set must be {list(CANONICAL_NAMES)}")

    scale = data.get("confidence_scale")
    if scale != CONFIDENCE_SCALE:
        raise ConfidenceOutOfRange(scale)

    video = data.get("video") or {}
    name = video.get("name")
    fps = video.get("fps")
    if not name or not isinstance(fps, (int, float)) or fps <= 0:
        raise MalformedDocument("video metadata requires a name and positive fps")

    raw_frames = data.get("frames")
    if not isinstance(raw_frames, dict) or not raw_frames:
        raise MalformedDocument("document has no frames")

    frames: dict[int, list[RaterFrameRecord]] = {}
    for key, raw_records in raw_frames.items():
        try:
            t = int(key)
        except (TypeError, ValueError):
            raise MalformedDocument(f"frame timestamp {key!r} is not an integer")
        if t < 0:
            raise MalformedDocument(f"frame timestamp {key!r} is negative")
        if not raw_records:
            raise MalformedDocument(f"frame {t} has no rater records")
        records = []
        seen_ids: set[str] = set()
        for raw in raw_records:
            rec = _parse_record(t, raw, mode)
            if rec.annotator_id in seen_ids:
                raise DuplicateAnnotator(t, rec.annotator_id)
            seen_ids.add(rec.annotator_id)
            records.append(rec)
        frames[t] = records

    if fps == 1:
        ts = sorted(frames)
        if ts[-1] - ts[0] + 1 != len(ts):
            raise MalformedDocument(
                f"frame timestamps must be consecutive integers at 1 FPS "
                f"(got {ts[0]}..{ts[-1]} with {len(ts)} frames)"
            )

    return AnnotationDocument(
        schema_version=version,
        mode=mode,
        source_video_name=name,
        sampling_rate_fps=fps,
        frames=frames,
    )


# --- aggregation ----------------------------------------------------------------


def aggregate_frame(records: list[RaterFrameRecord]) -> AggregatedFrameLabel:
    """Sum per-class confidences across raters and take the argmax label.

    The full argmax tie set is preserved; ``canonical_label`` is the tie
    member earliest in canonical order. Raises :class:`AllZeroScores` when no
    rater selected anything.
    """
    if not records:
        raise EmptyInput("rater records")
    scores = {label: 0 for label in CANONICAL_ORDER}
    for rec in records:
        for label, s in rec.scores.items():
            scores[label] += s
    max_score = max(scores.values())
    if max_score == 0:
        raise AllZeroScores()
    tie_set = frozenset(l for l, s in scores.items() if s == max_score)
    return AggregatedFrameLabel(
        scores=scores,
        tie_set=tie_set,
        canonical_label=canonical_first(tie_set),
        max_score=max_score,
    )


def aggregate_document(doc: AnnotationDocument) -> DocumentAggregate:
    """Aggregate every frame; all-zero frames go to an explicit exclusion list."""
    frames: dict[int, AggregatedFrameLabel] = {}
    excluded: list[int] = []
    for t in sorted(doc.frames):
        try:
            frames[t] = aggregate_frame(doc.frames[t])
        except AllZeroScores:
            excluded.append(t)
    return DocumentAggregate(frames=frames, excluded=tuple(excluded))


# --- dataset statistics ------------------------------------------------------------


def multi_emotion_histogram(aggregates: DocumentAggregate | dict) -> dict[int, float]:
    """Fraction of frames by k = number of emotion classes any rater selected.

    Computed from aggregated score vectors (a class has a nonzero sum exactly
    when at least one rater selected it). Fractions are rounded to 3 decimals
    at report time; they sum to 1 before rounding.
    """
    frames = aggregates.frames if isinstance(aggregates, DocumentAggregate) else aggregates
    if not frames:
        raise EmptyInput("aggregates")
    counts: dict[int, int] = {}
    for agg in frames.values():
        k = sum(1 for s in agg.scores.values() if s > 0)
        counts[k] = counts.get(k, 0) + 1
    total = len(frames)
    return {k: round(counts[k] / total, 3) for k in sorted(counts)}


@dataclass(frozen=True)
class AnnotatorBiasReport:
    """Per-annotator class-selection proportions with dominance flags."""

    profiles: dict[str, dict[EmotionLabel, float]]
    flagged: dict[str, list[EmotionLabel]]

    def to_dict(self) -> dict:
        return {
            "profiles": {
                a: {l.value: round(f, 3) for l, f in prof.items()}
                for a, prof in self.profiles.items()
            },
            "flagged": {a: [l.value for l in ls] for a, ls in self.flagged.items()},
            "threshold": BIAS_DOMINANCE_THRESHOLD,
        }


def annotator_bias_profile(doc: AnnotationDocument) -> AnnotatorBiasReport:
    """Per annotator, the share of their nonzero selections going to each class.

    Rows sum to 1. Any class taking more than 70% of one annotator's
    selections is flagged as abnormally dominant.
    """
    selections: dict[str, dict[EmotionLabel, int]] = {a: {} for a in doc.roster}
    for recs in doc.frames.values():
        for rec in recs:
            tally = selections[rec.annotator_id]
            for label in rec.selected():
                tally[label] = tally.get(label, 0) + 1

    profiles: dict[str, dict[EmotionLabel, float]] = {}
    flagged: dict[str, list[EmotionLabel]] = {}
    for annotator, tally in selections.items():
        total = sum(tally.values())
        if total == 0:
            raise AnnotatorWithNoSelections(annotator)
        profile = {label: tally[label] / total for label in CANONICAL_ORDER if label in tally}
        profiles[annotator] = profile
        over = [l for l, f in profile.items() if f > BIAS_DOMINANCE_THRESHOLD]
        if over:
            flagged[annotator] = over
    return AnnotatorBiasReport(profiles=profiles, flagged=flagged)


def dataset_stats(doc: AnnotationDocument) -> dict:
    """All document-level statistics in one JSON-ready report."""
    aggregates = aggregate_document(doc)
    class_counts = {label.value: 0 for label in CANONICAL_ORDER}
    for agg in aggregates.frames.values():
        class_counts[agg.canonical_label.value] += 1
    n = len(aggregates.frames)
    bias = annotator_bias_profile(doc)
    return {
        "video": doc.source_video_name,
        "frames": len(doc.frames),
        "aggregated_frames": n,
        "excluded_frames": list(aggregates.excluded),
        "underfilled_frames": doc.underfilled_frames(),
        "class_distribution": {
            label: {"count": c, "fraction": round(c / n, 3) if n else 0.0}
            for label, c in class_counts.items()
        },
        "multi_emotion_histogram": multi_emotion_histogram(aggregates) if n else {},
        "annotator_bias": bias.to_dict(),
    }


def stats_to_csv(stats: dict) -> str:
    """Flatten a stats report into CSV (one metric per row)."""
    lines = ["section,key,value"]
    for label, entry in stats["class_distribution"].items():
        lines.append(f"class_distribution,{label},{entry['fraction']}")
    for k, frac in stats["multi_emotion_histogram"].items():
        lines.append(f"multi_emotion_histogram,{k},{frac}")
    for annotator, profile in stats["annotator_bias"]["profiles"].items():
        for label, frac in profile.items():
            lines.append(f"annotator_bias,{annotator}/{label},{frac}")
    lines.append(f"summary,frames,{stats['frames']}")
    lines.append(f"summary,excluded_frames,{len(stats['excluded_frames'])}")
    return "\n".join(lines) + "\n"
