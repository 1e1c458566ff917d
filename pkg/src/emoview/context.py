"""Temporal context construction: frame windows, audio spans, and the rolling
narrative memory.

At time ``t`` (integer seconds into a clip) the model input is a triplet:

* a visual window of up to three frames at 5-second spacing,
* an audio window covering at most the previous 10 seconds,
* a narrative context pairing the most recent completed 20-second segment
  summary with a budgeted long-term background folded from all earlier
  segments.

The fold operator has two implementations: a model-backed merge (see
``model_client``) and the deterministic rule-based merger in this module,
which all correctness tests run against. The rule-based fold is a pure
function, so replaying the same segment sequence always reproduces the same
background.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .errors import (
    BudgetUnsatisfiable,
    EmptyWindow,
    MissingFrame,
    MissingSummary,
)

# Paper-default timing constants; overridable per stream for ablations.
FRAME_INTERVAL_SECONDS = 5
AUDIO_SPAN_SECONDS = 10
SEGMENT_SECONDS = 20

# Long-term background limits. The worked compression example lands around
# 112 words, so 120 gives headroom while keeping prompts bounded.
WORD_BUDGET = 120
ENTITY_CAP = 8
TURNING_POINT_CAP = 5
PREMISE_SENTENCE_CAP = 3
CONFLICT_CLAUSE_CAP = 6


@dataclass(frozen=True)
class ContextConfig:
    frame_interval_seconds: int = FRAME_INTERVAL_SECONDS
    audio_span_seconds: int = AUDIO_SPAN_SECONDS
    segment_seconds: int = SEGMENT_SECONDS
    word_budget: int = WORD_BUDGET
    entity_cap: int = ENTITY_CAP
    turning_point_cap: int = TURNING_POINT_CAP


DEFAULT_CONFIG = ContextConfig()


def word_count(text: str) -> int:
    """Whitespace-token count; the unit all budgets are expressed in."""
    return len(text.split())


# --- short-term windows --------------------------------------------------------


@dataclass(frozen=True)
class VisualWindow:
    """1-3 frame references ordered oldest to newest."""

    frame_refs: tuple[tuple[int, str], ...]

    @property
    def timestamps(self) -> tuple[int, ...]:
        return tuple(ts for ts, _ in self.frame_refs)

    @property
    def uris(self) -> tuple[str, ...]:
        return tuple(uri for _, uri in self.frame_refs)

    def to_dict(self) -> dict:
        return {"frames": [[ts, uri] for ts, uri in self.frame_refs]}

    @classmethod
    def from_dict(cls, d: dict) -> "VisualWindow":
        return cls(frame_refs=tuple((int(ts), uri) for ts, uri in d["frames"]))


@dataclass(frozen=True)
class AudioWindow:
    start_seconds: int
    end_seconds: int
    media_uri: str

    @property
    def duration(self) -> int:
        return self.end_seconds - self.start_seconds

    def to_dict(self) -> dict:
        return {"start": self.start_seconds, "end": self.end_seconds, "uri": self.media_uri}

    @classmethod
    def from_dict(cls, d: dict) -> "AudioWindow":
        return cls(start_seconds=int(d["start"]), end_seconds=int(d["end"]), media_uri=d["uri"])


def visual_window(
    t: int,
    frame_index: Mapping[int, str],
    config: ContextConfig = DEFAULT_CONFIG,
) -> VisualWindow:
    """Select the progressive frame window ending at ``t``.

    Below one interval only the current frame exists; below two intervals the
    current frame plus one; from two intervals on, three frames at
    ``t-2i, t-i, t``.
    """
    if t < 0:
        raise MissingFrame(t)
    interval = config.frame_interval_seconds
    offsets = [0]
    if t >= interval:
        offsets.append(interval)
    if t >= 2 * interval:
        offsets.append(2 * interval)
    refs = []
    for off in sorted(offsets, reverse=True):
        ts = t - off
        if ts not in frame_index:
            raise MissingFrame(ts)
        refs.append((ts, frame_index[ts]))
    return VisualWindow(frame_refs=tuple(refs))


def audio_window(t: int, media_uri: str, config: ContextConfig = DEFAULT_CONFIG) -> AudioWindow:
    """Sliding window over the previous ``audio_span_seconds``, truncated at 0."""
    if t <= 0:
        raise EmptyWindow(t)
    return AudioWindow(
        start_seconds=max(0, t - config.audio_span_seconds),
        end_seconds=t,
        media_uri=media_uri,
    )


def segment_index(t: int, config: ContextConfig = DEFAULT_CONFIG) -> int:
    """Number of completed fixed-length segments at time ``t``."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    return t // config.segment_seconds


# --- narrative types -------------------------------------------------------------


@dataclass(frozen=True)
class SegmentSummary:
    """Raw summary text for one completed segment."""

    segment_index: int  # 1-based
    text: str
    start_seconds: int
    end_seconds: int
    word_count: int

    @classmethod
    def create(
        cls, segment_index: int, text: str, config: ContextConfig = DEFAULT_CONFIG
    ) -> "SegmentSummary":
        if segment_index < 1:
            raise ValueError("segment_index is 1-based")
        seg = config.segment_seconds
        return cls(
            segment_index=segment_index,
            text=text,
            start_seconds=seg * (segment_index - 1),
            end_seconds=seg * segment_index,
            word_count=word_count(text),
        )

    @property
    def span_label(self) -> str:
        return f"{self.start_seconds}–{self.end_seconds}s"

    def to_dict(self) -> dict:
        return {
            "segment_index": self.segment_index,
            "text": self.text,
            "start_seconds": self.start_seconds,
            "end_seconds": self.end_seconds,
            "word_count": self.word_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentSummary":
        return cls(
            segment_index=int(d["segment_index"]),
            text=d["text"],
            start_seconds=int(d["start_seconds"]),
            end_seconds=int(d["end_seconds"]),
            word_count=int(d["word_count"]),
        )


@dataclass(frozen=True)
class SchemaExtraction:
    """Structured fields pulled out of one segment summary (the G step)."""

    premise: str
    entities: tuple[str, ...]
    conflict: str
    tone: str
    turning_points: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "premise": self.premise,
            "entities": list(self.entities),
            "conflict": self.conflict,
            "tone": self.tone,
            "turning_points": list(self.turning_points),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemaExtraction":
        return cls(
            premise=d["premise"],
            entities=tuple(d["entities"]),
            conflict=d["conflict"],
            tone=d["tone"],
            turning_points=tuple(d.get("turning_points", ())),
        )


@dataclass(frozen=True)
class NarrativeBackground:
    """Budgeted long-term schema: premise, entities, conflict, tone, turning points."""

    premise: str
    entities: tuple[str, ...]
    conflict: str
    tone: str
    turning_points: tuple[str, ...]
    last_segment_index: int
    word_budget: int = WORD_BUDGET

    def total_words(self) -> int:
        return (
            word_count(self.premise)
            + sum(word_count(e) for e in self.entities)
            + word_count(self.conflict)
            + word_count(self.tone)
            + sum(word_count(p) for p in self.turning_points)
        )

    def rendered_text(self) -> str:
        """The story/entities/conflict/tone block injected into prompts."""
        return (
            f"story: {self.premise}\n\n"
            f"entities: {', '.join(self.entities)}\n\n"
            f"conflict: {self.conflict}\n\n"
            f"tone:{self.tone}"
        )

    def to_dict(self) -> dict:
        return {
            "premise": self.premise,
            "entities": list(self.entities),
            "conflict": self.conflict,
            "tone": self.tone,
            "turning_points": list(self.turning_points),
            "last_segment_index": self.last_segment_index,
            "word_budget": self.word_budget,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeBackground":
        return cls(
            premise=d["premise"],
            entities=tuple(d["entities"]),
            conflict=d["conflict"],
            tone=d["tone"],
            turning_points=tuple(d["turning_points"]),
            last_segment_index=int(d["last_segment_index"]),
            word_budget=int(d["word_budget"]),
        )


@dataclass(frozen=True)
class NarrativeContext:
    """Long-term background plus the most recent detailed segment summary."""

    long_term: NarrativeBackground | None
    recent: SegmentSummary | None
    rendered_text: str

    def to_dict(self) -> dict:
        return {
            "long_term": self.long_term.to_dict() if self.long_term else None,
            "recent": self.recent.to_dict() if self.recent else None,
            "rendered_text": self.rendered_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NarrativeContext":
        return cls(
            long_term=NarrativeBackground.from_dict(d["long_term"]) if d["long_term"] else None,
            recent=SegmentSummary.from_dict(d["recent"]) if d["recent"] else None,
            rendered_text=d["rendered_text"],
        )


@dataclass(frozen=True)
class ContextTriplet:
    """Everything the model sees for one prediction at time ``t``."""

    t: int
    visual: VisualWindow
    audio: AudioWindow
    narrative: NarrativeContext

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "visual": self.visual.to_dict(),
            "audio": self.audio.to_dict(),
            "narrative": self.narrative.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContextTriplet":
        return cls(
            t=int(d["t"]),
            visual=VisualWindow.from_dict(d["visual"]),
            audio=AudioWindow.from_dict(d["audio"]),
            narrative=NarrativeContext.from_dict(d["narrative"]),
        )


# --- rule-based fold (the deterministic merge path) ----------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_CLAUSE_SPLIT = re.compile(r"[,;]\s*")


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(".,;")


def _sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(text.strip()) if s.strip()]


def _clauses(text: str) -> list[str]:
    return [c.strip().rstrip(".") for c in _CLAUSE_SPLIT.split(text.strip()) if c.strip()]


def _dedupe(items: Iterable[str]) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for item in items:
        key = _normalize(item)
        if key and key not in seen:
            seen.add(key)
            out.append(item)
    return out


def _merge_premise(prev_premise: str, new_premise: str) -> str:
    merged = _dedupe(_sentences(prev_premise) + _sentences(new_premise))
    return " ".join(merged[-PREMISE_SENTENCE_CAP:])


def _merge_entities(prev: tuple[str, ...], new: Iterable[str], cap: int) -> tuple[str, ...]:
    union = _dedupe(list(prev) + list(new))
    if len(union) <= cap:
        return tuple(union)
    # Recency-weighted pruning: entities re-mentioned this fold survive first;
    # stale ones are dropped oldest-first.
    fresh = {_normalize(e) for e in new}
    stale = [e for e in union if _normalize(e) not in fresh]
    drop = {_normalize(e) for e in stale[: len(union) - cap]}
    return tuple(e for e in union if _normalize(e) not in drop)


def _merge_conflict(prev_conflict: str, new_conflict: str) -> str:
    merged = _dedupe(_clauses(prev_conflict) + _clauses(new_conflict))
    return ", ".join(merged[-CONFLICT_CLAUSE_CAP:])


def _enforce_budget(bg: NarrativeBackground) -> NarrativeBackground:
    if bg.total_words() <= bg.word_budget:
        return bg
    turning = list(bg.turning_points)
    while turning and bg.total_words() > bg.word_budget:
        turning.pop(0)
        bg = replace(bg, turning_points=tuple(turning))
    entities = list(bg.entities)
    while len(entities) > 3 and bg.total_words() > bg.word_budget:
        entities.pop(0)
        bg = replace(bg, entities=tuple(entities))
    conflict_clauses = _clauses(bg.conflict)
    while len(conflict_clauses) > 1 and bg.total_words() > bg.word_budget:
        conflict_clauses.pop(0)
        bg = replace(bg, conflict=", ".join(conflict_clauses))
    premise_sentences = _sentences(bg.premise)
    while len(premise_sentences) > 1 and bg.total_words() > bg.word_budget:
        premise_sentences.pop(0)
        bg = replace(bg, premise=" ".join(premise_sentences))
    if bg.total_words() > bg.word_budget:
        raise BudgetUnsatisfiable(bg.total_words(), bg.word_budget)
    return bg


Merger = Callable[["NarrativeBackground", "SchemaExtraction"], "SchemaExtraction"]


def fold_background(
    prev: NarrativeBackground | None,
    extracted: SchemaExtraction,
    segment_idx: int,
    config: ContextConfig = DEFAULT_CONFIG,
    merger: Merger | None = None,
) -> NarrativeBackground:
    """Fold one segment's extraction into the running background.

    With no ``merger`` the deterministic rule-based merge applies: premise
    sentences are deduped and the oldest dropped beyond a cap, entities take
    the ordered union with stale-first pruning, conflict clauses are deduped,
    tone keeps the latest non-empty value, and a turning point is appended
    whenever the conflict actually changed. The result always satisfies the
    word budget or raises :class:`BudgetUnsatisfiable`.
    """
    if prev is not None and prev.last_segment_index != segment_idx - 1:
        raise ValueError(
            f"fold out of order: background at {prev.last_segment_index}, "
            f"folding segment {segment_idx}"
        )
    if prev is None:
        bg = NarrativeBackground(
            premise=" ".join(_dedupe(_sentences(extracted.premise))[-PREMISE_SENTENCE_CAP:]),
            entities=_merge_entities((), extracted.entities, config.entity_cap),
            conflict=", ".join(_dedupe(_clauses(extracted.conflict))[-CONFLICT_CLAUSE_CAP:]),
            tone=extracted.tone,
            turning_points=(),
            last_segment_index=segment_idx,
            word_budget=config.word_budget,
        )
        return _enforce_budget(bg)

    if merger is not None:
        merged = merger(prev, extracted)
        bg = NarrativeBackground(
            premise=merged.premise,
            entities=tuple(merged.entities)[: config.entity_cap],
            conflict=merged.conflict,
            tone=merged.tone,
            turning_points=tuple(merged.turning_points)[-config.turning_point_cap :],
            last_segment_index=segment_idx,
            word_budget=config.word_budget,
        )
        return _enforce_budget(bg)

    turning = list(prev.turning_points)
    if _normalize(extracted.conflict) != _normalize(prev.conflict):
        prev_clauses = {_normalize(c) for c in _clauses(prev.conflict)}
        novel = [c for c in _clauses(extracted.conflict) if _normalize(c) not in prev_clauses]
        if novel:
            turning.append(novel[0])
            turning = turning[-config.turning_point_cap :]

    bg = NarrativeBackground(
        premise=_merge_premise(prev.premise, extracted.premise),
        entities=_merge_entities(prev.entities, extracted.entities, config.entity_cap),
        conflict=_merge_conflict(prev.conflict, extracted.conflict),
        tone=extracted.tone if extracted.tone.strip() else prev.tone,
        turning_points=tuple(turning),
        last_segment_index=segment_idx,
        word_budget=config.word_budget,
    )
    return _enforce_budget(bg)


def fold_all(
    extractions: Iterable[SchemaExtraction],
    config: ContextConfig = DEFAULT_CONFIG,
    merger: Merger | None = None,
    start_index: int = 1,
) -> NarrativeBackground | None:
    """Left-fold a whole extraction sequence; equals incremental folding."""
    bg: NarrativeBackground | None = None
    idx = start_index
    for extraction in extractions:
        bg = fold_background(bg, extraction, idx, config=config, merger=merger)
        idx += 1
    return bg


# --- narrative assembly -----------------------------------------------------------


def render_narrative_text(
    long_term: NarrativeBackground | None, recent: SegmentSummary | None
) -> str:
    """Fixed-template concatenation of background and recent segment."""
    parts = []
    if long_term is not None:
        parts.append(f"[Compressed Long-Term Background]\n\n{long_term.rendered_text()}")
    if recent is not None:
        parts.append(f"[Current Segment: {recent.span_label}]\n\n{recent.text}")
    return "\n\n".join(parts)


class StreamState:
    """Per-stream fold state: segment summaries, cached extractions, backgrounds.

    One logical worker owns a stream; distinct streams can be processed in
    parallel. ``extractor`` maps a summary to its structured fields (the mock
    or model-backed G); folding happens lazily so the background one segment
    behind the current one is always reconstructible.
    """

    def __init__(
        self,
        extractor: Callable[[SegmentSummary], SchemaExtraction],
        config: ContextConfig = DEFAULT_CONFIG,
        merger: Merger | None = None,
    ):
        self.extractor = extractor
        self.config = config
        self.merger = merger
        self.summaries: dict[int, SegmentSummary] = {}
        self._extractions: dict[int, SchemaExtraction] = {}
        self._backgrounds: dict[int, NarrativeBackground] = {}

    def add_summary(self, summary: SegmentSummary) -> None:
        self.summaries[summary.segment_index] = summary

    def extraction(self, index: int) -> SchemaExtraction:
        if index not in self._extractions:
            if index not in self.summaries:
                raise MissingSummary(index)
            self._extractions[index] = self.extractor(self.summaries[index])
        return self._extractions[index]

    def background_through(self, index: int) -> NarrativeBackground:
        """B_index: the background folded through segments 1..index."""
        if index < 1:
            raise MissingSummary(index)
        if index in self._backgrounds:
            return self._backgrounds[index]
        start = max((i for i in self._backgrounds if i < index), default=0)
        bg = self._backgrounds.get(start)
        for i in range(start + 1, index + 1):
            bg = fold_background(bg, self.extraction(i), i, self.config, self.merger)
            self._backgrounds[i] = bg
        return bg

    def narrative(self, t: int) -> NarrativeContext:
        return build_narrative(t, self)

    def cumulative_text(self, t: int) -> str:
        """Plain concatenation of all completed segment summaries up to ``t``."""
        k = segment_index(t, self.config)
        texts = []
        for i in range(1, k + 1):
            if i not in self.summaries:
                raise MissingSummary(i)
            texts.append(self.summaries[i].text)
        return " ".join(texts)

    # checkpoint schema: {"last_segment_index", "background", "summaries"}
    def to_checkpoint(self) -> dict:
        folded = max(self._backgrounds, default=0)
        return {
            "last_segment_index": folded,
            "background": self._backgrounds[folded].to_dict() if folded else None,
            "summaries": [self.summaries[i].to_dict() for i in sorted(self.summaries)],
        }

    def save_checkpoint(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_checkpoint(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_checkpoint(
        cls,
        data: dict,
        extractor: Callable[[SegmentSummary], SchemaExtraction],
        config: ContextConfig = DEFAULT_CONFIG,
        merger: Merger | None = None,
    ) -> "StreamState":
        state = cls(extractor, config=config, merger=merger)
        for raw in data["summaries"]:
            state.add_summary(SegmentSummary.from_dict(raw))
        if data.get("background"):
            bg = NarrativeBackground.from_dict(data["background"])
            state._backgrounds[bg.last_segment_index] = bg
        return state

    @classmethod
    def load_checkpoint(
        cls,
        path: str | Path,
        extractor: Callable[[SegmentSummary], SchemaExtraction],
        config: ContextConfig = DEFAULT_CONFIG,
        merger: Merger | None = None,
    ) -> "StreamState":
        return cls.from_checkpoint(
            json.loads(Path(path).read_text()), extractor, config=config, merger=merger
        )


def build_narrative(t: int, state: StreamState) -> NarrativeContext:
    """Assemble the narrative context for time ``t`` from the stream state.

    Before the first segment completes the context is empty; during the
    second segment only the recent summary exists; afterwards the long-term
    background covers everything before the recent segment.
    """
    config = state.config
    k = segment_index(t, config)
    if k == 0:
        return NarrativeContext(long_term=None, recent=None, rendered_text="")
    if k not in state.summaries:
        raise MissingSummary(k)
    recent = state.summaries[k]
    long_term = state.background_through(k - 1) if k >= 2 else None
    return NarrativeContext(
        long_term=long_term,
        recent=recent,
        rendered_text=render_narrative_text(long_term, recent),
    )


def build_context(
    t: int,
    frame_index: Mapping[int, str],
    audio_uri: str,
    state: StreamState,
    config: ContextConfig | None = None,
) -> ContextTriplet:
    """Compose the full (visual, audio, narrative) triplet for time ``t``."""
    cfg = config or state.config
    return ContextTriplet(
        t=t,
        visual=visual_window(t, frame_index, cfg),
        audio=audio_window(t, audio_uri, cfg),
        narrative=build_narrative(t, state),
    )
