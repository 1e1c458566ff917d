"""Prompt rendering, training-record emission, and completion parsing.

Six prompt variants cover the ablation axes: a single current frame, the
progressive multi-frame window, audio on top, the full narrative-augmented
prompt, and the two text-only narrative forms (raw cumulative summaries vs
the compressed background). Rendered text is fixed byte-for-byte; tests pin
it against golden files.

Completions are parsed strictly first ('{"emotion":"<label>"}'); an optional
recovery pass scans noisy text for exactly one taxonomy label, for zero-shot
baselines that ignore the output format.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .context import ContextTriplet
from .errors import MissingAggregate, MissingContext, VariantInputMismatch
from .model_client import Attachment, ChatRequest
from .taxonomy import PROMPT_CATEGORY_LINE, CANONICAL_NAMES, EmotionLabel, parse_label


class PromptVariant(str, Enum):
    SINGLE_FRAME = "single_frame"
    MULTI_FRAME = "multi_frame"
    MULTI_FRAME_AUDIO = "multi_frame_audio"
    MULTI_FRAME_AUDIO_NARRATIVE = "multi_frame_audio_narrative"
    SUMMARY_ONLY = "summary_only"
    COMPRESSED_SUMMARY_ONLY = "compressed_summary_only"


OUTPUT_FORMAT = 'Output format:\n{"emotion":"<label>"}'

SINGLE_FRAME_TEMPLATE = (
    "<image>\n"
    "\n"
    "The image above is a frame from a movie clip.\n"
    "Determine the primary emotion you experience as a viewer\n"
    "based on the visual content of this frame.\n"
    "\n"
    f"Emotion categories: {PROMPT_CATEGORY_LINE}\n"
    "\n"
    "Select the single emotion that best describes your response.\n"
    "Only output the emotion label.\n"
    "\n"
    f"{OUTPUT_FORMAT}"
)

FRAMES_CAPTION = (
    "The frames above are key visual moments from the same movie clip "
    "arranged in chronological order."
)

VIEWER_QUESTION = "Determine the primary emotion experienced by the viewer."

CATEGORIES_AND_FORMAT = f"Emotion categories: {PROMPT_CATEGORY_LINE}\n\n{OUTPUT_FORMAT}"


@dataclass(frozen=True)
class TrainingRecord:
    """One supervised example: rendered user turn, gold assistant turn, media."""

    messages: tuple[dict, ...]
    images: tuple[str, ...] = ()
    audios: tuple[str, ...] = ()

    def __post_init__(self):
        text = "\n".join(m["content"] for m in self.messages if m["role"] == "user")
        if text.count("<image>") != len(self.images):
            raise ValueError("image placeholder count does not match images list")
        if text.count("<audio>") != len(self.audios):
            raise ValueError("audio placeholder count does not match audios list")

    def to_dict(self) -> dict:
        out: dict = {"messages": [dict(m) for m in self.messages]}
        if self.images:
            out["images"] = list(self.images)
        if self.audios:
            out["audios"] = list(self.audios)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class EmotionPrediction:
    """Parsed model answer; ``label`` is None exactly when parsing failed."""

    label: EmotionLabel | None
    raw_completion: str
    parse_status: str  # "strict" | "recovered" | "failed"


def _frame_lines(triplet: ContextTriplet) -> str:
    lines = []
    for ts, _uri in triplet.visual.frame_refs:
        offset = triplet.t - ts
        label = "Frame t (current)" if offset == 0 else f"Frame t-{offset}s"
        lines.append(f"{label}: <image>")
    return "\n".join(lines)


def _narrative_block(triplet: ContextTriplet) -> str:
    rendered = triplet.narrative.rendered_text
    if not rendered:
        return ""
    return f"[Narrative Context]\n{rendered}\n\n"


def render_text(
    variant: PromptVariant, triplet: ContextTriplet, cumulative_text: str | None = None
) -> str:
    """The user-turn text for a variant; raises on variant/input mismatch."""
    if variant is PromptVariant.SINGLE_FRAME:
        if not triplet.visual.frame_refs:
            raise VariantInputMismatch(variant.value, "no current frame in the visual window")
        return SINGLE_FRAME_TEMPLATE

    if variant in (PromptVariant.SUMMARY_ONLY, PromptVariant.COMPRESSED_SUMMARY_ONLY):
        if variant is PromptVariant.SUMMARY_ONLY:
            if not (cumulative_text and cumulative_text.strip()):
                raise VariantInputMismatch(variant.value, "cumulative summary text required")
            narrative = f"[Narrative Context]\n\n{cumulative_text}"
        else:
            if not triplet.narrative.rendered_text:
                raise VariantInputMismatch(variant.value, "compressed narrative context required")
            narrative = f"[Narrative Context]\n{triplet.narrative.rendered_text}"
        return f"{narrative}\n\n{VIEWER_QUESTION}\n\n{CATEGORIES_AND_FORMAT}"

    # multi-frame family
    if not triplet.visual.frame_refs:
        raise VariantInputMismatch(variant.value, "visual window is empty")
    frames = _frame_lines(triplet)
    audio_block = ""
    if variant in (PromptVariant.MULTI_FRAME_AUDIO, PromptVariant.MULTI_FRAME_AUDIO_NARRATIVE):
        if triplet.audio is None or triplet.audio.duration <= 0:
            raise VariantInputMismatch(variant.value, "audio window is empty")
        audio_block = "Audio segment: <audio>\n\n"
    narrative_block = ""
    if variant is PromptVariant.MULTI_FRAME_AUDIO_NARRATIVE:
        narrative_block = _narrative_block(triplet)
    return (
        f"{frames}\n"
        f"\n"
        f"{audio_block}"
        f"{FRAMES_CAPTION}\n"
        f"\n"
        f"{narrative_block}"
        f"{VIEWER_QUESTION}\n"
        f"\n"
        f"{CATEGORIES_AND_FORMAT}"
    )


def _media_for(variant: PromptVariant, triplet: ContextTriplet) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if variant is PromptVariant.SINGLE_FRAME:
        return (triplet.visual.uris[-1],), ()
    if variant in (PromptVariant.SUMMARY_ONLY, PromptVariant.COMPRESSED_SUMMARY_ONLY):
        return (), ()
    images = triplet.visual.uris
    audios: tuple[str, ...] = ()
    if variant in (PromptVariant.MULTI_FRAME_AUDIO, PromptVariant.MULTI_FRAME_AUDIO_NARRATIVE):
        audios = (triplet.audio.media_uri,)
    return images, audios


def render_prompt(
    variant: PromptVariant,
    triplet: ContextTriplet,
    gold: EmotionLabel | None = None,
    cumulative_text: str | None = None,
    rationale: str | None = None,
):
    """Render a prompt for one frame.

    With ``gold`` present the result is a :class:`TrainingRecord` (optionally
    carrying a human rationale after the JSON answer); without it, an
    inference :class:`ChatRequest`.
    """
    text = render_text(variant, triplet, cumulative_text=cumulative_text)
    images, audios = _media_for(variant, triplet)
    if gold is None:
        attachments = tuple(Attachment("image", uri) for uri in images) + tuple(
            Attachment("audio", uri) for uri in audios
        )
        return ChatRequest.user(text, attachments=attachments)
    answer = json.dumps({"emotion": gold.value}, separators=(",", ":"))
    if rationale:
        answer = f"{answer}\nrationale: {rationale}"
    return TrainingRecord(
        messages=(
            {"role": "user", "content": text},
            {"role": "assistant", "content": answer},
        ),
        images=images,
        audios=audios,
    )


# --- completion parsing ---------------------------------------------------------

_LABEL_SCAN = re.compile(r"\b(" + "|".join(CANONICAL_NAMES) + r")\b", re.IGNORECASE)


def parse_completion(raw: str, allow_recovery: bool = True) -> EmotionPrediction:
    """Parse a completion into a label.

    Strict first: the completion must be exactly the one-key JSON object with
    a valid lowercase label. Recovery (when enabled) accepts noisy text
    containing exactly one distinct taxonomy word.
    """
    stripped = raw.strip()
    try:
        data = json.loads(stripped)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, dict) and set(data.keys()) == {"emotion"}:
        value = data["emotion"]
        if isinstance(value, str) and value in CANONICAL_NAMES:
            return EmotionPrediction(EmotionLabel(value), raw, "strict")
    if allow_recovery:
        found = {m.lower() for m in _LABEL_SCAN.findall(raw)}
        if len(found) == 1:
            return EmotionPrediction(EmotionLabel(found.pop()), raw, "recovered")
    return EmotionPrediction(None, raw, "failed")


# --- training-set emission ---------------------------------------------------------


def emit_training_set(
    manifest,
    aggregates: dict,
    contexts: dict,
    variant: PromptVariant,
    rationale_fraction: float,
    seed: int,
    out_path: str | Path,
    rationales: dict | None = None,
    cumulative_texts: dict | None = None,
    split: str = "train",
) -> dict:
    """Write one JSON-lines training record per manifest frame of ``split``.

    A seeded uniform sample of ``rationale_fraction`` of the frames (among
    those with rationale text available) additionally carries the human
    rationale appended to the assistant turn.
    """
    frame_keys = sorted(
        (clip_id, t) for clip_id, t, frame_split in manifest.frames if frame_split == split
    )
    rationales = rationales or {}
    cumulative_texts = cumulative_texts or {}

    n_rationale = int(round(len(frame_keys) * rationale_fraction))
    eligible = [fk for fk in frame_keys if rationales.get(fk)]
    n_rationale = min(n_rationale, len(eligible))
    rng = random.Random(seed)
    with_rationale = set(rng.sample(eligible, n_rationale)) if n_rationale else set()

    out_path = Path(out_path)
    written = 0
    with open(out_path, "w") as f:
        for fk in frame_keys:
            if fk not in aggregates:
                raise MissingAggregate(fk)
            if fk not in contexts:
                raise MissingContext(fk)
            record = render_prompt(
                variant,
                contexts[fk],
                gold=aggregates[fk].canonical_label,
                cumulative_text=cumulative_texts.get(fk),
                rationale=rationales.get(fk) if fk in with_rationale else None,
            )
            f.write(record.to_json() + "\n")
            written += 1
    return {
        "path": str(out_path),
        "records": written,
        "rationale_records": len(with_rationale),
        "variant": variant.value,
        "seed": seed,
    }
