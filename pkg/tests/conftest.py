"""Shared fixtures: document builders, the trailer fixture stream, and a
synthetic on-disk corpus for service tests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from emoview.context import AudioWindow, ContextTriplet, NarrativeContext, StreamState, VisualWindow
from emoview.fixtures import fixture_extractor, fixture_summaries, load_trailer_fixture
from emoview.taxonomy import CANONICAL_NAMES

# A 1x1 white JPEG; enough for frame-serving tests.
TINY_JPEG = bytes.fromhex(
    "ffd8ffe000104a46494600010100000100010000ffdb004300080606070605080707"
    "07090908080a0c140d0c0b0b0c1912130f141d1a1f1e1d1a1c1c20242e2720222c23"
    "1c1c2837292c30313434341f27393d38323c2e333432ffc0000b08000100010101"
    "1100ffc40014000100000000000000000000000000000008ffc40014100100000000"
    "00000000000000000000000000ffda0008010100003f00548bf0ffd9"
)


def make_doc(
    frames: dict[int, list[tuple]],
    mode: str = "simple",
    video_name: str = "clip.mp4",
    fps: float = 1,
) -> str:
    """Build annotation-document JSON from {t: [(annotator, scores[, rationale])]}."""
    frames_json = {}
    for t, records in frames.items():
        entries = []
        for record in records:
            annotator, scores = record[0], record[1]
            entry = {"annotator": annotator, "scores": scores}
            if len(record) > 2 and record[2] is not None:
                entry["rationale"] = record[2]
            entries.append(entry)
        frames_json[str(t)] = entries
    return json.dumps(
        {
            "schema_version": "1.0",
            "mode": mode,
            "emotions": list(CANONICAL_NAMES),
            "confidence_scale": {"min": 0, "max": 5, "zero_means": "not_selected"},
            "video": {"name": video_name, "fps": fps},
            "frames": frames_json,
        }
    )


@pytest.fixture
def trailer_fixture():
    return load_trailer_fixture()


@pytest.fixture
def trailer_state(trailer_fixture) -> StreamState:
    state = StreamState(fixture_extractor(trailer_fixture))
    for summary in fixture_summaries(trailer_fixture):
        state.add_summary(summary)
    return state


def fixture_frame_index(clip_id: str = "avatar_fpv", n: int = 200) -> dict[int, str]:
    return {t: f"corpus/avatar/{clip_id}/frames/{clip_id}_{t}.jpg" for t in range(n)}


@pytest.fixture
def golden_triplet(trailer_state) -> ContextTriplet:
    """The fixed triplet (t=45) every prompt golden is rendered against."""
    from emoview.context import build_context

    return build_context(45, fixture_frame_index(), "corpus/avatar/avatar_fpv/media.mp4", trailer_state)


def simple_triplet(clip_id: str, t: int, media_uri: str = "media.mp4") -> ContextTriplet:
    """Minimal triplet for eval-scale tests: one frame, empty narrative."""
    return ContextTriplet(
        t=t,
        visual=VisualWindow(frame_refs=((t, f"frames/{clip_id}_{t}.jpg"),)),
        audio=AudioWindow(start_seconds=max(0, t - 10), end_seconds=max(t, 1), media_uri=media_uri),
        narrative=NarrativeContext(long_term=None, recent=None, rendered_text=""),
    )


def build_corpus(root: Path, clips: dict[str, tuple[str, int]]) -> Path:
    """Materialize corpus/<movie>/<clip>/{clip.json, frames/} on disk.

    ``clips`` maps clip_id -> (movie_id, duration_seconds).
    """
    for clip_id, (movie_id, duration) in clips.items():
        clip_dir = root / movie_id / clip_id
        (clip_dir / "frames").mkdir(parents=True)
        record = {
            "clip_id": clip_id,
            "movie_id": movie_id,
            "domain": "raw",
            "duration_seconds": duration,
            "media_uri": str(clip_dir / "media.mp4"),
        }
        (clip_dir / "clip.json").write_text(json.dumps(record))
        for t in range(duration):
            (clip_dir / "frames" / f"{clip_id}_{t}.jpg").write_bytes(TINY_JPEG)
    return root
