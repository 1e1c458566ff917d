"""Loaders and writers for the JSON artifacts passed between pipeline stages.

Frame keys are serialized as ``"<clip_id>:<t>"`` in combined artifacts. All
writers emit sorted-key, 2-space-indented JSON with a trailing newline so the
CLI and the service produce byte-identical files for the same inputs.
"""

from __future__ import annotations

import json
from pathlib import Path

from .annotation import AggregatedFrameLabel, DocumentAggregate
from .context import ContextTriplet
from .dataset import SplitManifest


def write_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def frame_key_str(clip_id: str, t: int) -> str:
    return f"{clip_id}:{t}"


def parse_frame_key(key: str) -> tuple[str, int]:
    clip_id, t = key.rsplit(":", 1)
    return clip_id, int(t)


def load_manifest(path: str | Path) -> SplitManifest:
    return SplitManifest.from_dict(read_json(path))


def load_aggregates(paths_by_clip: dict[str, str]) -> dict[tuple[str, int], AggregatedFrameLabel]:
    """Combine per-clip aggregate files into one frame-key map."""
    out: dict[tuple[str, int], AggregatedFrameLabel] = {}
    for clip_id, path in paths_by_clip.items():
        agg = DocumentAggregate.from_dict(read_json(path))
        for t, label in agg.frames.items():
            out[(clip_id, t)] = label
    return out


def load_contexts(
    paths_by_clip: dict[str, str]
) -> tuple[dict[tuple[str, int], ContextTriplet], dict[tuple[str, int], str]]:
    """Combine per-clip context files; returns (triplets, cumulative texts)."""
    triplets: dict[tuple[str, int], ContextTriplet] = {}
    cumulative: dict[tuple[str, int], str] = {}
    for clip_id, path in paths_by_clip.items():
        data = read_json(path)
        for t, raw in data["triplets"].items():
            triplets[(clip_id, int(t))] = ContextTriplet.from_dict(raw)
        for t, text in data.get("cumulative", {}).items():
            cumulative[(clip_id, int(t))] = text
    return triplets, cumulative


def gold_map(aggregates: dict[tuple[str, int], AggregatedFrameLabel]) -> dict[tuple[str, int], str]:
    return {fk: agg.canonical_label.value for fk, agg in aggregates.items()}
