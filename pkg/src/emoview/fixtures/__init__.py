"""Bundled fixtures: a trailer-style segment corpus with canned summaries and
schema extractions, used by the deterministic mock backend and the test suite."""

from __future__ import annotations

import json
from importlib import resources

from ..context import SchemaExtraction, SegmentSummary


def load_trailer_fixture() -> dict:
    data = resources.files(__package__).joinpath("avatar_trailer.json").read_text()
    return json.loads(data)


def fixture_summaries(fixture: dict | None = None) -> list[SegmentSummary]:
    fixture = fixture or load_trailer_fixture()
    return [
        SegmentSummary(
            segment_index=seg["segment_index"],
            text=seg["summary"],
            start_seconds=seg["start_seconds"],
            end_seconds=seg["end_seconds"],
            word_count=len(seg["summary"].split()),
        )
        for seg in fixture["segments"]
    ]


def fixture_extractions(fixture: dict | None = None) -> dict[int, SchemaExtraction]:
    fixture = fixture or load_trailer_fixture()
    return {
        seg["segment_index"]: SchemaExtraction.from_dict(seg["extraction"])
        for seg in fixture["segments"]
    }


def fixture_extractor(fixture: dict | None = None):
    """Lookup-table G: maps a fixture summary to its canned extraction."""
    fixture = fixture or load_trailer_fixture()
    by_text = {seg["summary"]: SchemaExtraction.from_dict(seg["extraction"])
               for seg in fixture["segments"]}
    degenerate = fixture["degenerate"]
    by_text[degenerate["summary"]] = SchemaExtraction.from_dict(degenerate["extraction"])

    def extract(summary: SegmentSummary) -> SchemaExtraction:
        try:
            return by_text[summary.text]
        except KeyError:
            raise KeyError(f"no canned extraction for summary of segment {summary.segment_index}")

    return extract
