"""Corpus ingestion: clip records, 1 FPS frame sampling, temporal offset
estimation between screen-capture and source footage, and leakage-free
movie-level train/test splits.

Corpus layout on disk::

    corpus/<movie_id>/<clip_id>/clip.json
    corpus/<movie_id>/<clip_id>/frames/<clip_id>_<t>.jpg
    corpus/<movie_id>/<clip_id>/media.<ext>

Frame extraction shells out to a media decoder (ffmpeg by default, binary
path configurable); everything else is pure bookkeeping so the pipeline can
be tested without real media.
"""

from __future__ import annotations

import json
import random
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    LowConfidenceAlignment,
    SingleMovieCorpus,
    UndecodableMedia,
    ZeroDuration,
)

CAMERA_HEIGHTS_M = (0.8, 1.3)
DISTANCES = ("near", "middle", "far")
ANGLES = ("left", "center", "right")
LIGHTING = ("day", "night", "light_on", "light_off")

ALIGNMENT_THRESHOLD = 0.6
ALIGNMENT_PATCH = 32  # frames are downsampled to 32x32 grayscale before matching


@dataclass(frozen=True)
class ViewingConfig:
    """Physical recording setup for a screen-capture clip."""

    camera_height_m: float
    distance: str
    angle: str
    lighting: str

    def __post_init__(self):
        if self.camera_height_m not in CAMERA_HEIGHTS_M:
            raise ValueError(f"camera_height_m must be one of {CAMERA_HEIGHTS_M}")
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")
        if self.angle not in ANGLES:
            raise ValueError(f"angle must be one of {ANGLES}")
        if self.lighting not in LIGHTING:
            raise ValueError(f"lighting must be one of {LIGHTING}")

    def to_dict(self) -> dict:
        return {
            "camera_height_m": self.camera_height_m,
            "distance": self.distance,
            "angle": self.angle,
            "lighting": self.lighting,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewingConfig":
        return cls(
            camera_height_m=float(d["camera_height_m"]),
            distance=d["distance"],
            angle=d["angle"],
            lighting=d["lighting"],
        )


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    movie_id: str
    domain: str  # "raw" | "fpv"
    duration_seconds: float
    media_uri: str
    viewing: ViewingConfig | None = None
    alignment_offset_seconds: float | None = None

    def __post_init__(self):
        if self.domain not in ("raw", "fpv"):
            raise ValueError(f"domain must be raw or fpv, got {self.domain!r}")
        if self.domain == "fpv" and self.viewing is None:
            raise ValueError("fpv clips require a viewing configuration")
        if self.domain == "raw" and self.viewing is not None:
            raise ValueError("raw clips carry no viewing configuration")
        if self.domain == "raw" and self.alignment_offset_seconds is not None:
            raise ValueError("raw clips carry no alignment offset")
        if self.duration_seconds <= 0:
            raise ValueError("duration must be positive")

    def to_dict(self) -> dict:
        out: dict = {
            "clip_id": self.clip_id,
            "movie_id": self.movie_id,
            "domain": self.domain,
            "duration_seconds": self.duration_seconds,
            "media_uri": self.media_uri,
        }
        if self.viewing is not None:
            out["viewing"] = self.viewing.to_dict()
        if self.alignment_offset_seconds is not None:
            out["alignment_offset_seconds"] = self.alignment_offset_seconds
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ClipRecord":
        return cls(
            clip_id=d["clip_id"],
            movie_id=d["movie_id"],
            domain=d["domain"],
            duration_seconds=float(d["duration_seconds"]),
            media_uri=d["media_uri"],
            viewing=ViewingConfig.from_dict(d["viewing"]) if d.get("viewing") else None,
            alignment_offset_seconds=d.get("alignment_offset_seconds"),
        )


# --- frame sampling ------------------------------------------------------------------


def sample_frames(clip: ClipRecord, fps: float = 1.0, frames_dir: str | None = None) -> dict[int, str]:
    """Timestamp-to-URI frame index for uniform sampling at ``fps``.

    At 1 FPS the timestamps are the integer seconds 0..floor(duration)-1;
    frames are named ``<clip_id>_<t>.jpg``. Decoding itself is done by
    :func:`extract_frames`.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    count = int(clip.duration_seconds * fps)
    if count == 0:
        raise ZeroDuration(clip.media_uri, clip.duration_seconds)
    base = frames_dir if frames_dir is not None else str(Path(clip.media_uri).parent / "frames")
    return {t: f"{base}/{clip.clip_id}_{t}.jpg" for t in range(count)}


def extract_frames(
    clip: ClipRecord,
    out_dir: str | Path,
    fps: float = 1.0,
    decoder: str = "ffmpeg",
) -> dict[int, str]:
    """Shell out to the decoder and materialize the sampled frames on disk."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = sample_frames(clip, fps=fps, frames_dir=str(out_dir))
    cmd = [
        decoder,
        "-y",
        "-i",
        clip.media_uri,
        "-vf",
        f"fps={fps}",
        "-start_number",
        "0",
        str(out_dir / f"{clip.clip_id}_%d.jpg"),
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise UndecodableMedia(clip.media_uri, f"decoder not found: {exc}")
    if proc.returncode != 0:
        raise UndecodableMedia(clip.media_uri, proc.stderr.strip()[-500:])
    missing = [t for t, uri in index.items() if not Path(uri).exists()]
    if missing:
        raise UndecodableMedia(clip.media_uri, f"decoder produced no frame for t={missing[:5]}")
    return index


# --- temporal alignment ----------------------------------------------------------------


@dataclass(frozen=True)
class AlignmentEstimate:
    offset_seconds: int
    similarity: float

    def to_dict(self) -> dict:
        return {"offset_seconds": self.offset_seconds, "similarity": round(self.similarity, 6)}


def _downsample(frames: np.ndarray, size: int = ALIGNMENT_PATCH) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 4:  # collapse a trailing channel axis
        frames = frames.mean(axis=-1)
    n, h, w = frames.shape
    if (h, w) == (size, size):
        return frames
    # Block-mean downsampling; avoids an image-library dependency here.
    ys = (np.arange(size + 1) * h / size).astype(int)
    xs = (np.arange(size + 1) * w / size).astype(int)
    out = np.empty((n, size, size))
    for i in range(size):
        for j in range(size):
            block = frames[:, ys[i] : max(ys[i + 1], ys[i] + 1), xs[j] : max(xs[j + 1], xs[j] + 1)]
            out[:, i, j] = block.mean(axis=(1, 2))
    return out


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float((a * b).sum() / denom)


def estimate_alignment(
    fpv_frames: np.ndarray,
    raw_frames: np.ndarray,
    search_window_seconds: int = 10,
    threshold: float = ALIGNMENT_THRESHOLD,
) -> AlignmentEstimate:
    """Integer-second offset between a screen capture and its source clip.

    Frames are 1 FPS grayscale sequences. The returned offset means
    ``fpv[i]`` shows the same content as ``raw[i + offset]``. Exhaustive
    search maximizes the mean normalized cross-correlation of downsampled
    frames over the overlap; below ``threshold`` the estimate is rejected and
    a manual offset is required.
    """
    fpv = _downsample(fpv_frames)
    raw = _downsample(raw_frames)
    best_offset, best_score = 0, -2.0
    for offset in sorted(range(-search_window_seconds, search_window_seconds + 1), key=abs):
        scores = []
        for i in range(len(fpv)):
            j = i + offset
            if 0 <= j < len(raw):
                scores.append(_ncc(fpv[i], raw[j]))
        if not scores:
            continue
        score = float(np.mean(scores))
        if score > best_score + 1e-12:
            best_offset, best_score = offset, score
    if best_score < threshold:
        raise LowConfidenceAlignment(best_score, threshold)
    return AlignmentEstimate(offset_seconds=best_offset, similarity=best_score)


def align_clip(
    fpv_clip: ClipRecord,
    fpv_frames: np.ndarray,
    raw_frames: np.ndarray,
    search_window_seconds: int = 10,
) -> AlignmentEstimate:
    """Alignment for a clip; a manual offset on the record always wins."""
    if fpv_clip.alignment_offset_seconds is not None:
        return AlignmentEstimate(
            offset_seconds=int(fpv_clip.alignment_offset_seconds), similarity=1.0
        )
    return estimate_alignment(fpv_frames, raw_frames, search_window_seconds)


# --- movie-level splits ---------------------------------------------------------------


@dataclass(frozen=True)
class SplitManifest:
    """Movie-level partition: no movie contributes frames to both sides."""

    train_movies: frozenset[str]
    test_movies: frozenset[str]
    frames: tuple[tuple[str, int, str], ...]  # (clip_id, timestamp, split)
    seed: int

    def to_dict(self) -> dict:
        return {
            "train_movies": sorted(self.train_movies),
            "test_movies": sorted(self.test_movies),
            "frames": [[c, t, s] for c, t, s in self.frames],
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(
            train_movies=frozenset(d["train_movies"]),
            test_movies=frozenset(d["test_movies"]),
            frames=tuple((c, int(t), s) for c, t, s in d["frames"]),
            seed=int(d["seed"]),
        )


def make_split(clips: list[ClipRecord], test_fraction: float, seed: int) -> SplitManifest:
    """Seeded movie-level split; every clip and frame of a movie shares its side."""
    movies = sorted({c.movie_id for c in clips})
    if len(movies) < 2:
        raise SingleMovieCorpus(len(movies))
    rng = random.Random(seed)
    shuffled = movies[:]
    rng.shuffle(shuffled)
    n_test = int(round(len(movies) * test_fraction))
    n_test = min(max(n_test, 1), len(movies) - 1)
    test_movies = frozenset(shuffled[:n_test])
    train_movies = frozenset(shuffled[n_test:])

    frames: list[tuple[str, int, str]] = []
    for clip in sorted(clips, key=lambda c: c.clip_id):
        split = "test" if clip.movie_id in test_movies else "train"
        for t in sample_frames(clip):
            frames.append((clip.clip_id, t, split))
    return SplitManifest(
        train_movies=train_movies,
        test_movies=test_movies,
        frames=tuple(frames),
        seed=seed,
    )
