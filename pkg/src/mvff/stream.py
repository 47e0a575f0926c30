"""Synchronized multi-view feature streams with per-frame importance labels.

A :class:`Scene` holds one :class:`VideoStream` per camera view. All views
share a frame timeline, so frame ``t`` of every view was captured at the same
instant. Scenes can be synthesized from an event list or read from and
written to a small on-disk format (a JSON manifest plus raw float32 feature
files and one-byte-per-frame label files).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

# Activity prototypes are drawn from a fixed stream so that every generated
# scene shares one vocabulary of event appearances.
_VOCAB_SEED = 20200731
VOCAB_SIZE = 8


class SceneError(ValueError):
    """Base class for scene construction and I/O errors."""


class EventRangeError(SceneError):
    pass


class SceneFormatError(SceneError):
    pass


class DimensionMismatchError(SceneFormatError):
    pass


class TruncatedFeatureError(SceneFormatError):
    pass


class LabelCountError(SceneFormatError):
    pass


@dataclass(frozen=True)
class FrameRecord:
    index: int
    feature: np.ndarray
    important: bool


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class VideoStream:
    """One view's frames, stored column-wise.

    ``features`` is an ``(L, D)`` float32 array and ``labels`` a length-``L``
    boolean array. Both are read-only.
    """

    def __init__(self, view_id: int, features: np.ndarray, labels: np.ndarray):
        features = np.asarray(features, dtype=np.float32)
        labels = np.asarray(labels, dtype=bool)
        if features.ndim != 2:
            raise SceneError(f"view {view_id}: features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise LabelCountError(
                f"view {view_id}: {labels.shape[0]} labels for {features.shape[0]} frames")
        self.view_id = int(view_id)
        self.features = _frozen(features)
        self.labels = _frozen(labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, t: int) -> FrameRecord:
        return FrameRecord(int(t), self.features[t], bool(self.labels[t]))

    @property
    def frames(self) -> Iterator[FrameRecord]:
        return (self[t] for t in range(len(self)))

    def segment(self, start: int, stop: int) -> "VideoStream":
        """Frames ``[start, stop)``; shares memory with this stream."""
        return VideoStream(self.view_id, self.features[start:stop], self.labels[start:stop])


class Scene:
    """N synchronized views plus the union ground truth."""

    def __init__(self, streams: Sequence[VideoStream], global_truth: np.ndarray | None = None):
        if not streams:
            raise SceneError("a scene needs at least one view")
        lengths = {len(s) for s in streams}
        if len(lengths) != 1:
            raise SceneError(f"views are not synchronized: lengths {sorted(lengths)}")
        dims = {s.dim for s in streams}
        if len(dims) != 1:
            raise DimensionMismatchError(f"views disagree on feature dimension: {sorted(dims)}")
        for k, s in enumerate(streams):
            if s.view_id != k:
                raise SceneError(f"stream at position {k} has view_id {s.view_id}")
        self.streams = tuple(streams)
        union = np.logical_or.reduce([s.labels for s in streams])
        if global_truth is not None:
            global_truth = np.asarray(global_truth, dtype=bool)
            if not np.array_equal(global_truth, union):
                raise SceneError("global truth is not the union of per-view labels")
        self.global_truth = _frozen(union)

    @property
    def n_views(self) -> int:
        return len(self.streams)

    @property
    def length(self) -> int:
        return len(self.streams[0])

    @property
    def dim(self) -> int:
        return self.streams[0].dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scene) or other.n_views != self.n_views:
            return False
        return all(np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)
                   for a, b in zip(self.streams, other.streams))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"Scene(n_views={self.n_views}, length={self.length}, dim={self.dim}, "
                f"important={int(self.global_truth.sum())})")


# -------------------------------------------------------------- synthesis

def activity_vocabulary(dim: int) -> np.ndarray:
    """Unit-norm appearance direction for each activity type, ``(VOCAB_SIZE, dim)``."""
    v = np.random.default_rng(_VOCAB_SEED + dim).standard_normal((VOCAB_SIZE, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def camera_backgrounds(n_views: int, dim: int) -> np.ndarray:
    """Fixed unit-variance background of each camera, ``(n_views, dim)``.

    Camera ``v`` has the same background in every generated scene, the way
    a fixed camera rig films many scenes from the same spots.
    """
    rng = np.random.default_rng([_VOCAB_SEED, dim, 1])
    return rng.standard_normal((max(n_views, 1), dim))


def _parse_event(ev, k: int, n_views: int, length: int) -> tuple[int, int, tuple[int, ...], int]:
    if len(ev) not in (3, 4):
        raise EventRangeError(f"event {k}: expected (start, end, views[, activity]), got {ev!r}")
    start, end, views = int(ev[0]), int(ev[1]), tuple(sorted({int(v) for v in ev[2]}))
    activity = int(ev[3]) if len(ev) == 4 else k % VOCAB_SIZE
    if not 0 <= start < end <= length:
        raise EventRangeError(f"event {k}: interval [{start}, {end}) not inside [0, {length})")
    if not views:
        raise EventRangeError(f"event {k}: names no views")
    bad = [v for v in views if not 0 <= v < n_views]
    if bad:
        raise EventRangeError(f"event {k}: views {bad} outside 0..{n_views - 1}")
    return start, end, views, activity % VOCAB_SIZE


def generate_scene(n_views: int, length: int, dim: int = 16,
                   event_spec: Sequence = (), noise_sigma: float = 0.5, seed: int = 0, *,
                   background_scale: float = 3.5, event_scale: float = 12.0,
                   event_weight: float = 0.85, view_jitter: float = 0.5,
                   scene_jitter: float = 0.5) -> Scene:
    """Synthesize a scene from a list of events.

    View ``v`` has a static background: its camera's fixed background
    (:func:`camera_backgrounds`, scaled by ``background_scale``) plus a
    per-scene offset of std ``scene_jitter``. An event ``(start, end, views[,
    activity])`` blends the named views, during ``[start, end)``, toward a
    shared activity appearance: the frame becomes
    ``(1 - event_weight) * background + event_weight * (event_scale * proto
    + jitter)``, where ``jitter`` is a small per-view offset. Overlapping
    events on one view are averaged. Every frame then gets i.i.d. Gaussian
    noise with std ``noise_sigma``. Frames inside an event are important in
    exactly the named views.
    """
    if n_views < 1:
        raise SceneError(f"n_views must be >= 1, got {n_views}")
    if length < 1 or dim < 1:
        raise SceneError(f"length and dim must be positive, got {length}, {dim}")
    events = [_parse_event(ev, k, n_views, length) for k, ev in enumerate(event_spec)]
    rng = np.random.default_rng(seed)
    vocab = activity_vocabulary(dim)
    backgrounds = (camera_backgrounds(n_views, dim) * background_scale
                   + rng.standard_normal((n_views, dim)) * scene_jitter)
    jitters = rng.standard_normal((len(events), n_views, dim)) * view_jitter
    noise = rng.standard_normal((n_views, length, dim)) * noise_sigma

    streams = []
    for v in range(n_views):
        content = np.zeros((length, dim))
        count = np.zeros(length)
        for k, (start, end, views, act) in enumerate(events):
            if v in views:
                content[start:end] += event_scale * vocab[act] + jitters[k, v]
                count[start:end] += 1
        labels = count > 0
        feats = np.repeat(backgrounds[v][None, :], length, axis=0)
        blend = content[labels] / count[labels, None]
        feats[labels] = (1.0 - event_weight) * feats[labels] + event_weight * blend
        feats += noise[v]
        streams.append(VideoStream(v, feats, labels))
    return Scene(streams)


def random_event_spec(n_views: int, length: int, rng: np.random.Generator, *,
                      density: float = 0.3, min_len: int = 60, max_len: int = 300,
                      min_views: int = 2, max_views: int = 3,
                      bursts: tuple[int, int, int, int] | None = None,
                      ) -> list[tuple[int, int, tuple[int, ...], int]]:
    """Draw a random event list covering roughly ``density`` of the timeline.

    Events are multi-view (each names ``min_views..max_views`` views) so that
    overlapping cameras see the same activity. With ``bursts = (on_min,
    on_max, off_min, off_max)`` each drawn episode is split into short
    bursts of the same activity separated by quiet gaps, both of random
    length in the given inclusive ranges.
    """
    max_views = min(max_views, n_views)
    min_views = min(min_views, max_views)
    events = []
    covered = np.zeros(length, dtype=bool)
    for _ in range(1000):
        if covered.mean() >= density:
            break
        span = int(rng.integers(min_len, max_len + 1))
        span = min(span, length)
        start = int(rng.integers(0, length - span + 1))
        k = int(rng.integers(min_views, max_views + 1))
        views = tuple(sorted(rng.choice(n_views, size=k, replace=False).tolist()))
        act = int(rng.integers(VOCAB_SIZE))
        covered[start:start + span] = True
        if bursts is None:
            events.append((start, start + span, views, act))
            continue
        on_min, on_max, off_min, off_max = bursts
        t = start
        while t < start + span:
            end = min(t + int(rng.integers(on_min, on_max + 1)), start + span)
            events.append((t, end, views, act))
            t = end + int(rng.integers(off_min, off_max + 1))
    return events


# --------------------------------------------------------------------- I/O

MANIFEST = "manifest.json"


def save_scene(scene: Scene, directory: str | os.PathLike) -> Path:
    """Write ``scene`` under ``directory`` and return the manifest path."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        views = []
        for s in scene.streams:
            fname, lname = f"v{s.view_id}.f32", f"v{s.view_id}.lab"
            s.features.astype("<f4").tofile(d / fname)
            s.labels.astype(np.uint8).tofile(d / lname)
            views.append({"view_id": s.view_id, "features": fname, "labels": lname})
        scene.global_truth.astype(np.uint8).tofile(d / "global.lab")
        manifest = {"n_views": scene.n_views, "length": scene.length, "dim": scene.dim,
                    "views": views, "global_truth": "global.lab"}
        path = d / MANIFEST
        path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write scene to {exc.filename or d}: {exc.strerror}") from exc
    return path


def _read_labels(path: Path, length: int) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size != length:
        raise LabelCountError(f"{path}: {raw.size} labels, manifest says {length} frames")
    if np.any(raw > 1):
        raise SceneFormatError(f"{path}: label bytes must be 0x00 or 0x01")
    return raw.astype(bool)


def _read_features(path: Path, length: int, dim: int) -> np.ndarray:
    nbytes = path.stat().st_size
    if nbytes % 4:
        raise TruncatedFeatureError(f"{path}: {nbytes} bytes is not a whole number of float32")
    n = nbytes // 4
    if n != length * dim:
        if n % length == 0:
            raise DimensionMismatchError(
                f"{path}: holds {n // length} scalars per frame, manifest says dim={dim}")
        if n < length * dim:
            raise TruncatedFeatureError(f"{path}: {n} scalars, expected {length * dim}")
        raise SceneFormatError(f"{path}: {n} scalars, expected {length * dim}")
    return np.fromfile(path, dtype="<f4").reshape(length, dim)


def load_scene(manifest_path: str | os.PathLike) -> Scene:
    """Read a scene written by :func:`save_scene`."""
    mpath = Path(manifest_path)
    if mpath.is_dir():
        mpath = mpath / MANIFEST
    try:
        m = json.loads(mpath.read_text())
        n, length, dim = int(m["n_views"]), int(m["length"]), int(m["dim"])
        views = sorted(m["views"], key=lambda v: v["view_id"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"{mpath}: malformed manifest ({exc})") from exc
    if len(views) != n:
        raise SceneFormatError(f"{mpath}: lists {len(views)} views, n_views={n}")
    root = mpath.parent
    streams = [VideoStream(int(v["view_id"]),
                           _read_features(root / v["features"], length, dim),
                           _read_labels(root / v["labels"], length))
               for v in views]
    truth = _read_labels(root / m["global_truth"], length)
    return Scene(streams, truth)
