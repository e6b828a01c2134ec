"""Video decode: metadata probing and streaming frame access.

Frames are produced as BGR uint8 arrays in decode order. Decoding is
streaming; nothing here buffers the whole file.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import cv2
import numpy as np

from .errors import EmptyVideo, UnreadableVideo


@dataclass(frozen=True)
class VideoMeta:
    path: str
    fps: float
    frame_count: int
    width: int
    height: int

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps


@dataclass(frozen=True)
class Frame:
    index: int
    timestamp_s: float
    image: np.ndarray


def probe_video(path: str | Path, fps_fallback: float = 30.0) -> VideoMeta:
    """Read container metadata without decoding frames.

    Containers that report no usable fps fall back to ``fps_fallback``.
    Raises UnreadableVideo when the file is absent or will not open and
    EmptyVideo when it opens but holds zero frames.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableVideo(f"video file not found: {path}")
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise UnreadableVideo(f"could not open video: {path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        width = int(cap.get(cv2.CAP_PROP_FRAME_WIDTH))
        height = int(cap.get(cv2.CAP_PROP_FRAME_HEIGHT))
        if frame_count <= 0:
            # some containers misreport; trust an actual decode attempt
            ok, _ = cap.read()
            if not ok:
                raise EmptyVideo(f"video has no frames: {path}")
            raise UnreadableVideo(f"video reports no frame count but decodes: {path}")
        if not fps or fps <= 0 or math.isnan(fps):
            fps = fps_fallback
        if width <= 0 or height <= 0:
            raise UnreadableVideo(f"video reports invalid dimensions {width}x{height}: {path}")
        return VideoMeta(str(path), float(fps), frame_count, width, height)
    finally:
        cap.release()


def iter_frames(path: str | Path, start: int = 0) -> Iterator[Frame]:
    """Stream frames from ``start`` until the decoder runs out.

    Each call opens its own capture, so independent iterations never share
    decode state. Timestamps come from the container fps (or the probe
    fallback when fps is unreported).
    """
    meta = probe_video(path)
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise UnreadableVideo(f"could not open video: {path}")
        if start > 0:
            cap.set(cv2.CAP_PROP_POS_FRAMES, start)
        index = start
        while True:
            ok, image = cap.read()
            if not ok:
                break
            yield Frame(index=index, timestamp_s=index / meta.fps, image=image)
            index += 1
    finally:
        cap.release()


def sample_frames(frames: Iterator[Frame], every_n: int) -> Iterator[Frame]:
    """Keep frames whose index is a multiple of ``every_n``."""
    if every_n < 1:
        raise ValueError(f"every_n must be >= 1, got {every_n}")
    for frame in frames:
        if frame.index % every_n == 0:
            yield frame


def iter_sampled(path: str | Path, every_n: int) -> Iterator[Frame]:
    """Stream every ``every_n``-th frame, skipping the rest cheaply.

    Skipped frames are advanced with grab() so the decoder never converts
    them to arrays.
    """
    if every_n < 1:
        raise ValueError(f"every_n must be >= 1, got {every_n}")
    meta = probe_video(path)
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise UnreadableVideo(f"could not open video: {path}")
        index = 0
        while True:
            if index % every_n == 0:
                ok, image = cap.read()
                if not ok:
                    break
                yield Frame(index=index, timestamp_s=index / meta.fps, image=image)
            else:
                if not cap.grab():
                    break
            index += 1
    finally:
        cap.release()
