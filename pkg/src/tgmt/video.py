"""Frame sampling and cropping for video classification.

Covers the training-side sampling (contiguous segments, one random frame
each; random square-ish crop windows resized to a fixed size) and the
test-side protocol (25 evenly spaced frames, 10 crops each, probabilities
averaged over all 250 views).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import CropError, FormatError, IoError, SamplingError, ShapeError


@dataclass
class VideoClip:
    """A labeled stack of frames, each [C, H, W], stored as [T, C, H, W]."""

    frames: np.ndarray
    label: int
    id: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4 or self.frames.shape[0] < 1:
            raise ShapeError(f"clip needs frames [T,C,H,W], got {self.frames.shape}")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class CropSpec:
    top: int
    left: int
    window_h: int
    window_w: int
    output_size: int
    flip: bool = False


@dataclass(frozen=True)
class CropConfig:
    """Window range and output size for training crops. Defaults match the
    16x16 synthetic frames; 168/256/224 are the full-scale counterparts."""

    min_side: int = 10
    max_side: int = 16
    output_size: int = 12

    def __post_init__(self):
        if self.min_side < 1 or self.min_side > self.max_side or self.output_size < 1:
            raise CropError(
                f"bad crop config [{self.min_side}, {self.max_side}] -> {self.output_size}"
            )


def sample_segments(frame_count: int, k: int, rng: np.random.Generator) -> list:
    """One uniformly random frame index from each of k contiguous segments.

    Segments are near-equal; the first frame_count % k segments take the
    extra frame. Returned indices are strictly increasing.
    """
    if k < 1 or frame_count < k:
        raise SamplingError(f"cannot cut {frame_count} frames into {k} segments")
    base, extra = divmod(frame_count, k)
    indices = []
    start = 0
    for seg in range(k):
        size = base + (1 if seg < extra else 0)
        indices.append(start + int(rng.integers(size)))
        start += size
    return indices


def segment_bounds(frame_count: int, k: int) -> list:
    """[start, end] inclusive bounds of each segment, matching sample_segments."""
    if k < 1 or frame_count < k:
        raise SamplingError(f"cannot cut {frame_count} frames into {k} segments")
    base, extra = divmod(frame_count, k)
    bounds = []
    start = 0
    for seg in range(k):
        size = base + (1 if seg < extra else 0)
        bounds.append((start, start + size - 1))
        start += size
    return bounds


def evenly_spaced(frame_count: int, n: int) -> list:
    """n deterministic indices: floor(i*(L-1)/(n-1)); the middle frame for n=1."""
    if frame_count < 1 or n < 1:
        raise SamplingError(f"need frame_count >= 1 and n >= 1, got {frame_count}, {n}")
    if n == 1:
        return [(frame_count - 1) // 2]
    return [i * (frame_count - 1) // (n - 1) for i in range(n)]


def random_window(
    frame_h: int,
    frame_w: int,
    min_side: int,
    max_side: int,
    output_size: int,
    rng: np.random.Generator,
) -> CropSpec:
    """Crop window with height and width drawn independently and uniformly
    from [min_side, max_side], placed uniformly inside the frame."""
    if min_side < 1 or min_side > max_side:
        raise CropError(f"bad side range [{min_side}, {max_side}]")
    if max_side > min(frame_h, frame_w):
        raise CropError(
            f"max side {max_side} exceeds frame {frame_h}x{frame_w}"
        )
    if output_size < 1:
        raise CropError(f"output_size must be positive, got {output_size}")
    window_h = int(rng.integers(min_side, max_side + 1))
    window_w = int(rng.integers(min_side, max_side + 1))
    top = int(rng.integers(frame_h - window_h + 1))
    left = int(rng.integers(frame_w - window_w + 1))
    return CropSpec(top, left, window_h, window_w, output_size, flip=False)


def _resize_weights(src: int, dst: int) -> np.ndarray:
    """[dst, src] bilinear interpolation matrix with corner-aligned sampling."""
    w = np.zeros((dst, src))
    if src == 1:
        w[:, 0] = 1.0
        return w
    if dst == 1:
        # corner-aligned with a single output sample lands on position 0
        w[0, 0] = 1.0
        return w
    pos = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    w[np.arange(dst), lo] += 1.0 - frac
    w[np.arange(dst), hi] += frac
    return w


def apply_crop(frame: np.ndarray, spec: CropSpec) -> np.ndarray:
    """Extract the window, bilinear-resize it to output_size^2, then flip
    horizontally if asked. frame is [C, H, W]."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise ShapeError(f"frame must be [C,H,W], got {frame.shape}")
    c, h, w = frame.shape
    if (
        spec.top < 0
        or spec.left < 0
        or spec.window_h < 1
        or spec.window_w < 1
        or spec.top + spec.window_h > h
        or spec.left + spec.window_w > w
    ):
        raise CropError(f"window {spec} does not fit frame {h}x{w}")
    window = frame[:, spec.top : spec.top + spec.window_h, spec.left : spec.left + spec.window_w]
    s = spec.output_size
    if (spec.window_h, spec.window_w) == (s, s):
        out = window.copy()
    else:
        wh = _resize_weights(spec.window_h, s)
        ww = _resize_weights(spec.window_w, s)
        out = np.einsum("ij,cjk,lk->cil", wh, window, ww, optimize=True)
    if spec.flip:
        out = out[:, :, ::-1].copy()
    return out


def mean_subtract(frame: np.ndarray, mean) -> np.ndarray:
    """Subtract a per-channel mean value from every pixel."""
    frame = np.asarray(frame, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    if frame.ndim != 3 or mean.shape[0] != frame.shape[0]:
        raise ShapeError(
            f"mean of length {mean.shape[0]} does not match frame {frame.shape}"
        )
    return frame - mean[:, None, None]


def ten_crops(frame_h: int, frame_w: int, output_size: int) -> list:
    """The 4 corner crops, the center crop, then the same five flipped."""
    s = output_size
    if s < 1 or frame_h < s or frame_w < s:
        raise CropError(f"frame {frame_h}x{frame_w} smaller than crop {s}")
    bottom = frame_h - s
    right = frame_w - s
    bases = [
        (0, 0),
        (0, right),
        (bottom, 0),
        (bottom, right),
        (bottom // 2, right // 2),
    ]
    specs = [CropSpec(t, l, s, s, s, flip=False) for t, l in bases]
    specs += [CropSpec(t, l, s, s, s, flip=True) for t, l in bases]
    return specs


def video_views(clip: VideoClip, mean, output_size: int, n_frames: int = 25) -> np.ndarray:
    """The test-time view stack: n_frames evenly spaced frames x 10 crops,
    mean-subtracted, as one [n_frames*10, C, S, S] array."""
    views = []
    for idx in evenly_spaced(clip.frame_count, n_frames):
        frame = mean_subtract(clip.frames[idx], mean)
        for spec in ten_crops(frame.shape[1], frame.shape[2], output_size):
            views.append(apply_crop(frame, spec))
    return np.stack(views)


def predict_video(
    net, clip: VideoClip, mean, output_size: int, n_frames: int = 25
) -> np.ndarray:
    """Average the activity softmax over all n_frames*10 views of the clip."""
    views = video_views(clip, mean, output_size, n_frames)
    probs = net.activity_probs(views)
    return probs.mean(axis=0)


CLIP_MAGIC = b"CLIP1\n"


def save_clip(path, clip: VideoClip) -> None:
    """One clip per file: CLIP1 magic, id line, label line, `T C H W` line,
    then the frames as row-major float64 LE."""
    if "\n" in clip.id:
        raise FormatError("parse", f"clip id {clip.id!r} contains a newline")
    try:
        with open(path, "wb") as fh:
            fh.write(CLIP_MAGIC)
            fh.write(clip.id.encode("utf-8") + b"\n")
            fh.write(str(int(clip.label)).encode("ascii") + b"\n")
            fh.write(" ".join(str(d) for d in clip.frames.shape).encode("ascii") + b"\n")
            fh.write(np.ascontiguousarray(clip.frames, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write clip {path}: {exc}") from exc


def load_clip(path) -> VideoClip:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read clip {path}: {exc}") from exc
    if not blob.startswith(CLIP_MAGIC):
        raise FormatError("header", f"bad magic in {path}", offset=0)
    buf = io.BytesIO(blob)
    buf.seek(len(CLIP_MAGIC))

    def line(what):
        raw = buf.readline()
        if not raw.endswith(b"\n"):
            raise FormatError("truncated", f"unterminated {what}", offset=buf.tell())
        return raw[:-1]

    clip_id = line("id").decode("utf-8")
    try:
        label = int(line("label"))
        shape = tuple(int(t) for t in line("shape").split())
    except ValueError:
        raise FormatError("parse", f"bad label or shape line in {path}", offset=buf.tell()) from None
    if len(shape) != 4 or any(d < 1 for d in shape):
        raise FormatError("parse", f"bad frame shape {shape}", offset=buf.tell())
    count = int(np.prod(shape, dtype=np.int64))
    payload = buf.read(count * 8)
    if len(payload) != count * 8 or buf.read(1):
        raise FormatError("truncated", f"frame payload size mismatch in {path}", offset=buf.tell())
    frames = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return VideoClip(frames=frames, label=label, id=clip_id)
