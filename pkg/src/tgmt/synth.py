"""Synthetic worlds: activity videos, object images, label vocabularies and
an aligned embedding table with known ground-truth relevance.

Construction guarantees, by design rather than by chance:

  * activity embeddings are distinct basis vectors; a relevant object's
    vector is the sum of its activities' basis vectors plus a small jitter
    confined to unused coordinates; distractor vectors live entirely in
    the unused coordinates. Every activity-distractor cosine is therefore
    exactly zero while every activity-relevant cosine is positive, so
    relevance ranking must recover the planted classes.
  * activity clip pixels are temporal crossfades of their relevant
    objects' latent templates; distractor templates are built from a
    disjoint set of latent directions, so distractor images share no
    pixel structure with any activity.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, fields

import numpy as np

from .embeddings import EmbeddingTable, load_binary, write_binary
from .errors import ConfigError, DataError, FormatError
from .seeding import child_seed, substream
from .video import VideoClip, _resize_weights, load_clip, save_clip

JITTER = 0.02
GAIN_RANGE = (0.7, 1.3)


@dataclass(frozen=True)
class WorldConfig:
    activities: int = 5
    objects: int = 20
    relevant_per_activity: int = 2
    latent_dim: int = 8
    frame_size: int = 16
    channels: int = 1
    frames_per_clip: int = 12
    train_clips_per_activity: int = 30
    test_clips_per_activity: int = 30
    train_images_per_object: int = 50
    test_images_per_object: int = 10
    noise_std: float = 0.5
    embed_dim: int = 16
    template_amplitude: float = 2.0
    seed: int = 0

    def __post_init__(self):
        counts = (self.activities, self.objects, self.relevant_per_activity,
                  self.latent_dim, self.frame_size, self.channels,
                  self.frames_per_clip, self.train_clips_per_activity,
                  self.test_clips_per_activity, self.train_images_per_object,
                  self.test_images_per_object)
        if any(c < 1 for c in counts):
            raise ConfigError(f"world counts must all be >= 1: {self}")
        if self.noise_std < 0 or self.template_amplitude <= 0:
            raise ConfigError("noise_std must be >= 0 and amplitude positive")
        relevant = self.objects // 2
        if relevant < 1:
            raise ConfigError(f"{self.objects} objects leave no relevant classes")
        if self.relevant_per_activity > relevant:
            raise ConfigError(
                f"relevant_per_activity {self.relevant_per_activity} exceeds "
                f"the {relevant} relevant classes"
            )
        if self.activities * self.relevant_per_activity < relevant:
            raise ConfigError(
                f"{relevant} relevant classes cannot all be assigned with "
                f"{self.activities} activities x {self.relevant_per_activity}"
            )
        # jitter and distractor vectors need coordinates of their own
        if self.embed_dim < self.activities + 1:
            raise ConfigError(
                f"embed_dim {self.embed_dim} too small for "
                f"{self.activities} activities"
            )
        if self.latent_dim < 2:
            raise ConfigError("latent_dim must be >= 2 to separate tasks")
        if self.frames_per_clip < 2:
            raise ConfigError("clips need at least 2 frames")

    @property
    def relevant_classes(self) -> int:
        return self.objects // 2


@dataclass
class SyntheticWorld:
    config: WorldConfig
    activity_labels: tuple
    object_labels: tuple
    train_clips: list
    test_clips: list
    train_images: list  # (image [C,H,W], object class id)
    test_images: list
    relevance_truth: dict  # activity label -> tuple of object labels
    embedding_table: EmbeddingTable

    def truth_union(self) -> tuple:
        union = set()
        for labels in self.relevance_truth.values():
            union.update(labels)
        return tuple(sorted(union))

    def relevant_ids(self) -> tuple:
        index = {label: i for i, label in enumerate(self.object_labels)}
        return tuple(index[label] for label in self.truth_union())


def _assignments(config: WorldConfig) -> list:
    """Per-activity tuple of relevant object ids, round-robin over the
    relevant id range so every relevant class serves some activity."""
    r = config.relevant_classes
    out = []
    slot = 0
    for _ in range(config.activities):
        mine = []
        for _ in range(config.relevant_per_activity):
            mine.append(slot % r)
            slot += 1
        if len(set(mine)) != len(mine):
            raise ConfigError("an activity was assigned a duplicate object")
        out.append(tuple(mine))
    return out


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0:
        raise DataError("degenerate direction draw")
    return v / n


def _embeddings(config: WorldConfig, assignments, activity_labels,
                object_labels) -> EmbeddingTable:
    rng = substream(config.seed, "world/embeddings")
    a, d = config.activities, config.embed_dim
    tail = slice(a, d)
    entries = []
    for i, label in enumerate(activity_labels):
        v = np.zeros(d, dtype=np.float32)
        v[i] = 1.0
        entries.append((label, v))
    owners = {j: [] for j in range(config.relevant_classes)}
    for act, mine in enumerate(assignments):
        for j in mine:
            owners[j].append(act)
    for j, label in enumerate(object_labels):
        v = np.zeros(d)
        direction = _unit(rng.standard_normal(d - a))
        if j < config.relevant_classes:
            for act in owners[j]:
                v[act] = 1.0
            v[tail] = JITTER * direction
        else:
            v[tail] = direction
        entries.append((label, v.astype(np.float32)))
    return EmbeddingTable(d, entries)


def _basis_patterns(config: WorldConfig, rng) -> np.ndarray:
    """[latent_dim, C, H, W] smooth unit-RMS patterns: coarse 4x4 noise
    upsampled bilinearly to frame size, then mirrored-averaged so every
    pattern is left-right symmetric (the test protocol averages over
    horizontally flipped crops, so the signal must survive a mirror)."""
    coarse = rng.standard_normal((config.latent_dim, config.channels, 4, 4))
    up = _resize_weights(4, config.frame_size)
    patterns = np.einsum("ij,dcjk,lk->dcil", up, coarse, up, optimize=True)
    patterns = 0.5 * (patterns + patterns[:, :, :, ::-1])
    rms = np.sqrt((patterns ** 2).mean(axis=(1, 2, 3), keepdims=True))
    return patterns / rms


def _latent_codes(config: WorldConfig, rng) -> np.ndarray:
    """[objects, latent_dim] unit codes; relevant classes use the first
    half of the latent directions, distractors the second half."""
    half = config.latent_dim // 2
    codes = np.zeros((config.objects, config.latent_dim))
    for j in range(config.objects):
        if j < config.relevant_classes:
            codes[j, :half] = _unit(rng.standard_normal(half))
        else:
            codes[j, half:] = _unit(rng.standard_normal(config.latent_dim - half))
    return codes


def _crossfade_weights(rpa: int, frames: int) -> np.ndarray:
    """[rpa, frames] tent weights sliding across the clip (a partition of
    unity), so each temporal segment is dominated by one object."""
    if rpa == 1:
        return np.ones((1, frames))
    pos = np.arange(frames) / (frames - 1)
    centers = np.arange(rpa) / (rpa - 1)
    w = np.maximum(0.0, 1.0 - np.abs(pos[None, :] - centers[:, None]) * (rpa - 1))
    return w


def split(samples, fraction: float, seed: int):
    """Stratified split of (item, label) pairs into (train, test).

    Per class, round(fraction * n) samples go to train (at least one on
    each side); the draw is deterministic in `seed`.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    samples = list(samples)
    by_label: dict = {}
    for idx, (_, label) in enumerate(samples):
        by_label.setdefault(label, []).append(idx)
    rng = np.random.default_rng(seed)
    train_ids = set()
    for label in sorted(by_label):
        ids = by_label[label]
        n = len(ids)
        if n < 2:
            raise DataError(f"class {label!r} has {n} sample(s), cannot split")
        take = int(np.floor(fraction * n + 0.5))
        take = min(max(take, 1), n - 1)
        perm = rng.permutation(n)
        train_ids.update(ids[p] for p in perm[:take])
    train = [s for i, s in enumerate(samples) if i in train_ids]
    test = [s for i, s in enumerate(samples) if i not in train_ids]
    return train, test


def generate_world(config: WorldConfig) -> SyntheticWorld:
    """Deterministic world build; every stream is named off config.seed."""
    assignments = _assignments(config)
    activity_labels = tuple(f"activity_{i:02d}" for i in range(config.activities))
    object_labels = tuple(
        f"object_{j:02d}_rel_{assignments_owner(assignments, j):02d}"
        if j < config.relevant_classes
        else f"object_{j:02d}_bg"
        for j in range(config.objects)
    )
    table = _embeddings(config, assignments, activity_labels, object_labels)
    truth = {
        activity_labels[i]: tuple(sorted(object_labels[j] for j in assignments[i]))
        for i in range(config.activities)
    }

    patterns = _basis_patterns(config, substream(config.seed, "world/basis"))
    codes = _latent_codes(config, substream(config.seed, "world/latents"))
    templates = np.einsum("od,dchw->ochw", codes, patterns, optimize=True)
    amp = config.template_amplitude

    rng_clips = substream(config.seed, "world/clips")
    weights = _crossfade_weights(config.relevant_per_activity,
                                 config.frames_per_clip)
    clip_pairs = []
    per_activity = config.train_clips_per_activity + config.test_clips_per_activity
    for i in range(config.activities):
        stack = templates[list(assignments[i])]  # [rpa, C, H, W]
        base = np.einsum("qt,qchw->tchw", weights, stack, optimize=True)
        for n in range(per_activity):
            gain = rng_clips.uniform(*GAIN_RANGE)
            noise = rng_clips.standard_normal(base.shape) * config.noise_std
            clip = VideoClip(amp * gain * base + noise, i, f"clip_{i:02d}_{n:03d}")
            clip_pairs.append((clip, i))

    rng_images = substream(config.seed, "world/images")
    image_pairs = []
    per_object = config.train_images_per_object + config.test_images_per_object
    for j in range(config.objects):
        for n in range(per_object):
            gain = rng_images.uniform(*GAIN_RANGE)
            noise = rng_images.standard_normal(templates[j].shape) * config.noise_std
            image_pairs.append((amp * gain * templates[j] + noise, j))

    clip_fraction = config.train_clips_per_activity / per_activity
    image_fraction = config.train_images_per_object / per_object
    train_c, test_c = split(clip_pairs, clip_fraction,
                            child_seed(config.seed, "world/split/clips"))
    train_i, test_i = split(image_pairs, image_fraction,
                            child_seed(config.seed, "world/split/images"))
    return SyntheticWorld(
        config=config,
        activity_labels=activity_labels,
        object_labels=object_labels,
        train_clips=[c for c, _ in train_c],
        test_clips=[c for c, _ in test_c],
        train_images=train_i,
        test_images=test_i,
        relevance_truth=truth,
        embedding_table=table,
    )


def assignments_owner(assignments, j: int) -> int:
    """First activity an object id is assigned to (for its label string)."""
    for act, mine in enumerate(assignments):
        if j in mine:
            return act
    raise DataError(f"object {j} is assigned to no activity")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_world(world: SyntheticWorld, out_dir) -> str:
    """Export a world: one file per clip/image, the embedding table, and a
    manifest listing the config, per-file checksums, the relevance truth
    table, and the embedding path. Returns the manifest path."""
    files = {}

    def emit(rel_path, clip):
        path = os.path.join(out_dir, rel_path)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_clip(path, clip)
        files[rel_path] = file_sha256(path)

    for split_name, clips in (("train", world.train_clips),
                              ("test", world.test_clips)):
        for clip in clips:
            emit(f"clips/{split_name}/{clip.id}.clip", clip)
    for split_name, images in (("train", world.train_images),
                               ("test", world.test_images)):
        for n, (image, label) in enumerate(images):
            clip = VideoClip(image[None], label, f"img_{label:02d}_{n:04d}")
            emit(f"images/{split_name}/{clip.id}.clip", clip)

    os.makedirs(out_dir, exist_ok=True)
    emb_rel = "embeddings.bin"
    write_binary(world.embedding_table, os.path.join(out_dir, emb_rel))
    files[emb_rel] = file_sha256(os.path.join(out_dir, emb_rel))

    lines = ["[config]"]
    for f in fields(WorldConfig):
        value = getattr(world.config, f.name)
        text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {text}")
    lines += ["", "[labels]",
              "activities = " + ",".join(world.activity_labels),
              "objects = " + ",".join(world.object_labels),
              "", "[relevance]"]
    for activity in world.activity_labels:
        lines.append(f"{activity} = " + ",".join(world.relevance_truth[activity]))
    lines += ["", "[embeddings]", f"file = {emb_rel}", "", "[files]"]
    for rel_path in sorted(files):
        lines.append(f"{rel_path} = {files[rel_path]}")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def load_world(world_dir) -> SyntheticWorld:
    """Read back an exported world, verifying every file checksum."""
    manifest = os.path.join(world_dir, "manifest.txt")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(manifest, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise DataError(f"cannot read manifest {manifest}: {exc}") from exc
    except configparser.Error as exc:
        raise FormatError("parse", f"bad manifest {manifest}: {exc}") from None

    kwargs = {}
    for f in fields(WorldConfig):
        raw = parser.get("config", f.name)
        parse = float if f.name in ("noise_std", "template_amplitude") else int
        try:
            kwargs[f.name] = parse(raw)
        except ValueError:
            raise FormatError("parse", f"bad config value {f.name} = {raw!r}") from None
    config = WorldConfig(**kwargs)

    for rel_path, digest in parser.items("files"):
        actual = file_sha256(os.path.join(world_dir, rel_path))
        if actual != digest:
            raise FormatError("parse",
                              f"checksum mismatch for {rel_path}", offset=None)

    activity_labels = tuple(parser.get("labels", "activities").split(","))
    object_labels = tuple(parser.get("labels", "objects").split(","))
    truth = {act: tuple(parser.get("relevance", act).split(","))
             for act in activity_labels}
    table = load_binary(os.path.join(world_dir,
                                     parser.get("embeddings", "file")))

    def read_clips(prefix):
        out = []
        for rel_path in sorted(parser.options("files")):
            if rel_path.startswith(prefix):
                out.append(load_clip(os.path.join(world_dir, rel_path)))
        return out

    train_images = [(c.frames[0], c.label) for c in read_clips("images/train/")]
    test_images = [(c.frames[0], c.label) for c in read_clips("images/test/")]
    return SyntheticWorld(
        config=config,
        activity_labels=activity_labels,
        object_labels=object_labels,
        train_clips=read_clips("clips/train/"),
        test_clips=read_clips("clips/test/"),
        train_images=train_images,
        test_images=test_images,
        relevance_truth=truth,
        embedding_table=table,
    )
