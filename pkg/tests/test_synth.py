import hashlib

import numpy as np
import pytest

from tgmt.embeddings import cosine
from tgmt.errors import ConfigError, DataError, FormatError
from tgmt.relevance import rank_classes, select_top_m
from tgmt.synth import SyntheticWorld, WorldConfig, generate_world, load_world, split, write_world


def small_config(**over):
    base = dict(
        activities=3,
        objects=8,
        relevant_per_activity=2,
        latent_dim=4,
        frame_size=8,
        channels=1,
        frames_per_clip=6,
        train_clips_per_activity=4,
        test_clips_per_activity=2,
        train_images_per_object=6,
        test_images_per_object=2,
        embed_dim=8,
        seed=0,
    )
    base.update(over)
    return WorldConfig(**base)


# ------------------------------------------------------------------- config


def test_default_config_is_valid():
    cfg = WorldConfig()
    assert cfg.relevant_classes == cfg.objects // 2 == 10


@pytest.mark.parametrize(
    "over",
    [
        {"activities": 0},
        {"objects": 0},
        {"frames_per_clip": 1},
        {"noise_std": -0.1},
        {"template_amplitude": 0.0},
        {"relevant_per_activity": 5},  # exceeds objects // 2 = 4
        {"activities": 1, "relevant_per_activity": 1},  # 4 classes, 1 slot
        {"embed_dim": 3},  # needs activities + 1
        {"latent_dim": 1},
        {"objects": 1},
    ],
)
def test_config_rejects_bad_values(over):
    with pytest.raises(ConfigError):
        small_config(**over)


# -------------------------------------------------------------------- split


def test_split_even_halves():
    pairs = [(f"s{i}", i % 2) for i in range(20)]  # 10 per class
    train, test = split(pairs, 0.5, seed=1)
    assert len(train) == len(test) == 10
    for label in (0, 1):
        assert sum(1 for _, l in train if l == label) == 5
        assert sum(1 for _, l in test if l == label) == 5


def test_split_is_disjoint_and_complete():
    pairs = [(f"s{i}", i % 3) for i in range(30)]
    train, test = split(pairs, 0.7, seed=2)
    train_items = {s for s, _ in train}
    test_items = {s for s, _ in test}
    assert not train_items & test_items
    assert train_items | test_items == {f"s{i}" for i in range(30)}


def test_split_rounds_half_up():
    # fraction 0.5 of 5 -> floor(2.5 + 0.5) = 3 in train
    pairs = [(f"s{i}", 0) for i in range(5)]
    train, test = split(pairs, 0.5, seed=0)
    assert (len(train), len(test)) == (3, 2)


def test_split_keeps_one_sample_on_each_side():
    pairs = [("a", 0), ("b", 0)]
    train, test = split(pairs, 0.99, seed=0)
    assert len(train) == 1 and len(test) == 1
    train, test = split(pairs, 0.01, seed=0)
    assert len(train) == 1 and len(test) == 1


def test_split_deterministic_in_seed():
    pairs = [(f"s{i}", i % 4) for i in range(40)]
    a = split(pairs, 0.6, seed=9)
    b = split(pairs, 0.6, seed=9)
    c = split(pairs, 0.6, seed=10)
    assert a == b
    assert a != c


def test_split_errors():
    with pytest.raises(ConfigError):
        split([("a", 0), ("b", 0)], 0.0, seed=0)
    with pytest.raises(ConfigError):
        split([("a", 0), ("b", 0)], 1.0, seed=0)
    with pytest.raises(DataError):
        split([("a", 0)], 0.5, seed=0)  # lone sample cannot stratify


# ----------------------------------------------------------- planted truth


def test_world_counts_and_label_shapes():
    world = generate_world(small_config())
    cfg = world.config
    assert len(world.activity_labels) == 3
    assert len(world.object_labels) == 8
    assert len(world.train_clips) == 3 * 4
    assert len(world.test_clips) == 3 * 2
    assert len(world.train_images) == 8 * 6
    assert len(world.test_images) == 8 * 2
    for clip in world.train_clips + world.test_clips:
        assert clip.frames.shape == (6, 1, 8, 8)
        assert world.activity_labels[clip.label] in world.relevance_truth
    for image, label in world.train_images + world.test_images:
        assert image.shape == (1, 8, 8)
        assert 0 <= label < 8


def test_truth_covers_every_relevant_class():
    world = generate_world(small_config())
    r = world.config.relevant_classes
    union = world.truth_union()
    assert len(union) == r
    assert world.relevant_ids() == tuple(range(r))
    for labels in world.relevance_truth.values():
        assert len(labels) == world.config.relevant_per_activity
        assert len(set(labels)) == len(labels)


def test_activity_distractor_cosines_are_exactly_zero():
    world = generate_world(small_config())
    table = world.embedding_table
    r = world.config.relevant_classes
    union = set(world.truth_union())
    for act in world.activity_labels:
        av = table.lookup(act)
        for j, obj in enumerate(world.object_labels):
            c = cosine(av, table.lookup(obj))
            if j >= r:
                assert c == 0.0  # distractors live in disjoint coordinates
                assert obj not in union
            else:
                assert c > 0.0 or obj not in world.relevance_truth[act]


def test_owned_objects_score_high_for_their_activity():
    world = generate_world(small_config())
    table = world.embedding_table
    for act, owned in world.relevance_truth.items():
        av = table.lookup(act)
        for obj in owned:
            assert cosine(av, table.lookup(obj)) > 0.5


@pytest.mark.parametrize("seed", [0, 1, 7])
def test_relevance_ranking_recovers_planted_classes(seed):
    world = generate_world(small_config(seed=seed))
    ranking = rank_classes(
        world.activity_labels, world.object_labels, world.embedding_table
    )
    refined = select_top_m(ranking, world.config.relevant_classes)
    assert set(refined.selected) == set(world.truth_union())
    # every distractor scores exactly zero
    for label in world.object_labels[world.config.relevant_classes:]:
        assert ranking.scores[label] == 0.0


# --------------------------------------------------------- pixel structure


def test_noiseless_images_are_class_rays():
    world = generate_world(small_config(noise_std=0.0))
    by_class: dict = {}
    for image, label in world.train_images + world.test_images:
        by_class.setdefault(label, []).append(image.ravel())
    for vecs in by_class.values():
        base = vecs[0] / np.linalg.norm(vecs[0])
        for v in vecs[1:]:
            c = float(base @ (v / np.linalg.norm(v)))
            assert abs(c - 1.0) < 1e-12  # same template, different gain


def test_noiseless_nearest_centroid_is_perfect():
    world = generate_world(small_config(noise_std=0.0))
    centroids = {}
    for image, label in world.train_images:
        v = image.ravel()
        centroids.setdefault(label, []).append(v / np.linalg.norm(v))
    labels = sorted(centroids)
    mat = np.stack([np.mean(centroids[l], axis=0) for l in labels])
    hits = 0
    for image, label in world.test_images:
        v = image.ravel()
        pred = labels[int(np.argmax(mat @ (v / np.linalg.norm(v))))]
        hits += pred == label
    assert hits == len(world.test_images)


def test_noiseless_clip_frames_trace_their_objects():
    # the first frame of a clip is pure first-assigned-object template, the
    # last frame pure last-assigned; compare against that object's images
    world = generate_world(small_config(noise_std=0.0))
    index = {label: i for i, label in enumerate(world.object_labels)}
    image_of = {}
    for image, label in world.train_images:
        image_of.setdefault(label, image.ravel())

    def unit(v):
        return v / np.linalg.norm(v)

    for clip in world.test_clips:
        act = world.activity_labels[clip.label]
        owned = world.relevance_truth[act]
        owned_ids = sorted(index[o] for o in owned)
        first = unit(clip.frames[0].ravel())
        last = unit(clip.frames[-1].ravel())
        c_first = float(first @ unit(image_of[owned_ids[0]]))
        c_last = float(last @ unit(image_of[owned_ids[-1]]))
        assert abs(c_first - 1.0) < 1e-12
        assert abs(c_last - 1.0) < 1e-12


def test_noiseless_frames_are_mirror_symmetric():
    world = generate_world(small_config(noise_std=0.0))
    image, _ = world.train_images[0]
    np.testing.assert_allclose(image, image[:, :, ::-1], atol=1e-12)
    clip = world.train_clips[0]
    np.testing.assert_allclose(clip.frames, clip.frames[:, :, :, ::-1], atol=1e-12)


def test_noise_perturbs_pixels():
    quiet = generate_world(small_config(noise_std=0.0))
    loud = generate_world(small_config(noise_std=0.5))
    assert not np.array_equal(
        quiet.train_clips[0].frames, loud.train_clips[0].frames
    )


# -------------------------------------------------------------- determinism


def world_fingerprint(world: SyntheticWorld):
    parts = [",".join(world.activity_labels), ",".join(world.object_labels)]
    for clip in world.train_clips + world.test_clips:
        parts.append(clip.id)
        parts.append(hashlib.sha256(clip.frames.tobytes()).hexdigest())
    for image, label in world.train_images + world.test_images:
        parts.append(f"{label}:{hashlib.sha256(image.tobytes()).hexdigest()}")
    return "|".join(parts)


def test_generation_is_bitwise_deterministic():
    a = generate_world(small_config(seed=5))
    b = generate_world(small_config(seed=5))
    assert world_fingerprint(a) == world_fingerprint(b)
    assert a.embedding_table == b.embedding_table
    assert a.relevance_truth == b.relevance_truth


def test_different_seeds_give_different_worlds():
    a = generate_world(small_config(seed=5))
    b = generate_world(small_config(seed=6))
    assert world_fingerprint(a) != world_fingerprint(b)


# ------------------------------------------------------------ export/import


def test_world_round_trip(tmp_path):
    world = generate_world(small_config())
    manifest = write_world(world, tmp_path / "w")
    assert manifest == str(tmp_path / "w" / "manifest.txt")
    back = load_world(tmp_path / "w")
    assert back.config == world.config
    assert back.activity_labels == world.activity_labels
    assert back.object_labels == world.object_labels
    assert back.relevance_truth == world.relevance_truth
    assert back.embedding_table == world.embedding_table

    def by_id(clips):
        return {c.id: c for c in clips}

    for mine, theirs in ((world.train_clips, back.train_clips),
                         (world.test_clips, back.test_clips)):
        mine, theirs = by_id(mine), by_id(theirs)
        assert mine.keys() == theirs.keys()
        for cid in mine:
            assert mine[cid].frames.tobytes() == theirs[cid].frames.tobytes()
            assert mine[cid].label == theirs[cid].label
    assert len(back.train_images) == len(world.train_images)
    mine_bytes = sorted(
        (label, image.tobytes()) for image, label in world.train_images
    )
    theirs_bytes = sorted(
        (label, image.tobytes()) for image, label in back.train_images
    )
    assert mine_bytes == theirs_bytes


def test_manifest_checksums_are_real_sha256(tmp_path):
    world = generate_world(small_config())
    write_world(world, tmp_path / "w")
    manifest = (tmp_path / "w" / "manifest.txt").read_text()
    line = next(
        l for l in manifest.splitlines() if l.startswith("embeddings.bin = ")
    )
    digest = line.split(" = ")[1]
    actual = hashlib.sha256((tmp_path / "w" / "embeddings.bin").read_bytes())
    assert digest == actual.hexdigest()


def test_tampered_file_is_detected(tmp_path):
    world = generate_world(small_config())
    write_world(world, tmp_path / "w")
    victim = next((tmp_path / "w" / "clips" / "train").iterdir())
    raw = bytearray(victim.read_bytes())
    raw[-1] ^= 0xFF
    victim.write_bytes(bytes(raw))
    with pytest.raises(FormatError) as err:
        load_world(tmp_path / "w")
    assert err.value.reason == "parse"
    assert "checksum" in str(err.value)


def test_missing_manifest_raises_data_error(tmp_path):
    with pytest.raises(DataError):
        load_world(tmp_path / "nowhere")


def test_corrupt_manifest_config_value(tmp_path):
    world = generate_world(small_config())
    write_world(world, tmp_path / "w")
    manifest = tmp_path / "w" / "manifest.txt"
    text = manifest.read_text().replace("activities = 3", "activities = soup")
    manifest.write_text(text)
    with pytest.raises(FormatError) as err:
        load_world(tmp_path / "w")
    assert err.value.reason == "parse"
