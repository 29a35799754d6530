"""Shared-trunk two-head network and the three training strategies.

The trunk (two 3x3 conv+ReLU blocks, global average pooling, one linear
layer, dropout) is shared by an activity head and an object head; each
sample in a mixed batch is scored only against its own task's head.
Strategies:

    baseline             pretrain on objects, then finetune on activities only
    object_incorporated  pretrain, then continue jointly with all objects
    text_guided          pretrain, then continue jointly with a refined
                         object subset (relevance-selected labels)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import autograd as ag
from .autograd import Tensor
from .errors import (
    ConfigError,
    DataError,
    LabelError,
    ShapeError,
    TrainingDivergedError,
)
from .optim import SgdConfig, sgd_step
from .relevance import rank_classes, select_top_m
from .seeding import substream
from .video import (
    CropConfig,
    CropSpec,
    VideoClip,
    apply_crop,
    mean_subtract,
    predict_video,
    random_window,
    sample_segments,
)

STRATEGIES = ("baseline", "object_incorporated", "text_guided")


@dataclass(frozen=True)
class TrunkSpec:
    """Trunk architecture: conv channel widths, kernel size, linear width."""

    in_channels: int = 1
    channels: tuple = (8, 16)
    kernel: int = 3
    fc_width: int = 64

    def __post_init__(self):
        channels = tuple(int(c) for c in self.channels)
        if not channels or any(c < 1 for c in channels):
            raise ConfigError(f"bad conv channels {self.channels}")
        # same-padding (k//2) keeps H,W only for odd kernels
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd and positive, got {self.kernel}")
        if self.in_channels < 1 or self.fc_width < 1:
            raise ConfigError("in_channels and fc_width must be positive")
        object.__setattr__(self, "channels", channels)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class MultitaskNet:
    """Parameter container plus the forward passes for both task heads."""

    def __init__(self, activity_classes: int, object_classes: int, spec: TrunkSpec,
                 dropout_rate: float = 0.25):
        self.activity_classes = activity_classes
        self.object_classes = object_classes
        self.spec = spec
        self.dropout_rate = dropout_rate
        self.params: dict = {}

    def _param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True)
        self.params[name] = t
        return t

    def trunk_param_names(self) -> list:
        return [n for n in self.params if n.startswith("trunk.")]

    def head_param_names(self, task: str) -> list:
        return [n for n in self.params if n.startswith(f"head.{task}.")]

    def features(self, x, training: bool = False, rng=None) -> Tensor:
        """Shared representation for a [N,C,H,W] input batch."""
        t = x if isinstance(x, Tensor) else Tensor(x)
        if t.ndim != 4:
            raise ShapeError(f"expected [N,C,H,W] input, got {t.shape}")
        k = self.spec.kernel
        for i in range(len(self.spec.channels)):
            w = self.params[f"trunk.conv{i + 1}.w"]
            b = self.params[f"trunk.conv{i + 1}.b"]
            t = ag.relu(ag.add(ag.conv2d(t, w, stride=1, padding=k // 2), b))
        t = ag.global_avg_pool(t)
        t = ag.add(ag.matmul(t, self.params["trunk.fc.w"]), self.params["trunk.fc.b"])
        if training and self.dropout_rate > 0.0:
            if rng is None:
                raise ConfigError("training-mode features need a dropout generator")
            t = ag.dropout(t, self.dropout_rate, True, rng)
        return t

    def activity_logits(self, feats: Tensor) -> Tensor:
        return ag.add(ag.matmul(feats, self.params["head.activity.w"]),
                      self.params["head.activity.b"])

    def object_logits(self, feats: Tensor) -> Tensor:
        return ag.add(ag.matmul(feats, self.params["head.object.w"]),
                      self.params["head.object.b"])

    def activity_probs(self, views: np.ndarray) -> np.ndarray:
        """Eval-mode softmax activity probabilities for a view stack."""
        logits = self.activity_logits(self.features(views, training=False)).data
        return softmax(logits)

    def object_probs(self, views: np.ndarray) -> np.ndarray:
        logits = self.object_logits(self.features(views, training=False)).data
        return softmax(logits)

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        missing = sorted(set(self.params) - set(state))
        extra = sorted(set(state) - set(self.params))
        if missing or extra:
            raise ConfigError(
                f"checkpoint mismatch: missing {missing}, unexpected {extra}"
            )
        for name, t in self.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(
                    f"{name}: checkpoint shape {arr.shape} != model {t.data.shape}"
                )
            t.data = arr.copy()
            t.grad = None


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def build_network(activity_classes: int, object_classes: int, spec: TrunkSpec,
                  rng: np.random.Generator, dropout_rate: float = 0.25) -> MultitaskNet:
    """Glorot-uniform weights from `rng`, zero biases. Both heads read the
    same trunk features; their parameters are disjoint."""
    if activity_classes < 2 or object_classes < 2:
        raise ConfigError(
            f"need >= 2 classes per task, got {activity_classes}/{object_classes}"
        )
    net = MultitaskNet(activity_classes, object_classes, spec, dropout_rate)
    k = spec.kernel
    c_in = spec.in_channels
    for i, c_out in enumerate(spec.channels):
        shape = (c_out, c_in, k, k)
        net._param(f"trunk.conv{i + 1}.w",
                   _glorot(rng, shape, c_in * k * k, c_out * k * k))
        # [F,1,1] so the bias broadcasts over [N,F,H,W]
        net._param(f"trunk.conv{i + 1}.b", np.zeros((c_out, 1, 1)))
        c_in = c_out
    net._param("trunk.fc.w",
               _glorot(rng, (c_in, spec.fc_width), c_in, spec.fc_width))
    net._param("trunk.fc.b", np.zeros(spec.fc_width))
    net._param("head.activity.w",
               _glorot(rng, (spec.fc_width, activity_classes), spec.fc_width,
                       activity_classes))
    net._param("head.activity.b", np.zeros(activity_classes))
    net._param("head.object.w",
               _glorot(rng, (spec.fc_width, object_classes), spec.fc_width,
                       object_classes))
    net._param("head.object.b", np.zeros(object_classes))
    return net


@dataclass(frozen=True)
class TrainConfig:
    strategy: str
    batch_size: int = 16
    segment_count: int = 3
    sgd: SgdConfig = SgdConfig(lr=0.05, weight_decay=1e-4, total_iterations=400)
    pretrain: SgdConfig = SgdConfig(lr=0.05, weight_decay=1e-4, total_iterations=300)
    dropout_rate: float = 0.25
    seed: int = 0
    crop: CropConfig = CropConfig()
    trunk: TrunkSpec = TrunkSpec()
    refined_ids: tuple = None
    eval_every: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.batch_size < 1 or self.segment_count < 1:
            raise ConfigError("batch_size and segment_count must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.eval_every < 0:
            raise ConfigError(f"eval_every must be >= 0, got {self.eval_every}")
        if self.refined_ids is not None:
            if self.strategy != "text_guided":
                raise ConfigError(
                    f"refined class set is only meaningful for text_guided, "
                    f"not {self.strategy}"
                )
            ids = tuple(int(i) for i in self.refined_ids)
            if not ids:
                raise ConfigError("refined class set is empty")
            object.__setattr__(self, "refined_ids", ids)


def activity_share(batch_size: int, k: int, multitask: bool) -> int:
    """Frames per batch spent on the activity task.

    Multitask batches split evenly: half the batch rounded to the nearest
    multiple of k, ties upward (64,k=3 -> 33). Baseline batches are all
    activity, rounded down to a multiple of k (64,k=3 -> 63).
    """
    if not multitask:
        return (batch_size // k) * k
    half = batch_size / 2.0
    n = int(half // k)
    rem = half - n * k
    if rem >= k / 2.0:
        n += 1
    return min(n * k, (batch_size // k) * k)


@dataclass
class MixedBatch:
    """Samples ready for the trunk: activity frames first (video-major,
    segment_count frames per video), then object images."""

    samples: list  # (input [C,S,S], label, tag) with tag activity|object
    activity_count: int
    object_count: int
    segment_count: int


class EpochSampler:
    """Draw indices without replacement, reshuffling at epoch boundaries."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise DataError("cannot sample from an empty pool")
        self.n = n
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0
        self.epochs = 0

    def draw(self, count: int) -> list:
        out = []
        while len(out) < count:
            if self.pos >= len(self.order):
                self.order = self.rng.permutation(self.n)
                self.pos = 0
                self.epochs += 1
            take = min(count - len(out), len(self.order) - self.pos)
            out.extend(int(i) for i in self.order[self.pos : self.pos + take])
            self.pos += take
        return out


class BatchComposer:
    """Builds mixed batches for one training phase, owning the epoch state.

    activity_pool: list of VideoClip; object_pool: list of (image, label).
    Either share may be zero (all-object pretraining, all-activity baseline).
    """

    def __init__(self, activity_pool, object_pool, activity_count, object_count,
                 segment_count, crop: CropConfig, mean, rng_batch, rng_crops):
        if activity_count % segment_count != 0:
            raise ConfigError(
                f"activity share {activity_count} not a multiple of {segment_count}"
            )
        if activity_count > 0 and not activity_pool:
            raise DataError("activity pool is empty")
        self.object_count = object_count
        if self.object_count > 0 and not object_pool:
            raise DataError("object pool is empty")
        if activity_count + object_count == 0:
            raise ConfigError("batch has neither activity nor object share")
        self.activity_pool = activity_pool
        self.object_pool = object_pool
        self.segment_count = segment_count
        self.activity_count = activity_count
        self.crop = crop
        self.mean = np.asarray(mean, dtype=np.float64)
        self.rng_batch = rng_batch
        self.rng_crops = rng_crops
        self.act_sampler = (
            EpochSampler(len(activity_pool), rng_batch) if activity_count else None
        )
        self.obj_sampler = (
            EpochSampler(len(object_pool), rng_batch) if self.object_count else None
        )

    def _train_crop(self, frame: np.ndarray) -> np.ndarray:
        spec = random_window(frame.shape[1], frame.shape[2], self.crop.min_side,
                             self.crop.max_side, self.crop.output_size,
                             self.rng_crops)
        return apply_crop(mean_subtract(frame, self.mean), spec)

    def epoch_counts(self) -> tuple:
        return (
            self.act_sampler.epochs if self.act_sampler else 0,
            self.obj_sampler.epochs if self.obj_sampler else 0,
        )

    def compose(self) -> MixedBatch:
        samples = []
        k = self.segment_count
        if self.activity_count:
            video_ids = self.act_sampler.draw(self.activity_count // k)
            picks = []
            for vid in video_ids:
                clip = self.activity_pool[vid]
                picks.append(
                    (clip, sample_segments(clip.frame_count, k, self.rng_batch))
                )
            for clip, frame_ids in picks:
                for t in frame_ids:
                    samples.append(
                        (self._train_crop(clip.frames[t]), clip.label, "activity")
                    )
        if self.object_count:
            for idx in self.obj_sampler.draw(self.object_count):
                image, label = self.object_pool[idx]
                samples.append((self._train_crop(image), int(label), "object"))
        return MixedBatch(samples, self.activity_count, self.object_count, k)


def compose_batch(activity_pool, object_pool, config: TrainConfig,
                  rng: np.random.Generator, mean=None) -> MixedBatch:
    """One-shot batch with the configured split rule. Training uses a
    persistent BatchComposer so epochs stay without-replacement."""
    multitask = config.strategy != "baseline"
    act = activity_share(config.batch_size, config.segment_count, multitask)
    obj = config.batch_size - act if multitask else 0
    channels = config.trunk.in_channels
    if mean is None:
        mean = np.zeros(channels)
    composer = BatchComposer(activity_pool, object_pool, act, obj,
                             config.segment_count, config.crop, mean,
                             rng, rng)
    return composer.compose()


def forward_loss(net: MultitaskNet, batch: MixedBatch, training: bool, rng):
    """(total, activity, object) losses for one mixed batch.

    Activity frames are consensus-averaged per video (segment_count logits
    averaged before one cross-entropy per video); every sample scores only
    against its own head. total is the per-sample mean over the whole
    batch, so total*batch == act_count*act_loss + obj_count*obj_loss.
    Absent tasks report None.
    """
    n_act, n_obj = batch.activity_count, batch.object_count
    total_rows = n_act + n_obj
    if total_rows == 0 or len(batch.samples) != total_rows:
        raise DataError(f"bad batch: {len(batch.samples)} samples, "
                        f"{n_act}+{n_obj} declared")
    k = batch.segment_count
    x = np.stack([s[0] for s in batch.samples])
    feats = net.features(x, training=training, rng=rng)
    act_loss = obj_loss = None
    parts = []
    if n_act:
        labels = [s[1] for s in batch.samples[:n_act]]
        video_labels = []
        for v in range(n_act // k):
            group = labels[v * k : (v + 1) * k]
            if len(set(group)) != 1:
                raise LabelError(f"video {v} mixes labels {group}")
            video_labels.append(group[0])
        frame_logits = net.activity_logits(ag.narrow(feats, 0, n_act))
        video_logits = ag.segment_mean(frame_logits, k)
        act_loss, _ = ag.softmax_cross_entropy(video_logits, video_labels)
        parts.append(ag.scale(act_loss, n_act / total_rows))
    if n_obj:
        labels = [s[1] for s in batch.samples[n_act:]]
        logits = net.object_logits(ag.narrow(feats, n_act, total_rows))
        obj_loss, _ = ag.softmax_cross_entropy(logits, labels)
        parts.append(ag.scale(obj_loss, n_obj / total_rows))
    total = parts[0] if len(parts) == 1 else ag.add(parts[0], parts[1])
    return total, act_loss, obj_loss


class MetricsLog:
    """Ordered training records: TSV rows for iterations, `#` lines for
    events (phase starts, epoch boundaries, periodic eval)."""

    HEADER = "iter\ttotal_loss\tact_loss\tobj_loss\tlr"

    def __init__(self):
        self.entries = []

    def add_row(self, iteration, total, act, obj, lr):
        self.entries.append(("row", (iteration, total, act, obj, lr)))

    def add_event(self, text: str):
        if "\n" in text or "\t" in text:
            raise ValueError(f"event text must be a plain phrase: {text!r}")
        self.entries.append(("event", text))

    def rows(self) -> list:
        return [payload for kind, payload in self.entries if kind == "row"]

    def events(self) -> list:
        return [payload for kind, payload in self.entries if kind == "event"]

    @staticmethod
    def _cell(value) -> str:
        return "-" if value is None else format(value, ".17g")

    def to_text(self) -> str:
        lines = [self.HEADER]
        for kind, payload in self.entries:
            if kind == "event":
                lines.append(f"# {payload}")
            else:
                it, total, act, obj, lr = payload
                lines.append(
                    f"{it}\t{self._cell(total)}\t{self._cell(act)}"
                    f"\t{self._cell(obj)}\t{format(lr, '.17g')}"
                )
        return "\n".join(lines) + "\n"


def _phase(net, log, label, composer, sgd: SgdConfig, param_names, rng_dropout,
           eval_hook=None, eval_every=0):
    """Run one training phase: compose, forward, backward, step, log."""
    params = [net.params[n] for n in param_names]
    for it in range(sgd.total_iterations):
        before = composer.epoch_counts()
        batch = composer.compose()
        total, act, obj = forward_loss(net, batch, True, rng_dropout)
        if not np.isfinite(total.data):
            raise TrainingDivergedError(
                f"non-finite loss at {label} iteration {it}"
            )
        ag.backward(total)
        lr = sgd_step(params, sgd, it)
        log.add_row(it,
                    float(total.data),
                    None if act is None else float(act.data),
                    None if obj is None else float(obj.data),
                    lr)
        after = composer.epoch_counts()
        if it > 0:
            # the first compose of a phase always opens epoch 1; only
            # later boundaries are worth a marker
            if after[0] > before[0]:
                log.add_event(f"epoch activity {after[0]} at iter {it}")
            if after[1] > before[1]:
                log.add_event(f"epoch object {after[1]} at iter {it}")
        if eval_hook is not None and eval_every and (it + 1) % eval_every == 0:
            log.add_event(f"eval iter {it} accuracy {eval_hook(net):.6f}")


def mean_pixel(activity_data, object_data, channels: int) -> np.ndarray:
    """Per-channel mean over every activity training frame and object
    training image; the same vector serves train and test."""
    total = np.zeros(channels)
    count = 0
    for clip in activity_data or []:
        total += clip.frames.sum(axis=(0, 2, 3))
        count += clip.frames.shape[0] * clip.frames.shape[2] * clip.frames.shape[3]
    for image, _ in object_data or []:
        total += image.sum(axis=(1, 2))
        count += image.shape[1] * image.shape[2]
    if count == 0:
        raise DataError("no pixels to average")
    return total / count


def pretrain_object(net: MultitaskNet, object_data, config: TrainConfig,
                    log: MetricsLog = None, streams=None, mean=None):
    """Train trunk + object head on object classification only. The
    activity head is not touched (bitwise unchanged)."""
    if not object_data:
        raise DataError("object dataset is empty")
    if log is None:
        log = MetricsLog()
    if streams is None:
        streams = (substream(config.seed, "batch"),
                   substream(config.seed, "crops"),
                   substream(config.seed, "dropout"))
    rng_batch, rng_crops, rng_dropout = streams
    if config.pretrain.total_iterations == 0:
        return net, log
    if mean is None:
        mean = mean_pixel(None, object_data, config.trunk.in_channels)
    composer = BatchComposer([], object_data, 0, config.batch_size,
                             config.segment_count, config.crop, mean,
                             rng_batch, rng_crops)
    log.add_event(f"phase pretrain iterations {config.pretrain.total_iterations}")
    names = net.trunk_param_names() + net.head_param_names("object")
    _phase(net, log, "pretrain", composer, config.pretrain, names, rng_dropout)
    return net, log


def train(net: MultitaskNet, activity_data, object_data, config: TrainConfig,
          eval_data=None, eval_protocol=None, _force_object_count=None):
    """Full strategy run: shared object pretraining, then the strategy's
    finetuning phase. Deterministic given config (all randomness comes
    from named substreams of config.seed).

    _force_object_count pins the per-batch object share (bypassing the
    split rule); forcing 0 must reproduce the baseline bitwise."""
    if config.strategy == "text_guided" and config.refined_ids is None:
        raise ConfigError("text_guided needs a refined class set")
    if not activity_data:
        raise DataError("activity dataset is empty")
    log = MetricsLog()
    rng_batch = substream(config.seed, "batch")
    rng_crops = substream(config.seed, "crops")
    rng_dropout = substream(config.seed, "dropout")

    # text_guided narrows the object pool before any training, so its
    # trunk never spends capacity on classes TRA ruled out; the other
    # strategies keep the full pool for both phases
    if config.strategy == "text_guided":
        wanted = set(config.refined_ids)
        object_pool = [s for s in object_data if int(s[1]) in wanted]
        if not object_pool:
            raise ConfigError("refined class set matches no object samples")
    else:
        object_pool = object_data

    # one mean for both phases of a run, from its full training pools
    mean = mean_pixel(activity_data, object_pool, config.trunk.in_channels)

    if config.pretrain.total_iterations > 0:
        pretrain_object(net, object_pool, config, log,
                        (rng_batch, rng_crops, rng_dropout), mean)

    multitask = config.strategy != "baseline"
    if _force_object_count is None:
        act_count = activity_share(config.batch_size, config.segment_count,
                                   multitask)
        obj_count = config.batch_size - act_count if multitask else 0
    else:
        obj_count = int(_force_object_count)
        room = config.batch_size - obj_count
        act_count = (room // config.segment_count) * config.segment_count
        multitask = obj_count > 0
    if act_count == 0:
        raise ConfigError(
            f"batch {config.batch_size} leaves no room for activity videos"
        )
    main_objects = [] if config.strategy == "baseline" else object_pool
    if multitask and obj_count == 0:
        raise ConfigError(
            f"batch {config.batch_size} leaves no room for object samples"
        )

    if config.sgd.total_iterations > 0:
        composer = BatchComposer(activity_data, main_objects, act_count,
                                 obj_count, config.segment_count, config.crop,
                                 mean, rng_batch, rng_crops)
        names = net.trunk_param_names() + net.head_param_names("activity")
        if multitask:
            names += net.head_param_names("object")
        eval_hook = None
        if eval_data and config.eval_every:
            protocol = eval_protocol or "single_frame"
            eval_hook = lambda n: evaluate(n, eval_data, protocol, mean,
                                           config.crop.output_size).accuracy
        log.add_event(f"phase {config.strategy} iterations "
                      f"{config.sgd.total_iterations}")
        _phase(net, log, config.strategy, composer, config.sgd, names,
               rng_dropout, eval_hook, config.eval_every)
    return net, log, mean


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # [true, predicted] counts
    videos: int

    def to_tsv(self, class_labels=None) -> str:
        a = self.confusion.shape[0]
        names = list(class_labels) if class_labels else [str(i) for i in range(a)]
        lines = [f"accuracy\t{self.accuracy:.6f}", f"videos\t{self.videos}"]
        lines.append("true\\pred\t" + "\t".join(names))
        for i in range(a):
            row = "\t".join(str(int(c)) for c in self.confusion[i])
            lines.append(f"{names[i]}\t{row}")
        return "\n".join(lines) + "\n"


def evaluate(net: MultitaskNet, dataset, protocol: str, mean,
             output_size: int, eval_frames: int = 25) -> EvalReport:
    """Top-1 video accuracy plus a confusion matrix.

    full: 25 evenly spaced frames x 10 crops, probabilities averaged.
    single_frame: middle frame, center crop, one forward pass.
    """
    if not dataset:
        raise DataError("evaluation dataset is empty")
    if protocol not in ("full", "single_frame"):
        raise ConfigError(f"unknown protocol {protocol!r}")
    a = net.activity_classes
    confusion = np.zeros((a, a), dtype=np.int64)
    correct = 0
    for clip in dataset:
        if not 0 <= clip.label < a:
            raise LabelError(f"clip {clip.id} label {clip.label} out of range")
        if protocol == "full":
            probs = predict_video(net, clip, mean, output_size, eval_frames)
        else:
            frame = mean_subtract(clip.frames[(clip.frame_count - 1) // 2], mean)
            h, w = frame.shape[1], frame.shape[2]
            s = output_size
            spec = CropSpec((h - s) // 2, (w - s) // 2, s, s, s)
            probs = net.activity_probs(apply_crop(frame, spec)[None])[0]
        pred = int(np.argmax(probs))
        confusion[clip.label, pred] += 1
        correct += int(pred == clip.label)
    return EvalReport(correct / len(dataset), confusion, len(dataset))


def object_accuracy(net: MultitaskNet, object_data, mean, output_size: int) -> float:
    """Center-crop single-view accuracy of the object head."""
    if not object_data:
        raise DataError("object dataset is empty")
    views = []
    labels = []
    for image, label in object_data:
        h, w = image.shape[1], image.shape[2]
        s = output_size
        spec = CropSpec((h - s) // 2, (w - s) // 2, s, s, s)
        views.append(apply_crop(mean_subtract(image, mean), spec))
        labels.append(int(label))
    probs = net.object_probs(np.stack(views))
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))


class MultitaskVideoClassifier(BaseEstimator):
    """Estimator wrapper: fit on labeled clips (plus an object image pool),
    predict activity classes with the 25x10 averaging protocol.

    For the text_guided strategy the object subset comes either from
    `refined_labels` or, when an embedding table and label vocabularies
    are given, from relevance ranking with selection size `m`.
    """

    def __init__(self, strategy="text_guided", object_images=None,
                 object_labels=None, activity_labels=None, embedding_table=None,
                 m="auto", refined_labels=None, batch_size=16, segment_count=3,
                 iterations=400, lr=0.05, weight_decay=1e-4, milestones=(),
                 divisors=(), pretrain_iterations=300, pretrain_lr=None,
                 dropout_rate=0.25, crop_min=10, crop_max=16, crop_size=12,
                 eval_frames=25, trunk_channels=(8, 16), fc_width=64, seed=0):
        self.strategy = strategy
        self.object_images = object_images
        self.object_labels = object_labels
        self.activity_labels = activity_labels
        self.embedding_table = embedding_table
        self.m = m
        self.refined_labels = refined_labels
        self.batch_size = batch_size
        self.segment_count = segment_count
        self.iterations = iterations
        self.lr = lr
        self.weight_decay = weight_decay
        self.milestones = milestones
        self.divisors = divisors
        self.pretrain_iterations = pretrain_iterations
        self.pretrain_lr = pretrain_lr
        self.dropout_rate = dropout_rate
        self.crop_min = crop_min
        self.crop_max = crop_max
        self.crop_size = crop_size
        self.eval_frames = eval_frames
        self.trunk_channels = trunk_channels
        self.fc_width = fc_width
        self.seed = seed

    def _clips(self, X, y=None, need_labels=False) -> list:
        clips = []
        for i, item in enumerate(X):
            if isinstance(item, VideoClip):
                clip = item
                if y is not None:
                    clip = VideoClip(item.frames, int(y[i]), item.id)
            else:
                if y is None and need_labels:
                    raise DataError("raw frame arrays need labels y")
                label = 0 if y is None else int(y[i])
                clip = VideoClip(np.asarray(item), label, f"x{i:05d}")
            clips.append(clip)
        return clips

    def _refined_ids(self, object_count: int):
        if self.strategy != "text_guided":
            return None
        label_to_id = {lab: i for i, lab in enumerate(self.object_labels or [])}
        if self.refined_labels is not None:
            unknown = [l for l in self.refined_labels if l not in label_to_id]
            if unknown:
                raise ConfigError(f"refined labels not in object vocabulary: {unknown}")
            return tuple(sorted(label_to_id[l] for l in self.refined_labels))
        if self.embedding_table is None or not self.activity_labels \
                or not self.object_labels:
            raise ConfigError(
                "text_guided needs refined_labels, or an embedding table "
                "with activity and object label vocabularies"
            )
        m = object_count // 2 if self.m == "auto" else int(self.m)
        self.ranking_ = rank_classes(list(self.activity_labels),
                                     list(self.object_labels),
                                     self.embedding_table)
        self.refined_ = select_top_m(self.ranking_, m)
        return tuple(sorted(label_to_id[l] for l in self.refined_.selected))

    def fit(self, X, y=None):
        clips = self._clips(X, y, need_labels=True)
        if not clips:
            raise DataError("no training clips")
        objects = [(np.asarray(img, dtype=np.float64), int(lab))
                   for img, lab in (self.object_images or [])]
        if not objects:
            raise DataError("object_images must provide the pretraining pool")
        a = max(c.label for c in clips) + 1
        if self.activity_labels:
            a = max(a, len(self.activity_labels))
        o = max(lab for _, lab in objects) + 1
        if self.object_labels:
            o = max(o, len(self.object_labels))
        channels = clips[0].frames.shape[1]
        lr_pre = self.lr if self.pretrain_lr is None else self.pretrain_lr
        config = TrainConfig(
            strategy=self.strategy,
            batch_size=self.batch_size,
            segment_count=self.segment_count,
            sgd=SgdConfig(lr=self.lr, weight_decay=self.weight_decay,
                          milestones=tuple(self.milestones),
                          divisors=tuple(self.divisors),
                          total_iterations=self.iterations),
            pretrain=SgdConfig(lr=lr_pre, weight_decay=self.weight_decay,
                               total_iterations=self.pretrain_iterations),
            dropout_rate=self.dropout_rate,
            seed=self.seed,
            crop=CropConfig(self.crop_min, self.crop_max, self.crop_size),
            trunk=TrunkSpec(in_channels=channels,
                            channels=tuple(self.trunk_channels),
                            fc_width=self.fc_width),
            refined_ids=self._refined_ids(o),
        )
        net = build_network(a, o, config.trunk, substream(self.seed, "init"),
                            self.dropout_rate)
        self.net_, self.log_, self.mean_ = train(net, clips, objects, config)
        self.config_ = config
        self.classes_ = np.arange(a)
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("fit the classifier before predicting")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        clips = self._clips(X)
        return np.stack([
            predict_video(self.net_, c, self.mean_, self.crop_size,
                          self.eval_frames)
            for c in clips
        ])

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y=None) -> float:
        clips = self._clips(X, y, need_labels=True)
        truth = np.asarray([c.label for c in clips])
        return float(np.mean(self.predict(clips) == truth))
