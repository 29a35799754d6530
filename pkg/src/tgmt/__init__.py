"""Text-guided multitask learning for video classification.

A compact, numpy-only research codebase: word-embedding relevance
analysis picks the object classes worth co-training on, a small
two-head convnet trains on mixed video/image batches, and a synthetic
world generator provides ground truth to test the whole pipeline
end to end.
"""

__version__ = "0.1.0"

from .embeddings import EmbeddingTable, cosine, load_binary, load_text, write_binary
from .relevance import (
    LabelPhrase,
    RefinedClassSet,
    RelevanceRanking,
    RelevanceSelector,
    rank_classes,
    select_top_m,
    tokenize_label,
    tra_report,
)
from .autograd import Tensor
from .optim import SgdConfig, sgd_step
from .checkpoint import load_checkpoint, save_checkpoint
from .video import (
    CropConfig,
    CropSpec,
    VideoClip,
    apply_crop,
    evenly_spaced,
    load_clip,
    mean_subtract,
    predict_video,
    random_window,
    sample_segments,
    save_clip,
    ten_crops,
)
from .network import (
    MultitaskNet,
    MultitaskVideoClassifier,
    STRATEGIES,
    TrainConfig,
    TrunkSpec,
    build_network,
    evaluate,
    train,
)
from .synth import SyntheticWorld, WorldConfig, generate_world, load_world, write_world
from .config import RunConfig, default_config, parse_config
from .seeding import child_seed, substream
from . import errors

__all__ = [
    "CropConfig",
    "CropSpec",
    "EmbeddingTable",
    "LabelPhrase",
    "MultitaskNet",
    "MultitaskVideoClassifier",
    "RefinedClassSet",
    "RelevanceRanking",
    "RelevanceSelector",
    "RunConfig",
    "STRATEGIES",
    "SgdConfig",
    "SyntheticWorld",
    "Tensor",
    "TrainConfig",
    "TrunkSpec",
    "VideoClip",
    "WorldConfig",
    "apply_crop",
    "build_network",
    "child_seed",
    "cosine",
    "default_config",
    "errors",
    "evaluate",
    "evenly_spaced",
    "generate_world",
    "load_binary",
    "load_checkpoint",
    "load_clip",
    "load_text",
    "load_world",
    "mean_subtract",
    "parse_config",
    "predict_video",
    "rank_classes",
    "random_window",
    "sample_segments",
    "save_checkpoint",
    "save_clip",
    "select_top_m",
    "sgd_step",
    "substream",
    "ten_crops",
    "tokenize_label",
    "tra_report",
    "train",
    "write_binary",
    "write_world",
]
