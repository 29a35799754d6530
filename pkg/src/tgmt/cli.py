"""Command line entry points.

Exit codes: 0 success, 1 a check failed, 2 bad input or config,
3 an activity label could not be scored, 4 training diverged.
"""

import argparse
import os
import sys

import numpy as np

from . import config as cfg
from . import embeddings as emb
from .errors import (
    ConfigError,
    CropError,
    DataError,
    DegenerateVectorError,
    DimError,
    DuplicateClassError,
    EmptyActivitySetError,
    EmptyLabelError,
    FormatError,
    IoError,
    LabelError,
    OptimizerError,
    SamplingError,
    ShapeError,
    TrainingDivergedError,
    UnembeddableLabelError,
)
from .gradcheck import run_suite, suite_passed
from .network import (
    STRATEGIES,
    build_network,
    evaluate,
    train,
)
from .relevance import (
    rank_classes,
    ranking_to_tsv,
    report_to_tsv,
    select_top_m,
    skipped_to_text,
    tra_report,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .seeding import substream
from .synth import generate_world, write_world

MEAN_KEY = "mean_pixel"

_INPUT_ERRORS = (
    FormatError,
    IoError,
    DimError,
    DuplicateClassError,
    ShapeError,
    LabelError,
    OptimizerError,
    ConfigError,
    DataError,
    SamplingError,
    CropError,
    OSError,
)
_LABEL_ERRORS = (
    UnembeddableLabelError,
    EmptyLabelError,
    EmptyActivitySetError,
    DegenerateVectorError,
)


def _write(path, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read_labels(path) -> list:
    """One label per line; blank lines are ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        labels = [line.strip() for line in fh]
    labels = [label for label in labels if label]
    if not labels:
        raise DataError(f"no labels in {path}")
    return labels


def _load_table(path, fmt: str) -> emb.EmbeddingTable:
    if fmt == "text":
        return emb.load_text(path)
    return emb.load_binary(path)


def cmd_embed_inspect(args) -> int:
    table = _load_table(args.file, args.format)
    print(f"dim\t{table.dim}")
    print(f"vocab\t{len(table)}")
    for token in args.tokens:
        if token in table:
            print(f"{token}\tpresent\t{table.norm(token):.6g}")
        else:
            print(f"{token}\tabsent")
    return 0


def _resolve_tra_inputs(args):
    """Flags win over [tra] config keys; each input must come from one
    of the two."""
    rc = cfg.parse_config(args.config) if args.config else cfg.default_config()
    g = lambda key: rc.get("tra", key)
    activities = args.activities or g("activities_file")
    objects = args.objects or g("objects_file")
    table_path = args.embeddings or g("embeddings_file")
    fmt = args.format or g("embeddings_format")
    missing = [name for name, value in
               (("activities", activities), ("objects", objects),
                ("embeddings", table_path)) if not value]
    if missing:
        raise ConfigError(f"missing inputs: {', '.join(missing)} "
                          "(pass flags or [tra] config keys)")
    m = args.m if args.m is not None else g("m")
    k = args.top_k if args.top_k is not None else g("top_k")
    return activities, objects, table_path, fmt, m, k


def cmd_tra(args) -> int:
    activities_path, objects_path, table_path, fmt, m, k = \
        _resolve_tra_inputs(args)
    activities = _read_labels(activities_path)
    objects = _read_labels(objects_path)
    table = _load_table(table_path, fmt)
    ranking = rank_classes(activities, objects, table)
    if m == "auto":
        m = len(objects) // 2
    refined = select_top_m(ranking, m)
    rows = tra_report(refined, k)
    if args.out:
        _write(os.path.join(args.out, "ranking.tsv"), ranking_to_tsv(ranking))
        _write(os.path.join(args.out, "selection.txt"),
               "".join(label + "\n" for label in refined.selected))
        _write(os.path.join(args.out, "report.tsv"), report_to_tsv(rows))
        _write(os.path.join(args.out, "skipped.txt"), skipped_to_text(ranking))
        print(f"wrote ranking, selection, report to {args.out}")
    else:
        sys.stdout.write(report_to_tsv(rows))
    print(f"ranked {len(ranking.ranks)} classes, "
          f"selected {len(refined.selected)}, "
          f"skipped {len(ranking.skipped)}")
    return 0


def cmd_synth(args) -> int:
    rc = cfg.parse_config(args.config, args.seed)
    world = generate_world(rc.world_config())
    manifest = write_world(world, args.out)
    cfg.write_effective(rc, args.out)
    print(f"activities {len(world.activity_labels)} "
          f"objects {len(world.object_labels)}")
    print(f"train clips {len(world.train_clips)} "
          f"test clips {len(world.test_clips)} "
          f"train images {len(world.train_images)} "
          f"test images {len(world.test_images)}")
    print(f"manifest {manifest}")
    return 0


def _refined_for(rc, world, out_dir=None):
    """Run relevance selection over the world's own labels. Returns
    object class ids sorted ascending."""
    ranking = rank_classes(world.activity_labels, world.object_labels,
                           world.embedding_table)
    m = rc.resolve_m(len(world.object_labels))
    refined = select_top_m(ranking, m)
    if out_dir:
        _write(os.path.join(out_dir, "ranking.tsv"), ranking_to_tsv(ranking))
        _write(os.path.join(out_dir, "selection.txt"),
               "".join(label + "\n" for label in refined.selected))
    index = {label: i for i, label in enumerate(world.object_labels)}
    return tuple(sorted(index[label] for label in refined.selected))


def _run_training(rc, world, strategy, seed, out_dir=None):
    refined = None
    if strategy == "text_guided":
        refined = _refined_for(rc, world, out_dir)
    net = build_network(len(world.activity_labels), len(world.object_labels),
                        rc.trunk_spec(), substream(seed, "init"),
                        rc.get("train", "dropout_rate"))
    tc = rc.train_config(refined_ids=refined, strategy=strategy, seed=seed)
    eval_data = world.test_clips if tc.eval_every else None
    net, log, mean = train(net, world.train_clips, world.train_images, tc,
                           eval_data=eval_data)
    return net, log, mean


def cmd_train(args) -> int:
    rc = cfg.parse_config(args.config, args.seed)
    world = generate_world(rc.world_config())
    strategy = rc.get("train", "strategy")
    net, log, mean = _run_training(rc, world, strategy, rc.seed, args.out)
    state = net.state_dict()
    state[MEAN_KEY] = mean
    ckpt = os.path.join(args.out, "checkpoint.tgmt")
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(ckpt, state)
    _write(os.path.join(args.out, "metrics.tsv"), log.to_text())
    cfg.write_effective(rc, args.out)
    print(f"strategy {strategy} seed {rc.seed}")
    print(f"checkpoint {ckpt}")
    return 0


def cmd_eval(args) -> int:
    rc = cfg.parse_config(args.config, args.seed)
    world = generate_world(rc.world_config())
    state = load_checkpoint(args.checkpoint)
    if MEAN_KEY not in state:
        raise ConfigError(f"checkpoint lacks the {MEAN_KEY} tensor")
    mean = state.pop(MEAN_KEY)
    net = build_network(len(world.activity_labels), len(world.object_labels),
                        rc.trunk_spec(), substream(rc.seed, "init"),
                        rc.get("train", "dropout_rate"))
    net.load_state_dict(state)
    protocol = args.protocol or rc.get("protocol", "protocol")
    report = evaluate(net, world.test_clips, protocol, mean,
                      rc.crop_config().output_size,
                      rc.get("protocol", "eval_frames"))
    if args.out:
        _write(os.path.join(args.out, "eval.tsv"),
               report.to_tsv(world.activity_labels))
    print(f"protocol {protocol} videos {report.videos} "
          f"accuracy {report.accuracy:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(args.seed)
    threshold = args.threshold
    for name, err in results:
        verdict = "pass" if err < threshold else "FAIL"
        print(f"{name}\t{err:.3e}\t{verdict}")
    ok = suite_passed(results, threshold)
    print(f"{'all' if ok else 'not all'} checks under {threshold:g}")
    return 0 if ok else 1


def cmd_experiment(args) -> int:
    rc = cfg.parse_config(args.config, args.seed)
    n_seeds = args.seeds if args.seeds is not None else rc.get("experiment",
                                                               "seeds")
    if n_seeds < 1:
        raise ConfigError(f"need at least one seed, got {n_seeds}")
    base = rc.seed
    rows = []
    for i in range(n_seeds):
        seed = base + i
        world = generate_world(rc.world_config(seed=seed))
        for strategy in STRATEGIES:
            net, _, mean = _run_training(rc, world, strategy, seed)
            report = evaluate(net, world.test_clips,
                              rc.get("protocol", "protocol"), mean,
                              rc.crop_config().output_size,
                              rc.get("protocol", "eval_frames"))
            rows.append((strategy, seed, report.accuracy))
            print(f"strategy {strategy} seed {seed} "
                  f"accuracy {report.accuracy:.6f}", flush=True)
    lines = ["strategy\tseed\taccuracy"]
    for strategy, seed, acc in rows:
        lines.append(f"{strategy}\t{seed}\t{acc:.6f}")
    for strategy in STRATEGIES:
        accs = [acc for s, _, acc in rows if s == strategy]
        lines.append(f"{strategy}\tmean\t{float(np.mean(accs)):.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(os.path.join(args.out, "experiment.tsv"), text)
        cfg.write_effective(rc, args.out)
        print(f"wrote {os.path.join(args.out, 'experiment.tsv')}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgmt",
        description="Text-guided multitask video classification on "
                    "synthetic worlds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embedding table utilities")
    esub = p.add_subparsers(dest="embed_command", required=True)
    pi = esub.add_parser("inspect", help="print table stats and token info")
    pi.add_argument("file")
    pi.add_argument("tokens", nargs="*")
    pi.add_argument("--format", choices=("binary", "text"), default="binary")
    pi.set_defaults(func=cmd_embed_inspect)

    p = sub.add_parser("tra", help="rank object classes by relevance to "
                                   "a set of activity labels")
    p.add_argument("--config")
    p.add_argument("--activities", help="text file, one activity label per line")
    p.add_argument("--objects", help="text file, one object label per line")
    p.add_argument("--embeddings", help="word embedding table")
    p.add_argument("--format", choices=("binary", "text"))
    p.add_argument("--m", type=int, help="number of classes to keep")
    p.add_argument("--top-k", type=int, dest="top_k",
                   help="classes per activity in the report")
    p.add_argument("--out", help="directory for ranking/selection/report files")
    p.set_defaults(func=cmd_tra)

    p = sub.add_parser("synth", help="generate a synthetic world and "
                                     "write it to disk")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one strategy on the configured "
                                     "world")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the configured "
                                    "world's test clips")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--protocol", choices=("full", "single_frame"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every "
                                         "differentiable op")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("experiment", help="train and evaluate all three "
                                          "strategies over a seed sweep")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="base seed (runs use base+i)")
    p.add_argument("--seeds", type=int, help="number of seeds to sweep")
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except _LABEL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
