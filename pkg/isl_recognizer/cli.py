"""
Command line interface.

    python main.py <command> [--config FILE] [--seed N] [--v 0-3] ...
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .client import stream_client
from .config import DEFAULT_GRID_SWEEP, HOST, PORT, PipelineConfig, load_config
from .datasets import Dataset, GestureTake, load_image
from .errors import ClientError, IslrError
from .evaluation import evaluate_gestures, evaluate_poses, split_dataset, sweep_grids
from .face import AnnotationFaceProvider
from .gesture_hmm import FrameTuple, encode, parse_gesture_definitions, segment_stream, train_bank
from .grid_features import GridSpec, export_features_csv
from .knn_classifier import LabeledSample, classify, fit
from .persistence import ModelSet, load_models, save_models
from .pipeline import (RecognitionPipeline, classify_tuples, features_from_image, gesture_line, hand_from_image,
                       timing_summary)
from .synth import Jitter, synth_dataset, write_synth_dataset
from .utils import Colors, configure_logging, parse_verbosity_args, print_colored

logger = logging.getLogger(__name__)


# ===== Helpers =====

def _config(args) -> PipelineConfig:
    return load_config(args.config, seed=args.seed, grid=getattr(args, "grid", None),
                       k=getattr(args, "k", None), knn_backend=getattr(args, "backend", None))


def _labeled_features(items, cfg: PipelineConfig) -> List[LabeledSample]:
    samples = []
    for label, path in items:
        features = features_from_image(load_image(path), cfg)
        if features is None:
            logger.warning(f"No hand found in {path}; sample skipped")
            continue
        samples.append(LabeledSample(label, features))
    return samples


def _load_models_or_empty(directory) -> ModelSet:
    try:
        return load_models(directory)
    except FileNotFoundError:
        return ModelSet()


def _face_provider_for(take: GestureTake, cfg: PipelineConfig):
    if cfg.face_provider == "annotation" and not cfg.face_annotations and take.faces_path is not None:
        return AnnotationFaceProvider(take.faces_path)
    return None


def _take_tuples(take: GestureTake, cfg: PipelineConfig, models: ModelSet,
                 use_tuples: bool) -> List[Optional[FrameTuple]]:
    """The per-frame tuple stream of a take, scripted or recognised from its frames."""
    if use_tuples:
        return take.read_tuples()
    pipeline = RecognitionPipeline(cfg, models, _face_provider_for(take, cfg))
    return [pipeline.process_frame(frame).frame_tuple for frame in take.read_frames()]


def _primary_segment(tuples: Sequence[Optional[FrameTuple]], debounce: int) -> List[FrameTuple]:
    segments = list(segment_stream(tuples, debounce))
    return max(segments, key=len) if segments else []


def _write_csv(frame, path) -> None:
    if path:
        frame.to_csv(path, index=False, encoding="utf-8")
        logger.info(f"Wrote {path}")


# ===== Commands =====

def cmd_train_pose(args) -> int:
    cfg = _config(args)
    dataset = Dataset(args.dataset)
    existing = _load_models_or_empty(args.models)

    pose_samples = _labeled_features(dataset.pose_images(), cfg)
    pose_model = fit(pose_samples, k=cfg.k, backend=cfg.knn_backend)
    intermediate_model = existing.intermediate_model
    if dataset.intermediate_dir.is_dir():
        intermediate_model = fit(_labeled_features(dataset.intermediate_images(), cfg),
                                 k=cfg.k, backend=cfg.knn_backend)

    save_models(ModelSet(pose_model, intermediate_model, existing.bank), args.models)
    print_colored(f"✅ Pose model: {len(pose_samples)} samples, {len(pose_model.labels)} classes, "
                  f"grid {cfg.grid}, k={cfg.k}", Colors.GREEN, True)
    if intermediate_model is not None:
        print_colored(f"✅ Intermediate model: {len(intermediate_model)} samples, "
                      f"labels {', '.join(intermediate_model.labels)}", Colors.GREEN)
    return 0


def cmd_train_gestures(args) -> int:
    cfg = _config(args)
    dataset = Dataset(args.dataset)
    definitions = parse_gesture_definitions(args.definitions or dataset.definitions_path)
    models = _load_models_or_empty(args.models)

    fallback = models.intermediate_model.labels if models.intermediate_model else None
    table = definitions.symbol_table(fallback)
    sequences = {}
    for take in dataset.training_takes():
        if take.label not in definitions.names:
            logger.warning(f"Take {take.name} has no gesture definition; skipped")
            continue
        segment = _primary_segment(_take_tuples(take, cfg, models, args.tuples), cfg.debounce)
        if segment:
            sequences.setdefault(take.label, []).append(encode(segment, table))

    bank = train_bank(definitions, sequences, table, cfg.hmm_max_iter, cfg.hmm_tol,
                      cfg.emission_floor, cfg.reject_margin)
    save_models(ModelSet(models.pose_model, models.intermediate_model, bank), args.models)
    print_colored(f"✅ Gesture bank: {len(bank.chains)} chains, S={table.size}, "
                  f"reject threshold {bank.reject_threshold:.4f}", Colors.GREEN, True)
    return 0


def cmd_classify_image(args) -> int:
    cfg = _config(args)
    models = load_models(args.models)
    model = models.pose_model or models.intermediate_model
    if model is None:
        raise IslrError(f"no pose model in {args.models}")
    cfg = cfg.model_copy(update={"grid": str(model.grid)})
    features = features_from_image(load_image(args.image), cfg)
    if features is None:
        print("NONE")
        return 0
    result = classify(model, features)
    print(f"POSE {result.label} {result.votes}")
    return 0


def cmd_classify_take(args) -> int:
    cfg = _config(args)
    models = load_models(args.models)
    take = GestureTake(Path(args.take).parent.name, Path(args.take))

    if args.tuples:
        decisions = classify_tuples(models, take.read_tuples(), cfg.debounce)
        for decision in decisions:
            print(gesture_line(decision))
        if not decisions:
            print("NONE")
        return 0

    pipeline = RecognitionPipeline(cfg, models, _face_provider_for(take, cfg))
    results = []
    decisions = []
    for frame in take.read_frames():
        result = pipeline.process_frame(frame)
        results.append(result)
        if args.frames:
            print(f"{result.frame_index:04d} {result.result_line()}")
        if result.gesture is not None:
            decisions.append(result.gesture)
    final = pipeline.finish()
    if final is not None:
        decisions.append(final)
    for decision in decisions:
        print(gesture_line(decision))
    if not decisions:
        print("NONE")

    if results:
        summary = timing_summary(results)
        print_colored("\nAverage time per frame (ms)", Colors.CYAN, True)
        print(summary.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
        _write_csv(summary, args.csv)
    return 0


def cmd_evaluate_poses(args) -> int:
    cfg = _config(args)
    samples = _labeled_features(Dataset(args.dataset).pose_images(), cfg)
    if args.train_as_test:
        train, test = samples, samples
    else:
        train, test = split_dataset(samples, cfg.test_fraction, cfg.seed)
    model = fit(train, k=cfg.k, backend=cfg.knn_backend)
    report = evaluate_poses(model, test)

    print_colored(f"Pose evaluation: {len(train)} training / {len(test)} test samples", Colors.CYAN, True)
    print(report.format_table())
    if args.csv:
        report.to_csv(args.csv)
    return 0


def cmd_evaluate_gestures(args) -> int:
    cfg = _config(args)
    models = load_models(args.models)
    if models.bank is None:
        raise IslrError(f"no gesture bank in {args.models}")
    table = models.bank.symbols

    takes = []
    for take in Dataset(args.dataset).test_takes():
        segment = _primary_segment(_take_tuples(take, cfg, models, args.tuples), cfg.debounce)
        if segment:
            takes.append((take.label, encode(segment, table)))
        else:
            logger.warning(f"Take {take.name} produced no gesture segment")
    report = evaluate_gestures(models.bank, takes)

    print_colored(f"Gesture evaluation: {len(takes)} takes", Colors.CYAN, True)
    print(report.format_table())
    if args.csv:
        report.to_csv(args.csv)
    return 0


def cmd_sweep_grid(args) -> int:
    cfg = _config(args)
    grids = [GridSpec.parse(g) for g in (args.grids.split(",") if args.grids else DEFAULT_GRID_SWEEP)]
    hands = []
    for label, path in Dataset(args.dataset).pose_images():
        image = load_image(path)
        hand = hand_from_image(image, cfg)
        if hand is not None:
            hands.append((label, hand))
    table = sweep_grids(hands, grids, cfg.k, cfg.knn_backend, cfg.test_fraction, cfg.seed)

    print_colored(f"Grid sweep over {len(hands)} samples (k={cfg.k}, seed={cfg.seed})", Colors.CYAN, True)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    _write_csv(table, args.csv)
    return 0


def cmd_export_features(args) -> int:
    cfg = _config(args)
    dataset = Dataset(args.dataset)
    items = dataset.intermediate_images() if args.intermediate else dataset.pose_images()
    samples = _labeled_features(items, cfg)
    count = export_features_csv(((s.label, s.features) for s in samples), args.output)
    print(f"Exported {count} feature vectors ({cfg.grid}) to {args.output}")
    return 0


def cmd_synth(args) -> int:
    jitter = Jitter() if not args.no_jitter else Jitter(0.0, 0.0, 0.0)
    gestures = [g.strip() for g in args.gestures.split(",")] if args.gestures else None
    seed = args.seed if args.seed is not None else 0
    dataset = synth_dataset(seed=seed, classes=args.classes, per_class=args.per_class, gestures=gestures,
                            takes_per_gesture=args.takes, test_takes_per_gesture=args.test_takes,
                            impostors=args.impostors, jitter=jitter)
    write_synth_dataset(dataset, args.output, render_frames=args.render_frames)
    print_colored(f"✅ Synthetic dataset written to {args.output}", Colors.GREEN, True)
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    cfg = _config(args)
    serve(cfg, args.models, args.host, args.port)
    return 0


def cmd_stream(args) -> int:
    summary = stream_client(args.host, args.port, args.frames, args.fps)
    return 0 if summary.lines else 1


# ===== Parser =====

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value pipeline configuration file")
    common.add_argument("--seed", type=int, default=None, help="random seed (splits, synthesis)")
    common.add_argument("--v", type=int, default=0, choices=[0, 1, 2, 3],
                        help="Verbosity level: 0=minimal, 1=basic, 2=detailed, 3=full debug")
    common.add_argument("--csv", help="also write machine-readable CSV output here")

    knn = argparse.ArgumentParser(add_help=False)
    knn.add_argument("--grid", help="feature grid, e.g. 10x10")
    knn.add_argument("--k", type=int, help="neighbour count")
    knn.add_argument("--backend", choices=["brute", "kd_tree"], help="k-NN backend")

    parser = argparse.ArgumentParser(prog="isl-recognizer",
                                     description="Indian Sign Language pose and gesture recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-pose", parents=[common, knn], help="fit the pose and intermediate-pose models")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.set_defaults(func=cmd_train_pose)

    p = sub.add_parser("train-gestures", parents=[common], help="train the HMM gesture bank")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--definitions", help="gesture definition file (default: <dataset>/gestures.txt)")
    p.add_argument("--tuples", action="store_true", help="train from tuples.txt instead of frames")
    p.set_defaults(func=cmd_train_gestures)

    p = sub.add_parser("classify-image", parents=[common], help="classify the pose in one image")
    p.add_argument("image")
    p.add_argument("--models", required=True)
    p.set_defaults(func=cmd_classify_image)

    p = sub.add_parser("classify-take", parents=[common], help="classify the gesture(s) in one take")
    p.add_argument("take")
    p.add_argument("--models", required=True)
    p.add_argument("--tuples", action="store_true", help="classify tuples.txt instead of frames")
    p.add_argument("--frames", action="store_true", help="print the per-frame result lines")
    p.set_defaults(func=cmd_classify_take)

    p = sub.add_parser("evaluate-poses", parents=[common, knn], help="accuracy and confusion matrix for poses")
    p.add_argument("--dataset", required=True)
    p.add_argument("--train-as-test", action="store_true", help="evaluate on the training samples")
    p.set_defaults(func=cmd_evaluate_poses)

    p = sub.add_parser("evaluate-gestures", parents=[common], help="confusion matrix for held-out takes")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--tuples", action="store_true")
    p.set_defaults(func=cmd_evaluate_gestures)

    p = sub.add_parser("sweep-grid", parents=[common, knn], help="pose accuracy per grid size")
    p.add_argument("--dataset", required=True)
    p.add_argument("--grids", help="comma separated grids (default: 5x5,10x10,10x15,15x15,15x20,20x20)")
    p.set_defaults(func=cmd_sweep_grid)

    p = sub.add_parser("export-features", parents=[common, knn], help="write grid features as CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--intermediate", action="store_true", help="export intermediate poses instead")
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--gestures", help="comma separated gesture names (default: all twelve)")
    p.add_argument("--takes", type=int, default=15)
    p.add_argument("--test-takes", type=int, default=20)
    p.add_argument("--impostors", type=int, default=20)
    p.add_argument("--render-frames", action="store_true", help="also render gesture takes to frames")
    p.add_argument("--no-jitter", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", parents=[common], help="run the frame-streaming service")
    p.add_argument("--models", required=True)
    p.add_argument("--host", default=HOST)
    p.add_argument("--port", type=int, default=PORT)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("stream", parents=[common], help="stream a frame directory to the service")
    p.add_argument("frames")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=PORT)
    p.add_argument("--fps", type=float, default=5.0)
    p.set_defaults(func=cmd_stream)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    configure_logging(parse_verbosity_args(argv))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ClientError as e:
        print_colored(f"❌ {e}", Colors.RED, True)
        return 1
    except (IslrError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print_colored(f"❌ ERROR: {e}", Colors.RED, True)
        return 1
