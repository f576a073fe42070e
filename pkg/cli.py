# cli.py
"""
Road inspection workflow entry point.

    python cli.py gen-data --count 200
    python cli.py train --data runs/latest/data
    python cli.py eval --weights runs/latest/train/best.weights --data runs/latest/data
    python cli.py eval --published-scores
    python cli.py simulate --scene pipeline --detector oracle
    python cli.py bench --repetitions 100
    python cli.py serve --port 8000

Results go to files under --out; diagnostics go to stderr. Exit status is 2 on
configuration/data errors and 1 on any other failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from core.config_manager import RunConfigManager
from core.config_models import DetectorKind, RunConfig, SinkKind, Variant
from core.detection import Detection, run_detector
from core.errors import ConfigurationError, RoadInspectError
from core.logging_setup import configure_logging
from core.metrics import ACCURACY_DEFINITION, bench_latency, evaluate_frames, published_score_consistency
from core.model_zoo import Network, build_network, config_from_text, config_to_text, network_from_config
from core.pose import CameraModel
from core.report_exporter import MetricsReportExporter, comparison_text, discrepancy_text
from core.trainer import Trainer, save_training_chart
from core.weights_io import load_weights
from dataset.samples import Sample, load_dataset, resize_image, save_sample, split
from dataset.scene_renderer import generate_scene, load_scene, random_pose, random_scene

logger = logging.getLogger("cli")

NETWORK_FILE = "network.cfg"
MANIFEST_FILE = "manifest.txt"


# ---------------------------------------------------------------- helpers

def load_run_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    manager = RunConfigManager(args.config)
    return manager.load(overrides, full_scale=args.full_scale)


def build_from_config(cfg: RunConfig, variant: Optional[Variant] = None) -> Network:
    options = cfg.network
    return build_network(variant or options.variant, options.num_classes, options.boxes_per_cell,
                         cfg.train.input_size, options.width, cfg.seed, cfg.train.channels)


def load_network(cfg: RunConfig, weights: Optional[str], network_cfg: Optional[str] = None,
                 variant: Optional[Variant] = None) -> Network:
    """Rebuild the trained network from its config file, then load weights"""
    cfg_path = Path(network_cfg) if network_cfg else None
    if cfg_path is None and weights:
        candidate = Path(weights).with_name(NETWORK_FILE)
        cfg_path = candidate if candidate.exists() else None
    if cfg_path is not None:
        net = network_from_config(config_from_text(cfg_path.read_text(encoding="utf-8")), cfg.seed)
    else:
        net = build_from_config(cfg, variant)
    if weights:
        load_weights(net, weights)
    return net


def oracle_detections(sample: Sample) -> List[Detection]:
    return [Detection(a.bbox, a.class_id, 1.0, i) for i, a in enumerate(sample.annotations)]


def validation_samples(cfg: RunConfig, data_dir: str, use_all: bool) -> List[Sample]:
    samples, skipped = load_dataset(data_dir, cfg.network.num_classes)
    if skipped:
        skipped.write(Path(cfg.out_dir) / "skipped.txt")
    if use_all or len(samples) < 2:
        return samples
    return split(samples, cfg.train_fraction, cfg.seed)[1]


# ---------------------------------------------------------------- commands

def cmd_gen_data(args: argparse.Namespace, cfg: RunConfig) -> int:
    count = cfg.dataset_size if args.count is None else args.count
    if count < 0:
        raise ConfigurationError("count must be >= 0")
    out_dir = Path(args.data or Path(cfg.out_dir) / "data")
    out_dir.mkdir(parents=True, exist_ok=True)
    camera = CameraModel(cfg.camera.hfov, cfg.train.input_size, cfg.camera.mount_pitch)
    master = np.random.default_rng([cfg.seed, 0x6E4])
    manifest = []
    for index in range(count):
        scene_seed = int(master.integers(0, 2 ** 31))
        scene = random_scene(scene_seed, noise=args.noise)
        pose = random_pose(scene, scene_seed)
        sample = generate_scene(scene, camera, pose, sample_id=f"img{index:05d}")
        image_path, label_path = save_sample(sample, out_dir)
        manifest.append(f"{image_path.name} {label_path.name} {len(sample.annotations)}")
    (out_dir / MANIFEST_FILE).write_text("".join(line + "\n" for line in manifest), encoding="utf-8")
    logger.info("generated %d samples in %s", count, out_dir)
    return 0


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    samples, skipped = load_dataset(args.data, cfg.network.num_classes)
    out_dir = Path(cfg.out_dir) / "train"
    if skipped:
        skipped.write(out_dir / "skipped.txt")
    if len(samples) >= 2:
        train_set, val_set = split(samples, cfg.train_fraction, cfg.seed)
    else:
        train_set, val_set = samples, []
    net = build_from_config(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / NETWORK_FILE).write_text(config_to_text(net.config), encoding="utf-8")
    RunConfigManager(use_env=False).save_config(cfg, out_dir / "run.cfg")

    trainer = Trainer(net, cfg.train, train_set, val_set, out_dir, cfg.augment, cfg.detect,
                      seed=cfg.seed, progress=not args.no_progress)
    if args.resume:
        trainer.resume(args.resume)
    result = trainer.run(args.iterations)
    save_training_chart(out_dir)
    logger.info("training done: loss %.4g -> %.4g over %d iterations, %d checkpoints",
                result.initial_loss, result.final_loss, result.iterations, len(result.checkpoints))
    if result.best is not None:
        logger.info("best checkpoint: iteration %d (mAP %.2f)", result.best.iteration, result.best.map)
    return 0


def _evaluate(cfg: RunConfig, samples: Sequence[Sample], net: Optional[Network], title: str):
    frames = []
    for sample in samples:
        if net is None:
            detections = oracle_detections(sample)
        else:
            image = sample.image
            if image.shape[1:] != (net.input_size, net.input_size):
                image = resize_image(image, net.input_size)
            detections = run_detector(net, image, cfg.detect.conf_thresh, cfg.detect.iou_thresh)
        frames.append((detections, sample.truths))
    return evaluate_frames(frames, cfg.network.num_classes, cfg.detect.strict_duplicates, title=title)


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    out_dir = Path(cfg.out_dir) / "eval"
    exporter = MetricsReportExporter()
    formats = args.formats.split(",")

    if args.published_scores:
        out_dir.mkdir(parents=True, exist_ok=True)
        text = discrepancy_text(published_score_consistency())
        (out_dir / "published_score_consistency.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        if not args.data:
            return 0

    if not args.data:
        raise ConfigurationError("eval needs --data (or --published-scores alone)")
    samples = validation_samples(cfg, args.data, args.all)

    if args.compare:
        reports = {}
        for variant, weights in zip((Variant.DEFAULT, Variant.IMPROVED), args.compare):
            net = load_network(cfg, weights, variant=variant)
            reports[variant.value] = _evaluate(cfg, samples, net, f"{variant.value} model")
            exporter.write(reports[variant.value], out_dir, f"report_{variant.value}", formats)
        text = comparison_text(reports)
        (out_dir / "comparison.txt").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return 0

    detector = DetectorKind(args.detector)
    net = None
    if detector == DetectorKind.NETWORK:
        net = load_network(cfg, args.weights, args.network_config)
    report = _evaluate(cfg, samples, net, f"{detector.value} detector")
    exporter.write(report, out_dir, "report", formats)
    sys.stdout.write(exporter.to_text(report))
    logger.info("%s", ACCURACY_DEFINITION)
    return 0


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    from uav.simulation import Simulation, lane_scene, pipeline_scene, start_state

    sim_updates = {}
    if args.detector:
        sim_updates["detector"] = args.detector
    if args.sink:
        sim_updates["sink"] = args.sink
    if args.sink_address:
        sim_updates["sink_address"] = args.sink_address
    if args.max_ticks:
        sim_updates["max_ticks"] = args.max_ticks
    if sim_updates:
        data = cfg.model_dump()
        data["sim"].update(sim_updates)
        try:
            cfg = RunConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigurationError(f"invalid simulation options: {exc}") from exc

    scene_path = args.scene_file or cfg.scene_path
    if scene_path:
        scene = load_scene(scene_path)
    else:
        scene = lane_scene(cfg.seed) if args.scene == "lane" else pipeline_scene(cfg.seed)
    start_x = args.start_x if args.start_x is not None else (1.0 if args.scene == "lane" else 0.0)

    net = None
    if cfg.sim.detector == DetectorKind.NETWORK:
        net = load_network(cfg, args.weights, args.network_config)
    out_dir = Path(cfg.out_dir) / "simulate"
    sim = Simulation(cfg, scene, start_state(start_x), net=net, out_dir=out_dir)
    result = sim.run_realtime() if (args.realtime or cfg.sim.realtime) else sim.run()
    sim.write_outputs(result)
    counts = result.report_counts()
    logger.info("simulation done: %d ticks, %d reports (%s)", result.ticks, len(result.reports),
                ", ".join(f"{k} {v}" for k, v in counts.items() if v))
    return 0


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    size = cfg.train.input_size
    if args.data:
        samples, _ = load_dataset(args.data, cfg.network.num_classes)
        images = [resize_image(s.image, size) for s in samples[:args.images]]
    else:
        rng = np.random.default_rng(cfg.seed)
        images = [rng.uniform(0.0, 1.0, size=(cfg.train.channels, size, size)) for _ in range(args.images)]
    if not images:
        raise ConfigurationError("bench needs at least one image")

    lines = [f"{'variant':<10}{'mean_ms':>10}{'min_ms':>10}{'max_ms':>10}{'reps':>6}"]
    for variant in (Variant.DEFAULT, Variant.IMPROVED):
        weights = args.weights.get(variant.value) if args.weights else None
        net = load_network(cfg, weights, variant=variant)
        stats = bench_latency(net, images, args.repetitions, args.warmup,
                              cfg.detect.conf_thresh, cfg.detect.iou_thresh)
        lines.append(f"{variant.value:<10}{stats.mean * 1e3:>10.3f}{stats.min * 1e3:>10.3f}"
                     f"{stats.max * 1e3:>10.3f}{stats.repetitions:>6d}")
    text = "\n".join(lines) + "\n"
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_serve(args: argparse.Namespace, cfg: RunConfig) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port, log_level=args.log_level.lower())
    return 0


# ---------------------------------------------------------------- parser

def _weights_pair(value: str) -> Dict[str, str]:
    """default=path,improved=path"""
    pairs = {}
    for item in value.split(","):
        key, sep, path = item.partition("=")
        if not sep or key not in ("default", "improved"):
            raise argparse.ArgumentTypeError(f"expected default=PATH,improved=PATH, got {value!r}")
        pairs[key] = path
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadinspect", description="Road inspection UAV workflow")
    parser.add_argument("--config", help="run config file (key = value sections)")
    parser.add_argument("--seed", type=int, help="u64 seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--full-scale", action="store_true", help="full-scale training values")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="render a synthetic labelled dataset")
    gen.add_argument("--count", type=int)
    gen.add_argument("--data", help="dataset directory (default <out>/data)")
    gen.add_argument("--noise", type=float, default=0.02)
    gen.set_defaults(handler=cmd_gen_data)

    train = sub.add_parser("train", help="train a detector")
    train.add_argument("--data", required=True)
    train.add_argument("--iterations", type=int)
    train.add_argument("--resume", help="checkpoint .weights to resume from")
    train.add_argument("--no-progress", action="store_true")
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a detector")
    evaluate.add_argument("--data")
    evaluate.add_argument("--weights")
    evaluate.add_argument("--network-config")
    evaluate.add_argument("--detector", choices=[k.value for k in DetectorKind], default="network")
    evaluate.add_argument("--compare", nargs=2, metavar=("DEFAULT_WEIGHTS", "IMPROVED_WEIGHTS"))
    evaluate.add_argument("--published-scores", action="store_true", help="check the published metric table")
    evaluate.add_argument("--all", action="store_true", help="evaluate every sample, not the split")
    evaluate.add_argument("--formats", default="text,lines,csv,json")
    evaluate.set_defaults(handler=cmd_eval)

    simulate = sub.add_parser("simulate", help="closed-loop two-node simulation")
    simulate.add_argument("--scene", choices=["lane", "pipeline"], default="pipeline")
    simulate.add_argument("--scene-file")
    simulate.add_argument("--start-x", type=float)
    simulate.add_argument("--detector", choices=[k.value for k in DetectorKind])
    simulate.add_argument("--weights")
    simulate.add_argument("--network-config")
    simulate.add_argument("--sink", choices=[k.value for k in SinkKind])
    simulate.add_argument("--sink-address")
    simulate.add_argument("--max-ticks", type=int)
    simulate.add_argument("--realtime", action="store_true")
    simulate.set_defaults(handler=cmd_simulate)

    bench = sub.add_parser("bench", help="detection latency of both variants")
    bench.add_argument("--data")
    bench.add_argument("--weights", type=_weights_pair)
    bench.add_argument("--images", type=int, default=4)
    bench.add_argument("--repetitions", type=int, default=100)
    bench.add_argument("--warmup", type=int, default=1)
    bench.set_defaults(handler=cmd_bench)

    serve = sub.add_parser("serve", help="run the defect report server")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        cfg = load_run_config(args)
        return args.handler(args, cfg)
    except RoadInspectError as exc:
        logger.error("%s", exc)
        return 2
    except Exception as exc:
        logger.exception("unexpected failure: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
