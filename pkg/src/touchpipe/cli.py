"""Command line interface.

Subcommands: calibrate (grid JSON -> binary undistortion map), run (replay a
frame directory through the pipeline), synth (render a synthetic corpus),
eval (score an event log against ground truth), bench (timing report).
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench, calibration, evaluate, synth
from .pipeline import ConfigError, DataError, PipelineConfig, run_replay

CONFIG_ENV = "TOUCHPIPE_CONFIG"


def _load_config(args) -> PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    cfg = PipelineConfig.from_json(path) if path else PipelineConfig()
    if getattr(args, "threads", None) is not None:
        cfg = replace(cfg, threads=args.threads)
    if getattr(args, "tuio_host", None) is not None:
        cfg = replace(cfg, tuio_host=args.tuio_host)
    if getattr(args, "tuio_port", None) is not None:
        cfg = replace(cfg, tuio_port=args.tuio_port)
    if getattr(args, "no_tuio", False):
        cfg = replace(cfg, tuio_enabled=False)
    return cfg


def _cmd_calibrate(args) -> int:
    grid = calibration.CalibrationGrid.from_json(args.grid)
    umap = calibration.build_map(grid, args.out_width, args.out_height)
    umap.save(args.output)
    flagged = int((~np.isfinite(umap.coords)).any(axis=-1).sum())
    print(
        f"wrote {args.output}: {umap.out_width}x{umap.out_height} map "
        f"({flagged} out-of-range entries)"
    )
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    summary = run_replay(
        args.frames,
        cfg,
        log_path=args.log,
        pace_fps=args.fps,
        dump_tree_dir=args.dump_trees,
    )
    print(f"processed {summary.frames} frames", end="")
    print(f", log at {summary.log_path}" if summary.log_path else "")
    return 0


def _cmd_synth(args) -> int:
    scene = synth.SyntheticScene.from_json(args.scene)
    truth_path = synth.write_corpus(scene, args.out)
    print(f"rendered {scene.frames} frames to {args.out} (truth: {truth_path})")
    return 0


def _cmd_eval(args) -> int:
    metrics = evaluate.evaluate_files(args.log, args.truth, args.radius)
    print(json.dumps(metrics.to_dict(), indent=2))
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    thread_counts = [int(t) for t in args.threads_list.split(",")]
    report = bench.run_bench(args.frames, cfg, thread_counts, args.runs)
    print(report.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="touchpipe",
        description="Optical multi-touch processing pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="build a binary undistortion map from a grid file")
    p.add_argument("--grid", required=True, help="calibration grid JSON")
    p.add_argument("--out-width", type=int, required=True)
    p.add_argument("--out-height", type=int, required=True)
    p.add_argument("--output", required=True, help="output map path")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("run", help="replay a directory of PGM frames")
    p.add_argument("--frames", required=True, help="directory of P5 PGM frames")
    p.add_argument("--config", help=f"pipeline config JSON (or ${CONFIG_ENV})")
    p.add_argument("--log", help="write a newline-delimited JSON event log")
    p.add_argument("--fps", type=float, help="pace playback at this rate")
    p.add_argument("--threads", type=int, help="worker thread count override")
    p.add_argument("--tuio-host", help="TUIO destination host")
    p.add_argument("--tuio-port", type=int, help="TUIO destination port")
    p.add_argument("--no-tuio", action="store_true", help="disable the UDP sink")
    p.add_argument("--dump-trees", help="write per-ROI component tree dumps here")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synth", help="render a synthetic corpus with ground truth")
    p.add_argument("--scene", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="score an event log against ground truth")
    p.add_argument("--log", required=True, help="event log from `run --log`")
    p.add_argument("--truth", required=True, help="ground truth JSON")
    p.add_argument(
        "--radius", type=float, default=evaluate.DEFAULT_MATCH_RADIUS,
        help="detection match radius in pixels",
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="per-stage timing report")
    p.add_argument("--frames", required=True, help="directory of P5 PGM frames")
    p.add_argument("--config", help=f"pipeline config JSON (or ${CONFIG_ENV})")
    p.add_argument(
        "--threads-list", default="1,2,4", help="comma-separated thread counts"
    )
    p.add_argument("--runs", type=int, default=5, help="averaging runs")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, calibration.CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, synth.SceneError, evaluate.EvaluationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
