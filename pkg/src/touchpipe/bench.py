"""Timing harness for the frame pipeline.

Replays a corpus several times per thread count without any network or log
output, bucketing per-frame processing time by the number of fingertips
evaluated in the frame, and reports mean and 95th percentile per bucket.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .image import frame_paths, read_pgm
from .pipeline import DataError, Pipeline, PipelineConfig

MAX_BUCKET = 40


@dataclass
class BenchReport:
    thread_counts: list
    runs: int
    # results[threads] = {"mean_ms", "p95_ms", "frames", "buckets": {count: {...}}}
    results: dict

    def format(self) -> str:
        lines = []
        for threads in self.thread_counts:
            r = self.results[threads]
            lines.append(
                f"threads={threads}: mean {r['mean_ms']:.3f} ms, "
                f"p95 {r['p95_ms']:.3f} ms over {r['frames']} frames x {self.runs} runs"
            )
            for count in sorted(r["buckets"]):
                b = r["buckets"][count]
                lines.append(
                    f"  fingertips={count:3d}: mean {b['mean_ms']:.3f} ms, "
                    f"p95 {b['p95_ms']:.3f} ms  (n={b['n']})"
                )
        return "\n".join(lines)


def run_bench(
    frames_dir,
    config: PipelineConfig,
    thread_counts=(1, 2, 4),
    runs: int = 5,
) -> BenchReport:
    paths = frame_paths(frames_dir)
    if not paths:
        raise DataError(f"no PGM frames found in {frames_dir}")
    images = [read_pgm(p) for p in paths]

    results = {}
    for threads in thread_counts:
        cfg = replace(config, threads=threads, tuio_enabled=False)
        per_frame = np.zeros(len(images), dtype=np.float64)
        counts = np.zeros(len(images), dtype=np.int64)
        for _ in range(runs):
            pipeline = Pipeline(cfg)
            try:
                for i, img in enumerate(images):
                    result = pipeline.process_frame(img)
                    per_frame[i] += result.timings["total"] / 1000.0
                    counts[i] = min(len(result.fingertips), MAX_BUCKET)
            finally:
                pipeline.close()
        per_frame /= runs

        buckets = {}
        for count in np.unique(counts):
            sel = per_frame[counts == count]
            buckets[int(count)] = {
                "mean_ms": float(sel.mean()),
                "p95_ms": float(np.percentile(sel, 95)),
                "n": int(sel.size),
            }
        results[threads] = {
            "mean_ms": float(per_frame.mean()),
            "p95_ms": float(np.percentile(per_frame, 95)),
            "frames": len(images),
            "buckets": buckets,
        }
    return BenchReport(list(thread_counts), runs, results)
