"""Per-step wall-clock timing of the mapping pipelines.

Timings exclude dataset I/O, hyperparameter fitting on the first frame and
map rendering.  Measurement is single-threaded.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .mapping import STEP_NAMES, MapperConfig, MapperState, pipeline
from .simulator import ScanLog
from .world import MapGeometry

log = logging.getLogger(__name__)

TIMED_STEPS = STEP_NAMES + ("build_map_total",)


@dataclass(frozen=True)
class FrameTiming:
    frame_index: int
    extract_xy: float
    extract_xstar: float
    build_gp: float
    predict: float
    bcm: float
    squash: float
    build_map_total: float

    def step(self, name: str) -> float:
        return getattr(self, name)


@dataclass
class StepTimings:
    pipeline: str
    records: list[FrameTiming] = field(default_factory=list)
    failures: dict = field(default_factory=dict)  # frame_index -> message
    skipped: list = field(default_factory=list)
    threads: int = 1

    def __len__(self):
        return len(self.records)

    def values(self, step: str) -> np.ndarray:
        return np.array([r.step(step) for r in self.records])


@dataclass(frozen=True)
class StepSummary:
    mean: float
    median: float
    p95: float
    minimum: float
    maximum: float


@dataclass(frozen=True)
class TimingSummary:
    pipeline: str
    frames: int
    steps: dict  # step name -> StepSummary

    def mean(self, step: str) -> float:
        return self.steps[step].mean


def instrument(pipeline_name: str, dataset: ScanLog, geometry: MapGeometry,
               config: MapperConfig | None = None) -> tuple[StepTimings, MapperState]:
    """Run a pipeline over every frame of ``dataset`` and collect step timings.

    Frames that raise are recorded in ``failures`` and excluded; frames the
    pipeline skips (no usable samples) are listed in ``skipped``.
    """
    if len(dataset.frames) == 0:
        raise ValueError("dataset has no frames")
    update = pipeline(pipeline_name)
    state = MapperState.create(geometry, config)
    timings = StepTimings(pipeline=pipeline_name)
    for scan in dataset.frames:
        try:
            result = update(state, scan)
        except Exception as exc:  # noqa: BLE001 - recorded per frame
            log.warning("frame %d failed: %s", scan.frame_index, exc)
            timings.failures[scan.frame_index] = str(exc)
            continue
        if result.skipped:
            timings.skipped.append(scan.frame_index)
            continue
        timings.records.append(FrameTiming(frame_index=scan.frame_index,
                                           **{k: result.timings.get(k, 0.0) for k in TIMED_STEPS}))
    return timings, state


def summarize(timings: StepTimings) -> TimingSummary:
    if not timings.records:
        raise ValueError("no successful frames to summarize")
    steps = {}
    for name in TIMED_STEPS:
        v = timings.values(name)
        steps[name] = StepSummary(mean=float(v.mean()), median=float(np.median(v)),
                                  p95=float(np.percentile(v, 95)),
                                  minimum=float(v.min()), maximum=float(v.max()))
    return TimingSummary(pipeline=timings.pipeline, frames=len(timings.records), steps=steps)


def write_table(summaries: dict, path) -> None:
    """Mean milliseconds per step; one column per ``(pipeline, map)`` key."""
    keys = list(summaries)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step"] + [f"{p}/{m}" for p, m in keys])
        for step in TIMED_STEPS:
            writer.writerow([step] + [f"{summaries[k].mean(step):.3f}" for k in keys])
        writer.writerow(["frames"] + [summaries[k].frames for k in keys])


def read_table(path) -> dict:
    """Parse a table from ``write_table`` into ``{(pipeline, map): {step: mean_ms}}``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    columns = [tuple(c.split("/", 1)) for c in rows[0][1:]]
    out = {c: {} for c in columns}
    for row in rows[1:]:
        for c, value in zip(columns, row[1:]):
            out[c][row[0]] = int(value) if row[0] == "frames" else float(value)
    return out


def write_histogram(timings: dict, path) -> None:
    """Per-frame build-map totals, one row per frame, for external plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pipeline", "map", "frame_index", "build_map_total_ms"])
        for (pipe, map_name), t in timings.items():
            for r in t.records:
                writer.writerow([pipe, map_name, r.frame_index, f"{r.build_map_total:.3f}"])
