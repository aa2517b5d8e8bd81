"""Scan-to-training-data conversion, scan rings and region classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .simulator import LaserScan
from .world import MapGeometry, Pose2D, world_to_grid

OCCUPIED_LABEL = 1.0
FREE_LABEL = -1.0
DUPLICATE_RADIUS = 1e-6
_EPS = 1e-9


class Region(Enum):
    A = "A"  # free space inside the inner ring
    B = "B"  # uncertain band between the rings
    C = "C"  # unobserved this frame


# integer codes used by the vectorized classifier
REGION_A, REGION_B, REGION_C = 0, 1, 2
_CODE_TO_REGION = {REGION_A: Region.A, REGION_B: Region.B, REGION_C: Region.C}


@dataclass(eq=False)
class TrainingSet:
    """GP training points with labels (+1 occupied, -1 free).

    ``beam`` and ``radius`` record which kept beam produced each sample and
    how far along it the sample lies.
    """

    X: np.ndarray
    y: np.ndarray
    beam: np.ndarray
    radius: np.ndarray

    def __len__(self):
        return self.y.shape[0]

    def subset(self, mask: np.ndarray) -> "TrainingSet":
        return TrainingSet(self.X[mask], self.y[mask], self.beam[mask], self.radius[mask])

    @classmethod
    def empty(cls) -> "TrainingSet":
        return cls(np.empty((0, 2)), np.empty(0), np.empty(0, dtype=int), np.empty(0))


@dataclass(eq=False)
class Rings:
    """Per-beam inner (last free sample) and outer (hit) radii about ``center``.

    ``r_outer`` is ``inf`` for beams without a hit; those beams are bounded by
    ``max_range`` for classification.
    """

    beam_angles: np.ndarray
    r_inner: np.ndarray
    r_outer: np.ndarray
    center: Pose2D
    max_range: float

    def __len__(self):
        return self.beam_angles.shape[0]

    @property
    def outer_limit(self) -> np.ndarray:
        return np.where(np.isinf(self.r_outer), self.max_range, self.r_outer)


def kept_beams(scan: LaserScan, decimation: int) -> np.ndarray:
    if decimation < 1:
        raise ValueError("decimation must be at least 1")
    return np.arange(0, scan.ranges.shape[0], decimation)


def _free_limit(scan: LaserScan, d: float, idx: np.ndarray) -> np.ndarray:
    """Largest radius a free sample may have on each kept beam."""
    reach = np.where(scan.hit_flags[idx], scan.ranges[idx], scan.spec.max_range)
    return reach - 1.5 * d


def _free_counts(limit: np.ndarray, d: float) -> np.ndarray:
    return np.maximum(np.floor(limit / d + _EPS), 0).astype(int)


def extract_samples(scan: LaserScan, d: float, decimation: int) -> TrainingSet:
    """Free samples every ``d`` meters along each kept beam and one occupied
    sample at each hit.  Free samples further out than ``reach - 1.5 d`` are
    dropped, where reach is the hit range (or ``max_range`` for no-hit beams).
    """
    if not d > 0:
        raise ValueError("sample interval d must be positive")
    idx = kept_beams(scan, decimation)
    angles = scan.beam_angles()[idx]
    counts = _free_counts(_free_limit(scan, d, idx), d)

    beams, radii, labels = [], [], []
    for k, (i, n_free) in enumerate(zip(idx, counts)):
        if n_free:
            beams.append(np.full(n_free, k))
            radii.append(d * np.arange(1, n_free + 1))
            labels.append(np.full(n_free, FREE_LABEL))
        if scan.hit_flags[i]:
            beams.append(np.array([k]))
            radii.append(np.array([scan.ranges[i]]))
            labels.append(np.array([OCCUPIED_LABEL]))
    if not beams:
        return TrainingSet.empty()
    beam = np.concatenate(beams)
    radius = np.concatenate(radii)
    y = np.concatenate(labels)
    theta = angles[beam]
    X = np.column_stack([scan.pose.x + radius * np.cos(theta), scan.pose.y + radius * np.sin(theta)])
    keep = _drop_near_duplicates(X)
    return TrainingSet(X[keep], y[keep], beam[keep], radius[keep])


def _drop_near_duplicates(X: np.ndarray) -> np.ndarray:
    keep = np.ones(X.shape[0], dtype=bool)
    if X.shape[0] < 2:
        return keep
    for i, j in sorted(cKDTree(X).query_pairs(DUPLICATE_RADIUS)):
        if keep[i] and keep[j]:
            keep[max(i, j)] = False
    return keep


def extract_rings(scan: LaserScan, d: float, decimation: int) -> Rings:
    if not d > 0:
        raise ValueError("sample interval d must be positive")
    idx = kept_beams(scan, decimation)
    hits = scan.hit_flags[idx]
    r_inner = d * _free_counts(_free_limit(scan, d, idx), d)
    r_outer = np.where(hits, scan.ranges[idx], np.inf)
    return Rings(beam_angles=scan.beam_angles()[idx], r_inner=r_inner.astype(float),
                 r_outer=r_outer, center=scan.pose, max_range=scan.spec.max_range)


def classify_points(points, rings: Rings) -> np.ndarray:
    """Vectorized region codes (REGION_A/B/C) for an ``(k, 2)`` array of points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(rings) == 0:
        raise ValueError("rings are empty")
    dx = points[:, 0] - rings.center.x
    dy = points[:, 1] - rings.center.y
    radius = np.hypot(dx, dy)
    phi = np.where(radius > 0, np.arctan2(dy, dx), rings.center.theta)

    base = rings.beam_angles[0]
    rel_beams = rings.beam_angles - base
    span = rel_beams[-1]
    rel = np.mod(phi - base, 2.0 * math.pi)
    # the last beam may sit at exactly 2*pi after wrapping
    rel = np.where(rel > span + 1e-12, np.where(2.0 * math.pi - rel <= 1e-12, 0.0, rel), rel)
    inside = rel <= span + 1e-12

    codes = np.full(points.shape[0], REGION_C, dtype=np.int8)
    if not inside.any():
        return codes
    r_in = np.interp(rel[inside], rel_beams, rings.r_inner)
    r_out = np.interp(rel[inside], rel_beams, rings.outer_limit)
    rad = radius[inside]
    sub = np.full(rad.shape[0], REGION_B, dtype=np.int8)
    sub[rad < r_in] = REGION_A
    sub[rad > r_out] = REGION_C
    codes[inside] = sub
    return codes


def classify_region(point, rings: Rings) -> Region:
    return _CODE_TO_REGION[int(classify_points(np.asarray(point, dtype=float)[None, :], rings)[0])]


def select_ring_samples(samples: TrainingSet, rings: Rings) -> TrainingSet:
    """Keep every occupied sample plus, per beam, the free sample on the inner ring."""
    if len(samples) == 0:
        return samples
    on_inner = (samples.y == FREE_LABEL) & (rings.r_inner[samples.beam] > 0) \
        & (np.abs(samples.radius - rings.r_inner[samples.beam]) < 1e-9)
    return samples.subset((samples.y == OCCUPIED_LABEL) | on_inner)


@dataclass(eq=False)
class InferenceWindow:
    """Rectangular block of global cells around the robot."""

    rows: slice
    cols: slice
    geometry: MapGeometry

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows.stop - self.rows.start, self.cols.stop - self.cols.start)

    @property
    def size(self) -> int:
        h, w = self.shape
        return h * w

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (col, row) index arrays in row-major order."""
        rr, cc = np.mgrid[self.rows, self.cols]
        return cc.ravel(), rr.ravel()

    def centers(self) -> np.ndarray:
        cols, rows = self.indices()
        return self.geometry.cell_centers(cols, rows)


def inference_window(pose: Pose2D, width: int, height: int, geometry: MapGeometry) -> InferenceWindow:
    """``width`` x ``height`` cells centered on the robot's cell, clipped to the map."""
    if width < 1 or height < 1:
        raise ValueError("window must be at least 1x1")
    col, row = world_to_grid(geometry, (pose.x, pose.y))
    c0, r0 = col - width // 2, row - height // 2
    cols = slice(max(c0, 0), min(c0 + width, geometry.width))
    rows = slice(max(r0, 0), min(r0 + height, geometry.height))
    return InferenceWindow(rows=rows, cols=cols, geometry=geometry)
