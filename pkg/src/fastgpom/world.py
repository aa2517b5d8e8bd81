"""Metric grid maps, poses and map file I/O.

Grids are stored as ``(height, width)`` numpy arrays indexed ``[row, col]``
with row 0 at the bottom of the map (y grows with the row index).  PGM and
PNG files are written top-down, so rows are flipped at the I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image


class OutOfBounds(ValueError):
    """Raised when a metric point falls outside a grid."""


class PGMFormatError(ValueError):
    """Raised for malformed or unsupported PGM files."""


class CellState(IntEnum):
    OCCUPIED = 0
    FREE = 1
    UNKNOWN = 2


# PGM pixel values written for each state.
PGM_VALUES = {CellState.OCCUPIED: 0, CellState.FREE: 254, CellState.UNKNOWN: 205}
PGM_OCCUPIED_MAX = 50
PGM_FREE_MIN = 240


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"pose must be finite, got {self}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))


@dataclass(frozen=True)
class MapGeometry:
    """Size, resolution and lower-left corner of a grid."""

    width: int
    height: int
    resolution: float
    origin: Pose2D = field(default_factory=lambda: Pose2D(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.origin.theta != 0.0:
            raise ValueError("rotated map origins are not supported")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def world_to_grid(self, x: float, y: float) -> tuple[int, int]:
        return world_to_grid(self, (x, y))

    def grid_to_world(self, col: int, row: int) -> tuple[float, float]:
        return grid_to_world(self, col, row)

    def cell_centers(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Vectorized cell centers, returned as an ``(k, 2)`` array."""
        xs = self.origin.x + (np.asarray(cols, dtype=float) + 0.5) * self.resolution
        ys = self.origin.y + (np.asarray(rows, dtype=float) + 0.5) * self.resolution
        return np.column_stack([xs, ys])

    def same_as(self, other: "MapGeometry") -> bool:
        return (self.width == other.width and self.height == other.height
                and math.isclose(self.resolution, other.resolution, rel_tol=1e-12)
                and math.isclose(self.origin.x, other.origin.x, abs_tol=1e-12)
                and math.isclose(self.origin.y, other.origin.y, abs_tol=1e-12))


def world_to_grid(geometry: MapGeometry, point) -> tuple[int, int]:
    """Return ``(col, row)`` of the cell containing ``point``.

    Raises OutOfBounds when the point is outside the grid rectangle.
    """
    x, y = point
    col = math.floor((x - geometry.origin.x) / geometry.resolution)
    row = math.floor((y - geometry.origin.y) / geometry.resolution)
    if not (0 <= col < geometry.width and 0 <= row < geometry.height):
        raise OutOfBounds(f"point ({x}, {y}) lies outside the {geometry.width}x{geometry.height} grid")
    return col, row


def grid_to_world(geometry: MapGeometry, col: int, row: int) -> tuple[float, float]:
    """Metric center of cell ``(col, row)``."""
    if not (0 <= col < geometry.width and 0 <= row < geometry.height):
        raise IndexError(f"cell ({col}, {row}) outside the {geometry.width}x{geometry.height} grid")
    return (geometry.origin.x + (col + 0.5) * geometry.resolution,
            geometry.origin.y + (row + 0.5) * geometry.resolution)


@dataclass(frozen=True, eq=False)
class GridMap:
    """Ternary ground-truth map; ``cells`` holds CellState codes as uint8."""

    geometry: MapGeometry
    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.shape != self.geometry.shape:
            raise ValueError(f"cells shape {cells.shape} does not match geometry {self.geometry.shape}")
        if cells.size and cells.max() > CellState.UNKNOWN:
            raise ValueError("cells must hold CellState codes")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def filled(cls, width: int, height: int, resolution: float,
               state: CellState = CellState.UNKNOWN, origin: Pose2D | None = None) -> "GridMap":
        geometry = MapGeometry(width, height, resolution, origin or Pose2D(0.0, 0.0))
        return cls(geometry, np.full(geometry.shape, int(state), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.geometry.width

    @property
    def height(self) -> int:
        return self.geometry.height

    @property
    def resolution(self) -> float:
        return self.geometry.resolution

    def state(self, col: int, row: int) -> CellState:
        return CellState(int(self.cells[row, col]))

    def with_cells(self, cells: np.ndarray) -> "GridMap":
        return GridMap(self.geometry, cells)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.geometry.same_as(other.geometry) and np.array_equal(self.cells, other.cells)

    __hash__ = None


class LatentMap:
    """Global per-cell Gaussian belief (mean and variance)."""

    def __init__(self, geometry: MapGeometry, prior_mu: float = 0.0, prior_var: float = 1e4):
        if not prior_var > 0:
            raise ValueError("prior variance must be positive")
        self.geometry = geometry
        self.mu = np.full(geometry.shape, float(prior_mu))
        self.var = np.full(geometry.shape, float(prior_var))

    @property
    def width(self) -> int:
        return self.geometry.width

    @property
    def height(self) -> int:
        return self.geometry.height

    @property
    def resolution(self) -> float:
        return self.geometry.resolution

    def copy(self) -> "LatentMap":
        out = LatentMap.__new__(LatentMap)
        out.geometry = self.geometry
        out.mu = self.mu.copy()
        out.var = self.var.copy()
        return out


def pgm_to_states(pixels: np.ndarray) -> np.ndarray:
    states = np.full(pixels.shape, int(CellState.UNKNOWN), dtype=np.uint8)
    states[pixels <= PGM_OCCUPIED_MAX] = CellState.OCCUPIED
    states[pixels >= PGM_FREE_MIN] = CellState.FREE
    return states


def states_to_pgm(states: np.ndarray) -> np.ndarray:
    lut = np.array([PGM_VALUES[CellState(i)] for i in range(3)], dtype=np.uint8)
    return lut[states]


def _read_header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMFormatError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise PGMFormatError("missing whitespace after PGM header")
    return tokens, pos + 1


def load_pgm(path, resolution: float = 0.05, origin: Pose2D | None = None) -> GridMap:
    """Read a binary (P5, maxval 255) PGM into a GridMap."""
    data = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise PGMFormatError(f"expected P5 magic, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PGMFormatError(f"malformed PGM header: {exc}") from None
    if width < 1 or height < 1:
        raise PGMFormatError(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise PGMFormatError(f"unsupported maxval {maxval}")
    payload = data[offset:offset + width * height]
    if len(payload) < width * height:
        raise PGMFormatError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)[::-1]
    geometry = MapGeometry(width, height, resolution, origin or Pose2D(0.0, 0.0))
    return GridMap(geometry, pgm_to_states(pixels))


def save_pgm(grid: GridMap, path) -> None:
    pixels = states_to_pgm(grid.cells)[::-1]
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(pixels).tobytes())


def probability_to_pixels(prob: np.ndarray) -> np.ndarray:
    """Map occupancy probability to gray levels, round half up (0.5 -> 128)."""
    prob = np.asarray(prob, dtype=float)
    if prob.size and (np.isnan(prob).any() or prob.min() < 0.0 or prob.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.floor(255.0 * (1.0 - prob) + 0.5).astype(np.uint8)


def render_probability_png(prob_grid: np.ndarray, path) -> None:
    """Write a bottom-up probability grid as an 8-bit grayscale PNG (occupied = black)."""
    pixels = probability_to_pixels(prob_grid)
    Image.fromarray(np.ascontiguousarray(pixels[::-1]), mode="L").save(path, format="PNG")
