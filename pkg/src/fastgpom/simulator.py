"""Deterministic 2D laser-scanner simulation and synthetic test maps."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .world import CellState, GridMap, MapGeometry, OutOfBounds, Pose2D, world_to_grid


class SimulationError(ValueError):
    """Invalid pose or scene for the scanner."""

    def __init__(self, message: str, frame_index: int | None = None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


class ScanLogError(ValueError):
    """Malformed scan-log file; ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ScannerSpec:
    beam_count: int = 270
    angle_min: float = -0.75 * math.pi
    angle_max: float = 0.75 * math.pi
    max_range: float = 10.0
    noise_mean: float = 0.0
    noise_std: float = 0.05
    decimation: int = 10

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be positive")
        if not self.angle_min < self.angle_max:
            raise ValueError("angle_min must be below angle_max")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.decimation < 1:
            raise ValueError("decimation must be at least 1")

    def beam_offsets(self) -> np.ndarray:
        """Beam angles relative to the robot heading."""
        if self.beam_count == 1:
            return np.array([self.angle_min])
        step = (self.angle_max - self.angle_min) / (self.beam_count - 1)
        return self.angle_min + step * np.arange(self.beam_count)


@dataclass(eq=False)
class LaserScan:
    pose: Pose2D
    ranges: np.ndarray
    hit_flags: np.ndarray
    frame_index: int = 0
    spec: ScannerSpec = field(default_factory=ScannerSpec)

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.hit_flags = np.asarray(self.hit_flags, dtype=bool)
        if self.ranges.shape != (self.spec.beam_count,) or self.hit_flags.shape != self.ranges.shape:
            raise ValueError(f"scan must have {self.spec.beam_count} ranges and hit flags")

    def beam_angles(self) -> np.ndarray:
        """World-frame beam angles (not wrapped)."""
        return self.pose.theta + self.spec.beam_offsets()

    def __eq__(self, other):
        if not isinstance(other, LaserScan):
            return NotImplemented
        return (self.pose == other.pose and self.frame_index == other.frame_index
                and self.spec == other.spec
                and np.array_equal(self.ranges, other.ranges)
                and np.array_equal(self.hit_flags, other.hit_flags))

    __hash__ = None


@dataclass(eq=True)
class ScanLog:
    spec: ScannerSpec
    map_resolution: float
    frames: list[LaserScan] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)


def _traverse(cells: np.ndarray, geometry: MapGeometry, x0: float, y0: float,
              angle: float, max_range: float) -> tuple[float, bool]:
    """Amanatides-Woo grid walk; returns (distance, hit)."""
    res = geometry.resolution
    # grid units from here on
    gx = (x0 - geometry.origin.x) / res
    gy = (y0 - geometry.origin.y) / res
    dx = math.cos(angle)
    dy = math.sin(angle)
    col = int(math.floor(gx))
    row = int(math.floor(gy))
    width, height = geometry.width, geometry.height
    limit = max_range / res

    if dx > 0:
        step_c, t_max_c, t_delta_c = 1, (col + 1 - gx) / dx, 1.0 / dx
    elif dx < 0:
        step_c, t_max_c, t_delta_c = -1, (gx - col) / -dx, -1.0 / dx
    else:
        step_c, t_max_c, t_delta_c = 0, math.inf, math.inf
    if dy > 0:
        step_r, t_max_r, t_delta_r = 1, (row + 1 - gy) / dy, 1.0 / dy
    elif dy < 0:
        step_r, t_max_r, t_delta_r = -1, (gy - row) / -dy, -1.0 / dy
    else:
        step_r, t_max_r, t_delta_r = 0, math.inf, math.inf

    occupied = int(CellState.OCCUPIED)
    unknown = int(CellState.UNKNOWN)
    while True:
        if t_max_c < t_max_r:
            t = t_max_c
            t_max_c += t_delta_c
            col += step_c
        else:
            t = t_max_r
            t_max_r += t_delta_r
            row += step_r
        if t > limit:
            return max_range, False
        if not (0 <= col < width and 0 <= row < height):
            return max_range, False
        state = cells[row][col]
        if state == occupied:
            return t * res, True
        if state == unknown:
            return max_range, False


def _check_pose(grid: GridMap, pose: Pose2D, frame_index: int | None = None) -> None:
    try:
        col, row = world_to_grid(grid.geometry, (pose.x, pose.y))
    except OutOfBounds:
        raise SimulationError(f"pose ({pose.x:.3f}, {pose.y:.3f}) lies outside the map", frame_index) from None
    if grid.cells[row, col] == CellState.OCCUPIED:
        raise SimulationError(f"pose ({pose.x:.3f}, {pose.y:.3f}) lies inside an occupied cell", frame_index)


def raycast(grid: GridMap, pose: Pose2D, spec: ScannerSpec, rng_seed: int,
            frame_index: int = 0) -> LaserScan:
    """Simulate one scan from ``pose``.

    Rays stop at the first occupied cell (a hit) or at unknown space, the map
    edge or ``max_range`` (no hit, range reported as ``max_range``).  Noise is
    added to hit ranges only, then clamped to ``(0, max_range]``.
    """
    _check_pose(grid, pose, None)
    cells = grid.cells.tolist()
    angles = pose.theta + spec.beam_offsets()
    ranges = np.empty(spec.beam_count)
    hits = np.zeros(spec.beam_count, dtype=bool)
    for i, angle in enumerate(angles):
        ranges[i], hits[i] = _traverse(cells, grid.geometry, pose.x, pose.y, float(angle), spec.max_range)

    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(spec.noise_mean, spec.noise_std, spec.beam_count) if spec.noise_std > 0 \
        else np.full(spec.beam_count, float(spec.noise_mean))
    floor = min(1e-6, spec.max_range)
    ranges[hits] = np.clip(ranges[hits] + noise[hits], floor, spec.max_range)
    return LaserScan(pose=pose, ranges=ranges, hit_flags=hits, frame_index=frame_index, spec=spec)


def frame_seed(seed: int, frame_index: int) -> int:
    """Independent per-frame seed derived from the log seed."""
    return int(np.random.SeedSequence([seed, frame_index]).generate_state(1, dtype=np.uint64)[0])


def simulate_trajectory(grid: GridMap, poses, spec: ScannerSpec, seed: int) -> ScanLog:
    frames = []
    for i, pose in enumerate(poses):
        try:
            frames.append(raycast(grid, pose, spec, frame_seed(seed, i), frame_index=i))
        except SimulationError as exc:
            raise SimulationError(str(exc), i) from None
    return ScanLog(spec=spec, map_resolution=grid.resolution, frames=frames)


def interpolate_waypoints(waypoints, step: float) -> list[Pose2D]:
    """Poses every ``step`` meters along a polyline, heading along the motion.

    Each segment of length L yields ceil(L / step) poses; the final waypoint is
    appended at the end.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pts = [tuple(map(float, p[:2])) for p in waypoints]
    if not pts:
        return []
    if len(pts) == 1:
        return [Pose2D(pts[0][0], pts[0][1], 0.0)]
    poses = []
    heading = 0.0
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        length = math.hypot(x1 - x0, y1 - y0)
        if length == 0:
            continue
        heading = math.atan2(y1 - y0, x1 - x0)
        count = math.ceil(length / step - 1e-9)
        for k in range(count):
            s = min(k * step, length)
            poses.append(Pose2D(x0 + (x1 - x0) * s / length, y0 + (y1 - y0) * s / length, heading))
    poses.append(Pose2D(pts[-1][0], pts[-1][1], heading))
    return poses


# ---------------------------------------------------------------------------
# synthetic maps

MAP_KINDS = ("simple_rooms", "sparse_obstacles", "corridor")
MIN_MAP_SIZE = 50


@dataclass
class _Layout:
    cells: np.ndarray
    waypoints: list  # cell-space (col, row) float coordinates
    start: tuple[int, int]
    end: tuple[int, int]


def _frame(width: int, height: int, wall: int):
    """Unknown margin, outer wall ring and free interior; returns cells and interior bounds."""
    margin = max(2, min(width, height) // 20)
    cells = np.full((height, width), int(CellState.UNKNOWN), dtype=np.uint8)
    cells[margin:height - margin, margin:width - margin] = CellState.OCCUPIED
    x0, y0 = margin + wall, margin + wall
    x1, y1 = width - margin - wall, height - margin - wall
    cells[y0:y1, x0:x1] = CellState.FREE
    return cells, x0, y0, x1, y1


def _simple_rooms(width, height, rng) -> _Layout:
    wall = 2
    cells, x0, y0, x1, y1 = _frame(width, height, wall)
    iw, ih = x1 - x0, y1 - y0
    door = max(6, min(iw, ih) // 8)
    vx = x0 + int(iw * rng.uniform(0.4, 0.6))
    hy_left = y0 + int(ih * rng.uniform(0.4, 0.6))
    hy_right = y0 + int(ih * rng.uniform(0.4, 0.6))
    occ = int(CellState.OCCUPIED)
    cells[y0:y1, vx:vx + wall] = occ
    cells[hy_left:hy_left + wall, x0:vx] = occ
    cells[hy_right:hy_right + wall, vx + wall:x1] = occ

    def door_pos(lo, hi):
        return int(rng.integers(lo + 2, max(lo + 3, hi - door - 2)))

    dv_low = door_pos(y0, min(hy_left, hy_right))
    dv_high = door_pos(max(hy_left, hy_right) + wall, y1)
    dh_left = door_pos(x0, vx)
    dh_right = door_pos(vx + wall, x1)
    free = int(CellState.FREE)
    cells[dv_low:dv_low + door, vx:vx + wall] = free
    cells[dv_high:dv_high + door, vx:vx + wall] = free
    cells[hy_left:hy_left + wall, dh_left:dh_left + door] = free
    cells[hy_right:hy_right + wall, dh_right:dh_right + door] = free

    cx_l, cx_r = (x0 + vx) / 2, (vx + wall + x1) / 2
    ll = (cx_l, (y0 + hy_left) / 2)
    ul = (cx_l, (hy_left + wall + y1) / 2)
    lr = (cx_r, (y0 + hy_right) / 2)
    ur = (cx_r, (hy_right + wall + y1) / 2)
    vmid = vx + wall / 2
    waypoints = [
        ll,
        (vmid - 2 * wall, dv_low + door / 2), (vmid + 2 * wall, dv_low + door / 2),
        lr,
        (dh_right + door / 2, hy_right - 2 * wall), (dh_right + door / 2, hy_right + 3 * wall),
        ur,
        (vmid + 2 * wall, dv_high + door / 2), (vmid - 2 * wall, dv_high + door / 2),
        ul,
        (dh_left + door / 2, hy_left + 3 * wall), (dh_left + door / 2, hy_left - 2 * wall),
        ll,
    ]
    start = (int(ll[0]), int(ll[1]))
    return _Layout(cells, waypoints, start, (int(ul[0]), int(ul[1])))


def _sparse_obstacles(width, height, rng) -> _Layout:
    wall = 2
    cells, x0, y0, x1, y1 = _frame(width, height, wall)
    iw, ih = x1 - x0, y1 - y0
    inset = 0.2
    loop = [(x0 + iw * inset, y0 + ih * inset), (x1 - iw * inset, y0 + ih * inset),
            (x1 - iw * inset, y1 - ih * inset), (x0 + iw * inset, y1 - ih * inset)]
    loop.append(loop[0])
    clearance = max(3, min(iw, ih) // 12)
    # cells reserved for the robot path
    reserved = np.zeros_like(cells, dtype=bool)
    for (ax, ay), (bx, by) in zip(loop[:-1], loop[1:]):
        lo_x, hi_x = int(min(ax, bx)) - clearance, int(max(ax, bx)) + clearance + 1
        lo_y, hi_y = int(min(ay, by)) - clearance, int(max(ay, by)) + clearance + 1
        reserved[max(lo_y, 0):hi_y, max(lo_x, 0):hi_x] = True

    count = 6
    placed = []
    size_lo, size_hi = max(3, min(iw, ih) // 20), max(5, min(iw, ih) // 7)
    for _ in range(400):
        if len(placed) == count:
            break
        w = int(rng.integers(size_lo, size_hi + 1))
        h = int(rng.integers(size_lo, size_hi + 1))
        cx = int(rng.integers(x0 + 2, x1 - w - 2))
        cy = int(rng.integers(y0 + 2, y1 - h - 2))
        if reserved[cy:cy + h, cx:cx + w].any():
            continue
        gap = 2
        if any(cx < px + pw + gap and px < cx + w + gap and cy < py + ph + gap and py < cy + h + gap
               for px, py, pw, ph in placed):
            continue
        placed.append((cx, cy, w, h))
        cells[cy:cy + h, cx:cx + w] = CellState.OCCUPIED
    if not placed:
        raise ValueError("map too small to place any obstacle")
    start = (int(loop[0][0]), int(loop[0][1]))
    return _Layout(cells, loop, start, (int(loop[2][0]), int(loop[2][1])))


def _corridor(width, height, rng) -> _Layout:
    outer = 2
    cells, x0, y0, x1, y1 = _frame(width, height, outer)
    ih = y1 - y0
    lane_target = max(10, int(ih * rng.uniform(0.17, 0.22)))
    lanes = max(2, ih // lane_target)
    bounds = np.linspace(y0, y1, lanes + 1).round().astype(int)
    gap = max(6, (x1 - x0) // 6)
    occ, free = int(CellState.OCCUPIED), int(CellState.FREE)
    for i, yb in enumerate(bounds[1:-1]):
        cells[yb, x0:x1] = occ
        if i % 2 == 0:
            cells[yb, x1 - gap:x1] = free
        else:
            cells[yb, x0:x0 + gap] = free
    centers = [(bounds[i] + 1 + bounds[i + 1]) / 2 for i in range(lanes)]
    left_x, right_x = x0 + gap / 2, x1 - gap / 2
    waypoints = []
    for i, cy in enumerate(centers):
        a, b = (left_x, right_x) if i % 2 == 0 else (right_x, left_x)
        waypoints += [(a, cy), (b, cy)]
    start = (int(waypoints[0][0]), int(waypoints[0][1]))
    end = (int(waypoints[-1][0]), int(waypoints[-1][1]))
    return _Layout(cells, waypoints, start, end)


_BUILDERS = {"simple_rooms": _simple_rooms, "sparse_obstacles": _sparse_obstacles, "corridor": _corridor}


def _layout(kind: str, width: int, height: int, seed: int) -> _Layout:
    if kind not in _BUILDERS:
        raise ValueError(f"unknown map kind {kind!r}; expected one of {', '.join(MAP_KINDS)}")
    if width < MIN_MAP_SIZE or height < MIN_MAP_SIZE:
        raise ValueError(f"map must be at least {MIN_MAP_SIZE}x{MIN_MAP_SIZE} cells, got {width}x{height}")
    return _BUILDERS[kind](width, height, np.random.default_rng(seed))


def generate_synthetic_map(kind: str, width: int, height: int, resolution: float, seed: int) -> GridMap:
    """Procedural ground-truth map: free interior inside an occupied outer wall,
    unknown space outside it."""
    layout = _layout(kind, width, height, seed)
    return GridMap(MapGeometry(width, height, resolution), layout.cells)


def synthetic_waypoints(kind: str, width: int, height: int, resolution: float, seed: int) -> list:
    """Metric waypoints of a collision-free tour through the matching synthetic map."""
    layout = _layout(kind, width, height, seed)
    return [(x * resolution, y * resolution) for x, y in layout.waypoints]


def synthetic_endpoints(kind: str, width: int, height: int, seed: int):
    """Start and end cells ``(col, row)`` of the synthetic tour."""
    layout = _layout(kind, width, height, seed)
    return layout.start, layout.end


# ---------------------------------------------------------------------------
# scan-log files


def write_scanlog(log: ScanLog, path) -> None:
    lines = [json.dumps({"spec": asdict(log.spec), "map_resolution": log.map_resolution})]
    for frame in log.frames:
        lines.append(json.dumps({
            "frame_index": frame.frame_index,
            "pose": [frame.pose.x, frame.pose.y, frame.pose.theta],
            "ranges": frame.ranges.tolist(),
            "hits": frame.hit_flags.tolist(),
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_scanlog(path) -> ScanLog:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ScanLogError(1, "missing header line")
    try:
        header = json.loads(lines[0])
        spec = ScannerSpec(**header["spec"])
        resolution = float(header["map_resolution"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ScanLogError(1, f"bad header: {exc}") from None

    frames = []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            record = json.loads(text)
            x, y, theta = record["pose"]
            frame = LaserScan(pose=Pose2D(x, y, theta), ranges=record["ranges"],
                              hit_flags=record["hits"], frame_index=int(record["frame_index"]),
                              spec=spec)
        except (ValueError, KeyError, TypeError) as exc:
            raise ScanLogError(lineno, f"malformed frame: {exc}") from None
        expected = frames[-1].frame_index + 1 if frames else 0
        if frame.frame_index != expected:
            raise ScanLogError(lineno, f"frame_index {frame.frame_index} out of order, expected {expected}")
        frames.append(frame)
    return ScanLog(spec=spec, map_resolution=resolution, frames=frames)
