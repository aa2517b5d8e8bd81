"""Per-frame GPOM and Fast-GPOM updates on a persistent latent map.

Both pipelines share BCM fusion and the probit squash.  The classical update
regresses every cell of the local window; the fast update regresses only the
band between the inner and outer scan rings, writes a fixed free-space
observation inside the inner ring and leaves everything else alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np
from scipy.special import ndtr

from . import gp
from .sampling import (REGION_A, REGION_B, InferenceWindow, classify_points, extract_rings,
                       extract_samples, inference_window, select_ring_samples)
from .simulator import LaserScan
from .world import LatentMap, MapGeometry, Pose2D

log = logging.getLogger(__name__)

SQUASH_MODES = ("paper_linear", "sqrt")
# GP variances are floored here before fusion so precisions stay finite
MIN_OBSERVATION_VAR = 1e-10

STEP_NAMES = ("extract_xy", "extract_xstar", "build_gp", "predict", "bcm", "squash")


@dataclass(frozen=True)
class MapperConfig:
    d: float = 0.5
    window_width: int = 80
    window_height: int = 80
    alpha: float = 100.0
    beta: float = 0.0
    decimation: int = 10
    prior_mu: float = 0.0
    prior_var: float = 1e4
    region_a_mu: float = -1.0
    region_a_var: float = 0.1
    squash_denominator: str = "paper_linear"
    region_a_overwrite: bool = False
    optimize_hyperparams: bool = True
    hyperparam_budget: int = 200
    lengthscale: float = 1.0
    signal_std: float = 1.0
    noise_std: float = 0.1
    # ablation switches for the fast pipeline; both off reduces it to GPOM
    fast_use_regions: bool = True
    fast_ring_samples: bool = True

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("d must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.prior_var > 0 or not self.region_a_var > 0:
            raise ValueError("prior_var and region_a_var must be positive")
        if self.window_width < 1 or self.window_height < 1:
            raise ValueError("window must be at least 1x1")
        if self.decimation < 1:
            raise ValueError("decimation must be at least 1")
        if self.squash_denominator not in SQUASH_MODES:
            raise ValueError(f"squash_denominator must be one of {SQUASH_MODES}")

    @property
    def kernel_params(self) -> gp.KernelParams:
        return gp.KernelParams(self.lengthscale, self.signal_std, self.noise_std)


@dataclass
class MapperState:
    latent: LatentMap
    gp_params: gp.KernelParams
    config: MapperConfig
    frame_count: int = 0
    params_fitted: bool = False
    last_training_size: int = 0

    @classmethod
    def create(cls, geometry: MapGeometry, config: MapperConfig | None = None) -> "MapperState":
        config = config or MapperConfig()
        return cls(latent=LatentMap(geometry, config.prior_mu, config.prior_var),
                   gp_params=config.kernel_params, config=config,
                   params_fitted=not config.optimize_hyperparams)


@dataclass(eq=False)
class FrameResult:
    """Outcome of one update; ``prob`` is the squashed local window."""

    window: InferenceWindow | None
    prob: np.ndarray | None
    timings: dict = field(default_factory=dict)
    skipped: bool = False


def bcm_fuse(mu_old, var_old, mu_new, var_new):
    """Precision-weighted fusion of two Gaussian estimates."""
    var_old = np.asarray(var_old, dtype=float)
    var_new = np.asarray(var_new, dtype=float)
    if np.any(~(var_old > 0)) or np.any(~(var_new > 0)):
        raise ValueError("BCM fusion needs strictly positive variances")
    prec_old = 1.0 / var_old
    prec_new = 1.0 / var_new
    var = 1.0 / (prec_old + prec_new)
    mu = var * (np.asarray(mu_old) * prec_old + np.asarray(mu_new) * prec_new)
    if mu.ndim == 0:
        return float(mu), float(var)
    return mu, var


def squash(mu, var, alpha: float, beta: float, mode: str = "paper_linear"):
    """Occupancy probability Phi((alpha mu + beta) / denom).

    ``paper_linear`` uses ``1 + alpha^2 var`` as the denominator, ``sqrt``
    its square root.
    """
    mu = np.asarray(mu, dtype=float)
    scale = 1.0 + alpha * alpha * np.asarray(var, dtype=float)
    if mode == "sqrt":
        scale = np.sqrt(scale)
    elif mode != "paper_linear":
        raise ValueError(f"unknown squash mode {mode!r}")
    p = ndtr((alpha * mu + beta) / scale)
    return float(p) if p.ndim == 0 else p


def squash_map(state: MapperState) -> np.ndarray:
    cfg = state.config
    return squash(state.latent.mu, state.latent.var, cfg.alpha, cfg.beta, cfg.squash_denominator)


def _maybe_fit_hyperparams(state: MapperState, X, y) -> None:
    if state.params_fitted or X.shape[0] < 2:
        return
    state.gp_params = gp.optimize_hyperparams(X, y, state.gp_params, state.config.hyperparam_budget)
    state.params_fitted = True
    log.info("kernel hyperparameters after first-frame fit: %s", state.gp_params)


def _fuse_cells(state: MapperState, rows, cols, mu_new, var_new) -> None:
    latent = state.latent
    mu, var = bcm_fuse(latent.mu[rows, cols], latent.var[rows, cols], mu_new,
                       np.maximum(var_new, MIN_OBSERVATION_VAR))
    latent.mu[rows, cols] = mu
    latent.var[rows, cols] = var


def _window_prob(state: MapperState, window: InferenceWindow) -> np.ndarray:
    cfg = state.config
    return squash(state.latent.mu[window.rows, window.cols], state.latent.var[window.rows, window.cols],
                  cfg.alpha, cfg.beta, cfg.squash_denominator)


def gpom_update(state: MapperState, scan: LaserScan, pose: Pose2D | None = None) -> FrameResult:
    """Classical update: regress and fuse every cell of the local window."""
    pose = pose or scan.pose
    cfg = state.config
    t = {}
    t_start = perf_counter()

    t0 = perf_counter()
    samples = extract_samples(scan, cfg.d, cfg.decimation)
    t["extract_xy"] = perf_counter() - t0
    if len(samples) == 0:
        log.info("frame %d: no training samples, skipped", scan.frame_index)
        return FrameResult(None, None, _to_ms(t), skipped=True)

    t0 = perf_counter()
    _maybe_fit_hyperparams(state, samples.X, samples.y)
    t_hyper = perf_counter() - t0

    t0 = perf_counter()
    window = inference_window(pose, cfg.window_width, cfg.window_height, state.latent.geometry)
    cols, rows = window.indices()
    centers = window.geometry.cell_centers(cols, rows)
    t["extract_xstar"] = perf_counter() - t0

    t0 = perf_counter()
    try:
        model = gp.fit(samples.X, samples.y, state.gp_params)
    except gp.CholeskyFailure as exc:
        log.warning("frame %d: %s; frame skipped", scan.frame_index, exc)
        return FrameResult(window, None, _to_ms(t), skipped=True)
    t["build_gp"] = perf_counter() - t0
    state.last_training_size = model.n

    t0 = perf_counter()
    mu_new, var_new = gp.predict(model, centers)
    t["predict"] = perf_counter() - t0

    t0 = perf_counter()
    _fuse_cells(state, rows, cols, mu_new, var_new)
    t["bcm"] = perf_counter() - t0

    t0 = perf_counter()
    prob = _window_prob(state, window)
    t["squash"] = perf_counter() - t0

    t["build_map_total"] = perf_counter() - t_start - t_hyper
    state.frame_count += 1
    return FrameResult(window, prob, _to_ms(t))


def fast_gpom_update(state: MapperState, scan: LaserScan, pose: Pose2D | None = None) -> FrameResult:
    """Ring-based update.

    Region A cells fuse the fixed free observation (``region_a_mu``,
    ``region_a_var``), region B cells fuse the GP prediction from the ring
    samples and region C cells are not touched.
    """
    pose = pose or scan.pose
    cfg = state.config
    t = {}
    t_start = perf_counter()

    t0 = perf_counter()
    samples = extract_samples(scan, cfg.d, cfg.decimation)
    rings = extract_rings(scan, cfg.d, cfg.decimation)
    if cfg.fast_ring_samples:
        samples = select_ring_samples(samples, rings)
    t["extract_xy"] = perf_counter() - t0

    t0 = perf_counter()
    if len(samples):
        _maybe_fit_hyperparams(state, samples.X, samples.y)
    t_hyper = perf_counter() - t0

    t0 = perf_counter()
    window = inference_window(pose, cfg.window_width, cfg.window_height, state.latent.geometry)
    cols, rows = window.indices()
    centers = window.geometry.cell_centers(cols, rows)
    if cfg.fast_use_regions:
        codes = classify_points(centers, rings)
    else:
        codes = np.full(cols.shape[0], REGION_B, dtype=np.int8)
    in_a = codes == REGION_A
    in_b = codes == REGION_B
    t["extract_xstar"] = perf_counter() - t0

    run_gp = bool(in_b.any()) and len(samples) > 0
    if not run_gp and not in_a.any():
        log.info("frame %d: nothing to update, skipped", scan.frame_index)
        return FrameResult(window, None, _to_ms(t), skipped=True)

    model = None
    t0 = perf_counter()
    if run_gp:
        try:
            model = gp.fit(samples.X, samples.y, state.gp_params)
        except gp.CholeskyFailure as exc:
            log.warning("frame %d: %s; frame skipped", scan.frame_index, exc)
            return FrameResult(window, None, _to_ms(t), skipped=True)
        state.last_training_size = model.n
    t["build_gp"] = perf_counter() - t0

    t0 = perf_counter()
    if model is not None:
        mu_b, var_b = gp.predict(model, centers[in_b])
    t["predict"] = perf_counter() - t0

    t0 = perf_counter()
    if model is not None:
        _fuse_cells(state, rows[in_b], cols[in_b], mu_b, var_b)
    if in_a.any():
        ra, ca = rows[in_a], cols[in_a]
        if cfg.region_a_overwrite:
            state.latent.mu[ra, ca] = cfg.region_a_mu
            state.latent.var[ra, ca] = cfg.region_a_var
        else:
            _fuse_cells(state, ra, ca, np.full(ra.shape[0], cfg.region_a_mu),
                        np.full(ra.shape[0], cfg.region_a_var))
    t["bcm"] = perf_counter() - t0

    t0 = perf_counter()
    prob = _window_prob(state, window)
    t["squash"] = perf_counter() - t0

    t["build_map_total"] = perf_counter() - t_start - t_hyper
    state.frame_count += 1
    return FrameResult(window, prob, _to_ms(t))


PIPELINES = {"gpom": gpom_update, "fast_gpom": fast_gpom_update}


def pipeline(name: str):
    aliases = {"fast": "fast_gpom", "gpom": "gpom", "fast_gpom": "fast_gpom"}
    try:
        return PIPELINES[aliases[name]]
    except KeyError:
        raise ValueError(f"unknown pipeline {name!r}; expected gpom or fast_gpom") from None


def run_pipeline(name: str, frames, geometry: MapGeometry, config: MapperConfig | None = None):
    """Run a pipeline over every frame; returns the final state and per-frame results."""
    update = pipeline(name)
    state = MapperState.create(geometry, config)
    results = [update(state, scan) for scan in frames]
    return state, results


def _to_ms(t: dict) -> dict:
    return {k: v * 1e3 for k, v in t.items()}


def write_latent_dump(state: MapperState, path) -> None:
    """ASCII header ``width height resolution`` then little-endian float64
    planes: mean, variance, squashed probability (rows bottom-up)."""
    geometry = state.latent.geometry
    header = f"{geometry.width} {geometry.height} {geometry.resolution!r}\n".encode("ascii")
    planes = [state.latent.mu, state.latent.var, squash_map(state)]
    with open(path, "wb") as fh:
        fh.write(header)
        for plane in planes:
            fh.write(np.ascontiguousarray(plane, dtype="<f8").tobytes())


def read_latent_dump(path) -> tuple[MapGeometry, np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of write_latent_dump; returns (geometry, mu, var, prob)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        payload = fh.read()
    if len(header) != 3:
        raise ValueError(f"{path}: malformed latent dump header")
    width, height, resolution = int(header[0]), int(header[1]), float(header[2])
    geometry = MapGeometry(width, height, resolution)
    plane = width * height * 8
    if len(payload) != 3 * plane:
        raise ValueError(f"{path}: expected {3 * plane} payload bytes, found {len(payload)}")
    mu, var, prob = (np.frombuffer(payload[i * plane:(i + 1) * plane], dtype="<f8").reshape(height, width)
                     for i in range(3))
    return geometry, mu.copy(), var.copy(), prob.copy()
