"""Gaussian process occupancy mapping with a ring-restricted fast variant."""

from .gp import CholeskyFailure, GPModel, KernelParams, fit, kernel_matrix, matern72, predict
from .mapping import MapperConfig, MapperState, bcm_fuse, fast_gpom_update, gpom_update, squash, squash_map
from .world import CellState, GridMap, LatentMap, MapGeometry, Pose2D

__version__ = "0.1.0"
