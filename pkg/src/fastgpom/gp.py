"""Exact GP regression with a Matern-7/2 kernel.

Only the predictive variance diagonal is ever formed; the full test covariance
is never built.  Hyperparameters are tuned by a derivative-free coordinate
search on the log marginal likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.spatial.distance import cdist

SQRT7 = math.sqrt(7.0)
LOG_2PI = math.log(2.0 * math.pi)

# box for the hyperparameter search, raw (not log) units
PARAM_BOUNDS = {
    "lengthscale": (1e-2, 1e2),
    "signal_std": (1e-2, 1e2),
    "noise_std": (1e-4, 1e1),
}


class CholeskyFailure(np.linalg.LinAlgError):
    """K(X, X) + noise is not numerically positive definite."""


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 1.0
    signal_std: float = 1.0
    noise_std: float = 0.1

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not self.signal_std > 0:
            raise ValueError(f"signal_std must be positive, got {self.signal_std}")
        if not self.noise_std >= 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")

    @property
    def signal_var(self) -> float:
        return self.signal_std ** 2

    @property
    def noise_var(self) -> float:
        return self.noise_std ** 2


def _matern72_profile(dist, params: KernelParams):
    r = SQRT7 * dist / params.lengthscale
    return params.signal_var * (1.0 + r + (2.0 / 5.0) * r ** 2 + (1.0 / 15.0) * r ** 3) * np.exp(-r)


def matern72(x1, x2, params: KernelParams) -> float:
    """Matern covariance with smoothness 7/2 between two points."""
    dist = math.dist(tuple(np.ravel(x1)), tuple(np.ravel(x2)))
    return float(_matern72_profile(dist, params))


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return _matern72_profile(cdist(A, B), params)


@dataclass(frozen=True, eq=False)
class GPModel:
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    params: KernelParams

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fit(X, y, params: KernelParams) -> GPModel:
    """Factor K(X, X) + noise_var * I and solve for the weight vector."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    K = kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.noise_var
    try:
        L = cholesky(K, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise CholeskyFailure(f"kernel matrix is not positive definite: {exc}") from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0):
        raise CholeskyFailure("kernel matrix is numerically singular")
    alpha = solve_triangular(L.T, solve_triangular(L, y, lower=True, check_finite=False),
                             lower=False, check_finite=False)
    return GPModel(X=X, y=y, L=L, alpha=alpha, params=params)


def predict(model: GPModel, Xstar) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at each row of ``Xstar``.

    Variances within ``-1e-9`` of zero are clamped to 0; anything more negative
    indicates a broken factorization and raises.
    """
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xstar.shape[1] != model.X.shape[1]:
        raise ValueError(f"test points have dimension {Xstar.shape[1]}, model expects {model.X.shape[1]}")
    if Xstar.shape[0] == 0:
        return np.empty(0), np.empty(0)
    Ks = kernel_matrix(model.X, Xstar, model.params)
    mu = Ks.T @ model.alpha
    v = solve_triangular(model.L, Ks, lower=True, check_finite=False)
    sf2 = model.params.signal_var
    var = sf2 - np.einsum("ij,ij->j", v, v)
    lowest = var.min()
    if lowest < -1e-9 * max(1.0, sf2):
        raise AssertionError(f"predictive variance {lowest:.3e} is negative beyond round-off")
    np.clip(var, 0.0, sf2, out=var)
    return mu, var


def log_marginal_likelihood(model: GPModel) -> float:
    return float(-0.5 * model.y @ model.alpha
                 - np.log(np.diag(model.L)).sum()
                 - 0.5 * model.n * LOG_2PI)


def _objective(X, y, log_theta) -> float:
    try:
        params = KernelParams(*np.exp(log_theta))
        value = log_marginal_likelihood(fit(X, y, params))
    except (CholeskyFailure, ValueError):
        return -math.inf
    return value if math.isfinite(value) else -math.inf


def optimize_hyperparams(X, y, init: KernelParams, budget: int = 200,
                         initial_step: float = math.log(4.0), min_step: float = 1e-3) -> KernelParams:
    """Coordinate-wise pattern search in log space over
    (lengthscale, signal_std, noise_std), spending at most ``budget``
    likelihood evaluations.  Never returns worse than ``init``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if budget <= 0:
        return init
    if X.shape[0] < 2:
        raise ValueError("hyperparameter search needs at least two training points")

    lo = np.log([b[0] for b in PARAM_BOUNDS.values()])
    hi = np.log([b[1] for b in PARAM_BOUNDS.values()])
    init_value = _lml_or_ninf(X, y, init)
    evals = 1
    raw = np.array([init.lengthscale, init.signal_std, init.noise_std])
    # a zero noise_std starts the search from the lower bound
    best = np.clip(np.log(np.maximum(raw, np.exp(lo))), lo, hi)
    best_value = init_value
    if evals < budget and not np.allclose(np.exp(best), raw, rtol=1e-12, atol=0):
        best_value = _objective(X, y, best)
        evals += 1
    step = initial_step
    while evals < budget and step >= min_step:
        moved = False
        for k in range(3):
            for direction in (1.0, -1.0):
                if evals >= budget:
                    break
                cand = best.copy()
                cand[k] = np.clip(cand[k] + direction * step, lo[k], hi[k])
                if cand[k] == best[k]:
                    continue
                value = _objective(X, y, cand)
                evals += 1
                if value > best_value:
                    best, best_value, moved = cand, value, True
                    break
        if not moved:
            step /= 2.0
    if not best_value > init_value:
        return init
    return KernelParams(*np.exp(best))


def _lml_or_ninf(X, y, params: KernelParams) -> float:
    try:
        return log_marginal_likelihood(fit(X, y, params))
    except CholeskyFailure:
        return -math.inf
