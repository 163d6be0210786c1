"""Exact Gaussian-process regression with an RBF kernel.

The kernel is k(xi, xj) = exp(-d(xi, xj)^2 / (2 l^2)) with a single isotropic
length scale l and unit prior variance; inputs and targets are expected in
standardized units, for which a zero-mean unit-variance prior is the natural
choice. The length scale and observation noise are fitted by maximizing the
log marginal likelihood over a fixed grid, with a golden-section refinement
of the length scale around the best grid point. All scoring happens through
the Upper Confidence Bound mean + alpha * variance (the variance, not the
standard deviation, is used by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import DataError, FitError, ShapeError

JITTER = 1e-8

DEFAULT_LENGTH_GRID = (1e-2, 1e2, 25)
DEFAULT_NOISE_GRID = (1e-6, 1.0, 7)
_GOLDEN_ITERS = 40
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class UcbParams:
    """Acquisition parameters; ``use_std`` switches to the mean + alpha * std
    variant kept only for experimentation."""

    alpha: float = 2.0
    use_std: bool = False

    def __post_init__(self):
        if self.alpha < 0.0:
            raise DataError(f"ucb alpha must be >= 0, got {self.alpha}")


@dataclass
class GPModel:
    """A fitted GP: training data, hyperparameters, and the cached factorization."""

    train_x: np.ndarray
    train_y: np.ndarray
    length_scale: float
    noise: float
    log_marginal: float
    chol_lower: np.ndarray
    alpha_vec: np.ndarray
    grid_index: tuple[int, int]  # (length-scale index, noise index) of the grid argmax

    @property
    def n_train(self) -> int:
        return self.train_x.shape[0]


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(sq, 0.0)


def kernel(xi: np.ndarray, xj: np.ndarray, length_scale: float) -> float:
    """RBF kernel between two points: exp(-d^2 / (2 l^2))."""
    xi = np.asarray(xi, dtype=float).ravel()
    xj = np.asarray(xj, dtype=float).ravel()
    if xi.shape != xj.shape:
        raise ShapeError(f"dimension mismatch: {xi.shape} vs {xj.shape}")
    if length_scale <= 0.0:
        raise DataError(f"length scale must be positive, got {length_scale}")
    d2 = float(np.sum((xi - xj) ** 2))
    return math.exp(-d2 / (2.0 * length_scale**2))


def kernel_matrix(a: np.ndarray, b: np.ndarray, length_scale: float) -> np.ndarray:
    if length_scale <= 0.0:
        raise DataError(f"length scale must be positive, got {length_scale}")
    return np.exp(-_sq_dists(a, b) / (2.0 * length_scale**2))


def _lml_from_kernel(K: np.ndarray, y: np.ndarray, noise: float) -> float:
    n = K.shape[0]
    Ky = K + (noise + JITTER) * np.eye(n)
    factor = cho_factor(Ky, lower=True)
    alpha = cho_solve(factor, y)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return float(-0.5 * y @ alpha - 0.5 * log_det - 0.5 * n * math.log(2.0 * math.pi))


def log_marginal_likelihood(X: np.ndarray, y: np.ndarray, length_scale: float, noise: float) -> float:
    """Log marginal likelihood of the data under the RBF GP with the given
    hyperparameters (jitter included, as in fitting)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} points but {y.shape[0]} targets")
    if X.shape[0] < 1:
        raise DataError("need at least one data point")
    K = kernel_matrix(X, X, length_scale)
    try:
        return _lml_from_kernel(K, y, noise)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"kernel matrix not positive definite: {exc}") from exc


def _grid(spec: tuple[float, float, int]) -> np.ndarray:
    lo, hi, num = spec
    return np.geomspace(lo, hi, int(num))


def fit(
    X: np.ndarray,
    y: np.ndarray,
    length_grid: tuple[float, float, int] = DEFAULT_LENGTH_GRID,
    noise_grid: tuple[float, float, int] = DEFAULT_NOISE_GRID,
) -> GPModel:
    """Fit hyperparameters by grid search over (l, noise) plus golden-section
    refinement of l around the best grid point (noise held fixed).

    Ties are broken toward the lowest grid indices, length scale first.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"{X.shape[0]} points but {y.shape[0]} targets")
    if X.shape[0] < 1:
        raise DataError("need at least one data point")

    l_values = _grid(length_grid)
    s_values = _grid(noise_grid)
    d2 = _sq_dists(X, X)

    best: tuple[float, int, int] | None = None  # (lml, i, j)
    for i, l in enumerate(l_values):
        K = np.exp(-d2 / (2.0 * l * l))
        for j, s in enumerate(s_values):
            try:
                lml = _lml_from_kernel(K, y, float(s))
            except np.linalg.LinAlgError:
                continue
            if best is None or lml > best[0]:
                best = (lml, i, j)
    if best is None:
        raise FitError("every hyperparameter candidate failed to factorize")

    best_lml, bi, bj = best
    noise = float(s_values[bj])

    def objective(log_l: float) -> float:
        K = np.exp(-d2 / (2.0 * math.exp(2.0 * log_l)))
        try:
            return _lml_from_kernel(K, y, noise)
        except np.linalg.LinAlgError:
            return -math.inf

    # Golden-section maximization on log(l) between the grid neighbours of
    # the best point; the grid best stays the fallback winner.
    lo = math.log(l_values[max(bi - 1, 0)])
    hi = math.log(l_values[min(bi + 1, len(l_values) - 1)])
    best_l = float(l_values[bi])
    if hi > lo:
        a, b = lo, hi
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        fc, fd = objective(c), objective(d)
        for _ in range(_GOLDEN_ITERS):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - _INV_PHI * (b - a)
                fc = objective(c)
            else:
                a, c, fc = c, d, fd
                d = a + _INV_PHI * (b - a)
                fd = objective(d)
        log_l_ref, lml_ref = (c, fc) if fc >= fd else (d, fd)
        if lml_ref > best_lml:
            best_l = math.exp(log_l_ref)
            best_lml = lml_ref

    K = np.exp(-d2 / (2.0 * best_l * best_l))
    Ky = K + (noise + JITTER) * np.eye(K.shape[0])
    try:
        factor = cho_factor(Ky, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"final factorization failed: {exc}") from exc
    lower = np.tril(factor[0])
    alpha_vec = cho_solve(factor, y)
    return GPModel(
        train_x=X,
        train_y=y,
        length_scale=float(best_l),
        noise=noise,
        log_marginal=float(best_lml),
        chol_lower=lower,
        alpha_vec=alpha_vec,
        grid_index=(bi, bj),
    )


def predict_batch(model: GPModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at each query row, in standardized units.

    The variance is that of the latent function (observation noise excluded)
    and is clamped at zero against floating-point undershoot.
    """
    Xq = np.atleast_2d(np.asarray(X, dtype=float))
    k_star = kernel_matrix(model.train_x, Xq, model.length_scale)  # (n_train, n_query)
    mean = k_star.T @ model.alpha_vec
    v = solve_triangular(model.chol_lower, k_star, lower=True)
    var = 1.0 - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def predict(model: GPModel, x: np.ndarray) -> tuple[float, float]:
    mean, var = predict_batch(model, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(mean[0]), float(var[0])


def ucb(model: GPModel, x: np.ndarray, params: UcbParams) -> float:
    """Acquisition score mean + alpha * variance (or std when so configured)."""
    mean, var = predict(model, x)
    spread = math.sqrt(var) if params.use_std else var
    return mean + params.alpha * spread
