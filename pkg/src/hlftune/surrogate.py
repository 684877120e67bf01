"""Gaussian-process regression with a Matérn-5/2 ARD kernel.

Hyperparameters are optimized in log space by maximizing the log marginal
likelihood (L-BFGS-B on its negative, with analytic gradients) from several
seeded starting points.  Outputs are centered by their mean; inputs are
expected in the unit cube.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.optimize import minimize

from . import seeding
from .errors import DimensionMismatch, SingularKernel

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
LENGTHSCALE_BOUNDS = (1e-2, 10.0)
DEGENERATE_VARIANCE = 1e-4


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    mean_const: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0) or self.signal_variance <= 0 or self.noise_variance <= 0:
            raise ValueError("lengthscales and variances must be positive")

    def to_theta(self) -> np.ndarray:
        return np.log(np.concatenate([self.lengthscales, [self.signal_variance, self.noise_variance]]))

    @classmethod
    def from_theta(cls, theta, mean_const=0.0) -> "GpHyperparams":
        e = np.exp(np.asarray(theta, dtype=float))
        return cls(e[:-2], float(e[-2]), float(e[-1]), mean_const)


@dataclass(frozen=True)
class GpModel:
    hyper: GpHyperparams
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray | None
    alpha: np.ndarray | None
    jitter: float = 0.0
    degenerate: bool = False
    restarts: list = field(default_factory=list, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]


def matern52(X1, X2, lengthscales, signal_variance):
    A = X1 / lengthscales
    B = X2 / lengthscales
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    r = np.sqrt(np.maximum(sq, 0.0))
    return signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def _cholesky(K):
    """Cholesky with a jitter ladder; returns (L, jitter) or raises SingularKernel."""
    n = K.shape[0]
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jit in JITTERS:
        try:
            return np.linalg.cholesky(K + (jit * scale) * np.eye(n)), jit * scale
        except np.linalg.LinAlgError:
            continue
    raise SingularKernel(f"kernel matrix not positive definite after jitter {JITTERS[-1]:g}")


def lml_and_grad(theta, X, yc):
    """Log marginal likelihood and its gradient w.r.t. log-hyperparameters.

    ``theta = log([lengthscales..., signal_variance, noise_variance])`` and
    ``yc`` is the centered target vector.
    """
    n, m = X.shape
    ls = np.exp(theta[:m])
    sf2 = math.exp(theta[m])
    sn2 = math.exp(theta[m + 1])
    Xs = X / ls
    sq = np.sum(Xs * Xs, 1)[:, None] + np.sum(Xs * Xs, 1)[None, :] - 2.0 * Xs @ Xs.T
    r = np.sqrt(np.maximum(sq, 0.0))
    e = np.exp(-SQRT5 * r)
    Kf = sf2 * (1.0 + SQRT5 * r + (5.0 / 3.0) * sq.clip(0.0)) * e
    L, _ = _cholesky(Kf + sn2 * np.eye(n))
    alpha = cho_solve((L, True), yc)
    lml = -0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi)

    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise SingularKernel(f"dpotri failed with info={info}")
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    # dK/dlog(l_j) = G * (x_ij - x_kj)^2 / l_j^2
    G = sf2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    M = W * G
    g_ls = M.sum(1) @ (Xs * Xs) - np.sum(Xs * (M @ Xs), 0)
    g_sf = 0.5 * np.sum(W * Kf)
    g_sn = 0.5 * sn2 * np.trace(W)
    return float(lml), np.concatenate([g_ls, [g_sf, g_sn]])


def hyper_bounds(m, y):
    vy = float(np.var(y))
    lo = [LENGTHSCALE_BOUNDS[0]] * m + [1e-4, 1e-6]
    hi = [LENGTHSCALE_BOUNDS[1]] * m + [1e2 * vy + 1e-4, vy + 1e-6]
    return np.log(lo), np.log(hi)


def build(X, y, hyper: GpHyperparams) -> GpModel:
    """Factorize the kernel for fixed hyperparameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    K = matern52(X, X, hyper.lengthscales, hyper.signal_variance) + hyper.noise_variance * np.eye(len(y))
    L, jit = _cholesky(K)
    alpha = cho_solve((L, True), y - hyper.mean_const)
    return GpModel(hyper, X, y, L, alpha, jit)


def _degenerate_model(X, y) -> GpModel:
    hyper = GpHyperparams(np.ones(X.shape[1]), DEGENERATE_VARIANCE, 1e-6, float(y[0]))
    return GpModel(hyper, X, y, None, None, degenerate=True)


def fit(X, y, seed=0, n_restarts=8, init: GpHyperparams | None = None, maxiter=200) -> GpModel:
    """Fit hyperparameters by multi-start maximization of the marginal likelihood.

    The first start is ``init`` when given (warm start) and a fixed default
    otherwise; the remaining ``n_restarts - 1`` starts are drawn uniformly in
    the log-bounds from a generator seeded by ``seed``.  The returned model
    carries the best hyperparameters over all starts and optimized endpoints.
    Identical targets yield a flagged mean-only model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, y has {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    n, m = X.shape
    if n == 0:
        raise ValueError("need at least one observation")
    if np.ptp(y) == 0.0:
        logger.warning("all %d targets identical; using mean-only model", n)
        return _degenerate_model(X, y)

    mean_const = float(np.mean(y))
    yc = y - mean_const
    lo, hi = hyper_bounds(m, y)
    g = seeding.rng(seed, seeding.STREAM_SURROGATE)
    starts = []
    if init is not None and init.lengthscales.shape == (m,):
        starts.append(np.clip(init.to_theta(), lo, hi))
    else:
        vy = float(np.var(y))
        starts.append(np.clip(np.log(np.r_[np.full(m, 0.5), vy, 0.1 * vy]), lo, hi))
    while len(starts) < max(1, n_restarts):
        starts.append(lo + g.random(m + 2) * (hi - lo))

    def neg(theta):
        try:
            v, grad = lml_and_grad(theta, X, yc)
        except SingularKernel:
            return 1e25, np.zeros_like(theta)
        return -v, -grad

    best_theta, best_val = None, -np.inf
    record = []
    for s in starts:
        v0 = -neg(s)[0]
        res = minimize(neg, s, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)), options={"maxiter": maxiter})
        theta = np.clip(res.x, lo, hi)
        v1 = -neg(theta)[0]
        record.append((v0, v1))
        for cand, val in ((s, v0), (theta, v1)):
            if val > best_val:
                best_theta, best_val = cand, val
    if best_theta is None or not np.isfinite(best_val):
        raise SingularKernel("no restart produced a finite marginal likelihood")
    model = build(X, y, GpHyperparams.from_theta(best_theta, mean_const))
    object.__setattr__(model, "restarts", record)
    return model


def log_marginal_likelihood(model: GpModel) -> float:
    if model.degenerate:
        return 0.0
    yc = model.y - model.hyper.mean_const
    n = len(yc)
    return float(-0.5 * yc @ model.alpha - np.sum(np.log(np.diag(model.chol))) - 0.5 * n * math.log(2 * math.pi))


def predict(model: GpModel, Xq, return_var=True):
    """Posterior mean and latent-function variance at the rows of ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.m:
        raise DimensionMismatch(f"query has {Xq.shape[1]} columns, model expects {model.m}")
    h = model.hyper
    if model.degenerate:
        mu = np.full(Xq.shape[0], h.mean_const)
        return (mu, np.full(Xq.shape[0], h.signal_variance)) if return_var else mu
    Kq = matern52(Xq, model.X, h.lengthscales, h.signal_variance)
    mu = h.mean_const + Kq @ model.alpha
    if not return_var:
        return mu
    v = solve_triangular(model.chol, Kq.T, lower=True, check_finite=False)
    var = np.maximum(h.signal_variance - np.sum(v * v, 0), 0.0)
    return mu, var
