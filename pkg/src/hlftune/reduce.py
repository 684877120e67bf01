"""Dimensionality-reduction strategies defining the active search space.

Each strategy produces an :class:`Embedding` that maps points of a
low-dimensional active box to full points in ``[0, 1]^d``:

PCA
    affine map onto the top principal axes of the observed configurations
REMBO
    fixed random Gaussian projection, centred at 0.5 and clipped
SA / SHAP
    a subset of coordinates chosen by a sensitivity or attribution ranking;
    the remaining coordinates are anchored at the incumbent
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from . import seeding, surrogate
from .errors import DimensionMismatch, TooFewObservations

logger = logging.getLogger(__name__)

KINDS = ("PCA", "REMBO", "SA", "SHAP", "NONE")
MIN_RANKING_OBS = 10


@dataclass(frozen=True)
class DrSpec:
    kind: str
    m: int = 20
    refresh_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown DR strategy {self.kind!r}")
        if self.m < 1 or self.refresh_every < 1:
            raise ValueError("m and refresh_every must be >= 1")


@dataclass(frozen=True)
class Embedding:
    kind: str
    d: int
    lo: np.ndarray
    hi: np.ndarray
    basis: np.ndarray | None = None
    center: np.ndarray | None = None
    subset: tuple[int, ...] | None = None
    anchor: np.ndarray | None = None
    explained_variance: np.ndarray | None = None
    rank_deficient: bool = False

    @property
    def m(self) -> int:
        return int(self.lo.size)

    def with_anchor(self, anchor) -> "Embedding":
        return replace(self, anchor=np.asarray(anchor, dtype=float).copy())


# -- construction ------------------------------------------------------------


def fit_pca(X, m, seed=0) -> Embedding:
    """Principal axes of the history, ordered by descending variance.

    Each axis is signed so its largest-magnitude entry is positive.  When the
    centred history has rank below ``m`` only the non-degenerate axes are
    kept and the embedding is flagged ``rank_deficient``.  ``seed`` is
    accepted for interface symmetry; the fit is deterministic.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise TooFewObservations("PCA needs at least 2 points")
    center = X.mean(0)
    Xc = X - center
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = max(n, d) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    k = min(m, rank)
    if k < m:
        logger.info("PCA history has rank %d < m=%d; active dimension shrinks", rank, m)
    if k == 0:
        raise TooFewObservations("PCA history has zero variance")
    basis = Vt[:k].copy()
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    Z = Xc @ basis.T
    zlo, zhi = Z.min(0), Z.max(0)
    pad = 0.1 * (zhi - zlo)
    return Embedding(
        "PCA", d, zlo - pad, zhi + pad,
        basis=basis, center=center,
        explained_variance=s[:k] ** 2 / (n - 1),
        rank_deficient=k < m,
    )


def make_rembo(d, m, seed) -> Embedding:
    A = seeding.rng(seed, seeding.STREAM_EMBEDDING).standard_normal((m, d))
    r = math.sqrt(m)
    return Embedding("REMBO", d, np.full(m, -r), np.full(m, r), basis=A, center=np.full(d, 0.5))


def subset_embedding(kind, d, subset, anchor) -> Embedding:
    subset = tuple(int(i) for i in subset)
    if len(set(subset)) != len(subset) or any(i < 0 or i >= d for i in subset):
        raise ValueError("subset indices must be unique and < d")
    k = len(subset)
    return Embedding(kind, d, np.zeros(k), np.ones(k), subset=subset, anchor=np.asarray(anchor, dtype=float).copy())


def identity_embedding(d) -> Embedding:
    return Embedding("NONE", d, np.zeros(d), np.ones(d))


# -- maps --------------------------------------------------------------------


def to_full(emb: Embedding, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != emb.m:
        raise DimensionMismatch(f"active point has {z.shape[-1]} coords, embedding expects {emb.m}")
    if emb.kind == "PCA":
        x = emb.center + z @ emb.basis
    elif emb.kind == "REMBO":
        x = 0.5 + (z @ emb.basis) / math.sqrt(emb.d)
    elif emb.kind in ("SA", "SHAP"):
        x = np.broadcast_to(emb.anchor, z.shape[:-1] + (emb.d,)).copy()
        x[..., list(emb.subset)] = z
    else:
        x = z
    return np.clip(x, 0.0, 1.0)


def to_active(emb: Embedding, x) -> np.ndarray:
    """Project full points into the active box (least squares for REMBO)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != emb.d:
        raise DimensionMismatch(f"full point has {x.shape[-1]} coords, embedding expects {emb.d}")
    if emb.kind == "PCA":
        z = (x - emb.center) @ emb.basis.T
    elif emb.kind == "REMBO":
        M = emb.basis.T / math.sqrt(emb.d)
        z = np.linalg.lstsq(M, (x - 0.5).T, rcond=None)[0].T
    elif emb.kind in ("SA", "SHAP"):
        z = x[:, list(emb.subset)]
    else:
        z = x
    return np.clip(z, emb.lo, emb.hi)


def to_unit(emb: Embedding, z) -> np.ndarray:
    return (np.asarray(z, dtype=float) - emb.lo) / (emb.hi - emb.lo)


def from_unit(emb: Embedding, u) -> np.ndarray:
    return emb.lo + np.asarray(u, dtype=float) * (emb.hi - emb.lo)


# -- rankings ----------------------------------------------------------------


def sensitivity_scores(X, y) -> np.ndarray:
    """|Spearman(x_j, y)| plus the gap in mean y between the halves split at the median of x_j."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    ry = rankdata(y)
    ry = ry - ry.mean()
    RX = np.apply_along_axis(rankdata, 0, X)
    RX = RX - RX.mean(0)
    denom = np.sqrt(np.sum(RX * RX, 0) * np.sum(ry * ry))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, (RX.T @ ry) / np.where(denom > 0, denom, 1.0), 0.0)
    med = np.median(X, 0)
    upper = X >= med
    n_up = upper.sum(0)
    n_lo = n - n_up
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_up = (upper * y[:, None]).sum(0) / np.where(n_up > 0, n_up, 1)
        mean_lo = (~upper * y[:, None]).sum(0) / np.where(n_lo > 0, n_lo, 1)
    gap = np.where((n_up > 0) & (n_lo > 0), np.abs(mean_up - mean_lo), 0.0)
    return np.abs(rho) + gap


def _top(scores, m):
    return [int(i) for i in np.argsort(-np.asarray(scores), kind="stable")[:m]]


def rank_sensitivity(X, y, m) -> list[int]:
    if len(y) < MIN_RANKING_OBS:
        raise TooFewObservations(f"sensitivity ranking needs {MIN_RANKING_OBS} observations, got {len(y)}")
    return _top(sensitivity_scores(X, y), m)


def permutation_importance(model, X, y, seed, n_perm=10) -> np.ndarray:
    """Mean increase in in-sample MSE when each column is permuted.

    The permuted-query kernel is built from the base squared distances by
    swapping in the permuted column's contribution, so a column is never
    re-scored from scratch.  A permutation that leaves the column unchanged
    (e.g. a constant column) contributes exactly zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    h = model.hyper
    if model.degenerate:
        return np.zeros(d)
    base_mse = float(np.mean((surrogate.predict(model, X, return_var=False) - y) ** 2))
    Xs = X / h.lengthscales
    sq = np.sum(Xs * Xs, 1)[:, None] + np.sum(Xs * Xs, 1)[None, :] - 2.0 * Xs @ Xs.T
    g = seeding.rng(seed, seeding.STREAM_EMBEDDING, 1)
    perms = np.array([g.permutation(n) for _ in range(n_perm)])
    out = np.zeros(d)
    for j in range(d):
        col = Xs[:, j]
        own = (col[:, None] - col[None, :]) ** 2
        total = 0.0
        for p in perms:
            pc = col[p]
            if np.array_equal(pc, col):
                continue
            sqp = np.maximum(sq - own + (pc[:, None] - col[None, :]) ** 2, 0.0)
            r = np.sqrt(sqp)
            K = h.signal_variance * (1.0 + surrogate.SQRT5 * r + (5.0 / 3.0) * sqp) * np.exp(-surrogate.SQRT5 * r)
            mu = h.mean_const + K @ model.alpha
            total += float(np.mean((mu - y) ** 2)) - base_mse
        out[j] = total / n_perm
    return out


def rank_attribution(X, y, m, seed, n_perm=10, gp_restarts=8, init=None, maxiter=200, return_model=False):
    """Top-``m`` coordinates by permutation importance on a GP fitted to (X, y)."""
    if len(y) < MIN_RANKING_OBS:
        raise TooFewObservations(f"attribution ranking needs {MIN_RANKING_OBS} observations, got {len(y)}")
    model = surrogate.fit(X, y, seed=seed, n_restarts=gp_restarts, init=init, maxiter=maxiter)
    imp = permutation_importance(model, X, y, seed, n_perm)
    idx = _top(imp, m)
    return (idx, imp, model) if return_model else idx
