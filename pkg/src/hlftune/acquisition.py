"""Acquisition functions and next-point selection in the active space.

Everything follows the maximization convention: larger observations are
better.  EI, MPI and UCB score points with the GP posterior and are
maximized by :func:`propose_surrogate`; DYCORS perturbs a random subset of
the incumbent's coordinates and picks the candidate with the best
surrogate merit (:func:`propose_dycors`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from . import surrogate
from .errors import ModelUnavailable, NoIncumbent

SURROGATE_KINDS = ("EI", "MPI", "UCB")
KINDS = SURROGATE_KINDS + ("DYCORS",)
MERIT_WEIGHTS = (0.3, 0.5, 0.8, 0.95)

N_RAW = 2048
N_LOCAL = 10
LOCAL_SIGMA = 0.1
PATTERN_STEPS = 50
PATTERN_STEP0 = 0.05

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def ei(mu, var, best_y, xi=0.0):
    """Expected improvement of ``N(mu, var)`` over ``best_y + xi``."""
    mu = np.asarray(mu, dtype=float)
    s = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    imp = mu - best_y - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > 0, imp / np.where(s > 0, s, 1.0), 0.0)
        val = imp * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    out = np.where(s > 0, np.maximum(val, 0.0), np.maximum(imp, 0.0))
    return out if out.ndim else float(out)


def mpi(mu, var, best_y, xi=0.0):
    """Probability that ``N(mu, var)`` exceeds ``best_y + xi``."""
    mu = np.asarray(mu, dtype=float)
    s = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    imp = mu - best_y - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        val = ndtr(imp / np.where(s > 0, s, 1.0))
    out = np.where(s > 0, val, (imp > 0).astype(float))
    return out if out.ndim else float(out)


def ucb(mu, var, kappa):
    out = np.asarray(mu, dtype=float) + kappa * np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DycorsParams:
    """DYCORS schedule; ``None`` fields take their dimension-dependent default."""

    p_init: float | None = None
    sigma_init: float = 0.2
    sigma_min: float = 0.005
    n_cand: int | None = None
    fail_tol: int | None = None
    success_tol: int = 3

    def resolved(self, m: int) -> "DycorsParams":
        return replace(
            self,
            p_init=min(1.0, 20.0 / m) if self.p_init is None else self.p_init,
            n_cand=100 * min(m, 10) if self.n_cand is None else self.n_cand,
            fail_tol=min(30, max(5, math.ceil(m / 10))) if self.fail_tol is None else self.fail_tol,
        )


@dataclass(frozen=True)
class AcqSpec:
    kind: str
    xi: float = 0.01
    kappa: float = 2.0
    dycors: DycorsParams = field(default_factory=DycorsParams)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.xi < 0 or self.kappa < 0:
            raise ValueError("xi and kappa must be non-negative")


def acquisition_values(model, Xq, acq: AcqSpec, best_y):
    if acq.kind not in SURROGATE_KINDS:
        raise ValueError(f"{acq.kind} is not a surrogate acquisition")
    mu, var = surrogate.predict(model, Xq)
    if acq.kind == "EI":
        return ei(mu, var, best_y, acq.xi)
    if acq.kind == "MPI":
        return mpi(mu, var, best_y, acq.xi)
    return ucb(mu, var, acq.kappa)


def propose_surrogate(model, acq: AcqSpec, lo, hi, rng: np.random.Generator, incumbent=None):
    """Maximize the acquisition over the box ``[lo, hi]``.

    Scores 2048 uniform candidates and 10 Gaussian perturbations of the
    incumbent, then polishes the best with a 50-step coordinate pattern
    search whose step starts at 5% of the box width and halves whenever no
    neighbour improves.  Ties go to the lowest candidate index.
    """
    if model is None:
        raise ModelUnavailable("surrogate proposal needs a fitted model")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    width = hi - lo
    m = lo.size
    best_y = float(np.max(model.y))
    if incumbent is None:
        incumbent = model.X[int(np.argmax(model.y))]
    incumbent = np.clip(np.asarray(incumbent, dtype=float), lo, hi)

    raw = lo + rng.random((N_RAW, m)) * width
    local = np.clip(incumbent + rng.normal(0.0, LOCAL_SIGMA, (N_LOCAL, m)) * width, lo, hi)
    cand = np.vstack([raw, local])
    scores = acquisition_values(model, cand, acq, best_y)
    i = int(np.argmax(scores))
    x, fx = cand[i].copy(), float(scores[i])

    step = PATTERN_STEP0
    eye = np.eye(m)
    for _ in range(PATTERN_STEPS):
        delta = step * width * eye
        nb = np.clip(np.vstack([x + delta, x - delta]), lo, hi)
        vals = acquisition_values(model, nb, acq, best_y)
        j = int(np.argmax(vals))
        if vals[j] > fx:
            x, fx = nb[j], float(vals[j])
        else:
            step *= 0.5
    return np.clip(x, lo, hi)


# -- DYCORS ------------------------------------------------------------------


@dataclass(frozen=True)
class DycorsState:
    sigma: float
    n_fail: int = 0
    n_success: int = 0
    n_proposals: int = 0

    @classmethod
    def start(cls, params: DycorsParams) -> "DycorsState":
        return cls(params.sigma_init)

    def weight(self) -> float:
        return MERIT_WEIGHTS[self.n_proposals % len(MERIT_WEIGHTS)]


def perturbation_probability(t, budget, p_init, m):
    """``p_init * (1 - ln(t+1)/ln(budget+1))`` floored at ``1/m``."""
    p = p_init * (1.0 - math.log(t + 1.0) / math.log(budget + 1.0))
    return max(p, 1.0 / m)


def update_dycors(state: DycorsState, improved: bool, params: DycorsParams) -> DycorsState:
    """Advance the step-size counters after one evaluation.

    Failed evaluations count as non-improving steps.
    """
    sigma = state.sigma
    if improved:
        n_success, n_fail = state.n_success + 1, 0
    else:
        n_success, n_fail = 0, state.n_fail + 1
    if n_fail >= params.fail_tol:
        sigma, n_fail = max(sigma / 2.0, params.sigma_min), 0
    if n_success >= params.success_tol:
        sigma, n_success = min(2.0 * sigma, params.sigma_init), 0
    return DycorsState(sigma, n_fail, n_success, state.n_proposals)


def dycors_candidates(incumbent, p, sigma, n_cand, lo, hi, rng):
    """Perturb each coordinate of the incumbent with probability ``p``.

    At least one coordinate is perturbed in every candidate.
    """
    m = incumbent.size
    width = hi - lo
    mask = rng.random((n_cand, m)) < p
    empty = ~mask.any(1)
    if np.any(empty):
        forced = rng.integers(0, m, size=int(empty.sum()))
        mask[np.flatnonzero(empty), forced] = True
    noise = rng.normal(0.0, sigma, (n_cand, m)) * width
    return np.clip(incumbent + np.where(mask, noise, 0.0), lo, hi), mask


def _unit_rank(v):
    r = rankdata(v, method="min") - 1.0
    return r / max(len(v) - 1, 1)


def propose_dycors(model, data_X, incumbent, params: DycorsParams, state: DycorsState, rng, t, budget, lo, hi):
    """Return ``(point, new_state)``.

    Candidates are scored by ``w * rank(-mean) + (1 - w) * rank(-distance)``
    with ``w`` cycling through 0.3, 0.5, 0.8, 0.95; the lowest merit wins.
    """
    if incumbent is None:
        raise NoIncumbent("DYCORS needs at least one successful observation")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    incumbent = np.clip(np.asarray(incumbent, dtype=float), lo, hi)
    m = incumbent.size
    p = perturbation_probability(t, budget, params.p_init, m)
    cand, _ = dycors_candidates(incumbent, p, state.sigma, params.n_cand, lo, hi, rng)
    if model is None:
        raise ModelUnavailable("DYCORS merit needs a fitted model")
    mu = surrogate.predict(model, cand, return_var=False)
    data_X = np.atleast_2d(np.asarray(data_X, dtype=float))
    dist = cdist(cand, data_X).min(1) if data_X.size else np.zeros(len(cand))
    w = state.weight()
    merit = w * _unit_rank(-mu) + (1.0 - w) * _unit_rank(-dist)
    best = int(np.argmin(merit))
    return cand[best], replace(state, n_proposals=state.n_proposals + 1)
