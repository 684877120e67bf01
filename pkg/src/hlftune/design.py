"""Initial designs: Latin Hypercube Sampling and uniform random proposals."""

from dataclasses import dataclass

import numpy as np

from . import seeding


@dataclass(frozen=True)
class DesignSpec:
    n_init: int
    d: int
    seed: int

    def __post_init__(self):
        if self.n_init < 1 or self.d < 1:
            raise ValueError(f"need n_init >= 1 and d >= 1, got {self.n_init}, {self.d}")


def lhs(spec: DesignSpec) -> np.ndarray:
    """Latin Hypercube design of shape ``(n_init, d)``.

    Column ``j`` places exactly one point in each stratum
    ``[k/n, (k+1)/n)``: a seeded permutation picks the stratum of each row
    and a uniform offset picks the position inside it.
    """
    n, d = spec.n_init, spec.d
    g = seeding.rng(spec.seed, seeding.STREAM_DESIGN)
    strata = np.argsort(g.random((n, d)), axis=0, kind="stable")
    offsets = g.random((n, d))
    X = (strata + offsets) / n
    # (k + u)/n can round up to (k+1)/n when u is within an ulp of 1
    over = np.floor(X * n) > strata
    if np.any(over):
        X[over] = np.nextafter((strata[over] + 1) / n, 0.0)
    return X


def uniform_propose(g: np.random.Generator, d: int) -> np.ndarray:
    """One i.i.d. Uniform[0, 1) point; advances ``g``."""
    return g.random(d)
