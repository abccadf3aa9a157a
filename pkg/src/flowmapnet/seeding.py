"""Seed placement inside a rectangular domain.

Three strategies: vertex-centered uniform lattice (boundary points
included), pseudorandom uniform, and the 2D Sobol quasirandom sequence.
Every seed carries three components with z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fields import Domain

STRATEGIES = ("uniform", "random", "sobol")

_SOBOL_BITS = 32
_SOBOL_SCALE = float(1 << _SOBOL_BITS)


def _sobol_direction_integers() -> np.ndarray:
    """Direction integers V[dim][j] scaled to 2^32 for the first two dimensions.

    Dimension 0 is the van der Corput sequence (all m_j = 1); dimension 1
    uses the degree-1 primitive polynomial x + 1 from the standard Joe-Kuo
    table, i.e. m_1 = 1 and m_j = (2 * m_{j-1}) ^ m_{j-1}.
    """
    v = np.zeros((2, _SOBOL_BITS), dtype=np.uint64)
    m = 1
    for j in range(_SOBOL_BITS):
        v[0, j] = np.uint64(1 << (_SOBOL_BITS - 1 - j))
        v[1, j] = np.uint64(m << (_SOBOL_BITS - 1 - j))
        m = (2 * m) ^ m
    return v


_DIRECTIONS = _sobol_direction_integers()


def sobol_points_2d(n: int, skip: int = 0) -> np.ndarray:
    """Points skip..skip+n-1 of the 2D Sobol sequence in [0, 1)^2.

    Gray-code ordering with point 0 at the origin; the first four points
    are (0,0), (.5,.5), (.75,.25), (.25,.75).
    """
    if n < 1:
        raise ConfigError(f"need at least one point, got n={n}")
    if skip < 0 or skip + n > 1 << _SOBOL_BITS:
        raise ConfigError(f"sobol index range [{skip}, {skip + n}) out of 32-bit capacity")
    state = np.zeros(2, dtype=np.uint64)
    gray = skip ^ (skip >> 1)
    for bit in range(_SOBOL_BITS):
        if (gray >> bit) & 1:
            state ^= _DIRECTIONS[:, bit]
    out = np.empty((n, 2), dtype=np.float64)
    for k in range(n):
        out[k] = state / _SOBOL_SCALE
        idx = skip + k
        low_zero = 0
        while (idx >> low_zero) & 1:
            low_zero += 1
        state ^= _DIRECTIONS[:, low_zero]
    return out


@dataclass(frozen=True)
class SeedSet:
    """N seed positions plus the provenance needed to regenerate them."""

    positions: np.ndarray  # (N, 3) float64
    strategy: str
    domain: Domain
    rng_token: int  # rng_seed for random, skip for sobol, 0 for uniform

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ConfigError(f"positions must be (N, 3), got {self.positions.shape}")
        if len(self.positions) < 1:
            raise ConfigError("a seed set needs at least one position")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown seeding strategy {self.strategy!r}")
        self.positions.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.positions)


def _as_seed_array(xy: np.ndarray) -> np.ndarray:
    out = np.zeros((len(xy), 3), dtype=np.float64)
    out[:, :2] = xy
    return out


def seed_uniform(domain: Domain, nx: int, ny: int) -> SeedSet:
    """Vertex-centered nx x ny lattice spanning the domain, boundary included.

    A single-count axis collapses to the domain midpoint on that axis.
    """
    if nx < 1 or ny < 1:
        raise ConfigError(f"grid counts must be >= 1, got {nx} x {ny}")
    xs = np.linspace(domain.x_min, domain.x_max, nx) if nx > 1 else np.array(
        [0.5 * (domain.x_min + domain.x_max)]
    )
    ys = np.linspace(domain.y_min, domain.y_max, ny) if ny > 1 else np.array(
        [0.5 * (domain.y_min + domain.y_max)]
    )
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    xy = np.column_stack([gx.ravel(), gy.ravel()])
    return SeedSet(_as_seed_array(xy), "uniform", domain, 0)


def seed_random(domain: Domain, N: int, rng_seed: int) -> SeedSet:
    """N i.i.d. uniform positions; deterministic for a fixed rng_seed."""
    if N < 1:
        raise ConfigError(f"seed count must be >= 1, got {N}")
    rng = np.random.default_rng(rng_seed)
    xy = rng.uniform(
        [domain.x_min, domain.y_min], [domain.x_max, domain.y_max], size=(N, 2)
    )
    return SeedSet(_as_seed_array(xy), "random", domain, rng_seed)


def seed_sobol(domain: Domain, N: int, skip: int = 0) -> SeedSet:
    """Points skip..skip+N-1 of the 2D Sobol sequence mapped onto the domain."""
    if N < 1:
        raise ConfigError(f"seed count must be >= 1, got {N}")
    unit = sobol_points_2d(N, skip)
    xy = unit * [domain.width, domain.height] + [domain.x_min, domain.y_min]
    return SeedSet(_as_seed_array(xy), "sobol", domain, skip)


def validation_seeds(train: SeedSet, fraction: float = 0.1) -> SeedSet:
    """Held-out seeds with the same strategy but guaranteed disjoint from training.

    Sobol continues the sequence at skip = token + N; random advances the
    rng seed.  A uniform lattice has no disjoint sub-lattice (corner nodes
    would recur), so its validation seeds are pseudorandom instead.
    """
    n_val = max(1, int(round(fraction * train.N)))
    if train.strategy == "sobol":
        return seed_sobol(train.domain, n_val, skip=train.rng_token + train.N)
    return seed_random(train.domain, n_val, rng_seed=train.rng_token + 1)
