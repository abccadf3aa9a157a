"""Lagrangian flow-map extraction.

Particles advance with classical RK4, one step per cycle of length delta.
Two dataset flavors:

* long  - seeds placed once at t=0 and traced for the whole duration,
  positions recorded at every file cycle
* short - particles restart from the original seed positions at the top of
  each interval, only interval end positions are recorded

Either way the dataset is a single [n+1, N, 3] float32 array: row 0 holds
the seeds, row j the end positions at file cycle j*C.  Advection runs in
double precision; only storage is float32.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataFormatError
from .fields import Domain, VectorField
from .npyio import read_npy, write_npy
from .seeding import SeedSet
from .util import atomic_write_text, chunk_ranges, resolve_threads

STRATEGY_LONG = "long"
STRATEGY_SHORT = "short"


@dataclass(frozen=True)
class ExtractionConfig:
    """Cycle arithmetic for one extraction run.

    delta is the simulation step size, interval_C the number of cycles
    between file cycles, T the total temporal duration.  The number of
    file cycles is n = floor(T / (delta * C)); trailing cycles beyond n*C
    are discarded.
    """

    delta: float
    interval_C: int
    T: float
    strategy: str = STRATEGY_LONG

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.interval_C < 1:
            raise ConfigError(f"interval must be >= 1, got {self.interval_C}")
        if self.T <= 0:
            raise ConfigError(f"duration must be positive, got {self.T}")
        if self.strategy not in (STRATEGY_LONG, STRATEGY_SHORT):
            raise ConfigError(f"strategy must be 'long' or 'short', got {self.strategy!r}")
        if self.n < 1:
            raise ConfigError(
                f"no complete file cycle fits: floor({self.T} / ({self.delta} * {self.interval_C})) = 0"
            )

    @property
    def n(self) -> int:
        # 1e-9 guards against float representation noise in delta * C
        return math.floor(self.T / (self.delta * self.interval_C) + 1e-9)

    @property
    def total_cycles(self) -> int:
        return self.n * self.interval_C

    def file_cycles(self) -> np.ndarray:
        """The recorded cycles [C, 2C, ..., nC]."""
        return np.arange(1, self.n + 1, dtype=np.int64) * self.interval_C

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "delta": self.delta,
            "interval_C": self.interval_C,
            "T": self.T,
            "n": self.n,
        }


def rk4_step(field: VectorField, p, t: float, h: float) -> np.ndarray:
    """One classical 4-stage Runge-Kutta step from (p, t) with step size h."""
    p = np.asarray(p, dtype=np.float64)
    k1 = field.velocity(p, t)
    k2 = field.velocity(p + (0.5 * h) * k1, t + 0.5 * h)
    k3 = field.velocity(p + (0.5 * h) * k2, t + 0.5 * h)
    k4 = field.velocity(p + h * k3, t + h)
    return p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _ClampedEval:
    """Evaluation wrapper that clips stage positions into the field domain.

    Used only during extraction of strict-bounds (gridded) fields so RK4
    stage points of particles hugging the boundary stay evaluable.
    """

    strict_bounds = False

    def __init__(self, field):
        self.field = field
        self.domain = field.domain

    def velocity(self, p, t):
        return self.field.velocity(self.domain.clip(p), t)


@dataclass
class FlowMapDataset:
    """[n+1, N, 3] float32 flow-map array plus extraction provenance."""

    data: np.ndarray
    config: ExtractionConfig
    domain: Domain
    seeding_strategy: str
    rng_token: int

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise DataFormatError(f"dataset must be rank-3 with last dim 3, got {self.data.shape}")
        if self.data.shape[0] != self.config.n + 1:
            raise DataFormatError(
                f"dataset has {self.data.shape[0]} rows but config implies n+1 = {self.config.n + 1}"
            )
        if not np.isfinite(self.data).all():
            raise DataFormatError("dataset contains non-finite positions")

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def n(self) -> int:
        return self.data.shape[0] - 1

    def seed_positions(self) -> np.ndarray:
        return self.data[0].astype(np.float64)


def _advect_rows(field, start_pos, t0: float, cycles: int, delta: float,
                 record_every: int, out_rows: np.ndarray) -> np.ndarray:
    """Advance a block of particles `cycles` steps, recording every `record_every`.

    out_rows has one row per recorded cycle.  Particles leaving a
    strict-bounds domain are clamped to the boundary and frozen there.
    Returns the final positions.
    """
    strict = getattr(field, "strict_bounds", False)
    evalf = _ClampedEval(field) if strict else field
    pos = np.array(start_pos, dtype=np.float64, copy=True)
    frozen = np.zeros(len(pos), dtype=bool)
    for k in range(1, cycles + 1):
        t = t0 + (k - 1) * delta
        if strict and frozen.any():
            live = ~frozen
            pos[live] = rk4_step(evalf, pos[live], t, delta)
        else:
            pos = rk4_step(evalf, pos, t, delta)
        if strict:
            exited = ~field.domain.contains(pos) & ~frozen
            if exited.any():
                pos[exited] = field.domain.clip(pos[exited])
                frozen |= exited
        if k % record_every == 0:
            out_rows[k // record_every - 1] = pos.astype(np.float32)
    return pos


def _extract(field, seeds: SeedSet, cfg: ExtractionConfig, threads) -> FlowMapDataset:
    n, C, delta = cfg.n, cfg.interval_C, cfg.delta
    N = seeds.N
    data = np.empty((n + 1, N, 3), dtype=np.float32)
    data[0] = seeds.positions.astype(np.float32)

    def run_chunk(lo, hi):
        block = seeds.positions[lo:hi]
        if cfg.strategy == STRATEGY_LONG:
            _advect_rows(field, block, 0.0, n * C, delta, C, data[1:, lo:hi])
        else:
            for j in range(n):
                _advect_rows(field, block, j * C * delta, C, delta, C, data[j + 1 : j + 2, lo:hi])

    ranges = chunk_ranges(N, resolve_threads(threads))
    if len(ranges) == 1:
        run_chunk(*ranges[0])
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            futures = [pool.submit(run_chunk, lo, hi) for lo, hi in ranges]
            for f in futures:
                f.result()
    return FlowMapDataset(data, cfg, seeds.domain, seeds.strategy, seeds.rng_token)


def extract_long(field, seeds: SeedSet, cfg: ExtractionConfig,
                 threads: int | None = None) -> FlowMapDataset:
    """Trace each seed continuously from t=0, recording at every file cycle."""
    if cfg.strategy != STRATEGY_LONG:
        raise ConfigError(f"extract_long requires strategy='long', got {cfg.strategy!r}")
    return _extract(field, seeds, cfg, threads)


def extract_short(field, seeds: SeedSet, cfg: ExtractionConfig,
                  threads: int | None = None) -> FlowMapDataset:
    """Re-seed at the original positions each interval; record interval ends."""
    if cfg.strategy != STRATEGY_SHORT:
        raise ConfigError(f"extract_short requires strategy='short', got {cfg.strategy!r}")
    return _extract(field, seeds, cfg, threads)


def extract(field, seeds: SeedSet, cfg: ExtractionConfig,
            threads: int | None = None) -> FlowMapDataset:
    if cfg.strategy == STRATEGY_LONG:
        return extract_long(field, seeds, cfg, threads)
    return extract_short(field, seeds, cfg, threads)


def _sidecar_path(path: str) -> str:
    return os.fspath(path) + ".meta.json"


def write_dataset(ds: FlowMapDataset, path: str | os.PathLike) -> None:
    """NPY array plus a JSON sidecar carrying the extraction metadata."""
    path = os.fspath(path)
    write_npy(path, ds.data)
    meta = {
        **ds.config.as_dict(),
        "N": ds.N,
        "domain": ds.domain.as_dict(),
        "seeding": ds.seeding_strategy,
        "rng_token": ds.rng_token,
    }
    atomic_write_text(_sidecar_path(path), json.dumps(meta, indent=2) + "\n")


def read_dataset(path: str | os.PathLike) -> FlowMapDataset:
    path = os.fspath(path)
    data = read_npy(path)
    if data.ndim != 3 or data.shape[2] != 3:
        raise DataFormatError(f"{path}: flow-map array must be [n+1, N, 3], got {data.shape}")
    sidecar = _sidecar_path(path)
    try:
        with open(sidecar, "r") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(f"missing dataset sidecar {sidecar}") from None
    except json.JSONDecodeError as e:
        raise DataFormatError(f"malformed dataset sidecar {sidecar}: {e}") from None
    cfg = ExtractionConfig(
        delta=float(meta["delta"]),
        interval_C=int(meta["interval_C"]),
        T=float(meta["T"]),
        strategy=meta["strategy"],
    )
    return FlowMapDataset(
        data,
        cfg,
        Domain.from_dict(meta["domain"]),
        meta["seeding"],
        int(meta["rng_token"]),
    )


@dataclass(frozen=True)
class TrainingSample:
    """(start position, queried file cycle, target end position)."""

    start: np.ndarray
    file_cycle: int
    target: np.ndarray


class SampleSet:
    """Columnar view of N*n training samples.

    Behaves as a sequence of TrainingSample while storing three aligned
    arrays, which is what the trainer consumes directly.
    """

    def __init__(self, starts: np.ndarray, cycles: np.ndarray, targets: np.ndarray):
        starts = np.asarray(starts, dtype=np.float32)
        targets = np.asarray(targets, dtype=np.float32)
        cycles = np.asarray(cycles, dtype=np.int64)
        if not (len(starts) == len(cycles) == len(targets)):
            raise ConfigError("sample columns must have equal length")
        self.starts = starts
        self.cycles = cycles
        self.targets = targets

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> TrainingSample:
        return TrainingSample(self.starts[i], int(self.cycles[i]), self.targets[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_samples(cls, samples) -> "SampleSet":
        samples = list(samples)
        return cls(
            np.stack([s.start for s in samples]),
            np.array([s.file_cycle for s in samples]),
            np.stack([s.target for s in samples]),
        )


def assemble_samples(ds: FlowMapDataset) -> SampleSet:
    """Flatten a dataset into N*n samples, seed-major then cycle order.

    Sample (i, j) pairs seed i's row-0 position with file cycle (j+1)*C and
    the row j+1 end position.  Short-strategy starts are still the row-0
    seeds: each interval restarts there.
    """
    n, N = ds.n, ds.N
    starts = np.repeat(ds.data[0], n, axis=0)
    cycles = np.tile(ds.config.file_cycles(), N)
    targets = np.ascontiguousarray(ds.data[1:].transpose(1, 0, 2)).reshape(N * n, 3)
    return SampleSet(starts, cycles, targets)
