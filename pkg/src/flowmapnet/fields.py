"""Time-varying 2D vector fields.

Provides the analytical Double Gyre, a handful of closed-form fields with
known exact trajectories (zero, constant translation, rigid rotation,
linear saddle), and a loader/sampler for gridded time-series data.

All fields share one calling convention: ``field.velocity(p, t)`` where
``p`` is a single position ``(x, y[, z])`` or a batch ``(N, 2|3)`` and
``t`` is a scalar time.  Velocities come back with three components; the
third is always zero (positions carry a constant z so downstream arrays
keep a 3-component layout).  Field objects are immutable after
construction and evaluation is pure, so they are safe to share across
threads.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ConfigError, DataFormatError, OutOfDomainError


@dataclass(frozen=True)
class Domain:
    """Rectangular spatial bounds."""

    x_min: float = 0.0
    x_max: float = 2.0
    y_min: float = 0.0
    y_max: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError(
                f"degenerate domain [{self.x_min}, {self.x_max}] x [{self.y_min}, {self.y_max}]"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, p, atol: float = 0.0):
        """Elementwise containment test for positions (x, y ignored beyond)."""
        p = np.asarray(p, dtype=np.float64)
        x, y = p[..., 0], p[..., 1]
        return (
            (x >= self.x_min - atol)
            & (x <= self.x_max + atol)
            & (y >= self.y_min - atol)
            & (y <= self.y_max + atol)
        )

    def clip(self, p: np.ndarray) -> np.ndarray:
        out = np.array(p, dtype=np.float64, copy=True)
        out[..., 0] = np.clip(out[..., 0], self.x_min, self.x_max)
        out[..., 1] = np.clip(out[..., 1], self.y_min, self.y_max)
        return out

    def shrink(self, margin: float) -> "Domain":
        """Domain reduced by `margin` on every side (test seeds use offset 0.05)."""
        return Domain(
            self.x_min + margin, self.x_max - margin, self.y_min + margin, self.y_max - margin
        )

    def as_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        return cls(float(d["x_min"]), float(d["x_max"]), float(d["y_min"]), float(d["y_max"]))


@runtime_checkable
class VectorField(Protocol):
    domain: Domain
    strict_bounds: bool

    def velocity(self, p: np.ndarray, t: float) -> np.ndarray: ...


def _with_w0(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.zeros(u.shape + (3,), dtype=np.float64)
    out[..., 0] = u
    out[..., 1] = v
    return out


@dataclass(frozen=True)
class DoubleGyreParams:
    """Amplitude, angular frequency, and perturbation strength of the gyre pair."""

    A: float = 0.1
    omega: float = math.pi / 5.0
    eps: float = 0.25


def double_gyre_stream_function(p, t: float, params: DoubleGyreParams = DoubleGyreParams()):
    """Stream function psi(x, y, t) of the unsteady Double Gyre."""
    p = np.asarray(p, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    s = params.eps * np.sin(params.omega * t)
    f = s * x**2 + (1.0 - 2.0 * s) * x
    return params.A * np.sin(np.pi * f) * np.sin(np.pi * y)


def double_gyre_velocity(p, t: float, params: DoubleGyreParams = DoubleGyreParams()) -> np.ndarray:
    """Velocity (u, v, 0) = (-dpsi/dy, dpsi/dx, 0) of the Double Gyre.

    Defined for all real (x, y, t); the normal component vanishes on the
    boundary of [0, 2] x [0, 1], so exact trajectories never leave it.
    """
    p = np.asarray(p, dtype=np.float64)
    x, y = p[..., 0], p[..., 1]
    s = params.eps * np.sin(params.omega * t)
    a = s
    b = 1.0 - 2.0 * s
    f = a * x**2 + b * x
    dfdx = 2.0 * a * x + b
    u = -np.pi * params.A * np.sin(np.pi * f) * np.cos(np.pi * y)
    v = np.pi * params.A * np.cos(np.pi * f) * np.sin(np.pi * y) * dfdx
    return _with_w0(u, v)


@dataclass(frozen=True)
class DoubleGyreField:
    params: DoubleGyreParams = DoubleGyreParams()
    domain: Domain = field(default_factory=Domain)
    strict_bounds: bool = False

    def velocity(self, p, t: float) -> np.ndarray:
        return double_gyre_velocity(p, t, self.params)


@dataclass(frozen=True)
class ZeroField:
    domain: Domain = field(default_factory=Domain)
    strict_bounds: bool = False

    def velocity(self, p, t: float) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return np.zeros(p.shape[:-1] + (3,), dtype=np.float64)


@dataclass(frozen=True)
class ConstantField:
    """Uniform translation (u, v)."""

    u: float = 1.0
    v: float = 0.0
    domain: Domain = field(default_factory=Domain)
    strict_bounds: bool = False

    def velocity(self, p, t: float) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        shape = p.shape[:-1]
        return _with_w0(np.full(shape, self.u), np.full(shape, self.v))


@dataclass(frozen=True)
class RotationField:
    """Rigid rotation v = (-y, x); exact orbit from (1,0) is (cos t, sin t)."""

    domain: Domain = Domain(-2.0, 2.0, -2.0, 2.0)
    strict_bounds: bool = False

    def velocity(self, p, t: float) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return _with_w0(-p[..., 1], p[..., 0].copy())


@dataclass(frozen=True)
class SaddleField:
    """Linear saddle v = (x, -y); flow map stretches by e^T along x."""

    domain: Domain = Domain(-2.0, 2.0, -2.0, 2.0)
    strict_bounds: bool = False

    def velocity(self, p, t: float) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return _with_w0(p[..., 0].copy(), -p[..., 1])


class GriddedField:
    """Uniform-grid time series of (u, v) samples with bilinear/linear interpolation.

    Nodes are vertex-centered: node (i, j) sits at
    ``(x_min + i * hx, y_min + j * hy)`` with ``hx = width / (nx - 1)``.
    Time queries up to half a slice spacing past the final slice clamp to
    the final slice; anything later is an error rather than a silent
    extrapolation.
    """

    strict_bounds = True

    def __init__(self, domain: Domain, dt: float, velocities: np.ndarray):
        velocities = np.asarray(velocities, dtype=np.float64)
        if velocities.ndim != 4 or velocities.shape[3] != 2:
            raise ConfigError(
                f"velocities must have shape [n_steps, ny, nx, 2], got {velocities.shape}"
            )
        n_steps, ny, nx, _ = velocities.shape
        if nx < 2 or ny < 2 or n_steps < 2:
            raise ConfigError(f"grid too small: nx={nx}, ny={ny}, n_steps={n_steps}")
        if dt <= 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        if not np.isfinite(velocities).all():
            raise DataFormatError("gridded field contains non-finite velocity values")
        self.domain = domain
        self.dt = float(dt)
        self.velocities = velocities
        self.velocities.setflags(write=False)
        self.nx = nx
        self.ny = ny
        self.n_steps = n_steps

    @property
    def t_max(self) -> float:
        return (self.n_steps - 1) * self.dt

    def velocity(self, p, t: float) -> np.ndarray:
        return sample_gridded(self, p, t)


def sample_gridded(field: GriddedField, p, t: float) -> np.ndarray:
    """Bilinear interpolation in space, linear in time, exact on nodes/slices."""
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    pts = np.atleast_2d(p)

    inside = field.domain.contains(pts)
    if not inside.all():
        bad = pts[~inside][0]
        raise OutOfDomainError(f"position ({bad[0]:.6g}, {bad[1]:.6g}) outside field domain")
    if t < 0 or t > field.t_max + 0.5 * field.dt:
        raise OutOfDomainError(f"time {t:.6g} outside stored range [0, {field.t_max:.6g}]")
    t = min(t, field.t_max)

    dom = field.domain
    hx = dom.width / (field.nx - 1)
    hy = dom.height / (field.ny - 1)
    gx = (pts[:, 0] - dom.x_min) / hx
    gy = (pts[:, 1] - dom.y_min) / hy
    i0 = np.clip(np.floor(gx).astype(np.intp), 0, field.nx - 2)
    j0 = np.clip(np.floor(gy).astype(np.intp), 0, field.ny - 2)
    fx = (gx - i0)[:, None]
    fy = (gy - j0)[:, None]

    s = t / field.dt
    k0 = min(int(s), field.n_steps - 2)
    ft = s - k0

    def plane(k):
        v = field.velocities[k]
        v00 = v[j0, i0]
        v01 = v[j0, i0 + 1]
        v10 = v[j0 + 1, i0]
        v11 = v[j0 + 1, i0 + 1]
        return (
            v00 * (1 - fx) * (1 - fy)
            + v01 * fx * (1 - fy)
            + v10 * (1 - fx) * fy
            + v11 * fx * fy
        )

    uv = plane(k0) if ft == 0.0 else (1 - ft) * plane(k0) + ft * plane(k0 + 1)
    out = _with_w0(uv[:, 0], uv[:, 1])
    return out[0] if single else out


def load_gridded_field(descriptor_path: str | os.PathLike) -> GriddedField:
    """Load a gridded field from a JSON descriptor plus a raw float32 blob.

    Descriptor keys: nx, ny, n_steps, dt, x_min, x_max, y_min, y_max,
    blob_path (relative paths resolve against the descriptor's directory).
    Blob layout: little-endian float32, [t][y][x][component], components (u, v).
    """
    descriptor_path = os.fspath(descriptor_path)
    try:
        with open(descriptor_path, "r") as fh:
            desc = json.load(fh)
    except FileNotFoundError:
        raise DataFormatError(f"gridded-field descriptor not found: {descriptor_path}") from None
    except json.JSONDecodeError as e:
        raise DataFormatError(f"malformed descriptor {descriptor_path}: {e}") from None

    required = {"nx", "ny", "n_steps", "dt", "x_min", "x_max", "y_min", "y_max", "blob_path"}
    missing = required - desc.keys()
    if missing:
        raise DataFormatError(f"descriptor missing fields: {sorted(missing)}")

    nx, ny, n_steps = int(desc["nx"]), int(desc["ny"]), int(desc["n_steps"])
    blob_path = desc["blob_path"]
    if not os.path.isabs(blob_path):
        blob_path = os.path.join(os.path.dirname(os.path.abspath(descriptor_path)), blob_path)
    try:
        raw = np.fromfile(blob_path, dtype="<f4")
    except FileNotFoundError:
        raise DataFormatError(f"velocity blob not found: {blob_path}") from None

    expected = n_steps * ny * nx * 2
    if raw.size != expected:
        raise DataFormatError(
            f"velocity blob holds {raw.size} float32 values, expected {expected} "
            f"({n_steps} x {ny} x {nx} x 2)"
        )
    if not np.isfinite(raw).all():
        raise DataFormatError("velocity blob contains non-finite values")

    domain = Domain(
        float(desc["x_min"]), float(desc["x_max"]), float(desc["y_min"]), float(desc["y_max"])
    )
    return GriddedField(domain, float(desc["dt"]), raw.reshape(n_steps, ny, nx, 2))


def write_gridded_field(field: GriddedField, descriptor_path: str | os.PathLike) -> None:
    """Inverse of load_gridded_field; blob lands next to the descriptor."""
    from .util import atomic_write_bytes, atomic_write_text

    descriptor_path = os.fspath(descriptor_path)
    blob_name = os.path.splitext(os.path.basename(descriptor_path))[0] + ".f32"
    blob_path = os.path.join(os.path.dirname(os.path.abspath(descriptor_path)), blob_name)
    atomic_write_bytes(blob_path, field.velocities.astype("<f4").tobytes())
    desc = {
        "nx": field.nx,
        "ny": field.ny,
        "n_steps": field.n_steps,
        "dt": field.dt,
        **field.domain.as_dict(),
        "blob_path": blob_name,
    }
    atomic_write_text(descriptor_path, json.dumps(desc, indent=2) + "\n")
