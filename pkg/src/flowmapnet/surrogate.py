"""MLP surrogate mapping (seed position, file cycle) -> end position.

Two encoder branches (position and cycle) of fully connected layers, each
hidden layer applying affine -> layer normalization -> ReLU; their outputs
are concatenated into a latent vector and decoded by a second stack whose
final 3-unit layer is a plain affine.  Training minimizes mean absolute
error with Adam and a halve-on-plateau learning-rate schedule.

Everything is computed in normalized space: positions map affinely from
the domain bounds to [-1, 1] per axis and the queried file cycle divides
by the total cycle count into (0, 1].  Predictions are de-normalized on
the way out.  The implementation is plain numpy; gradients are exact
(audited against finite differences in the test suite).
"""

from __future__ import annotations

import json
import math
import os
import struct
import time
import zlib
from dataclasses import dataclass, field, replace
from hashlib import sha256

import numpy as np

from .errors import ConfigError, DataFormatError, NumericError
from .fields import Domain
from .flowmap import ExtractionConfig, SampleSet
from .util import atomic_write_bytes, atomic_write_text

DEFAULT_DTYPE = np.float32
LN_EPS = 1e-5

MODEL_MAGIC = b"FLOWMAPS"
MODEL_VERSION = 1
_HEADER = struct.Struct("<8sIQQI8s")  # magic, version, meta_len, n_params, flags, reserved
METADATA_BLOCK = 4096  # fixed-size so file size depends only on the architecture


@dataclass(frozen=True)
class Architecture:
    """Layer widths for the two encoder branches and the decoder.

    width_scale multiplies every hidden width uniformly (useful for
    desk-scale smoke runs); input/output dimensions are never scaled.
    """

    branch_a_widths: tuple[int, ...] = (64, 128, 256, 512)
    branch_b_widths: tuple[int, ...] = (16, 32, 64, 128, 256, 512)
    decoder_widths: tuple[int, ...] = (512, 256, 128, 64)
    in_pos_dim: int = 3
    in_cycle_dim: int = 1
    out_dim: int = 3
    width_scale: float = 1.0

    def __post_init__(self):
        if self.width_scale <= 0:
            raise ConfigError(f"width_scale must be positive, got {self.width_scale}")
        for widths in (self.branch_a_widths, self.branch_b_widths, self.decoder_widths):
            if not widths:
                raise ConfigError("every layer stack needs at least one width")
        if self.a_widths[-1] != self.b_widths[-1]:
            raise ConfigError(
                f"branch output widths must match: {self.a_widths[-1]} vs {self.b_widths[-1]}"
            )

    def _scaled(self, widths: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(max(1, int(round(w * self.width_scale))) for w in widths)

    @property
    def a_widths(self) -> tuple[int, ...]:
        return self._scaled(self.branch_a_widths)

    @property
    def b_widths(self) -> tuple[int, ...]:
        return self._scaled(self.branch_b_widths)

    @property
    def dec_widths(self) -> tuple[int, ...]:
        return self._scaled(self.decoder_widths)

    @property
    def latent_width(self) -> int:
        return 2 * self.a_widths[-1]

    def layer_dims(self) -> tuple[list, list, list]:
        """(in, out, normed) triples for branch A, branch B, and the decoder."""

        def stack(d_in, widths):
            dims, prev = [], d_in
            for w in widths:
                dims.append((prev, w, True))
                prev = w
            return dims

        a = stack(self.in_pos_dim, self.a_widths)
        b = stack(self.in_cycle_dim, self.b_widths)
        dec = stack(self.latent_width, self.dec_widths)
        dec.append((self.dec_widths[-1], self.out_dim, False))
        return a, b, dec

    def param_count(self) -> int:
        total = 0
        for dims in self.layer_dims():
            for d_in, d_out, normed in dims:
                total += d_out * d_in + d_out
                if normed:
                    total += 2 * d_out
        return total

    def as_dict(self) -> dict:
        return {
            "branch_a_widths": list(self.branch_a_widths),
            "branch_b_widths": list(self.branch_b_widths),
            "decoder_widths": list(self.decoder_widths),
            "in_pos_dim": self.in_pos_dim,
            "in_cycle_dim": self.in_cycle_dim,
            "out_dim": self.out_dim,
            "width_scale": self.width_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            branch_a_widths=tuple(d["branch_a_widths"]),
            branch_b_widths=tuple(d["branch_b_widths"]),
            decoder_widths=tuple(d["decoder_widths"]),
            in_pos_dim=int(d["in_pos_dim"]),
            in_cycle_dim=int(d["in_cycle_dim"]),
            out_dim=int(d["out_dim"]),
            width_scale=float(d["width_scale"]),
        )


@dataclass(frozen=True)
class Normalization:
    """Affine input/output normalization constants baked into a model."""

    domain: Domain
    total_cycles: int

    def __post_init__(self):
        if self.total_cycles < 1:
            raise ConfigError(f"total_cycles must be >= 1, got {self.total_cycles}")

    # z has no domain bounds; it is carried through unchanged (constant 0 in 2D data)
    def encode_pos(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        out = np.empty_like(p)
        d = self.domain
        out[..., 0] = 2.0 * (p[..., 0] - d.x_min) / d.width - 1.0
        out[..., 1] = 2.0 * (p[..., 1] - d.y_min) / d.height - 1.0
        out[..., 2] = p[..., 2]
        return out

    def decode_pos(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        out = np.empty_like(q)
        d = self.domain
        out[..., 0] = (q[..., 0] + 1.0) * 0.5 * d.width + d.x_min
        out[..., 1] = (q[..., 1] + 1.0) * 0.5 * d.height + d.y_min
        out[..., 2] = q[..., 2]
        return out

    def encode_cycle(self, c) -> np.ndarray:
        return np.asarray(c, dtype=np.float64) / self.total_cycles

    @classmethod
    def from_dataset(cls, ds) -> "Normalization":
        return cls(ds.domain, ds.config.total_cycles)

    def as_dict(self) -> dict:
        return {"domain": self.domain.as_dict(), "total_cycles": self.total_cycles}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(Domain.from_dict(d["domain"]), int(d["total_cycles"]))


_IDENTITY_NORM = Normalization(Domain(-1.0, 1.0, -1.0, 1.0), 1)


@dataclass
class DenseLayer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    gain: np.ndarray | None = None  # layer-norm scale, hidden layers only
    shift: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = [self.w, self.b]
        if self.gain is not None:
            out += [self.gain, self.shift]
        return out


@dataclass
class ModelParams:
    """All trainable parameters plus the constants needed to use them."""

    arch: Architecture
    branch_a: list[DenseLayer]
    branch_b: list[DenseLayer]
    decoder: list[DenseLayer]
    norm: Normalization
    extraction: ExtractionConfig | None = None
    provenance: dict | None = None

    @property
    def dtype(self):
        return self.branch_a[0].w.dtype

    def layers(self) -> list[DenseLayer]:
        return [*self.branch_a, *self.branch_b, *self.decoder]

    def param_arrays(self) -> list[np.ndarray]:
        """Flat parameter list in the fixed serialization order."""
        out = []
        for layer in self.layers():
            out.extend(layer.arrays())
        return out

    def param_count(self) -> int:
        return sum(a.size for a in self.param_arrays())

    def copy(self) -> "ModelParams":
        def cp(layers):
            return [
                DenseLayer(
                    l.w.copy(),
                    l.b.copy(),
                    None if l.gain is None else l.gain.copy(),
                    None if l.shift is None else l.shift.copy(),
                )
                for l in layers
            ]

        return ModelParams(
            self.arch, cp(self.branch_a), cp(self.branch_b), cp(self.decoder),
            self.norm, self.extraction, self.provenance,
        )

    def astype(self, dtype) -> "ModelParams":
        out = self.copy()
        for layer in out.layers():
            layer.w = layer.w.astype(dtype)
            layer.b = layer.b.astype(dtype)
            if layer.gain is not None:
                layer.gain = layer.gain.astype(dtype)
                layer.shift = layer.shift.astype(dtype)
        return out

    def digest(self) -> str:
        h = sha256()
        for a in self.param_arrays():
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def init_model(
    arch: Architecture,
    rng_seed: int,
    norm: Normalization = _IDENTITY_NORM,
    extraction: ExtractionConfig | None = None,
    dtype=DEFAULT_DTYPE,
) -> ModelParams:
    """Fresh parameters: weights and biases ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    layer-norm gain 1 and shift 0.  Deterministic per rng_seed."""
    rng = np.random.default_rng(rng_seed)

    def make(dims):
        layers = []
        for d_in, d_out, normed in dims:
            bound = 1.0 / math.sqrt(d_in)
            w = rng.uniform(-bound, bound, size=(d_out, d_in)).astype(dtype)
            b = rng.uniform(-bound, bound, size=d_out).astype(dtype)
            if normed:
                layers.append(DenseLayer(w, b, np.ones(d_out, dtype), np.zeros(d_out, dtype)))
            else:
                layers.append(DenseLayer(w, b))
        return layers

    a_dims, b_dims, dec_dims = arch.layer_dims()
    return ModelParams(arch, make(a_dims), make(b_dims), make(dec_dims), norm, extraction)


def layer_norm_raw(x: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """Per-row normalization to zero mean / unit variance (before gain and shift)."""
    mu = x.mean(axis=-1, keepdims=True)
    d = x - mu
    var = (d * d).mean(axis=-1, keepdims=True)
    return d / np.sqrt(var + eps)


def layer_norm(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    return layer_norm_raw(x, eps) * gain + shift


def _layer_forward(layer: DenseLayer, x: np.ndarray, want_cache: bool):
    a = x @ layer.w.T + layer.b
    if layer.gain is None:
        return a, (x,) if want_cache else None
    mu = a.mean(axis=1, keepdims=True)
    d = a - mu
    var = (d * d).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    y = d * inv
    z = y * layer.gain + layer.shift
    out = np.maximum(z, 0.0)
    return out, (x, y, inv, z > 0) if want_cache else None


def _layer_backward(layer: DenseLayer, dout: np.ndarray, cache) -> tuple[np.ndarray, list]:
    """Returns (dL/dx, [dw, db(, dgain, dshift)]) for one layer."""
    if layer.gain is None:
        (x,) = cache
        da = dout
        extra = []
    else:
        x, y, inv, mask = cache
        dz = np.where(mask, dout, 0.0)
        dgain = (dz * y).sum(axis=0)
        dshift = dz.sum(axis=0)
        dy = dz * layer.gain
        da = inv * (
            dy - dy.mean(axis=1, keepdims=True) - y * (dy * y).mean(axis=1, keepdims=True)
        )
        extra = [dgain, dshift]
    dw = da.T @ x
    db = da.sum(axis=0)
    dx = da @ layer.w
    return dx, [dw, db, *extra]


def _forward_core(m: ModelParams, pos_n: np.ndarray, cyc_n: np.ndarray, want_cache: bool = False):
    """Normalized inputs -> normalized prediction (optionally with caches)."""
    caches = ([], [], []) if want_cache else None
    xa = pos_n
    for layer in m.branch_a:
        xa, c = _layer_forward(layer, xa, want_cache)
        if want_cache:
            caches[0].append(c)
    xb = cyc_n
    for layer in m.branch_b:
        xb, c = _layer_forward(layer, xb, want_cache)
        if want_cache:
            caches[1].append(c)
    z = np.concatenate([xa, xb], axis=1)
    for layer in m.decoder:
        z, c = _layer_forward(layer, z, want_cache)
        if want_cache:
            caches[2].append(c)
    return (z, caches) if want_cache else z


def forward(m: ModelParams, start, file_cycle) -> np.ndarray:
    """Predict end position(s) in domain coordinates.

    Accepts a single (x, y, z) with a scalar cycle or batches of both.
    """
    start = np.asarray(start, dtype=np.float64)
    single = start.ndim == 1
    pos = np.atleast_2d(start)
    cycles = np.broadcast_to(np.asarray(file_cycle, dtype=np.float64), (len(pos),))
    pos_n = m.norm.encode_pos(pos).astype(m.dtype)
    cyc_n = m.norm.encode_cycle(cycles).astype(m.dtype).reshape(-1, 1)
    y = _forward_core(m, pos_n, cyc_n)
    out = m.norm.decode_pos(y.astype(np.float64))
    return out[0] if single else out


def l1_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute error over all components and batch entries."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ConfigError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    return float(np.abs(target - pred).mean())


def _loss_and_grads(m: ModelParams, pos_n, cyc_n, tgt_n) -> tuple[float, list[np.ndarray]]:
    """Mean L1 loss in normalized space and its exact parameter gradients.

    The L1 subgradient at zero residual is taken as 0.
    """
    y, caches = _forward_core(m, pos_n, cyc_n, want_cache=True)
    r = y - tgt_n
    loss = float(np.abs(r).mean())
    dy = np.sign(r) / r.size
    dy = dy.astype(m.dtype)

    grads_dec = []
    d = dy
    for layer, cache in zip(reversed(m.decoder), reversed(caches[2])):
        d, gs = _layer_backward(layer, d, cache)
        grads_dec.append(gs)
    grads_dec.reverse()

    half = m.arch.a_widths[-1]
    da, db_ = d[:, :half], d[:, half:]

    grads_a = []
    for layer, cache in zip(reversed(m.branch_a), reversed(caches[0])):
        da, gs = _layer_backward(layer, da, cache)
        grads_a.append(gs)
    grads_a.reverse()

    grads_b = []
    for layer, cache in zip(reversed(m.branch_b), reversed(caches[1])):
        db_, gs = _layer_backward(layer, db_, cache)
        grads_b.append(gs)
    grads_b.reverse()

    flat: list[np.ndarray] = []
    for group in (grads_a, grads_b, grads_dec):
        for gs in group:
            flat.extend(gs)
    return loss, flat


def backward(m: ModelParams, starts, cycles, targets) -> tuple[float, list[np.ndarray]]:
    """Loss and gradients for a batch given in domain coordinates.

    Gradient arrays align one-to-one with m.param_arrays().
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    cycles = np.broadcast_to(np.asarray(cycles, dtype=np.float64), (len(starts),))
    pos_n = m.norm.encode_pos(starts).astype(m.dtype)
    cyc_n = m.norm.encode_cycle(cycles).astype(m.dtype).reshape(-1, 1)
    tgt_n = m.norm.encode_pos(targets).astype(m.dtype)
    return _loss_and_grads(m, pos_n, cyc_n, tgt_n)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def for_model(cls, model: ModelParams) -> "AdamState":
        params = model.param_arrays()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    model: ModelParams,
    grads: list[np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-6,
) -> ModelParams:
    """Standard bias-corrected Adam update (in place), step index t >= 1."""
    if t < 1:
        raise ConfigError(f"Adam step index must be >= 1, got {t}")
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    params = model.param_arrays()
    for p, g, mm, vv in zip(params, grads, state.m, state.v):
        mm *= beta1
        mm += (1.0 - beta1) * g
        vv *= beta2
        vv += (1.0 - beta2) * (g * g)
        p -= lr * (mm / c1) / (np.sqrt(vv / c2) + eps)
    return model


@dataclass
class PlateauState:
    """Halve-on-plateau learning-rate schedule state."""

    lr: float
    factor: float = 2.0
    patience: int = 5
    best: float = math.inf
    bad_epochs: int = 0


def plateau_scheduler(state: PlateauState, val_loss: float) -> float:
    """Feed one epoch's validation loss; returns the (possibly reduced) lr.

    The lr divides by `factor` once the loss has failed to improve on the
    best seen for `patience` consecutive epochs.
    """
    if val_loss < state.best:
        state.best = val_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            state.lr /= state.factor
            state.bad_epochs = 0
    return state.lr


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 200
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-6
    plateau_factor: float = 2.0
    plateau_patience: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        # lr0 == 0 is allowed as an explicit no-op training (parameters must not move)
        if not (0.0 <= self.lr0 < 1.0):
            raise ConfigError(f"lr0 must lie in [0, 1), got {self.lr0}")

    @classmethod
    def for_strategy(cls, strategy: str, **overrides) -> "TrainConfig":
        """Operative defaults from the hyperparameter study: long -> batch 200 /
        lr 1e-3, short -> batch 300 / lr 1e-4."""
        base = dict(batch_size=200, lr0=1e-3) if strategy == "long" else dict(
            batch_size=300, lr0=1e-4
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    seconds: float


@dataclass
class TrainLog:
    rows: list[EpochStats] = field(default_factory=list)

    def write_csv(self, path: str | os.PathLike) -> None:
        lines = ["epoch,train_loss,val_loss,lr,seconds"]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_loss:.9g},{r.val_loss:.9g},{r.lr:.9g},{r.seconds:.3f}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def _as_sample_set(samples) -> SampleSet:
    if isinstance(samples, SampleSet):
        return samples
    return SampleSet.from_samples(samples)


def _eval_loss(m: ModelParams, X, c, Y, batch: int = 4096) -> float:
    total = 0.0
    for lo in range(0, len(X), batch):
        hi = min(lo + batch, len(X))
        pred = _forward_core(m, X[lo:hi], c[lo:hi])
        total += float(np.abs(pred - Y[lo:hi]).sum())
    return total / Y.size


def train(
    samples,
    val_samples,
    arch: Architecture,
    cfg: TrainConfig,
    norm: Normalization,
    extraction: ExtractionConfig | None = None,
    provenance: dict | None = None,
    verbose: bool = False,
) -> tuple[ModelParams, TrainLog]:
    """Shuffled mini-batch training with Adam and the plateau schedule.

    Per epoch: seeded shuffle, forward/L1/backward/Adam over every batch
    (the final partial batch included, its loss averaged over its actual
    size), one validation pass without weight updates, then the scheduler.
    A non-finite loss aborts with the offending epoch, batch, and lr.
    """
    samples = _as_sample_set(samples)
    val = _as_sample_set(val_samples)
    if len(samples) == 0 or len(val) == 0:
        raise ConfigError("training and validation sample sets must be non-empty")

    model = init_model(arch, cfg.rng_seed, norm=norm, extraction=extraction)
    model.provenance = provenance
    dtype = model.dtype
    X = norm.encode_pos(samples.starts.astype(np.float64)).astype(dtype)
    c = norm.encode_cycle(samples.cycles).astype(dtype).reshape(-1, 1)
    Y = norm.encode_pos(samples.targets.astype(np.float64)).astype(dtype)
    Xv = norm.encode_pos(val.starts.astype(np.float64)).astype(dtype)
    cv = norm.encode_cycle(val.cycles).astype(dtype).reshape(-1, 1)
    Yv = norm.encode_pos(val.targets.astype(np.float64)).astype(dtype)

    opt = AdamState.for_model(model)
    sched = PlateauState(cfg.lr0, cfg.plateau_factor, cfg.plateau_patience)
    rng = np.random.default_rng(cfg.rng_seed)
    log = TrainLog()
    M = len(samples)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        lr = sched.lr
        perm = rng.permutation(M)
        total = 0.0
        for bi, lo in enumerate(range(0, M, cfg.batch_size)):
            idx = perm[lo : lo + cfg.batch_size]
            loss, grads = _loss_and_grads(model, X[idx], c[idx], Y[idx])
            if not math.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, batch {bi}, lr {lr:g}"
                )
            step += 1
            adam_step(model, grads, opt, step, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            total += loss * len(idx)
        train_loss = total / M
        val_loss = _eval_loss(model, Xv, cv, Yv)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}, lr {lr:g}")
        log.rows.append(
            EpochStats(epoch, train_loss, val_loss, lr, time.perf_counter() - tic)
        )
        if verbose:
            print(
                f"epoch {epoch:4d}  train {train_loss:.6f}  val {val_loss:.6f}  lr {lr:g}",
                flush=True,
            )
        plateau_scheduler(sched, val_loss)
    return model, log


def _model_meta(m: ModelParams) -> dict:
    return {
        "format": MODEL_VERSION,
        "arch": m.arch.as_dict(),
        "norm": m.norm.as_dict(),
        "extraction": m.extraction.as_dict() if m.extraction else None,
        "provenance": m.provenance,
        "param_count": m.arch.param_count(),
    }


def model_bytes(m: ModelParams) -> bytes:
    """Serialize: 40-byte header, fixed-size metadata block, float32 payload
    in layer order (w row-major, b, gain, shift), trailing CRC32."""
    meta = json.dumps(_model_meta(m), sort_keys=True).encode()
    if len(meta) > METADATA_BLOCK:
        raise DataFormatError(
            f"model metadata block overflows {METADATA_BLOCK} bytes ({len(meta)})"
        )
    meta = meta.ljust(METADATA_BLOCK, b" ")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes() for a in m.param_arrays()
    )
    flags = 1 if m.extraction is not None else 0
    header = _HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, len(meta), m.param_count(), flags, b"\x00" * 8
    )
    body = header + meta + payload
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(m: ModelParams, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, model_bytes(m))


def load_model(path: str | os.PathLike) -> ModelParams:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size + 4:
        raise DataFormatError(f"{path}: truncated model file")
    magic, version, meta_len, n_params, flags, _ = _HEADER.unpack(blob[: _HEADER.size])
    if magic != MODEL_MAGIC:
        raise DataFormatError(f"{path}: not a model file (magic {magic!r})")
    if version != MODEL_VERSION:
        raise DataFormatError(f"{path}: unsupported model format version {version}")
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc_stored:
        raise DataFormatError(f"{path}: checksum failure")
    meta_end = _HEADER.size + meta_len
    try:
        meta = json.loads(blob[_HEADER.size : meta_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: malformed metadata block: {e}") from None

    arch = Architecture.from_dict(meta["arch"])
    if arch.param_count() != n_params:
        raise DataFormatError(
            f"{path}: header/architecture mismatch: header says {n_params} parameters, "
            f"architecture implies {arch.param_count()}"
        )
    payload = blob[meta_end:-4]
    if len(payload) != 4 * n_params:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {4 * n_params}"
        )
    flat = np.frombuffer(payload, dtype="<f4")

    norm = Normalization.from_dict(meta["norm"])
    extraction = (
        ExtractionConfig(
            delta=float(meta["extraction"]["delta"]),
            interval_C=int(meta["extraction"]["interval_C"]),
            T=float(meta["extraction"]["T"]),
            strategy=meta["extraction"]["strategy"],
        )
        if meta.get("extraction")
        else None
    )

    model = init_model(arch, rng_seed=0, norm=norm, extraction=extraction)
    model.provenance = meta.get("provenance")
    pos = 0
    for layer in model.layers():
        for key in ("w", "b", "gain", "shift"):
            cur = getattr(layer, key)
            if cur is None:
                continue
            nxt = pos + cur.size
            setattr(layer, key, flat[pos:nxt].reshape(cur.shape).copy())
            pos = nxt
    if pos != n_params:
        raise DataFormatError(f"{path}: consumed {pos} parameters, expected {n_params}")
    return model
