"""Normalizing-flow density estimation over timestamped view-space points.

One model per view. Each model is a stack of affine coupling layers over
(t, u, v); the masked coordinates pass through while the rest are scaled
and shifted by small dense subnetworks of the masked part. Scale and
shift subnets have zero-initialized output layers, so a fresh model is
exactly the identity map. Log-scales are bounded with a scaled tanh so
the log-determinant stays finite for any parameters.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import numerics
from .numerics import ParamVector, OptimizerState, adam_step

LOG_2PI = float(np.log(2.0 * np.pi))
FLOW_FORMAT_VERSION = 1


class FlowTrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SketchTrajectory:
    """One demonstration stroke: rows of (t, u, v), all in [0, 1]."""

    points: np.ndarray
    view_id: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("sketch points must be an (l, 3) array of (t, u, v)")
        if pts.shape[0] < 2:
            raise ValueError("sketch length l >= 2 required")
        t = pts[:, 0]
        if np.any(np.diff(t) <= 0):
            raise ValueError("sketch times must be strictly increasing")
        if abs(t[0]) > 1e-12 or abs(t[-1] - 1.0) > 1e-12:
            raise ValueError("sketch times must be normalized to t[0]=0, t[-1]=1")
        if np.min(pts) < 0.0 or np.max(pts) > 1.0:
            raise ValueError("sketch coordinates must lie in [0, 1]")
        object.__setattr__(self, "points", pts)


def sketch_from_stroke(uv, view_id, time_mode="arclength", times=None) -> SketchTrajectory:
    """Build a normalized SketchTrajectory from raw stroke samples.

    ``uv`` is (l, 2) normalized pixels in draw order. In "arclength" mode
    t is the normalized cumulative stroke length (consecutive duplicate
    samples are dropped); in "recorded" mode ``times`` must be strictly
    increasing capture times, rescaled to [0, 1].
    """
    uv = np.asarray(uv, dtype=np.float64)
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise ValueError("stroke must be an (l, 2) array of (u, v)")
    if uv.shape[0] < 2:
        raise ValueError("stroke length l >= 2 required")
    if time_mode == "arclength":
        keep = np.ones(uv.shape[0], dtype=bool)
        keep[1:] = np.any(np.diff(uv, axis=0) != 0.0, axis=1)
        uv = uv[keep]
        if uv.shape[0] < 2:
            raise ValueError("stroke length l >= 2 required after dropping duplicate points")
        seg = np.linalg.norm(np.diff(uv, axis=0), axis=1)
        t = np.concatenate([[0.0], np.cumsum(seg)])
        t /= t[-1]
    elif time_mode == "recorded":
        if times is None:
            raise ValueError("recorded time mode requires capture times")
        t = np.asarray(times, dtype=np.float64)
        if t.shape[0] != uv.shape[0]:
            raise ValueError("times and stroke lengths differ")
        if np.any(np.diff(t) <= 0):
            raise ValueError("recorded times must be strictly increasing")
        t = (t - t[0]) / (t[-1] - t[0])
        t[0], t[-1] = 0.0, 1.0
    else:
        raise ValueError(f"unknown time mode '{time_mode}'")
    return SketchTrajectory(np.column_stack([t, uv]), view_id)


def load_sketch_file(payload, default_view_id=None) -> list[SketchTrajectory]:
    """Parse a sketch file: {view_id, strokes: [[[t,u,v], ...], ...], time_mode}.

    Stroke rows carry (t, u, v); in arclength mode the stored t column is
    ignored and recomputed from the stroke geometry.
    """
    if isinstance(payload, (str, bytes)):
        payload = json.loads(payload)
    view_id = payload.get("view_id", default_view_id)
    if view_id is None:
        raise ValueError("sketch file missing view_id")
    mode = payload.get("time_mode", "arclength")
    if mode not in ("arclength", "recorded"):
        raise ValueError(f"unknown time mode '{mode}'")
    strokes = payload.get("strokes")
    if not strokes:
        raise ValueError("sketch file has no strokes")
    out = []
    for stroke in strokes:
        arr = np.asarray(stroke, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("each stroke must be a list of [t, u, v] rows")
        out.append(sketch_from_stroke(arr[:, 1:], view_id, mode, times=arr[:, 0]))
    return out


def sketches_to_file(sketches, time_mode="recorded") -> dict:
    if not sketches:
        raise ValueError("no sketches to serialize")
    return {
        "view_id": sketches[0].view_id,
        "time_mode": time_mode,
        "strokes": [[[float(x) for x in row] for row in s.points] for s in sketches],
    }


@dataclass(frozen=True)
class DemonstrationSet:
    """Training sketches grouped by view; exactly two training views."""

    train_view_ids: tuple
    sketches: dict  # view id -> list of SketchTrajectory
    heldout_view_ids: tuple = ()

    def __post_init__(self):
        if len(self.train_view_ids) != 2:
            raise ValueError("exactly two training views are required")
        for vid in self.train_view_ids:
            if not self.sketches.get(vid):
                raise ValueError(f"training view '{vid}' has no sketches")


@dataclass(frozen=True)
class FlowConfig:
    layer_count: int = 6
    hidden_width: int = 64
    noise_sigma: float = 0.015
    s_bound: float = 3.0
    epochs: int = 2000
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.layer_count < 1 or self.hidden_width < 1:
            raise ValueError("layer_count and hidden_width must be positive")
        if self.noise_sigma < 0 or self.s_bound <= 0:
            raise ValueError("noise_sigma must be >= 0 and s_bound > 0")


# Backends let the same coupling math run on plain arrays (fast eval)
# and on autodiff tensors (training), guaranteeing both agree.
class _NumpyOps:
    add = staticmethod(np.add)
    mul = staticmethod(np.multiply)
    exp = staticmethod(np.exp)
    tanh = staticmethod(np.tanh)

    @staticmethod
    def affine(x, w, b):
        return x @ w + b

    @staticmethod
    def sum1(a):
        return a.sum(axis=1)


class _TensorOps:
    add = staticmethod(numerics.add)
    mul = staticmethod(numerics.mul)
    exp = staticmethod(numerics.exp)
    tanh = staticmethod(numerics.tanh)
    affine = staticmethod(numerics.affine)

    @staticmethod
    def sum1(a):
        return numerics.tsum(a, axis=1)


def _layer_blocks(i):
    return (f"L{i}.s.w1", f"L{i}.s.b1", f"L{i}.s.w2", f"L{i}.s.b2",
            f"L{i}.t.w1", f"L{i}.t.b1", f"L{i}.t.w2", f"L{i}.t.b2")


def _layer_scale_shift(ops, get, i, a, tmask, s_bound):
    sw1, sb1, sw2, sb2, tw1, tb1, tw2, tb2 = _layer_blocks(i)
    hs = ops.tanh(ops.affine(a, get(sw1), get(sb1)))
    s = ops.mul(ops.tanh(ops.affine(hs, get(sw2), get(sb2))), tmask * s_bound)
    ht = ops.tanh(ops.affine(a, get(tw1), get(tb1)))
    shift = ops.mul(ops.affine(ht, get(tw2), get(tb2)), tmask)
    return s, shift


def _stack_forward(ops, y, get, masks, s_bound):
    """Shared coupling-stack forward; returns (latent, per-row log-det)."""
    log_det = np.zeros(y.shape[0])
    for i, keep in enumerate(masks):
        tmask = 1.0 - keep
        a = ops.mul(y, keep)
        s, shift = _layer_scale_shift(ops, get, i, a, tmask, s_bound)
        y = ops.add(ops.mul(y, ops.exp(s)), shift)
        log_det = ops.add(log_det, ops.sum1(s))
    return y, log_det


def _stack_inverse(y, get, masks, s_bound):
    ops = _NumpyOps
    for i in reversed(range(len(masks))):
        keep = masks[i]
        tmask = 1.0 - keep
        a = ops.mul(y, keep)
        s, shift = _layer_scale_shift(ops, get, i, a, tmask, s_bound)
        y = (y - shift) * np.exp(-s)
    return y


@dataclass(frozen=True)
class FlowModel:
    """Trained (or freshly initialized) flow over (t, u, v)."""

    config: FlowConfig
    masks: np.ndarray           # (layer_count, 3) keep-masks of 0/1
    params: ParamVector
    loss_curve: tuple = ()      # per-epoch mean NLL, informational

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=np.float64)
        if m.shape != (self.config.layer_count, 3):
            raise ValueError("masks must be (layer_count, 3)")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValueError("masks must be binary")
        for i in range(1, m.shape[0]):
            if np.array_equal(m[i], m[i - 1]):
                raise ValueError("consecutive layer masks must alternate")
        object.__setattr__(self, "masks", m)


def init_flow(config: FlowConfig, rng=None) -> FlowModel:
    """Fresh identity-initialized model (zeroed subnet output layers)."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    h = config.hidden_width
    masks = np.array([[1.0, 0.0, 1.0] if i % 2 == 0 else [0.0, 1.0, 0.0]
                      for i in range(config.layer_count)])
    arrays = {}
    for i in range(config.layer_count):
        for branch in ("s", "t"):
            arrays[f"L{i}.{branch}.w1"] = rng.normal(0.0, 1.0 / np.sqrt(3.0), (3, h))
            arrays[f"L{i}.{branch}.b1"] = np.zeros(h)
            arrays[f"L{i}.{branch}.w2"] = np.zeros((h, 3))
            arrays[f"L{i}.{branch}.b2"] = np.zeros(3)
    return FlowModel(config, masks, ParamVector.build(arrays))


def _as_batch(y):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    return (y.reshape(1, 3) if single else y), single


def flow_forward(model: FlowModel, y):
    """Map data to latent space; returns (latent, log|det J|)."""
    batch, single = _as_batch(y)
    if not np.all(np.isfinite(batch)):
        raise ValueError("flow_forward requires finite input")
    z, log_det = _stack_forward(_NumpyOps, batch, model.params.block,
                                model.masks, model.config.s_bound)
    if single:
        return z[0], float(log_det[0])
    return z, log_det


def flow_inverse(model: FlowModel, latent):
    """Exact algebraic inverse of flow_forward."""
    batch, single = _as_batch(latent)
    if not np.all(np.isfinite(batch)):
        raise ValueError("flow_inverse requires finite input")
    y = _stack_inverse(batch, model.params.block, model.masks, model.config.s_bound)
    return y[0] if single else y


def log_density(model: FlowModel, y) -> float:
    batch, single = _as_batch(y)
    out = log_density_batch(model, batch)
    return float(out[0]) if single else out


def log_density_batch(model: FlowModel, ys) -> np.ndarray:
    z, log_det = _stack_forward(_NumpyOps, np.asarray(ys, dtype=np.float64),
                                model.params.block, model.masks, model.config.s_bound)
    base = -0.5 * (z * z).sum(axis=1) - 1.5 * LOG_2PI
    return base + log_det


def conditional_density(model: FlowModel, u, v, t) -> float:
    """p(u, v | t); equals the joint density because p(t) is uniform on [0,1]."""
    for name, x in (("u", u), ("v", v), ("t", t)):
        if not (0.0 <= x <= 1.0):
            raise ValueError(f"{name}={x} outside [0, 1]")
    return float(np.exp(log_density(model, np.array([t, u, v]))))


def conditional_density_grid(model: FlowModel, t, uv) -> np.ndarray:
    """Vectorized p(u, v | t) for an (n, 2) array of pixels at one time."""
    uv = np.asarray(uv, dtype=np.float64)
    pts = np.column_stack([np.full(uv.shape[0], float(t)), uv])
    return np.exp(log_density_batch(model, pts))


def _nll_loss(leaves, batch, masks, s_bound):
    z, log_det = _stack_forward(_TensorOps, batch, leaves.__getitem__, masks, s_bound)
    gauss = numerics.tsum(numerics.square(z)) * 0.5
    return gauss - numerics.tsum(log_det) + batch.shape[0] * 1.5 * LOG_2PI


def train_flow(sketches, config: FlowConfig = FlowConfig(), progress_cb=None) -> FlowModel:
    """Fit a flow to all points of the given sketches by full-batch Adam.

    Fresh Gaussian noise (std = noise_sigma) is added to the data every
    epoch. Deterministic for a fixed config/seed.
    """
    if not sketches:
        raise ValueError("train_flow requires at least one sketch")
    pts = np.concatenate([s.points for s in sketches], axis=0)
    if pts.shape[0] < 10:
        raise ValueError(f"need at least 10 points to train, got {pts.shape[0]}")
    rng = np.random.default_rng(config.seed)
    model = init_flow(config, rng)
    params = model.params
    opt = OptimizerState.init(params, lr=config.lr)
    n = pts.shape[0]
    curve = []
    for epoch in range(config.epochs):
        noisy = pts + rng.normal(0.0, config.noise_sigma, pts.shape) if config.noise_sigma > 0 else pts
        try:
            loss, g = numerics.value_and_grad(
                lambda leaves: _nll_loss(leaves, noisy, model.masks, config.s_bound), params)
        except numerics.NonFiniteError as err:
            raise FlowTrainingError(
                f"non-finite loss at epoch {epoch} (batch of {n} points, block '{err.block}')") from err
        curve.append(loss / n)
        opt, params = adam_step(opt, params, g)
        if progress_cb is not None and (epoch % 50 == 0 or epoch == config.epochs - 1):
            progress_cb(epoch + 1, config.epochs, curve[-1])
    trained = FlowModel(config, model.masks, params, tuple(curve))
    clean_final = float(np.mean(-log_density_batch(trained, pts)))
    clean_init = float(np.mean(-log_density_batch(model, pts)))
    if clean_final > clean_init:
        warnings.warn("flow training did not improve on the identity model")
        return FlowModel(config, model.masks, model.params, tuple(curve))
    return trained


def flow_to_dict(model: FlowModel) -> dict:
    blocks = {}
    for name in model.params.blocks:
        off, shape = model.params.blocks[name]
        blocks[name] = {"shape": list(shape),
                        "values": [float(x) for x in model.params.block(name).ravel()]}
    return {
        "format_version": FLOW_FORMAT_VERSION,
        "kind": "flow",
        "config": asdict(model.config),
        "masks": [[float(x) for x in row] for row in model.masks],
        "blocks": blocks,
        "loss_curve_tail": [float(x) for x in model.loss_curve[-20:]],
    }


def flow_from_dict(d: dict) -> FlowModel:
    if d.get("format_version") != FLOW_FORMAT_VERSION:
        raise ValueError(f"unsupported flow model format: {d.get('format_version')}")
    config = FlowConfig(**d["config"])
    arrays = {name: np.asarray(spec["values"], dtype=np.float64).reshape(spec["shape"])
              for name, spec in d["blocks"].items()}
    return FlowModel(config, np.asarray(d["masks"]), ParamVector.build(arrays),
                     tuple(d.get("loss_curve_tail", ())))
