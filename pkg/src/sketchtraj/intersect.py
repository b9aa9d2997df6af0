"""Sample 3D points where high-density rays from the two views meet.

For each sampled time the per-view conditional densities are evaluated on
a regular pixel grid; pixels above the threshold are ray-traced at evenly
spaced depths, and every cross-view point pair closer than ``delta`` puts
both of its points into the output set, tagged by source view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .flow import FlowModel, conditional_density_grid
from .geometry import ViewCamera, pixel_ray_directions


class NoIntersectionsError(RuntimeError):
    """Raised when no cross-view point pair falls below delta.

    ``diagnostics`` holds one (t, region1 size, region2 size, min pair
    distance) tuple per time slice; widen epsilon or delta to recover.
    """

    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        lines = ", ".join(
            f"t={t:.3f}: |R1|={n1} |R2|={n2} min_dist="
            + (f"{d:.4g}" if np.isfinite(d) else "n/a")
            for t, n1, n2, d in diagnostics[:8])
        super().__init__(f"no intersections found; per-time diagnostics: {lines}")


@dataclass(frozen=True)
class IntersectionConfig:
    epsilon: float = 0.1
    delta: float | None = None  # default: 2 * (d_far - d_near) / n_depth
    grid: int = 64
    n_depth: int = 64
    n_time: int = 32
    epsilon_mode: str = "relative"  # "absolute" | "relative" (fraction of slice max)
    insert_mode: str = "pair"       # "pair" (both points) | "midpoint"

    def __post_init__(self):
        if self.grid < 2 or self.n_depth < 2 or self.n_time < 2:
            raise ValueError("grid, n_depth, and n_time must all be >= 2")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.epsilon_mode not in ("absolute", "relative"):
            raise ValueError(f"unknown epsilon mode '{self.epsilon_mode}'")
        if self.insert_mode not in ("pair", "midpoint"):
            raise ValueError(f"unknown insert mode '{self.insert_mode}'")

    def resolve_delta(self, camera: ViewCamera) -> float:
        if self.delta is not None:
            return self.delta
        return 2.0 * (camera.d_far - camera.d_near) / self.n_depth


@dataclass(frozen=True)
class IntersectionSamples:
    """Timestamped 3D points from intersecting view regions."""

    t: np.ndarray        # (n,)
    x: np.ndarray        # (n, 3)
    source_view: np.ndarray  # (n,) of 1 or 2
    slice_times: np.ndarray  # the n_time sampled times

    def __post_init__(self):
        if self.t.shape[0] != self.x.shape[0] or self.t.shape[0] != self.source_view.shape[0]:
            raise ValueError("sample arrays must have equal length")

    def __len__(self):
        return self.t.shape[0]

    def by_time(self):
        """Yield (t, points, sources) per time slice, in time order."""
        for ts in self.slice_times:
            mask = self.t == ts
            if np.any(mask):
                yield ts, self.x[mask], self.source_view[mask]


def _pixel_grid(n):
    axis = np.linspace(0.0, 1.0, n)
    uu, vv = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def threshold_pixels(model: FlowModel, t, config: IntersectionConfig) -> np.ndarray:
    """Grid pixels whose conditional density at time t clears the threshold.

    Returns an (k, 2) array of (u, v), in grid scan order.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t={t} outside [0, 1]")
    grid = _pixel_grid(config.grid)
    dens = conditional_density_grid(model, t, grid)
    thresh = config.epsilon
    if config.epsilon_mode == "relative":
        thresh = config.epsilon * float(dens.max())
    return grid[dens >= thresh]


def _region_points(camera: ViewCamera, pixels: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """Ray points for every (pixel, depth), ordered pixel-major."""
    if pixels.shape[0] == 0:
        return np.zeros((0, 3))
    dirs = pixel_ray_directions(camera, pixels)           # (p, 3)
    pts = camera.origin + dirs[:, None, :] * depths[None, :, None]
    return pts.reshape(-1, 3)


def sample_intersections(model1: FlowModel, model2: FlowModel,
                         cam1: ViewCamera, cam2: ViewCamera,
                         config: IntersectionConfig = IntersectionConfig()) -> IntersectionSamples:
    """Cross-view intersection samples over n_time evenly spaced times.

    Deterministic: output is ordered by (time, source view, ray scan
    order). Raises NoIntersectionsError with per-time diagnostics when
    every slice comes up empty.
    """
    delta = config.resolve_delta(cam1)
    times = np.linspace(0.0, 1.0, config.n_time)
    depths1 = np.linspace(cam1.d_near, cam1.d_far, config.n_depth)
    depths2 = np.linspace(cam2.d_near, cam2.d_far, config.n_depth)
    out_t, out_x, out_src = [], [], []
    diagnostics = []
    for t in times:
        r1 = _region_points(cam1, threshold_pixels(model1, t, config), depths1)
        r2 = _region_points(cam2, threshold_pixels(model2, t, config), depths2)
        ia, ib = kernels.pairs_within(r1, r2, delta)
        if ia.shape[0] == 0:
            diagnostics.append((float(t), r1.shape[0], r2.shape[0], _min_cross_distance(r1, r2)))
            continue
        if config.insert_mode == "midpoint":
            mids = 0.5 * (r1[ia] + r2[ib])
            out_x.append(mids)
            out_t.append(np.full(mids.shape[0], t))
            out_src.append(np.ones(mids.shape[0], dtype=np.int64))
        else:
            keep1 = np.unique(ia)
            keep2 = np.unique(ib)
            out_x.append(r1[keep1])
            out_t.append(np.full(keep1.shape[0], t))
            out_src.append(np.ones(keep1.shape[0], dtype=np.int64))
            out_x.append(r2[keep2])
            out_t.append(np.full(keep2.shape[0], t))
            out_src.append(np.full(keep2.shape[0], 2, dtype=np.int64))
    if not out_t:
        raise NoIntersectionsError(diagnostics)
    return IntersectionSamples(
        t=np.concatenate(out_t),
        x=np.concatenate(out_x),
        source_view=np.concatenate(out_src),
        slice_times=times,
    )


def _min_cross_distance(r1, r2, cap=2000):
    """Smallest cross-set distance, diagnostics only (subsampled when huge)."""
    if r1.shape[0] == 0 or r2.shape[0] == 0:
        return float("inf")
    a = r1[::max(1, r1.shape[0] // cap)]
    b = r2[::max(1, r2.shape[0] // cap)]
    diff = a[:, None, :] - b[None, :, :]
    dd = (diff * diff).sum(axis=2)
    return float(np.sqrt(dd.min()))


def samples_to_dict(samples: IntersectionSamples) -> dict:
    return {
        "format_version": 1,
        "kind": "intersection_samples",
        "slice_times": [float(x) for x in samples.slice_times],
        "t": [float(x) for x in samples.t],
        "x": [[float(v) for v in row] for row in samples.x],
        "source_view": [int(s) for s in samples.source_view],
    }


def samples_from_dict(d: dict) -> IntersectionSamples:
    return IntersectionSamples(
        t=np.asarray(d["t"], dtype=np.float64),
        x=np.asarray(d["x"], dtype=np.float64).reshape(-1, 3),
        source_view=np.asarray(d["source_view"], dtype=np.int64),
        slice_times=np.asarray(d["slice_times"], dtype=np.float64),
    )


def debug_dump(model1, model2, cam1, cam2, config, samples=None) -> dict:
    """Per-time thresholded pixel counts and region sizes, for UI overlays."""
    times = np.linspace(0.0, 1.0, config.n_time)
    rows = []
    for t in times:
        p1 = threshold_pixels(model1, t, config)
        p2 = threshold_pixels(model2, t, config)
        rows.append({
            "t": float(t),
            "pixels_view1": int(p1.shape[0]),
            "pixels_view2": int(p2.shape[0]),
            "region1": int(p1.shape[0] * config.n_depth),
            "region2": int(p2.shape[0] * config.n_depth),
        })
    out = {"per_time": rows, "delta": config.resolve_delta(cam1)}
    if samples is not None:
        out["samples"] = samples_to_dict(samples)
    return out
