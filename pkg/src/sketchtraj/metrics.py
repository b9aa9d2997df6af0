"""Evaluation stack: Fréchet and Wasserstein distances, baselines, and
the held-out-view protocol.

All view-space distances are computed on pixel coordinates divided by the
image width, i.e. (u, v * height / width), so reported numbers do not
depend on image resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix
from scipy.spatial.distance import cdist

from . import kernels
from .geometry import ViewCamera, project_points
from .trajdist import (TrajectoryDistribution, condition_start,
                       eval_trajectory_batch, mean_curve, sample_trajectory)


@dataclass(frozen=True)
class PolylineTrajectory:
    """Ordered curve in view space (n, 2) or task space (n, 3)."""

    points: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] not in (2, 3):
            raise ValueError("polyline must be (n>=2, 2|3)")
        if not np.all(np.isfinite(pts)):
            raise ValueError("polyline coordinates must be finite")
        object.__setattr__(self, "points", pts)


def _as_points(a):
    pts = a.points if isinstance(a, PolylineTrajectory) else np.asarray(a, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("expected a non-empty (n, d) point array")
    return pts


def frechet(a, b) -> float:
    """Discrete Fréchet distance with Euclidean ground metric."""
    pa, pb = _as_points(a), _as_points(b)
    return kernels.frechet_dp(cdist(pa, pb))


def wasserstein2(xa, wa, xb, wb) -> float:
    """Exact 2-Wasserstein distance between weighted point sets.

    Solves the transport LP with squared-Euclidean cost and returns the
    square root of the optimal value.
    """
    xa, xb = _as_points(xa), _as_points(xb)
    wa = np.asarray(wa, dtype=np.float64)
    wb = np.asarray(wb, dtype=np.float64)
    for w, x in ((wa, xa), (wb, xb)):
        if w.shape != (x.shape[0],):
            raise ValueError("weights must align with points")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
    wa = wa / wa.sum()
    wb = wb / wb.sum()
    n, m = xa.shape[0], xb.shape[0]
    cost = cdist(xa, xb, "sqeuclidean").ravel()
    idx = np.arange(n * m)
    rows = np.concatenate([idx // m, n + idx % m])
    cols = np.concatenate([idx, idx])
    a_eq = coo_matrix((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m))
    res = linprog(cost, A_eq=a_eq.tocsr(), b_eq=np.concatenate([wa, wb]),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(np.sqrt(max(res.fun, 0.0)))


def linear_baseline(test, n_points: int = 100) -> PolylineTrajectory:
    """Straight segment from the mean test start to the mean test end."""
    if not test:
        raise ValueError("linear baseline needs at least one test trajectory")
    starts = np.stack([_as_points(p)[0] for p in test])
    ends = np.stack([_as_points(p)[-1] for p in test])
    s, e = starts.mean(axis=0), ends.mean(axis=0)
    alpha = np.linspace(0.0, 1.0, n_points)[:, None]
    return PolylineTrajectory((1.0 - alpha) * s + alpha * e)


def nn_baseline(train_views, test_view: ViewCamera):
    """Sketches of the training view whose camera is nearest the test view."""
    if not train_views:
        raise ValueError("nearest-neighbour baseline needs a training view")
    dists = [np.linalg.norm(cam.origin - test_view.origin) for cam, _ in train_views]
    _, sketches = train_views[int(np.argmin(dists))]
    return [PolylineTrajectory(s.points[:, 1:], timestamps=s.points[:, 0]) for s in sketches]


@dataclass(frozen=True)
class EvaluationReport:
    """Held-out-view metrics for the model and any baselines."""

    mfd_mean: float
    mfd_std: float
    wd: float
    baselines: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in (("mfd_mean", self.mfd_mean), ("mfd_std", self.mfd_std),
                            ("wd", self.wd)):
            if value < 0:
                raise ValueError(f"{name} must be nonnegative")

    def to_dict(self):
        return {
            "format_version": 1,
            "kind": "evaluation_report",
            "mfd_mean": self.mfd_mean,
            "mfd_std": self.mfd_std,
            "wd": self.wd,
            "baselines": self.baselines,
            "meta": self.meta,
        }


def view_metric_coords(uv, camera: ViewCamera) -> np.ndarray:
    """Normalized pixels -> pixel units divided by image width."""
    uv = np.asarray(uv, dtype=np.float64)
    scale = camera.image_height_px / camera.image_width_px
    return np.column_stack([uv[:, 0], uv[:, 1] * scale])


def project_curve(camera: ViewCamera, points) -> tuple[np.ndarray, np.ndarray]:
    """Project a 3D curve into a view; drops behind-camera points.

    Returns (normalized uv polyline, boolean keep mask over input points).
    """
    uv, _, in_front = project_points(camera, points)
    return uv[in_front], in_front


def _mfd(pred_curves, test_curves, camera):
    vals = []
    for pred in pred_curves:
        pm = view_metric_coords(_as_points(pred), camera)
        for test in test_curves:
            tm = view_metric_coords(_as_points(test), camera)
            vals.append(frechet(pm, tm))
    return float(np.mean(vals)), float(np.std(vals))


def _pooled_wd(pred_curves, test_curves, camera, pred_times=None, test_times=None):
    pred = np.concatenate([view_metric_coords(_as_points(p), camera) for p in pred_curves])
    test = np.concatenate([view_metric_coords(_as_points(c), camera) for c in test_curves])
    if pred_times is not None:
        pred = np.column_stack([np.concatenate(pred_times), pred])
        test = np.column_stack([np.concatenate(test_times), test])
    wa = np.full(pred.shape[0], 1.0 / pred.shape[0])
    wb = np.full(test.shape[0], 1.0 / test.shape[0])
    return wasserstein2(pred, wa, test, wb)


def evaluate_heldout(dist: TrajectoryDistribution, heldout_camera: ViewCamera,
                     heldout_sketches, n_samples: int = 5, seed: int = 0,
                     train_views=None, curve_points: int = 100,
                     wd_timestamped: bool = False, start=None) -> EvaluationReport:
    """Project the model into a held-out view and score it against sketches.

    MFD: Fréchet between the projected distribution mean and each held-out
    sketch (mean and std over sketches). WD: 2-Wasserstein between the
    pooled points of ``n_samples`` projected samples and the pooled
    held-out sketch points, uniform weights, spatial coordinates unless
    ``wd_timestamped``. When ``train_views`` is given the Linear and NN
    baselines are scored the same way.
    """
    if not heldout_sketches:
        raise ValueError("held-out evaluation needs at least one sketch")
    ts = np.linspace(0.0, 1.0, curve_points)
    test_curves = [s.points[:, 1:] for s in heldout_sketches]
    test_times = [s.points[:, 0] for s in heldout_sketches]

    if start is not None:
        mean3d = eval_trajectory_batch(condition_start(dist.means, dist.basis, start),
                                       dist.basis, ts)
    else:
        mean3d = mean_curve(dist, ts)
    mean_uv, mean_keep = project_curve(heldout_camera, mean3d)
    if mean_uv.shape[0] < 2:
        raise ValueError("projected mean curve has fewer than 2 visible points")
    mfd_mean, mfd_std = _mfd([mean_uv], test_curves, heldout_camera)

    sample_curves, sample_times, sample_dropped = [], [], 0
    for k in range(n_samples):
        _, pts = sample_trajectory(dist, seed + k, start=start, timesteps=curve_points)
        uv, keep = project_curve(heldout_camera, pts)
        if uv.shape[0] >= 2:
            sample_curves.append(uv)
            sample_times.append(ts[keep])
        sample_dropped += int((~keep).sum())
    wd = _pooled_wd(sample_curves, test_curves, heldout_camera,
                    pred_times=sample_times if wd_timestamped else None,
                    test_times=test_times if wd_timestamped else None)

    baselines = {}
    if train_views is not None:
        lin = linear_baseline([PolylineTrajectory(c) for c in test_curves],
                              n_points=curve_points)
        lin_mfd = _mfd([lin], test_curves, heldout_camera)
        lin_wd = _pooled_wd([lin], test_curves, heldout_camera)
        baselines["linear"] = {"mfd_mean": lin_mfd[0], "mfd_std": lin_mfd[1], "wd": lin_wd}
        nn = nn_baseline(train_views, heldout_camera)
        nn_mfd = _mfd(nn, test_curves, heldout_camera)
        nn_wd = _pooled_wd(nn, test_curves, heldout_camera)
        baselines["nn"] = {"mfd_mean": nn_mfd[0], "mfd_std": nn_mfd[1], "wd": nn_wd}

    meta = {
        "n_samples": n_samples,
        "seed": seed,
        "curve_points": curve_points,
        "wd_operands": "pooled sample points vs pooled sketch points, uniform weights",
        "wd_timestamped": wd_timestamped,
        "mean_points_dropped": int((~mean_keep).sum()),
        "sample_points_dropped": sample_dropped,
        "heldout_view": heldout_camera.view_id,
        "conditioned_start": None if start is None else [float(x) for x in np.asarray(start)],
    }
    return EvaluationReport(mfd_mean, mfd_std, wd, baselines, meta)


def report_table(report: EvaluationReport, label: str = "model") -> str:
    """Plain-text method x metric table for CLI output."""
    rows = [(label, report.mfd_mean, report.mfd_std, report.wd)]
    for name, entry in report.baselines.items():
        rows.append((name, entry["mfd_mean"], entry["mfd_std"], entry["wd"]))
    lines = [f"{'method':<10} {'MFD (x1e-2)':>14} {'WD (x1e-2)':>12}"]
    for name, mfd_m, mfd_s, wd in rows:
        lines.append(f"{name:<10} {100 * mfd_m:>8.2f} ± {100 * mfd_s:<4.2f} {100 * wd:>11.2f}")
    return "\n".join(lines)
