"""Synthetic scenes for tests and demos: a ground-truth 3D curve, three
posed virtual cameras, and per-view sketch files made by projecting the
curve with additive pixel noise. No robot or real imagery required.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ViewCamera, camera_to_dict, look_at_camera, project_points

SCENE_RADIUS = 1.1
VIEW_ANGLES = [(30.0, 25.0), (120.0, 20.0), (75.0, 40.0)]  # (azimuth, elevation) degrees


def arc_curve(t):
    """Semicircular arc, slightly tilted out of plane."""
    t = np.asarray(t, dtype=np.float64)
    theta = np.pi * (1.0 - t)
    r = 0.2
    return np.stack([r * np.cos(theta),
                     0.2 * r * np.sin(theta),
                     0.8 * r * np.sin(theta)], axis=-1)


def line_curve(t):
    t = np.asarray(t, dtype=np.float64)
    a = np.array([-0.15, -0.05, -0.08])
    b = np.array([0.15, 0.08, 0.1])
    return a + t[..., None] * (b - a)


def letter_u_curve(t):
    """One-stroke "U": descend, traverse the flat bottom, ascend."""
    t = np.asarray(t, dtype=np.float64)
    x_left, x_right = -0.12, 0.12
    z_top, z_bot = 0.12, -0.12
    x = np.empty_like(t)
    z = np.empty_like(t)
    down = t < 0.4
    across = (t >= 0.4) & (t < 0.6)
    up = t >= 0.6
    x[down] = x_left
    z[down] = z_top + (z_bot - z_top) * (t[down] / 0.4)
    x[across] = x_left + (x_right - x_left) * ((t[across] - 0.4) / 0.2)
    z[across] = z_bot
    x[up] = x_right
    z[up] = z_bot + (z_top - z_bot) * ((t[up] - 0.6) / 0.4)
    return np.stack([x, np.zeros_like(t), z], axis=-1)


CURVES = {"arc": arc_curve, "line": line_curve, "letter": letter_u_curve}


def fixture_cameras(n_views: int = 3) -> list[ViewCamera]:
    cams = []
    for j in range(n_views):
        az, el = np.deg2rad(VIEW_ANGLES[j % len(VIEW_ANGLES)])
        origin = SCENE_RADIUS * np.array([np.cos(az) * np.cos(el),
                                          np.sin(az) * np.cos(el),
                                          np.sin(el)])
        cams.append(look_at_camera(f"view{j + 1}", origin, (0.0, 0.0, 0.0),
                                   fx=1.2, fy=1.2, d_near=0.6, d_far=1.7,
                                   image_width_px=640, image_height_px=480))
    return cams


@dataclass(frozen=True)
class FixtureBundle:
    kind: str
    cameras: list
    sketch_files: dict      # view id -> sketch file dict
    ground_truth: dict

    @property
    def start(self):
        return np.asarray(self.ground_truth["start"], dtype=np.float64)


def synth_fixture(kind: str = "arc", noise: float = 0.005, seed: int = 0,
                  n_views: int = 3, sketches_per_view: int = 3,
                  stroke_points: int = 80) -> FixtureBundle:
    """Generate a scene, per-view noisy sketches, and the ground truth.

    Sketch files use recorded time mode so stroke timestamps match the
    curve parameter exactly.
    """
    if kind not in CURVES:
        raise ValueError(f"unknown fixture kind '{kind}' (want one of {sorted(CURVES)})")
    curve = CURVES[kind]
    cams = fixture_cameras(n_views)
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, 1.0, stroke_points)
    pts3d = curve(ts)
    sketch_files = {}
    for cam in cams:
        uv, _, in_front = project_points(cam, pts3d)
        if not np.all(in_front):
            raise RuntimeError(f"fixture curve leaves the frustum of {cam.view_id}")
        strokes = []
        for _ in range(sketches_per_view):
            noisy = uv + rng.normal(0.0, noise, uv.shape) if noise > 0 else uv.copy()
            noisy = np.clip(noisy, 0.0, 1.0)
            strokes.append(np.column_stack([ts, noisy]).tolist())
        sketch_files[cam.view_id] = {
            "view_id": cam.view_id,
            "time_mode": "recorded",
            "strokes": strokes,
        }
    ground_truth = {
        "kind": kind,
        "noise": noise,
        "seed": seed,
        "times": [float(x) for x in ts],
        "points": [[float(v) for v in row] for row in pts3d],
        "start": [float(v) for v in curve(np.array([0.0]))[0]],
    }
    return FixtureBundle(kind, cams, sketch_files, ground_truth)


def write_fixture(bundle: FixtureBundle, out_dir, with_images: bool = True) -> dict:
    """Write manifest, sketch files, ground truth (and placeholder images)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for cam in bundle.cameras:
        image_path = ""
        if with_images:
            image_path = f"{cam.view_id}.png"
            _write_placeholder_image(out / image_path, cam.image_width_px,
                                     cam.image_height_px)
        manifest.append(camera_to_dict(cam, image_path=image_path))
    paths = {"manifest": out / "manifest.json", "ground_truth": out / "ground_truth.json"}
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True))
    paths["ground_truth"].write_text(json.dumps(bundle.ground_truth, sort_keys=True))
    for vid, payload in bundle.sketch_files.items():
        p = out / f"sketches_{vid}.json"
        p.write_text(json.dumps(payload, sort_keys=True))
        paths[f"sketches_{vid}"] = p
    return paths


def _write_placeholder_image(path, width, height):
    from PIL import Image

    Image.new("RGB", (width, height), (232, 232, 237)).save(path)


def count_direction_reversals(values, threshold_frac: float = 0.2) -> int:
    """Direction-regime changes of the discrete derivative.

    Steps below threshold_frac * max|step| count as rest (sign 0). Rest
    phases at the curve ends are ignored, and a rest between two runs of
    the same sign is a pause rather than a reversal; a rest separating
    opposite signs still counts as its own regime. A descend / flat /
    ascend profile therefore counts as exactly two changes.
    """
    d = np.diff(np.asarray(values, dtype=np.float64))
    if d.size == 0:
        return 0
    cutoff = threshold_frac * np.max(np.abs(d))
    signs = np.sign(d)
    signs[np.abs(d) < cutoff] = 0.0
    runs = []
    for s in signs:
        if runs and runs[-1][0] == s:
            runs[-1][1] += 1
        else:
            runs.append([s, 1])
    # a rest shorter than ~3% of the curve is a turn sample, not a regime
    min_rest = max(2, int(round(0.03 * d.size)))
    states = []
    for s, length in runs:
        if s == 0 and length < min_rest:
            continue
        if states and states[-1] == s:
            continue
        states.append(s)
    while states and states[0] == 0:
        states.pop(0)
    while states and states[-1] == 0:
        states.pop()
    i = 1
    while i < len(states) - 1:
        if states[i] == 0 and states[i - 1] == states[i + 1]:
            del states[i:i + 2]
        else:
            i += 1
    return max(len(states) - 1, 0)


def dominant_coordinate(points) -> int:
    """Index of the coordinate with the largest total variation."""
    pts = np.asarray(points, dtype=np.float64)
    return int(np.argmax(np.abs(np.diff(pts, axis=0)).sum(axis=0)))
