"""Pinhole camera geometry: rays out of views, projection back into them.

Conventions, stated once and used everywhere:
  - image coordinates (u, v) are normalized by image width and height,
    u rightward, v downward, both in [0, 1];
  - a camera looks along +z of its own frame; ``orientation`` maps
    camera-frame vectors into the world frame;
  - intrinsics fx, fy, cx, cy are expressed in the same normalized image
    units, so sketches are resolution independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-9


class BehindCameraError(ValueError):
    """A queried point has non-positive depth in the camera frame."""


@dataclass(frozen=True)
class ViewCamera:
    """Pose, intrinsics, and ray depth bounds for one view."""

    view_id: str
    origin: np.ndarray
    orientation: np.ndarray  # world-from-camera rotation
    fx: float
    fy: float
    cx: float
    cy: float
    d_near: float
    d_far: float
    image_width_px: int
    image_height_px: int

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        r = np.asarray(self.orientation, dtype=np.float64).reshape(3, 3)
        object.__setattr__(self, "orientation", r)
        if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHO_TOL:
            raise ValueError(f"view '{self.view_id}': orientation not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError(f"view '{self.view_id}': orientation determinant is not +1")
        if not (0.0 < self.d_near < self.d_far):
            raise ValueError(f"view '{self.view_id}': requires 0 < d_near < d_far")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"view '{self.view_id}': focal lengths must be positive")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"view '{self.view_id}': principal point must lie in [0,1]")
        if self.image_width_px <= 0 or self.image_height_px <= 0:
            raise ValueError(f"view '{self.view_id}': image size must be positive")


@dataclass(frozen=True)
class Ray:
    """A world-space ray with admissible depth window [d_near, d_far]."""

    origin: np.ndarray
    direction: np.ndarray
    d_near: float
    d_far: float

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        object.__setattr__(self, "direction", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length")
        if not (0.0 < self.d_near < self.d_far):
            raise ValueError("requires 0 < d_near < d_far")


def _check_uv(u, v):
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"(u, v) = ({u}, {v}) outside [0,1]^2")


def pixel_ray(camera: ViewCamera, u: float, v: float) -> Ray:
    """Ray from the camera origin through normalized pixel (u, v)."""
    _check_uv(u, v)
    d_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    d_cam /= np.linalg.norm(d_cam)
    d_world = camera.orientation @ d_cam
    d_world /= np.linalg.norm(d_world)
    return Ray(camera.origin, d_world, camera.d_near, camera.d_far)


def pixel_ray_directions(camera: ViewCamera, uv: np.ndarray) -> np.ndarray:
    """Unit world directions for an (n, 2) array of normalized pixels."""
    uv = np.asarray(uv, dtype=np.float64)
    d = np.empty((uv.shape[0], 3))
    d[:, 0] = (uv[:, 0] - camera.cx) / camera.fx
    d[:, 1] = (uv[:, 1] - camera.cy) / camera.fy
    d[:, 2] = 1.0
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d @ camera.orientation.T


def ray_point(ray: Ray, d: float) -> np.ndarray:
    """Point at depth ``d`` along the ray; d must lie in [d_near, d_far]."""
    if not (ray.d_near <= d <= ray.d_far):
        raise ValueError(f"depth {d} outside [{ray.d_near}, {ray.d_far}]")
    return ray.origin + ray.direction * d


def project(camera: ViewCamera, point) -> tuple[float, float, float]:
    """Perspective-project a world point; returns (u, v, depth).

    Raises BehindCameraError when the camera-frame z is <= 1e-12.
    """
    p_cam = camera.orientation.T @ (np.asarray(point, dtype=np.float64) - camera.origin)
    z = p_cam[2]
    if z <= 1e-12:
        raise BehindCameraError(f"point {point} behind view '{camera.view_id}'")
    u = camera.fx * p_cam[0] / z + camera.cx
    v = camera.fy * p_cam[1] / z + camera.cy
    return float(u), float(v), float(z)


def project_points(camera: ViewCamera, points: np.ndarray):
    """Vectorized projection of (n, 3) points.

    Returns (uv, depth, in_front) where ``in_front`` flags points with
    positive camera-frame depth; uv rows for the others are NaN.
    """
    pts = np.asarray(points, dtype=np.float64)
    p_cam = (pts - camera.origin) @ camera.orientation
    z = p_cam[:, 2]
    in_front = z > 1e-12
    uv = np.full((pts.shape[0], 2), np.nan)
    uv[in_front, 0] = camera.fx * p_cam[in_front, 0] / z[in_front] + camera.cx
    uv[in_front, 1] = camera.fy * p_cam[in_front, 1] / z[in_front] + camera.cy
    return uv, z, in_front


def camera_from_dict(d: dict) -> ViewCamera:
    required = ["id", "origin", "orientation_rows", "fx", "fy", "cx", "cy",
                "d_near", "d_far", "image_width_px", "image_height_px"]
    missing = [k for k in required if k not in d]
    if missing:
        raise ValueError(f"view entry missing fields: {missing}")
    return ViewCamera(
        view_id=str(d["id"]),
        origin=d["origin"],
        orientation=np.asarray(d["orientation_rows"], dtype=np.float64).reshape(3, 3),
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        d_near=float(d["d_near"]),
        d_far=float(d["d_far"]),
        image_width_px=int(d["image_width_px"]),
        image_height_px=int(d["image_height_px"]),
    )


def camera_to_dict(camera: ViewCamera, image_path="") -> dict:
    return {
        "id": camera.view_id,
        "image_path": image_path,
        "origin": [float(x) for x in camera.origin],
        "orientation_rows": [float(x) for x in camera.orientation.ravel()],
        "fx": camera.fx,
        "fy": camera.fy,
        "cx": camera.cx,
        "cy": camera.cy,
        "d_near": camera.d_near,
        "d_far": camera.d_far,
        "image_width_px": camera.image_width_px,
        "image_height_px": camera.image_height_px,
    }


def load_manifest(path) -> list[ViewCamera]:
    """Load a scene manifest: a JSON array of view entries."""
    with open(path) as f:
        views = json.load(f)
    if not isinstance(views, list):
        raise ValueError("manifest must be a JSON array of views")
    cameras = [camera_from_dict(v) for v in views]
    ids = [c.view_id for c in cameras]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate view ids in manifest")
    return cameras


def look_at_camera(view_id, origin, target, fx=1.2, fy=1.2, cx=0.5, cy=0.5,
                   d_near=0.3, d_far=2.0, image_width_px=640, image_height_px=480,
                   up=(0.0, 0.0, 1.0)) -> ViewCamera:
    """Camera at ``origin`` looking at ``target`` with v pointing downward."""
    origin = np.asarray(origin, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - origin
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("camera origin coincides with target")
    z = z / nz
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    r = np.column_stack([x, y, z])
    return ViewCamera(view_id, origin, r, fx, fy, cx, cy, d_near, d_far,
                      image_width_px, image_height_px)
