import json

import numpy as np
import pytest

from sketchtraj.geometry import (BehindCameraError, Ray, ViewCamera,
                                 camera_from_dict, camera_to_dict,
                                 load_manifest, look_at_camera, pixel_ray,
                                 pixel_ray_directions, project,
                                 project_points, ray_point)


def simple_camera(origin=(0.0, 0.0, 0.0), fx=1.0, fy=1.0):
    return ViewCamera("cam", origin, np.eye(3), fx, fy, 0.5, 0.5,
                      0.1, 10.0, 640, 480)


class TestPixelRay:
    def test_principal_point_is_optical_axis(self):
        ray = pixel_ray(simple_camera(), 0.5, 0.5)
        np.testing.assert_allclose(ray.direction, [0.0, 0.0, 1.0])
        np.testing.assert_allclose(ray.origin, [0.0, 0.0, 0.0])

    def test_offaxis_pixel_hand_case(self):
        # camera at (1,0,0), identity, fx=fy=1, cx=cy=0.5, (u,v)=(1.0,0.5)
        cam = simple_camera(origin=(1.0, 0.0, 0.0))
        ray = pixel_ray(cam, 1.0, 0.5)
        expected = np.array([0.5, 0.0, 1.0])
        expected /= np.linalg.norm(expected)
        np.testing.assert_allclose(ray.direction, expected, atol=1e-12)
        np.testing.assert_allclose(ray.origin, [1.0, 0.0, 0.0])

    def test_rejects_out_of_range_pixels(self):
        cam = simple_camera()
        for u, v in ((-0.1, 0.5), (1.1, 0.5), (0.5, -0.01), (0.5, 1.01)):
            with pytest.raises(ValueError):
                pixel_ray(cam, u, v)

    def test_unit_norm_on_random_inputs(self):
        rng = np.random.default_rng(0)
        cam = look_at_camera("c", (1.0, -2.0, 0.5), (0.0, 0.0, 0.0), fx=1.3, fy=0.9)
        for _ in range(1000):
            u, v = rng.uniform(0, 1, 2)
            ray = pixel_ray(cam, u, v)
            assert abs(np.linalg.norm(ray.direction) - 1.0) < 1e-12

    def test_batch_directions_match_scalar(self):
        cam = look_at_camera("c", (0.3, 1.0, -0.2), (0.0, 0.1, 0.0))
        uv = np.random.default_rng(1).uniform(0, 1, (50, 2))
        batch = pixel_ray_directions(cam, uv)
        for row, d in zip(uv, batch):
            np.testing.assert_allclose(pixel_ray(cam, *row).direction, d, atol=1e-12)


class TestRayPoint:
    def test_point_at_near_bound(self):
        ray = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.5, 2.0)
        np.testing.assert_allclose(ray_point(ray, 0.5), [0.0, 0.0, 0.5])

    def test_axis_ray_depth_two(self):
        ray = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.1, 5.0)
        np.testing.assert_allclose(ray_point(ray, 2.0), [0.0, 0.0, 2.0])

    def test_diagonal_ray(self):
        d = np.ones(3) / np.sqrt(3.0)
        ray = Ray((1.0, 1.0, 1.0), d, 0.1, 5.0)
        np.testing.assert_allclose(ray_point(ray, np.sqrt(3.0)), [2.0, 2.0, 2.0])

    def test_rejects_depth_outside_bounds(self):
        ray = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.5, 2.0)
        for d in (0.0, 0.49, 2.01):
            with pytest.raises(ValueError):
                ray_point(ray, d)


class TestProject:
    def test_optical_axis_point(self):
        cam = simple_camera()
        u, v, depth = project(cam, (0.0, 0.0, 3.0))
        assert (u, v, depth) == (0.5, 0.5, 3.0)

    def test_hand_case(self):
        u, v, depth = project(simple_camera(), (0.5, 0.0, 1.0))
        np.testing.assert_allclose([u, v, depth], [1.0, 0.5, 1.0])

    def test_behind_camera_raises(self):
        with pytest.raises(BehindCameraError):
            project(simple_camera(), (0.0, 0.0, -1.0))
        with pytest.raises(BehindCameraError):
            project(simple_camera(), (0.0, 0.0, 0.0))

    def test_roundtrip_on_random_rays(self):
        rng = np.random.default_rng(7)
        cam = look_at_camera("c", (0.5, -1.2, 0.8), (0.0, 0.0, 0.0), fx=1.1, fy=1.4)
        for _ in range(100):
            u, v = rng.uniform(0, 1, 2)
            d = rng.uniform(cam.d_near, cam.d_far)
            point = ray_point(pixel_ray(cam, u, v), d)
            u2, v2, _ = project(cam, point)
            assert abs(u2 - u) < 1e-9 and abs(v2 - v) < 1e-9

    def test_frame_equivariance(self):
        rng = np.random.default_rng(3)
        cam = look_at_camera("c", (0.0, -1.0, 0.3), (0.0, 0.0, 0.0))
        # random rotation via QR
        q, r = np.linalg.qr(rng.normal(0, 1, (3, 3)))
        q *= np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        point = np.array([0.05, 0.1, -0.02])
        u1, v1, _ = project(cam, point)
        rotated = ViewCamera("r", q @ cam.origin, q @ cam.orientation,
                             cam.fx, cam.fy, cam.cx, cam.cy, cam.d_near,
                             cam.d_far, cam.image_width_px, cam.image_height_px)
        u2, v2, _ = project(rotated, q @ point)
        assert abs(u1 - u2) < 1e-9 and abs(v1 - v2) < 1e-9

    def test_project_points_flags_behind(self):
        cam = simple_camera()
        pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        uv, z, in_front = project_points(cam, pts)
        assert in_front.tolist() == [True, False]
        np.testing.assert_allclose(uv[0], [0.5, 0.5])
        assert np.isnan(uv[1]).all()


class TestInvariants:
    def test_orientation_must_be_orthonormal(self):
        bad = np.eye(3)
        bad[0, 1] = 1e-6
        with pytest.raises(ValueError, match="not orthonormal"):
            ViewCamera("c", np.zeros(3), bad, 1, 1, 0.5, 0.5, 0.1, 1.0, 10, 10)

    def test_orientation_must_be_proper_rotation(self):
        reflect = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="determinant"):
            ViewCamera("c", np.zeros(3), reflect, 1, 1, 0.5, 0.5, 0.1, 1.0, 10, 10)

    def test_depth_bounds(self):
        with pytest.raises(ValueError):
            ViewCamera("c", np.zeros(3), np.eye(3), 1, 1, 0.5, 0.5, 1.0, 0.5, 10, 10)
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]), 0.0, 1.0)

    def test_ray_direction_must_be_unit(self):
        with pytest.raises(ValueError):
            Ray(np.zeros(3), np.array([0.0, 0.0, 2.0]), 0.1, 1.0)


class TestManifest:
    def test_round_trip(self, tmp_path):
        cam = look_at_camera("v1", (1.0, 0.0, 0.5), (0.0, 0.0, 0.0))
        entry = camera_to_dict(cam, image_path="v1.png")
        restored = camera_from_dict(entry)
        np.testing.assert_allclose(restored.orientation, cam.orientation)
        np.testing.assert_allclose(restored.origin, cam.origin)

        path = tmp_path / "manifest.json"
        path.write_text(json.dumps([entry]))
        cams = load_manifest(path)
        assert cams[0].view_id == "v1"

    def test_missing_fields_listed(self):
        with pytest.raises(ValueError, match="missing fields"):
            camera_from_dict({"id": "x"})

    def test_bad_rotation_rejected_on_load(self, tmp_path):
        cam = look_at_camera("v1", (1.0, 0.0, 0.5), (0.0, 0.0, 0.0))
        entry = camera_to_dict(cam)
        entry["orientation_rows"][0] += 1e-3
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps([entry]))
        with pytest.raises(ValueError, match="not orthonormal"):
            load_manifest(path)
