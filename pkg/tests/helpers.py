"""Independent oracles used by the tests. These deliberately avoid the
production code paths they are checking."""

from itertools import permutations

import numpy as np
from scipy.spatial.distance import cdist

from sketchtraj.flow import log_density_batch
from sketchtraj.geometry import pixel_ray, ray_point


def trapezoid_integral_unit_cube(model, n=32):
    """Trapezoidal integral of the model density over [0, 1]^3."""
    axis = np.linspace(0.0, 1.0, n)
    tt, uu, vv = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.column_stack([tt.ravel(), uu.ravel(), vv.ravel()])
    dens = np.exp(log_density_batch(model, pts)).reshape(n, n, n)
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    weights = w[:, None, None] * w[None, :, None] * w[None, None, :]
    h = axis[1] - axis[0]
    return float((dens * weights).sum() * h ** 3)


def brute_force_pairs(a, b, delta):
    """All-pairs fixed-radius search; the oracle for kernels.pairs_within."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    out_a, out_b = [], []
    for start in range(0, a.shape[0], 1024):
        dd = cdist(a[start:start + 1024], b, "sqeuclidean")
        ia, ib = np.nonzero(dd < delta * delta)
        out_a.append(ia.astype(np.int64) + start)
        out_b.append(ib.astype(np.int64))
    return np.concatenate(out_a), np.concatenate(out_b)


def brute_force_intersections(model1, model2, cam1, cam2, config):
    """Re-derivation of the intersection sample set with the all-pairs oracle.

    Returns the set of (t, x, source) triples.
    """
    from sketchtraj.intersect import threshold_pixels
    from sketchtraj.geometry import pixel_ray_directions

    delta = config.resolve_delta(cam1)
    triples = set()
    for t in np.linspace(0.0, 1.0, config.n_time):
        regions = []
        for model, cam in ((model1, cam1), (model2, cam2)):
            pixels = threshold_pixels(model, t, config)
            if pixels.shape[0] == 0:
                regions.append(np.zeros((0, 3)))
                continue
            dirs = pixel_ray_directions(cam, pixels)
            depths = np.linspace(cam.d_near, cam.d_far, config.n_depth)
            regions.append((cam.origin + dirs[:, None, :] * depths[None, :, None])
                           .reshape(-1, 3))
        ia, ib = brute_force_pairs(regions[0], regions[1], delta)
        for i in np.unique(ia):
            triples.add((float(t), tuple(regions[0][i]), 1))
        for j in np.unique(ib):
            triples.add((float(t), tuple(regions[1][j]), 2))
    return triples


def triple_set(samples):
    """(t, x, source) triples of an IntersectionSamples, as a set."""
    return {(float(t), tuple(x), int(s))
            for t, x, s in zip(samples.t, samples.x, samples.source_view)}


def frechet_exhaustive(p, q):
    """Minimum over all monotone couplings of the max pair distance."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = cdist(p, q)
    n, m = d.shape
    best = [np.inf]

    def walk(i, j, worst):
        worst = max(worst, d[i, j])
        if worst >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = worst
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                walk(i + di, j + dj, worst)

    walk(0, 0, 0.0)
    return best[0]


def wasserstein_bruteforce_uniform(xa, xb):
    """Exact W2 for equal-size uniform sets by permutation enumeration."""
    xa = np.asarray(xa, dtype=np.float64)
    xb = np.asarray(xb, dtype=np.float64)
    assert xa.shape[0] == xb.shape[0] <= 8
    cost = cdist(xa, xb, "sqeuclidean")
    n = xa.shape[0]
    best = min(sum(cost[i, pi] for i, pi in enumerate(perm))
               for perm in permutations(range(n)))
    return float(np.sqrt(best / n))


def three_point_ray_region(camera, uv, n_depth):
    """Points along one pixel ray at evenly spaced admissible depths."""
    ray = pixel_ray(camera, *uv)
    return np.stack([ray_point(ray, d)
                     for d in np.linspace(ray.d_near, ray.d_far, n_depth)])
