"""Pure-numpy reference kernels. Chunked so memory stays bounded."""

import numpy as np

_CHUNK = 512


def pairs_within(a, b, radius):
    """All index pairs (ia, ib) with ||a[ia] - b[ib]||_2 < radius.

    Returns two int64 arrays sorted lexicographically by (ia, ib).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    r2 = radius * radius
    out_a, out_b = [], []
    for start in range(0, a.shape[0], _CHUNK):
        chunk = a[start:start + _CHUNK]
        diff = chunk[:, None, :] - b[None, :, :]
        dd = (diff * diff).sum(axis=2)
        ia, ib = np.nonzero(dd < r2)
        out_a.append(ia.astype(np.int64) + start)
        out_b.append(ib.astype(np.int64))
    return np.concatenate(out_a), np.concatenate(out_b)


def frechet_dp(costs):
    """Discrete Fréchet distance from a precomputed (n, m) cost matrix."""
    c = np.asarray(costs, dtype=np.float64)
    n, m = c.shape
    f = np.empty((n, m))
    f[0, 0] = c[0, 0]
    for j in range(1, m):
        f[0, j] = max(f[0, j - 1], c[0, j])
    for i in range(1, n):
        f[i, 0] = max(f[i - 1, 0], c[i, 0])
        for j in range(1, m):
            f[i, j] = max(c[i, j], min(f[i - 1, j], f[i - 1, j - 1], f[i, j - 1]))
    return float(f[n - 1, m - 1])
