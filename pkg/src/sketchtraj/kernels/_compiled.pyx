# Compiled kernels. Must stay output-identical to _reference.py.

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def pairs_within(a, b, double radius):
    """All index pairs (ia, ib) with ||a[ia] - b[ib]||_2 < radius.

    Uniform spatial hash with cell size = radius; only the 27 neighbor
    cells of each query point can contain matches. Output is sorted
    lexicographically by (ia, ib), same as the reference kernel.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pb = np.ascontiguousarray(b, dtype=np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if pa.shape[1] != 3 or pb.shape[1] != 3:
        raise ValueError("pairs_within expects (n, 3) point arrays")
    cdef Py_ssize_t na = pa.shape[0], nb = pb.shape[0]
    if na == 0 or nb == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    cdef double inv = 1.0 / radius
    cdef double r2 = radius * radius
    cdef dict cells = {}
    cdef Py_ssize_t i, j, k
    cdef long cx, cy, cz
    cdef tuple key
    cdef list bucket

    for i in range(na):
        cx = <long>floor(pa[i, 0] * inv)
        cy = <long>floor(pa[i, 1] * inv)
        cz = <long>floor(pa[i, 2] * inv)
        key = (cx, cy, cz)
        bucket = <list>cells.get(key)
        if bucket is None:
            cells[key] = [i]
        else:
            bucket.append(i)

    cdef list hits_a = [], hits_b = []
    cdef double dx, dy, dz, dd
    cdef long ox, oy, oz
    cdef object found
    for j in range(nb):
        cx = <long>floor(pb[j, 0] * inv)
        cy = <long>floor(pb[j, 1] * inv)
        cz = <long>floor(pb[j, 2] * inv)
        for ox in range(cx - 1, cx + 2):
            for oy in range(cy - 1, cy + 2):
                for oz in range(cz - 1, cz + 2):
                    found = cells.get((ox, oy, oz))
                    if found is None:
                        continue
                    bucket = <list>found
                    for k in range(len(bucket)):
                        i = <Py_ssize_t>bucket[k]
                        dx = pa[i, 0] - pb[j, 0]
                        dy = pa[i, 1] - pb[j, 1]
                        dz = pa[i, 2] - pb[j, 2]
                        dd = dx * dx + dy * dy + dz * dz
                        if dd < r2:
                            hits_a.append(i)
                            hits_b.append(j)

    cdef cnp.ndarray[cnp.int64_t, ndim=1] ia = np.asarray(hits_a, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ib = np.asarray(hits_b, dtype=np.int64)
    order = np.lexsort((ib, ia))
    return ia[order], ib[order]


def frechet_dp(costs):
    """Discrete Fréchet distance from a precomputed (n, m) cost matrix."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(costs, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.empty((n, m), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double best
    f[0, 0] = c[0, 0]
    for j in range(1, m):
        f[0, j] = f[0, j - 1] if f[0, j - 1] > c[0, j] else c[0, j]
    for i in range(1, n):
        f[i, 0] = f[i - 1, 0] if f[i - 1, 0] > c[i, 0] else c[i, 0]
        for j in range(1, m):
            best = f[i - 1, j]
            if f[i - 1, j - 1] < best:
                best = f[i - 1, j - 1]
            if f[i, j - 1] < best:
                best = f[i, j - 1]
            f[i, j] = best if best > c[i, j] else c[i, j]
    return float(f[n - 1, m - 1])
