# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: grid Dijkstra and multi-step leapfrog."""
import numpy as np
cimport numpy as cnp
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair
from libc.math cimport INFINITY

cnp.import_array()

ctypedef pair[double, Py_ssize_t] entry


def dijkstra(double[:, ::1] weights, Py_ssize_t[::1] offsets, unsigned char[::1] sources):
    """Shortest path lengths from the marked nodes.

    ``weights[k, i]`` is the length of the edge ``i -> i + offsets[k]``; a
    non-finite weight means the edge does not exist.
    """
    cdef Py_ssize_t n = sources.shape[0]
    cdef Py_ssize_t K = offsets.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d, w, nd
    dist_arr = np.full(n, np.inf)
    cdef double[::1] dist = dist_arr
    cdef unsigned char[::1] done = np.zeros(n, dtype=np.uint8)
    cdef priority_queue[entry] heap
    for i in range(n):
        if sources[i]:
            dist[i] = 0.0
            heap.push(entry(-0.0, i))
    while not heap.empty():
        d = -heap.top().first
        i = heap.top().second
        heap.pop()
        if done[i]:
            continue
        done[i] = 1
        for k in range(K):
            w = weights[k, i]
            if not (w < INFINITY):
                continue
            j = i + offsets[k]
            nd = d + w
            if nd < dist[j]:
                dist[j] = nd
                heap.push(entry(-nd, j))
    return dist_arr


cdef inline void _accel_1d(double[::1] u, double[::1] gface, double[::1] q,
                           double inv_h2, double[::1] a, Py_ssize_t n) nogil:
    cdef Py_ssize_t i
    a[0] = 0.0
    a[n - 1] = 0.0
    for i in range(1, n - 1):
        a[i] = (gface[i] * (u[i + 1] - u[i]) - gface[i - 1] * (u[i] - u[i - 1])) * inv_h2 - q[i] * u[i]


def verlet_1d(double[::1] u0, double[::1] v0, double[::1] gface, double[::1] q,
              double dt, double h, Py_ssize_t nsteps, forcing=None, bint record=False):
    """Kick-drift-kick steps for ``u_tt = (g u_x)_x - q u + f`` with zero ends.

    ``forcing`` has shape ``(nsteps + 1, n)`` and is sampled at the time
    levels.  Returns ``(u, v, history)`` where ``history`` holds ``u`` at every
    level when ``record`` is set.
    """
    cdef Py_ssize_t n = u0.shape[0]
    cdef Py_ssize_t i, s
    cdef double inv_h2 = 1.0 / (h * h)
    cdef double hdt = 0.5 * dt
    u_arr = np.array(u0, copy=True)
    v_arr = np.array(v0, copy=True)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] a = np.zeros(n)
    cdef double[:, ::1] f
    cdef bint has_f = forcing is not None
    if has_f:
        f = np.ascontiguousarray(forcing, dtype=np.float64)
    hist_arr = np.zeros((nsteps + 1 if record else 0, n))
    cdef double[:, ::1] hist = hist_arr
    if record:
        hist[0, :] = u
    _accel_1d(u, gface, q, inv_h2, a, n)
    for s in range(nsteps):
        for i in range(1, n - 1):
            v[i] += hdt * (a[i] + (f[s, i] if has_f else 0.0))
            u[i] += dt * v[i]
        _accel_1d(u, gface, q, inv_h2, a, n)
        for i in range(1, n - 1):
            v[i] += hdt * (a[i] + (f[s + 1, i] if has_f else 0.0))
        if record:
            hist[s + 1, :] = u
    return u_arr, v_arr, hist_arr


cdef inline void _accel_2d(double[:, ::1] u, double[:, ::1] gx, double[:, ::1] gy,
                           double[:, ::1] q, double ihx2, double ihy2,
                           double[:, ::1] a, Py_ssize_t nx, Py_ssize_t ny) nogil:
    cdef Py_ssize_t i, j
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            a[i, j] = ((gx[i, j] * (u[i + 1, j] - u[i, j]) - gx[i - 1, j] * (u[i, j] - u[i - 1, j])) * ihx2
                       + (gy[i, j] * (u[i, j + 1] - u[i, j]) - gy[i, j - 1] * (u[i, j] - u[i, j - 1])) * ihy2
                       - q[i, j] * u[i, j])


def verlet_2d(double[:, ::1] u0, double[:, ::1] v0, double[:, ::1] gx, double[:, ::1] gy,
              double[:, ::1] q, double dt, double hx, double hy, Py_ssize_t nsteps,
              forcing=None, Py_ssize_t record_every=0):
    """Two-dimensional counterpart of :func:`verlet_1d`.

    ``gx`` lives on x-faces ``(nx - 1, ny)`` and ``gy`` on y-faces
    ``(nx, ny - 1)``.  With ``record_every = m > 0`` every m-th level of ``u``
    is stored.
    """
    cdef Py_ssize_t nx = u0.shape[0], ny = u0.shape[1]
    cdef Py_ssize_t i, j, s, r = 0
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    cdef double hdt = 0.5 * dt
    u_arr = np.array(u0, copy=True)
    v_arr = np.array(v0, copy=True)
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] a = np.zeros((nx, ny))
    cdef double[:, :, ::1] f
    cdef bint has_f = forcing is not None
    if has_f:
        f = np.ascontiguousarray(forcing, dtype=np.float64)
    nrec = (nsteps // record_every + 1) if record_every > 0 else 0
    hist_arr = np.zeros((nrec, nx, ny))
    cdef double[:, :, ::1] hist = hist_arr
    if record_every > 0:
        hist[0, :, :] = u
        r = 1
    _accel_2d(u, gx, gy, q, ihx2, ihy2, a, nx, ny)
    for s in range(nsteps):
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                v[i, j] += hdt * (a[i, j] + (f[s, i, j] if has_f else 0.0))
                u[i, j] += dt * v[i, j]
        _accel_2d(u, gx, gy, q, ihx2, ihy2, a, nx, ny)
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                v[i, j] += hdt * (a[i, j] + (f[s + 1, i, j] if has_f else 0.0))
        if record_every > 0 and (s + 1) % record_every == 0:
            hist[r, :, :] = u
            r += 1
    return u_arr, v_arr, hist_arr
