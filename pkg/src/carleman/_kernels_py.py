"""Pure Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import heapq

import numpy as np


def dijkstra(weights, offsets, sources):
    weights = np.asarray(weights, float)
    offsets = np.asarray(offsets, np.intp)
    n = len(sources)
    dist = np.full(n, np.inf)
    done = np.zeros(n, bool)
    heap = []
    for i in np.flatnonzero(np.asarray(sources)):
        dist[i] = 0.0
        heap.append((0.0, int(i)))
    heapq.heapify(heap)
    W = weights.T.tolist()
    offs = offsets.tolist()
    distl = dist.tolist()
    while heap:
        d, i = heapq.heappop(heap)
        if done[i]:
            continue
        done[i] = True
        for w, o in zip(W[i], offs):
            if not w < np.inf:
                continue
            j = i + o
            nd = d + w
            if nd < distl[j]:
                distl[j] = nd
                heapq.heappush(heap, (nd, j))
    return np.array(distl)


def _accel_1d(u, gface, q, inv_h2):
    a = np.zeros_like(u)
    flux = gface * np.diff(u)
    a[1:-1] = (flux[1:] - flux[:-1]) * inv_h2 - q[1:-1] * u[1:-1]
    return a


def verlet_1d(u0, v0, gface, q, dt, h, nsteps, forcing=None, record=False):
    u = np.array(u0, float, copy=True)
    v = np.array(v0, float, copy=True)
    inv_h2 = 1.0 / (h * h)
    hist = np.zeros((nsteps + 1 if record else 0, u.size))
    if record:
        hist[0] = u
    a = _accel_1d(u, gface, q, inv_h2)
    for s in range(nsteps):
        kick = a[1:-1] if forcing is None else a[1:-1] + forcing[s, 1:-1]
        v[1:-1] += 0.5 * dt * kick
        u[1:-1] += dt * v[1:-1]
        a = _accel_1d(u, gface, q, inv_h2)
        kick = a[1:-1] if forcing is None else a[1:-1] + forcing[s + 1, 1:-1]
        v[1:-1] += 0.5 * dt * kick
        if record:
            hist[s + 1] = u
    return u, v, hist


def _accel_2d(u, gx, gy, q, ihx2, ihy2):
    a = np.zeros_like(u)
    fx = gx * np.diff(u, axis=0)
    fy = gy * np.diff(u, axis=1)
    a[1:-1, 1:-1] = ((fx[1:, 1:-1] - fx[:-1, 1:-1]) * ihx2
                     + (fy[1:-1, 1:] - fy[1:-1, :-1]) * ihy2
                     - q[1:-1, 1:-1] * u[1:-1, 1:-1])
    return a


def verlet_2d(u0, v0, gx, gy, q, dt, hx, hy, nsteps, forcing=None, record_every=0):
    u = np.array(u0, float, copy=True)
    v = np.array(v0, float, copy=True)
    ihx2, ihy2 = 1.0 / (hx * hx), 1.0 / (hy * hy)
    hist = []
    if record_every > 0:
        hist.append(u.copy())
    a = _accel_2d(u, gx, gy, q, ihx2, ihy2)
    inner = (slice(1, -1), slice(1, -1))
    for s in range(nsteps):
        kick = a[inner] if forcing is None else a[inner] + forcing[s][inner]
        v[inner] += 0.5 * dt * kick
        u[inner] += dt * v[inner]
        a = _accel_2d(u, gx, gy, q, ihx2, ihy2)
        kick = a[inner] if forcing is None else a[inner] + forcing[s + 1][inner]
        v[inner] += 0.5 * dt * kick
        if record_every > 0 and (s + 1) % record_every == 0:
            hist.append(u.copy())
    hist = np.array(hist) if hist else np.zeros((0,) + u.shape)
    return u, v, hist
