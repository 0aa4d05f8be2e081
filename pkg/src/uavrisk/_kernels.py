"""Compiled graph-search kernels over the flat 26-connected voxel grid.

Flat index: ``(x * ny + y) * nz + z``. Neighbours are enumerated dx, dy, dz
ascending, which fixes tie-breaking together with the FIFO sequence number
stored in every heap entry.
"""

import math

import numpy as np
from numba import njit

STEP_RISK = 0
STEP_METRIC = 1


@njit(cache=True)
def _heuristic(node, nx, ny, nz, dest, factor, track, track_rest, eps, hard):
    if factor == 0.0:
        return 0.0
    nyz = ny * nz
    x = node // nyz
    y = (node % nyz) // nz
    z = node % nz
    dx = dest // nyz
    dy = (dest % nyz) // nz
    dz = dest % nz
    h_dest = factor * math.sqrt((dx - x) ** 2 + (dy - y) ** 2 + (dz - z) ** 2)
    m = track.shape[0]
    if m == 0:
        return h_dest
    best = np.inf
    best_j = 0
    for j in range(m):
        d = math.sqrt((track[j, 0] - x) ** 2 + (track[j, 1] - y) ** 2 + (track[j, 2] - z) ** 2)
        if d < best:
            best = d
            best_j = j
    h_ctrs = factor * (best + track_rest[best_j])
    dev = (h_ctrs - h_dest) / max(h_dest, 1e-9)
    if dev < eps:
        return h_dest
    if hard:
        return np.inf
    return h_ctrs


@njit(cache=True)
def _offsets():
    offs = np.empty((26, 3), dtype=np.int64)
    c = 0
    for a in range(-1, 2):
        for b in range(-1, 2):
            for e in range(-1, 2):
                if a == 0 and b == 0 and e == 0:
                    continue
                offs[c, 0] = a
                offs[c, 1] = b
                offs[c, 2] = e
                c += 1
    return offs


@njit(cache=True)
def best_first(cost, blocked, nx, ny, nz, origin, dest, step_mode, ux, uy, uz, factor, track, track_rest, eps, hard):
    """A*/Dijkstra from ``origin`` to ``dest`` on an indexed binary heap.

    Heap keys are (f, sequence number of the last improvement), so equal-f
    entries leave in FIFO order. Returns ``(pred, g, expanded, found)``. With
    ``factor == 0`` this is plain Dijkstra. ``step_mode`` selects the edge
    weight: STEP_RISK uses the cost of the entered cell, STEP_METRIC the
    Euclidean segment length in meters.
    """
    n = nx * ny * nz
    nyz = ny * nz
    offs = _offsets()
    steps = np.empty(26)
    for c in range(26):
        steps[c] = math.sqrt((offs[c, 0] * ux) ** 2 + (offs[c, 1] * uy) ** 2 + (offs[c, 2] * uz) ** 2)
    g = np.full(n, np.inf)
    hval = np.full(n, np.nan)
    pred = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=np.bool_)
    pos = np.full(n, -1, dtype=np.int64)
    # heap slots: key f, key seq, node
    kf = np.empty(n)
    ks = np.empty(n, dtype=np.int64)
    kn = np.empty(n, dtype=np.int64)
    g[origin] = 0.0
    kf[0] = 0.0
    ks[0] = 0
    kn[0] = origin
    pos[origin] = 0
    size = 1
    seq = 1
    expanded = 0
    found = False
    while size > 0:
        u = kn[0]
        size -= 1
        pos[u] = -1
        if size > 0:
            f = kf[size]
            s = ks[size]
            w_node = kn[size]
            i = 0
            while True:
                c = 2 * i + 1
                if c >= size:
                    break
                if c + 1 < size and (kf[c + 1] < kf[c] or (kf[c + 1] == kf[c] and ks[c + 1] < ks[c])):
                    c += 1
                if kf[c] < f or (kf[c] == f and ks[c] < s):
                    kf[i] = kf[c]
                    ks[i] = ks[c]
                    kn[i] = kn[c]
                    pos[kn[i]] = i
                    i = c
                else:
                    break
            kf[i] = f
            ks[i] = s
            kn[i] = w_node
            pos[w_node] = i
        closed[u] = True
        expanded += 1
        if u == dest:
            found = True
            break
        x = u // nyz
        y = (u % nyz) // nz
        z = u % nz
        gu = g[u]
        for c in range(26):
            xx = x + offs[c, 0]
            yy = y + offs[c, 1]
            zz = z + offs[c, 2]
            if xx < 0 or xx >= nx or yy < 0 or yy >= ny or zz < 0 or zz >= nz:
                continue
            v = (xx * ny + yy) * nz + zz
            if blocked[v] or closed[v]:
                continue
            w = cost[v] if step_mode == STEP_RISK else steps[c]
            nd = gu + w
            if nd < g[v]:
                if math.isnan(hval[v]):
                    hval[v] = _heuristic(v, nx, ny, nz, dest, factor, track, track_rest, eps, hard)
                if hval[v] == np.inf:
                    continue
                g[v] = nd
                pred[v] = u
                # insert or decrease-key, then sift up
                i = pos[v]
                if i < 0:
                    i = size
                    size += 1
                f = nd + hval[v]
                s = seq
                seq += 1
                while i > 0:
                    parent = (i - 1) >> 1
                    if f < kf[parent] or (f == kf[parent] and s < ks[parent]):
                        kf[i] = kf[parent]
                        ks[i] = ks[parent]
                        kn[i] = kn[parent]
                        pos[kn[i]] = i
                        i = parent
                    else:
                        break
                kf[i] = f
                ks[i] = s
                kn[i] = v
                pos[v] = i
    return pred, g, expanded, found


@njit(cache=True)
def connected(open_mask, nx, ny, nz, origin, dest):
    """Flood fill over open cells; True if ``dest`` is reached.

    Depth-first, pushing the move that heads towards ``dest`` last so it is
    expanded first; the answer does not depend on the visiting order.
    """
    if not open_mask[origin] or not open_mask[dest]:
        return False
    if origin == dest:
        return True
    n = nx * ny * nz
    nyz = ny * nz
    tx = dest // nyz
    ty = (dest % nyz) // nz
    tz = dest % nz
    seen = np.zeros(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    top = 1
    stack[0] = origin
    seen[origin] = True
    while top > 0:
        top -= 1
        u = stack[top]
        x = u // nyz
        y = (u % nyz) // nz
        z = u % nz
        sx = 1 if tx > x else (-1 if tx < x else 0)
        sy = 1 if ty > y else (-1 if ty < y else 0)
        sz = 1 if tz > z else (-1 if tz < z else 0)
        # offsets ordered from "away" to "towards"; the last pushed is popped first
        for i in range(-1, 2):
            ddx = -i * sx if sx != 0 else i
            xx = x + ddx
            if xx < 0 or xx >= nx:
                continue
            for j in range(-1, 2):
                ddy = -j * sy if sy != 0 else j
                yy = y + ddy
                if yy < 0 or yy >= ny:
                    continue
                for k in range(-1, 2):
                    ddz = -k * sz if sz != 0 else k
                    zz = z + ddz
                    if zz < 0 or zz >= nz:
                        continue
                    v = (xx * ny + yy) * nz + zz
                    if seen[v] or not open_mask[v]:
                        continue
                    if v == dest:
                        return True
                    seen[v] = True
                    stack[top] = v
                    top += 1
    return False
