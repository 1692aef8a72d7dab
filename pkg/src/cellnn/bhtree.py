"""Quadtree force summarization for the Barnes-Hut repulsion term.

The tree is stored as flat arrays so the numba kernels stay allocation-free
in the hot path. A leaf aggregates all points sharing one exact position;
past MAX_DEPTH, nearly coincident points are aggregated too (their center
of mass stays exact, only the subdivision stops).
"""

from __future__ import annotations

import numpy as np
from numba import njit

MAX_DEPTH = 48


@njit(cache=True)
def _build(pts, max_nodes):
    n = pts.shape[0]
    child = np.full((max_nodes, 4), -1, dtype=np.int32)
    cnt = np.zeros(max_nodes, dtype=np.int64)
    sx = np.zeros(max_nodes, dtype=np.float64)
    sy = np.zeros(max_nodes, dtype=np.float64)
    px = np.zeros(max_nodes, dtype=np.float64)   # leaf occupant position
    py = np.zeros(max_nodes, dtype=np.float64)
    cx = np.zeros(max_nodes, dtype=np.float64)   # node square center / half-size
    cy = np.zeros(max_nodes, dtype=np.float64)
    half = np.zeros(max_nodes, dtype=np.float64)
    is_leaf = np.ones(max_nodes, dtype=np.uint8)

    xmin = pts[0, 0]
    xmax = pts[0, 0]
    ymin = pts[0, 1]
    ymax = pts[0, 1]
    for i in range(n):
        if pts[i, 0] < xmin:
            xmin = pts[i, 0]
        if pts[i, 0] > xmax:
            xmax = pts[i, 0]
        if pts[i, 1] < ymin:
            ymin = pts[i, 1]
        if pts[i, 1] > ymax:
            ymax = pts[i, 1]
    cx[0] = 0.5 * (xmin + xmax)
    cy[0] = 0.5 * (ymin + ymax)
    span = max(xmax - xmin, ymax - ymin)
    half[0] = 0.5 * span + 1e-12

    n_nodes = 1
    for p in range(n):
        x = pts[p, 0]
        y = pts[p, 1]
        node = 0
        depth = 0
        while True:
            cnt[node] += 1
            sx[node] += x
            sy[node] += y
            if is_leaf[node]:
                if cnt[node] == 1:
                    px[node] = x
                    py[node] = y
                    break
                if (px[node] == x and py[node] == y) or depth >= MAX_DEPTH:
                    break
                # split one level: demote the occupants into their quadrant
                ox = px[node]
                oy = py[node]
                ocnt = cnt[node] - 1
                is_leaf[node] = 0
                qo = (1 if ox >= cx[node] else 0) + (2 if oy >= cy[node] else 0)
                co = n_nodes
                n_nodes += 1
                if n_nodes > max_nodes:
                    return child, cnt, sx, sy, cx, cy, half, is_leaf, -1
                hs = 0.5 * half[node]
                cx[co] = cx[node] + (hs if qo & 1 else -hs)
                cy[co] = cy[node] + (hs if qo & 2 else -hs)
                half[co] = hs
                child[node, qo] = co
                cnt[co] = ocnt
                sx[co] = ox * ocnt
                sy[co] = oy * ocnt
                px[co] = ox
                py[co] = oy
            q = (1 if x >= cx[node] else 0) + (2 if y >= cy[node] else 0)
            c = child[node, q]
            if c < 0:
                c = n_nodes
                n_nodes += 1
                if n_nodes > max_nodes:
                    return child, cnt, sx, sy, cx, cy, half, is_leaf, -1
                hs = 0.5 * half[node]
                cx[c] = cx[node] + (hs if q & 1 else -hs)
                cy[c] = cy[node] + (hs if q & 2 else -hs)
                half[c] = hs
                child[node, q] = c
            node = c
            depth += 1
    return child, cnt, sx, sy, cx, cy, half, is_leaf, n_nodes


@njit(cache=True)
def _repulsion(child, cnt, sx, sy, cx, cy, half, is_leaf, pts, theta):
    """Per-point repulsive numerators and kernel sums.

    Returns (rep, zper) with rep[i] = sum_j q_ij^2 (y_i - y_j) and
    zper[i] = sum_j q_ij over j != i, where q = 1/(1 + ||y_i - y_j||^2) and
    distant subtrees are collapsed to their center of mass when
    side^2 < theta^2 * dist^2.
    """
    n = pts.shape[0]
    rep = np.zeros((n, 2), dtype=np.float64)
    zper = np.zeros(n, dtype=np.float64)
    stack = np.empty(4096, dtype=np.int32)
    t2 = theta * theta
    for i in range(n):
        xi = pts[i, 0]
        yi = pts[i, 1]
        rx = 0.0
        ry = 0.0
        zi = 0.0
        sp = 1
        stack[0] = 0
        while sp > 0:
            sp -= 1
            nd = stack[sp]
            c = cnt[nd]
            if c == 0:
                continue
            comx = sx[nd] / c
            comy = sy[nd] / c
            dx = xi - comx
            dy = yi - comy
            dist2 = dx * dx + dy * dy
            if is_leaf[nd]:
                if dist2 == 0.0:
                    # the point's own leaf: exclude self, duplicates add q=1
                    zi += c - 1.0
                else:
                    q = 1.0 / (1.0 + dist2)
                    zi += c * q
                    f = c * q * q
                    rx += f * dx
                    ry += f * dy
                continue
            size = 2.0 * half[nd]
            # a node containing the point itself is always opened so the
            # self term can never be folded into a summary
            inside = abs(xi - cx[nd]) <= half[nd] and abs(yi - cy[nd]) <= half[nd]
            if not inside and size * size < t2 * dist2:
                q = 1.0 / (1.0 + dist2)
                zi += c * q
                f = c * q * q
                rx += f * dx
                ry += f * dy
            else:
                for j in range(4):
                    ch = child[nd, j]
                    if ch >= 0:
                        stack[sp] = ch
                        sp += 1
        rep[i, 0] = rx
        rep[i, 1] = ry
        zper[i] = zi
    return rep, zper


def repulsion_forces(layout: np.ndarray, theta: float):
    """Barnes-Hut repulsion numerators and the kernel normalizer Z.

    ``layout`` is (n, 2) float64. Returns (rep, z) where the repulsive
    gradient term is rep / z. Deterministic: the traversal order is fixed
    and the Z reduction is a fixed-order sum.
    """
    pts = np.ascontiguousarray(layout, dtype=np.float64)
    n = pts.shape[0]
    for factor in (8, 128):
        out = _build(pts, factor * n + 256)
        if out[-1] != -1:
            break
    else:  # pragma: no cover - 128n+256 exceeds the worst-case node count
        raise RuntimeError("quadtree construction overflow")
    child, cnt, sx, sy, cx, cy, half, is_leaf, _ = out
    rep, zper = _repulsion(child, cnt, sx, sy, cx, cy, half, is_leaf, pts, theta)
    return rep, float(zper.sum())
