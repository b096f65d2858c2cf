"""Pure-Python transportation simplex (fallback when the compiled kernel is absent).

Mirrors ``_simplex.pyx`` step for step so both backends pivot identically.
"""

from __future__ import annotations

import numpy as np

# consecutive degenerate pivots before switching to Bland's rule
_DEGENERATE_SWITCH = 50


def _northwest_corner(a, b):
    n, m = a.shape[0], b.shape[0]
    rows = np.empty(n + m - 1, dtype=np.int64)
    cols = np.empty(n + m - 1, dtype=np.int64)
    flow = np.empty(n + m - 1, dtype=np.float64)
    sa = a.astype(np.float64).copy()
    sb = b.astype(np.float64).copy()
    i = j = 0
    for e in range(n + m - 1):
        rows[e] = i
        cols[e] = j
        if i == n - 1:
            t = sb[j]
        elif j == m - 1:
            t = sa[i]
        else:
            t = min(sa[i], sb[j])
        flow[e] = t
        sa[i] -= t
        sb[j] -= t
        # advance exactly one index so the basis stays a spanning tree
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif sa[i] <= sb[j]:
            i += 1
        else:
            j += 1
    return rows, cols, flow


def _tree(n, m, rows, cols, C):
    """Root the basis tree at row 0; return parents, depths and potentials."""
    nn = n + m
    ne = rows.shape[0]
    deg = np.zeros(nn + 1, dtype=np.int64)
    for e in range(ne):
        deg[rows[e] + 1] += 1
        deg[n + cols[e] + 1] += 1
    start = np.cumsum(deg)
    fill = start[:-1].copy()
    adj = np.empty(2 * ne, dtype=np.int64)
    for e in range(ne):
        r, c = rows[e], n + cols[e]
        adj[fill[r]] = e
        fill[r] += 1
        adj[fill[c]] = e
        fill[c] += 1

    parent = np.full(nn, -1, dtype=np.int64)
    pedge = np.full(nn, -1, dtype=np.int64)
    depth = np.zeros(nn, dtype=np.int64)
    pot = np.zeros(nn, dtype=np.float64)
    seen = np.zeros(nn, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        node = stack.pop()
        for k in range(start[node], start[node + 1]):
            e = adj[k]
            other = n + cols[e] if node < n else rows[e]
            if seen[other]:
                continue
            seen[other] = True
            parent[other] = node
            pedge[other] = e
            depth[other] = depth[node] + 1
            # u_i + v_j = c_ij on basic cells
            pot[other] = C[rows[e], cols[e]] - pot[node]
            stack.append(other)
    return parent, pedge, depth, pot


def _block_search(red, cursor, block, eps):
    """Most negative entry of the first block (scanning cyclically from
    ``cursor``) that contains a negative one; ``-1`` when none exists."""
    nm = red.shape[0]
    order = np.roll(red, -cursor)
    for lo in range(0, nm, block):
        chunk = order[lo:lo + block]
        k = int(np.argmin(chunk))
        if chunk[k] < -eps:
            flat = (cursor + lo + k) % nm
            if chunk.shape[0] == block:
                cursor = (cursor + lo + block) % nm
            return flat, cursor
    return -1, cursor


def solve(a, b, C, max_iter=100000):
    """Exact transportation problem ``min <P, C>`` s.t. ``P 1 = a``, ``P^T 1 = b``.

    Returns ``(plan, cost, n_iter)``. ``a`` and ``b`` must have equal sums.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    n, m = C.shape
    rows, cols, flow = _northwest_corner(a, b)
    in_basis = np.zeros((n, m), dtype=bool)
    in_basis[rows, cols] = True

    scale = float(np.abs(C).max()) if C.size else 0.0
    eps = 1e-12 * max(scale, 1.0)
    n_degenerate = 0
    cursor = 0
    block = max(int(np.sqrt(n * m)), 10)
    it = 0
    while it < max_iter:
        parent, pedge, depth, pot = _tree(n, m, rows, cols, C)
        red = C - pot[:n, None] - pot[None, n:]
        red[in_basis] = np.inf
        if n_degenerate < _DEGENERATE_SWITCH:
            flat, cursor = _block_search(red.ravel(), cursor, block, eps)
            if flat < 0:
                break
        else:
            neg = np.flatnonzero(red < -eps)
            if neg.size == 0:
                break
            flat = int(neg[0])
        p, q = divmod(flat, m)

        # path p -> (n+q) in the tree, split into the two climbing halves
        u, v = p, n + q
        up_u = []
        up_v = []
        while depth[u] > depth[v]:
            up_u.append(pedge[u])
            u = parent[u]
        while depth[v] > depth[u]:
            up_v.append(pedge[v])
            v = parent[v]
        while u != v:
            up_u.append(pedge[u])
            u = parent[u]
            up_v.append(pedge[v])
            v = parent[v]
        path = up_u + up_v[::-1]

        # edges at odd positions along the path from p lose flow
        leave = -1
        theta = np.inf
        for pos in range(0, len(path), 2):
            e = path[pos]
            if flow[e] < theta or (flow[e] == theta and e < leave):
                theta = flow[e]
                leave = e
        theta = max(theta, 0.0)
        for pos, e in enumerate(path):
            if pos % 2 == 0:
                flow[e] -= theta
            else:
                flow[e] += theta
        in_basis[rows[leave], cols[leave]] = False
        rows[leave] = p
        cols[leave] = q
        flow[leave] = theta
        in_basis[p, q] = True
        n_degenerate = n_degenerate + 1 if theta <= 0.0 else 0
        it += 1
    else:
        raise RuntimeError(f"transportation simplex did not converge in {max_iter} pivots")

    plan = np.zeros((n, m), dtype=np.float64)
    np.add.at(plan, (rows, cols), np.maximum(flow, 0.0))
    cost = float(np.sum(plan * C))
    return plan, cost, it
