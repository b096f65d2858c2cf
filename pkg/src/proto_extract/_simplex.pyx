# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled transportation simplex; same pivoting rules as ``_simplex_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()

DEF DEGENERATE_SWITCH = 50


cdef void _northwest_corner(const double[::1] a, const double[::1] b,
                            long[::1] rows, long[::1] cols, double[::1] flow,
                            double[::1] sa, double[::1] sb) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i = 0, j = 0, e
    cdef double t
    for e in range(n):
        sa[e] = a[e]
    for e in range(m):
        sb[e] = b[e]
    for e in range(n + m - 1):
        rows[e] = i
        cols[e] = j
        if i == n - 1:
            t = sb[j]
        elif j == m - 1:
            t = sa[i]
        else:
            t = sa[i] if sa[i] < sb[j] else sb[j]
        flow[e] = t
        sa[i] -= t
        sb[j] -= t
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif sa[i] <= sb[j]:
            i += 1
        else:
            j += 1


cdef void _tree(Py_ssize_t n, Py_ssize_t m, long[::1] rows, long[::1] cols,
                const double[:, ::1] C, long[::1] start, long[::1] fill,
                long[::1] adj, long[::1] parent, long[::1] pedge,
                long[::1] depth, double[::1] pot, long[::1] stack,
                char[::1] seen) noexcept nogil:
    cdef Py_ssize_t nn = n + m, ne = n + m - 1
    cdef Py_ssize_t e, k, node, other, top, r, c
    for k in range(nn + 1):
        start[k] = 0
    for e in range(ne):
        start[rows[e] + 1] += 1
        start[n + cols[e] + 1] += 1
    for k in range(nn):
        start[k + 1] += start[k]
    for k in range(nn):
        fill[k] = start[k]
        parent[k] = -1
        pedge[k] = -1
        seen[k] = 0
    for e in range(ne):
        r = rows[e]
        c = n + cols[e]
        adj[fill[r]] = e
        fill[r] += 1
        adj[fill[c]] = e
        fill[c] += 1

    depth[0] = 0
    pot[0] = 0.0
    seen[0] = 1
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        for k in range(start[node], start[node + 1]):
            e = adj[k]
            if node < n:
                other = n + cols[e]
            else:
                other = rows[e]
            if seen[other]:
                continue
            seen[other] = 1
            parent[other] = node
            pedge[other] = e
            depth[other] = depth[node] + 1
            pot[other] = C[rows[e], cols[e]] - pot[node]
            stack[top] = other
            top += 1


def solve(a, b, C, long max_iter=100000):
    """Exact transportation problem ``min <P, C>`` s.t. ``P 1 = a``, ``P^T 1 = b``.

    Returns ``(plan, cost, n_iter)``.
    """
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    Carr = np.ascontiguousarray(C, dtype=np.float64)
    cdef const double[:, ::1] Cv = Carr
    cdef Py_ssize_t n = Cv.shape[0], m = Cv.shape[1]
    cdef Py_ssize_t nn = n + m, ne = n + m - 1

    cdef long[::1] rows = np.empty(ne, dtype=np.int64)
    cdef long[::1] cols = np.empty(ne, dtype=np.int64)
    cdef double[::1] flow = np.empty(ne, dtype=np.float64)
    cdef double[::1] sa = np.empty(n, dtype=np.float64)
    cdef double[::1] sb = np.empty(m, dtype=np.float64)
    cdef char[:, ::1] in_basis = np.zeros((n, m), dtype=np.int8)
    cdef long[::1] start = np.empty(nn + 1, dtype=np.int64)
    cdef long[::1] fill = np.empty(nn, dtype=np.int64)
    cdef long[::1] adj = np.empty(2 * ne, dtype=np.int64)
    cdef long[::1] parent = np.empty(nn, dtype=np.int64)
    cdef long[::1] pedge = np.empty(nn, dtype=np.int64)
    cdef long[::1] depth = np.empty(nn, dtype=np.int64)
    cdef double[::1] pot = np.empty(nn, dtype=np.float64)
    cdef long[::1] stack = np.empty(nn, dtype=np.int64)
    cdef char[::1] seen = np.empty(nn, dtype=np.int8)
    cdef long[::1] path = np.empty(nn, dtype=np.int64)
    cdef long[::1] tail = np.empty(nn, dtype=np.int64)

    cdef Py_ssize_t i, j, e, pos, plen, tlen, p = 0, q = 0, u, v, leave
    cdef double red, best, theta, scale = 0.0, eps
    cdef long it = 0, n_degenerate = 0
    cdef Py_ssize_t k, cnt, cursor = 0, nm = n * m
    cdef Py_ssize_t block = <Py_ssize_t>(sqrt(<double>nm))
    if block < 10:
        block = 10
    cdef bint optimal = False

    with nogil:
        for i in range(n):
            for j in range(m):
                if fabs(Cv[i, j]) > scale:
                    scale = fabs(Cv[i, j])
        eps = 1e-12 * (scale if scale > 1.0 else 1.0)

        _northwest_corner(av, bv, rows, cols, flow, sa, sb)
        for e in range(ne):
            in_basis[rows[e], cols[e]] = 1

        while it < max_iter:
            _tree(n, m, rows, cols, Cv, start, fill, adj, parent, pedge,
                  depth, pot, stack, seen)
            best = INFINITY
            if n_degenerate < DEGENERATE_SWITCH:
                # block search: scan cyclically from the cursor, pick the most
                # negative reduced cost of the first block that has one
                cnt = 0
                for k in range(nm):
                    e = cursor + k
                    if e >= nm:
                        e -= nm
                    i = e // m
                    j = e - i * m
                    if not in_basis[i, j]:
                        red = Cv[i, j] - pot[i] - pot[n + j]
                        if red < best:
                            best = red
                            p = i
                            q = j
                    cnt += 1
                    if cnt == block:
                        if best < -eps:
                            cursor = e + 1
                            if cursor >= nm:
                                cursor = 0
                            break
                        cnt = 0
                        best = INFINITY
                if best >= -eps:
                    optimal = True
                    break
            else:
                # Bland: first negative reduced cost in row-major order
                for i in range(n):
                    for j in range(m):
                        if in_basis[i, j]:
                            continue
                        red = Cv[i, j] - pot[i] - pot[n + j]
                        if red < -eps:
                            best = red
                            p = i
                            q = j
                            break
                    if best < -eps:
                        break
                if best >= -eps:
                    optimal = True
                    break

            u = p
            v = n + q
            plen = 0
            tlen = 0
            while depth[u] > depth[v]:
                path[plen] = pedge[u]
                plen += 1
                u = parent[u]
            while depth[v] > depth[u]:
                tail[tlen] = pedge[v]
                tlen += 1
                v = parent[v]
            while u != v:
                path[plen] = pedge[u]
                plen += 1
                u = parent[u]
                tail[tlen] = pedge[v]
                tlen += 1
                v = parent[v]
            for pos in range(tlen):
                path[plen + pos] = tail[tlen - 1 - pos]
            plen += tlen

            leave = -1
            theta = INFINITY
            for pos in range(0, plen, 2):
                e = path[pos]
                if flow[e] < theta or (flow[e] == theta and e < leave):
                    theta = flow[e]
                    leave = e
            if theta < 0.0:
                theta = 0.0
            for pos in range(plen):
                e = path[pos]
                if pos % 2 == 0:
                    flow[e] -= theta
                else:
                    flow[e] += theta
            in_basis[rows[leave], cols[leave]] = 0
            rows[leave] = p
            cols[leave] = q
            flow[leave] = theta
            in_basis[p, q] = 1
            if theta <= 0.0:
                n_degenerate += 1
            else:
                n_degenerate = 0
            it += 1

    if not optimal:
        raise RuntimeError(f"transportation simplex did not converge in {max_iter} pivots")

    plan = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] pv = plan
    for e in range(ne):
        if flow[e] > 0.0:
            pv[rows[e], cols[e]] += flow[e]
    cost = float(np.sum(plan * Carr))
    return plan, cost, it
