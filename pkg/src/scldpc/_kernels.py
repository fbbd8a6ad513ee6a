"""Numba kernels for peeling on the BEC.

Only erased VNs take part in peeling.  Each CN keeps its number of attached
unresolved VNs and the XOR of their indices, so a degree-one CN names its
neighbour in O(1).  The construction never repeats a CN within one VN's edge
list, so the XOR bookkeeping is exact.

The degree-one set is a dense array plus a back-index, giving O(1) insert,
remove and uniform sampling.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _init_state(vn_cns, erased, n_cns):
    deg = np.zeros(n_cns, np.int32)
    xor = np.zeros(n_cns, np.int64)
    n_vns, dv = vn_cns.shape
    for v in range(n_vns):
        if erased[v]:
            for k in range(dv):
                c = vn_cns[v, k]
                if c >= 0:
                    deg[c] += 1
                    xor[c] ^= v
    return deg, xor


@njit(cache=True, nogil=True)
def _set_add(members, where, size, c):
    where[c] = size
    members[size] = c
    return size + 1


@njit(cache=True, nogil=True)
def _set_remove(members, where, size, c):
    i = where[c]
    last = members[size - 1]
    members[i] = last
    where[last] = i
    where[c] = -1
    return size - 1


@njit(cache=True, nogil=True)
def peel_kernel(vn_cns, erased, n_cns, M, N, n_cn_pos, uniforms, stride, record_r1u, record_v):
    """Full-graph peeling.

    Returns (r1_counts, n_iter, active, r1u, vcount) where ``r1_counts[j]`` is
    the number of degree-one CNs after ``j*stride`` iterations, ``r1u`` the
    matching per-CN-position counts and ``vcount`` the unresolved VN count per
    VN position at the same instants (both empty unless requested).
    """
    n_vns, dv = vn_cns.shape
    L = n_vns // N
    deg, xor = _init_state(vn_cns, erased, n_cns)
    active = erased.copy()

    members = np.empty(n_cns, np.int64)
    where = -np.ones(n_cns, np.int64)
    size = 0
    per_pos = np.zeros(n_cn_pos, np.int64)
    for c in range(n_cns):
        if deg[c] == 1:
            size = _set_add(members, where, size, c)
            per_pos[c // M] += 1

    vpos = np.zeros(L, np.int64)
    n_erased = 0
    for v in range(n_vns):
        if erased[v]:
            vpos[v // N] += 1
            n_erased += 1

    n_samples = n_erased // stride + 2
    r1 = np.zeros(n_samples, np.int64)
    vcount = np.zeros((n_samples if record_v else 0, L), np.int32)
    if record_r1u:
        r1u = np.zeros((n_samples, n_cn_pos), np.int32)
    else:
        r1u = np.zeros((0, n_cn_pos), np.int32)

    r1[0] = size
    if record_v:
        vcount[0, :] = vpos
    if record_r1u:
        r1u[0, :] = per_pos
    it = 0
    while size > 0:
        c = members[int(uniforms[it] * size)]
        v = xor[c]
        active[v] = False
        vpos[v // N] -= 1
        for k in range(dv):
            cc = vn_cns[v, k]
            if cc < 0:
                continue
            d = deg[cc]
            if d == 1:
                size = _set_remove(members, where, size, cc)
                per_pos[cc // M] -= 1
            elif d == 2:
                size = _set_add(members, where, size, cc)
                per_pos[cc // M] += 1
            deg[cc] = d - 1
            xor[cc] ^= v
        it += 1
        if it % stride == 0:
            j = it // stride
            r1[j] = size
            if record_v:
                vcount[j, :] = vpos
            if record_r1u:
                r1u[j, :] = per_pos
    n_rec = it // stride + 1
    if it % stride != 0:
        # Always keep the halting state.
        r1[n_rec] = size
        if record_v:
            vcount[n_rec, :] = vpos
        if record_r1u:
            r1u[n_rec, :] = per_pos
        n_rec += 1
    if record_r1u:
        r1u = r1u[:n_rec]
    if record_v:
        vcount = vcount[:n_rec]
    return r1[:n_rec], it, active, r1u, vcount


@njit(cache=True, nogil=True)
def window_kernel(vn_cns, erased, n_cns, M, N, n_cn_pos, W, delay, uniforms):
    """Sliding-window peeling over CN positions ``[w, w+W-1]``.

    Returns (active_at_end, active_at_finalization) boolean arrays.
    """
    n_vns, dv = vn_cns.shape
    L = n_vns // N
    deg, xor = _init_state(vn_cns, erased, n_cns)
    active = erased.copy()
    at_final = np.zeros(n_vns, np.bool_)

    members = np.empty(n_cns, np.int64)
    where = -np.ones(n_cns, np.int64)
    size = 0

    n_windows = n_cn_pos - W + 1
    finalized = 0  # VN positions [0, finalized) are decided
    it = 0
    for w in range(n_windows):
        lo = w
        hi = w + W - 1
        if w == 0:
            for c in range(0, (hi + 1) * M):
                if deg[c] == 1:
                    size = _set_add(members, where, size, c)
        else:
            for c in range((lo - 1) * M, lo * M):
                if where[c] >= 0:
                    size = _set_remove(members, where, size, c)
            for c in range(hi * M, (hi + 1) * M):
                if deg[c] == 1:
                    size = _set_add(members, where, size, c)
        while size > 0:
            c = members[int(uniforms[it] * size)]
            v = xor[c]
            active[v] = False
            for k in range(dv):
                cc = vn_cns[v, k]
                if cc < 0:
                    continue
                d = deg[cc]
                p = cc // M
                inside = p >= lo and p <= hi
                if inside:
                    if d == 1:
                        size = _set_remove(members, where, size, cc)
                    elif d == 2:
                        size = _set_add(members, where, size, cc)
                deg[cc] = d - 1
                xor[cc] ^= v
            it += 1
        target = w - delay
        if target >= 0 and target < L:
            for v in range(target * N, (target + 1) * N):
                at_final[v] = active[v]
            finalized = target + 1
    for v in range(finalized * N, n_vns):
        at_final[v] = active[v]
    return active, at_final


@njit(cache=True, nogil=True)
def de_sc_kernel(eps, dv, dc, L, max_iter, tol_zero, tol_fix):
    """Density evolution of the terminated semi-structured ensemble.

    Returns (status, iterations, max message) with status 1 = decoded,
    0 = stuck at a nonzero fixed point, -1 = iteration cap hit.
    """
    n_cn = L + dv - 1
    x = np.full((dv, L), eps)  # VN at i -> CN at i+k
    y = np.ones(n_cn)
    for it in range(max_iter):
        for j in range(n_cn):
            acc = 0.0
            for k in range(dv):
                i = j - k
                if i >= 0 and i < L:
                    acc += x[k, i]
            y[j] = 1.0 - (1.0 - acc / dv) ** (dc - 1)
        change = 0.0
        xmax = 0.0
        for i in range(L):
            for k in range(dv):
                prod = eps
                for kk in range(dv):
                    if kk != k:
                        prod *= y[i + kk]
                d = abs(prod - x[k, i])
                if d > change:
                    change = d
                if prod > xmax:
                    xmax = prod
                x[k, i] = prod
        if xmax < tol_zero:
            return 1, it + 1, xmax
        if change < tol_fix:
            return 0, it + 1, xmax
    return -1, max_iter, xmax


@njit(cache=True, nogil=True)
def socket_graph_kernel(L, N, M, dv, dc, n_pos, uniforms):
    """Match each CN position's incoming edges to distinct random sockets.

    ``uniforms`` supplies one draw per edge slot (partial Fisher-Yates).
    """
    n_sock = M * dc
    vn_cns = -np.ones((L * N, dv), np.int64)
    sockets = np.empty(n_sock, np.int64)
    u = 0
    for j in range(n_pos):
        i_lo = max(j - dv + 1, 0)
        i_hi = min(j, L - 1)
        n_edges = (i_hi - i_lo + 1) * N
        for s in range(n_sock):
            sockets[s] = s
        for e in range(n_edges):
            r = e + int(uniforms[u] * (n_sock - e))
            u += 1
            tmp = sockets[e]
            sockets[e] = sockets[r]
            sockets[r] = tmp
            v = i_lo * N + e
            vn_cns[v, j - v // N] = j * M + sockets[e] // dc
    return vn_cns
