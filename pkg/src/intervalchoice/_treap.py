"""Array-backed treap keyed by (length, insertion id), augmented with subtree
length sums and counts. All routines are iterative numba kernels.

Node slots index the parallel arrays of ``TreapArrays``; ``-1`` is nil.
Priorities are a splitmix64 hash of the insertion id, so tree shape depends
only on the sequence of keys, never on the simulation random stream.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NIL = -1

# meta layout (int64): root, next free slot, next insertion id
ROOT, NEXT_SLOT, NEXT_ID = 0, 1, 2

# error codes returned by run_steps
OK, UNDERFLOW = 0, 1

_MIN_LENGTH = 1e-300


@njit(cache=True)
def splitmix64(x):
    z = np.uint64(x) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _less(la, ia, lb, ib):
    return la < lb or (la == lb and ia < ib)


@njit(cache=True)
def _update(n, left, right, length, sub_sum, sub_cnt):
    s = length[n]
    c = 1
    l = left[n]
    r = right[n]
    if l != NIL:
        s = sub_sum[l] + s
        c += sub_cnt[l]
    if r != NIL:
        s = s + sub_sum[r]
        c += sub_cnt[r]
    sub_sum[n] = s
    sub_cnt[n] = c


@njit(cache=True)
def _rotate_up(x, left, right, parent, length, sub_sum, sub_cnt, meta):
    p = parent[x]
    g = parent[p]
    if left[p] == x:
        b = right[x]
        left[p] = b
        if b != NIL:
            parent[b] = p
        right[x] = p
    else:
        b = left[x]
        right[p] = b
        if b != NIL:
            parent[b] = p
        left[x] = p
    parent[p] = x
    parent[x] = g
    if g == NIL:
        meta[ROOT] = x
    elif left[g] == p:
        left[g] = x
    else:
        right[g] = x
    _update(p, left, right, length, sub_sum, sub_cnt)
    _update(x, left, right, length, sub_sum, sub_cnt)


@njit(cache=True)
def insert(z, left, right, parent, length, ident, prio, sub_sum, sub_cnt, meta):
    left[z] = NIL
    right[z] = NIL
    sub_sum[z] = length[z]
    sub_cnt[z] = 1
    root = meta[ROOT]
    if root == NIL:
        parent[z] = NIL
        meta[ROOT] = z
        return
    cur = root
    lz = length[z]
    iz = ident[z]
    while True:
        if _less(lz, iz, length[cur], ident[cur]):
            if left[cur] == NIL:
                left[cur] = z
                break
            cur = left[cur]
        else:
            if right[cur] == NIL:
                right[cur] = z
                break
            cur = right[cur]
    parent[z] = cur
    while parent[z] != NIL and prio[parent[z]] < prio[z]:
        _rotate_up(z, left, right, parent, length, sub_sum, sub_cnt, meta)
    n = parent[z]
    while n != NIL:
        _update(n, left, right, length, sub_sum, sub_cnt)
        n = parent[n]


@njit(cache=True)
def remove(x, left, right, parent, length, prio, sub_sum, sub_cnt, meta):
    while left[x] != NIL or right[x] != NIL:
        l = left[x]
        r = right[x]
        if l == NIL:
            c = r
        elif r == NIL:
            c = l
        elif prio[l] > prio[r]:
            c = l
        else:
            c = r
        _rotate_up(c, left, right, parent, length, sub_sum, sub_cnt, meta)
    p = parent[x]
    if p == NIL:
        meta[ROOT] = NIL
    else:
        if left[p] == x:
            left[p] = NIL
        else:
            right[p] = NIL
        n = p
        while n != NIL:
            _update(n, left, right, length, sub_sum, sub_cnt)
            n = parent[n]
    parent[x] = NIL


@njit(cache=True)
def quantile_node(target, left, right, length, sub_sum, meta):
    """Node holding the first key whose cumulative length reaches ``target``."""
    n = meta[ROOT]
    while True:
        l = left[n]
        below = 0.0
        if l != NIL:
            below = sub_sum[l]
            if target <= below:
                n = l
                continue
        upto = below + length[n]
        if target <= upto or right[n] == NIL:
            return n
        target -= upto
        n = right[n]


@njit(cache=True)
def first_with_length(ell, left, right, length, meta):
    """Smallest key (ell, id): the tie-break among equal lengths."""
    n = meta[ROOT]
    best = NIL
    while n != NIL:
        if length[n] >= ell:
            best = n
            n = left[n]
        else:
            n = right[n]
    return best


@njit(cache=True)
def prefix_sum(x, left, right, length, sub_sum, meta):
    """Sum of lengths <= x."""
    n = meta[ROOT]
    acc = 0.0
    while n != NIL:
        if length[n] <= x:
            l = left[n]
            if l != NIL:
                acc += sub_sum[l]
            acc += length[n]
            n = right[n]
        else:
            n = left[n]
    return acc


@njit(cache=True)
def max_node(right, meta):
    n = meta[ROOT]
    if n == NIL:
        return NIL
    while right[n] != NIL:
        n = right[n]
    return n


@njit(cache=True)
def inorder(left, right, meta, out):
    """Fill ``out`` with node slots in key order; returns the count."""
    stack = np.empty(128, dtype=np.int64)
    top = 0
    k = 0
    n = meta[ROOT]
    while n != NIL or top > 0:
        while n != NIL:
            if top == stack.shape[0]:
                bigger = np.empty(2 * top, dtype=np.int64)
                bigger[:top] = stack
                stack = bigger
            stack[top] = n
            top += 1
            n = left[n]
        top -= 1
        n = stack[top]
        out[k] = n
        k += 1
        n = right[n]
    return k


@njit(cache=True)
def audit(left, right, parent, length, ident, sub_sum, sub_cnt, meta, order):
    """Recompute aggregates bottom-up; returns (mismatches, order_errors, heap_errors)."""
    k = inorder(left, right, meta, order)
    mismatches = 0
    order_errors = 0
    for j in range(1, k):
        a = order[j - 1]
        b = order[j]
        if not _less(length[a], ident[a], length[b], ident[b]):
            order_errors += 1
    # children before parents: reverse of a preorder
    stack = np.empty(k + 1, dtype=np.int64)
    post = np.empty(k, dtype=np.int64)
    top = 0
    m = 0
    if meta[ROOT] != NIL:
        stack[0] = meta[ROOT]
        top = 1
    while top > 0:
        top -= 1
        n = stack[top]
        post[m] = n
        m += 1
        if left[n] != NIL:
            stack[top] = left[n]
            top += 1
        if right[n] != NIL:
            stack[top] = right[n]
            top += 1
    rs = np.zeros(left.shape[0])
    rc = np.zeros(left.shape[0], dtype=np.int64)
    for j in range(m - 1, -1, -1):
        n = post[j]
        s = length[n]
        c = 1
        if left[n] != NIL:
            s = rs[left[n]] + s
            c += rc[left[n]]
            if parent[left[n]] != n:
                mismatches += 1
        if right[n] != NIL:
            s = s + rs[right[n]]
            c += rc[right[n]]
            if parent[right[n]] != n:
                mismatches += 1
        rs[n] = s
        rc[n] = c
        if s != sub_sum[n] or c != sub_cnt[n]:
            mismatches += 1
    return mismatches, order_errors, m


@njit(cache=True)
def run_steps(
    us, vs, left, right, parent, length, ident, prio, sub_sum, sub_cnt, start, meta,
    track_positions, points, point_base, chosen_out, record, stats,
):
    """Perform ``len(us)`` splits.

    ``stats`` (float64) accumulates: [0] max entropy-identity residual,
    [1] monotone-largest violations, [2] index of an underflowing step.
    Returns OK or UNDERFLOW.
    """
    n_steps = us.shape[0]
    prev_max = length[max_node(right, meta)]
    for i in range(n_steps):
        total = sub_sum[meta[ROOT]]
        node = quantile_node(us[i] * total, left, right, length, sub_sum, meta)
        ell = length[node]
        node = first_with_length(ell, left, right, length, meta)
        v = vs[i]
        a = v * ell
        b = ell - a
        if a < _MIN_LENGTH or b < _MIN_LENGTH:
            stats[2] = i
            return UNDERFLOW
        if record:
            chosen_out[i] = ell
        delta = a * np.log(a) + b * np.log(b) - ell * np.log(ell)
        inc = ell * (v * np.log(v) + (1.0 - v) * np.log1p(-v))
        scale = max(abs(ell * np.log(ell)), ell)
        r = abs(delta - inc) / scale
        if r > stats[0]:
            stats[0] = r
        s0 = start[node]
        remove(node, left, right, parent, length, prio, sub_sum, sub_cnt, meta)
        # the freed slot takes the left piece
        nid = meta[NEXT_ID]
        length[node] = a
        ident[node] = nid
        prio[node] = splitmix64(nid)
        insert(node, left, right, parent, length, ident, prio, sub_sum, sub_cnt, meta)
        z = meta[NEXT_SLOT]
        meta[NEXT_SLOT] = z + 1
        length[z] = b
        ident[z] = nid + 1
        prio[z] = splitmix64(nid + 1)
        meta[NEXT_ID] = nid + 2
        insert(z, left, right, parent, length, ident, prio, sub_sum, sub_cnt, meta)
        if track_positions:
            start[node] = s0
            start[z] = s0 + a
            points[point_base + i] = s0 + a
        cur_max = length[max_node(right, meta)]
        if cur_max > prev_max:
            stats[1] += 1.0
        prev_max = cur_max
    return OK
