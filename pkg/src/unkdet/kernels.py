"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Both flavours perform the same floating-point operations in the same order,
so they agree bit for bit; ``tests/test_kernels.py`` checks this. The public
names at the bottom of the module dispatch on ``_accel.USE_NUMBA``.

Boxes are ``(n, 4)`` float64 arrays in ``(cx, cy, w, h)`` order.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

IOU = 0
GIOU = 1
DIOU = 2


# ---------------------------------------------------------------------------
# pairwise overlap
# ---------------------------------------------------------------------------

@njit
def _overlap_one(acx, acy, aw, ah, bcx, bcy, bw, bh, mode):
    ax1 = acx - 0.5 * aw
    ay1 = acy - 0.5 * ah
    ax2 = acx + 0.5 * aw
    ay2 = acy + 0.5 * ah
    bx1 = bcx - 0.5 * bw
    by1 = bcy - 0.5 * bh
    bx2 = bcx + 0.5 * bw
    by2 = bcy + 0.5 * bh
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw < 0.0:
        iw = 0.0
    if ih < 0.0:
        ih = 0.0
    inter = iw * ih
    union = area_a + area_b - inter
    iou = inter / union if union > 0.0 else 0.0
    if mode == IOU:
        return iou
    ew = max(ax2, bx2) - min(ax1, bx1)
    eh = max(ay2, by2) - min(ay1, by1)
    if mode == GIOU:
        enclose = ew * eh
        if enclose > 0.0:
            return iou - max(enclose - union, 0.0) / enclose
        return iou
    dx = acx - bcx
    dy = acy - bcy
    c2 = ew * ew + eh * eh
    if c2 > 0.0:
        return iou - (dx * dx + dy * dy) / c2
    return iou


@njit
def pairwise_overlap_nb(a, b, mode):
    n = a.shape[0]
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            out[i, j] = _overlap_one(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                                     b[j, 0], b[j, 1], b[j, 2], b[j, 3], mode)
    return out


def pairwise_overlap_np(a, b, mode):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    acx, acy, aw, ah = (a[:, k, None] for k in range(4))
    bcx, bcy, bw, bh = (b[None, :, k] for k in range(4))
    ax1, ay1 = acx - 0.5 * aw, acy - 0.5 * ah
    ax2, ay2 = acx + 0.5 * aw, acy + 0.5 * ah
    bx1, by1 = bcx - 0.5 * bw, bcy - 0.5 * bh
    bx2, by2 = bcx + 0.5 * bw, bcy + 0.5 * bh
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    iw = np.maximum(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0)
    ih = np.maximum(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0)
    inter = iw * ih
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
        if mode == IOU:
            return iou
        ew = np.maximum(ax2, bx2) - np.minimum(ax1, bx1)
        eh = np.maximum(ay2, by2) - np.minimum(ay1, by1)
        if mode == GIOU:
            enclose = ew * eh
            return np.where(enclose > 0.0, iou - np.maximum(enclose - union, 0.0) / enclose, iou)
        dx = acx - bcx
        dy = acy - bcy
        c2 = ew * ew + eh * eh
        return np.where(c2 > 0.0, iou - (dx * dx + dy * dy) / c2, iou)


# ---------------------------------------------------------------------------
# greedy NMS
# ---------------------------------------------------------------------------

def _descending_order(scores):
    # stable sort on the negated score: ties resolved by lower index
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


@njit
def _greedy_nms_nb(boxes, order, threshold, mode):
    n = order.shape[0]
    removed = np.zeros(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    n_keep = 0
    for p in range(n):
        if removed[p]:
            continue
        i = order[p]
        keep[n_keep] = i
        n_keep += 1
        for q in range(p + 1, n):
            if removed[q]:
                continue
            j = order[q]
            s = _overlap_one(boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3],
                             boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3], mode)
            if s > threshold:
                removed[q] = True
    return keep[:n_keep]


def greedy_nms_nb(boxes, scores, threshold, mode=DIOU):
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = _descending_order(scores).astype(np.int64)
    return _greedy_nms_nb(boxes, order, float(threshold), mode)


def greedy_nms_np(boxes, scores, threshold, mode=DIOU):
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = _descending_order(scores)
    keep = []
    while order.size:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        if not rest.size:
            break
        s = pairwise_overlap_np(boxes[i:i + 1], boxes[rest], mode)[0]
        order = rest[~(s > threshold)]
    return np.asarray(keep, dtype=np.int64)


# ---------------------------------------------------------------------------
# rectangular linear assignment (shortest augmenting path)
# ---------------------------------------------------------------------------
# Rows are assigned one at a time along a Dijkstra-style shortest augmenting
# path with dual potentials u (rows) and v (columns). Among equally short
# candidates an unassigned column is preferred, then the lowest column index.

@njit
def _lsa_nb(cost):
    nr, nc = cost.shape
    u = np.zeros(nr)
    v = np.zeros(nc)
    shortest = np.empty(nc)
    path = np.full(nc, -1, dtype=np.int64)
    col4row = np.full(nr, -1, dtype=np.int64)
    row4col = np.full(nc, -1, dtype=np.int64)
    sr = np.zeros(nr, dtype=np.bool_)
    sc = np.zeros(nc, dtype=np.bool_)
    for cur in range(nr):
        shortest[:] = np.inf
        sr[:] = False
        sc[:] = False
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = True
            lowest = np.inf
            best = -1
            for j in range(nc):
                if sc[j]:
                    continue
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if best == -1 or shortest[j] < lowest or (
                        shortest[j] == lowest and row4col[j] == -1 and row4col[best] != -1):
                    lowest = shortest[j]
                    best = j
            min_val = lowest
            if not np.isfinite(min_val):
                return col4row, False
            sc[best] = True
            if row4col[best] == -1:
                sink = best
            else:
                i = row4col[best]
        u[cur] += min_val
        for r_ in range(nr):
            if sr[r_] and r_ != cur:
                u[r_] += min_val - shortest[col4row[r_]]
        for c_ in range(nc):
            if sc[c_]:
                v[c_] -= min_val - shortest[c_]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            nxt = col4row[i]
            col4row[i] = j
            j = nxt
            if i == cur:
                break
    return col4row, True


def linear_assignment_nb(cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    col4row, ok = _lsa_nb(cost)
    if not ok:
        raise ValueError("cost matrix admits no finite assignment")
    return col4row


def linear_assignment_np(cost):
    cost = np.asarray(cost, dtype=np.float64)
    nr, nc = cost.shape
    if nr == 0:
        return np.empty(0, dtype=np.int64)
    u = np.zeros(nr)
    v = np.zeros(nc)
    path = np.full(nc, -1, dtype=np.int64)
    col4row = np.full(nr, -1, dtype=np.int64)
    row4col = np.full(nc, -1, dtype=np.int64)
    for cur in range(nr):
        shortest = np.full(nc, np.inf)
        sr = np.zeros(nr, dtype=bool)
        sc = np.zeros(nc, dtype=bool)
        min_val = 0.0
        i = cur
        sink = -1
        while sink == -1:
            sr[i] = True
            free = ~sc
            r = min_val + cost[i] - u[i] - v
            upd = free & (r < shortest)
            path[upd] = i
            shortest[upd] = r[upd]
            cand = np.where(free, shortest, np.inf)
            free_idx = np.flatnonzero(free)
            lowest = cand[free_idx].min()
            ties = free_idx[cand[free_idx] == lowest]
            open_ties = ties[row4col[ties] == -1]
            best = open_ties[0] if open_ties.size else ties[0]
            min_val = lowest
            if not np.isfinite(min_val):
                raise ValueError("cost matrix admits no finite assignment")
            sc[best] = True
            if row4col[best] == -1:
                sink = best
            else:
                i = row4col[best]
        u[cur] += min_val
        others = np.flatnonzero(sr)
        others = others[others != cur]
        u[others] += min_val - shortest[col4row[others]]
        v[sc] -= min_val - shortest[sc]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur:
                break
    return col4row


if USE_NUMBA:
    pairwise_overlap = pairwise_overlap_nb
    greedy_nms = greedy_nms_nb
    linear_assignment = linear_assignment_nb
else:
    pairwise_overlap = pairwise_overlap_np
    greedy_nms = greedy_nms_np
    linear_assignment = linear_assignment_np
