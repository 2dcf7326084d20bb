"""Compiled per-pixel kernels behind the stage APIs.

Everything here is a plain function over numpy arrays so numba can compile
it once (disk-cached) and release the GIL; the wrapping modules own the
public types and contracts. All kernels are sequential and deterministic:
thread-level parallelism happens above, by row band or by region.
"""

from __future__ import annotations

import numpy as np
from numba import njit

JIT = dict(cache=True, nogil=True)

# accumulator column layout, shared with mser.DescriptorAccumulator
ACC_N = 0
ACC_S1 = 1
ACC_S2 = 2
ACC_M10 = 3
ACC_M01 = 4
ACC_M11 = 5
ACC_M20 = 6
ACC_M02 = 7
ACC_M30 = 8
ACC_M21 = 9
ACC_M12 = 10
ACC_M03 = 11
ACC_COLS = 12


# ---------------------------------------------------------------------------
# preprocessing


@njit(**JIT)
def undistort_kernel(src, coords, out, y0, y1):
    """Bilinear gather of src through per-pixel source coordinates.

    coords is float32 (h, w, 2); non-finite or out-of-source entries write 0.
    Rounds half up; exact integer coordinates degenerate to a single sample.
    Operates on output rows [y0, y1).
    """
    sh, sw = src.shape
    for y in range(y0, y1):
        for x in range(out.shape[1]):
            sx = np.float64(coords[y, x, 0])
            sy = np.float64(coords[y, x, 1])
            # NaN fails every comparison, so flagged entries fall through to 0
            if sx >= 0.0 and sx <= sw - 1 and sy >= 0.0 and sy <= sh - 1:
                ix = int(np.floor(sx))
                iy = int(np.floor(sy))
                fx = sx - ix
                fy = sy - iy
                ix1 = ix + 1 if ix + 1 < sw else ix
                iy1 = iy + 1 if iy + 1 < sh else iy
                v = (
                    (1.0 - fx) * (1.0 - fy) * src[iy, ix]
                    + fx * (1.0 - fy) * src[iy, ix1]
                    + (1.0 - fx) * fy * src[iy1, ix]
                    + fx * fy * src[iy1, ix1]
                )
                out[y, x] = np.uint8(int(v + 0.5))
            else:
                out[y, x] = 0


@njit(**JIT)
def normalize_kernel(src, imin, imax, out, y0, y1):
    """Min-max normalization to the full 8-bit range, integer-exact.

    out = clamp(floor((I - Imin) * 256 / (Imax - Imin)), 0, 255); pixels with
    Imax <= Imin carry no signal and produce 0. Operates on rows [y0, y1).
    """
    for y in range(y0, y1):
        for x in range(src.shape[1]):
            lo = np.int64(imin[y, x])
            hi = np.int64(imax[y, x])
            if hi <= lo:
                out[y, x] = 0
                continue
            v = np.int64(src[y, x]) - lo
            if v <= 0:
                out[y, x] = 0
                continue
            q = (v << 8) // (hi - lo)
            out[y, x] = np.uint8(255 if q > 255 else q)


# ---------------------------------------------------------------------------
# region-of-interest detection (sequential connected components)


@njit(**JIT)
def label_components(img, thresh):
    """One-pass row-by-row labeling with the 2x2 mask and 4-connectivity.

    Works on an internally padded label raster so the mask never needs a
    bounds check. Equivalent labels are unioned into the earliest-created
    root and per-root statistics (pixel count, bbox, brightest pixel) are
    merged along; no relabeling pass runs.

    Returns (labels, parent, count, bbox, bright_pos, bright_val, nlabels);
    labels is the raw (unresolved) raster, label 0 is background.
    """
    h, w = img.shape
    lab = np.zeros((h + 1, w + 2), dtype=np.int32)

    cap = h * w // 2 + 4
    parent = np.empty(cap, dtype=np.int32)
    count = np.zeros(cap, dtype=np.int64)
    bbox = np.empty((cap, 4), dtype=np.int32)
    bright_pos = np.empty(cap, dtype=np.int64)
    bright_val = np.full(cap, -1, dtype=np.int32)
    nlab = 1  # label 0 reserved for background

    for y in range(h):
        py = y + 1
        for x in range(w):
            px = x + 1
            v = img[y, x]
            if v < thresh:
                continue
            b = lab[py - 1, px]  # above
            c = lab[py, px - 1]  # left
            if b == 0 and c == 0:
                cur = nlab
                parent[cur] = cur
                bbox[cur, 0] = x
                bbox[cur, 1] = y
                bbox[cur, 2] = x
                bbox[cur, 3] = y
                nlab += 1
            elif b != 0 and c != 0:
                rb = b
                while parent[rb] != rb:
                    rb = parent[rb]
                rc = c
                while parent[rc] != rc:
                    rc = parent[rc]
                if rb != rc:
                    # earliest-created root absorbs the other
                    keep = rb if rb < rc else rc
                    drop = rc if rb < rc else rb
                    parent[drop] = keep
                    count[keep] += count[drop]
                    if bbox[drop, 0] < bbox[keep, 0]:
                        bbox[keep, 0] = bbox[drop, 0]
                    if bbox[drop, 1] < bbox[keep, 1]:
                        bbox[keep, 1] = bbox[drop, 1]
                    if bbox[drop, 2] > bbox[keep, 2]:
                        bbox[keep, 2] = bbox[drop, 2]
                    if bbox[drop, 3] > bbox[keep, 3]:
                        bbox[keep, 3] = bbox[drop, 3]
                    if bright_val[drop] > bright_val[keep]:
                        bright_val[keep] = bright_val[drop]
                        bright_pos[keep] = bright_pos[drop]
                    cur = keep
                else:
                    cur = rb
            elif b != 0:
                cur = b
                while parent[cur] != cur:
                    cur = parent[cur]
            else:
                cur = c
                while parent[cur] != cur:
                    cur = parent[cur]

            lab[py, px] = cur
            count[cur] += 1
            if x < bbox[cur, 0]:
                bbox[cur, 0] = x
            if y < bbox[cur, 1]:
                bbox[cur, 1] = y
            if x > bbox[cur, 2]:
                bbox[cur, 2] = x
            if y > bbox[cur, 3]:
                bbox[cur, 3] = y
            if v > bright_val[cur]:
                bright_val[cur] = v
                bright_pos[cur] = np.int64(y) * w + x

    return (
        lab[1 : h + 1, 1 : w + 1],
        parent[:nlab],
        count[:nlab],
        bbox[:nlab],
        bright_pos[:nlab],
        bright_val[:nlab],
        nlab,
    )


@njit(**JIT)
def resolve_labels(labels, parent):
    """Map every raster cell to its root label."""
    table = np.empty(parent.shape[0], dtype=np.int32)
    table[0] = 0
    for i in range(1, parent.shape[0]):
        r = i
        while parent[r] != r:
            r = parent[r]
        table[i] = r
    out = np.empty_like(labels)
    for y in range(labels.shape[0]):
        for x in range(labels.shape[1]):
            out[y, x] = table[labels[y, x]]
    return out


@njit(**JIT)
def roi_histograms(img, resolved, index_of, nkept):
    """256-bin intensity histogram per kept root (index_of maps root -> row)."""
    hist = np.zeros((nkept, 256), dtype=np.int64)
    for y in range(img.shape[0]):
        for x in range(img.shape[1]):
            r = resolved[y, x]
            if r != 0:
                k = index_of[r]
                if k >= 0:
                    hist[k, img[y, x]] += 1
    return hist


# ---------------------------------------------------------------------------
# component-tree flood


@njit(inline="always")
def _acc_pixel(acc, row, lx, ly, inten):
    x = np.int64(lx)
    y = np.int64(ly)
    acc[row, ACC_N] += 1
    acc[row, ACC_S1] += inten
    acc[row, ACC_S2] += inten * inten
    acc[row, ACC_M10] += x
    acc[row, ACC_M01] += y
    acc[row, ACC_M11] += x * y
    acc[row, ACC_M20] += x * x
    acc[row, ACC_M02] += y * y
    acc[row, ACC_M30] += x * x * x
    acc[row, ACC_M21] += x * x * y
    acc[row, ACC_M12] += x * y * y
    acc[row, ACC_M03] += y * y * y


@njit(**JIT)
def flood_tree(gray, resolved, target, x0, y0, x1, y1, seed_x, seed_y):
    """Linear-time flood over inverted intensities, emitting every extremal region.

    Restricted to raster cells whose root label equals `target`; other pixels
    are inaccessible. One node is emitted per gray level at which a connected
    component's pixel set changed (plateau-collapsed), children before
    parents, the whole-region root last.

    Returns (count, level, size, seed, acc, bbox, parent) where level is the
    inverted gray level, seed a bbox-local raveled pixel index, moments are
    relative to the bbox origin, and bbox columns are global.
    """
    bw = x1 - x0 + 1
    bh = y1 - y0 + 1
    npx = bw * bh

    visited = np.zeros(npx, dtype=np.uint8)
    nextn = np.zeros(npx, dtype=np.uint8)

    qhead = np.full(256, -1, dtype=np.int32)
    qtail = np.full(256, -1, dtype=np.int32)
    qcap = npx * 5 + 8
    qnext = np.empty(qcap, dtype=np.int32)
    qpix = np.empty(qcap, dtype=np.int32)
    qn = 0

    # component stack: one slot per gray level plus slack
    slevel = np.empty(258, dtype=np.int32)
    sseed = np.empty(258, dtype=np.int32)
    sacc = np.zeros((258, ACC_COLS), dtype=np.int64)
    sbbox = np.empty((258, 4), dtype=np.int32)
    sp_head = np.full(258, -1, dtype=np.int32)
    sp_tail = np.full(258, -1, dtype=np.int32)
    sp = 0

    cap = 2 * npx + 4
    n_level = np.empty(cap, dtype=np.int32)
    n_size = np.empty(cap, dtype=np.int64)
    n_seed = np.empty(cap, dtype=np.int32)
    n_acc = np.empty((cap, ACC_COLS), dtype=np.int64)
    n_bbox = np.empty((cap, 4), dtype=np.int32)
    n_parent = np.full(cap, -1, dtype=np.int32)
    n_next = np.full(cap, -1, dtype=np.int32)  # sibling link while pending
    nn = 0

    # push the initial component for the seed pixel
    cur = (seed_y - y0) * bw + (seed_x - x0)
    visited[cur] = 1
    curlevel = 255 - np.int32(gray[seed_y, seed_x])
    slevel[sp] = curlevel
    sseed[sp] = cur
    sbbox[sp, 0] = 1 << 30
    sbbox[sp, 1] = 1 << 30
    sbbox[sp, 2] = -1
    sbbox[sp, 3] = -1
    sp = 1

    while True:
        # examine remaining neighbors of the current pixel (up, left, right, down)
        descended = False
        while nextn[cur] < 4:
            k = nextn[cur]
            nextn[cur] += 1
            ly = cur // bw
            lx = cur - ly * bw
            if k == 0:
                nx, ny = lx, ly - 1
            elif k == 1:
                nx, ny = lx - 1, ly
            elif k == 2:
                nx, ny = lx + 1, ly
            else:
                nx, ny = lx, ly + 1
            if nx < 0 or ny < 0 or nx >= bw or ny >= bh:
                continue
            if resolved[y0 + ny, x0 + nx] != target:
                continue
            nb = ny * bw + nx
            if visited[nb]:
                continue
            visited[nb] = 1
            glev = 255 - np.int32(gray[y0 + ny, x0 + nx])
            if glev < curlevel:
                # boundary keeps the current pixel; descend into the sink
                qpix[qn] = cur
                qnext[qn] = -1
                if qtail[curlevel] == -1:
                    qhead[curlevel] = qn
                else:
                    qnext[qtail[curlevel]] = qn
                qtail[curlevel] = qn
                qn += 1
                slevel[sp] = glev
                sseed[sp] = nb
                for j in range(ACC_COLS):
                    sacc[sp, j] = 0
                sbbox[sp, 0] = 1 << 30
                sbbox[sp, 1] = 1 << 30
                sbbox[sp, 2] = -1
                sbbox[sp, 3] = -1
                sp_head[sp] = -1
                sp_tail[sp] = -1
                sp += 1
                cur = nb
                curlevel = glev
                descended = True
                break
            else:
                qpix[qn] = nb
                qnext[qn] = -1
                if qtail[glev] == -1:
                    qhead[glev] = qn
                else:
                    qnext[qtail[glev]] = qn
                qtail[glev] = qn
                qn += 1
        if descended:
            continue

        # all neighbors handled: the pixel joins the current component
        ly = cur // bw
        lx = cur - ly * bw
        top = sp - 1
        _acc_pixel(sacc, top, lx, ly, np.int64(gray[y0 + ly, x0 + lx]))
        gx = x0 + lx
        gy = y0 + ly
        if gx < sbbox[top, 0]:
            sbbox[top, 0] = gx
        if gy < sbbox[top, 1]:
            sbbox[top, 1] = gy
        if gx > sbbox[top, 2]:
            sbbox[top, 2] = gx
        if gy > sbbox[top, 3]:
            sbbox[top, 3] = gy

        # fetch the lowest boundary pixel (no bucket below curlevel can be filled)
        lvl = curlevel
        while lvl < 256 and qhead[lvl] == -1:
            lvl += 1
        if lvl == 256:
            break
        entry = qhead[lvl]
        qhead[lvl] = qnext[entry]
        if qhead[lvl] == -1:
            qtail[lvl] = -1
        pix = qpix[entry]

        if lvl > curlevel:
            # water rose: close components until the stack catches up
            while lvl > slevel[sp - 1]:
                top = sp - 1
                nid = nn
                n_level[nid] = slevel[top]
                n_size[nid] = sacc[top, ACC_N]
                n_seed[nid] = sseed[top]
                for j in range(ACC_COLS):
                    n_acc[nid, j] = sacc[top, j]
                for j in range(4):
                    n_bbox[nid, j] = sbbox[top, j]
                ch = sp_head[top]
                while ch != -1:
                    n_parent[ch] = nid
                    ch = n_next[ch]
                n_next[nid] = -1
                sp_head[top] = nid
                sp_tail[top] = nid
                nn += 1
                if sp >= 2 and lvl >= slevel[sp - 2]:
                    # merge the closed component into the one below
                    below = sp - 2
                    for j in range(ACC_COLS):
                        sacc[below, j] += sacc[top, j]
                    if sbbox[top, 0] < sbbox[below, 0]:
                        sbbox[below, 0] = sbbox[top, 0]
                    if sbbox[top, 1] < sbbox[below, 1]:
                        sbbox[below, 1] = sbbox[top, 1]
                    if sbbox[top, 2] > sbbox[below, 2]:
                        sbbox[below, 2] = sbbox[top, 2]
                    if sbbox[top, 3] > sbbox[below, 3]:
                        sbbox[below, 3] = sbbox[top, 3]
                    if sp_head[top] != -1:
                        if sp_head[below] == -1:
                            sp_head[below] = sp_head[top]
                        else:
                            n_next[sp_tail[below]] = sp_head[top]
                        sp_tail[below] = sp_tail[top]
                    sp -= 1
                else:
                    slevel[top] = lvl
            curlevel = lvl
        cur = pix

    # queue drained: close out the stack (normally a single root remains)
    while sp > 0:
        top = sp - 1
        if sacc[top, ACC_N] > 0:
            nid = nn
            n_level[nid] = slevel[top]
            n_size[nid] = sacc[top, ACC_N]
            n_seed[nid] = sseed[top]
            for j in range(ACC_COLS):
                n_acc[nid, j] = sacc[top, j]
            for j in range(4):
                n_bbox[nid, j] = sbbox[top, j]
            ch = sp_head[top]
            while ch != -1:
                n_parent[ch] = nid
                ch = n_next[ch]
            n_next[nid] = -1
            sp_head[top] = nid
            sp_tail[top] = nid
            nn += 1
        if sp >= 2:
            below = sp - 2
            for j in range(ACC_COLS):
                sacc[below, j] += sacc[top, j]
            if sbbox[top, 0] < sbbox[below, 0]:
                sbbox[below, 0] = sbbox[top, 0]
            if sbbox[top, 1] < sbbox[below, 1]:
                sbbox[below, 1] = sbbox[top, 1]
            if sbbox[top, 2] > sbbox[below, 2]:
                sbbox[below, 2] = sbbox[top, 2]
            if sbbox[top, 3] > sbbox[below, 3]:
                sbbox[below, 3] = sbbox[top, 3]
            if sp_head[top] != -1:
                if sp_head[below] == -1:
                    sp_head[below] = sp_head[top]
                else:
                    n_next[sp_tail[below]] = sp_head[top]
                sp_tail[below] = sp_tail[top]
        sp -= 1

    return (
        nn,
        n_level[:nn].copy(),
        n_size[:nn].copy(),
        n_seed[:nn].copy(),
        n_acc[:nn].copy(),
        n_bbox[:nn].copy(),
        n_parent[:nn].copy(),
    )


# ---------------------------------------------------------------------------
# per-node shape helpers and batched candidate features


@njit(inline="always")
def _ellipse_axes(n, m10, m01, m11, m20, m02):
    """Semi-major/semi-minor axes of the second-moment bounding ellipse."""
    fn = np.float64(n)
    xc = m10 / fn
    yc = m01 / fn
    a = m20 / fn - xc * xc
    b = 2.0 * (m11 / fn - xc * yc)
    c = m02 / fn - yc * yc
    root = np.sqrt(b * b + (a - c) * (a - c))
    inner = a + c - root
    if inner < 0.0:
        inner = 0.0
    h = np.sqrt(2.0 * inner)
    w = np.sqrt(2.0 * (a + c + root))
    return w, h


@njit(**JIT)
def subtree_aggregates(level, parent, acc):
    """Bottom-up per-node aggregates; node ids are child-before-parent.

    Returns (nchildren, leaf_count, min_level_sub, phi1) where min_level_sub
    is the smallest inverted level in the subtree (the brightest gray) and
    phi1 the first Hu descriptor of the node itself.
    """
    m = level.shape[0]
    nchildren = np.zeros(m, dtype=np.int32)
    for i in range(m):
        p = parent[i]
        if p >= 0:
            nchildren[p] += 1
    leaf_count = np.zeros(m, dtype=np.int32)
    min_level_sub = level.copy()
    phi1 = np.zeros(m, dtype=np.float64)
    for i in range(m):
        if nchildren[i] == 0:
            leaf_count[i] = 1
        p = parent[i]
        if p >= 0:
            leaf_count[p] += leaf_count[i]
            if min_level_sub[i] < min_level_sub[p]:
                min_level_sub[p] = min_level_sub[i]
        n = np.float64(acc[i, ACC_N])
        mu20 = acc[i, ACC_M20] - acc[i, ACC_M10] * (acc[i, ACC_M10] / n)
        mu02 = acc[i, ACC_M02] - acc[i, ACC_M01] * (acc[i, ACC_M01] / n)
        phi1[i] = (mu20 + mu02) / (n * n)
    return nchildren, leaf_count, min_level_sub, phi1


@njit(**JIT)
def candidate_features(
    level,
    size,
    parent,
    acc,
    leaf_ids,
    leaf_count,
    min_level_sub,
    phi1,
    img,
    ox,
    oy,
    max_finger_size,
    dark_radius,
    dark_fraction,
    weights,
):
    """8-slot feature vector, finger node and score for every tree leaf.

    Slot order: candidate ellipse area (w*h), finger ellipse area, chain depth
    below the finger, max relative per-link growth, finger-vs-candidate
    growth, intensity range ratio, max phi1 below the finger, dark-pixel
    count near the candidate centroid (Chebyshev window).
    """
    nl = leaf_ids.shape[0]
    feats = np.empty((nl, 8), dtype=np.float64)
    fingers = np.empty(nl, dtype=np.int32)
    scores = np.empty(nl, dtype=np.float64)
    positions = np.empty((nl, 2), dtype=np.float64)
    ih, iw = img.shape

    for q in range(nl):
        leaf = leaf_ids[q]

        # finger region: largest sibling-free ancestor within the size cap
        finger = leaf
        p = parent[finger]
        while p >= 0 and size[p] <= max_finger_size and leaf_count[p] == 1:
            finger = p
            p = parent[finger]
        fingers[q] = finger

        w_l, h_l = _ellipse_axes(
            acc[leaf, ACC_N],
            np.float64(acc[leaf, ACC_M10]),
            np.float64(acc[leaf, ACC_M01]),
            np.float64(acc[leaf, ACC_M11]),
            np.float64(acc[leaf, ACC_M20]),
            np.float64(acc[leaf, ACC_M02]),
        )
        w_f, h_f = _ellipse_axes(
            acc[finger, ACC_N],
            np.float64(acc[finger, ACC_M10]),
            np.float64(acc[finger, ACC_M01]),
            np.float64(acc[finger, ACC_M11]),
            np.float64(acc[finger, ACC_M20]),
            np.float64(acc[finger, ACC_M02]),
        )

        depth = 0
        max_growth = 0.0
        max_phi1 = phi1[leaf]
        node = leaf
        while node != finger:
            p = parent[node]
            depth += 1
            g = np.float64(size[p] - size[node]) / np.float64(size[node])
            if g > max_growth:
                max_growth = g
            if phi1[node] > max_phi1:
                max_phi1 = phi1[node]
            node = p

        growth_fc = np.float64(size[finger] - size[leaf]) / np.float64(size[leaf])
        # span in gray levels covered by a region's subtree, inclusive
        span_l = np.float64(level[leaf] - min_level_sub[leaf] + 1)
        span_f = np.float64(level[finger] - min_level_sub[finger] + 1)
        range_ratio = span_l / span_f

        n_l = np.float64(acc[leaf, ACC_N])
        cx = acc[leaf, ACC_M10] / n_l + ox
        cy = acc[leaf, ACC_M01] / n_l + oy
        positions[q, 0] = cx
        positions[q, 1] = cy
        mean_l = acc[leaf, ACC_S1] / n_l
        dark_lim = dark_fraction * mean_l
        icx = int(cx + 0.5)
        icy = int(cy + 0.5)
        xa = icx - dark_radius
        xb = icx + dark_radius
        ya = icy - dark_radius
        yb = icy + dark_radius
        if xa < 0:
            xa = 0
        if ya < 0:
            ya = 0
        if xb > iw - 1:
            xb = iw - 1
        if yb > ih - 1:
            yb = ih - 1
        dark = 0
        for yy in range(ya, yb + 1):
            for xx in range(xa, xb + 1):
                if np.float64(img[yy, xx]) < dark_lim:
                    dark += 1

        feats[q, 0] = w_l * h_l
        feats[q, 1] = w_f * h_f
        feats[q, 2] = np.float64(depth)
        feats[q, 3] = max_growth
        feats[q, 4] = growth_fc
        feats[q, 5] = range_ratio
        feats[q, 6] = max_phi1
        feats[q, 7] = np.float64(dark)

        s = 0.0
        for j in range(8):
            s += weights[j] * feats[q, j]
        scores[q] = s

    return feats, fingers, scores, positions
