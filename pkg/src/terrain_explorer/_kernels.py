"""Compiled inner loops shared by the simulator modules.

Everything here works on flat numpy arrays so the public modules can keep
their own types. Float arithmetic is plain IEEE (no fastmath) so scalar
reference implementations elsewhere reproduce these results bit for bit.
"""

import math

import numpy as np
from numba import njit

CRATER = 0
ROCK = 1
RIDGE = 2

UNKNOWN = 0
FREE = 1
OCCUPIED = 2


# --------------------------------------------------------------------------
# heightfield
# --------------------------------------------------------------------------


@njit(cache=True)
def _feature_height(f, x, y):
    kind = int(f[0])
    if kind == CRATER:
        dx = x - f[1]
        dy = y - f[2]
        rho2 = dx * dx + dy * dy
        r = f[4]
        if rho2 >= r * r:
            return 0.0, 0.0, 0.0
        rho = math.sqrt(rho2)
        u = rho / r
        w = 1.0 - u * u
        s = math.sin(math.pi * u * u)
        h = -f[5] * w * w + f[6] * s * s
        if rho == 0.0:
            return h, 0.0, 0.0
        dhdu = 4.0 * f[5] * u * w + 2.0 * math.pi * u * f[6] * math.sin(2.0 * math.pi * u * u)
        g = dhdu / (r * rho)
        return h, g * dx, g * dy
    if kind == ROCK:
        dx = x - f[1]
        dy = y - f[2]
        rho2 = dx * dx + dy * dy
        r = f[4]
        if rho2 >= r * r:
            return 0.0, 0.0, 0.0
        u2 = rho2 / (r * r)
        w = 1.0 - u2
        h = f[5] * w * w
        g = -4.0 * f[5] * w / (r * r)
        return h, g * dx, g * dy
    # ridge: tent profile around segment (f[1], f[2]) -> (f[4], f[5])
    ax = f[1]
    ay = f[2]
    bx = f[4]
    by = f[5]
    ex = bx - ax
    ey = by - ay
    L2 = ex * ex + ey * ey
    t = 0.0
    if L2 > 0.0:
        t = ((x - ax) * ex + (y - ay) * ey) / L2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    px = x - (ax + t * ex)
    py = y - (ay + t * ey)
    dist = math.sqrt(px * px + py * py)
    h = f[6] - dist * f[7]
    if h <= 0.0:
        return 0.0, 0.0, 0.0
    if dist == 0.0:
        return h, 0.0, 0.0
    return h, -f[7] * px / dist, -f[7] * py / dist


@njit(cache=True)
def height_grad(x, y, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx):
    h = tilt[0] * x + tilt[1] * y
    gx = tilt[0]
    gy = tilt[1]
    for k in range(waves.shape[0]):
        a = waves[k, 0]
        kx = waves[k, 1]
        ky = waves[k, 2]
        arg = kx * x + ky * y + waves[k, 3]
        h += a * math.sin(arg)
        c = a * math.cos(arg)
        gx += c * kx
        gy += c * ky
    tx = int(math.floor(x / tile_size))
    ty = int(math.floor(y / tile_size))
    if tx < 0:
        tx = 0
    elif tx >= ntx:
        tx = ntx - 1
    if ty < 0:
        ty = 0
    elif ty >= nty:
        ty = nty - 1
    tile = tx * nty + ty
    for p in range(tile_ptr[tile], tile_ptr[tile + 1]):
        fh, fgx, fgy = _feature_height(feats[tile_idx[p]], x, y)
        h += fh
        gx += fgx
        gy += fgy
    return h, gx, gy


@njit(cache=True)
def height_at(x, y, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx):
    """Height only; same arithmetic as height_grad without the derivatives."""
    h = tilt[0] * x + tilt[1] * y
    for k in range(waves.shape[0]):
        h += waves[k, 0] * math.sin(waves[k, 1] * x + waves[k, 2] * y + waves[k, 3])
    tx = int(math.floor(x / tile_size))
    ty = int(math.floor(y / tile_size))
    if tx < 0:
        tx = 0
    elif tx >= ntx:
        tx = ntx - 1
    if ty < 0:
        ty = 0
    elif ty >= nty:
        ty = nty - 1
    tile = tx * nty + ty
    for p in range(tile_ptr[tile], tile_ptr[tile + 1]):
        fh, _, _ = _feature_height(feats[tile_idx[p]], x, y)
        h += fh
    return h


@njit(cache=True)
def heights(xs, ys, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx):
    n = xs.shape[0]
    out = np.empty(n)
    gxo = np.empty(n)
    gyo = np.empty(n)
    for k in range(n):
        h, gx, gy = height_grad(xs[k], ys[k], waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx)
        out[k] = h
        gxo[k] = gx
        gyo[k] = gy
    return out, gxo, gyo


@njit(cache=True)
def _refine(ox, oy, oz, dx, dy, dz, lo, hi, flo, fhi, tol,
            waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx):
    """Illinois regula falsi on a bracket with flo > 0 >= fhi."""
    mid = hi
    side = 0
    for _ in range(100):
        if flo - fhi > 0.0:
            mid = (lo * (-fhi) + hi * flo) / (flo - fhi)
        else:
            mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            mid = 0.5 * (lo + hi)
        fm = oz + mid * dz - height_at(ox + mid * dx, oy + mid * dy, waves, tilt, feats,
                                       tile_size, ntx, nty, tile_ptr, tile_idx)
        if abs(fm) <= tol or hi - lo <= 1e-12:
            break
        if fm > 0.0:
            lo = mid
            flo = fm
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi = mid
            fhi = fm
            if side == -1:
                flo *= 0.5
            side = -1
    return mid


@njit(cache=True)
def raymarch(origins, dirs, max_range, step, tol, bound, slope_bound, bsize, ext_x, ext_y,
             waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx):
    """Ray parameter of the first heightfield crossing per ray, NaN if none.

    March in steps of at least `step`, then refine the bracket by regula falsi
    until the height residual is below tol. Stretches above the height bound
    of the current bound cell are crossed in one jump, and below it the step
    grows to whatever the cell's slope bound proves cannot reach the ground.
    """
    n = origins.shape[0]
    out = np.full(n, np.nan)
    hmax_all = bound.max()
    nbx = bound.shape[0]
    nby = bound.shape[1]
    for k in range(n):
        ox = origins[k, 0]
        oy = origins[k, 1]
        oz = origins[k, 2]
        dx = dirs[k, 0]
        dy = dirs[k, 1]
        dz = dirs[k, 2]
        if ox < 0.0 or oy < 0.0 or ox > ext_x or oy > ext_y:
            continue
        h0 = height_at(ox, oy, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx)
        if oz - h0 <= 0.0:
            continue
        horiz = math.sqrt(dx * dx + dy * dy)
        dive = -dz if dz < 0.0 else 0.0
        t_prev = 0.0
        f_prev = oz - h0
        t = 0.0
        while True:
            x = ox + t * dx
            y = oy + t * dy
            z = oz + t * dz
            if x < 0.0 or y < 0.0 or x > ext_x or y > ext_y:
                break
            if dz >= 0.0 and z > hmax_all:
                break
            # on a cell boundary, take the cell the ray is entering
            tx = int(math.floor(x / bsize))
            ty = int(math.floor(y / bsize))
            if dx < 0.0 and x == tx * bsize:
                tx -= 1
            if dy < 0.0 and y == ty * bsize:
                ty -= 1
            tx = min(max(tx, 0), nbx - 1)
            ty = min(max(ty, 0), nby - 1)
            b = bound[tx, ty]
            t_exit = np.inf
            if dx > 0.0:
                t_exit = min(t_exit, ((tx + 1) * bsize - ox) / dx)
            elif dx < 0.0:
                t_exit = min(t_exit, (tx * bsize - ox) / dx)
            if dy > 0.0:
                t_exit = min(t_exit, ((ty + 1) * bsize - oy) / dy)
            elif dy < 0.0:
                t_exit = min(t_exit, (ty * bsize - oy) / dy)
            if z > b:
                # above the bound: leave the cell or drop to the bound
                t_next = t_exit
                if dz < 0.0:
                    t_next = min(t_next, t + (z - b) / (-dz))
                t_next = max(t_next, t) + 1e-9
                if t_next >= max_range:
                    if t >= max_range:
                        break
                    t_next = max_range
                # the jump only covers ground-free space; f_prev < 0 marks
                # "above ground, not evaluated"
                t_prev = t
                f_prev = -1.0
                t = t_next
                continue
            f = z - height_at(x, y, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx)
            if f <= 0.0:
                if f_prev < 0.0:
                    # first evaluation after a jump; the previous point was
                    # above the bound, re-evaluate it to form a bracket
                    f_prev = oz + t_prev * dz - height_at(ox + t_prev * dx, oy + t_prev * dy, waves,
                                                          tilt, feats, tile_size, ntx, nty, tile_ptr,
                                                          tile_idx)
                if f_prev <= 0.0:
                    out[k] = t_prev
                else:
                    out[k] = _refine(ox, oy, oz, dx, dy, dz, t_prev, t, f_prev, f, tol,
                                     waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx)
                break
            if t >= max_range:
                break
            safe = f / (slope_bound[tx, ty] * horiz + dive + 1e-12)
            adv = step
            if safe > adv:
                adv = min(safe, max(t_exit - t, step))
            t_prev = t
            f_prev = f
            t = min(t + adv, max_range)
    return out


@njit(cache=True)
def footprint_step(x, y, radius, n_rings, n_spokes, waves, tilt, feats,
                   tile_size, ntx, nty, tile_ptr, tile_idx):
    """Max minus min ground height over a polar sample of the footprint disc."""
    h0 = height_at(x, y, waves, tilt, feats, tile_size, ntx, nty, tile_ptr, tile_idx)
    lo = h0
    hi = h0
    for a in range(1, n_rings + 1):
        rr = radius * a / n_rings
        for b in range(n_spokes):
            ang = 2.0 * math.pi * b / n_spokes
            h = height_at(x + rr * math.cos(ang), y + rr * math.sin(ang), waves, tilt, feats,
                              tile_size, ntx, nty, tile_ptr, tile_idx)
            if h < lo:
                lo = h
            if h > hi:
                hi = h
    return hi - lo


# --------------------------------------------------------------------------
# elevation filter
# --------------------------------------------------------------------------


@njit(cache=True)
def kalman_ingest(gi, gj, z, var, i0, j0, n_win, elev, varm, count, init):
    """Sequential scalar Kalman updates in arrival order.

    gi, gj are store indices; only cells inside the window
    [i0, i0+n_win) x [j0, j0+n_win) are updated. Returns the drop count.
    """
    dropped = 0
    for k in range(gi.shape[0]):
        i = gi[k]
        j = gj[k]
        if i < i0 or j < j0 or i >= i0 + n_win or j >= j0 + n_win:
            dropped += 1
            continue
        if i < 0 or j < 0 or i >= elev.shape[0] or j >= elev.shape[1]:
            dropped += 1
            continue
        if not init[i, j]:
            elev[i, j] = z[k]
            varm[i, j] = var[k]
            init[i, j] = True
            count[i, j] = 1
            continue
        p = varm[i, j]
        m = var[k]
        s = p + m
        if s == 0.0:
            gain = 0.0
        else:
            gain = p / s
        h = elev[i, j]
        elev[i, j] = h + gain * (z[k] - h)
        varm[i, j] = (1.0 - gain) * p
        count[i, j] += 1
    return dropped


# --------------------------------------------------------------------------
# exploration voxels
# --------------------------------------------------------------------------


@njit(cache=True)
def _voxel_of(x, y, z, origin, vs, shape):
    i = int(math.floor((x - origin[0]) / vs))
    j = int(math.floor((y - origin[1]) / vs))
    k = int(math.floor((z - origin[2]) / vs))
    if i < 0 or j < 0 or k < 0 or i >= shape[0] or j >= shape[1] or k >= shape[2]:
        return -1, -1, -1
    return i, j, k


@njit(cache=True)
def integrate_rays(grid, origin, vs, start, ends, hit):
    """Mark voxels along start->end FREE and hit endpoints OCCUPIED.

    Returns the number of voxels that left the UNKNOWN state.
    """
    shape = np.array(grid.shape)
    newly = 0
    sx = start[0]
    sy = start[1]
    sz = start[2]
    for r in range(ends.shape[0]):
        ex = ends[r, 0]
        ey = ends[r, 1]
        ez = ends[r, 2]
        dx = ex - sx
        dy = ey - sy
        dz = ez - sz
        length = math.sqrt(dx * dx + dy * dy + dz * dz)
        if length == 0.0:
            continue
        n = int(length / (0.5 * vs)) + 1
        for s in range(n):
            f = s / n
            i, j, k = _voxel_of(sx + f * dx, sy + f * dy, sz + f * dz, origin, vs, shape)
            if i < 0:
                continue
            if grid[i, j, k] == UNKNOWN:
                grid[i, j, k] = FREE
                newly += 1
        if hit[r]:
            i, j, k = _voxel_of(ex, ey, ez, origin, vs, shape)
            if i >= 0:
                if grid[i, j, k] == UNKNOWN:
                    newly += 1
                grid[i, j, k] = OCCUPIED
    return newly


@njit(cache=True)
def segment_clear(grid, origin, vs, p, q, ti, tj, tk):
    """Amanatides-Woo walk from p to q; False if an OCCUPIED voxel other than
    the target voxel (ti, tj, tk) or the start voxel lies on the way."""
    shape = grid.shape
    i = int(math.floor((p[0] - origin[0]) / vs))
    j = int(math.floor((p[1] - origin[1]) / vs))
    k = int(math.floor((p[2] - origin[2]) / vs))
    d0 = q[0] - p[0]
    d1 = q[1] - p[1]
    d2 = q[2] - p[2]
    inf = np.inf
    si = 1 if d0 > 0 else -1
    sj = 1 if d1 > 0 else -1
    sk = 1 if d2 > 0 else -1
    if d0 != 0.0:
        nb = origin[0] + (i + (1 if si > 0 else 0)) * vs
        tmi = (nb - p[0]) / d0
        tdi = vs / abs(d0)
    else:
        tmi = inf
        tdi = inf
    if d1 != 0.0:
        nb = origin[1] + (j + (1 if sj > 0 else 0)) * vs
        tmj = (nb - p[1]) / d1
        tdj = vs / abs(d1)
    else:
        tmj = inf
        tdj = inf
    if d2 != 0.0:
        nb = origin[2] + (k + (1 if sk > 0 else 0)) * vs
        tmk = (nb - p[2]) / d2
        tdk = vs / abs(d2)
    else:
        tmk = inf
        tdk = inf
    while True:
        if i == ti and j == tj and k == tk:
            return True
        if tmi < tmj and tmi < tmk:
            if tmi > 1.0:
                return True
            i += si
            tmi += tdi
        elif tmj < tmk:
            if tmj > 1.0:
                return True
            j += sj
            tmj += tdj
        else:
            if tmk > 1.0:
                return True
            k += sk
            tmk += tdk
        if i < 0 or j < 0 or k < 0 or i >= shape[0] or j >= shape[1] or k >= shape[2]:
            return True
        if i == ti and j == tj and k == tk:
            return True
        if grid[i, j, k] == OCCUPIED:
            return False


@njit(cache=True)
def visible_unknown(grid, origin, vs, view, max_range, tan_fov):
    """Count UNKNOWN voxels whose centres lie within range and the vertical
    field of view of `view` and are not hidden behind an OCCUPIED voxel."""
    nx, ny, nz = grid.shape
    r2 = max_range * max_range
    i_lo = max(0, int(math.floor((view[0] - max_range - origin[0]) / vs)))
    i_hi = min(nx - 1, int(math.floor((view[0] + max_range - origin[0]) / vs)))
    j_lo = max(0, int(math.floor((view[1] - max_range - origin[1]) / vs)))
    j_hi = min(ny - 1, int(math.floor((view[1] + max_range - origin[1]) / vs)))
    k_lo = max(0, int(math.floor((view[2] - max_range - origin[2]) / vs)))
    k_hi = min(nz - 1, int(math.floor((view[2] + max_range - origin[2]) / vs)))
    q = np.empty(3)
    count = 0
    for i in range(i_lo, i_hi + 1):
        cx = origin[0] + (i + 0.5) * vs
        ddx = cx - view[0]
        for j in range(j_lo, j_hi + 1):
            cy = origin[1] + (j + 0.5) * vs
            ddy = cy - view[1]
            hd2 = ddx * ddx + ddy * ddy
            if hd2 > r2:
                continue
            hd = math.sqrt(hd2)
            for k in range(k_lo, k_hi + 1):
                if grid[i, j, k] != UNKNOWN:
                    continue
                cz = origin[2] + (k + 0.5) * vs
                ddz = cz - view[2]
                if hd2 + ddz * ddz > r2:
                    continue
                if abs(ddz) > tan_fov * hd:
                    continue
                q[0] = cx
                q[1] = cy
                q[2] = cz
                if segment_clear(grid, origin, vs, view, q, i, j, k):
                    count += 1
    return count


# --------------------------------------------------------------------------
# local graph
# --------------------------------------------------------------------------


@njit(cache=True)
def point_safe(x, y, safe, i0, j0, res):
    a = int(math.floor(x / res)) - i0
    b = int(math.floor(y / res)) - j0
    if a < 0 or b < 0 or a >= safe.shape[0] or b >= safe.shape[1]:
        return False
    return safe[a, b]


@njit(cache=True)
def corridor_safe(x0, y0, x1, y1, safe, i0, j0, res, check_step, ex=0.0, ey=0.0, er=-1.0):
    """Footprint check at points spaced at most check_step apart along the
    segment, both ends included. Points within er of (ex, ey) are exempt."""
    length = math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)
    n = int(math.ceil(length / check_step))
    if n < 1:
        n = 1
    for k in range(n + 1):
        f = k / n
        px = x0 + f * (x1 - x0)
        py = y0 + f * (y1 - y0)
        if er >= 0.0 and (px - ex) ** 2 + (py - ey) ** 2 <= er * er:
            continue
        if not point_safe(px, py, safe, i0, j0, res):
            return False
    return True


@njit(cache=True)
def build_graph(root, candidates, safe, i0, j0, res, check_step, steer, radius, budget,
                max_rejections, exempt):
    """RRG growth from pre-drawn candidate positions, consumed in order.

    Edge checks skip points within `exempt` of the root, which lets a robot
    whose own footprint is no longer clear drive away from it.

    Returns (vertices (V, 2), parent index per vertex, edges (E, 2), status)
    where status is 0 on reaching the budget, 1 if the rejection budget ran
    out and 2 if the candidate pool ran dry.
    """
    verts = np.empty((budget + 1, 2))
    parent = np.full(budget + 1, -1, dtype=np.int64)
    edges = np.empty((max(1, (budget + 1) * budget // 2), 2), dtype=np.int64)
    verts[0, 0] = root[0]
    verts[0, 1] = root[1]
    nv = 1
    ne = 0
    rejections = 0
    status = 2
    if budget == 0:
        return verts[:1], parent[:1], edges[:0], 0
    for c in range(candidates.shape[0]):
        cx = candidates[c, 0]
        cy = candidates[c, 1]
        if not point_safe(cx, cy, safe, i0, j0, res):
            rejections += 1
            if rejections >= max_rejections:
                status = 1
                break
            continue
        rejections = 0
        best = -1
        bd = np.inf
        for v in range(nv):
            d = (verts[v, 0] - cx) ** 2 + (verts[v, 1] - cy) ** 2
            if d < bd:
                bd = d
                best = v
        bd = math.sqrt(bd)
        if bd < 1e-6:
            continue
        nx = cx
        ny = cy
        if bd > steer:
            f = steer / bd
            nx = verts[best, 0] + f * (cx - verts[best, 0])
            ny = verts[best, 1] + f * (cy - verts[best, 1])
            if not point_safe(nx, ny, safe, i0, j0, res):
                continue
        if not corridor_safe(verts[best, 0], verts[best, 1], nx, ny, safe, i0, j0, res, check_step,
                             root[0], root[1], exempt):
            continue
        new = nv
        verts[new, 0] = nx
        verts[new, 1] = ny
        parent[new] = best
        nv += 1
        edges[ne, 0] = best
        edges[ne, 1] = new
        ne += 1
        for v in range(new):
            if v == best:
                continue
            d = math.sqrt((verts[v, 0] - nx) ** 2 + (verts[v, 1] - ny) ** 2)
            if d <= radius and d > 1e-9:
                if corridor_safe(verts[v, 0], verts[v, 1], nx, ny, safe, i0, j0, res, check_step,
                                 root[0], root[1], exempt):
                    edges[ne, 0] = v
                    edges[ne, 1] = new
                    ne += 1
        if nv == budget + 1:
            status = 0
            break
    return verts[:nv].copy(), parent[:nv].copy(), edges[:ne].copy(), status
