"""Hot inner loops: grouped raycasting and the exhaustive cube-entry oracle.

Each kernel has two interchangeable implementations with identical
semantics: a numba @njit version (parallel over pixels, schedule
independent because every pixel is a pure function of its ray) and a
vectorized numpy version. `raycast_rays` / `oracle_entry` point at the
active implementation per the COLLENC_NO_NUMBA flag; both remain
importable for parity tests and benchmarks.

Shared contract:
  - rays start at the origin; `dirs` are unit direction vectors (P,3)
  - triangles are grouped; each group carries an AABB used for early
    rejection (group_start/group_stop index into `tris`)
  - a hit contributes only if its z-depth (t * dz) lies in
    [near_z, max_range]; pixels with no such hit return 0.0 (invalid)
  - ray-triangle: Moller-Trumbore, t > RAY_EPS, barycentric bounds
    relaxed by EDGE_EPS so shared edges stay watertight
  - ray-box: slab method returning the entry distance, 0 if the origin
    is inside the box
"""

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, njit, prange

RAY_EPS = 1e-6     # minimal accepted ray parameter for triangle hits
EDGE_EPS = 1e-9    # barycentric slack keeping shared edges watertight
DET_EPS = 1e-12    # below this the ray is treated as parallel to the plane
NEAR_Z = 1e-4      # hits closer than this z-depth are ignored


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


def _raycast_loops(dirs, tris, group_start, group_stop, group_lo, group_hi,
                   boxes, near_z, max_range):
    n_pix = dirs.shape[0]
    n_groups = group_start.shape[0]
    n_boxes = boxes.shape[0]
    out = np.zeros(n_pix, dtype=np.float64)
    for p in prange(n_pix):
        dx = dirs[p, 0]
        dy = dirs[p, 1]
        dz = dirs[p, 2]
        best = np.inf

        for b in range(n_boxes):
            tn = -np.inf
            tf = np.inf
            hit = True
            for ax in range(3):
                d = dirs[p, ax]
                lo = boxes[b, 0, ax]
                hi = boxes[b, 1, ax]
                if d == 0.0:
                    if lo > 0.0 or hi < 0.0:
                        hit = False
                        break
                else:
                    ta = lo / d
                    tb = hi / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tn:
                        tn = ta
                    if tb < tf:
                        tf = tb
            if hit and tn <= tf and tf >= 0.0:
                t = tn if tn > 0.0 else 0.0
                z = t * dz
                if z >= near_z and z < best:
                    best = z

        for g in range(n_groups):
            tn = -np.inf
            tf = np.inf
            hit = True
            for ax in range(3):
                d = dirs[p, ax]
                lo = group_lo[g, ax]
                hi = group_hi[g, ax]
                if d == 0.0:
                    if lo > 0.0 or hi < 0.0:
                        hit = False
                        break
                else:
                    ta = lo / d
                    tb = hi / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tn:
                        tn = ta
                    if tb < tf:
                        tf = tb
            if not hit or tn > tf or tf < 0.0:
                continue
            enter = tn if tn > 0.0 else 0.0
            if enter * dz > best:
                continue  # group cannot beat the current nearest hit

            for t_i in range(group_start[g], group_stop[g]):
                ax0 = tris[t_i, 0, 0]
                ay0 = tris[t_i, 0, 1]
                az0 = tris[t_i, 0, 2]
                e1x = tris[t_i, 1, 0] - ax0
                e1y = tris[t_i, 1, 1] - ay0
                e1z = tris[t_i, 1, 2] - az0
                e2x = tris[t_i, 2, 0] - ax0
                e2y = tris[t_i, 2, 1] - ay0
                e2z = tris[t_i, 2, 2] - az0

                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if det > -DET_EPS and det < DET_EPS:
                    continue
                inv = 1.0 / det
                # origin - v0
                tvx = -ax0
                tvy = -ay0
                tvz = -az0
                u = (tvx * px + tvy * py + tvz * pz) * inv
                if u < -EDGE_EPS or u > 1.0 + EDGE_EPS:
                    continue
                qx = tvy * e1z - tvz * e1y
                qy = tvz * e1x - tvx * e1z
                qz = tvx * e1y - tvy * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < -EDGE_EPS or u + v > 1.0 + EDGE_EPS:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv
                if t <= RAY_EPS:
                    continue
                z = t * dz
                if z >= near_z and z < best:
                    best = z

        if np.isfinite(best) and best <= max_range:
            out[p] = best
    return out


def _oracle_loops(dirs, pts, r, max_range):
    n_pix = dirs.shape[0]
    n_pts = pts.shape[0]
    out = np.zeros(n_pix, dtype=np.float64)
    for p in prange(n_pix):
        dz = dirs[p, 2]
        best = np.inf
        for q in range(n_pts):
            tn = -np.inf
            tf = np.inf
            hit = True
            for ax in range(3):
                d = dirs[p, ax]
                lo = pts[q, ax] - r
                hi = pts[q, ax] + r
                if d == 0.0:
                    if lo > 0.0 or hi < 0.0:
                        hit = False
                        break
                else:
                    ta = lo / d
                    tb = hi / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tn:
                        tn = ta
                    if tb < tf:
                        tf = tb
            if hit and tn <= tf and tf >= 0.0:
                s = tn if tn > 0.0 else 0.0
                if s < best:
                    best = s
        z = best * dz
        if np.isfinite(best) and z <= max_range:
            out[p] = z
    return out


if HAVE_NUMBA:
    raycast_rays_njit = njit(parallel=True)(_raycast_loops)
    oracle_entry_njit = njit(parallel=True)(_oracle_loops)
else:  # pragma: no cover
    raycast_rays_njit = None
    oracle_entry_njit = None


# ---------------------------------------------------------------------------
# numpy fallbacks
# ---------------------------------------------------------------------------


def _slab_entry_np(dirs, lo, hi):
    """Vectorized slab test of rays (N,3) against one AABB.

    Returns (hit mask, entry distance); entry is 0 for origins inside.
    """
    d = dirs
    zero = d == 0.0
    safe = np.where(zero, 1.0, d)
    t1 = lo[None, :] / safe
    t2 = hi[None, :] / safe
    t_lo = np.minimum(t1, t2)
    t_hi = np.maximum(t1, t2)
    inside0 = (lo[None, :] <= 0.0) & (hi[None, :] >= 0.0)
    t_lo = np.where(zero, np.where(inside0, -np.inf, np.inf), t_lo)
    t_hi = np.where(zero, np.where(inside0, np.inf, -np.inf), t_hi)
    tn = t_lo.max(axis=1)
    tf = t_hi.min(axis=1)
    hit = (tn <= tf) & (tf >= 0.0)
    return hit, np.maximum(tn, 0.0)


def raycast_rays_numpy(dirs, tris, group_start, group_stop, group_lo, group_hi,
                       boxes, near_z, max_range):
    n_pix = dirs.shape[0]
    best = np.full(n_pix, np.inf)
    dzs = dirs[:, 2]

    for b in range(boxes.shape[0]):
        hit, entry = _slab_entry_np(dirs, boxes[b, 0], boxes[b, 1])
        z = entry * dzs
        upd = hit & (z >= near_z) & (z < best)
        best[upd] = z[upd]

    for g in range(group_start.shape[0]):
        hit, _ = _slab_entry_np(dirs, group_lo[g], group_hi[g])
        sel = np.nonzero(hit)[0]
        if sel.size == 0:
            continue
        d = dirs[sel]
        dz = dzs[sel]
        sub_best = best[sel].copy()
        for t_i in range(group_start[g], group_stop[g]):
            v0, v1, v2 = tris[t_i]
            e1 = v1 - v0
            e2 = v2 - v0
            p = np.cross(d, e2[None, :])
            det = p @ e1
            ok = np.abs(det) >= DET_EPS
            inv = 1.0 / np.where(ok, det, 1.0)
            u = (p @ (-v0)) * inv
            q = np.cross(-v0, e1)  # constant per triangle (ray origin is 0)
            v = (d @ q) * inv
            t = (e2 @ q) * inv
            z = t * dz
            ok &= (u >= -EDGE_EPS) & (u <= 1.0 + EDGE_EPS)
            ok &= (v >= -EDGE_EPS) & (u + v <= 1.0 + EDGE_EPS)
            ok &= (t > RAY_EPS) & (z >= near_z) & (z < sub_best)
            sub_best[ok] = z[ok]
        best[sel] = sub_best

    out = np.where(np.isfinite(best) & (best <= max_range), best, 0.0)
    return out


def oracle_entry_numpy(dirs, pts, r, max_range, chunk=256):
    n_pix = dirs.shape[0]
    out = np.zeros(n_pix, dtype=np.float64)
    if pts.shape[0] == 0:
        return out
    lo = pts - r
    hi = pts + r
    ins0 = (lo <= 0.0) & (hi >= 0.0)
    for start in range(0, n_pix, chunk):
        d = dirs[start:start + chunk]        # (c,3)
        zero = d == 0.0
        safe = np.where(zero, 1.0, d)
        t1 = lo[None, :, :] / safe[:, None, :]   # (c,Q,3)
        t2 = hi[None, :, :] / safe[:, None, :]
        t_lo = np.minimum(t1, t2)
        t_hi = np.maximum(t1, t2)
        z_ax = np.broadcast_to(zero[:, None, :], t_lo.shape)
        i_ax = np.broadcast_to(ins0[None, :, :], t_lo.shape)
        t_lo = np.where(z_ax, np.where(i_ax, -np.inf, np.inf), t_lo)
        t_hi = np.where(z_ax, np.where(i_ax, np.inf, -np.inf), t_hi)
        tn = t_lo.max(axis=2)
        tf = t_hi.min(axis=2)
        hit = (tn <= tf) & (tf >= 0.0)
        s = np.where(hit, np.maximum(tn, 0.0), np.inf)
        best = s.min(axis=1)
        z = best * d[:, 2]
        valid = np.isfinite(best) & (z <= max_range)
        out[start:start + chunk] = np.where(valid, z, 0.0)
    return out


# Active implementations per the env flag.
if USE_NUMBA:
    raycast_rays = raycast_rays_njit
    oracle_entry = oracle_entry_njit
else:
    raycast_rays = raycast_rays_numpy
    oracle_entry = oracle_entry_numpy
