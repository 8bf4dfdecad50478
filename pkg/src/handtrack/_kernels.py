"""Numba-compiled inner loops: swarm cost evaluation and grid traversals.

Everything here is deterministic and GIL-free; float32 is used on the swarm
path for speed. The float64 reference implementations live in `objective`
and `segmentation` semantics are shared with `flood_fill` below.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

F32 = np.float32


@njit(cache=True, nogil=True, fastmath=True)
def d2m_costs(centers, radii, points, d_max):
    """Mean clamped sphere-surface distance per particle.

    centers (P,K,3) f32, radii (P,K) f32, points (S,3) f32 -> (P,) f32.
    """
    P, K, _ = centers.shape
    S = points.shape[0]
    out = np.empty(P, dtype=F32)
    for p in range(P):
        acc = 0.0
        for s in range(S):
            x0 = points[s, 0]
            x1 = points[s, 1]
            x2 = points[s, 2]
            best = F32(1e30)
            for k in range(K):
                dx = centers[p, k, 0] - x0
                dy = centers[p, k, 1] - x1
                dz = centers[p, k, 2] - x2
                d = abs(math.sqrt(dx * dx + dy * dy + dz * dz) - radii[p, k])
                if d < best:
                    best = d
            if best > d_max:
                best = d_max
            acc += best
        out[p] = acc / S
    return out


@njit(cache=True, nogil=True)
def m2d_costs(centers, radii, depth, member, mask_dist, fx, fy, cx, cy, px_to_mm_f, d_max):
    """Mean per-sphere projection penalty per particle.

    A sphere pays nothing when its center projects into the hand mask at or
    behind the observed surface (within one radius). Out-of-mask projections
    pay the pixel distance to the mask scaled to mm at the sphere's depth;
    in-mask free-space violations pay observed - (z - r). All penalties are
    clamped at d_max. Spheres at or behind the camera pay d_max.
    """
    P, K, _ = centers.shape
    h, w = depth.shape
    out = np.empty(P, dtype=F32)
    for p in range(P):
        acc = 0.0
        for k in range(K):
            z = centers[p, k, 2]
            if z <= 1e-6:
                acc += d_max
                continue
            u = fx * centers[p, k, 0] / z + cx
            v = fy * centers[p, k, 1] / z + cy
            ui = int(round(u))
            vi = int(round(v))
            uc = min(max(ui, 0), w - 1)
            vc = min(max(vi, 0), h - 1)
            off_px = math.hypot(ui - uc, vi - vc)
            if off_px == 0.0 and member[vc, uc]:
                obs = depth[vc, uc]
                r = radii[p, k]
                if z >= obs - r:
                    continue
                pen = obs - (z - r)
            else:
                pen = (mask_dist[vc, uc] + off_px) * (z / px_to_mm_f)
            if pen > d_max:
                pen = d_max
            acc += pen
        out[p] = acc / K
    return out


@njit(cache=True, nogil=True)
def overlap_costs(centers, radii, pairs):
    """Sum of pairwise interpenetrations over the counted pair list.

    pairs (M,2) int32 indexes spheres whose overlap is invalid.
    """
    P = centers.shape[0]
    M = pairs.shape[0]
    out = np.empty(P, dtype=F32)
    for p in range(P):
        acc = 0.0
        for m in range(M):
            i = pairs[m, 0]
            j = pairs[m, 1]
            dx = centers[p, i, 0] - centers[p, j, 0]
            dy = centers[p, i, 1] - centers[p, j, 1]
            dz = centers[p, i, 2] - centers[p, j, 2]
            pen = radii[p, i] + radii[p, j] - math.sqrt(dx * dx + dy * dy + dz * dz)
            if pen > 0.0:
                acc += pen
        out[p] = acc
    return out


@njit(cache=True, nogil=True)
def fk_batch32(sizes, poses, palm_centers, palm_radius, conn_local, conn_radii,
               bases, dirs, axes, seg_len, sph_seg, sph_off, finger_radii):
    """Float32 forward kinematics for the swarm path.

    Inputs are assumed clamped. Geometry arrays are the unit-scale template:
    palm_centers (16,3), conn_local (2,3), per finger bases/dirs/axes (5,3),
    seg_len (5,3) phalanx lengths, sph_seg (5,6) phalanx index per sphere,
    sph_off (5,6) offset within the phalanx, finger_radii (5,6).
    Returns (centers (P,48,3), radii (P,48)).
    """
    P = poses.shape[0]
    centers = np.empty((P, 48, 3), dtype=F32)
    radii = np.empty((P, 48), dtype=F32)
    local = np.empty((48, 3), dtype=F32)
    for p in range(P):
        l0 = sizes[p, 0]
        for i in range(16):
            local[i, 0] = palm_centers[i, 0] * l0
            local[i, 1] = palm_centers[i, 1] * l0
            local[i, 2] = palm_centers[i, 2] * l0
            radii[p, i] = palm_radius * l0
        for i in range(2):
            local[16 + i, 0] = conn_local[i, 0] * l0
            local[16 + i, 1] = conn_local[i, 1] * l0
            local[16 + i, 2] = conn_local[i, 2] * l0
            radii[p, 16 + i] = conn_radii[i] * l0
        for f in range(5):
            li = sizes[p, 1 + f]
            abd = poses[p, 7 + 4 * f]
            flex = poses[p, 6 + 4 * f]
            pip = poses[p, 8 + 4 * f]
            dip = poses[p, 9 + 4 * f]
            ca = math.cos(abd)
            sa = math.sin(abd)
            # Rest direction and flex axis rotated by abduction about +z.
            dx = ca * dirs[f, 0] - sa * dirs[f, 1]
            dy = sa * dirs[f, 0] + ca * dirs[f, 1]
            dz = dirs[f, 2]
            ax = ca * axes[f, 0] - sa * axes[f, 1]
            ay = sa * axes[f, 0] + ca * axes[f, 1]
            az = axes[f, 2]
            # Chain of three flexions about the (fixed) abducted axis.
            jx = bases[f, 0] * l0
            jy = bases[f, 1] * l0
            jz = bases[f, 2] * l0
            sphere = 18 + 6 * f
            seg_used = 0
            for s in range(3):
                ang = flex if s == 0 else (pip if s == 1 else dip)
                c = math.cos(ang)
                si = math.sin(ang)
                # Rodrigues: d' = d c + (a x d) si + a (a.d)(1 - c)
                cxd = ay * dz - az * dy
                cyd = az * dx - ax * dz
                czd = ax * dy - ay * dx
                adot = ax * dx + ay * dy + az * dz
                dx = dx * c + cxd * si + ax * adot * (1.0 - c)
                dy = dy * c + cyd * si + ay * adot * (1.0 - c)
                dz = dz * c + czd * si + az * adot * (1.0 - c)
                while seg_used < 6 and sph_seg[f, seg_used] == s:
                    off = sph_off[f, seg_used] * li
                    idx = sphere + seg_used
                    local[idx, 0] = jx + dx * off
                    local[idx, 1] = jy + dy * off
                    local[idx, 2] = jz + dz * off
                    radii[p, idx] = finger_radii[f, seg_used]
                    seg_used += 1
                step = seg_len[f, s] * li
                jx += dx * step
                jy += dy * step
                jz += dz * step
        # Intrinsic XYZ Euler -> matrix, then rigid transform.
        rx = poses[p, 3]
        ry = poses[p, 4]
        rz = poses[p, 5]
        cx = math.cos(rx)
        sx = math.sin(rx)
        cy = math.cos(ry)
        sy = math.sin(ry)
        cz = math.cos(rz)
        sz = math.sin(rz)
        r00 = cy * cz
        r01 = -cy * sz
        r02 = sy
        r10 = sx * sy * cz + cx * sz
        r11 = -sx * sy * sz + cx * cz
        r12 = -sx * cy
        r20 = -cx * sy * cz + sx * sz
        r21 = cx * sy * sz + sx * cz
        r22 = cx * cy
        tx = poses[p, 0]
        ty = poses[p, 1]
        tz = poses[p, 2]
        for i in range(48):
            x = local[i, 0]
            y = local[i, 1]
            z = local[i, 2]
            centers[p, i, 0] = r00 * x + r01 * y + r02 * z + tx
            centers[p, i, 1] = r10 * x + r11 * y + r12 * z + ty
            centers[p, i, 2] = r20 * x + r21 * y + r22 * z + tz
    return centers, radii


@njit(cache=True, nogil=True)
def flood_fill(depth, seed_u, seed_v, delta_depth, max_pixels):
    """4-connected BFS from the seed over nonzero depths.

    A neighbor joins when |depth(neighbor) - depth(current)| <= delta_depth.
    Voids (0) are hard boundaries. Growth stops when the frontier empties or
    max_pixels is reached; returns (member bool map, count, truncated flag).
    BFS order is row-major within each frontier level, so truncation is
    deterministic.
    """
    h, w = depth.shape
    member = np.zeros((h, w), dtype=np.bool_)
    qu = np.empty(h * w, dtype=np.int32)
    qv = np.empty(h * w, dtype=np.int32)
    head = 0
    tail = 0
    qu[tail] = seed_u
    qv[tail] = seed_v
    tail += 1
    member[seed_v, seed_u] = True
    count = 1
    truncated = False
    while head < tail:
        if count >= max_pixels:
            truncated = head < tail
            break
        u = qu[head]
        v = qv[head]
        head += 1
        d0 = np.int64(depth[v, u])
        for n in range(4):
            if n == 0:
                uu, vv = u, v - 1
            elif n == 1:
                uu, vv = u - 1, v
            elif n == 2:
                uu, vv = u + 1, v
            else:
                uu, vv = u, v + 1
            if uu < 0 or uu >= w or vv < 0 or vv >= h:
                continue
            if member[vv, uu]:
                continue
            d1 = np.int64(depth[vv, uu])
            if d1 == 0:
                continue
            dd = d1 - d0
            if dd < 0:
                dd = -dd
            if dd > delta_depth:
                continue
            member[vv, uu] = True
            count += 1
            qu[tail] = uu
            qv[tail] = vv
            tail += 1
            if count >= max_pixels:
                break
    return member, count, truncated


@njit(cache=True, nogil=True)
def geodesic_hops(member, start_u, start_v):
    """4-connected BFS hop count within the mask; -1 outside/unreached."""
    h, w = member.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    qu = np.empty(h * w, dtype=np.int32)
    qv = np.empty(h * w, dtype=np.int32)
    head = 0
    tail = 0
    if not member[start_v, start_u]:
        return dist
    dist[start_v, start_u] = 0
    qu[tail] = start_u
    qv[tail] = start_v
    tail += 1
    while head < tail:
        u = qu[head]
        v = qv[head]
        head += 1
        d = dist[v, u] + 1
        for n in range(4):
            if n == 0:
                uu, vv = u, v - 1
            elif n == 1:
                uu, vv = u - 1, v
            elif n == 2:
                uu, vv = u + 1, v
            else:
                uu, vv = u, v + 1
            if uu < 0 or uu >= w or vv < 0 or vv >= h:
                continue
            if not member[vv, uu] or dist[vv, uu] >= 0:
                continue
            dist[vv, uu] = d
            qu[tail] = uu
            qv[tail] = vv
            tail += 1
    return dist


@njit(cache=True, nogil=True)
def grow_within_hops(member, claimed, tip_u, tip_v, max_hops):
    """BFS component from the tip, limited to a within-mask hop distance.

    The hop limit is the finger-length bound: walking down one finger,
    across the webbing, and up a neighbor exceeds it, so adjacent fingers
    do not merge. Returns the grown region as a bool map.
    """
    h, w = member.shape
    region = np.zeros((h, w), dtype=np.bool_)
    hops = np.full((h, w), -1, dtype=np.int32)
    qu = np.empty(h * w, dtype=np.int32)
    qv = np.empty(h * w, dtype=np.int32)
    head = 0
    tail = 0
    region[tip_v, tip_u] = True
    hops[tip_v, tip_u] = 0
    qu[tail] = tip_u
    qv[tail] = tip_v
    tail += 1
    while head < tail:
        u = qu[head]
        v = qv[head]
        head += 1
        d = hops[v, u] + 1
        if d > max_hops:
            continue
        for n in range(4):
            if n == 0:
                uu, vv = u, v - 1
            elif n == 1:
                uu, vv = u - 1, v
            elif n == 2:
                uu, vv = u + 1, v
            else:
                uu, vv = u, v + 1
            if uu < 0 or uu >= w or vv < 0 or vv >= h:
                continue
            if region[vv, uu] or not member[vv, uu] or claimed[vv, uu]:
                continue
            region[vv, uu] = True
            hops[vv, uu] = d
            qu[tail] = uu
            qv[tail] = vv
            tail += 1
    return region


@njit(cache=True, nogil=True)
def grow_within_window(member, claimed, seed_u, seed_v, half_px):
    """BFS component from the seed, restricted to a square window."""
    h, w = member.shape
    region = np.zeros((h, w), dtype=np.bool_)
    qu = np.empty(h * w, dtype=np.int32)
    qv = np.empty(h * w, dtype=np.int32)
    head = 0
    tail = 0
    region[seed_v, seed_u] = True
    qu[tail] = seed_u
    qv[tail] = seed_v
    tail += 1
    while head < tail:
        u = qu[head]
        v = qv[head]
        head += 1
        for n in range(4):
            if n == 0:
                uu, vv = u, v - 1
            elif n == 1:
                uu, vv = u - 1, v
            elif n == 2:
                uu, vv = u + 1, v
            else:
                uu, vv = u, v + 1
            if uu < 0 or uu >= w or vv < 0 or vv >= h:
                continue
            if abs(uu - seed_u) > half_px or abs(vv - seed_v) > half_px:
                continue
            if region[vv, uu] or not member[vv, uu] or claimed[vv, uu]:
                continue
            region[vv, uu] = True
            qu[tail] = uu
            qv[tail] = vv
            tail += 1
    return region
