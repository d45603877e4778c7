"""Pixel-parallel raycaster producing depth images of scenes and meshes.

Every pixel is an independent pure function of its ray, so output is
identical for any parallel schedule. Hits nearer than NEAR_Z (1e-4 m)
z-depth are ignored to avoid self-hits when inflation cubes contain the
camera; hits beyond max_range come out invalid (0.0).
"""

import numpy as np

from . import _kernels
from ._kernels import NEAR_Z, RAY_EPS
from .imagecore import CameraIntrinsics, DepthImage
from .scenegen import Scene, box_to_mesh


def ray_for_pixel(u: float, v: float, K: CameraIntrinsics) -> np.ndarray:
    """Unit direction of the ray through pixel (u, v)."""
    if not (0 <= u < K.width and 0 <= v < K.height):
        raise ValueError("pixel out of image bounds")
    d = np.array([(K.cx - u) / K.fx, (K.cy - v) / K.fy, 1.0])
    return d / np.linalg.norm(d)


def ray_grid(K: CameraIntrinsics) -> np.ndarray:
    """Unit directions for all pixels, shape (H*W, 3), row-major."""
    u = np.arange(K.width, dtype=np.float64)
    v = np.arange(K.height, dtype=np.float64)
    ax = np.broadcast_to((K.cx - u)[None, :] / K.fx, (K.height, K.width))
    ay = np.broadcast_to((K.cy - v)[:, None] / K.fy, (K.height, K.width))
    d = np.stack([ax, ay, np.ones_like(ax)], axis=-1).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def intersect_ray_triangle(origin, direction, triangle):
    """Moller-Trumbore; smallest t > RAY_EPS along `direction`, or None.

    Scalar reference implementation; the batched kernels reproduce the
    same arithmetic.
    """
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    v0, v1, v2 = np.asarray(triangle, dtype=np.float64)
    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(d, e2)
    det = float(np.dot(e1, p))
    if abs(det) < _kernels.DET_EPS:
        return None
    inv = 1.0 / det
    tv = origin - v0
    u = float(np.dot(tv, p)) * inv
    if u < -_kernels.EDGE_EPS or u > 1.0 + _kernels.EDGE_EPS:
        return None
    q = np.cross(tv, e1)
    v = float(np.dot(d, q)) * inv
    if v < -_kernels.EDGE_EPS or u + v > 1.0 + _kernels.EDGE_EPS:
        return None
    t = float(np.dot(e2, q)) * inv
    if t <= RAY_EPS:
        return None
    return t


def intersect_ray_box(origin, direction, lo, hi):
    """Slab method entry distance, 0.0 if origin inside, None on miss."""
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    tn, tf = -np.inf, np.inf
    for ax in range(3):
        if d[ax] == 0.0:
            if origin[ax] < lo[ax] or origin[ax] > hi[ax]:
                return None
        else:
            ta = (lo[ax] - origin[ax]) / d[ax]
            tb = (hi[ax] - origin[ax]) / d[ax]
            if ta > tb:
                ta, tb = tb, ta
            tn = max(tn, ta)
            tf = min(tf, tb)
    if tn > tf or tf < 0.0:
        return None
    return max(tn, 0.0)


def _pack_mesh_groups(meshes):
    """Flatten meshes into (tris, start, stop, lo, hi) kernel arrays."""
    tris = []
    start = []
    stop = []
    los = []
    his = []
    offset = 0
    for m in meshes:
        if m.num_triangles == 0:
            continue
        c = m.corners()
        tris.append(c)
        start.append(offset)
        offset += len(c)
        stop.append(offset)
        lo, hi = m.bounds()
        los.append(lo)
        his.append(hi)
    if not tris:
        return (
            np.zeros((0, 3, 3)),
            np.zeros(0, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros((0, 3)),
            np.zeros((0, 3)),
        )
    return (
        np.ascontiguousarray(np.concatenate(tris, axis=0)),
        np.array(start, dtype=np.int64),
        np.array(stop, dtype=np.int64),
        np.array(los, dtype=np.float64),
        np.array(his, dtype=np.float64),
    )


def raycast_depth(scene: Scene, K: CameraIntrinsics, max_range: float) -> DepthImage:
    """Depth image of the scene: per pixel, the z-depth of the nearest hit."""
    dirs = ray_grid(K)
    tris, start, stop, lo, hi = _pack_mesh_groups(scene.meshes)
    boxes = np.ascontiguousarray(scene.boxes)
    z = _kernels.raycast_rays(dirs, tris, start, stop, lo, hi, boxes,
                              NEAR_Z, max_range)
    return DepthImage(z.reshape(K.height, K.width), max_range)


def raycast_mesh_groups(meshes, K: CameraIntrinsics, max_range: float) -> DepthImage:
    """Raycast a list of meshes, each its own rejection group (no boxes)."""
    dirs = ray_grid(K)
    tris, start, stop, lo, hi = _pack_mesh_groups(meshes)
    boxes = np.zeros((0, 2, 3))
    z = _kernels.raycast_rays(dirs, tris, start, stop, lo, hi, boxes,
                              NEAR_Z, max_range)
    return DepthImage(z.reshape(K.height, K.width), max_range)


def scene_as_mesh_only(scene: Scene) -> Scene:
    """Equivalent scene with boxes converted to cuboid meshes (for tests)."""
    return Scene(
        boxes=np.zeros((0, 2, 3)),
        meshes=list(scene.meshes) + [box_to_mesh(b) for b in scene.boxes],
    )
