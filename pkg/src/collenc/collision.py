"""Depth image -> collision image, plus an exhaustive verification oracle.

The collision image holds, per pixel, the z-projected distance a cubical
robot of half-extent r can travel along that pixel's ray before touching
anything. The fast pipeline is: detect depth edges, back-project a
subset of edge pixels, render robot-sized cubes at those points, and
take the pixel-wise minimum with a range-offset image. The oracle
inflates every back-projected pixel instead (O(pixels^2)) and is only
meant for verification at small resolutions.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .imagecore import CameraIntrinsics, CollisionImage, DepthImage, pixels_to_points
from .render import ray_grid
from .scenegen import CUBE_TRIANGLES, _CUBE_SIGNS

# Offset ranges that fall to or below zero clamp here and stay valid,
# meaning "in collision already at the camera".
RANGE_FLOOR = 0.01


def default_edge_threshold(r: float) -> float:
    """Depth-jump threshold scaled to the robot: max(0.1 m, r/2)."""
    return max(0.1, 0.5 * r)


@dataclass
class CollisionParams:
    """Parameters of the collision-image pipeline.

    edge_threshold None means the r-scaled default. seed only matters
    when edge_fraction < 1.
    """

    r: float
    edge_threshold: float | None = None
    edge_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("robot half-extent must be non-negative")
        if self.edge_threshold is not None and self.edge_threshold <= 0:
            raise ValueError("edge_threshold must be positive")
        if not (0.0 < self.edge_fraction <= 1.0):
            raise ValueError("edge_fraction must be in (0, 1]")

    @property
    def resolved_threshold(self) -> float:
        if self.edge_threshold is not None:
            return self.edge_threshold
        return default_edge_threshold(self.r)


def detect_edges(depth: DepthImage, edge_threshold: float) -> np.ndarray:
    """Edge pixels as an (N,2) int array of (u, v), row-major scan order.

    A valid pixel is an edge if a 4-neighbor is invalid, or if a valid
    4-neighbor is deeper by more than edge_threshold (the nearer side of
    the jump). Neighbors outside the image are ignored.
    """
    if edge_threshold <= 0:
        raise ValueError("edge_threshold must be positive")
    d = depth.data
    valid = depth.valid_mask
    edge = np.zeros_like(valid)

    def mark(sl_here, sl_there):
        here_d = d[sl_here]
        there_d = d[sl_there]
        here_v = valid[sl_here]
        there_v = valid[sl_there]
        jump = here_v & (~there_v | (there_v & (there_d - here_d > edge_threshold)))
        edge[sl_here] |= jump

    mark(np.s_[:, :-1], np.s_[:, 1:])   # right neighbor
    mark(np.s_[:, 1:], np.s_[:, :-1])   # left neighbor
    mark(np.s_[:-1, :], np.s_[1:, :])   # lower neighbor
    mark(np.s_[1:, :], np.s_[:-1, :])   # upper neighbor

    vs, us = np.nonzero(edge)
    return np.stack([us, vs], axis=1).astype(np.int64)


def select_edge_subset(edges: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Deterministic random subset of ceil(fraction * N) edge pixels."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    n = len(edges)
    if fraction == 1.0 or n == 0:
        return edges
    k = int(np.ceil(fraction * n))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    idx = np.sort(rng.choice(n, size=k, replace=False))
    return edges[idx]


def offset_image(depth: DepthImage, K: CameraIntrinsics, r: float) -> DepthImage:
    """Bring every valid pixel closer by r in range space.

    range' = max(range - r, RANGE_FLOOR); r = 0 returns the input
    unchanged (exact identity, no round-trip through range space).
    """
    if r < 0:
        raise ValueError("robot half-extent must be non-negative")
    if r == 0.0:
        return depth.copy()
    s = K.ray_scale()
    if depth.data.shape != s.shape:
        raise ValueError("image dimensions do not match the intrinsics")
    rng_vals = depth.data * s
    shifted = np.maximum(rng_vals - r, RANGE_FLOOR)
    out = np.where(depth.valid_mask, shifted / s, 0.0)
    return DepthImage(out, depth.max_range)


def render_inflation(depth: DepthImage, edges: np.ndarray, K: CameraIntrinsics,
                     r: float) -> DepthImage:
    """Depth image of robot cubes centered at back-projected edge pixels.

    Pixels not covered by any cube are invalid. Cube triangles are built
    directly (12 per edge point) and raycast one rejection group per cube.
    """
    if r <= 0:
        raise ValueError("robot half-extent must be positive for inflation")
    if len(edges) == 0:
        return DepthImage(np.zeros((depth.height, depth.width)), depth.max_range)
    us = edges[:, 0]
    vs = edges[:, 1]
    zs = depth.data[vs, us]
    if np.any(zs <= 0.0):
        raise ValueError("edge pixels must be valid depth pixels")
    pts = pixels_to_points(us, vs, zs, K)          # (N,3)

    verts = pts[:, None, :] + r * _CUBE_SIGNS[None, :, :]      # (N,8,3)
    tris = verts[:, CUBE_TRIANGLES]                            # (N,12,3,3)
    n = len(pts)
    start = np.arange(n, dtype=np.int64) * 12
    stop = start + 12
    lo = pts - r
    hi = pts + r

    dirs = ray_grid(K)
    z = _kernels.raycast_rays(
        dirs,
        np.ascontiguousarray(tris.reshape(-1, 3, 3)),
        start, stop, lo, hi,
        np.zeros((0, 2, 3)),
        _kernels.NEAR_Z, depth.max_range,
    )
    return DepthImage(z.reshape(depth.height, depth.width), depth.max_range)


def min_with_invalid_as_inf(a: DepthImage, b: DepthImage) -> DepthImage:
    """Pixel-wise minimum where invalid (0.0) acts as +infinity."""
    av = np.where(a.valid_mask, a.data, np.inf)
    bv = np.where(b.valid_mask, b.data, np.inf)
    m = np.minimum(av, bv)
    return DepthImage(np.where(np.isfinite(m), m, 0.0), a.max_range)


def collision_image(depth: DepthImage, K: CameraIntrinsics,
                    params: CollisionParams) -> CollisionImage:
    """Approximate collision image min(D_M, D_offset); r = 0 returns D."""
    if params.r == 0.0:
        return depth.copy()
    edges = detect_edges(depth, params.resolved_threshold)
    edges = select_edge_subset(edges, params.edge_fraction, params.seed)
    d_mesh = render_inflation(depth, edges, K, params.r)
    d_off = offset_image(depth, K, params.r)
    return min_with_invalid_as_inf(d_mesh, d_off)


def oracle_collision_image(depth: DepthImage, K: CameraIntrinsics,
                           r: float) -> CollisionImage:
    """Exhaustive Minkowski construction over every valid pixel's point.

    For each pixel ray, the minimal s >= 0 whose point stays within
    L-inf distance r of some back-projected scene point; z-depth s*dz,
    invalid if nothing is reachable within max_range. O(pixels^2); use
    only at verification scale. r = 0 reproduces the input exactly.
    """
    if r < 0:
        raise ValueError("robot half-extent must be non-negative")
    if r == 0.0:
        return depth.copy()
    vs, us = np.nonzero(depth.valid_mask)
    zs = depth.data[vs, us]
    pts = pixels_to_points(us, vs, zs, K) if len(us) else np.zeros((0, 3))
    dirs = ray_grid(K)
    z = _kernels.oracle_entry(dirs, pts, float(r), depth.max_range)
    return DepthImage(z.reshape(depth.height, depth.width), depth.max_range)
