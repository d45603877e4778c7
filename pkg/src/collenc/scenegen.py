"""Procedural cluttered scenes and robot-cube meshes.

Scenes live in the camera frame (+z forward, +y up, +x left). Obstacle
classes: axis-aligned boxes, fronto-parallel walls with a rectangular
hole, thin vertical poles, and small multi-branch "trees" built from
rotated thin cuboids. Every obstacle gets its own counter-based RNG
stream (Philox keyed by seed and obstacle id), so generation is
bitwise-reproducible and independent of evaluation order.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .imagecore import DEFAULT_MAX_RANGE


@dataclass
class TriangleMesh:
    """Triangle soup: vertices (N,3) float64, triangles (M,3) int32."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int32).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle indices out of range")

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape (M,3,3)."""
        return self.vertices[self.triangles]

    def bounds(self):
        """Axis-aligned bounds (lo, hi) of the vertex set."""
        if len(self.vertices) == 0:
            return np.zeros(3), np.zeros(3)
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def surface_area(self) -> float:
        c = self.corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def empty_mesh() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))


@dataclass
class Scene:
    """World geometry: axis-aligned boxes (B,2,3) [lo, hi] plus triangle meshes."""

    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 3)))
    meshes: list = field(default_factory=list)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 2, 3)


@dataclass(frozen=True)
class RobotSpec:
    """Cubical robot with edge length 2r (half-extent r, meters)."""

    r: float

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("robot half-extent must be non-negative")


@dataclass
class SceneConfig:
    """Obstacle counts and size ranges; all ranges are (lo, hi) inclusive.

    A class is disabled with count (0, 0); an enabled class places at
    least one obstacle. Sizes are meters in the camera frame.
    """

    seed: int = 0
    # workspace extents (camera frame, meters)
    x_extent: tuple = (-3.0, 3.0)
    y_extent: tuple = (-2.0, 2.0)
    z_extent: tuple = (1.5, 7.5)
    max_range: float = DEFAULT_MAX_RANGE
    # axis-aligned boxes
    box_count: tuple = (1, 3)
    box_size: tuple = (0.3, 1.2)
    # fronto-parallel walls with one rectangular hole
    wall_count: tuple = (1, 1)
    wall_hole_size: tuple = (0.8, 2.0)
    # thin vertical poles (square cross-section)
    pole_count: tuple = (2, 6)
    pole_radius: tuple = (0.015, 0.06)
    pole_height: tuple = (1.5, 4.0)
    # multi-branch trees of thin cuboids
    tree_count: tuple = (1, 2)
    tree_branches: tuple = (3, 5)
    branch_radius: tuple = (0.02, 0.05)
    branch_length: tuple = (0.5, 1.5)
    # opaque fronto-parallel backdrop closing the scene
    backdrop: bool = True
    backdrop_z: tuple = (8.0, 9.5)

    def __post_init__(self):
        for name in ("x_extent", "y_extent", "z_extent"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must be a non-empty interval")
        if self.z_extent[0] <= 0:
            raise ValueError("z_extent must be strictly in front of the camera")
        for name in ("box_count", "wall_count", "pole_count", "tree_count", "tree_branches"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        for name in ("box_size", "wall_hole_size", "pole_radius", "pole_height",
                     "branch_radius", "branch_length", "backdrop_z"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be a positive range")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneConfig":
        raw = json.loads(text)
        kwargs = {
            k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()
        }
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# Mesh builders
# ---------------------------------------------------------------------------

# Cube corner signs in a fixed order; the 12 triangles below wind outward.
_CUBE_SIGNS = np.array(
    [
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, +1],
        [+1, -1, +1],
        [+1, +1, +1],
        [-1, +1, +1],
    ],
    dtype=np.float64,
)

CUBE_TRIANGLES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # z = -1 face
        [4, 5, 6], [4, 6, 7],  # z = +1 face
        [0, 1, 5], [0, 5, 4],  # y = -1 face
        [3, 6, 2], [3, 7, 6],  # y = +1 face
        [0, 4, 7], [0, 7, 3],  # x = -1 face
        [1, 2, 6], [1, 6, 5],  # x = +1 face
    ],
    dtype=np.int32,
)


def cuboid_mesh(center, half_extents, rotation=None) -> TriangleMesh:
    """Cuboid as 8 vertices / 12 triangles, optionally rotated about center."""
    center = np.asarray(center, dtype=np.float64)
    half = np.asarray(half_extents, dtype=np.float64)
    if np.any(half <= 0):
        raise ValueError("cuboid half-extents must be positive")
    verts = _CUBE_SIGNS * half
    if rotation is not None:
        verts = verts @ np.asarray(rotation, dtype=np.float64).T
    return TriangleMesh(verts + center, CUBE_TRIANGLES.copy())


def cube_mesh_at(p, r: float) -> TriangleMesh:
    """Axis-aligned robot cube of half edge r centered at point p."""
    if r <= 0:
        raise ValueError("cube half-extent must be positive")
    return cuboid_mesh(p, (r, r, r))


def quad_mesh(corners) -> TriangleMesh:
    """Two triangles covering a planar quad given as 4 corners (ccw)."""
    corners = np.asarray(corners, dtype=np.float64).reshape(4, 3)
    return TriangleMesh(corners, np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32))


def wall_with_hole_mesh(x0, x1, y0, y1, hx0, hx1, hy0, hy1, z) -> TriangleMesh:
    """Fronto-parallel wall [x0,x1]x[y0,y1] at depth z with a rectangular hole."""
    if not (x0 < hx0 < hx1 < x1 and y0 < hy0 < hy1 < y1):
        raise ValueError("hole must lie strictly inside the wall")

    def rect(ax0, ax1, ay0, ay1):
        return [(ax0, ay0, z), (ax1, ay0, z), (ax1, ay1, z), (ax0, ay1, z)]

    strips = [
        rect(x0, x1, y0, hy0),    # below the hole
        rect(x0, x1, hy1, y1),    # above the hole
        rect(x0, hx0, hy0, hy1),  # left of the hole
        rect(hx1, x1, hy0, hy1),  # right of the hole
    ]
    return merge_meshes([quad_mesh(s) for s in strips])


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes, re-offsetting triangle indices."""
    meshes = list(meshes)
    if not meshes:
        return empty_mesh()
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts, axis=0), np.concatenate(tris, axis=0))


def _rotation_from_tilt(yaw: float, tilt: float) -> np.ndarray:
    """Rotation tilting the +y axis by `tilt` toward the horizontal plane at `yaw`."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    ct, st = np.cos(tilt), np.sin(tilt)
    rot_tilt = np.array([[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]])
    rot_yaw = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    return rot_yaw @ rot_tilt


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------


def _stream(seed: int, *key) -> np.random.Generator:
    """Independent Philox stream named by (seed, key...)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


def _uniform(rng, interval) -> float:
    lo, hi = interval
    return float(rng.uniform(lo, hi))


def _count(rng, interval) -> int:
    lo, hi = interval
    if hi <= 0:
        return 0
    return int(rng.integers(max(lo, 1), hi + 1))


_CLASS_BOX, _CLASS_WALL, _CLASS_POLE, _CLASS_TREE, _CLASS_BACKDROP = range(5)


def generate_scene(config: SceneConfig) -> Scene:
    """Build a random scene; bitwise-deterministic for a fixed config."""
    enabled = any(
        getattr(config, name)[1] > 0
        for name in ("box_count", "wall_count", "pole_count", "tree_count")
    )
    if not enabled:
        raise ValueError("empty workspace: all obstacle classes disabled")

    counts_rng = _stream(config.seed, 0)
    n_boxes = _count(counts_rng, config.box_count)
    n_walls = _count(counts_rng, config.wall_count)
    n_poles = _count(counts_rng, config.pole_count)
    n_trees = _count(counts_rng, config.tree_count)

    x0, x1 = config.x_extent
    y0, y1 = config.y_extent
    z0, z1 = config.z_extent

    boxes = []
    for i in range(n_boxes):
        rng = _stream(config.seed, _CLASS_BOX, i)
        size = np.array([_uniform(rng, config.box_size) for _ in range(3)])
        center = np.array(
            [rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(z0, z1)]
        )
        boxes.append(np.stack([center - size / 2, center + size / 2]))

    meshes = []
    for i in range(n_walls):
        rng = _stream(config.seed, _CLASS_WALL, i)
        z = _uniform(rng, config.z_extent)
        hw = _uniform(rng, config.wall_hole_size)
        hh = _uniform(rng, config.wall_hole_size)
        margin = 0.2
        hw = min(hw, (x1 - x0) - 3 * margin)
        hh = min(hh, (y1 - y0) - 3 * margin)
        hx0 = rng.uniform(x0 + margin, x1 - margin - hw)
        hy0 = rng.uniform(y0 + margin, y1 - margin - hh)
        meshes.append(
            wall_with_hole_mesh(
                x0 - 1.0, x1 + 1.0, y0 - 1.0, y1 + 1.0,
                hx0, hx0 + hw, hy0, hy0 + hh, z,
            )
        )

    for i in range(n_poles):
        rng = _stream(config.seed, _CLASS_POLE, i)
        r = _uniform(rng, config.pole_radius)
        h = _uniform(rng, config.pole_height)
        center = np.array(
            [rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(z0, z1)]
        )
        meshes.append(cuboid_mesh(center, (r, h / 2, r)))

    for i in range(n_trees):
        rng = _stream(config.seed, _CLASS_TREE, i)
        base = np.array(
            [rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(z0, z1)]
        )
        trunk_r = _uniform(rng, config.branch_radius)
        trunk_len = _uniform(rng, config.branch_length) * 2.0
        parts = [cuboid_mesh(base, (trunk_r, trunk_len / 2, trunk_r))]
        for _ in range(_count(rng, config.tree_branches)):
            br = _uniform(rng, config.branch_radius)
            bl = _uniform(rng, config.branch_length)
            attach_y = rng.uniform(-0.2, 0.5) * trunk_len
            yaw = rng.uniform(0.0, 2 * np.pi)
            tilt = rng.uniform(0.35, 1.25)
            rot = _rotation_from_tilt(yaw, tilt)
            # branch cuboid extends along its local +y; shift so one end
            # sits at the attachment point
            offset = rot @ np.array([0.0, bl / 2, 0.0])
            center = base + np.array([0.0, attach_y, 0.0]) + offset
            parts.append(cuboid_mesh(center, (br, bl / 2, br), rotation=rot))
        meshes.append(merge_meshes(parts))

    if config.backdrop:
        rng = _stream(config.seed, _CLASS_BACKDROP)
        z = _uniform(rng, config.backdrop_z)
        z = min(z, config.max_range - 1e-3)
        pad = 2.0 * max(x1 - x0, y1 - y0)
        meshes.append(
            quad_mesh(
                [
                    (x0 - pad, y0 - pad, z),
                    (x1 + pad, y0 - pad, z),
                    (x1 + pad, y1 + pad, z),
                    (x0 - pad, y1 + pad, z),
                ]
            )
        )

    scene = Scene(
        boxes=np.array(boxes).reshape(-1, 2, 3), meshes=meshes
    )
    return _discard_out_of_frustum(scene, config.max_range)


def _discard_out_of_frustum(scene: Scene, max_range: float) -> Scene:
    """Drop primitives whose z-interval misses (0, max_range]."""
    keep_boxes = [
        b for b in scene.boxes if b[1, 2] > 0 and b[0, 2] <= max_range
    ]
    keep_meshes = []
    for m in scene.meshes:
        if len(m.vertices) == 0:
            continue
        lo, hi = m.bounds()
        if hi[2] > 0 and lo[2] <= max_range:
            keep_meshes.append(m)
    return Scene(boxes=np.array(keep_boxes).reshape(-1, 2, 3), meshes=keep_meshes)


def box_to_mesh(box) -> TriangleMesh:
    """Convert an AABB (2,3) to a cuboid mesh (for export / mesh-only paths)."""
    lo, hi = np.asarray(box, dtype=np.float64)
    return cuboid_mesh((lo + hi) / 2, (hi - lo) / 2)


def scene_to_obj(scene: Scene) -> str:
    """OBJ-style text dump (v/f lines only) for debugging."""
    merged = merge_meshes(
        [box_to_mesh(b) for b in scene.boxes] + list(scene.meshes)
    )
    lines = []
    for v in merged.vertices:
        lines.append(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}")
    for t in merged.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    return "\n".join(lines) + "\n"
