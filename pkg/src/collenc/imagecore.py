"""Camera model, depth/range images, masked metrics and image file I/O.

Conventions used throughout the package:
  - images are row-major float64 arrays of shape (height, width); the row
    index is v, the column index is u
  - the value 0.0 marks an invalid pixel (no return / out of range)
  - the camera looks along +z; back-projection uses x = (cx - u)/fx * z and
    y = (cy - v)/fy * z, so +x is to the left in the image and +y is up
"""

from dataclasses import dataclass

import numpy as np

INVALID = 0.0
DEFAULT_MAX_RANGE = 10.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths and optical center in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("optical center must lie inside the image")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1x1")

    def ray_scale(self) -> np.ndarray:
        """Per-pixel ratio range/depth: s(u,v) = sqrt(1 + ax^2 + ay^2) >= 1."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        ax = (self.cx - u)[None, :] / self.fx
        ay = (self.cy - v)[:, None] / self.fy
        return np.sqrt(1.0 + ax * ax + ay * ay)


def _check_image_data(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"image data must be 2-D, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("image data contains non-finite values")
    if np.any(data < 0.0):
        raise ValueError("image values must be non-negative (0.0 = invalid)")
    return data


@dataclass
class DepthImage:
    """Per-pixel z-depth in meters (projection onto the camera's central axis)."""

    data: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        self.data = _check_image_data(self.data)
        if np.any(self.data > self.max_range):
            raise ValueError("depth values must not exceed max_range")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0.0

    def copy(self) -> "DepthImage":
        return DepthImage(self.data.copy(), self.max_range)


@dataclass
class RangeImage:
    """Per-pixel Euclidean distance along the pixel ray, in meters.

    Same layout and validity convention as DepthImage. Valid values may
    exceed max_range (off-axis rays are longer than their depth).
    """

    data: np.ndarray
    max_range: float = DEFAULT_MAX_RANGE

    def __post_init__(self):
        self.data = _check_image_data(self.data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0.0


# Semantically a collision image is a depth image whose values are
# collision-free travel distances; it shares the layout and invariants.
CollisionImage = DepthImage


def _check_dims(img, K: CameraIntrinsics):
    if img.width != K.width or img.height != K.height:
        raise ValueError(
            f"image is {img.width}x{img.height} but intrinsics expect "
            f"{K.width}x{K.height}"
        )


def pixels_to_points(us, vs, zs, K: CameraIntrinsics) -> np.ndarray:
    """Back-project pixel coordinates with depths to camera-frame points (N,3)."""
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    if np.any(zs <= 0.0):
        raise ValueError("depth must be positive to back-project")
    if np.any(us < 0) or np.any(us >= K.width) or np.any(vs < 0) or np.any(vs >= K.height):
        raise ValueError("pixel coordinates out of image bounds")
    x = (K.cx - us) / K.fx * zs
    y = (K.cy - vs) / K.fy * zs
    return np.stack([x, y, np.broadcast_to(zs, x.shape)], axis=-1)


def pixel_to_point(u: float, v: float, z: float, K: CameraIntrinsics) -> np.ndarray:
    """Back-project a single pixel; returns (x, y, z) in the camera frame."""
    return pixels_to_points([u], [v], [z], K)[0]


def depth_to_range(depth: DepthImage, K: CameraIntrinsics) -> RangeImage:
    """Scale each valid pixel by s(u,v); invalid pixels stay invalid."""
    _check_dims(depth, K)
    s = K.ray_scale()
    out = np.where(depth.valid_mask, depth.data * s, INVALID)
    return RangeImage(out, depth.max_range)


def range_to_depth(rng_img: RangeImage, K: CameraIntrinsics) -> DepthImage:
    """Exact inverse of depth_to_range on valid pixels."""
    _check_dims(rng_img, K)
    s = K.ray_scale()
    out = np.where(rng_img.valid_mask, rng_img.data / s, INVALID)
    return DepthImage(out, rng_img.max_range)


def masked_mse(a: np.ndarray, b: np.ndarray, mask: np.ndarray):
    """Mean squared difference over pixels where mask is True.

    Returns (mse, count). count is the number of pixels covered by the
    mask; an empty mask yields (0.0, 0) so callers can detect zero
    coverage.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or a.shape != mask.shape:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, mask {mask.shape}")
    count = int(np.count_nonzero(mask))
    if count == 0:
        return 0.0, 0
    diff = a[mask] - b[mask]
    return float(np.mean(diff * diff)), count


# ---------------------------------------------------------------------------
# File I/O. Float images go to PFM (grayscale "Pf", little-endian, rows
# bottom-to-top); 8-bit previews go to binary PGM ("P5").
# ---------------------------------------------------------------------------


def write_pfm(path, data: np.ndarray) -> None:
    """Write a 2-D array as a grayscale little-endian PFM (scale -1.0).

    Values are stored as float32; pass data that is float32-representable
    if a bit-identical round-trip matters.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a float64 array (rows top-to-bottom)."""

    def next_token(f) -> bytes:
        tok = b""
        while True:
            c = f.read(1)
            if not c:
                raise ValueError(f"{path}: truncated PFM header")
            if c.isspace():
                if tok:
                    return tok
                continue
            tok += c

    with open(path, "rb") as f:
        magic = next_token(f)
        if magic == b"PF":
            raise ValueError(f"{path}: color PFM not supported, expected grayscale 'Pf'")
        if magic != b"Pf":
            raise ValueError(f"{path}: not a PFM file (bad magic {magic!r})")
        try:
            w = int(next_token(f))
            h = int(next_token(f))
            scale = float(next_token(f))
        except ValueError as e:
            raise ValueError(f"{path}: malformed PFM header") from e
        if w < 1 or h < 1 or scale == 0.0:
            raise ValueError(f"{path}: malformed PFM header")
        dtype = "<f4" if scale < 0 else ">f4"
        buf = f.read(4 * w * h)
        if len(buf) != 4 * w * h:
            raise ValueError(f"{path}: truncated PFM payload")
        data = np.frombuffer(buf, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def save_image(path, img) -> None:
    """Write a DepthImage/RangeImage (or compatible) to PFM."""
    write_pfm(path, img.data)


def load_image(path, max_range: float = DEFAULT_MAX_RANGE) -> DepthImage:
    """Read a PFM written by save_image back into a DepthImage."""
    return DepthImage(read_pfm(path), max_range)


def quantize_preview(img) -> np.ndarray:
    """Linear 8-bit quantization value/max_range*255, round half up."""
    scaled = img.data * (255.0 / img.max_range)
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def write_pgm_preview(path, img) -> None:
    """Write an 8-bit binary PGM preview of a float image."""
    pix = quantize_preview(img)
    h, w = pix.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pix.tobytes())


def write_pgm_gray(path, pix: np.ndarray) -> None:
    """Write an already-quantized uint8 array as binary PGM."""
    pix = np.asarray(pix, dtype=np.uint8)
    if pix.ndim != 2:
        raise ValueError("PGM writer expects a 2-D array")
    h, w = pix.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(pix.tobytes())
