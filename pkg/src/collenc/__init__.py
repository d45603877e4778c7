"""Robot-size-aware collision images from depth images, with task-driven
compression baselines (neural, FFT, wavelet) and an evaluation harness."""

__version__ = "0.1.0"

from .imagecore import (
    CameraIntrinsics,
    CollisionImage,
    DepthImage,
    RangeImage,
    depth_to_range,
    load_image,
    masked_mse,
    pixel_to_point,
    range_to_depth,
    save_image,
)
from .scenegen import RobotSpec, Scene, SceneConfig, TriangleMesh, generate_scene
from .render import raycast_depth
from .collision import CollisionParams, collision_image, oracle_collision_image
from .codecs import (
    decompress,
    fft_compress,
    fft_decompress,
    wavelet_compress,
    wavelet_decompress,
)
from .neural import TrainConfig, VaeConfig, VaeModel, load_checkpoint, save_checkpoint, train
from .harness import (
    DatasetManifest,
    MetricsTable,
    build_dataset,
    evaluate_codecs,
    evaluate_collision,
    emit_report,
    load_manifest,
)

__all__ = [
    "CameraIntrinsics",
    "CollisionImage",
    "CollisionParams",
    "DatasetManifest",
    "DepthImage",
    "MetricsTable",
    "RangeImage",
    "RobotSpec",
    "Scene",
    "SceneConfig",
    "TrainConfig",
    "TriangleMesh",
    "VaeConfig",
    "VaeModel",
    "build_dataset",
    "collision_image",
    "decompress",
    "depth_to_range",
    "emit_report",
    "evaluate_codecs",
    "evaluate_collision",
    "fft_compress",
    "fft_decompress",
    "generate_scene",
    "load_checkpoint",
    "load_image",
    "load_manifest",
    "masked_mse",
    "oracle_collision_image",
    "pixel_to_point",
    "range_to_depth",
    "raycast_depth",
    "save_checkpoint",
    "save_image",
    "train",
    "wavelet_compress",
    "wavelet_decompress",
]
