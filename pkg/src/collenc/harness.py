"""Dataset builder, evaluation tables, and report emission.

A dataset is a directory of (depth, collision) PFM pairs plus a JSON
manifest recording the camera, the robot size, the generator settings
and a hash of all of them. Image data is quantized to float32 before
use so that saved files round-trip bit-exactly through the PFM format.

Evaluation produces MetricsTable rows keyed by method and budget with
masked MSE columns in normalized units (images divided by max_range;
multiply by 255^2 for 8-bit-scale numbers, emitted alongside). The
compression-ratio column is always pixels / budget.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace, asdict
from pathlib import Path

import numpy as np

from .codecs import (
    fft_compress,
    fft_decompress,
    wavelet_compress,
    wavelet_decompress,
)
from .collision import CollisionParams, collision_image
from .imagecore import (
    CameraIntrinsics,
    DepthImage,
    load_image,
    masked_mse,
    quantize_preview,
    save_image,
    write_pgm_gray,
)
from .render import raycast_depth
from .scenegen import RobotSpec, SceneConfig, generate_scene

MANIFEST_NAME = "manifest.json"


def quantize_f32(image):
    """Snap pixel values onto the float32 grid (stays float64 in memory)."""
    data = image.data.astype(np.float32).astype(np.float64)
    return type(image)(data, image.max_range)


@dataclass
class DatasetManifest:
    intrinsics: CameraIntrinsics
    robot: RobotSpec
    collision: CollisionParams
    scene_config: SceneConfig
    max_range: float
    config_hash: str
    entries: list
    base_dir: Path = Path(".")

    def __len__(self):
        return len(self.entries)

    def depth_path(self, i) -> Path:
        return self.base_dir / self.entries[i]["depth"]

    def collision_path(self, i) -> Path:
        return self.base_dir / self.entries[i]["collision"]

    def load_pair(self, i):
        depth = load_image(self.depth_path(i), self.max_range)
        coll = load_image(self.collision_path(i), self.max_range)
        return depth, coll

    def to_json(self) -> str:
        payload = {
            "version": 1,
            "intrinsics": asdict(self.intrinsics),
            "robot": {"r": self.robot.r},
            "collision": {
                "r": self.collision.r,
                "edge_threshold": self.collision.edge_threshold,
                "edge_fraction": self.collision.edge_fraction,
                "seed": self.collision.seed,
            },
            "scene_config": json.loads(self.scene_config.to_json()),
            "max_range": self.max_range,
            "config_hash": self.config_hash,
            "entries": self.entries,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, base_dir=Path(".")) -> "DatasetManifest":
        raw = json.loads(text)
        return cls(
            intrinsics=CameraIntrinsics(**raw["intrinsics"]),
            robot=RobotSpec(**raw["robot"]),
            collision=CollisionParams(**raw["collision"]),
            scene_config=SceneConfig.from_json(json.dumps(raw["scene_config"])),
            max_range=raw["max_range"],
            config_hash=raw["config_hash"],
            entries=raw["entries"],
            base_dir=Path(base_dir),
        )


def _hash_config(count, seed, K, robot, params, scene_config, max_range) -> str:
    payload = json.dumps(
        {
            "count": count,
            "seed": seed,
            "intrinsics": asdict(K),
            "robot": {"r": robot.r},
            "collision": [params.r, params.edge_threshold, params.edge_fraction,
                          params.seed],
            "scene_config": json.loads(scene_config.to_json()),
            "max_range": max_range,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def build_dataset(out_dir, count, seed, K: CameraIntrinsics, robot: RobotSpec,
                  scene_config: SceneConfig | None = None,
                  max_range: float = 10.0, workers: int = 1) -> DatasetManifest:
    """Render count (depth, collision) pairs into out_dir, plus a manifest.

    Scene i uses seed `seed + i`; every pair depends only on its own seed,
    so results are identical for any worker count. Edge subsampling is
    off (edge_fraction=1) so the collision target is canonical.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if scene_config is None:
        scene_config = SceneConfig(max_range=max_range)
    params = CollisionParams(r=robot.r, edge_fraction=1.0)
    entries = [None] * count

    def build_one(i):
        cfg = replace(scene_config, seed=seed + i)
        scene = generate_scene(cfg)
        depth = quantize_f32(raycast_depth(scene, K, max_range))
        coll = quantize_f32(collision_image(depth, K, params))
        depth_name = f"depth_{i:05d}.pfm"
        coll_name = f"coll_{i:05d}.pfm"
        save_image(out / depth_name, depth)
        save_image(out / coll_name, coll)
        entries[i] = {"seed": seed + i, "depth": depth_name, "collision": coll_name}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(build_one, range(count)))
    else:
        for i in range(count):
            build_one(i)

    manifest = DatasetManifest(
        intrinsics=K, robot=robot, collision=params, scene_config=scene_config,
        max_range=max_range,
        config_hash=_hash_config(count, seed, K, robot, params, scene_config,
                                 max_range),
        entries=entries, base_dir=out,
    )
    (out / MANIFEST_NAME).write_text(manifest.to_json())
    return manifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    return DatasetManifest.from_json(path.read_text(), base_dir=path.parent)


def manifest_arrays(manifest: DatasetManifest, mode: str):
    """Stacked training arrays (inputs, targets, masks), normalized.

    Inputs are always the depth images. Targets are collision images for
    mode 'collnet' and the depth images themselves for mode 'vanilla'.
    Masks flag valid target pixels.
    """
    if mode not in ("collnet", "vanilla"):
        raise ValueError("mode must be 'collnet' or 'vanilla'")
    xs, ts, ms = [], [], []
    for i in range(len(manifest)):
        depth, coll = manifest.load_pair(i)
        target = coll if mode == "collnet" else depth
        xs.append(depth.data / manifest.max_range)
        ts.append(target.data / manifest.max_range)
        ms.append(target.valid_mask)
    x = np.stack(xs)[:, None]
    t = np.stack(ts)[:, None]
    m = np.stack(ms)[:, None]
    return x, t, m


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def compression_ratio(pixels: int, budget: int) -> float:
    """pixels per stored scalar; 270*480 at budget 32 gives 4050."""
    if budget < 1:
        raise ValueError("budget must be positive")
    return pixels / budget


@dataclass
class MetricsRow:
    method: str
    budget: int
    compression_ratio: float
    mse_depth: float | None = None
    mse_coll: float | None = None


@dataclass
class MetricsTable:
    height: int
    width: int
    rows: list

    COLUMNS = ("method", "budget", "compression_ratio",
               "mse_depth", "mse_coll", "mse_depth_8bit", "mse_coll_8bit")

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: (r.method, r.budget))

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.sorted_rows():
            cells = [
                r.method,
                str(r.budget),
                repr(r.compression_ratio),
                "" if r.mse_depth is None else repr(r.mse_depth),
                "" if r.mse_coll is None else repr(r.mse_coll),
                "" if r.mse_depth is None else repr(r.mse_depth * 255.0**2),
                "" if r.mse_coll is None else repr(r.mse_coll * 255.0**2),
            ]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate_codecs(manifest: DatasetManifest, budgets=(32, 64, 128, 256),
                    vanilla_models: dict | None = None) -> MetricsTable:
    """Mean masked MSE of reconstructions vs the input depth.

    Always emits fft/wavelet rows at the given budgets. vanilla_models
    maps latent size -> trained depth autoencoder and adds a row per
    entry; a None entry raises, since those rows cannot be computed
    without the model.
    """
    K = manifest.intrinsics
    pixels = K.width * K.height
    sums = {("fft", b): 0.0 for b in budgets}
    sums.update({("wavelet", b): 0.0 for b in budgets})
    for i in range(len(manifest)):
        depth, _ = manifest.load_pair(i)
        norm = depth.data / manifest.max_range
        mask = depth.valid_mask
        for b in budgets:
            recon = fft_decompress(fft_compress(norm, b))
            sums[("fft", b)] += masked_mse(recon, norm, mask)[0]
            recon = wavelet_decompress(wavelet_compress(norm, b))
            sums[("wavelet", b)] += masked_mse(recon, norm, mask)[0]
    n = len(manifest)
    rows = [
        MetricsRow(method, b, compression_ratio(pixels, b),
                   mse_depth=sums[(method, b)] / n)
        for method in ("fft", "wavelet")
        for b in budgets
    ]
    if vanilla_models is not None:
        x, t_depth, m_depth = manifest_arrays(manifest, "vanilla")
        for budget, model in sorted(vanilla_models.items()):
            if model is None:
                raise ValueError(f"no trained model for latent size {budget}")
            recon = _reconstruct_batchwise(model, x)
            total = sum(
                masked_mse(recon[i, 0], t_depth[i, 0], m_depth[i, 0])[0]
                for i in range(n)
            )
            rows.append(MetricsRow("vanilla", budget,
                                   compression_ratio(pixels, budget),
                                   mse_depth=total / n))
    return MetricsTable(K.height, K.width, rows)


def _reconstruct_batchwise(model, inputs, batch=32):
    outs = []
    for i in range(0, inputs.shape[0], batch):
        outs.append(model.reconstruct(inputs[i : i + batch]))
    return np.concatenate(outs, axis=0)


def evaluate_collision(manifest: DatasetManifest, collnet_models: dict,
                       vanilla_models: dict) -> MetricsTable:
    """Table rows for learned models, keyed by latent budget.

    collnet rows: masked MSE of the direct collision reconstruction
    against the stored collision image. vanilla rows: masked MSE of the
    depth reconstruction against the input depth, and of the collision
    pipeline re-run on that reconstruction (same CollisionParams as
    dataset generation) against the stored collision image.
    """
    K = manifest.intrinsics
    pixels = K.width * K.height
    x, t_coll, m_coll = manifest_arrays(manifest, "collnet")
    _, t_depth, m_depth = manifest_arrays(manifest, "vanilla")
    for models in (collnet_models, vanilla_models):
        for budget, model in models.items():
            if model is None:
                raise ValueError(f"no trained model for latent size {budget}")
    rows = []
    for budget, model in sorted(collnet_models.items()):
        recon = _reconstruct_batchwise(model, x)
        total = sum(
            masked_mse(recon[i, 0], t_coll[i, 0], m_coll[i, 0])[0]
            for i in range(len(manifest))
        )
        rows.append(MetricsRow("collnet", budget,
                               compression_ratio(pixels, budget),
                               mse_coll=total / len(manifest)))
    for budget, model in sorted(vanilla_models.items()):
        recon = _reconstruct_batchwise(model, x)
        total_d = 0.0
        total_c = 0.0
        for i in range(len(manifest)):
            total_d += masked_mse(recon[i, 0], t_depth[i, 0], m_depth[i, 0])[0]
            depth_hat = DepthImage(
                np.minimum(recon[i, 0] * manifest.max_range, manifest.max_range),
                manifest.max_range,
            )
            coll_hat = collision_image(depth_hat, K, manifest.collision)
            total_c += masked_mse(coll_hat.data / manifest.max_range,
                                  t_coll[i, 0], m_coll[i, 0])[0]
        rows.append(MetricsRow("vanilla", budget,
                               compression_ratio(pixels, budget),
                               mse_depth=total_d / len(manifest),
                               mse_coll=total_c / len(manifest)))
    return MetricsTable(K.height, K.width, rows)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def error_panel(a, b):
    """8-bit |a-b| panel and its normalization constant (panel max)."""
    err = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b))
    scale = float(err.max())
    if scale == 0.0:
        return np.zeros(err.shape, dtype=np.uint8), 0.0
    return np.floor(err / scale * 255.0 + 0.5).astype(np.uint8), scale


def emit_report(out_dir, tables: dict, panels: dict | None = None) -> list:
    """Write CSV tables and PGM panel triples; returns written paths.

    tables: name -> MetricsTable, written as <name>.csv. panels:
    name -> (reference image, comparison image); each yields
    <name>_ref.pgm, <name>_cmp.pgm, <name>_err.pgm with per-panel error
    normalization constants collected in panels.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(tables):
        path = out / f"{name}.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write(tables[name].to_csv())
        written.append(path)
    sidecar = {}
    for name in sorted(panels or {}):
        ref, cmp_img = panels[name]
        p_ref = out / f"{name}_ref.pgm"
        p_cmp = out / f"{name}_cmp.pgm"
        p_err = out / f"{name}_err.pgm"
        write_pgm_gray(p_ref, quantize_preview(ref))
        write_pgm_gray(p_cmp, quantize_preview(cmp_img))
        err8, scale = error_panel(ref.data, cmp_img.data)
        write_pgm_gray(p_err, err8)
        sidecar[name] = {"error_scale": scale}
        written.extend([p_ref, p_cmp, p_err])
    if panels:
        path = out / "panels.json"
        path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written


def check_pair_invariants(manifest: DatasetManifest) -> None:
    """Re-validate the collision inequality on every stored pair."""
    for i in range(len(manifest)):
        depth, coll = manifest.load_pair(i)
        both = depth.valid_mask & coll.valid_mask
        if not np.all(coll.data[both] <= depth.data[both]):
            raise AssertionError(f"pair {i}: collision image exceeds depth")
        if not np.all(coll.valid_mask[depth.valid_mask]):
            raise AssertionError(f"pair {i}: valid depth pixel lost")
