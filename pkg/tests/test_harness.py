import json
from pathlib import Path

import numpy as np
import pytest

from collenc.harness import (
    DatasetManifest,
    MetricsRow,
    MetricsTable,
    build_dataset,
    check_pair_invariants,
    compression_ratio,
    emit_report,
    error_panel,
    evaluate_codecs,
    evaluate_collision,
    load_manifest,
    manifest_arrays,
    quantize_f32,
)
from collenc.imagecore import CameraIntrinsics, DepthImage, load_image
from collenc.neural import VaeConfig, VaeModel
from collenc.scenegen import RobotSpec, SceneConfig

SMALL_K = CameraIntrinsics(fx=50.0, fy=50.0, cx=20.0, cy=15.0, width=40, height=30)
SMALL_SCENES = SceneConfig(box_count=(1, 2), pole_count=(1, 3), tree_count=(0, 0))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    manifest = build_dataset(out, count=3, seed=5, K=SMALL_K,
                             robot=RobotSpec(0.25), scene_config=SMALL_SCENES)
    return manifest


def read_all_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(Path(root).iterdir())}


class TestBuildDataset:
    def test_file_set(self, dataset):
        names = {p.name for p in dataset.base_dir.iterdir()}
        expected = {"manifest.json"}
        for i in range(3):
            expected |= {f"depth_{i:05d}.pfm", f"coll_{i:05d}.pfm"}
        assert names == expected

    def test_rerun_is_bit_identical(self, dataset, tmp_path):
        build_dataset(tmp_path, count=3, seed=5, K=SMALL_K,
                      robot=RobotSpec(0.25), scene_config=SMALL_SCENES)
        assert read_all_bytes(tmp_path) == read_all_bytes(dataset.base_dir)

    def test_worker_count_does_not_change_output(self, dataset, tmp_path):
        build_dataset(tmp_path, count=3, seed=5, K=SMALL_K,
                      robot=RobotSpec(0.25), scene_config=SMALL_SCENES,
                      workers=3)
        assert read_all_bytes(tmp_path) == read_all_bytes(dataset.base_dir)

    def test_seed_changes_output(self, dataset, tmp_path):
        build_dataset(tmp_path, count=3, seed=6, K=SMALL_K,
                      robot=RobotSpec(0.25), scene_config=SMALL_SCENES)
        assert read_all_bytes(tmp_path) != read_all_bytes(dataset.base_dir)

    def test_entry_seeds_offset_from_base(self, dataset):
        assert [e["seed"] for e in dataset.entries] == [5, 6, 7]

    def test_pairs_satisfy_collision_inequality(self, dataset):
        check_pair_invariants(dataset)

    def test_corrupted_pair_detected(self, dataset, tmp_path):
        build_dataset(tmp_path, count=1, seed=5, K=SMALL_K,
                      robot=RobotSpec(0.25), scene_config=SMALL_SCENES)
        bad = load_manifest(tmp_path)
        depth = load_image(bad.depth_path(0))
        depth.data[depth.valid_mask] += 1.0
        np.clip(depth.data, 0.0, depth.max_range, out=depth.data)
        from collenc.imagecore import save_image

        save_image(bad.collision_path(0), quantize_f32(depth))
        with pytest.raises(AssertionError, match="exceeds depth"):
            check_pair_invariants(bad)

    def test_count_validation(self, tmp_path):
        with pytest.raises(ValueError, match="count"):
            build_dataset(tmp_path, count=0, seed=0, K=SMALL_K,
                          robot=RobotSpec(0.1))

    def test_stored_images_round_trip_exactly(self, dataset):
        depth, coll = dataset.load_pair(0)
        assert np.array_equal(depth.data, depth.data.astype(np.float32))
        assert np.array_equal(coll.data, coll.data.astype(np.float32))


class TestManifest:
    def test_json_round_trip(self, dataset):
        text = dataset.to_json()
        again = DatasetManifest.from_json(text, base_dir=dataset.base_dir)
        assert again.to_json() == text
        assert again.intrinsics == dataset.intrinsics
        assert again.robot.r == dataset.robot.r
        assert again.collision == dataset.collision
        assert again.entries == dataset.entries

    def test_load_manifest_accepts_dir_or_file(self, dataset):
        by_dir = load_manifest(dataset.base_dir)
        by_file = load_manifest(dataset.base_dir / "manifest.json")
        assert by_dir.to_json() == by_file.to_json()
        assert by_dir.config_hash == dataset.config_hash

    def test_hash_tracks_settings(self, dataset, tmp_path):
        other = build_dataset(tmp_path, count=3, seed=5, K=SMALL_K,
                              robot=RobotSpec(0.3), scene_config=SMALL_SCENES)
        assert other.config_hash != dataset.config_hash

    def test_edge_subsampling_disabled(self, dataset):
        assert dataset.collision.edge_fraction == 1.0


class TestManifestArrays:
    def test_shapes_and_normalization(self, dataset):
        x, t, m = manifest_arrays(dataset, "collnet")
        assert x.shape == (3, 1, 30, 40)
        assert t.shape == x.shape and m.shape == x.shape
        assert m.dtype == bool
        assert x.max() <= 1.0 and x.min() >= 0.0

    def test_vanilla_targets_are_inputs(self, dataset):
        x, t, m = manifest_arrays(dataset, "vanilla")
        np.testing.assert_array_equal(x, t)
        np.testing.assert_array_equal(m, x > 0)

    def test_collnet_targets_below_inputs(self, dataset):
        x, t, m = manifest_arrays(dataset, "collnet")
        assert np.all(t[m] <= x[m])

    def test_mode_validation(self, dataset):
        with pytest.raises(ValueError, match="mode"):
            manifest_arrays(dataset, "autoencoder")


class TestCompressionRatio:
    def test_full_scale_value(self):
        assert compression_ratio(270 * 480, 32) == 4050.0

    def test_full_scale_series(self):
        pixels = 270 * 480
        ratios = [compression_ratio(pixels, b) for b in (32, 64, 128, 256)]
        assert ratios == [4050.0, 2025.0, 1012.5, 506.25]

    def test_desk_scale_value(self):
        assert compression_ratio(60 * 80, 32) == 150.0

    def test_bad_budget(self):
        with pytest.raises(ValueError):
            compression_ratio(4800, 0)


class TestMetricsTable:
    def table(self):
        rows = [
            MetricsRow("wavelet", 64, 75.0, mse_depth=0.5),
            MetricsRow("fft", 32, 150.0, mse_depth=0.25),
            MetricsRow("collnet", 16, 300.0, mse_coll=0.125),
        ]
        return MetricsTable(60, 80, rows)

    def test_header_and_order(self):
        lines = self.table().to_csv().splitlines()
        assert lines[0] == ("method,budget,compression_ratio,mse_depth,"
                            "mse_coll,mse_depth_8bit,mse_coll_8bit")
        assert [l.split(",")[0] for l in lines[1:]] == [
            "collnet", "fft", "wavelet"]

    def test_empty_cells_for_missing_metrics(self):
        lines = self.table().to_csv().splitlines()
        assert lines[1] == "collnet,16,300.0,,0.125,,8128.125"
        assert lines[2] == "fft,32,150.0,0.25,,16256.25,"

    def test_lf_endings_and_trailing_newline(self):
        text = self.table().to_csv()
        assert "\r" not in text
        assert text.endswith("\n") and not text.endswith("\n\n")

    def test_eight_bit_column_scale(self):
        line = self.table().to_csv().splitlines()[3]
        cells = line.split(",")
        assert float(cells[5]) == pytest.approx(0.5 * 255.0**2)


def tiny_model(latent=3, seed=0):
    cfg = VaeConfig(height=30, width=40, latent_dim=latent,
                    enc_channels=(2, 3, 4, 4), dec_hidden=8,
                    dec_channels=(4, 3, 2))
    return VaeModel.create(cfg, seed=seed)


class TestEvaluateCodecs:
    def test_rows_and_monotonicity(self, dataset):
        table = evaluate_codecs(dataset, budgets=(32, 64, 128))
        assert {(r.method, r.budget) for r in table.rows} == {
            (m, b) for m in ("fft", "wavelet") for b in (32, 64, 128)
        }
        for method in ("fft", "wavelet"):
            series = [r.mse_depth for r in table.sorted_rows()
                      if r.method == method]
            assert series == sorted(series, reverse=True)

    def test_ratio_column(self, dataset):
        table = evaluate_codecs(dataset, budgets=(32,))
        for row in table.rows:
            assert row.compression_ratio == 40 * 30 / row.budget

    def test_rerun_bit_identical(self, dataset):
        a = evaluate_codecs(dataset, budgets=(32, 64)).to_csv()
        b = evaluate_codecs(dataset, budgets=(32, 64)).to_csv()
        assert a == b

    def test_vanilla_rows_require_model(self, dataset):
        with pytest.raises(ValueError, match="no trained model"):
            evaluate_codecs(dataset, budgets=(32,), vanilla_models={8: None})

    def test_vanilla_row_present_with_model(self, dataset):
        table = evaluate_codecs(dataset, budgets=(32,),
                                vanilla_models={3: tiny_model()})
        methods = {r.method for r in table.rows}
        assert methods == {"fft", "wavelet", "vanilla"}
        van = [r for r in table.rows if r.method == "vanilla"][0]
        assert van.budget == 3
        assert van.mse_depth is not None and van.mse_coll is None


class TestEvaluateCollision:
    def test_row_structure(self, dataset):
        table = evaluate_collision(dataset, {3: tiny_model(seed=1)},
                                   {3: tiny_model(seed=2)})
        by_method = {r.method: r for r in table.rows}
        assert set(by_method) == {"collnet", "vanilla"}
        assert by_method["collnet"].mse_coll is not None
        assert by_method["collnet"].mse_depth is None
        assert by_method["vanilla"].mse_coll is not None
        assert by_method["vanilla"].mse_depth is not None

    def test_missing_model_raises(self, dataset):
        with pytest.raises(ValueError, match="no trained model"):
            evaluate_collision(dataset, {3: None}, {})

    def test_rerun_bit_identical(self, dataset):
        models = ({3: tiny_model(seed=1)}, {3: tiny_model(seed=2)})
        a = evaluate_collision(dataset, *models).to_csv()
        b = evaluate_collision(dataset, *models).to_csv()
        assert a == b

    def test_perfect_collnet_scores_near_zero(self, dataset):
        # stand-in whose reconstruction IS the stored collision image
        class Oracle:
            def reconstruct(self, x):
                _, t, _ = manifest_arrays(dataset, "collnet")
                return t[: x.shape[0]]

        table = evaluate_collision(dataset, {3: Oracle()}, {})
        assert table.rows[0].mse_coll < 1e-12


class TestErrorPanel:
    def test_identical_inputs_all_black(self):
        a = np.linspace(0, 1, 12).reshape(3, 4)
        panel, scale = error_panel(a, a.copy())
        assert scale == 0.0
        assert panel.dtype == np.uint8
        assert not panel.any()

    def test_normalized_to_full_scale(self):
        a = np.zeros((2, 2))
        b = np.array([[0.0, 0.1], [0.2, 0.4]])
        panel, scale = error_panel(a, b)
        assert scale == 0.4
        assert panel[1, 1] == 255
        assert panel[0, 1] == 64  # 0.25 * 255 rounded half up


class TestEmitReport:
    def test_files_and_sidecar(self, dataset, tmp_path):
        depth, coll = dataset.load_pair(0)
        table = evaluate_codecs(dataset, budgets=(32,))
        written = emit_report(tmp_path, {"codecs": table},
                              {"pair0": (depth, coll)})
        names = {p.name for p in written}
        assert names == {"codecs.csv", "pair0_ref.pgm", "pair0_cmp.pgm",
                         "pair0_err.pgm", "panels.json"}
        sidecar = json.loads((tmp_path / "panels.json").read_text())
        assert sidecar["pair0"]["error_scale"] >= 0.0
        assert (tmp_path / "pair0_ref.pgm").read_bytes().startswith(b"P5\n40 30\n")

    def test_identical_panel_is_black_with_zero_scale(self, dataset, tmp_path):
        depth, _ = dataset.load_pair(0)
        emit_report(tmp_path, {}, {"same": (depth, depth.copy())})
        sidecar = json.loads((tmp_path / "panels.json").read_text())
        assert sidecar["same"]["error_scale"] == 0.0
        raw = (tmp_path / "same_err.pgm").read_bytes()
        payload = raw.split(b"\n", 3)[3]
        assert payload == bytes(len(payload))

    def test_csv_bytes_stable_across_runs(self, dataset, tmp_path):
        table = evaluate_codecs(dataset, budgets=(32,))
        emit_report(tmp_path / "a", {"t": table})
        emit_report(tmp_path / "b", {"t": table})
        assert (tmp_path / "a" / "t.csv").read_bytes() == \
            (tmp_path / "b" / "t.csv").read_bytes()


class TestQuantize:
    def test_idempotent(self, dataset):
        depth, _ = dataset.load_pair(0)
        again = quantize_f32(depth)
        np.testing.assert_array_equal(again.data, depth.data)

    def test_preserves_type_and_range(self):
        img = DepthImage(np.full((2, 2), 1.0 / 3.0), max_range=5.0)
        out = quantize_f32(img)
        assert type(out) is DepthImage
        assert out.max_range == 5.0
        assert out.data[0, 0] == np.float32(1.0 / 3.0)
