import numpy as np
import numpy.testing as npt
import pytest

from collenc.neural.vae import (
    VaeConfig,
    VaeModel,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    vae_loss,
)


def tiny_config(**over):
    base = dict(height=16, width=16, latent_dim=4, enc_channels=(2, 3, 4, 4),
                dec_hidden=8, dec_channels=(4, 3, 2), beta_norm=1e-2)
    base.update(over)
    return VaeConfig(**base)


class TestConfig:
    def test_desk_scale_pyramid(self):
        cfg = VaeConfig()
        assert cfg.pyramid() == [(60, 80), (30, 40), (15, 20), (8, 10), (4, 5)]
        assert cfg.flat_dim == 64 * 4 * 5

    def test_tiny_pyramid(self):
        cfg = tiny_config()
        assert cfg.pyramid() == [(16, 16), (8, 8), (4, 4), (2, 2), (1, 1)]
        assert cfg.flat_dim == 4

    def test_json_roundtrip(self):
        cfg = tiny_config(beta_norm=0.5)
        assert VaeConfig.from_json(cfg.to_json()) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            VaeConfig(latent_dim=0)
        with pytest.raises(ValueError):
            VaeConfig(beta_norm=-1.0)
        with pytest.raises(ValueError):
            VaeConfig(height=8, width=8)  # too small for 4 stride-2 stages
        with pytest.raises(ValueError):
            VaeConfig(dec_channels=(64, 32))  # one tconv short


class TestModel:
    def test_create_is_deterministic(self):
        a = VaeModel.create(tiny_config(), seed=3)
        b = VaeModel.create(tiny_config(), seed=3)
        assert a.params.keys() == b.params.keys()
        for k in a.params:
            npt.assert_array_equal(a.params[k], b.params[k])
        c = VaeModel.create(tiny_config(), seed=4)
        assert not np.array_equal(a.params["mu.w"], c.params["mu.w"])

    def test_encode_shapes(self):
        model = VaeModel.create(tiny_config(), seed=0)
        x = np.random.default_rng(0).random((3, 1, 16, 16))
        mu, logvar, _ = model.encode(x)
        assert mu.shape == (3, 4) and logvar.shape == (3, 4)
        assert np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))

    def test_encode_rejects_wrong_shape(self):
        model = VaeModel.create(tiny_config(), seed=0)
        with pytest.raises(ValueError):
            model.encode(np.zeros((1, 1, 8, 8)))

    def test_zeroed_heads_give_zero_latent(self):
        model = VaeModel.create(tiny_config(), seed=0)
        for k in ("mu.w", "mu.b", "logvar.w", "logvar.b"):
            model.params[k][:] = 0.0
        mu, logvar, _ = model.encode(np.random.default_rng(1).random((2, 1, 16, 16)))
        npt.assert_array_equal(mu, 0.0)
        npt.assert_array_equal(logvar, 0.0)

    def test_decode_shape_and_bounds(self):
        model = VaeModel.create(tiny_config(), seed=0)
        z = np.random.default_rng(2).standard_normal((5, 4))
        y, _ = model.decode(z)
        assert y.shape == (5, 1, 16, 16)
        assert np.all(y > 0.0) and np.all(y < 1.0)

    def test_desk_scale_shapes(self):
        model = VaeModel.create(VaeConfig(), seed=0)
        x = np.random.default_rng(3).random((2, 1, 60, 80))
        y = model.reconstruct(x)
        assert y.shape == (2, 1, 60, 80)

    def test_eval_mode_deterministic(self):
        model = VaeModel.create(tiny_config(), seed=0)
        x = np.random.default_rng(4).random((2, 1, 16, 16))
        npt.assert_array_equal(model.reconstruct(x), model.reconstruct(x))


class TestReparameterize:
    def test_zero_noise_returns_mu(self):
        mu = np.array([[1.0, -2.0]])
        npt.assert_array_equal(reparameterize(mu, np.zeros((1, 2)), 0.0), mu)

    def test_hand_evaluated(self):
        z = reparameterize(np.array([1.0]), np.array([0.0]), np.array([2.0]))
        npt.assert_array_equal(z, [3.0])

    def test_collapsed_variance_limit(self):
        mu = np.array([0.7])
        z = reparameterize(mu, np.array([-80.0]), np.array([3.0]))
        assert abs(z[0] - mu[0]) < 1e-15


class TestLoss:
    def test_prior_match_gives_zero_kl(self):
        t = np.zeros((1, 1, 2, 2))
        total, recon, kl = vae_loss(t, t, np.zeros((1, 2)), np.zeros((1, 2)),
                                    beta=1.0, mask=np.ones_like(t, dtype=bool))
        assert total == 0.0 and recon == 0.0 and kl == 0.0

    def test_hand_evaluated_kl(self):
        # mu=1, logvar=0, J=1: 0.5*(1 + 1 - 1 - 0) = 0.5
        t = np.zeros((1, 1, 1, 1))
        _, _, kl = vae_loss(t, t, np.array([[1.0]]), np.array([[0.0]]),
                            beta=1.0, mask=np.ones_like(t, dtype=bool))
        assert kl == 0.5

    def test_kl_nonnegative(self):
        rng = np.random.default_rng(5)
        t = np.zeros((4, 1, 2, 2))
        for _ in range(50):
            mu = rng.standard_normal((4, 3))
            lv = rng.uniform(-3, 3, (4, 3))
            _, _, kl = vae_loss(t, t, mu, lv, beta=1.0,
                                mask=np.ones_like(t, dtype=bool))
            assert kl >= 0.0

    def test_masked_pixels_ignored(self):
        rng = np.random.default_rng(6)
        recon = rng.random((1, 1, 4, 4))
        target = rng.random((1, 1, 4, 4))
        mask = rng.random((1, 1, 4, 4)) < 0.5
        base = vae_loss(target, recon, np.zeros((1, 2)), np.zeros((1, 2)),
                        1.0, mask)
        poked = target.copy()
        poked[~mask] += 100.0
        after = vae_loss(poked, recon, np.zeros((1, 2)), np.zeros((1, 2)),
                         1.0, mask)
        assert base == after


class TestFullModelGradients:
    H = 1e-5

    def setup_method(self):
        self.model = VaeModel.create(tiny_config(), seed=9)
        rng = np.random.default_rng(10)
        self.x = rng.random((2, 1, 16, 16))
        self.target = rng.random((2, 1, 16, 16))
        self.mask = rng.random((2, 1, 16, 16)) < 0.8
        self.eps = rng.standard_normal((2, 4))

    def loss(self):
        parts, _ = self.model.loss_and_grads(
            self.x, self.target, self.mask, beta=0.01, eps=self.eps
        )
        return parts["total"]

    def check_param(self, name):
        _, grads = self.model.loss_and_grads(
            self.x, self.target, self.mask, beta=0.01, eps=self.eps
        )
        arr = self.model.params[name]
        flat = arr.ravel()
        ga = grads[name].ravel()
        worst = 0.0
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + self.H
            fp = self.loss()
            flat[i] = old - self.H
            fm = self.loss()
            flat[i] = old
            gn = (fp - fm) / (2 * self.H)
            denom = max(abs(ga[i]), abs(gn), 1e-3)
            worst = max(worst, abs(ga[i] - gn) / denom)
        return worst

    @pytest.mark.parametrize("name", [
        "enc0.conv1.w", "enc2.proj.b", "mu.w", "logvar.b",
        "dec1.w", "tconv1.b", "tconv3.w",
    ])
    def test_representative_parameters(self, name):
        assert self.check_param(name) < 1e-4

    def test_grads_cover_every_parameter(self):
        _, grads = self.model.loss_and_grads(
            self.x, self.target, self.mask, beta=0.01, eps=self.eps
        )
        assert grads.keys() == self.model.params.keys()
        for k, g in grads.items():
            assert g.shape == self.model.params[k].shape

    def test_masked_pixels_have_zero_gradient(self):
        parts_a, grads_a = self.model.loss_and_grads(
            self.x, self.target, self.mask, beta=0.01, eps=self.eps
        )
        poked = self.target.copy()
        poked[~self.mask] += 50.0
        parts_b, grads_b = self.model.loss_and_grads(
            self.x, poked, self.mask, beta=0.01, eps=self.eps
        )
        assert parts_a == parts_b
        for k in grads_a:
            npt.assert_array_equal(grads_a[k], grads_b[k])

    def test_shard_denominators_sum_exactly(self):
        nv = int(np.count_nonzero(self.mask))
        full, fg = self.model.loss_and_grads(
            self.x, self.target, self.mask, beta=0.01, eps=self.eps
        )
        halves = []
        for i in range(2):
            s = slice(i, i + 1)
            halves.append(self.model.loss_and_grads(
                self.x[s], self.target[s], self.mask[s], beta=0.01,
                eps=self.eps[s], recon_denom=nv, batch_denom=2,
            ))
        total = sum(p["total"] for p, _ in halves)
        npt.assert_allclose(total, full["total"], rtol=1e-12)
        for k in fg:
            npt.assert_allclose(halves[0][1][k] + halves[1][1][k], fg[k],
                                rtol=1e-9, atol=1e-12)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        model = VaeModel.create(tiny_config(), seed=12)
        p = tmp_path / "model.bin"
        save_checkpoint(p, model)
        back = load_checkpoint(p)
        assert back.config == model.config
        assert back.params.keys() == model.params.keys()
        for k in model.params:
            npt.assert_array_equal(back.params[k], model.params[k])

    def test_checkpoint_reconstruction_identical(self, tmp_path):
        model = VaeModel.create(tiny_config(), seed=13)
        x = np.random.default_rng(14).random((2, 1, 16, 16))
        p = tmp_path / "model.bin"
        save_checkpoint(p, model)
        npt.assert_array_equal(load_checkpoint(p).reconstruct(x),
                               model.reconstruct(x))

    def test_truncation_detected(self, tmp_path):
        model = VaeModel.create(tiny_config(), seed=15)
        p = tmp_path / "model.bin"
        save_checkpoint(p, model)
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(p)

    def test_trailing_garbage_detected(self, tmp_path):
        model = VaeModel.create(tiny_config(), seed=16)
        p = tmp_path / "model.bin"
        save_checkpoint(p, model)
        p.write_bytes(p.read_bytes() + b"\x00")
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(p)
