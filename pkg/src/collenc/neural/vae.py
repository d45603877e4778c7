"""Variational encoder/decoder built on the float64 layer kit.

Architecture (desk scale): four stride-2 residual conv blocks with ELU
(each block: 3x3 s2 conv, ELU, 3x3 s1 conv, plus a 1x1 s2 projection of
the input, summed, ELU), flattened into two linear heads for mu and
logvar. The decoder is two linear layers and four transposed convs with
ReLU between stages and a final sigmoid, so outputs live in (0, 1).

Images are normalized by max_range before encoding; invalid pixels enter
as 0 and are excluded from the reconstruction loss by the validity mask.
The KL term is the standard non-negative Gaussian divergence
0.5 * sum(mu^2 + exp(logvar) - 1 - logvar).
"""

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .layers import (
    conv2d_backward,
    conv2d_forward,
    conv_out_size,
    elu_backward,
    elu_forward,
    linear_backward,
    linear_forward,
    relu_backward,
    relu_forward,
    sigmoid_backward,
    sigmoid_forward,
    tconv2d_backward,
    tconv2d_forward,
)

_CKPT_MAGIC = b"VAE1"


@dataclass
class VaeConfig:
    height: int = 60
    width: int = 80
    latent_dim: int = 16
    enc_channels: tuple = (16, 32, 64, 64)
    dec_hidden: int = 256
    dec_channels: tuple = (64, 32, 16)
    beta_norm: float = 1e-4
    max_range: float = 10.0

    def __post_init__(self):
        self.enc_channels = tuple(self.enc_channels)
        self.dec_channels = tuple(self.dec_channels)
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.beta_norm < 0:
            raise ValueError("beta_norm must be non-negative")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if len(self.dec_channels) != len(self.enc_channels) - 1:
            raise ValueError("need one transposed conv per encoder block")
        steps = len(self.enc_channels)
        if min(self.height, self.width) < (1 << steps):
            raise ValueError("input too small for the stride schedule")

    def pyramid(self):
        """Spatial sizes after each stride-2 stage, input first."""
        sizes = [(self.height, self.width)]
        for _ in self.enc_channels:
            h, w = sizes[-1]
            sizes.append((conv_out_size(h, 3, 2, 1), conv_out_size(w, 3, 2, 1)))
        return sizes

    @property
    def flat_dim(self) -> int:
        h, w = self.pyramid()[-1]
        return self.enc_channels[-1] * h * w

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VaeConfig":
        raw = json.loads(text)
        raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        return cls(**raw)


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class VaeModel:
    """Parameter container plus forward/backward passes."""

    def __init__(self, config: VaeConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def create(cls, config: VaeConfig, seed: int = 0) -> "VaeModel":
        """Fan-in-scaled uniform init; fixed parameter order, one stream."""
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
        )
        p = {}
        c_in = 1
        for i, c_out in enumerate(config.enc_channels):
            p[f"enc{i}.conv1.w"] = _uniform_init(rng, (c_out, c_in, 3, 3), c_in * 9)
            p[f"enc{i}.conv1.b"] = _uniform_init(rng, (c_out,), c_in * 9)
            p[f"enc{i}.conv2.w"] = _uniform_init(rng, (c_out, c_out, 3, 3), c_out * 9)
            p[f"enc{i}.conv2.b"] = _uniform_init(rng, (c_out,), c_out * 9)
            p[f"enc{i}.proj.w"] = _uniform_init(rng, (c_out, c_in, 1, 1), c_in)
            p[f"enc{i}.proj.b"] = _uniform_init(rng, (c_out,), c_in)
            c_in = c_out
        flat = config.flat_dim
        j = config.latent_dim
        p["mu.w"] = _uniform_init(rng, (j, flat), flat)
        p["mu.b"] = _uniform_init(rng, (j,), flat)
        p["logvar.w"] = _uniform_init(rng, (j, flat), flat)
        p["logvar.b"] = _uniform_init(rng, (j,), flat)
        p["dec1.w"] = _uniform_init(rng, (config.dec_hidden, j), j)
        p["dec1.b"] = _uniform_init(rng, (config.dec_hidden,), j)
        p["dec2.w"] = _uniform_init(rng, (flat, config.dec_hidden), config.dec_hidden)
        p["dec2.b"] = _uniform_init(rng, (flat,), config.dec_hidden)
        chain = (config.enc_channels[-1],) + config.dec_channels + (1,)
        for i in range(len(chain) - 1):
            cin, cout = chain[i], chain[i + 1]
            p[f"tconv{i}.w"] = _uniform_init(rng, (cin, cout, 3, 3), cout * 9)
            p[f"tconv{i}.b"] = _uniform_init(rng, (cout,), cout * 9)
        return cls(config, p)

    # -- encoder ------------------------------------------------------------

    def _block_forward(self, x, i):
        p = self.params
        h1, c1 = conv2d_forward(x, p[f"enc{i}.conv1.w"], p[f"enc{i}.conv1.b"], 2, 1)
        a1, ca = elu_forward(h1)
        h2, c2 = conv2d_forward(a1, p[f"enc{i}.conv2.w"], p[f"enc{i}.conv2.b"], 1, 1)
        pr, cp = conv2d_forward(x, p[f"enc{i}.proj.w"], p[f"enc{i}.proj.b"], 2, 0)
        out, ce = elu_forward(h2 + pr)
        return out, (c1, ca, c2, cp, ce)

    def _block_backward(self, grad, cache, i, grads):
        c1, ca, c2, cp, ce = cache
        gs = elu_backward(grad, ce)
        ga1, gw2, gb2 = conv2d_backward(gs, c2)
        gxp, gwp, gbp = conv2d_backward(gs, cp)
        gh1 = elu_backward(ga1, ca)
        gx1, gw1, gb1 = conv2d_backward(gh1, c1)
        grads[f"enc{i}.conv1.w"] = gw1
        grads[f"enc{i}.conv1.b"] = gb1
        grads[f"enc{i}.conv2.w"] = gw2
        grads[f"enc{i}.conv2.b"] = gb2
        grads[f"enc{i}.proj.w"] = gwp
        grads[f"enc{i}.proj.b"] = gbp
        return gx1 + gxp

    def encode(self, x):
        """Normalized batch (N,1,H,W) -> (mu, logvar, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (
            self.config.height, self.config.width,
        ):
            raise ValueError("input shape does not match the model config")
        h = x
        block_caches = []
        for i in range(len(self.config.enc_channels)):
            h, c = self._block_forward(h, i)
            block_caches.append(c)
        flat = h.reshape(h.shape[0], -1)
        mu, cm = linear_forward(flat, self.params["mu.w"], self.params["mu.b"])
        logvar, cl = linear_forward(
            flat, self.params["logvar.w"], self.params["logvar.b"]
        )
        return mu, logvar, (block_caches, h.shape, cm, cl)

    def _encode_backward(self, grad_mu, grad_logvar, cache, grads):
        block_caches, h_shape, cm, cl = cache
        gf_mu, gw, gb = linear_backward(grad_mu, cm)
        grads["mu.w"] = gw
        grads["mu.b"] = gb
        gf_lv, gw, gb = linear_backward(grad_logvar, cl)
        grads["logvar.w"] = gw
        grads["logvar.b"] = gb
        g = (gf_mu + gf_lv).reshape(h_shape)
        for i in range(len(block_caches) - 1, -1, -1):
            g = self._block_backward(g, block_caches[i], i, grads)
        return g

    # -- decoder ------------------------------------------------------------

    def decode(self, z):
        """Latent batch (N,J) -> (reconstruction (N,1,H,W), cache)."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise ValueError("latent shape does not match the model config")
        p = self.params
        pyr = self.config.pyramid()
        h1, c1 = linear_forward(z, p["dec1.w"], p["dec1.b"])
        a1, ca1 = relu_forward(h1)
        h2, c2 = linear_forward(a1, p["dec2.w"], p["dec2.b"])
        a2, ca2 = relu_forward(h2)
        bh, bw = pyr[-1]
        h = a2.reshape(z.shape[0], self.config.enc_channels[-1], bh, bw)
        tcaches = []
        n_t = len(self.config.dec_channels) + 1
        for i in range(n_t):
            out_hw = pyr[-(i + 2)]
            h, ct = tconv2d_forward(h, p[f"tconv{i}.w"], p[f"tconv{i}.b"], 2, 1, out_hw)
            if i < n_t - 1:
                h, cr = relu_forward(h)
                tcaches.append((ct, cr))
            else:
                tcaches.append((ct, None))
        y, cs = sigmoid_forward(h)
        return y, (c1, ca1, c2, ca2, tcaches, cs)

    def _decode_backward(self, grad_y, cache, grads):
        c1, ca1, c2, ca2, tcaches, cs = cache
        g = sigmoid_backward(grad_y, cs)
        for i in range(len(tcaches) - 1, -1, -1):
            ct, cr = tcaches[i]
            if cr is not None:
                g = relu_backward(g, cr)
            g, gw, gb = tconv2d_backward(g, ct)
            grads[f"tconv{i}.w"] = gw
            grads[f"tconv{i}.b"] = gb
        g = g.reshape(g.shape[0], -1)
        g = relu_backward(g, ca2)
        g, gw, gb = linear_backward(g, c2)
        grads["dec2.w"] = gw
        grads["dec2.b"] = gb
        g = relu_backward(g, ca1)
        g, gw, gb = linear_backward(g, c1)
        grads["dec1.w"] = gw
        grads["dec1.b"] = gb
        return g

    # -- loss ---------------------------------------------------------------

    def reconstruct(self, x):
        """Eval-mode pass: z = mu, no sampling."""
        mu, _, _ = self.encode(x)
        y, _ = self.decode(mu)
        return y

    def loss_and_grads(self, x, target, mask, beta, eps=None,
                       recon_denom=None, batch_denom=None):
        """Forward + backward over the whole model.

        eps is the (N, J) standard-normal draw for reparameterization, or
        None for the deterministic z = mu path. Returns (parts, grads)
        where parts has keys total/recon/kl.

        recon_denom / batch_denom override the valid-pixel and batch
        counts used for normalization; shards of a larger batch pass the
        full-batch counts so their losses and gradients sum exactly.
        """
        x = np.asarray(x, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if target.shape != x.shape or mask.shape != x.shape:
            raise ValueError("input, target and mask shapes must match")
        n = batch_denom if batch_denom is not None else x.shape[0]
        mu, logvar, enc_cache = self.encode(x)
        if eps is None:
            z = mu
        else:
            eps = np.asarray(eps, dtype=np.float64)
            if eps.shape != mu.shape:
                raise ValueError("noise shape must match (batch, latent_dim)")
            z = reparameterize(mu, logvar, eps)
        y, dec_cache = self.decode(z)

        n_valid = (recon_denom if recon_denom is not None
                   else int(np.count_nonzero(mask)))
        if n_valid:
            diff = np.where(mask, y - target, 0.0)
            recon = float(np.sum(diff * diff) / n_valid)
            grad_y = 2.0 * diff / n_valid
        else:
            recon = 0.0
            grad_y = np.zeros_like(y)
        kl = float(0.5 * np.sum(mu**2 + np.exp(logvar) - 1.0 - logvar) / n)
        total = recon + beta * kl

        grads = {}
        grad_z = self._decode_backward(grad_y, dec_cache, grads)
        grad_mu = grad_z.copy()
        grad_logvar = np.zeros_like(logvar)
        if eps is not None:
            grad_logvar += grad_z * eps * np.exp(0.5 * logvar) * 0.5
        grad_mu += beta * mu / n
        grad_logvar += beta * 0.5 * (np.exp(logvar) - 1.0) / n
        self._encode_backward(grad_mu, grad_logvar, enc_cache, grads)
        return {"total": total, "recon": recon, "kl": kl}, grads


def reparameterize(mu, logvar, noise):
    """z = mu + exp(logvar / 2) * noise."""
    return mu + np.exp(0.5 * np.asarray(logvar)) * np.asarray(noise)


def vae_loss(target, recon, mu, logvar, beta, mask):
    """Loss triple (total, recon, kl) without gradients, for reporting."""
    target = np.asarray(target, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if recon.shape != target.shape or mask.shape != target.shape:
        raise ValueError("target, reconstruction and mask shapes must match")
    n = mu.shape[0] if np.ndim(mu) == 2 else 1
    n_valid = int(np.count_nonzero(mask))
    if n_valid:
        diff = np.where(mask, recon - target, 0.0)
        r = float(np.sum(diff * diff) / n_valid)
    else:
        r = 0.0
    kl = float(0.5 * np.sum(
        np.asarray(mu) ** 2 + np.exp(logvar) - 1.0 - np.asarray(logvar)
    ) / n)
    return r + beta * kl, r, kl


# ---------------------------------------------------------------------------
# Checkpoints: magic + config JSON + named tensor table, little-endian
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: VaeModel) -> None:
    blob = [_CKPT_MAGIC]
    cfg = model.config.to_json().encode("utf-8")
    blob.append(struct.pack("<I", len(cfg)))
    blob.append(cfg)
    blob.append(struct.pack("<I", len(model.params)))
    for name, value in model.params.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        blob.append(struct.pack("<H", len(nb)))
        blob.append(nb)
        blob.append(struct.pack("<B", arr.ndim))
        blob.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        blob.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


def load_checkpoint(path) -> VaeModel:
    with open(path, "rb") as fh:
        raw = fh.read()

    view = memoryview(raw)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError("truncated checkpoint")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != _CKPT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    (cfg_len,) = struct.unpack("<I", take(4))
    config = VaeConfig.from_json(bytes(take(cfg_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
        params[name] = data.astype(np.float64)
    if pos != len(view):
        raise ValueError("trailing bytes after checkpoint payload")
    return VaeModel(config, params)
