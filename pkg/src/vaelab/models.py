"""Encoder/decoder networks and the optimizer that trains them.

The encoder is a tanh MLP with separate mean and spread heads.  Decoders come
in three flavours: diagonal Gaussian, independent Bernoulli, and a masked
autoregressive Bernoulli MLP whose output i sees only x_<i plus the latent
code (conditioning enters the first hidden layer unmasked).
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import BernoulliVector, DiagGaussian, bernoulli_log_prob

CHECKPOINT_VERSION = 1


def _init_layer(rng, params, name, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    params[f"{name}_w"] = ad.parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
    params[f"{name}_b"] = ad.parameter(np.zeros(fan_out))


def _dense(params, name, h, mask=None):
    w = params[f"{name}_w"]
    if mask is not None:
        w = ad.mul(w, mask)
    return ad.add(ad.matmul(h, w), params[f"{name}_b"])


def _made_masks(data_dim, hidden):
    """Connectivity masks for natural-order autoregression over data_dim bits."""
    if data_dim < 2:
        raise ValueError("autoregressive decoder needs data_dim >= 2")
    deg_in = np.arange(1, data_dim + 1)
    degrees = [deg_in]
    for width in hidden:
        degrees.append((np.arange(width) % (data_dim - 1)) + 1)
    masks = []
    for prev, cur in zip(degrees[:-1], degrees[1:]):
        masks.append((cur[None, :] >= prev[:, None]).astype(np.float64))
    # output coordinate i may only see degrees strictly below i+1
    masks.append((deg_in[None, :] > degrees[-1][:, None]).astype(np.float64))
    return masks


@dataclass
class ModelPair:
    """Encoder parameters, decoder parameters, and their wiring."""

    data_dim: int
    latent_dim: int
    decoder_kind: str
    hidden: tuple
    clamp_floor: float
    encoder_params: dict
    decoder_params: dict
    masks: list = field(default_factory=list)

    @classmethod
    def create(cls, data_dim, latent_dim, decoder_kind="gaussian", hidden=(64, 64),
               clamp_floor=1e-3, seed=0):
        if decoder_kind not in ("gaussian", "bernoulli", "autoregressive"):
            raise ValueError(f"unknown decoder kind {decoder_kind!r}")
        rng = np.random.default_rng(seed)
        enc = {}
        sizes = [data_dim, *hidden]
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            _init_layer(rng, enc, f"enc{i}", a, b)
        _init_layer(rng, enc, "enc_mean", sizes[-1], latent_dim)
        _init_layer(rng, enc, "enc_spread", sizes[-1], latent_dim)

        dec = {}
        masks = []
        if decoder_kind == "autoregressive":
            masks = _made_masks(data_dim, hidden)
            sizes = [data_dim, *hidden, data_dim]
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                _init_layer(rng, dec, f"dec{i}", a, b)
            _init_layer(rng, dec, "dec_cond", latent_dim, hidden[0])
        else:
            sizes = [latent_dim, *hidden]
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                _init_layer(rng, dec, f"dec{i}", a, b)
            if decoder_kind == "gaussian":
                _init_layer(rng, dec, "dec_mean", sizes[-1], data_dim)
                _init_layer(rng, dec, "dec_spread", sizes[-1], data_dim)
            else:
                _init_layer(rng, dec, "dec_logits", sizes[-1], data_dim)
        return cls(data_dim, latent_dim, decoder_kind, tuple(hidden), clamp_floor,
                   enc, dec, masks)

    def all_params(self):
        merged = dict(self.encoder_params)
        merged.update(self.decoder_params)
        return merged


def encode(model, x):
    """q(z|x) for a single vector or a batch of rows."""
    x = ad.as_tensor(x)
    if x.shape[-1] != model.data_dim:
        raise ad.ShapeError("encode", x.shape, (model.data_dim,))
    h = x
    for i in range(len(model.hidden)):
        h = ad.tanh(_dense(model.encoder_params, f"enc{i}", h))
    mean = _dense(model.encoder_params, "enc_mean", h)
    spread = _dense(model.encoder_params, "enc_spread", h)
    return DiagGaussian(mean, spread, clamp_floor=model.clamp_floor)


class AutoregressiveBernoulli:
    """p(x|z) factored as a chain of Bernoulli conditionals."""

    def __init__(self, model, z):
        self.model = model
        self.z = ad.as_tensor(z)

    def logits(self, x):
        m, p = self.model, self.model.decoder_params
        h = _dense(p, "dec0", ad.as_tensor(x), mask=m.masks[0])
        h = ad.tanh(ad.add(h, _dense(p, "dec_cond", self.z)))
        for i in range(1, len(m.hidden)):
            h = ad.tanh(_dense(p, f"dec{i}", h, mask=m.masks[i]))
        return _dense(p, f"dec{len(m.hidden)}", h, mask=m.masks[-1])

    def log_prob(self, x):
        return bernoulli_log_prob(BernoulliVector(self.logits(x)), x)

    def sample(self, rng):
        zv = self.z.data
        batched = zv.ndim == 2
        n = zv.shape[0] if batched else 1
        x = np.zeros((n, self.model.data_dim))
        z = zv if batched else zv[None, :]
        handle = AutoregressiveBernoulli(self.model, z)
        for i in range(self.model.data_dim):
            probs = expit(np.clip(handle.logits(x).data, -15.0, 15.0))
            draw = (rng.random(n) < probs[:, i]).astype(np.float64)
            x[:, i] = draw
        return x if batched else x[0]


def decode(model, z):
    """p(x|z) likelihood object for a latent vector or batch."""
    z = ad.as_tensor(z)
    if z.shape[-1] != model.latent_dim:
        raise ad.ShapeError("decode", z.shape, (model.latent_dim,))
    if model.decoder_kind == "autoregressive":
        return AutoregressiveBernoulli(model, z)
    h = z
    for i in range(len(model.hidden)):
        h = ad.tanh(_dense(model.decoder_params, f"dec{i}", h))
    if model.decoder_kind == "gaussian":
        mean = _dense(model.decoder_params, "dec_mean", h)
        spread = _dense(model.decoder_params, "dec_spread", h)
        return DiagGaussian(mean, spread, clamp_floor=model.clamp_floor)
    return BernoulliVector(_dense(model.decoder_params, "dec_logits", h))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class TrainState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    rng_seed: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One Adam update in place; rejects non-finite gradients by name."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model, path):
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "data_dim": model.data_dim,
        "latent_dim": model.latent_dim,
        "decoder_kind": model.decoder_kind,
        "hidden": list(model.hidden),
        "clamp_floor": model.clamp_floor,
        "encoder_params": {
            k: {"shape": list(v.shape), "values": v.data.ravel().tolist()}
            for k, v in model.encoder_params.items()
        },
        "decoder_params": {
            k: {"shape": list(v.shape), "values": v.data.ravel().tolist()}
            for k, v in model.decoder_params.items()
        },
    }
    with open(path, "w") as f:
        json.dump(blob, f)


def load_checkpoint(path):
    with open(path) as f:
        blob = json.load(f)
    version = blob.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint format version {version!r} not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )

    def unpack(d):
        return {
            k: ad.parameter(np.asarray(v["values"]).reshape(v["shape"]))
            for k, v in d.items()
        }

    model = ModelPair(
        data_dim=blob["data_dim"],
        latent_dim=blob["latent_dim"],
        decoder_kind=blob["decoder_kind"],
        hidden=tuple(blob["hidden"]),
        clamp_floor=blob["clamp_floor"],
        encoder_params=unpack(blob["encoder_params"]),
        decoder_params=unpack(blob["decoder_params"]),
    )
    if model.decoder_kind == "autoregressive":
        model.masks = _made_masks(model.data_dim, model.hidden)
    return model
