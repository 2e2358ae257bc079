"""Estimators of the divergence between the aggregate posterior and the prior.

Three interchangeable families: a multi-bandwidth RBF MMD (biased V-statistic,
kept nonnegative by construction), a kernelized score-flow update with a
surrogate loss whose gradient is that update, and a small adversarial
discriminator trained with the non-saturating GAN losses.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DEFAULT_BANDWIDTHS = (0.1, 0.5, 1.0, 2.0, 10.0)


@dataclass(frozen=True)
class KernelSpec:
    """Sum of RBF kernels exp(-|a-b|^2 / (2 h)) over squared bandwidths h."""

    bandwidths: tuple = (1.0,)
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.bandwidths or any(h <= 0 for h in self.bandwidths):
            raise ValueError("bandwidths must be a nonempty list of positive floats")


def default_kernel(dim):
    """Bandwidth ladder scaled by dimension, robust across the lambda sweep."""
    return KernelSpec(tuple(h * dim for h in DEFAULT_BANDWIDTHS))


def kernel_matrix(a, b, spec):
    """Gram matrix between rows of a and b; tape-aware."""
    sq = ad.pairwise_sqdist(a, b)
    total = None
    for h in spec.bandwidths:
        term = ad.exp(ad.mul(sq, -1.0 / (2.0 * h)))
        total = term if total is None else ad.add(total, term)
    return total


def mmd_vstat(z_q, z_p, spec):
    """Biased V-statistic MMD^2: mean k_pp - 2 mean k_qp + mean k_qq.

    All pairs contribute, diagonal included, so the value is nonnegative
    for positive definite kernels.  Differentiable w.r.t. z_q.
    """
    z_q, z_p = ad.as_tensor(z_q), ad.as_tensor(z_p)
    if z_q.data.ndim != 2 or z_p.data.ndim != 2:
        raise ad.ShapeError("mmd_vstat", z_q.shape, z_p.shape)
    if z_q.shape[0] == 0 or z_p.shape[0] == 0:
        raise ValueError("mmd_vstat: empty sample set")
    if z_q.shape[1] != z_p.shape[1]:
        raise ad.ShapeError("mmd_vstat", z_q.shape, z_p.shape)
    k_pp = ad.tmean(kernel_matrix(z_p, z_p, spec))
    k_qp = ad.tmean(kernel_matrix(z_q, z_p, spec))
    k_qq = ad.tmean(kernel_matrix(z_q, z_q, spec))
    return ad.add(ad.sub(k_pp, ad.mul(k_qp, 2.0)), k_qq)


@dataclass(frozen=True)
class SteinConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    step_size: float = 0.05

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")


def standard_normal_score(z):
    return -np.asarray(z, dtype=np.float64)


def stein_phi_star(particles, score_of_p, spec):
    """Empirical steepest transport direction toward p, per particle.

    phi*(z_j) = (1/n) sum_i [ k(z_i, z_j) score(z_i) + grad_{z_i} k(z_i, z_j) ],
    self-pairs included.
    """
    z = np.asarray(particles.data if isinstance(particles, Tensor) else particles)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("stein_phi_star: particles must be a nonempty matrix")
    scores = np.asarray(score_of_p(z), dtype=np.float64)
    if scores.shape != z.shape or not np.all(np.isfinite(scores)):
        raise ValueError("stein_phi_star: score is non-finite or mis-shaped")
    n = z.shape[0]
    sq = np.maximum(
        np.sum(z * z, axis=1)[:, None]
        + np.sum(z * z, axis=1)[None, :]
        - 2.0 * (z @ z.T),
        0.0,
    )
    phi = np.zeros_like(z)
    for h in spec.bandwidths:
        k = np.exp(-sq / (2.0 * h))
        # attraction along the score plus the repulsive kernel gradient
        phi += k.T @ scores + (k.sum(axis=0)[:, None] * z - k.T @ z) / h
    return phi / n


def stein_surrogate_loss(particles, phi):
    """Mean over particles of <z, -phi(z)> with phi held constant.

    Gradient descent on this scalar moves each particle along +phi/n, the
    direction that shrinks KL(q || p); backward() yields exactly -phi/n.
    """
    z = ad.as_tensor(particles)
    phi = np.asarray(phi.data if isinstance(phi, Tensor) else phi)
    if phi.shape != z.shape:
        raise ad.ShapeError("stein_surrogate_loss", z.shape, phi.shape)
    inner = ad.tsum(ad.mul(z, -phi), axis=1)
    return ad.tmean(inner)


class Discriminator:
    """Two-hidden-layer tanh MLP mapping a latent vector to a logit."""

    def __init__(self, latent_dim, hidden=(64, 64), seed=0):
        rng = np.random.default_rng(seed)
        self.latent_dim = latent_dim
        self.params = {}
        sizes = [latent_dim, *hidden, 1]
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            self.params[f"w{i}"] = ad.parameter(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params[f"b{i}"] = ad.parameter(np.zeros(fan_out))

    def logits(self, z, trainable=True):
        """Logit column for a batch of latents, clamped to +-15."""
        h = ad.as_tensor(z)
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            w, b = self.params[f"w{i}"], self.params[f"b{i}"]
            if not trainable:
                w, b = w.detach(), b.detach()
            h = ad.add(ad.matmul(h, w), b)
            if i < n_layers - 1:
                h = ad.tanh(h)
        return ad.clip(ad.tsum(h, axis=1), -15.0, 15.0)


def adversarial_divergence(z_q, z_p, disc):
    """(disc_loss, gen_loss) for one adversarial round.

    disc_loss scores prior samples as real and encoder samples as fake with
    the inputs detached; gen_loss is the non-saturating generator objective,
    differentiable w.r.t. z_q with the discriminator frozen.
    """
    z_q, z_p = ad.as_tensor(z_q), ad.as_tensor(z_p)
    if z_q.shape[0] == 0 or z_p.shape[0] == 0:
        raise ValueError("adversarial_divergence: empty sample set")
    logit_p = disc.logits(z_p.detach(), trainable=True)
    logit_q = disc.logits(z_q.detach(), trainable=True)
    disc_loss = ad.mul(
        ad.add(ad.tmean(ad.softplus(ad.neg(logit_p))), ad.tmean(ad.softplus(logit_q))),
        0.5,
    )
    gen_logit = disc.logits(z_q, trainable=False)
    gen_loss = ad.tmean(ad.softplus(ad.neg(gen_logit)))
    return disc_loss, gen_loss
