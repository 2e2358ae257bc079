"""Diagonal Gaussians, Bernoulli likelihoods, and the standard-normal prior.

All log-probabilities are tape-friendly: given Tensor parameters they build
the gradient graph, given plain arrays they just compute numbers.  A
distribution over a single vector accepts batched parameters as well, in
which case per-sample scalars come back as a length-n tensor.
"""

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
LOGIT_CLAMP = 15.0


def _check_dims(name, a, b):
    if a.shape[-1] != b.shape[-1]:
        raise ad.ShapeError(name, a.shape, b.shape)


class DiagGaussian:
    """Factored Gaussian; std = softplus(log_std) + clamp_floor.

    ``log_std`` is the unconstrained parameter an encoder head emits, not the
    literal log of the standard deviation.  ``clamp_floor`` must be allowed to
    reach 0 so the variance collapse under ELBO stays observable.
    """

    def __init__(self, mean, log_std, clamp_floor=0.0):
        self.mean = ad.as_tensor(mean)
        self.log_std = ad.as_tensor(log_std)
        if self.mean.shape != self.log_std.shape:
            raise ad.ShapeError("diag_gaussian", self.mean.shape, self.log_std.shape)
        if clamp_floor < 0:
            raise ValueError("clamp_floor must be >= 0")
        self.clamp_floor = clamp_floor

    @classmethod
    def standard(cls, dim):
        return cls.from_std(np.zeros(dim), np.ones(dim))

    @classmethod
    def from_std(cls, mean, std):
        """Build from literal standard deviations (inverse softplus, floor 0)."""
        std = np.asarray(std, dtype=np.float64)
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        raw = np.log(np.expm1(std))
        return cls(mean, raw)

    @property
    def dim(self):
        return self.mean.shape[-1]

    @property
    def std(self):
        return ad.softplus(self.log_std) + self.clamp_floor

    def std_values(self):
        return np.logaddexp(0.0, self.log_std.data) + self.clamp_floor

    def sample(self, rng, n=None):
        """Plain numpy draws (no tape); batched parameters give one row each."""
        mu, std = self.mean.data, self.std_values()
        if n is None:
            return mu + std * rng.standard_normal(mu.shape)
        return mu + std * rng.standard_normal((n,) + mu.shape)


def gaussian_log_prob(g, x):
    """Sum_i [ -1/2 log(2 pi) - log std_i - (x_i - mu_i)^2 / (2 std_i^2) ]."""
    x = ad.as_tensor(x)
    _check_dims("gaussian_log_prob", g.mean, x)
    std = g.std
    z = ad.sub(x, g.mean)
    quad = ad.div(ad.square(z), ad.mul(ad.square(std), 2.0))
    per_dim = ad.sub(ad.sub(ad.neg(ad.log(std)), quad), HALF_LOG_2PI)
    return ad.tsum(per_dim, axis=-1 if per_dim.data.ndim > 1 else None)


def rsample(g, noise):
    """Reparameterized draw mu + std * noise; differentiable in both heads."""
    noise = ad.as_tensor(noise)
    _check_dims("rsample", g.mean, noise)
    return ad.add(g.mean, ad.mul(g.std, noise))


def kl_diag_gaussian_to_standard(g):
    """Closed-form KL(g || N(0, I)) = 1/2 sum(mu^2 + std^2 - 1 - 2 log std)."""
    std = g.std
    terms = ad.sub(ad.add(ad.square(g.mean), ad.square(std)), 1.0)
    terms = ad.sub(terms, ad.mul(ad.log(std), 2.0))
    total = ad.tsum(terms, axis=-1 if terms.data.ndim > 1 else None)
    return ad.mul(total, 0.5)


class BernoulliVector:
    """Independent Bernoullis parameterized by logits clamped to +-15."""

    def __init__(self, logits):
        self.logits = ad.clip(ad.as_tensor(logits), -LOGIT_CLAMP, LOGIT_CLAMP)

    @property
    def dim(self):
        return self.logits.shape[-1]

    def probs(self):
        return expit(self.logits.data)

    def sample(self, rng):
        return (rng.random(self.logits.shape) < self.probs()).astype(np.float64)


def bernoulli_log_prob(b, x):
    """Sum_i [ x_i log p_i + (1 - x_i) log(1 - p_i) ] for binary x."""
    xv = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if not np.all((xv == 0.0) | (xv == 1.0)):
        raise ValueError("bernoulli_log_prob: x must be binary")
    _check_dims("bernoulli_log_prob", b.logits, ad.as_tensor(xv))
    logits = b.logits
    # x*log p + (1-x)*log(1-p) == -(x*softplus(-l) + (1-x)*softplus(l))
    nll = ad.add(
        ad.mul(ad.softplus(ad.neg(logits)), xv),
        ad.mul(ad.softplus(logits), 1.0 - xv),
    )
    return ad.neg(ad.tsum(nll, axis=-1 if nll.data.ndim > 1 else None))


def standard_normal_log_prob(z):
    """log N(z; 0, I), summed over the last axis (plain numpy)."""
    z = np.asarray(z, dtype=np.float64)
    return np.sum(-HALF_LOG_2PI - 0.5 * z * z, axis=-1)


def sample_prior(rng, n, dim):
    return rng.standard_normal((n, dim))
