"""The training-loss family: ELBO, plain autoencoder, and the generalized
objective with an information-preference weight alpha and a latent-divergence
scale lambda.

All losses follow the maximization convention; a trainer descends on
``-breakdown.total``.  Breakdown fields are scalar tensors so the same object
serves both backprop and reporting.
"""

from dataclasses import dataclass, field

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import kl_diag_gaussian_to_standard, rsample
from .divergences import (
    Discriminator,
    KernelSpec,
    SteinConfig,
    adversarial_divergence,
    default_kernel,
    mmd_vstat,
    standard_normal_score,
    stein_phi_star,
    stein_surrogate_loss,
)
from .models import decode, encode

DIVERGENCES = ("none", "mmd", "stein", "adversarial")
LIKELIHOODS = ("diag_gaussian", "bernoulli", "autoregressive")


@dataclass
class ObjectiveSpec:
    """(alpha, lambda, divergence, likelihood) plus precomputed coefficients."""

    alpha: float = 0.0
    lam: float = 1.0
    divergence: str = "none"
    likelihood: str = "diag_gaussian"
    kl_coeff: float = field(init=False)
    marginal_coeff: float = field(init=False)
    outside_guarantee: bool = field(init=False)

    def __post_init__(self):
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if self.likelihood not in LIKELIHOODS:
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if self.divergence != "none" and self.lam <= 0:
            raise ValueError("lambda must be positive when a divergence is used")
        self.kl_coeff = 1.0 - self.alpha
        self.marginal_coeff = self.alpha + self.lam - 1.0
        # alpha < 1 and lambda > 0 is the regime with a global-optimum
        # guarantee; anything else is flagged, not forbidden
        self.outside_guarantee = not (self.alpha < 1.0 and self.lam > 0.0)


@dataclass
class LossBreakdown:
    """Scalar tensors; total = recon - kl_coeff*KL - marginal_coeff*D."""

    reconstruction: Tensor
    per_sample_kl: Tensor
    marginal_divergence: Tensor
    total: Tensor
    disc_loss: Tensor = None


def _recon_and_kl(batch, model, noise):
    batch = ad.as_tensor(batch)
    noise = ad.as_tensor(noise)
    if batch.shape[0] != noise.shape[0]:
        raise ad.ShapeError("loss", batch.shape, noise.shape)
    q = encode(model, batch)
    z = rsample(q, noise)
    like = decode(model, z)
    recon = ad.tmean(like.log_prob(batch))
    kl = ad.tmean(kl_diag_gaussian_to_standard(q))
    return q, z, recon, kl


def elbo_loss(batch, model, noise):
    """One-sample reparameterized ELBO with analytic per-sample KL."""
    _, _, recon, kl = _recon_and_kl(batch, model, noise)
    return LossBreakdown(recon, kl, Tensor(0.0), ad.sub(recon, kl))


def autoencoder_loss(batch, model, noise):
    """Reconstruction only; the KL is still computed for diagnostics."""
    _, _, recon, kl = _recon_and_kl(batch, model, noise)
    return LossBreakdown(recon, kl, Tensor(0.0), recon)


def _kernel_of(div_state, latent_dim):
    if div_state is None:
        return default_kernel(latent_dim)
    if isinstance(div_state, SteinConfig):
        return div_state.kernel
    if isinstance(div_state, KernelSpec):
        return div_state
    raise TypeError(f"unsupported divergence state {type(div_state).__name__}")


def infovae_loss(batch, model, prior_samples, noise, spec, div_state=None):
    """Tractable three-term objective; the marginal term uses the chosen
    divergence between reparameterized posterior draws and prior draws."""
    _, z, recon, kl = _recon_and_kl(batch, model, noise)
    disc_loss = None
    if spec.divergence == "none":
        if spec.marginal_coeff != 0.0:
            raise ValueError(
                "divergence='none' cannot estimate the marginal term when "
                f"alpha+lambda-1 = {spec.marginal_coeff} is nonzero"
            )
        marginal = Tensor(0.0)
    else:
        prior_samples = ad.as_tensor(prior_samples)
        if prior_samples.shape[0] != z.shape[0]:
            raise ad.ShapeError("infovae_loss", prior_samples.shape, z.shape)
        if spec.divergence == "mmd":
            marginal = mmd_vstat(z, prior_samples, _kernel_of(div_state, model.latent_dim))
        elif spec.divergence == "stein":
            kernel = _kernel_of(div_state, model.latent_dim)
            phi = stein_phi_star(z.data, standard_normal_score, kernel)
            marginal = stein_surrogate_loss(z, phi)
        else:
            if not isinstance(div_state, Discriminator):
                raise TypeError("adversarial divergence needs a Discriminator state")
            disc_loss, marginal = adversarial_divergence(z, prior_samples, div_state)

    total = ad.sub(recon, ad.mul(kl, spec.kl_coeff))
    if spec.marginal_coeff != 0.0:
        total = ad.sub(total, ad.mul(marginal, spec.marginal_coeff))
    return LossBreakdown(recon, kl, marginal, total, disc_loss)


def make_named_objective(name, value=None, likelihood="diag_gaussian"):
    """Named corners of the family; value is beta or lambda where applicable."""
    if name == "elbo":
        return ObjectiveSpec(0.0, 1.0, "none", likelihood)
    if name == "beta_vae":
        if value is None or value <= 0:
            raise ValueError("beta_vae needs beta > 0")
        return ObjectiveSpec(1.0 - value, value, "none", likelihood)
    if name == "aae":
        return ObjectiveSpec(1.0, 1.0, "adversarial", likelihood)
    if name == "infovae_mmd":
        if value is None or value <= 0:
            raise ValueError("infovae_mmd needs lambda > 0")
        return ObjectiveSpec(1.0, value, "mmd", likelihood)
    if name == "infovae_stein":
        if value is None or value <= 0:
            raise ValueError("infovae_stein needs lambda > 0")
        return ObjectiveSpec(1.0, value, "stein", likelihood)
    if name == "unregularized":
        spec = ObjectiveSpec(1.0, 1.0, "none", likelihood)
        spec.kl_coeff = 0.0
        spec.marginal_coeff = 0.0
        return spec
    raise ValueError(f"unknown objective {name!r}")


def loss_scale_ratio(breakdown):
    """Data-loss to latent-loss magnitude ratio, a starting point for picking
    the divergence scale; the caller decides what to do with it."""
    recon = abs(float(breakdown.reconstruction.data))
    latent = abs(float(breakdown.marginal_divergence.data))
    if latent < 1e-12:
        latent = abs(float(breakdown.per_sample_kl.data))
    return recon / max(latent, 1e-12)
