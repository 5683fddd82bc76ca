"""
Multi-modal VAE.

One encoder and one decoder per view. A view is a cohort modality for the
poe / moe / gpoe models, the single chosen modality for the unimodal
baseline, or all modalities concatenated for the concat baseline. Encoders
emit diagonal-Gaussian experts which are fused into the joint posterior;
decoders model each view with a unit-variance Gaussian likelihood, so the
reconstruction term is half the squared error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..errors import ConfigError
from ..fusion import (
    DiagGaussian,
    GpoeWeights,
    MixturePosterior,
    gpoe_fuse,
    kl_to_std_normal,
    poe_fuse,
    reparam_sample,
)
from ..gradnet import AdamState, LinearLayer, Mlp, Tensor, no_grad
from ..gradnet import tensor as gt
from ..schemas import FusionKind, ModelConfig

logger = logging.getLogger(__name__)

Posterior = Union[DiagGaussian, MixturePosterior]

ALPHA_FLOOR = 1e-12


def view_dims_for(config: ModelConfig, modality_dims: Sequence[int]) -> List[int]:
    """Encoder input widths for a fusion kind over the given modalities."""
    if config.fusion == FusionKind.UNIMODAL:
        if not 0 <= config.modality < len(modality_dims):
            raise ConfigError(
                f"Modality index {config.modality} out of range for {len(modality_dims)} modalities"
            )
        return [int(modality_dims[config.modality])]
    if config.fusion == FusionKind.CONCAT:
        return [int(sum(modality_dims))]
    return [int(d) for d in modality_dims]


class ModalityEncoder:
    """Trunk MLP (input → 20 → 40, ReLU) with linear mean and log-variance heads."""

    def __init__(self, trunk: Mlp, mean_head: LinearLayer, logvar_head: LinearLayer):
        if mean_head.in_dim != trunk.out_dim or logvar_head.in_dim != trunk.out_dim:
            raise ValueError("Encoder heads must consume the trunk output width")
        if mean_head.out_dim != logvar_head.out_dim:
            raise ValueError("Mean and log-variance heads disagree on latent size")
        self.trunk = trunk
        self.mean_head = mean_head
        self.logvar_head = logvar_head

    @classmethod
    def create(cls, input_dim: int, latent_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        trunk = Mlp.create([input_dim, *hidden], rng, activate_output=True)
        return cls(
            trunk,
            LinearLayer.create(trunk.out_dim, latent_dim, rng),
            LinearLayer.create(trunk.out_dim, latent_dim, rng),
        )

    @property
    def input_dim(self) -> int:
        return self.trunk.in_dim

    def parameters(self) -> List[Tensor]:
        return [*self.trunk.parameters(), *self.mean_head.parameters(), *self.logvar_head.parameters()]

    def __call__(self, x) -> DiagGaussian:
        h = self.trunk(x)
        return DiagGaussian.from_logvar(self.mean_head(h), self.logvar_head(h))


class ModalityDecoder:
    """MLP (latent → 20 → 40 → features); output is the reconstruction mean."""

    def __init__(self, net: Mlp):
        self.net = net

    @classmethod
    def create(cls, latent_dim: int, output_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        return cls(Mlp.create([latent_dim, *hidden, output_dim], rng))

    @property
    def output_dim(self) -> int:
        return self.net.out_dim

    def parameters(self) -> List[Tensor]:
        return self.net.parameters()

    def __call__(self, z) -> Tensor:
        return self.net(z)


class MvaeModel:
    """
    Normative multi-modal VAE.

    Args:
        config: Architecture and training hyperparameters
        modality_names: Cohort modalities in declared order
        modality_dims: Feature count per cohort modality
        encoders: One encoder per view
        decoders: One decoder per view
        alpha_logits: (M, L) gPoE logits; only for fusion=gpoe
    """

    def __init__(
        self,
        config: ModelConfig,
        modality_names: Sequence[str],
        modality_dims: Sequence[int],
        encoders: Sequence[ModalityEncoder],
        decoders: Sequence[ModalityDecoder],
        alpha_logits: Optional[Tensor] = None,
    ):
        self.config = config
        self.modality_names = list(modality_names)
        self.modality_dims = [int(d) for d in modality_dims]
        if len(self.modality_names) != len(self.modality_dims):
            raise ValueError("modality_names and modality_dims differ in length")
        if config.fusion == FusionKind.UNIMODAL and not (0 <= config.modality < len(self.modality_names)):
            raise ConfigError(
                f"Modality index {config.modality} out of range for {len(self.modality_names)} modalities"
            )
        self.encoders = list(encoders)
        self.decoders = list(decoders)
        if len(self.encoders) != self.n_views or len(self.decoders) != self.n_views:
            raise ValueError(
                f"Expected {self.n_views} encoders/decoders, got {len(self.encoders)}/{len(self.decoders)}"
            )
        for enc, dec, dim in zip(self.encoders, self.decoders, self.view_dims):
            if enc.input_dim != dim or dec.output_dim != dim:
                raise ValueError(f"Encoder/decoder widths do not match view dimension {dim}")
        if config.fusion == FusionKind.GPOE:
            if alpha_logits is None:
                alpha_logits = Tensor(np.zeros((self.n_views, config.latent_dim)), requires_grad=True)
            if alpha_logits.shape != (self.n_views, config.latent_dim):
                raise ValueError(f"alpha_logits shape {alpha_logits.shape} is not {(self.n_views, config.latent_dim)}")
        else:
            alpha_logits = None
        self.alpha_logits = alpha_logits
        self.optimizer_state: Optional[AdamState] = None
        self.epochs_trained = 0

    @classmethod
    def create(
        cls,
        config: ModelConfig,
        modality_names: Sequence[str],
        modality_dims: Sequence[int],
    ) -> "MvaeModel":
        """Glorot-initialised model; deterministic in ``config.seed``."""
        rng = np.random.default_rng(config.seed)
        encoders, decoders = [], []
        for dim in view_dims_for(config, modality_dims):
            encoders.append(ModalityEncoder.create(dim, config.latent_dim, config.encoder_layers, rng))
            decoders.append(ModalityDecoder.create(config.latent_dim, dim, config.decoder_layers, rng))
        model = cls(config, modality_names, modality_dims, encoders, decoders)
        logger.info(
            f"Created {config.model_name} model: L={config.latent_dim} "
            f"views={model.view_names} params={model.n_parameters}"
        )
        return model

    # ── Views ────────────────────────────────────────────────────────

    @property
    def fusion(self) -> FusionKind:
        return self.config.fusion

    @property
    def name(self) -> str:
        if self.fusion == FusionKind.UNIMODAL:
            return f"unimodal-{self.modality_names[self.config.modality]}"
        return self.fusion.value

    @property
    def covered_modalities(self) -> List[str]:
        """Cohort modalities whose features this model reconstructs."""
        if self.fusion == FusionKind.UNIMODAL:
            return [self.modality_names[self.config.modality]]
        return list(self.modality_names)

    @property
    def n_views(self) -> int:
        return 1 if self.fusion in (FusionKind.UNIMODAL, FusionKind.CONCAT) else len(self.modality_names)

    @property
    def view_names(self) -> List[str]:
        if self.fusion == FusionKind.CONCAT:
            return ["+".join(self.modality_names)]
        return self.covered_modalities

    @property
    def view_dims(self) -> List[int]:
        return view_dims_for(self.config, self.modality_dims)

    def views(self, X: Sequence[np.ndarray]) -> List[np.ndarray]:
        """Map per-modality feature matrices to this model's encoder inputs."""
        if len(X) != len(self.modality_names):
            raise ValueError(f"Expected {len(self.modality_names)} modalities, got {len(X)}")
        mats = []
        for x, dim, name in zip(X, self.modality_dims, self.modality_names):
            x = np.atleast_2d(np.asarray(x, dtype=np.float64))
            if x.shape[1] != dim:
                raise ValueError(f"Modality '{name}' has {x.shape[1]} features, model expects {dim}")
            mats.append(x)
        if len({x.shape[0] for x in mats}) != 1:
            raise ValueError("Modalities disagree on the number of subjects")
        if self.fusion == FusionKind.UNIMODAL:
            return [mats[self.config.modality]]
        if self.fusion == FusionKind.CONCAT:
            return [np.hstack(mats)]
        return mats

    def split_view_output(self, outputs: Sequence[np.ndarray]) -> Dict[str, np.ndarray]:
        """Decoder outputs back to per-modality arrays (undoes concatenation)."""
        if self.fusion == FusionKind.CONCAT:
            bounds = np.cumsum([0, *self.modality_dims])
            return {
                name: outputs[0][:, lo:hi]
                for name, lo, hi in zip(self.modality_names, bounds[:-1], bounds[1:])
            }
        return dict(zip(self.covered_modalities, outputs))

    # ── Parameters ───────────────────────────────────────────────────

    def named_parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for v, (enc, dec) in enumerate(zip(self.encoders, self.decoders)):
            for i, layer in enumerate(enc.trunk.layers):
                named[f"encoder.{v}.trunk.{i}.weight"] = layer.weight
                named[f"encoder.{v}.trunk.{i}.bias"] = layer.bias
            named[f"encoder.{v}.mean.weight"] = enc.mean_head.weight
            named[f"encoder.{v}.mean.bias"] = enc.mean_head.bias
            named[f"encoder.{v}.logvar.weight"] = enc.logvar_head.weight
            named[f"encoder.{v}.logvar.bias"] = enc.logvar_head.bias
            for i, layer in enumerate(dec.net.layers):
                named[f"decoder.{v}.{i}.weight"] = layer.weight
                named[f"decoder.{v}.{i}.bias"] = layer.bias
        if self.alpha_logits is not None:
            named["alpha_logits"] = self.alpha_logits
        return named

    def parameters(self) -> List[Tensor]:
        return list(self.named_parameters().values())

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        missing = sorted(set(named) - set(arrays))
        if missing:
            raise ValueError(f"Missing parameters: {missing[:5]}")
        for name, p in named.items():
            if arrays[name].shape != p.shape:
                raise ValueError(f"Parameter {name} has shape {arrays[name].shape}, expected {p.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)


# ── Operations ───────────────────────────────────────────────────────

def encode(model: MvaeModel, X: Sequence[np.ndarray]) -> List[DiagGaussian]:
    """
    One expert per view.

    Args:
        model: The normative model
        X: Per-modality feature matrices (N, P_m) or vectors (P_m,)

    Raises:
        ValueError: Feature dimensions do not match the model
    """
    return [enc(x) for enc, x in zip(model.encoders, model.views(X))]


def alpha_from_logits(logits) -> Tensor:
    """
    Softmax over the modality axis, floored at ALPHA_FLOOR and renormalised.

    Saturated logits would otherwise round an entry to exactly 0 or 1.
    """
    alpha = gt.floor(gt.softmax(logits, axis=0), ALPHA_FLOOR)
    return alpha / alpha.sum(axis=0, keepdims=True)


def joint_posterior(model: MvaeModel, experts: Sequence[DiagGaussian]) -> Posterior:
    """
    Fuse experts according to the model's fusion kind.

    Raises:
        ValueError: Expert count does not match the fusion kind
    """
    if len(experts) != model.n_views:
        raise ValueError(f"{model.fusion.value} expects {model.n_views} experts, got {len(experts)}")
    if model.fusion == FusionKind.POE:
        return poe_fuse(experts)
    if model.fusion == FusionKind.GPOE:
        return gpoe_fuse(experts, GpoeWeights(alpha_from_logits(model.alpha_logits)))
    if model.fusion == FusionKind.MOE:
        return MixturePosterior(tuple(experts))
    return experts[0]


def _reconstruction_nll(model: MvaeModel, views: Sequence[np.ndarray], z) -> Tensor:
    """Sum over views of 1/2 ||x - x_hat||^2, one value per subject."""
    total = None
    for dec, x in zip(model.decoders, views):
        diff = x - dec(z)
        term = 0.5 * gt.tsum(diff * diff, axis=-1)
        total = term if total is None else total + term
    return total


def _check_noise(noise: np.ndarray, n: int, latent_dim: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-2:] != (n, latent_dim):
        raise ValueError(f"noise shape {noise.shape} does not end in ({n}, {latent_dim})")
    return noise


def elbo_joint(model: MvaeModel, X: Sequence[np.ndarray], noise: np.ndarray) -> Tensor:
    """
    Negative ELBO under the fused joint posterior, averaged over subjects.

    Args:
        model: poe, gpoe, unimodal or concat model
        X: Per-modality feature matrices
        noise: Standard-normal draws, shape (N, L)

    Raises:
        ValueError: For moe models (use elbo_moe)
    """
    if model.fusion == FusionKind.MOE:
        raise ValueError("elbo_joint does not apply to moe models; use elbo_moe")
    views = model.views(X)
    noise = _check_noise(noise, views[0].shape[0], model.config.latent_dim)
    if noise.ndim != 2:
        raise ValueError(f"elbo_joint takes (N, L) noise, got shape {noise.shape}")
    q = joint_posterior(model, [enc(x) for enc, x in zip(model.encoders, views)])
    z = reparam_sample(q, noise)
    per_subject = _reconstruction_nll(model, views, z) + kl_to_std_normal(q)
    return gt.mean(per_subject)


def elbo_moe(model: MvaeModel, X: Sequence[np.ndarray], noise: np.ndarray) -> Tensor:
    """
    Mixture-of-experts negative ELBO with cross-reconstruction.

    Every uni-modal posterior q(z|x_m) reconstructs all modalities; its KL to
    the prior is added; terms are summed over m and averaged over subjects.

    Args:
        noise: Shape (M, N, L), or (N, L) shared across experts
    """
    if model.fusion != FusionKind.MOE:
        raise ValueError(f"elbo_moe needs a moe model, got {model.fusion.value}")
    views = model.views(X)
    n, latent = views[0].shape[0], model.config.latent_dim
    noise = _check_noise(noise, n, latent)
    if noise.ndim == 2:
        noise = np.broadcast_to(noise, (model.n_views, n, latent))
    total = None
    for m, (enc, x) in enumerate(zip(model.encoders, views)):
        q_m = enc(x)
        z_m = reparam_sample(q_m, noise[m])
        term = _reconstruction_nll(model, views, z_m) + kl_to_std_normal(q_m)
        total = term if total is None else total + term
    return gt.mean(total)


def model_loss(model: MvaeModel, X: Sequence[np.ndarray], noise: np.ndarray) -> Tensor:
    """The fusion-appropriate training loss."""
    if model.fusion == FusionKind.MOE:
        return elbo_moe(model, X, noise)
    return elbo_joint(model, X, noise)


def draw_noise(model: MvaeModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Noise for one loss evaluation: (M, N, L) for moe, (N, L) otherwise."""
    if model.fusion == FusionKind.MOE:
        return rng.standard_normal((model.n_views, n, model.config.latent_dim))
    return rng.standard_normal((n, model.config.latent_dim))


def get_alpha(model: MvaeModel) -> GpoeWeights:
    """
    Softmax of the gPoE logits over the modality axis.

    Raises:
        ValueError: For non-gpoe models
    """
    if model.fusion != FusionKind.GPOE:
        raise ValueError(f"get_alpha needs a gpoe model, got {model.fusion.value}")
    with no_grad():
        return GpoeWeights(alpha_from_logits(model.alpha_logits).data.copy())


@dataclass(frozen=True)
class Reconstruction:
    """Decoded features, the latent position used, and the joint posterior."""

    recon: Dict[str, np.ndarray]
    latent: np.ndarray
    posterior: Posterior


def reconstruct(
    model: MvaeModel,
    X: Sequence[np.ndarray],
    use_posterior_mean: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> Reconstruction:
    """
    Pass subjects through encoders and decoders.

    The latent position is the posterior mean by default (for moe: the
    average of the component means) or a reparameterised sample.

    Args:
        model: Trained model
        X: Per-modality feature matrices
        use_posterior_mean: Deterministic latent; otherwise sample with ``rng``
        rng: Source for sampling (seed 0 when omitted)
    """
    with no_grad():
        views = model.views(X)
        experts = [enc(x).detach() for enc, x in zip(model.encoders, views)]
        posterior = joint_posterior(model, experts)
        n = views[0].shape[0]
        if isinstance(posterior, MixturePosterior):
            posterior = MixturePosterior(tuple(c.detach() for c in posterior.components))
            if use_posterior_mean:
                z = posterior.mean()
            else:
                rng = rng or np.random.default_rng(0)
                index = rng.integers(posterior.n_components, size=n)
                noise = rng.standard_normal((n, model.config.latent_dim))
                means = np.stack([c.mean for c in posterior.components])
                stds = np.sqrt(np.stack([c.var for c in posterior.components]))
                rows = np.arange(n)
                z = means[index, rows] + stds[index, rows] * noise
        else:
            posterior = posterior.detach()
            if use_posterior_mean:
                z = np.array(posterior.mean)
            else:
                rng = rng or np.random.default_rng(0)
                z = np.asarray(reparam_sample(posterior, rng.standard_normal((n, model.config.latent_dim))))
        outputs = [dec(z).numpy() for dec in model.decoders]
    return Reconstruction(recon=model.split_view_output(outputs), latent=z, posterior=posterior)
