"""Training objectives for DAE, VAE, WAE-D and WAE-S, plus the VAE schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Batch
from .latent import (
    GaussianPosterior,
    KernelConfig,
    aux_kl_identity_cov_tensor,
    kl_to_standard_normal_tensor,
    mmd_estimate_tensor,
    reparameterize,
)
from .seqmodel import SeqModel, apply_word_dropout


@dataclass
class LossBreakdown:
    """Float view of one loss evaluation; ``loss`` holds the graph for backward.

    ``total == reconstruction + lambda_vae*kl + lambda_wae*mmd + lambda_kl*aux_kl``
    evaluated left to right, bit for bit.
    """

    reconstruction: float
    kl: float = 0.0
    mmd: float = 0.0
    aux_kl: float = 0.0
    total: float = 0.0
    lambda_vae: float = 0.0
    lambda_wae: float = 0.0
    lambda_kl: float = 0.0
    tokens: int = 0
    examples: int = 0
    loss: Tensor | None = field(default=None, repr=False, compare=False)

    def recompute_total(self) -> float:
        return (
            self.reconstruction
            + self.lambda_vae * self.kl
            + self.lambda_wae * self.mmd
            + self.lambda_kl * self.aux_kl
        )


def _assemble(rec: Tensor, batch: Batch, kl=None, mmd=None, aux=None, lam_vae=0.0, lam_wae=0.0, lam_kl=0.0):
    zero = Tensor(0.0)
    kl_t = kl if kl is not None else zero
    mmd_t = mmd if mmd is not None else zero
    aux_t = aux if aux is not None else zero
    total = rec + kl_t * lam_vae + mmd_t * lam_wae + aux_t * lam_kl
    out = LossBreakdown(
        reconstruction=rec.item(),
        kl=kl_t.item(),
        mmd=mmd_t.item(),
        aux_kl=aux_t.item(),
        total=total.item(),
        lambda_vae=float(lam_vae),
        lambda_wae=float(lam_wae),
        lambda_kl=float(lam_kl),
        tokens=int(batch.target_mask.sum()),
        examples=len(batch),
        loss=total,
    )
    return out


def reconstruction_loss(model: SeqModel, z: Tensor, batch: Batch, word_dropout_rate=0.0, rng=None) -> Tensor:
    """Sequence-summed cross-entropy of the decoder targets, summed over the batch."""
    inputs = batch.decoder_inputs
    mask = batch.target_mask
    inputs = apply_word_dropout(inputs, mask, word_dropout_rate, rng)
    logits = model.decode_batch(z, inputs)
    return ag.cross_entropy(logits, batch.decoder_targets, mask)


def encode_posterior(model: SeqModel, batch: Batch) -> GaussianPosterior:
    h = model.encode_batch(*batch.encoder_inputs)
    mu, log_sigma = model.latent_heads(h)
    return GaussianPosterior(mu, log_sigma)


def encode_deterministic(model: SeqModel, batch: Batch) -> Tensor:
    h = model.encode_batch(*batch.encoder_inputs)
    return h @ model.params["mu.w"] + model.params["mu.b"]


def _require_pairs(batch: Batch) -> None:
    if len(batch) < 2:
        raise ValueError(f"WAE objectives need a batch of at least 2 examples, got {len(batch)}")


def dae_loss(model: SeqModel, batch: Batch, word_dropout_rate: float = 0.0, rng=None) -> LossBreakdown:
    if len(batch) == 0:
        raise ValueError("empty batch")
    z = encode_deterministic(model, batch)
    rec = reconstruction_loss(model, z, batch, word_dropout_rate, rng)
    return _assemble(rec, batch)


def vae_loss(
    model: SeqModel,
    batch: Batch,
    schedule: "AnnealSchedule | float",
    step: int,
    rng: np.random.Generator,
    word_dropout_rate: float = 0.0,
) -> LossBreakdown:
    """Single-sample reconstruction plus the scheduled weight times the KL to N(0, I).

    ``schedule`` may be a plain float for a constant weight.
    """
    lam = schedule if isinstance(schedule, (int, float)) else anneal_lambda(schedule, step)
    post = encode_posterior(model, batch)
    z = reparameterize(post, rng)
    rec = reconstruction_loss(model, z, batch, word_dropout_rate, rng)
    kl = kl_to_standard_normal_tensor(post).sum()
    return _assemble(rec, batch, kl=kl, lam_vae=lam)


def wae_d_loss(
    model: SeqModel,
    batch: Batch,
    lambda_wae: float,
    cfg: KernelConfig,
    rng: np.random.Generator,
    cross_factor: float = 2.0,
    word_dropout_rate: float = 0.0,
) -> LossBreakdown:
    _require_pairs(batch)
    z = encode_deterministic(model, batch)
    z_prior = rng.standard_normal(z.shape)
    mmd = mmd_estimate_tensor(z, z_prior, cfg, cross_factor)
    rec = reconstruction_loss(model, z, batch, word_dropout_rate, rng)
    return _assemble(rec, batch, mmd=mmd, lam_wae=lambda_wae)


def wae_s_loss(
    model: SeqModel,
    batch: Batch,
    lambda_wae: float,
    lambda_kl: float,
    cfg: KernelConfig,
    rng: np.random.Generator,
    cross_factor: float = 2.0,
    word_dropout_rate: float = 0.0,
) -> LossBreakdown:
    _require_pairs(batch)
    post = encode_posterior(model, batch)
    # prior draws come first so WAE-S and WAE-D consume the same prior samples
    z_prior = rng.standard_normal(post.mu.shape)
    z = reparameterize(post, rng)
    mmd = mmd_estimate_tensor(z, z_prior, cfg, cross_factor)
    aux = aux_kl_identity_cov_tensor(post).sum()
    rec = reconstruction_loss(model, z, batch, word_dropout_rate, rng)
    return _assemble(rec, batch, mmd=mmd, aux=aux, lam_wae=lambda_wae, lam_kl=lambda_kl)


# ---------------------------------------------------------------------------
# schedules


@dataclass
class AnnealSchedule:
    """Sigmoid ramp ``lambda_max * sigmoid(slope * (step - midpoint))`` with a peaking stop."""

    lambda_max: float = 1.0
    slope: float = 1.0
    midpoint: float = 0.0
    frozen: bool = False
    frozen_value: float = 0.0
    peak: float = -math.inf

    @classmethod
    def from_epochs(cls, lambda_max: float, steps_per_epoch: int, midpoint_epochs: float = 3.0, width_epochs: float = 2.0):
        """Midpoint at ``midpoint_epochs``; 10% to 90% of ``lambda_max`` over ``width_epochs``."""
        width = max(width_epochs * steps_per_epoch, 1e-12)
        return cls(lambda_max, 2.0 * math.log(9.0) / width, midpoint_epochs * steps_per_epoch)

    def value(self, step: int) -> float:
        return anneal_lambda(self, step)

    def state(self) -> dict:
        return dict(
            lambda_max=self.lambda_max,
            slope=self.slope,
            midpoint=self.midpoint,
            frozen=self.frozen,
            frozen_value=self.frozen_value,
            peak=self.peak,
        )


def anneal_lambda(schedule: AnnealSchedule, step: int) -> float:
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if schedule.frozen:
        return schedule.frozen_value
    x = schedule.slope * (step - schedule.midpoint)
    s = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
    return schedule.lambda_max * s


def peaking_monitor(schedule: AnnealSchedule, epoch_weighted_kl: float, step: int | None = None) -> AnnealSchedule:
    """Freeze the schedule the first time an epoch's mean lambda*KL falls below its running max.

    Ties do not count as a decrease. ``step`` is where the weight is frozen
    (defaults to the midpoint, i.e. half of ``lambda_max``, if omitted).
    """
    if schedule.frozen:
        return schedule
    if epoch_weighted_kl < schedule.peak:
        schedule.frozen_value = anneal_lambda(schedule, schedule.midpoint if step is None else step)
        schedule.frozen = True
    else:
        schedule.peak = epoch_weighted_kl
    return schedule


def word_dropout_rate(epoch: int, step: float = 0.05, cap: float = 0.5) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    # round so that 10 * 0.05 lands exactly on the cap
    return min(round(step * epoch, 10), cap)
