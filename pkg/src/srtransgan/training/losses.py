"""Objectives for conditional adversarial super-resolution training.

All adversarial terms take discriminator logits and use the identities
``-log(sigmoid(x)) = softplus(-x)`` and ``-log(1 - sigmoid(x)) = softplus(x)``,
which stay finite for any finite logit.
"""

from __future__ import annotations

from ..autodiff import ops
from ..autodiff.tensor import Tensor, as_tensor
from ..errors import DimensionError


def reconstruction_loss(hr, sr) -> Tensor:
    """Mean absolute pixel difference, i.e. ``||HR - SR||_1 / (2H * 2W * 3)`` averaged over the batch."""
    hr, sr = as_tensor(hr), as_tensor(sr)
    if hr.shape != sr.shape:
        raise DimensionError(f"reconstruction_loss: HR {hr.shape} vs SR {sr.shape}")
    return ops.mean(ops.abs(ops.sub(hr, sr)))


def adversarial_loss_d(real_logit, fake_logit) -> Tensor:
    """``-(E[log D(real)] + E[log(1 - D(fake))])``, minimised by the discriminator."""
    real_logit, fake_logit = as_tensor(real_logit), as_tensor(fake_logit)
    return ops.add(ops.mean(ops.softplus(ops.neg(real_logit))), ops.mean(ops.softplus(fake_logit)))


def generator_adversarial_loss(fake_logit) -> Tensor:
    """Non-saturating generator objective ``-E[log D(fake)]``."""
    return ops.mean(ops.softplus(ops.neg(as_tensor(fake_logit))))


def generator_loss(fake_logit, hr, sr, lambda_adv: float, lambda_rec: float) -> Tensor:
    adv = generator_adversarial_loss(fake_logit)
    rec = reconstruction_loss(hr, sr)
    return ops.add(ops.scale(adv, lambda_adv), ops.scale(rec, lambda_rec))
