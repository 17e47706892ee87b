"""Training losses: pixel, perceptual, adversarial, attribute-consistency.

The generator objective is the weighted sum

    L_G = L_pix + lambda1 * L_adv + lambda2 * L_cls + lambda3 * L_per

with mean-squared reductions throughout so the weights stay comparable across
image sizes. The discriminator trains with the standard non-saturating GAN
objective, and the attribute classifier pretrains with per-attribute sigmoid
cross-entropy (multi-label).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import AuClassifier, Discriminator
from .tensor import Tensor, bce_with_logits, mse


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.001  # adversarial
    lambda2: float = 0.001  # attribute consistency
    lambda3: float = 0.5    # perceptual

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")


@dataclass
class GeneratorLossParts:
    pixel: Tensor
    adversarial: Tensor
    attribute: Tensor
    perceptual: Tensor


class PerceptualExtractor:
    """Frozen classifier trunk with a shallow and a deep feature tap."""

    def __init__(self, classifier: AuClassifier):
        if not classifier.frozen:
            raise ValueError("perceptual extractor requires a frozen classifier")
        self.classifier = classifier

    @property
    def frozen(self) -> bool:
        return self.classifier.frozen

    def features(self, image: Tensor):
        return self.classifier.features(image)


def pixel_loss(i_out: Tensor, i_gt: Tensor) -> Tensor:
    """Mean squared error between restored and ground-truth images."""
    return mse(i_out, i_gt)


def perceptual_loss(extractor: PerceptualExtractor, i_out: Tensor, i_gt: Tensor) -> Tensor:
    """Sum of the mse between the two trunk taps; gradients reach i_out only."""
    if not extractor.frozen:
        raise ValueError("perceptual extractor must be frozen")
    shallow_out, deep_out = extractor.features(i_out)
    shallow_gt, deep_gt = extractor.features(i_gt.detach())
    return mse(shallow_out, shallow_gt) + mse(deep_out, deep_gt)


def adversarial_losses(d: Discriminator, i_out: Tensor, i_gt: Tensor):
    """(generator_adv, discriminator_loss) with non-saturating cross-entropy.

    d_loss scores real images toward 1 and detached fakes toward 0; g_adv
    pushes the discriminator's score of the fakes toward 1.
    """
    real_logits = d(i_gt.detach())
    fake_logits_detached = d(i_out.detach())
    ones = Tensor(np.ones(real_logits.shape, dtype=real_logits.dtype))
    zeros_t = Tensor(np.zeros(real_logits.shape, dtype=real_logits.dtype))
    d_loss = bce_with_logits(real_logits, ones) + bce_with_logits(fake_logits_detached, zeros_t)
    g_adv = bce_with_logits(d(i_out), ones)
    return g_adv, d_loss


def au_consistency_loss(c: AuClassifier, i_out: Tensor, i_gt: Tensor) -> Tensor:
    """Mean squared distance between pre-activation attribute logits."""
    if not c.frozen:
        raise ValueError("attribute classifier must be frozen during restoration training")
    return mse(c(i_out), c(i_gt.detach()))


def classifier_pretrain_loss(logits: Tensor, labels: Tensor) -> Tensor:
    """Multi-label sigmoid cross-entropy, mean over attributes and batch."""
    lab = labels.data
    if not np.all(np.isin(lab, (0.0, 1.0))):
        raise ValueError("labels must be binary (0 or 1)")
    return bce_with_logits(logits, labels)


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights) -> Tensor:
    return (parts.pixel
            + weights.lambda1 * parts.adversarial
            + weights.lambda2 * parts.attribute
            + weights.lambda3 * parts.perceptual)
