"""Per-batch training objectives, each returning a loss breakdown and
parameter gradients for every branch it touches.

All objectives are minimized.  Sign conventions, with lam the invariance
weight and beta the compression weight:

* ``vae_loss``     total = prior_kl + lam * marginal_kl + (1 + lam) * recon_nll
* ``vib_loss``     total = pred_nll + (beta + lam) * marginal_kl + lam * recon_nll
* ``adversarial_vib_loss``
                   total = pred_nll + beta * prior_kl - lam * adversary_nll
                   (encoder-side objective; the head itself descends
                   adversary_nll, and the encoder receives the head's
                   z-gradient negated and scaled by lam)

Components not listed for an objective carry weight zero in its total but
are still reported when they are computed.  Each loss takes an explicit
standard-normal ``noise`` matrix (one draw per sample) so that a fixed
noise makes the loss a deterministic function of the parameters; the
finite-difference tests rely on that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergences import (
    marginal_kl_penalty_grads,
    prior_kl_batch,
    prior_kl_batch_grads,
)
from .errors import ConfigError
from .models import (
    adversary_reversed_grad,
    decode_forward,
    decoder_backward,
    encode_with_tape,
    encoder_backward,
    predict_forward,
    recon_log_lik,
    reparameterize,
    reparameterize_backward,
    softmax_xent,
)
from .numerics import mlp_backward


@dataclass
class LossBreakdown:
    recon_nll: float = 0.0
    prior_kl: float = 0.0
    marginal_kl: float = 0.0
    pred_nll: float = 0.0
    adversary_nll: float = 0.0
    total: float = 0.0

    FIELDS = ("recon_nll", "prior_kl", "marginal_kl", "pred_nll", "adversary_nll", "total")

    def as_tuple(self):
        return tuple(getattr(self, f) for f in self.FIELDS)


@dataclass
class Hyper:
    """Trade-off weights and optimization settings.

    ``lam`` is the invariance weight; ``beta`` the compression weight
    (information-bottleneck objectives only).  ``adversary_steps`` is the
    number of head-only updates per encoder update in the adversarial
    baseline.
    """

    lam: float = 1.0
    beta: float = 0.01
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 200
    seed: int = 0
    adversary_steps: int = 1

    def __post_init__(self):
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")


def expected_total(objective: str, lb: LossBreakdown, hyper: Hyper) -> float:
    """The documented component combination for each objective; the
    accounting tests reconstruct ``total`` through this."""
    if objective == "vae":
        return lb.prior_kl + hyper.lam * lb.marginal_kl + (1.0 + hyper.lam) * lb.recon_nll
    if objective == "vib":
        return lb.pred_nll + (hyper.beta + hyper.lam) * lb.marginal_kl + hyper.lam * lb.recon_nll
    if objective == "adv-vib":
        return lb.pred_nll + hyper.beta * lb.prior_kl - hyper.lam * lb.adversary_nll
    raise ConfigError(f"unknown objective {objective!r}")


def vae_loss(enc, dec, batch, hyper: Hyper, noise: np.ndarray):
    """Invariant conditional autoencoder loss.

    With lam = 0 this is exactly the conditional-decoder ELBO (prior KL
    minus reconstruction likelihood); lam > 0 adds the pairwise marginal
    penalty and upweights reconstruction by (1 + lam).

    Returns (LossBreakdown, {"encoder": grads, "decoder": grads}).
    """
    lam = hyper.lam
    b = batch.x.shape[0]

    codes, enc_tape = encode_with_tape(enc, batch.x)
    z = reparameterize(codes, noise)
    out, dec_tape = decode_forward(dec, z, batch.c)
    ll, d_out_ll = recon_log_lik(out, batch.x, dec.binary_mask)

    recon_nll = -float(ll.mean())
    prior = float(prior_kl_batch(codes).mean())
    marginal, d_means_mk, d_vars_mk = marginal_kl_penalty_grads(codes)

    lb = LossBreakdown(
        recon_nll=recon_nll,
        prior_kl=prior,
        marginal_kl=marginal,
        total=prior + lam * marginal + (1.0 + lam) * recon_nll,
    )

    dec_grads, d_z = decoder_backward(dec, dec_tape, -(1.0 + lam) / b * d_out_ll)
    d_means_z, d_vars_z = reparameterize_backward(codes, noise, d_z)
    pm, pv = prior_kl_batch_grads(codes)
    d_means = d_means_z + pm / b + lam * d_means_mk
    d_vars = d_vars_z + pv / b + lam * d_vars_mk
    enc_grads = encoder_backward(enc, enc_tape, d_means, d_vars)

    return lb, {"encoder": enc_grads, "decoder": dec_grads}


def vib_loss(enc, dec, pred, batch, hyper: Hyper, noise: np.ndarray):
    """Invariant bottleneck classifier loss.

    The compression term is the pairwise marginal penalty (not the prior
    KL), weighted (beta + lam); the conditional reconstruction branch is
    weighted lam, so at lam = 0 the decoder receives no gradient at all.

    Returns (LossBreakdown, {"encoder", "decoder", "predictor"} grads).
    """
    if batch.y is None:
        raise ConfigError("vib objective requires labels")
    lam, beta = hyper.lam, hyper.beta
    b = batch.x.shape[0]

    codes, enc_tape = encode_with_tape(enc, batch.x)
    z = reparameterize(codes, noise)

    logits, pred_tape = predict_forward(pred, z)
    nll, d_logits = softmax_xent(logits, batch.y)
    pred_nll = float(nll.mean())

    out, dec_tape = decode_forward(dec, z, batch.c)
    ll, d_out_ll = recon_log_lik(out, batch.x, dec.binary_mask)
    recon_nll = -float(ll.mean())

    prior = float(prior_kl_batch(codes).mean())  # reported, weight 0
    marginal, d_means_mk, d_vars_mk = marginal_kl_penalty_grads(codes)

    lb = LossBreakdown(
        recon_nll=recon_nll,
        prior_kl=prior,
        marginal_kl=marginal,
        pred_nll=pred_nll,
        total=pred_nll + (beta + lam) * marginal + lam * recon_nll,
    )

    pred_grads, d_z_pred = mlp_backward(pred.trunk, pred_tape, d_logits / b)
    dec_grads, d_z_dec = decoder_backward(dec, dec_tape, -lam / b * d_out_ll)
    d_means_z, d_vars_z = reparameterize_backward(codes, noise, d_z_pred + d_z_dec)
    d_means = d_means_z + (beta + lam) * d_means_mk
    d_vars = d_vars_z + (beta + lam) * d_vars_mk
    enc_grads = encoder_backward(enc, enc_tape, d_means, d_vars)

    return lb, {"encoder": enc_grads, "decoder": dec_grads, "predictor": pred_grads}


def adversarial_vib_loss(enc, pred, adv_head, batch, hyper: Hyper, noise: np.ndarray):
    """Gradient-reversal baseline: bottleneck classifier plus a covariate
    head trained against the encoder.

    The head's gradients descend its own cross-entropy; the encoder sees
    that gradient negated and scaled by lam (the flip), alongside the
    prediction and beta-weighted prior-KL terms.  The head's reversal
    scale must equal ``hyper.lam`` so the reported total and the applied
    gradients describe the same objective.

    Returns (LossBreakdown, {"encoder", "predictor", "adversary"} grads).
    """
    if batch.y is None:
        raise ConfigError("adv-vib objective requires labels")
    if adv_head.reversal_scale != hyper.lam:
        raise ConfigError(
            f"adversary reversal scale {adv_head.reversal_scale} != lambda {hyper.lam}"
        )
    lam, beta = hyper.lam, hyper.beta
    b = batch.x.shape[0]

    codes, enc_tape = encode_with_tape(enc, batch.x)
    z = reparameterize(codes, noise)

    logits, pred_tape = predict_forward(pred, z)
    nll, d_logits = softmax_xent(logits, batch.y)
    pred_nll = float(nll.mean())

    prior = float(prior_kl_batch(codes).mean())
    adv_nll, adv_grads, d_z_rev = adversary_reversed_grad(adv_head, z, batch.c)

    lb = LossBreakdown(
        prior_kl=prior,
        pred_nll=pred_nll,
        adversary_nll=adv_nll,
        total=pred_nll + beta * prior - lam * adv_nll,
    )

    pred_grads, d_z_pred = mlp_backward(pred.trunk, pred_tape, d_logits / b)
    d_means_z, d_vars_z = reparameterize_backward(codes, noise, d_z_pred + d_z_rev)
    pm, pv = prior_kl_batch_grads(codes)
    d_means = d_means_z + beta * pm / b
    d_vars = d_vars_z + beta * pv / b
    enc_grads = encoder_backward(enc, enc_tape, d_means, d_vars)

    return lb, {"encoder": enc_grads, "predictor": pred_grads, "adversary": adv_grads}
