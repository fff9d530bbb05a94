"""Learnable branches: Gaussian encoder, conditional decoder, label
predictor, and the gradient-reversal covariate head.

The encoder trunk emits ``2 * latent_dim`` values per sample, split into
means and pre-variances; variances are ``softplus(pre) + VAR_FLOOR`` so
every KL downstream stays finite.  The decoder sees ``[z | one-hot c]``
and produces one output per feature: a logit for binary features, a
unit-variance Gaussian mean for continuous ones.

Each branch exposes a forward that records a tape and a backward that
turns output-side gradients into parameter gradients, so the objectives
module can chain them by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergences import CodeBatch
from .errors import ConfigError
from .numerics import Mlp, mlp_backward, mlp_create, mlp_forward, sigmoid

VAR_FLOOR = 1e-4

_LOG_2PI = float(np.log(2.0 * np.pi))


def check_one_hot(c: np.ndarray):
    c = np.asarray(c)
    if c.ndim != 2:
        raise ValueError(f"covariate must be a (batch, classes) matrix, got {c.shape}")
    if not np.all((c == 0.0) | (c == 1.0)) or not np.all(c.sum(axis=1) == 1.0):
        raise ValueError("covariate rows must be one-hot")
    return c.astype(np.float64)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    peak = logits.max(axis=1, keepdims=True)
    shifted = logits - peak
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Per-sample NLL of integer ``labels`` under softmax ``logits``,
    plus the gradient of each sample's NLL w.r.t. its logit row."""
    labels = np.asarray(labels)
    k = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"label out of range for {k} classes")
    log_p = log_softmax(logits)
    rows = np.arange(logits.shape[0])
    nll = -log_p[rows, labels]
    d_logits = np.exp(log_p)
    d_logits[rows, labels] -= 1.0
    return nll, d_logits


# ---------------------------------------------------------------------------
# encoder


@dataclass
class Encoder:
    trunk: Mlp
    latent_dim: int


def encoder_create(input_dim, hidden, latent_dim, rng) -> Encoder:
    sizes = [input_dim, *hidden, 2 * latent_dim]
    acts = ["relu"] * len(hidden) + ["identity"]
    return Encoder(mlp_create(sizes, acts, rng), latent_dim)


def encode_with_tape(enc: Encoder, x: np.ndarray):
    out, tape = mlp_forward(enc.trunk, x)
    d = enc.latent_dim
    means = out[:, :d]
    pre_var = out[:, d:]
    variances = np.logaddexp(0.0, pre_var) + VAR_FLOOR
    return CodeBatch(means, variances), (tape, pre_var)


def encode(enc: Encoder, x: np.ndarray) -> CodeBatch:
    codes, _ = encode_with_tape(enc, x)
    return codes


def encoder_backward(enc: Encoder, tape, d_means, d_vars):
    """Parameter gradients given gradients on the emitted means/variances."""
    trunk_tape, pre_var = tape
    d_pre_var = d_vars * sigmoid(pre_var)  # softplus'(u) = sigmoid(u)
    out_grad = np.concatenate([d_means, d_pre_var], axis=1)
    grads, _ = mlp_backward(enc.trunk, trunk_tape, out_grad)
    return grads


def reparameterize(codes: CodeBatch, noise: np.ndarray) -> np.ndarray:
    """z = mean + sqrt(var) * noise, with standard-normal ``noise``."""
    if noise.shape != codes.means.shape:
        raise ConfigError(
            f"noise shape {noise.shape} does not match codes {codes.means.shape}"
        )
    return codes.means + np.sqrt(codes.vars) * noise


def reparameterize_backward(codes: CodeBatch, noise: np.ndarray, d_z: np.ndarray):
    """Route dL/dz back onto the code means and variances."""
    d_means = d_z
    d_vars = d_z * noise / (2.0 * np.sqrt(codes.vars))
    return d_means, d_vars


# ---------------------------------------------------------------------------
# conditional decoder


@dataclass
class ConditionalDecoder:
    trunk: Mlp  # input latent_dim + cov_dim, output one value per feature
    binary_mask: np.ndarray  # True where the feature is a Bernoulli logit
    latent_dim: int
    cov_dim: int


def decoder_create(latent_dim, cov_dim, hidden, feature_kinds, rng) -> ConditionalDecoder:
    """``feature_kinds`` is a sequence of 'binary'/'continuous', one per
    output feature."""
    mask = np.array([k == "binary" for k in feature_kinds], dtype=bool)
    sizes = [latent_dim + cov_dim, *hidden, mask.size]
    acts = ["relu"] * len(hidden) + ["identity"]
    return ConditionalDecoder(mlp_create(sizes, acts, rng), mask, latent_dim, cov_dim)


def decode_forward(dec: ConditionalDecoder, z: np.ndarray, c: np.ndarray):
    c = check_one_hot(c)
    if z.shape[1] != dec.latent_dim or c.shape[1] != dec.cov_dim:
        raise ConfigError(
            f"decoder expects z ({dec.latent_dim}) + c ({dec.cov_dim}), "
            f"got {z.shape[1]} + {c.shape[1]}"
        )
    return mlp_forward(dec.trunk, np.concatenate([z, c], axis=1))


def recon_log_lik(out: np.ndarray, x: np.ndarray, binary_mask: np.ndarray):
    """Per-sample reconstruction log-likelihood and its gradient in ``out``.

    Binary features: Bernoulli with logit ``out`` (targets may sit anywhere
    in [0, 1]).  Continuous features: unit-variance Gaussian with mean
    ``out``.
    """
    ll_terms = np.empty_like(out)
    d_out = np.empty_like(out)

    bm = binary_mask
    if bm.any():
        logit = out[:, bm]
        xb = x[:, bm]
        # log sigma(l) = -softplus(-l); log(1 - sigma(l)) = -softplus(l)
        ll_terms[:, bm] = -xb * np.logaddexp(0.0, -logit) - (1.0 - xb) * np.logaddexp(0.0, logit)
        d_out[:, bm] = xb - sigmoid(logit)
    cm = ~bm
    if cm.any():
        diff = x[:, cm] - out[:, cm]
        ll_terms[:, cm] = -0.5 * diff * diff - 0.5 * _LOG_2PI
        d_out[:, cm] = diff
    return ll_terms.sum(axis=1), d_out


def decode_log_likelihood(dec: ConditionalDecoder, z, c, x) -> np.ndarray:
    """Per-sample log p(x | z, c), summed over feature dimensions."""
    out, _ = decode_forward(dec, z, c)
    ll, _ = recon_log_lik(out, x, dec.binary_mask)
    return ll


def decoder_backward(dec: ConditionalDecoder, tape, d_out):
    """Parameter gradients plus the gradient flowing back into z."""
    grads, d_in = mlp_backward(dec.trunk, tape, d_out)
    return grads, d_in[:, : dec.latent_dim]


def decode_mean(dec: ConditionalDecoder, z, c) -> np.ndarray:
    """Expected feature values: sigmoid of binary logits, raw continuous means."""
    out, _ = decode_forward(dec, z, c)
    out = out.copy()
    out[:, dec.binary_mask] = sigmoid(out[:, dec.binary_mask])
    return out


# ---------------------------------------------------------------------------
# predictor


@dataclass
class Predictor:
    trunk: Mlp  # latent_dim -> class logits


def predictor_create(latent_dim, hidden, n_classes, rng) -> Predictor:
    sizes = [latent_dim, *hidden, n_classes]
    acts = ["relu"] * len(hidden) + ["identity"]
    return Predictor(mlp_create(sizes, acts, rng))


def predict_forward(pred: Predictor, z: np.ndarray):
    return mlp_forward(pred.trunk, z)


def predict_log_likelihood(pred: Predictor, z, y) -> np.ndarray:
    """Per-sample log p(y | z) under the softmax head."""
    logits, _ = predict_forward(pred, z)
    nll, _ = softmax_xent(logits, y)
    return -nll


def predict_labels(pred: Predictor, z) -> np.ndarray:
    logits, _ = predict_forward(pred, z)
    return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# adversary head (gradient reversal baseline)


@dataclass
class AdversaryHead:
    trunk: Mlp  # latent_dim -> covariate logits
    reversal_scale: float


def adversary_create(latent_dim, hidden, cov_dim, rng, reversal_scale=1.0) -> AdversaryHead:
    sizes = [latent_dim, *hidden, cov_dim]
    acts = ["relu"] * len(hidden) + ["identity"]
    return AdversaryHead(mlp_create(sizes, acts, rng), reversal_scale)


def adversary_reversed_grad(head: AdversaryHead, z: np.ndarray, c: np.ndarray):
    """One gradient-flip evaluation of the covariate head.

    Returns (mean cross-entropy, head parameter gradients, reversed
    z-gradient).  The head gradients descend the adversary's own loss;
    the z-gradient is the same loss's gradient negated and scaled by the
    reversal factor, so an optimizer stepping on it pushes the encoder to
    *raise* the adversary's loss.
    """
    c = check_one_hot(c)
    labels = c.argmax(axis=1)
    logits, tape = mlp_forward(head.trunk, z)
    nll, d_logits = softmax_xent(logits, labels)
    b = z.shape[0]
    head_grads, d_z = mlp_backward(head.trunk, tape, d_logits / b)
    return float(nll.mean()), head_grads, -head.reversal_scale * d_z
