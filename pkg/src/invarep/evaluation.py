"""Post-hoc evaluation: adversary ladder, reports, exports, style transfer.

The central protocol: freeze a trained encoder, compute posterior means
for every row, then train fresh covariate classifiers of increasing
depth on those means.  If the representation is invariant, even the
deepest adversary should sit near the majority-class baseline.  The
encoder is never touched; adversaries only ever see precomputed arrays.

Adversaries deeper than logistic regression interleave batch
normalization between the linear map and the relu, with the usual
train/eval distinction (batch statistics while training, running
statistics afterwards).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Batch, Dataset, TEST, TRAIN, VALID
from .models import encode, predict_labels, softmax_xent
from .numerics import AdamState, adam_step, g17

ADVERSARY_DEPTHS = (0, 1, 2, 3)
ADVERSARY_HIDDEN = 64
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


# ---------------------------------------------------------------------------
# batch-normalized discriminator


@dataclass
class BatchNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def create(cls, dim):
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim))


@dataclass
class DiscBlock:
    weight: np.ndarray
    bias: np.ndarray
    bn: BatchNorm


@dataclass
class Discriminator:
    """``depth`` hidden blocks of linear/batchnorm/relu, then a linear
    softmax head.  Depth 0 is plain multinomial logistic regression."""

    blocks: list[DiscBlock]
    out_weight: np.ndarray
    out_bias: np.ndarray

    def params(self):
        out = []
        for b in self.blocks:
            out += [b.weight, b.bias, b.bn.gamma, b.bn.beta]
        out += [self.out_weight, self.out_bias]
        return out

    def running_stats(self):
        out = []
        for b in self.blocks:
            out += [b.bn.running_mean, b.bn.running_var]
        return out

    def predict(self, x):
        return np.argmax(disc_forward_eval(self, np.asarray(x)), axis=1)


@dataclass
class ConstantPredictor:
    """Stand-in when the training covariate is single-class."""

    label: int

    def predict(self, x):
        return np.full(x.shape[0], self.label, dtype=np.int64)


def discriminator_create(input_dim, depth, n_classes, rng, hidden=ADVERSARY_HIDDEN):
    if depth < 0:
        raise ValueError("depth must be >= 0")
    blocks = []
    d = input_dim
    for _ in range(depth):
        w = rng.standard_normal((d, hidden)) * np.sqrt(2.0 / d)
        blocks.append(DiscBlock(w, np.zeros(hidden), BatchNorm.create(hidden)))
        d = hidden
    # zero softmax head: argmax over logits is scale-free, so the first
    # correctly-signed steps already classify; a random head would start
    # as a confident wrong boundary the patience window cannot unwind
    return Discriminator(blocks, np.zeros((d, n_classes)), np.zeros(n_classes))


def disc_forward_train(disc, x):
    """Forward with batch statistics; updates running averages in place
    and returns (logits, tape)."""
    h = x
    tape = []
    for blk in disc.blocks:
        lin = h @ blk.weight + blk.bias
        mu = lin.mean(axis=0)
        var = lin.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (lin - mu) * inv_std
        bn = blk.bn
        bn.running_mean = BN_MOMENTUM * bn.running_mean + (1.0 - BN_MOMENTUM) * mu
        bn.running_var = BN_MOMENTUM * bn.running_var + (1.0 - BN_MOMENTUM) * var
        out = bn.gamma * xhat + bn.beta
        tape.append((h, xhat, inv_std, out))
        h = np.maximum(0.0, out)
    logits = h @ disc.out_weight + disc.out_bias
    tape.append(h)
    return logits, tape


def disc_forward_eval(disc, x):
    h = x
    for blk in disc.blocks:
        lin = h @ blk.weight + blk.bias
        bn = blk.bn
        xhat = (lin - bn.running_mean) / np.sqrt(bn.running_var + BN_EPS)
        h = np.maximum(0.0, bn.gamma * xhat + bn.beta)
    return h @ disc.out_weight + disc.out_bias


def disc_backward(disc, tape, d_logits):
    """Gradients in the same order as ``params()``."""
    h_last = tape[-1]
    grads_out = [h_last.T @ d_logits, d_logits.sum(axis=0)]
    d_h = d_logits @ disc.out_weight.T
    grads = []
    for blk, (h_in, xhat, inv_std, bn_out) in zip(
        reversed(disc.blocks), reversed(tape[:-1])
    ):
        d_bn_out = d_h * (bn_out > 0.0)
        d_gamma = (d_bn_out * xhat).sum(axis=0)
        d_beta = d_bn_out.sum(axis=0)
        d_xhat = d_bn_out * blk.bn.gamma
        b = xhat.shape[0]
        # batch statistics make every row depend on every other row
        d_lin = (inv_std / b) * (
            b * d_xhat
            - d_xhat.sum(axis=0)
            - xhat * (d_xhat * xhat).sum(axis=0)
        )
        grads = [h_in.T @ d_lin, d_lin.sum(axis=0), d_gamma, d_beta] + grads
        d_h = d_lin @ blk.weight.T
    return grads + grads_out


# ---------------------------------------------------------------------------
# adversary training


def train_posthoc_adversary(inputs, targets, split, n_classes, depth, seed,
                            hidden=ADVERSARY_HIDDEN, lr=1e-3, batch_size=128,
                            max_epochs=200, patience=10):
    """Train one covariate classifier on frozen arrays.

    Early stopping tracks validation accuracy with the given patience and
    restores the best snapshot (parameters and running statistics).
    Returns (model, test accuracy); with no test rows the accuracy falls
    back to the stopping split.  A single-class training covariate
    degenerates to the constant predictor, with a warning.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    train_mask = split == TRAIN
    valid_mask = split == VALID
    if not valid_mask.any():
        valid_mask = train_mask
    x_tr, t_tr = inputs[train_mask], targets[train_mask]
    x_va, t_va = inputs[valid_mask], targets[valid_mask]
    test_mask = split == TEST
    if not test_mask.any():
        test_mask = valid_mask
    x_te, t_te = inputs[test_mask], targets[test_mask]

    classes = np.unique(t_tr)
    if classes.size < 2:
        warnings.warn("covariate is single-class on the train split; "
                      "adversary degenerates to a constant predictor")
        model = ConstantPredictor(int(classes[0]) if classes.size else 0)
        return model, float((model.predict(x_te) == t_te).mean())

    rng = np.random.default_rng(seed)
    disc = discriminator_create(inputs.shape[1], depth, n_classes, rng, hidden)
    params = disc.params()
    state = AdamState.for_params(params, lr=lr)

    best_acc = -1.0
    best_params = None
    best_stats = None
    stall = 0
    n = x_tr.shape[0]
    for _ in range(max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            logits, tape = disc_forward_train(disc, x_tr[idx])
            nll, d_logits = softmax_xent(logits, t_tr[idx])
            grads = disc_backward(disc, tape, d_logits / idx.size)
            adam_step(params, grads, state)
        acc = float((disc.predict(x_va) == t_va).mean())
        if acc > best_acc:
            best_acc = acc
            best_params = [p.copy() for p in params]
            best_stats = [s.copy() for s in disc.running_stats()]
            stall = 0
        else:
            stall += 1
            if stall >= patience:
                break
    for p, b in zip(params, best_params):
        p[...] = b
    for s, b in zip(disc.running_stats(), best_stats):
        s[...] = b
    return disc, float((disc.predict(x_te) == t_te).mean())


def adversary_ladder(inputs, targets, split, n_classes, seed,
                     depths=ADVERSARY_DEPTHS, hidden=ADVERSARY_HIDDEN,
                     lr=1e-3, batch_size=128, max_epochs=200, patience=10):
    """Train the whole depth ladder; returns {depth: test accuracy}."""
    out = {}
    for depth in depths:
        _, acc = train_posthoc_adversary(
            inputs, targets, split, n_classes, depth,
            seed=seed * len(ADVERSARY_DEPTHS) + depth,
            hidden=hidden, lr=lr, batch_size=batch_size,
            max_epochs=max_epochs, patience=patience,
        )
        out[depth] = acc
    return out


# ---------------------------------------------------------------------------
# reports


CSV_COLUMNS = (
    "dataset", "objective", "seed", "lambda", "beta",
    "pred_accuracy", "majority_label", "majority_covariate",
    "adv_acc_depth0", "adv_acc_depth1", "adv_acc_depth2", "adv_acc_depth3",
)


@dataclass
class EvalReport:
    dataset: str
    objective: str
    seed: int
    lam: float
    beta: float
    pred_accuracy: float | None
    majority_label: float | None
    majority_covariate: float
    adv_accuracy: dict = field(default_factory=dict)

    def _values(self):
        vals = [self.dataset, self.objective, str(self.seed),
                g17(self.lam), g17(self.beta),
                "" if self.pred_accuracy is None else g17(self.pred_accuracy),
                "" if self.majority_label is None else g17(self.majority_label),
                g17(self.majority_covariate)]
        vals += [g17(self.adv_accuracy[d]) for d in ADVERSARY_DEPTHS]
        return vals

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in zip(CSV_COLUMNS, self._values())]
        return "\n".join(lines) + "\n"

    def to_csv(self, header=True) -> str:
        row = ",".join(self._values())
        return (",".join(CSV_COLUMNS) + "\n" + row + "\n") if header else row + "\n"

    @classmethod
    def from_text(cls, text) -> "EvalReport":
        kv = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition(" = ")
            kv[key.strip()] = value.strip()
        opt = lambda s: None if s == "" else float(s)
        return cls(
            dataset=kv["dataset"], objective=kv["objective"],
            seed=int(kv["seed"]), lam=float(kv["lambda"]),
            beta=float(kv["beta"]),
            pred_accuracy=opt(kv["pred_accuracy"]),
            majority_label=opt(kv["majority_label"]),
            majority_covariate=float(kv["majority_covariate"]),
            adv_accuracy={d: float(kv[f"adv_acc_depth{d}"])
                          for d in ADVERSARY_DEPTHS},
        )


def majority_fraction(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.bincount(labels).max() / labels.size)


def posterior_means(encoder, x, chunk=4096):
    parts = [encode(encoder, x[i : i + chunk]).means
             for i in range(0, x.shape[0], chunk)]
    return np.concatenate(parts, axis=0)


def evaluate(encoder, predictor, dataset: Dataset, objective, seed, lam, beta,
             adversary_seed=None, max_epochs=200) -> EvalReport:
    """Full protocol: posterior means everywhere, predictor accuracy and
    majority baselines on the test split, adversary ladder on the means."""
    means = posterior_means(encoder, dataset.x)
    test = dataset.split == TEST
    c_idx = np.argmax(dataset.c, axis=1)

    pred_acc = None
    majority_label = None
    if dataset.y is not None:
        majority_label = majority_fraction(dataset.y[test])
        if predictor is not None:
            labels = predict_labels(predictor, means[test])
            pred_acc = float((labels == dataset.y[test]).mean())

    ladder = adversary_ladder(
        means, c_idx, dataset.split, dataset.d_c,
        seed=seed if adversary_seed is None else adversary_seed,
        max_epochs=max_epochs,
    )
    return EvalReport(
        dataset=dataset.meta.get("name", "unknown"), objective=objective,
        seed=seed, lam=lam, beta=beta, pred_accuracy=pred_acc,
        majority_label=majority_label,
        majority_covariate=majority_fraction(c_idx[test]),
        adv_accuracy=ladder,
    )


# ---------------------------------------------------------------------------
# code export


def export_codes(encoder, dataset: Dataset, path) -> None:
    """CSV of posterior means with covariate, label, and split tag: one
    row per sample, d_z + 3 columns.  Deterministic formatting, so a
    re-export from the same checkpoint is byte-identical."""
    means = posterior_means(encoder, dataset.x)
    c_idx = np.argmax(dataset.c, axis=1)
    d = means.shape[1]
    header = ",".join([f"z{j}" for j in range(d)] + ["c", "y", "split"])
    lines = [header]
    for i in range(means.shape[0]):
        row = [g17(v) for v in means[i]]
        row.append(str(int(c_idx[i])))
        row.append("" if dataset.y is None else str(int(dataset.y[i])))
        row.append(str(dataset.split[i]))
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# style transfer


def style_transfer_grid(decoder, codes_means, image_shape, n_covariates=10):
    """Decode each source code under every covariate value.

    Returns a uint8 grid image: one row per source, one column per
    covariate, tiles of ``image_shape``.
    """
    from .models import decode_mean

    h, w = image_shape
    n_src = codes_means.shape[0]
    grid = np.zeros((n_src * h, n_covariates * w), dtype=np.uint8)
    for k in range(n_covariates):
        c = np.zeros((n_src, n_covariates))
        c[:, k] = 1.0
        out = decode_mean(decoder, codes_means, c)
        tiles = np.clip(np.rint(out * 255.0), 0.0, 255.0).astype(np.uint8)
        for i in range(n_src):
            grid[i * h : (i + 1) * h, k * w : (k + 1) * w] = tiles[i].reshape(h, w)
    return grid


def write_pgm(path, image) -> None:
    """Binary 8-bit PGM; a fixed header plus raw pixels, so output bytes
    are a pure function of the array."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("expected a 2-d image")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(image.tobytes())
