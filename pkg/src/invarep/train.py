"""Training loop, best-validation checkpointing, and model rebuild.

One optimizer state per model branch, one fresh standard-normal noise
draw per sample per step (shared by every term of the step's objective),
and seed-separated generator streams for init, shuffling, and noise, so
a run is a pure function of its config and data.

Checkpoints hold every branch's parameters plus the resolved config and
enough dataset metadata (feature kinds, dimensions) to rebuild the
models without touching the data again.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, make_config
from .data import BatchIterator, Dataset, TRAIN, VALID
from .divergences import prior_kl_batch
from .errors import CheckpointError, ConfigError, TrainingDiverged
from .models import (
    adversary_create,
    adversary_reversed_grad,
    decode_log_likelihood,
    decoder_create,
    encode,
    encoder_create,
    predict_labels,
    predictor_create,
    reparameterize,
    AdversaryHead,
    ConditionalDecoder,
    Encoder,
    Predictor,
)
from .numerics import AdamState, Layer, Mlp, adam_step, g17
from .objectives import (
    Hyper,
    LossBreakdown,
    adversarial_vib_loss,
    vae_loss,
    vib_loss,
)

BRANCH_ORDER = ("encoder", "decoder", "predictor", "adversary")

LOG_COLUMNS = ("epoch",) + LossBreakdown.FIELDS + ("val_metric",)


@dataclass
class TrainResult:
    models: dict
    history: list = field(default_factory=list)  # one dict per epoch
    best_epoch: int = 0
    best_metric: float = float("-inf")


def build_models(cfg: RunConfig, dataset: Dataset) -> dict:
    """Branches for the configured objective, created in a fixed order so
    the init stream is reproducible."""
    rng = np.random.default_rng([cfg.seed, 0])
    models = {"encoder": encoder_create(dataset.d_x, cfg.hidden, cfg.latent_dim, rng)}
    dec_hidden = tuple(reversed(cfg.hidden))
    if cfg.objective in ("vae", "vib"):
        models["decoder"] = decoder_create(
            cfg.latent_dim, dataset.d_c, dec_hidden, dataset.feature_kinds, rng
        )
    if cfg.objective in ("vib", "adv-vib"):
        models["predictor"] = predictor_create(
            cfg.latent_dim, cfg.hidden, dataset.n_classes, rng
        )
    if cfg.objective == "adv-vib":
        models["adversary"] = adversary_create(
            cfg.latent_dim, cfg.hidden, dataset.d_c, rng, reversal_scale=cfg.lam
        )
    return models


def _trunks(models):
    return {name: m.trunk for name, m in models.items()}


def validation_metric(objective, models, batch) -> float:
    """Higher is better.  Deterministic: codes enter through their means,
    no sampling."""
    codes = encode(models["encoder"], batch.x)
    if objective == "vae":
        ll = decode_log_likelihood(models["decoder"], codes.means, batch.c, batch.x)
        return float((ll - prior_kl_batch(codes)).mean())
    labels = predict_labels(models["predictor"], codes.means)
    return float((labels == batch.y).mean())


def _step(objective, models, batch, hyper, noise):
    if objective == "vae":
        return vae_loss(models["encoder"], models["decoder"], batch, hyper, noise)
    if objective == "vib":
        return vib_loss(models["encoder"], models["decoder"],
                        models["predictor"], batch, hyper, noise)
    if objective == "adv-vib":
        return adversarial_vib_loss(models["encoder"], models["predictor"],
                                    models["adversary"], batch, hyper, noise)
    raise ConfigError(f"unknown objective {objective!r}")


def train_model(cfg: RunConfig, dataset: Dataset) -> TrainResult:
    """Run the configured objective to completion and leave the models at
    their best-validation snapshot."""
    models = build_models(cfg, dataset)
    trunks = _trunks(models)
    states = {name: AdamState.for_params(t.params(), lr=cfg.learning_rate)
              for name, t in trunks.items()}
    hyper = Hyper(lam=cfg.lam, beta=cfg.beta, learning_rate=cfg.learning_rate,
                  batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed,
                  adversary_steps=cfg.adversary_steps)

    train = dataset.subset(TRAIN)
    valid = dataset.subset(VALID)
    if valid.x.shape[0] == 0:
        valid = train
    iterator = BatchIterator(train, cfg.batch_size, seed=[cfg.seed, 1])
    noise_rng = np.random.default_rng([cfg.seed, 2])

    result = TrainResult(models)
    best = None
    stall = 0
    for epoch in range(1, cfg.epochs + 1):
        sums = np.zeros(len(LossBreakdown.FIELDS))
        seen = 0
        for batch in iterator.epoch():
            b = batch.x.shape[0]
            noise = noise_rng.standard_normal((b, cfg.latent_dim))
            lb, grads = _step(cfg.objective, models, batch, hyper, noise)
            for name, value in zip(LossBreakdown.FIELDS, lb.as_tuple()):
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"{name} became non-finite at epoch {epoch}"
                    )
            for name, g in grads.items():
                adam_step(trunks[name].params(), g, states[name])
            if cfg.objective == "adv-vib":
                for _ in range(cfg.adversary_steps - 1):
                    extra_noise = noise_rng.standard_normal((b, cfg.latent_dim))
                    z = reparameterize(encode(models["encoder"], batch.x), extra_noise)
                    _, head_grads, _ = adversary_reversed_grad(
                        models["adversary"], z, batch.c
                    )
                    adam_step(trunks["adversary"].params(), head_grads,
                              states["adversary"])
            sums += b * np.array(lb.as_tuple())
            seen += b

        metric = validation_metric(cfg.objective, models, valid)
        row = {"epoch": epoch}
        row.update({k: v for k, v in zip(LossBreakdown.FIELDS, sums / seen)})
        row["val_metric"] = metric
        result.history.append(row)

        # snapshot ties go to the later epoch (prefer the longer-trained
        # model at equal validation quality); patience still counts
        # epochs without strict improvement
        improved = metric > result.best_metric
        if metric >= result.best_metric:
            result.best_metric = metric
            result.best_epoch = epoch
            best = {name: [p.copy() for p in t.params()]
                    for name, t in trunks.items()}
        if improved:
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    for name, params in best.items():
        trunks[name].set_params(params)
    return result


def write_loss_log(path, history) -> None:
    lines = [",".join(LOG_COLUMNS)]
    for row in history:
        cells = [str(row["epoch"])]
        cells += [g17(row[k]) for k in LOG_COLUMNS[1:]]
        lines.append(",".join(cells))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# checkpoint bundling


def save_model_checkpoint(path, cfg: RunConfig, dataset: Dataset, models) -> None:
    lines = cfg.echo_lines()
    lines.append(f"meta.d-x = {dataset.d_x}")
    lines.append(f"meta.d-c = {dataset.d_c}")
    if dataset.y is not None:
        lines.append(f"meta.n-classes = {dataset.n_classes}")
    lines.append("meta.kinds = " + ",".join(dataset.feature_kinds))
    shape = dataset.meta.get("image_shape")
    if shape is not None:
        lines.append(f"meta.image-shape = {shape[0]},{shape[1]}")
    tensors = {}
    for branch in BRANCH_ORDER:
        model = models.get(branch)
        if model is None:
            continue
        for name, arr in zip(model.trunk.param_names(), model.trunk.params()):
            tensors[f"{branch}.{name}"] = arr
    save_checkpoint(path, lines, tensors)


def _mlp_from_tensors(tensors, branch) -> Mlp | None:
    layers = []
    i = 0
    while f"{branch}.layer{i}.weight" in tensors:
        layers.append((tensors[f"{branch}.layer{i}.weight"],
                       tensors[f"{branch}.layer{i}.bias"]))
        i += 1
    if not layers:
        return None
    acts = ["relu"] * (len(layers) - 1) + ["identity"]
    return Mlp([Layer(w, b, a) for (w, b), a in zip(layers, acts)])


def load_model_checkpoint(path):
    """Returns (resolved RunConfig, meta dict, models dict)."""
    lines, tensors = load_checkpoint(path)
    cfg_kv, meta = {}, {}
    for line in lines:
        key, sep, value = line.partition(" = ")
        if not sep:
            raise CheckpointError(f"malformed config line {line!r}")
        if key.startswith("meta."):
            meta[key[len("meta."):]] = value
        else:
            cfg_kv[key] = value
    cfg = make_config(file_values=cfg_kv)

    models = {}
    enc_trunk = _mlp_from_tensors(tensors, "encoder")
    if enc_trunk is None:
        raise CheckpointError("checkpoint has no encoder tensors")
    models["encoder"] = Encoder(enc_trunk, cfg.latent_dim)

    dec_trunk = _mlp_from_tensors(tensors, "decoder")
    if dec_trunk is not None:
        kinds = meta.get("kinds", "").split(",")
        mask = np.array([k == "binary" for k in kinds], dtype=bool)
        if mask.size != dec_trunk.output_dim:
            raise CheckpointError("feature kinds do not match decoder output")
        models["decoder"] = ConditionalDecoder(
            dec_trunk, mask, cfg.latent_dim, int(meta["d-c"])
        )
    pred_trunk = _mlp_from_tensors(tensors, "predictor")
    if pred_trunk is not None:
        models["predictor"] = Predictor(pred_trunk)
    adv_trunk = _mlp_from_tensors(tensors, "adversary")
    if adv_trunk is not None:
        models["adversary"] = AdversaryHead(adv_trunk, reversal_scale=cfg.lam)
    return cfg, meta, models
