"""Acceptance suite: one test per shipped criterion.

Each test carries the ``acceptance`` marker; conftest prints a one-line
PASS/FAIL/SKIP verdict per criterion after the run.  Criteria 6-8 need
the real German/Adult/MNIST files and are gated on INVAREP_DATA_DIR
(default ./data): they skip with an explicit reason when the files are
absent rather than fake a pass.

The synthetic sweep (criterion 5) trains twelve models and is the
slowest in-sandbox criterion; its configuration is pinned by the
module constants below so the reported numbers are reproducible.
"""

import os
import shutil

import numpy as np
import pytest

from conftest import assert_grads_close, fd_gradients
from test_divergences import penalty_loop_oracle, quadrature_kl_1d, random_batch

import invarep.cli as cli
from invarep.config import make_config
from invarep.data import (
    TEST,
    load_adult,
    load_german,
    load_mnist,
    make_synthetic,
)
from invarep.divergences import (
    CodeBatch,
    GaussianCode,
    gaussian_kl,
    marginal_kl_mc_oracle,
    marginal_kl_penalty,
    pairwise_kl_matrix,
)
from invarep.evaluation import (
    evaluate,
    posterior_means,
    train_posthoc_adversary,
)
from invarep.models import (
    adversary_create,
    decode_mean,
    decoder_create,
    encoder_create,
    predictor_create,
)
from invarep.objectives import Hyper, adversarial_vib_loss, vae_loss, vib_loss
from invarep.train import train_model

DATA_DIR = os.environ.get("INVAREP_DATA_DIR", "data")


def data_path(name):
    return os.path.join(DATA_DIR, name)


def needs_files(*names):
    missing = [n for n in names if not os.path.exists(data_path(n))]
    return pytest.mark.skipif(
        bool(missing),
        reason="dataset files not present: " + ", ".join(missing),
    )


# ---------------------------------------------------------------------------
# criterion 1: analytic KL vs quadrature


@pytest.mark.acceptance(1, "analytic KL vs quadrature")
def test_criterion_1_gaussian_kl_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m1, m2 = rng.normal(0.0, 3.0, size=2)
        v1, v2 = np.exp(rng.normal(0.0, 1.0, size=2))
        p = GaussianCode(np.array([m1]), np.array([v1]))
        q = GaussianCode(np.array([m2]), np.array([v2]))
        assert gaussian_kl(p, q) == pytest.approx(
            quadrature_kl_1d(m1, v1, m2, v2), abs=1e-6
        )
    same = GaussianCode(np.array([0.7]), np.array([1.3]))
    assert gaussian_kl(same, same) == 0.0


# ---------------------------------------------------------------------------
# criterion 2: finite differences through every objective


def _one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


@pytest.mark.acceptance(2, "objective gradients vs finite differences")
def test_criterion_2_objective_gradients():
    from invarep.data import Batch

    rng = np.random.default_rng(23)
    kinds = ["binary", "continuous", "binary"]
    x = np.column_stack([
        (rng.random(4) > 0.5) * 1.0,
        rng.standard_normal(4),
        (rng.random(4) > 0.5) * 1.0,
    ])
    batch = Batch(x, _one_hot([0, 1, 1, 0], 2), np.array([1, 0, 1, 1]))
    noise = rng.standard_normal((4, 2))
    lam = 0.7
    hyper = Hyper(lam=lam, beta=0.3)

    enc = encoder_create(3, [8], 2, rng)
    dec = decoder_create(2, 2, [8], kinds, rng)
    pred = predictor_create(2, [8], 2, rng)
    adv = adversary_create(2, [8], 2, rng, reversal_scale=lam)

    _, grads = vae_loss(enc, dec, batch, hyper, noise)
    numeric = fd_gradients(
        lambda: vae_loss(enc, dec, batch, hyper, noise)[0].total,
        enc.trunk.params() + dec.trunk.params(),
    )
    assert_grads_close(grads["encoder"] + grads["decoder"], numeric)

    _, grads = vib_loss(enc, dec, pred, batch, hyper, noise)
    numeric = fd_gradients(
        lambda: vib_loss(enc, dec, pred, batch, hyper, noise)[0].total,
        enc.trunk.params() + dec.trunk.params() + pred.trunk.params(),
    )
    assert_grads_close(
        grads["encoder"] + grads["decoder"] + grads["predictor"], numeric
    )

    # encoder and predictor descend the reported total; the reversal
    # head descends its own cross-entropy
    _, grads = adversarial_vib_loss(enc, pred, adv, batch, hyper, noise)
    numeric = fd_gradients(
        lambda: adversarial_vib_loss(enc, pred, adv, batch, hyper, noise)[0].total,
        enc.trunk.params() + pred.trunk.params(),
    )
    assert_grads_close(grads["encoder"] + grads["predictor"], numeric)
    numeric_head = fd_gradients(
        lambda: adversarial_vib_loss(enc, pred, adv, batch, hyper, noise)[0].adversary_nll,
        adv.trunk.params(),
    )
    assert_grads_close(grads["adversary"], numeric_head)


# ---------------------------------------------------------------------------
# criterion 3: Jensen upper bound against the Monte-Carlo mixture KL


@pytest.mark.acceptance(3, "pairwise average upper-bounds mixture KL")
def test_criterion_3_jensen_bound():
    rng = np.random.default_rng(37)
    for trial in range(100):
        b = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        batch = random_batch(rng, b, d)
        i = int(rng.integers(0, b))
        row_avg = pairwise_kl_matrix(batch)[i].mean()
        mc, stderr = marginal_kl_mc_oracle(
            batch, i, n_samples=20000, seed=1000 + trial, with_stderr=True
        )
        assert row_avg >= mc - 3.0 * stderr, (
            f"trial {trial}: row average {row_avg:.6f} fell below "
            f"MC {mc:.6f} - 3*{stderr:.6f}"
        )


# ---------------------------------------------------------------------------
# criterion 4: matrix algebra equals the double loop


@pytest.mark.acceptance(4, "penalty matrix path vs double loop")
def test_criterion_4_matrix_vs_loop():
    rng = np.random.default_rng(53)
    for _ in range(20):
        b = int(rng.integers(2, 9))
        d = int(rng.integers(1, 5))
        batch = random_batch(rng, b, d)
        assert marginal_kl_penalty(batch) == pytest.approx(
            penalty_loop_oracle(batch), abs=1e-10
        )


# ---------------------------------------------------------------------------
# criterion 5: synthetic invariance sweep

SWEEP_N = 4000
SWEEP_LAMBDAS = (0.0, 0.1, 1.0, 10.0)
SWEEP_SEEDS = (0, 1, 2)
SWEEP_OVERRIDES = {
    "objective": "vib",
    "dataset": "synthetic",
    "beta": "0.001",
    "epochs": "160",
    "patience": "160",
    "latent-dim": "8",
}

_sweep_cache = {}


def run_sweep():
    if _sweep_cache:
        return _sweep_cache
    for seed in SWEEP_SEEDS:
        ds = make_synthetic(SWEEP_N, seed)
        for lam in SWEEP_LAMBDAS:
            overrides = dict(SWEEP_OVERRIDES)
            overrides["lambda"] = repr(lam)
            overrides["seed"] = str(seed)
            cfg = make_config(overrides=overrides).resolved()
            result = train_model(cfg, ds)
            report = evaluate(
                result.models["encoder"], result.models.get("predictor"),
                ds, "vib", seed, lam, cfg.beta,
            )
            _sweep_cache[(seed, lam)] = report
    return _sweep_cache


def median3(values):
    return sorted(values)[1]


@pytest.mark.acceptance(5, "synthetic invariance trend")
def test_criterion_5_synthetic_invariance():
    reports = run_sweep()
    adv3 = {
        lam: median3([reports[(s, lam)].adv_accuracy[3] for s in SWEEP_SEEDS])
        for lam in SWEEP_LAMBDAS
    }
    pred = {
        lam: median3([reports[(s, lam)].pred_accuracy for s in SWEEP_SEEDS])
        for lam in SWEEP_LAMBDAS
    }
    majority = median3(
        [reports[(s, 10.0)].majority_covariate for s in SWEEP_SEEDS]
    )
    assert adv3[0.0] > 0.85, f"lambda=0 adversary {adv3[0.0]:.3f} not above 0.85"
    assert abs(adv3[10.0] - majority) <= 0.05, (
        f"lambda=10 adversary {adv3[10.0]:.3f} not within 0.05 of "
        f"majority {majority:.3f}"
    )
    assert pred[0.0] - pred[10.0] < 0.10, (
        f"label accuracy dropped {pred[0.0] - pred[10.0]:.3f}"
    )


def test_sweep_adversary_monotone_within_noise():
    # the train-module invariant: 3-seed median adversary accuracy is
    # non-increasing along the lambda grid, with an allowance sized from
    # the observed seed-to-seed scatter
    reports = run_sweep()
    meds = [
        median3([reports[(s, lam)].adv_accuracy[3] for s in SWEEP_SEEDS])
        for lam in SWEEP_LAMBDAS
    ]
    for earlier, later in zip(meds, meds[1:]):
        assert later <= earlier + 0.10


# ---------------------------------------------------------------------------
# criteria 6-8: dataset reproductions, gated on the files being present


def tune_lambda(dataset, grid, overrides, tol=0.02):
    """Largest lambda whose validation accuracy is within ``tol`` of the
    best across the grid: prefer invariance at minimal accuracy cost."""
    from invarep.data import VALID
    from invarep.train import validation_metric

    scored = []
    for lam in grid:
        ov = dict(overrides)
        ov["lambda"] = repr(lam)
        cfg = make_config(overrides=ov).resolved()
        result = train_model(cfg, dataset)
        metric = validation_metric("vib", result.models, dataset.subset(VALID))
        scored.append((lam, metric, result))
    best = max(m for _, m, _ in scored)
    keep = [(lam, result) for lam, m, result in scored if m >= best - tol]
    return max(keep, key=lambda t: t[0])


@needs_files("german.data")
@pytest.mark.acceptance(6, "German reproduction")
def test_criterion_6_german():
    ds = load_german(data_path("german.data"), seed=0)
    test_y = ds.y[ds.split == TEST]
    test_c = np.argmax(ds.c[ds.split == TEST], axis=1)
    maj_y = max(np.mean(test_y == 1), np.mean(test_y == 0))
    maj_c = max(np.mean(test_c == 1), np.mean(test_c == 0))
    assert maj_y == pytest.approx(0.725, abs=5e-4)
    assert maj_c == pytest.approx(0.695, abs=5e-4)

    lam, result = tune_lambda(
        ds, (0.0, 0.1, 1.0, 10.0),
        {"objective": "vib", "dataset": "german", "seed": "0"},
    )
    cfg = make_config(overrides={"objective": "vib", "dataset": "german",
                                 "lambda": repr(lam), "seed": "0"}).resolved()
    report = evaluate(result.models["encoder"], result.models["predictor"],
                      ds, "vib", 0, lam, cfg.beta)
    assert abs(report.pred_accuracy - 0.710) <= 0.03
    assert report.adv_accuracy[3] <= 0.725


@needs_files("adult.data", "adult.test")
@pytest.mark.acceptance(7, "Adult reproduction")
def test_criterion_7_adult():
    ds = load_adult(data_path("adult.data"), data_path("adult.test"), seed=0)

    lam, result = tune_lambda(
        ds, (0.0, 0.1, 1.0, 10.0),
        {"objective": "vib", "dataset": "adult", "seed": "0"},
    )
    cfg = make_config(overrides={"objective": "vib", "dataset": "adult",
                                 "lambda": repr(lam), "seed": "0"}).resolved()
    report = evaluate(result.models["encoder"], result.models["predictor"],
                      ds, "vib", 0, lam, cfg.beta)
    assert abs(report.pred_accuracy - 0.842) <= 0.02
    assert report.adv_accuracy[3] <= 0.80

    # gradient-reversal baseline under the same post-hoc protocol
    adv_cfg = make_config(overrides={"objective": "adv-vib", "dataset": "adult",
                                     "lambda": repr(lam), "seed": "0"}).resolved()
    adv_result = train_model(adv_cfg, ds)
    adv_report = evaluate(adv_result.models["encoder"],
                          adv_result.models["predictor"],
                          ds, "adv-vib", 0, lam, adv_cfg.beta)
    assert report.adv_accuracy[3] < adv_report.adv_accuracy[3]


@needs_files("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
@pytest.mark.acceptance(8, "MNIST style transfer")
def test_criterion_8_mnist():
    from sklearn.linear_model import LogisticRegression

    from invarep.data import TRAIN

    ds = load_mnist(os.path.join(DATA_DIR, "train-images-idx3-ubyte"),
                    os.path.join(DATA_DIR, "train-labels-idx1-ubyte"),
                    os.path.join(DATA_DIR, "t10k-images-idx3-ubyte"),
                    os.path.join(DATA_DIR, "t10k-labels-idx1-ubyte"),
                    seed=0, limit_train=10000, limit_test=2000)
    cfg = make_config(overrides={"objective": "vae", "dataset": "mnist",
                                 "lambda": "1.0", "seed": "0",
                                 "limit-train": "10000",
                                 "limit-test": "2000"}).resolved()
    result = train_model(cfg, ds)
    enc = result.models["encoder"]
    dec = result.models["decoder"]

    test_x = ds.x[ds.split == TEST][:100]
    test_c = np.argmax(ds.c[ds.split == TEST], axis=1)[:100]
    means = posterior_means(enc, test_x)

    # true-label reconstruction must beat every-other-label decoding
    wins = 0
    for i in range(100):
        errs = []
        for digit in range(10):
            onehot = np.zeros((1, 10))
            onehot[0, digit] = 1.0
            recon = decode_mean(dec, means[i:i + 1], onehot)
            errs.append(float(np.mean((recon[0] - test_x[i]) ** 2)))
        others = [e for d, e in enumerate(errs) if d != test_c[i]]
        if errs[test_c[i]] < min(others):
            wins += 1
    assert wins >= 90, f"true-label reconstruction won only {wins}/100"

    # an independent raw-pixel probe recognizes the requested digit
    probe = LogisticRegression(max_iter=200)
    probe.fit(ds.x[ds.split == TRAIN], np.argmax(ds.c[ds.split == TRAIN], axis=1))
    hits = 0
    for digit in range(10):
        onehot = np.zeros((100, 10))
        onehot[:, digit] = 1.0
        tiles = decode_mean(dec, means, onehot)
        hits += int(np.sum(probe.predict(tiles) == digit))
    assert hits / 1000 > 0.70, f"probe hit rate {hits / 1000:.3f}"

    # depth-0 adversary on the codes falls below 0.5
    codes = posterior_means(enc, ds.x)
    c_all = np.argmax(ds.c, axis=1)
    _, acc = train_posthoc_adversary(codes, c_all, ds.split, 10, depth=0, seed=0)
    assert acc < 0.5, f"depth-0 adversary {acc:.3f}"


# ---------------------------------------------------------------------------
# criterion 9: byte-identical reruns


@pytest.mark.acceptance(9, "determinism of logs and reports")
def test_criterion_9_byte_identical_reruns(tmp_path):
    def run(out):
        args = ["train", "--dataset", "synthetic", "--objective", "vib",
                "--lambda", "1.0", "--epochs", "6", "--seed", "5",
                "--out", str(out)]
        assert cli.main(args) == 0
        args = ["eval", "--checkpoint", str(out / "checkpoint.ckpt"),
                "--out", str(out)]
        assert cli.main(args) == 0

    a, b = tmp_path / "a", tmp_path / "b"
    run(a)
    run(b)
    for name in ("loss_log.csv", "report.txt", "report.csv", "codes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
