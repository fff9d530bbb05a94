"""KL divergences for diagonal Gaussian codes.

Three quantities drive training:

* ``gaussian_kl`` — closed-form KL between two diagonal Gaussians.
* ``prior_kl`` — KL against the standard-normal prior.
* ``marginal_kl_penalty`` — the invariance penalty: the average, over all
  ordered pairs (i, j) in a batch, of KL between code i's posterior and
  code j's.  Jensen's inequality makes each row average an upper bound on
  the KL between that code and the batch-mixture marginal, which is the
  quantity the penalty stands in for.  ``marginal_kl_mc_oracle`` estimates
  that mixture KL directly by Monte Carlo and exists to let tests verify
  the bound; it plays no role in training.

The pairwise penalty is assembled from a handful of (b, b) matrix
products rather than a double loop, so a 128-sample batch costs a few
GEMMs.  All inputs are float64; variances must be strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianCode:
    """One diagonal-Gaussian posterior: mean and variance vectors."""

    mean: np.ndarray
    var: np.ndarray


@dataclass
class CodeBatch:
    """A batch of diagonal-Gaussian posteriors, stacked row-wise."""

    means: np.ndarray  # (b, d)
    vars: np.ndarray  # (b, d)

    @property
    def size(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def row(self, i: int) -> GaussianCode:
        return GaussianCode(self.means[i], self.vars[i])


def _check_pair(p: GaussianCode, q: GaussianCode):
    if p.mean.shape != q.mean.shape or p.var.shape != q.var.shape:
        raise ValueError(
            f"dimension mismatch: {p.mean.shape} vs {q.mean.shape}"
        )
    if np.any(p.var <= 0.0) or np.any(q.var <= 0.0):
        raise ValueError("variances must be strictly positive")


def _check_batch(batch: CodeBatch):
    if batch.means.shape != batch.vars.shape:
        raise ValueError(
            f"means {batch.means.shape} and vars {batch.vars.shape} differ"
        )
    if batch.means.ndim != 2 or batch.size < 1:
        raise ValueError("batch must be a non-empty (b, d) array pair")
    if np.any(batch.vars <= 0.0):
        raise ValueError("variances must be strictly positive")


def gaussian_kl(p: GaussianCode, q: GaussianCode) -> float:
    """KL(p || q) for diagonal Gaussians; exactly 0 when p == q."""
    _check_pair(p, q)
    ratio = q.var / p.var
    diff = p.mean - q.mean
    return 0.5 * float(
        np.sum(np.log(ratio) + (p.var + diff * diff) / q.var - 1.0)
    )


def prior_kl(code: GaussianCode) -> float:
    """KL(code || N(0, I))."""
    if np.any(code.var <= 0.0):
        raise ValueError("variances must be strictly positive")
    return -0.5 * float(
        np.sum(1.0 + np.log(code.var) - code.mean**2 - code.var)
    )


def prior_kl_batch(batch: CodeBatch) -> np.ndarray:
    """Per-sample KL against the standard normal, shape (b,)."""
    _check_batch(batch)
    m, v = batch.means, batch.vars
    return -0.5 * np.sum(1.0 + np.log(v) - m * m - v, axis=1)


def prior_kl_batch_grads(batch: CodeBatch):
    """Gradients of each per-sample prior KL w.r.t. its mean and variance."""
    d_means = batch.means.copy()
    d_vars = 0.5 * (1.0 - 1.0 / batch.vars)
    return d_means, d_vars


def pairwise_kl_matrix(batch: CodeBatch) -> np.ndarray:
    """All ordered pairwise KLs: entry (i, j) is KL(code_i || code_j).

    Expanding the diagonal-Gaussian closed form over the batch turns the
    double sum into three (b, b) matrix products plus rank-one terms.
    """
    _check_batch(batch)
    m, v = batch.means, batch.vars
    d = batch.dim
    prec = 1.0 / v
    log_det = np.log(v).sum(axis=1)  # (b,)
    mpm = ((m * m) * prec).sum(axis=1)  # (b,)
    cross = v @ prec.T + (m * m) @ prec.T - 2.0 * (m @ (m * prec).T)
    out = 0.5 * (log_det[None, :] - log_det[:, None] + cross + mpm[None, :] - d)
    # KL is nonnegative; the expansion can round self-pairs to -1e-14
    return np.maximum(out, 0.0)


def marginal_kl_penalty(batch: CodeBatch) -> float:
    """Mean of all b^2 ordered pairwise KLs (self-pairs contribute 0).

    The mean (rather than the bare double sum) keeps the penalty's scale
    independent of batch size, so its weight means the same thing at any
    batch size.
    """
    return float(pairwise_kl_matrix(batch).mean())


def marginal_kl_penalty_grads(batch: CodeBatch):
    """Penalty value plus its gradients w.r.t. means and variances.

    The pairwise sum collapses into per-column sums, so the gradient is
    O(b*d); validated against central differences in the test suite.
    """
    _check_batch(batch)
    m, v = batch.means, batch.vars
    b = batch.size
    prec = 1.0 / v
    s_prec = prec.sum(axis=0)  # (d,)
    s_mean = m.sum(axis=0)
    s_mp = (m * prec).sum(axis=0)
    s_var = v.sum(axis=0)
    s_m2 = (m * m).sum(axis=0)

    d_means = m * s_prec[None, :] - s_mp[None, :] + prec * (b * m - s_mean[None, :])
    spread = s_var + s_m2 - 2.0 * m * s_mean[None, :] + b * m * m
    d_vars = 0.5 * (s_prec[None, :] - prec * prec * spread)

    scale = 1.0 / (b * b)
    return marginal_kl_penalty(batch), d_means * scale, d_vars * scale


def _log_density_matrix(z: np.ndarray, batch: CodeBatch) -> np.ndarray:
    """log N(z_s; mean_j, var_j) for every sample s and batch row j."""
    diff = z[:, None, :] - batch.means[None, :, :]
    quad = (diff * diff / batch.vars[None, :, :]).sum(axis=2)
    log_det = np.log(batch.vars).sum(axis=1)
    return -0.5 * (quad + log_det[None, :] + batch.dim * _LOG_2PI)


def marginal_kl_mc_oracle(
    batch: CodeBatch,
    i: int,
    n_samples: int,
    seed: int,
    with_stderr: bool = False,
):
    """Monte-Carlo estimate of KL between code i and the batch mixture.

    Samples from code i and averages log q_i(z) - log((1/b) sum_j q_j(z)).
    Unbiased; test-only instrumentation for checking that the pairwise
    penalty's row averages really are upper bounds.  With ``with_stderr``
    the (estimate, standard error) pair is returned.
    """
    _check_batch(batch)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    mean_i = batch.means[i]
    std_i = np.sqrt(batch.vars[i])
    log_b = np.log(batch.size)

    terms = np.empty(n_samples)
    chunk = 65536
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        z = mean_i[None, :] + std_i[None, :] * rng.standard_normal((n, batch.dim))
        log_q = _log_density_matrix(z, batch)  # (n, b)
        peak = log_q.max(axis=1)
        log_mix = peak + np.log(np.exp(log_q - peak[:, None]).sum(axis=1)) - log_b
        terms[start : start + n] = log_q[:, i] - log_mix

    estimate = float(terms.mean())
    if with_stderr:
        if n_samples == 1:
            return estimate, float("inf")
        stderr = float(terms.std(ddof=1) / np.sqrt(n_samples))
        return estimate, stderr
    return estimate
