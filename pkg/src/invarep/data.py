"""Dataset ingestion, preprocessing, splitting, and batching.

Loaders produce an immutable :class:`Dataset`: features ``x`` (one-hot
encoded categoricals plus standardized numerics), a one-hot covariate
``c``, optional integer labels ``y``, a per-column kind tag, and a
train/valid/test split assignment.  Standardization statistics always
come from the train split only.  Every loader also writes a plain-text
data card enumerating column transforms so the preprocessing can be
audited.

Nothing here downloads anything; callers supply file paths.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

TRAIN, VALID, TEST = "train", "valid", "test"

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801

GERMAN_AGE_THRESHOLD = 25  # years; c = 1 when age >= threshold


@dataclass
class Batch:
    """Aligned arrays: features, one-hot covariate, optional labels."""

    x: np.ndarray
    c: np.ndarray
    y: np.ndarray | None = None


@dataclass
class Dataset:
    x: np.ndarray  # (n, d_x)
    c: np.ndarray  # (n, d_c) one-hot
    y: np.ndarray | None  # (n,) integer labels
    feature_kinds: list[str]  # 'binary' or 'continuous' per column
    split: np.ndarray  # (n,) tags from {train, valid, test}
    card: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def d_c(self) -> int:
        return self.c.shape[1]

    @property
    def n_classes(self) -> int:
        if self.y is None:
            raise ValueError("dataset has no labels")
        return int(self.y.max()) + 1

    def subset(self, tag: str) -> Batch:
        mask = self.split == tag
        y = None if self.y is None else self.y[mask]
        return Batch(self.x[mask], self.c[mask], y)


class BatchIterator:
    """Seed-deterministic shuffled minibatches over one split.

    Each epoch draws a fresh permutation from the iterator's own
    generator, so a fixed seed fixes the batch sequence across the whole
    run.  The final short batch is always included.
    """

    def __init__(self, batch: Batch, batch_size: int, seed: int):
        self.data = batch
        self.batch_size = int(batch_size)
        self.rng = np.random.default_rng(seed)

    def epoch(self):
        n = self.data.x.shape[0]
        perm = self.rng.permutation(n)
        for start in range(0, n, self.batch_size):
            idx = perm[start : start + self.batch_size]
            y = None if self.data.y is None else self.data.y[idx]
            yield Batch(self.data.x[idx], self.data.c[idx], y)


# ---------------------------------------------------------------------------
# split / standardize helpers


def stratified_split(strata, test_fraction, valid_fraction, seed):
    """Assign train/valid/test tags, stratum by stratum.

    ``test_fraction`` is taken from each stratum first; ``valid_fraction``
    is then taken from the remaining (train-side) rows.  Same seed, same
    strata -> identical tags.
    """
    strata = np.asarray(strata)
    n = strata.shape[0]
    rng = np.random.default_rng(seed)
    tags = np.full(n, TRAIN, dtype="<U5")
    for value in np.unique(strata):
        idx = np.flatnonzero(strata == value)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(idx.size * test_fraction))
        n_valid = int(round((idx.size - n_test) * valid_fraction))
        tags[idx[:n_test]] = TEST
        tags[idx[n_test : n_test + n_valid]] = VALID
    return tags


def standardize_columns(x, continuous_mask, train_mask):
    """Shift/scale continuous columns to train-split mean 0, variance 1.

    Returns (x, means, scales); constant columns keep scale 1.
    """
    x = x.copy()
    cols = np.flatnonzero(continuous_mask)
    means = np.zeros(cols.size)
    scales = np.ones(cols.size)
    for k, col in enumerate(cols):
        mu = x[train_mask, col].mean()
        sd = x[train_mask, col].std()
        if sd == 0.0:
            sd = 1.0
        x[:, col] = (x[:, col] - mu) / sd
        means[k], scales[k] = mu, sd
    return x, means, scales


def _one_hot(values, vocab):
    """Encode strings against a fixed vocabulary; unseen values map to an
    all-zero row."""
    index = {v: i for i, v in enumerate(vocab)}
    out = np.zeros((len(values), len(vocab)))
    for r, v in enumerate(values):
        i = index.get(v)
        if i is not None:
            out[r, i] = 1.0
    return out


def _labels_one_hot(labels, k):
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# German credit data


_GERMAN_CATEGORICAL = (0, 2, 3, 5, 6, 8, 9, 11, 13, 14, 16, 18, 19)
_GERMAN_NUMERIC = (1, 4, 7, 10, 15, 17)
_GERMAN_AGE = 12
_GERMAN_FIELD_NAMES = (
    "checking_status", "duration_months", "credit_history", "purpose",
    "credit_amount", "savings", "employment_since", "installment_rate",
    "personal_status", "other_debtors", "residence_since", "property",
    "age_years", "other_installments", "housing", "existing_credits",
    "job", "people_liable", "telephone", "foreign_worker",
)


def load_german(path, seed=0, test_fraction=0.2, valid_fraction=0.1,
                age_threshold=GERMAN_AGE_THRESHOLD) -> Dataset:
    """Personal-credit records, whitespace-separated, 20 attributes + label.

    The covariate is age binarized at ``age_threshold``; the label is 1
    for a good credit rating.  Age itself is excluded from the features
    (it enters only through c); categoricals are one-hot over the codes
    observed in the file, numerics standardized on the train split.
    """
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 21:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 21 fields, got {len(fields)}"
                )
            rows.append(fields)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    n = len(rows)
    age = np.array([float(r[_GERMAN_AGE]) for r in rows])
    c_idx = (age >= age_threshold).astype(np.int64)
    try:
        y = np.array([1 if r[20] == "1" else 0 for r in rows], dtype=np.int64)
    except IndexError:  # unreachable after the field-count check
        raise DataFormatError(f"{path}: short row")

    blocks, kinds, card_cols = [], [], []
    for col in range(20):
        if col == _GERMAN_AGE:
            continue
        name = _GERMAN_FIELD_NAMES[col]
        values = [r[col] for r in rows]
        if col in _GERMAN_CATEGORICAL:
            vocab = sorted(set(values))
            blocks.append(_one_hot(values, vocab))
            kinds += ["binary"] * len(vocab)
            card_cols += [f"onehot({name} == {v})" for v in vocab]
        else:
            try:
                numeric = np.array([float(v) for v in values])
            except ValueError as e:
                raise DataFormatError(f"{path}: non-numeric {name}: {e}")
            blocks.append(numeric[:, None])
            kinds.append("continuous")
            card_cols.append(f"standardize({name})")
    x = np.concatenate(blocks, axis=1)

    split = stratified_split(c_idx * 2 + y, test_fraction, valid_fraction, seed)
    x, _, _ = standardize_columns(
        x, np.array([k == "continuous" for k in kinds]), split == TRAIN
    )

    card = _card(
        "german", n, kinds, split, card_cols,
        covariate=f"age_years >= {age_threshold} (0: younger, 1: at or above)",
        label="credit rating == good",
        notes=[f"age_years excluded from features; split seed {seed}"],
    )
    return Dataset(x, _labels_one_hot(c_idx, 2), y, kinds, split, card,
                   meta={"name": "german", "age_threshold": age_threshold})


# ---------------------------------------------------------------------------
# Adult census data


_ADULT_COLUMNS = (
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
)
_ADULT_NUMERIC = (0, 2, 4, 10, 11, 12)
_ADULT_CATEGORICAL = (1, 3, 5, 6, 7, 8, 13)
_ADULT_SEX = 9
_ADULT_INCOME = 14


def _read_adult_file(path):
    """Comma-separated rows; drops rows with missing ('?') fields and
    skips the comment header some copies of the test file carry."""
    rows, dropped = [], 0
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            fields = [t.strip() for t in line.split(",")]
            if len(fields) != 15:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 15 fields, got {len(fields)}"
                )
            if "?" in fields:
                dropped += 1
                continue
            fields[_ADULT_INCOME] = fields[_ADULT_INCOME].rstrip(".")
            rows.append(fields)
    return rows, dropped


def load_adult(train_path, test_path, seed=0, valid_fraction=0.1) -> Dataset:
    """Census income records: the supplied test file is the test split,
    validation is carved from the train file.

    Covariate: sex (0: Female, 1: Male).  Label: income over 50K.  Sex is
    excluded from the features.  Categorical vocabularies come from the
    train file; a test-only category encodes as all zeros.
    """
    train_rows, train_dropped = _read_adult_file(train_path)
    test_rows, test_dropped = _read_adult_file(test_path)
    rows = train_rows + test_rows
    n_train_file = len(train_rows)
    n = len(rows)

    sex = [r[_ADULT_SEX] for r in rows]
    bad_sex = sorted(set(sex) - {"Female", "Male"})
    if bad_sex:
        raise DataFormatError(f"unexpected sex value(s): {bad_sex}")
    c_idx = np.array([1 if s == "Male" else 0 for s in sex], dtype=np.int64)
    y = np.array([1 if r[_ADULT_INCOME] == ">50K" else 0 for r in rows],
                 dtype=np.int64)

    blocks, kinds, card_cols = [], [], []
    for col in range(15):
        if col in (_ADULT_SEX, _ADULT_INCOME):
            continue
        name = _ADULT_COLUMNS[col]
        values = [r[col] for r in rows]
        if col in _ADULT_CATEGORICAL:
            vocab = sorted({v for v in values[:n_train_file]})
            blocks.append(_one_hot(values, vocab))
            kinds += ["binary"] * len(vocab)
            card_cols += [f"onehot({name} == {v})" for v in vocab]
        else:
            try:
                numeric = np.array([float(v) for v in values])
            except ValueError as e:
                raise DataFormatError(f"non-numeric {name}: {e}")
            blocks.append(numeric[:, None])
            kinds.append("continuous")
            card_cols.append(f"standardize({name})")
    x = np.concatenate(blocks, axis=1)

    split = np.full(n, TEST, dtype="<U5")
    train_tags = stratified_split(
        c_idx[:n_train_file] * 2 + y[:n_train_file], 0.0, valid_fraction, seed
    )
    split[:n_train_file] = train_tags
    x, _, _ = standardize_columns(
        x, np.array([k == "continuous" for k in kinds]), split == TRAIN
    )

    card = _card(
        "adult", n, kinds, split, card_cols,
        covariate="sex (0: Female, 1: Male)",
        label="income > 50K",
        notes=[
            f"dropped rows with missing fields: {train_dropped} train, {test_dropped} test",
            f"sex excluded from features; split seed {seed}",
        ],
    )
    return Dataset(x, _labels_one_hot(c_idx, 2), y, kinds, split, card,
                   meta={"name": "adult"})


# ---------------------------------------------------------------------------
# MNIST (IDX binary format)


def _read_idx(path, expect_magic, n_dims):
    with open(path, "rb") as f:
        header = f.read(4 * (1 + n_dims))
        if len(header) != 4 * (1 + n_dims):
            raise DataFormatError(f"{path}: truncated IDX header")
        magic, *dims = struct.unpack(f">{1 + n_dims}i", header)
        if magic != expect_magic:
            raise DataFormatError(
                f"{path}: bad magic 0x{magic:08x}, expected 0x{expect_magic:08x}"
            )
        payload = f.read()
    count = int(np.prod(dims))
    if len(payload) != count:
        raise DataFormatError(
            f"{path}: payload has {len(payload)} bytes, dims {dims} need {count}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_mnist(train_images, train_labels, test_images, test_labels,
               seed=0, valid_fraction=0.1, limit_train=None, limit_test=None) -> Dataset:
    """Handwritten digits from the big-endian IDX files.

    Pixels are scaled to [0, 1] and treated as Bernoulli targets; the
    digit is both the covariate (one-hot) and the label.  ``limit_*``
    keep only the first rows of each file, for subset runs.
    """
    xs_train = _read_idx(train_images, MNIST_IMAGE_MAGIC, 3)
    ys_train = _read_idx(train_labels, MNIST_LABEL_MAGIC, 1)
    xs_test = _read_idx(test_images, MNIST_IMAGE_MAGIC, 3)
    ys_test = _read_idx(test_labels, MNIST_LABEL_MAGIC, 1)
    if xs_train.shape[0] != ys_train.shape[0] or xs_test.shape[0] != ys_test.shape[0]:
        raise DataFormatError("image/label counts differ")
    if limit_train is not None:
        xs_train, ys_train = xs_train[:limit_train], ys_train[:limit_train]
    if limit_test is not None:
        xs_test, ys_test = xs_test[:limit_test], ys_test[:limit_test]

    n_train = xs_train.shape[0]
    x = np.concatenate([
        xs_train.reshape(n_train, -1), xs_test.reshape(xs_test.shape[0], -1)
    ]).astype(np.float64) / 255.0
    digits = np.concatenate([ys_train, ys_test]).astype(np.int64)

    split = np.full(x.shape[0], TEST, dtype="<U5")
    split[:n_train] = stratified_split(digits[:n_train], 0.0, valid_fraction, seed)

    kinds = ["binary"] * x.shape[1]
    side = xs_train.shape[1]
    card = _card(
        "mnist", x.shape[0], kinds, split,
        [f"pixel[k] / 255 for k in 0..{x.shape[1] - 1}"],
        covariate="digit (one-hot, 10 classes)",
        label="digit",
        notes=[f"{side}x{xs_train.shape[2]} images; split seed {seed}"],
    )
    return Dataset(x, _labels_one_hot(digits, 10), digits, kinds, split, card,
                   meta={"name": "mnist", "image_shape": (side, xs_train.shape[2])})


# ---------------------------------------------------------------------------
# synthetic sanity dataset


def make_synthetic(n, seed, test_fraction=0.25, valid_fraction=0.1,
                   covariate_shift=2.0, label_shift=3.0,
                   covariate_noise=0.1) -> Dataset:
    """Gaussian blobs where the covariate and the label live in disjoint
    feature subspaces.

    Columns 0-1 are shifted +-covariate_shift by the covariate and carry
    only a small covariate_noise jitter, so they are a nearly pure image
    of c: the conditional decoder's own c input can account for them
    completely, and any copy the encoder keeps is redundant.  Columns
    2-5 are shifted +-label_shift by the label on top of unit noise, and
    columns 6-7 are pure noise.  The ground-truth invariant subspace
    (everything c-free) is columns 2-7, recorded in ``meta``.  Both
    factors are independent coins, so a fully invariant code loses no
    label accuracy.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    c_idx = rng.integers(0, 2, size=n)
    y = rng.integers(0, 2, size=n)
    x = rng.standard_normal((n, 8))
    x[:, 0:2] = covariate_shift * (2.0 * c_idx[:, None] - 1.0) \
        + covariate_noise * x[:, 0:2]
    x[:, 2:6] += label_shift * (2.0 * y[:, None] - 1.0)

    kinds = ["continuous"] * 8
    split = stratified_split(c_idx * 2 + y, test_fraction, valid_fraction, seed)
    x, _, _ = standardize_columns(x, np.ones(8, dtype=bool), split == TRAIN)

    card = _card(
        "synthetic", n, kinds, split,
        [f"standardize(blob[{i}])" for i in range(8)],
        covariate="latent coin shifting columns 0-1",
        label="independent coin shifting columns 2-5",
        notes=["covariate and label subspaces are disjoint; columns 6-7 "
               f"carry nothing; seed {seed}"],
    )
    return Dataset(x, _labels_one_hot(c_idx, 2), y, kinds, split, card,
                   meta={"name": "synthetic",
                         "covariate_columns": [0, 1],
                         "label_columns": [2, 3, 4, 5],
                         "noise_columns": [6, 7],
                         "invariant_columns": [2, 3, 4, 5, 6, 7]})


# ---------------------------------------------------------------------------
# data card


def _card(name, n, kinds, split, card_cols, covariate, label, notes):
    lines = [
        f"dataset: {name}",
        f"rows: {n}",
        f"splits: train={int((split == TRAIN).sum())} "
        f"valid={int((split == VALID).sum())} test={int((split == TEST).sum())}",
        f"covariate: {covariate}",
        f"label: {label}",
    ]
    lines += [f"note: {t}" for t in notes]
    lines.append("columns:")
    lines += [f"  x[{i}] ({kinds[i]}) = {t}" for i, t in enumerate(card_cols)]
    return "\n".join(lines) + "\n"
