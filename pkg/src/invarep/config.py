"""Run configuration: defaults, config files, and flag overrides.

Config files are plain ``key = value`` lines ('#' starts a comment).
Keys match the CLI flag names one to one, so anything settable in a file
is settable on the command line and vice versa; the command line wins.
Unknown keys and values of the wrong type raise ConfigError naming the
offending field.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError

OBJECTIVES = ("vae", "vib", "adv-vib")
DATASETS = ("german", "adult", "mnist", "synthetic")

# resolved when the user leaves them unset: (latent_dim, hidden, epochs, patience)
_DATASET_DEFAULTS = {
    "mnist": (30, (512, 512), 30, 5),
    "german": (30, (64,), 200, 20),
    "adult": (30, (64,), 200, 20),
    "synthetic": (30, (64,), 200, 20),
}


@dataclass
class RunConfig:
    objective: str = "vae"
    dataset: str = "synthetic"
    lam: float = 1.0
    beta: float = 0.01
    latent_dim: int | None = None
    hidden: tuple | None = None
    epochs: int | None = None
    patience: int | None = None
    batch_size: int = 128
    learning_rate: float = 1e-3
    adversary_steps: int = 1
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "runs/run"
    synthetic_n: int = 4000
    limit_train: int | None = None
    limit_test: int | None = None

    def resolved(self) -> "RunConfig":
        """Copy with dataset-dependent defaults filled in and all fields
        validated."""
        cfg = RunConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if cfg.objective not in OBJECTIVES:
            raise ConfigError(
                f"objective: {cfg.objective!r} not one of {'/'.join(OBJECTIVES)}"
            )
        if cfg.dataset not in DATASETS:
            raise ConfigError(
                f"dataset: {cfg.dataset!r} not one of {'/'.join(DATASETS)}"
            )
        d_lat, d_hidden, d_epochs, d_patience = _DATASET_DEFAULTS[cfg.dataset]
        if cfg.latent_dim is None:
            cfg.latent_dim = d_lat
        if cfg.hidden is None:
            cfg.hidden = d_hidden
        if cfg.epochs is None:
            cfg.epochs = d_epochs
        if cfg.patience is None:
            cfg.patience = d_patience

        _positive = (("latent_dim", cfg.latent_dim), ("epochs", cfg.epochs),
                     ("patience", cfg.patience), ("batch-size", cfg.batch_size),
                     ("adversary-steps", cfg.adversary_steps),
                     ("synthetic-n", cfg.synthetic_n))
        for name, value in _positive:
            if value < 1:
                raise ConfigError(f"{name}: must be >= 1, got {value}")
        if cfg.lam < 0.0:
            raise ConfigError(f"lambda: must be >= 0, got {cfg.lam}")
        if cfg.beta < 0.0:
            raise ConfigError(f"beta: must be >= 0, got {cfg.beta}")
        if cfg.learning_rate <= 0.0:
            raise ConfigError(f"learning-rate: must be > 0, got {cfg.learning_rate}")
        if not cfg.hidden or any(h < 1 for h in cfg.hidden):
            raise ConfigError(f"hidden: sizes must be >= 1, got {cfg.hidden}")
        if cfg.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {cfg.seed}")
        for name, value in (("limit-train", cfg.limit_train),
                            ("limit-test", cfg.limit_test)):
            if value is not None and value < 1:
                raise ConfigError(f"{name}: must be >= 1, got {value}")
        return cfg

    def echo_lines(self) -> list[str]:
        """One ``key = value`` line per field, config-file syntax."""
        out = []
        for key, attr in _KEY_TO_FIELD.items():
            value = getattr(self, attr)
            if value is None:
                continue
            if attr == "hidden":
                value = ",".join(str(h) for h in value)
            out.append(f"{key} = {value}")
        return out


# config/flag key -> dataclass field
_KEY_TO_FIELD = {
    "objective": "objective",
    "dataset": "dataset",
    "lambda": "lam",
    "beta": "beta",
    "latent-dim": "latent_dim",
    "hidden": "hidden",
    "epochs": "epochs",
    "patience": "patience",
    "batch-size": "batch_size",
    "learning-rate": "learning_rate",
    "adversary-steps": "adversary_steps",
    "seed": "seed",
    "data-dir": "data_dir",
    "out": "out_dir",
    "synthetic-n": "synthetic_n",
    "limit-train": "limit_train",
    "limit-test": "limit_test",
}

_INT_FIELDS = {"latent_dim", "epochs", "patience", "batch_size",
               "adversary_steps", "seed", "synthetic_n",
               "limit_train", "limit_test"}
_FLOAT_FIELDS = {"lam", "beta", "learning_rate"}


def _convert(key, attr, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if attr == "hidden":
            if isinstance(raw, (tuple, list)):
                return tuple(int(h) for h in raw)
            return tuple(int(t) for t in str(raw).split(",") if t.strip())
        if attr in _INT_FIELDS:
            return int(raw)
        if attr in _FLOAT_FIELDS:
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}")
    return raw


def parse_config_file(path) -> dict:
    """Returns {flag-style key: raw string}.  Keys may use '-' or '_'."""
    values = {}
    try:
        f = open(path)
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}")
    with f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("_", "-")
            if key not in _KEY_TO_FIELD:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def make_config(file_values=None, overrides=None) -> RunConfig:
    """Layer file values then overrides on top of the defaults; returns
    the resolved, validated config."""
    cfg = RunConfig()
    for source in (file_values or {}), (overrides or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            key = key.replace("_", "-")
            attr = _KEY_TO_FIELD.get(key)
            if attr is None:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, attr, _convert(key, attr, raw))
    return cfg.resolved()
