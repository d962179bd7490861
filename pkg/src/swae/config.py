"""Training configuration and the flat ``key = value`` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

AUTOENCODER_MODES = ("dae", "vae", "wae-d", "wae-s")
DIALOG_MODES = ("ded", "ved", "wed-d", "wed-s")
MODES = AUTOENCODER_MODES + DIALOG_MODES

# dialog modes train the same objective as their autoencoder counterpart
OBJECTIVE = {"dae": "dae", "vae": "vae", "wae-d": "wae-d", "wae-s": "wae-s",
             "ded": "dae", "ved": "vae", "wed-d": "wae-d", "wed-s": "wae-s"}
STOCHASTIC_MODES = ("vae", "wae-s", "ved", "wed-s")


class ConfigError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class TrainConfig:
    seed: int
    mode: str = "wae-d"
    emb_dim: int = 32
    hidden_dim: int = 64
    latent_dim: int = 16
    lambda_wae: float = 10.0
    lambda_kl: float = 0.0
    lambda_vae: float = 1.0
    anneal: bool = True
    anneal_midpoint_epochs: float = 3.0
    anneal_width_epochs: float = 2.0
    # VAE-style modes only; None means on
    word_dropout: bool | None = None
    word_dropout_step: float = 0.05
    word_dropout_max: float = 0.5
    kernel_c: float | None = None
    mmd_paper_literal: bool = False
    lr: float = 0.01
    lr_decay: float | None = None
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 5.0
    init_scale: float = 0.08
    forget_bias: float = 1.0
    batch_size: int = 32
    epochs: int = 30
    max_len: int = 20
    vocab_size: int = 1000
    corpus: str = ""
    checkpoint: str = ""
    log: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("invalid-mode", f"mode {self.mode!r} is not one of {', '.join(MODES)}")
        for name in ("lambda_wae", "lambda_kl", "lambda_vae"):
            if getattr(self, name) < 0:
                raise ConfigError("negative-lambda", f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lr <= 0:
            raise ConfigError("invalid-lr", f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ConfigError("invalid-batch-size", f"batch_size must be >= 2, got {self.batch_size}")
        if self.kernel_c is not None and self.kernel_c <= 0:
            raise ConfigError("invalid-kernel-c", f"kernel_c must be positive, got {self.kernel_c}")

    @property
    def objective(self) -> str:
        return OBJECTIVE[self.mode]

    @property
    def is_dialog(self) -> bool:
        return self.mode in DIALOG_MODES

    @property
    def is_stochastic(self) -> bool:
        return self.mode in STOCHASTIC_MODES

    @property
    def uses_word_dropout(self) -> bool:
        # WAE and DAE objectives never use word dropout, whatever the toggle says
        return self.objective == "vae" and self.word_dropout is not False

    @property
    def uses_annealing(self) -> bool:
        return self.objective == "vae" and self.anneal

    @property
    def effective_kernel_c(self) -> float:
        return self.kernel_c if self.kernel_c is not None else 2.0 * self.latent_dim

    @property
    def cross_factor(self) -> float:
        return 1.0 if self.mmd_paper_literal else 2.0

    @property
    def effective_lr_decay(self) -> float:
        if self.lr_decay is not None:
            return self.lr_decay
        return 0.98 if self.is_dialog else 1.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError("unknown-key", f"unknown config keys: {', '.join(sorted(unknown))}")
        if "seed" not in d or d["seed"] is None:
            raise ConfigError("missing-seed", "seed is mandatory")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _field_type(name: str) -> str:
    return {f.name: str(f.type) for f in fields(TrainConfig)}[name]


def coerce(name: str, raw: str):
    """Parse a string value for config field ``name``."""
    kind = _field_type(name)
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("none", "auto", ""):
        return None
    try:
        if kind.startswith("bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError("bad-value", f"cannot parse {name} = {raw!r} as {kind}") from None
    return raw


def parse_config_text(text: str) -> dict:
    known = {f.name for f in fields(TrainConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("bad-config-line", f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigError("unknown-key", f"line {lineno}: unknown key {key!r}")
        out[key] = coerce(key, value)
    return out


def load_config(path, overrides: dict | None = None) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("missing-config", f"cannot read config {path}: {exc}") from None
    values = parse_config_text(text)
    values.update(overrides or {})
    return TrainConfig.from_dict(values)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
