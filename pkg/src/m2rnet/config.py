"""Run configuration: model shape, ablation flags, training settings, and
the line-based ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import LossConfig

SEED_ENV = "M2R_SEED"


@dataclass(frozen=True)
class EncoderConfig:
    """Stage widths of the two 5-level encoders and the input resolution.

    Level i runs at ``resolution / 2**(i-1)``, so the resolution must be
    divisible by 16.
    """

    channels: tuple = (16, 32, 64, 96, 128)
    resolution: int = 64
    depth_channels: int = 1
    decoder_channels: int = 16
    deep_supervision: bool = False

    def __post_init__(self):
        if len(self.channels) != 5:
            raise ConfigError(f"encoder needs 5 stage widths, got {len(self.channels)}")
        if any(int(c) < 1 for c in self.channels):
            raise ConfigError(f"stage widths must be positive, got {self.channels}")
        if self.resolution < 16 or self.resolution % 16:
            raise ConfigError(f"resolution must be a positive multiple of 16, got {self.resolution}")
        if self.depth_channels < 1 or self.decoder_channels < 1:
            raise ConfigError("depth and decoder channel counts must be positive")

    def level_size(self, level: int) -> int:
        return self.resolution >> (level - 1)


@dataclass(frozen=True)
class AblationScheme:
    """Which attention phases, interaction paths and ratio losses are on."""

    p1: bool = True
    p2: bool = True
    i1: bool = True
    i2: bool = True
    l1: bool = True
    l2: bool = True
    l3: bool = True
    l4: bool = True

    FLAGS = ("p1", "p2", "i1", "i2", "l1", "l2", "l3", "l4")

    @property
    def ndam(self) -> bool:
        return self.p1 or self.p2

    @property
    def aiam(self) -> bool:
        return self.i1 or self.i2

    @property
    def loss_terms(self) -> tuple:
        return (self.l1, self.l2, self.l3, self.l4)

    def flags(self) -> dict:
        return {name: getattr(self, name) for name in self.FLAGS}

    @classmethod
    def from_flags(cls, active) -> "AblationScheme":
        active = set(active)
        unknown = active - set(cls.FLAGS)
        if unknown:
            raise ConfigError(f"unknown ablation flags {sorted(unknown)}")
        return cls(**{name: name in active for name in cls.FLAGS})


# rows of the published ablation table: which flags each scheme enables
TABLE2_SCHEMES = {
    1: (),
    2: ("p1",),
    3: ("p2",),
    4: ("p1", "p2"),
    5: ("i1",),
    6: ("i2",),
    7: ("i1", "i2"),
    8: ("l1",),
    9: ("l2",),
    10: ("l3",),
    11: ("l4",),
    12: ("l1", "l2", "l3", "l4"),
    13: AblationScheme.FLAGS,
}


def scheme(number: int) -> AblationScheme:
    if number not in TABLE2_SCHEMES:
        raise ConfigError(f"no ablation scheme {number}; valid are 1..13")
    return AblationScheme.from_flags(TABLE2_SCHEMES[number])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    augment: bool = True
    loss: LossConfig = field(default_factory=LossConfig)
    scheme: AblationScheme = field(default_factory=AblationScheme)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    n_train: int = 200
    n_test: int = 50
    contrast: float = 0.8

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.learning_rate <= 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be positive; momentum and weight_decay nonnegative")

    def effective_loss(self) -> LossConfig:
        return self.loss.masked(self.scheme.loss_terms)

    def loss_label(self) -> str:
        cfg = self.effective_loss()
        if cfg.mu == 0 or not any(cfg.lambdas):
            return "bce"
        terms = "+".join(f"l{i + 1}" for i, lam in enumerate(cfg.lambdas) if lam)
        return f"bce+{cfg.mu:g}*({terms})"


# -- config files -------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def read_config_file(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read())


def _bool(v: str) -> bool:
    low = str(v).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _ints(v) -> tuple:
    return tuple(int(x) for x in str(v).replace(",", " ").split())


def _floats(v) -> tuple:
    return tuple(float(x) for x in str(v).replace(",", " ").split())


_TRAIN_KEYS = {
    "batch_size": int, "momentum": float, "weight_decay": float, "epochs": int,
    "learning_rate": float, "seed": int, "augment": _bool, "n_train": int, "n_test": int,
    "contrast": float,
}
_ENCODER_KEYS = {
    "channels": _ints, "resolution": int, "depth_channels": int, "decoder_channels": int,
    "deep_supervision": _bool,
}
_LOSS_KEYS = {"lambdas": _floats, "mu": float, "eps": float, "bce_reduction": str, "l4_complement": _bool}


def train_config_from_mapping(values: dict, env=None) -> TrainConfig:
    """Build a TrainConfig from string values; ``M2R_SEED`` in ``env`` wins."""
    env = os.environ if env is None else env
    values = dict(values)
    if env.get(SEED_ENV):
        values["seed"] = env[SEED_ENV]
    train, enc, loss = {}, {}, {}
    scheme_obj = AblationScheme()
    try:
        for key, raw in values.items():
            if key in _TRAIN_KEYS:
                train[key] = _TRAIN_KEYS[key](raw)
            elif key in _ENCODER_KEYS:
                enc[key] = _ENCODER_KEYS[key](raw)
            elif key in _LOSS_KEYS:
                loss[key] = _LOSS_KEYS[key](raw)
            elif key == "scheme":
                scheme_obj = scheme(int(raw))
            elif key in AblationScheme.FLAGS:
                scheme_obj = dataclasses.replace(scheme_obj, **{key: _bool(raw)})
            else:
                raise ConfigError(f"unknown config key {key!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return TrainConfig(**train, loss=LossConfig(**loss), scheme=scheme_obj, encoder=EncoderConfig(**enc))


def dump_config(cfg: TrainConfig) -> str:
    """Serialize a TrainConfig back into the config-file format."""
    lines = [f"{k} = {getattr(cfg, k)}" for k in _TRAIN_KEYS]
    e = cfg.encoder
    lines += [f"channels = {' '.join(map(str, e.channels))}", f"resolution = {e.resolution}",
              f"depth_channels = {e.depth_channels}", f"decoder_channels = {e.decoder_channels}",
              f"deep_supervision = {e.deep_supervision}"]
    lo = cfg.loss
    lines += [f"lambdas = {' '.join(map(repr, lo.lambdas))}", f"mu = {lo.mu!r}", f"eps = {lo.eps!r}",
              f"bce_reduction = {lo.bce_reduction}", f"l4_complement = {lo.l4_complement}"]
    lines += [f"{k} = {v}" for k, v in cfg.scheme.flags().items()]
    return "\n".join(lines) + "\n"
