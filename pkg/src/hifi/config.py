"""Flat ``key = value`` run configuration with typed defaults.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys, repeated
keys and unparsable values are config errors. ``SKEL_SEED`` in the
environment overrides ``seed``.
"""

import dataclasses
import os
from dataclasses import dataclass, fields

from .arch import MINI_GROUPS, VGG16_GROUPS, ArchConfig, BackboneSpec, HierarchySpec, preset
from .autodiff import SgdState
from .errors import ArgumentError, ConfigError
from .gt import CONVENTIONS
from .loss import BETA_CONVENTIONS

SEED_ENV = "SKEL_SEED"
BACKBONES = {"mini": MINI_GROUPS, "vgg16": VGG16_GROUPS}
AUTO = None


@dataclass
class Config:
    # architecture
    arch: str = "hifi1"
    backbone: str = "mini"
    groups: int | None = AUTO  # B; auto = all groups of the backbone
    fan_in: int | None = AUTO  # K; auto = from the preset
    depth: int | None = AUTO  # L; auto = from the preset
    level0_sideoutputs: bool | None = AUTO
    channels: int = 16
    in_channels: int = 1
    bias: bool = True
    fuse_init: float = 1.0
    # supervision
    quant_convention: str = "inclusive"
    beta_convention: str = "hed"
    # optimizer
    lr: float = 1e-5
    momentum: float = 0.9
    lr_decay_every: int = 10000
    lr_decay_factor: float = 0.1
    iters: int = 2000
    augment: bool = True
    # data
    data: str = ""
    split: str = "train"
    # eval
    tol: float = 0.0  # pixels; 0 = tol_frac x image diagonal
    tol_frac: float = 0.0075
    thresholds: int = 99
    seed: int = 0

    def validate(self):
        try:
            self.arch_config()
            self.sgd_state()
        except ArgumentError as e:
            raise ConfigError(str(e)) from None
        if self.quant_convention not in CONVENTIONS:
            raise ConfigError(f"quant_convention must be one of {CONVENTIONS}, got {self.quant_convention!r}")
        if self.beta_convention not in BETA_CONVENTIONS:
            raise ConfigError(f"beta_convention must be one of {BETA_CONVENTIONS}, got {self.beta_convention!r}")
        if self.split not in ("train", "val", "all"):
            raise ConfigError(f"split must be train, val or all, got {self.split!r}")
        if self.iters < 0 or self.thresholds < 1 or self.tol < 0 or self.tol_frac <= 0:
            raise ConfigError("iters >= 0, thresholds >= 1, tol >= 0 and tol_frac > 0 are required")
        return self

    def backbone_spec(self):
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {sorted(BACKBONES)}, got {self.backbone!r}")
        groups = BACKBONES[self.backbone]
        b = self.groups if self.groups is not AUTO else len(groups)
        if b < 2:
            raise ConfigError(f"groups must be >= 2, got {b}")
        # deeper than the template: repeat its last group
        groups = tuple(groups[:b]) + (groups[-1],) * max(0, b - len(groups))
        return BackboneSpec(groups=groups, in_channels=self.in_channels)

    def arch_config(self):
        bb = self.backbone_spec()
        h = preset(self.arch, len(bb.groups))
        changes = {k: v for k, v in (("fan_in", self.fan_in), ("depth", self.depth),
                                     ("level0_sideoutputs", self.level0_sideoutputs)) if v is not AUTO}
        if changes:
            h = HierarchySpec(**{**dataclasses.asdict(h), **changes})
        h.check(len(bb.groups))
        return ArchConfig(backbone=bb, hierarchy=h, branch_channels=self.channels,
                          bias=self.bias, fuse_init=self.fuse_init)

    def sgd_state(self):
        return SgdState(learning_rate=self.lr, momentum=self.momentum,
                        lr_decay_every=self.lr_decay_every, lr_decay_factor=self.lr_decay_factor)

    def to_text(self):
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))


def _format(v):
    if v is AUTO:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name, kind, text):
    if text == "auto" and "None" in kind:
        return AUTO
    try:
        if kind.startswith("bool"):
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.split(' ')[0]}") from None
    return text


def _type_name(t):
    args = getattr(t, "__args__", None)
    if args:  # X | None
        return f"{args[0].__name__} | None"
    return t.__name__


_TYPES = {f.name: _type_name(f.type) for f in fields(Config)}


def parse_config(text, base=None):
    """Apply ``key = value`` lines on top of ``base`` (default: all defaults)."""
    values = dataclasses.asdict(base or Config())
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        values[key] = _parse_value(key, _TYPES[key], val)
    return Config(**values).validate()


def apply_env(cfg, environ=None):
    env = os.environ if environ is None else environ
    raw = env.get(SEED_ENV, "")
    if raw == "":
        return cfg
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return dataclasses.replace(cfg, seed=seed)


def load_config(path=None, overrides=None, environ=None):
    """Defaults < file < ``overrides`` dict < SKEL_SEED."""
    cfg = Config()
    if path:
        try:
            with open(path) as f:
                cfg = parse_config(f.read(), cfg)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    if overrides:
        cfg = parse_config("".join(f"{k} = {_format(v)}\n" for k, v in overrides.items()), cfg)
    return apply_env(cfg, environ).validate()
