"""Experiment configuration files (INI with sections) and their validation.

Example::

    [experiment]
    name = reference
    seed = 7
    rounds = 30
    clients = 4

    [policy]
    kind = joint
    alpha = 0.004

Every key has a default (the section dataclasses below).  Errors carry the line number of
the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .allocation import (
    AllocationPolicy,
    DownlinkOnlyAdaptive,
    Fixed,
    JointAdaptive,
    Lossless,
    Schedule,
    UplinkOnlyAdaptive,
)
from .errors import ConfigError

POLICY_KINDS = ("fixed", "joint", "uplink", "downlink", "schedule", "lossless")
ALPHA_MODES = ("fixed", "oracle")


@dataclass(frozen=True)
class ExperimentSection:
    name: str = "experiment"
    seed: int = 0
    rounds: int = 30
    clients: int = 10
    local_steps: int = 5
    learning_rate: float = 0.01
    batch_size: int = 64
    momentum: float = 0.5
    output_dir: str = ""


@dataclass(frozen=True)
class ModelSection:
    kind: str = "logistic"
    hidden: int = 32


@dataclass(frozen=True)
class DataSection:
    source: str = "synthetic"
    seed: int = 0
    train_samples: int = 2000
    test_samples: int = 500
    features: int = 10
    classes: int = 2
    spread: float = 1.0
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""


@dataclass(frozen=True)
class PolicySection:
    kind: str = "joint"
    bits: int = 8
    alpha: float = 0.004
    beta: float = 0.004
    uplink_bits: tuple[int, ...] = ()
    downlink_bits: tuple[int, ...] = ()
    alpha_mode: str = "fixed"


@dataclass(frozen=True)
class EnergySection:
    e1: float = 1.0
    e2: float = 1.0
    budget: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    model: ModelSection = field(default_factory=ModelSection)
    data: DataSection = field(default_factory=DataSection)
    policy: PolicySection = field(default_factory=PolicySection)
    energy: EnergySection = field(default_factory=EnergySection)

    def with_overrides(self, *, seed: int | None = None, output_dir: str | None = None,
                       policy: PolicySection | None = None) -> "ExperimentConfig":
        exp = self.experiment
        if seed is not None:
            exp = dataclasses.replace(exp, seed=seed)
        if output_dir is not None:
            exp = dataclasses.replace(exp, output_dir=output_dir)
        return dataclasses.replace(self, experiment=exp, policy=policy or self.policy)

    def build_policy(self, alpha: float | None = None) -> AllocationPolicy:
        p = self.policy
        a = p.alpha if alpha is None else alpha
        if p.kind == "fixed":
            return Fixed(p.bits)
        if p.kind == "joint":
            return JointAdaptive(a)
        if p.kind == "uplink":
            return UplinkOnlyAdaptive(a)
        if p.kind == "downlink":
            return DownlinkOnlyAdaptive(p.beta if alpha is None else alpha)
        if p.kind == "schedule":
            return Schedule(p.uplink_bits, p.downlink_bits)
        return Lossless()


SECTIONS = {
    "experiment": ExperimentSection,
    "model": ModelSection,
    "data": DataSection,
    "policy": PolicySection,
    "energy": EnergySection,
}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line on which the key is defined."""
    out = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip().lower()
            out[(section, "")] = lineno
            continue
        if section and stripped and stripped[0] not in "#;":
            key = re.split(r"[=:]", stripped, maxsplit=1)[0].strip().lower()
            out.setdefault((section, key), lineno)
    return out


def _convert(raw: str, ftype, where: str):
    raw = raw.strip()
    try:
        if ftype in (int, "int"):
            return int(raw, 0)
        if ftype in (float, "float"):
            return float(raw)
        if ftype in (str, "str"):
            return raw
        if "tuple" in str(ftype):
            return tuple(int(tok) for tok in re.split(r"[,\s]+", raw) if tok)
    except ValueError:
        raise ValueError(f"{where}: cannot parse {raw!r} as {ftype}") from None
    raise ValueError(f"{where}: unsupported field type {ftype}")


def _check(cond: bool, message: str, lines, section: str, key: str, path):
    if not cond:
        raise ConfigError(message, line=lines.get((section, key)), path=path)


def parse_config_text(text: str, path: str | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", line=exc.lineno, path=path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"syntax error: {exc.errors[0][1].strip() if exc.errors else exc}",
                          line=lineno, path=path) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], line=exc.lineno, path=path) from None
    lines = _key_lines(text)

    built = {}
    for section in parser.sections():
        if section.lower() not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", line=lines.get((section.lower(), "")), path=path)
    for sname, cls in SECTIONS.items():
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        if parser.has_section(sname):
            for key, raw in parser.items(sname):
                if key not in types:
                    raise ConfigError(f"unknown key {key!r} in [{sname}]",
                                      line=lines.get((sname, key)), path=path)
                try:
                    kwargs[key] = _convert(raw, types[key], f"[{sname}] {key}")
                except ValueError as exc:
                    raise ConfigError(str(exc), line=lines.get((sname, key)), path=path) from None
        built[sname] = cls(**kwargs)
    cfg = ExperimentConfig(**built)
    _validate(cfg, lines, path, base_dir)
    if cfg.data.source == "idx" and base_dir is not None:
        resolved = {
            key: str(resolve_data_path(base_dir, getattr(cfg.data, key)).resolve())
            for key in ("train_images", "train_labels", "test_images", "test_labels")
        }
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, **resolved))
    return cfg


def _validate(cfg: ExperimentConfig, lines, path, base_dir: Path | None):
    e, m, d, p, en = cfg.experiment, cfg.model, cfg.data, cfg.policy, cfg.energy
    c = lambda cond, msg, sec, key: _check(cond, msg, lines, sec, key, path)  # noqa: E731
    c(e.seed >= 0, "seed must be a non-negative 64-bit integer", "experiment", "seed")
    c(e.rounds >= 0, "rounds must be >= 0", "experiment", "rounds")
    c(e.clients >= 1, "clients must be >= 1", "experiment", "clients")
    c(e.local_steps >= 1, "local_steps must be >= 1", "experiment", "local_steps")
    c(e.learning_rate > 0, "learning_rate must be positive", "experiment", "learning_rate")
    c(e.batch_size >= 1, "batch_size must be >= 1", "experiment", "batch_size")
    c(0 <= e.momentum < 1, "momentum must be in [0, 1)", "experiment", "momentum")
    c(m.kind in ("logistic", "mlp"), f"model kind must be logistic or mlp, got {m.kind!r}", "model", "kind")
    c(m.kind != "mlp" or m.hidden >= 1, "hidden must be >= 1 for mlp", "model", "hidden")
    c(d.source in ("synthetic", "idx"), f"data source must be synthetic or idx, got {d.source!r}", "data", "source")
    c(d.classes >= 2, "classes must be >= 2", "data", "classes")
    if d.source == "synthetic":
        c(d.features >= 1, "features must be >= 1", "data", "features")
        c(d.train_samples >= max(d.classes, e.clients),
          "train_samples must cover every class and client", "data", "train_samples")
        c(d.test_samples >= d.classes, "test_samples must be >= classes", "data", "test_samples")
        c(d.spread >= 0, "spread must be non-negative", "data", "spread")
    else:
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            val = getattr(d, key)
            c(bool(val), f"{key} is required for idx data", "data", key)
            fp = resolve_data_path(base_dir, val)
            c(fp.is_file(), f"dataset file not found: {fp}", "data", key)
    c(p.kind in POLICY_KINDS, f"policy kind must be one of {', '.join(POLICY_KINDS)}", "policy", "kind")
    c(p.alpha_mode in ALPHA_MODES, "alpha_mode must be fixed or oracle", "policy", "alpha_mode")
    if p.kind == "fixed":
        c(1 <= p.bits <= 32, "bits must be in [1, 32]", "policy", "bits")
    if p.kind in ("joint", "uplink"):
        c(p.alpha > 0, "alpha must be positive", "policy", "alpha")
    if p.kind == "downlink":
        c(p.beta > 0, "beta must be positive", "policy", "beta")
    if p.kind == "schedule":
        c(bool(p.uplink_bits) and all(1 <= b <= 32 for b in p.uplink_bits),
          "uplink_bits must list widths in [1, 32]", "policy", "uplink_bits")
        c(bool(p.downlink_bits) and all(1 <= b <= 32 for b in p.downlink_bits),
          "downlink_bits must list widths in [1, 32]", "policy", "downlink_bits")
    if p.alpha_mode == "oracle":
        c(p.kind in ("joint", "uplink", "downlink"),
          "oracle alpha_mode needs an adaptive policy kind", "policy", "alpha_mode")
        # point at the budget key if present, else at the line that asked for it
        where = ("energy", "budget") if ("energy", "budget") in lines else ("policy", "alpha_mode")
        c(en.budget > 0, "oracle alpha_mode needs a positive [energy] budget", *where)
    c(en.e1 > 0, "e1 must be positive", "energy", "e1")
    c(en.e2 > 0, "e2 must be positive", "energy", "e2")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}: {path}", path=str(path)) from None
    return parse_config_text(text, str(path), base_dir=path.parent)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text with every key spelled out; parses back to ``cfg``."""
    out = []
    for sname in SECTIONS:
        out.append(f"[{sname}]")
        sec = getattr(cfg, sname)
        for f in dataclasses.fields(sec):
            out.append(f"{f.name} = {_format(getattr(sec, f.name))}")
        out.append("")
    return "\n".join(out)


def resolve_data_path(base_dir: Path | None, value: str) -> Path:
    fp = Path(value)
    if not fp.is_absolute() and base_dir is not None:
        fp = base_dir / fp
    return fp
