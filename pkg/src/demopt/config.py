"""Run configuration: plain sectioned key=value files.

Grammar: `[section]` headers, `key = value` lines, `#` comments (full-line or
trailing).  Values are booleans (true/false), integers, reals, or strings
(quoted or bare words).  Unknown sections or keys are hard errors with the
offending line number, as are type mismatches.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from demopt.compaction import MERGE_RULES
from demopt.errors import ConfigError

MODEL_KINDS = ("quadratic", "linreg", "logreg", "mlp")
DATA_KINDS = ("none", "linear", "blobs")
OPTIMIZER_KINDS = ("demo", "sgd", "signum", "adamw")
TRANSPORT_KINDS = ("memory", "tcp")

# Momentum decay when [optimizer] momentum is left unset.
DEFAULT_MOMENTUM = {"demo": 0.999, "sgd": 0.9, "signum": 0.9, "adamw": 0.0}


@dataclass
class ModelSection:
    kind: str = "mlp"
    input_dim: int = 64
    hidden_dim: int = 64
    hidden_layers: int = 1
    activation: str = "tanh"
    num_classes: int = 8
    output_dim: int = 8
    bias: bool = True
    dtype: str = "float32"
    dim: int = 256          # quadratic bowl only
    identity: bool = False  # quadratic bowl only


@dataclass
class DataSection:
    kind: str = "blobs"
    num_samples: int = 4096
    noise: float = 1.0
    spread: float = 3.0
    holdout_fraction: float = 0.2


@dataclass
class OptimizerSection:
    kind: str = "demo"
    lr: float = 0.05
    momentum: float | None = None  # resolved per kind, see DEFAULT_MOMENTUM
    s: int = 64
    k: int = 8
    signum: bool = True
    merge_rule: str = "contributor_average"
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8

    def resolved_momentum(self) -> float:
        if self.momentum is not None:
            return self.momentum
        return DEFAULT_MOMENTUM[self.kind]


@dataclass
class TransportSection:
    kind: str = "memory"
    host: str = "127.0.0.1"
    base_port: int = 0
    timeout_s: float = 30.0


@dataclass
class RunSection:
    workers: int = 4
    steps: int = 2000
    batch_size: int = 64
    seed: int = 0
    out_dir: str = ""


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    data: DataSection = field(default_factory=DataSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    transport: TransportSection = field(default_factory=TransportSection)
    run: RunSection = field(default_factory=RunSection)

    def copy(self) -> "RunConfig":
        return RunConfig(**{
            f.name: dataclasses.replace(getattr(self, f.name))
            for f in dataclasses.fields(self)
        })


_SECTIONS = {
    "model": ModelSection,
    "data": DataSection,
    "optimizer": OptimizerSection,
    "transport": TransportSection,
    "run": RunSection,
}

# key -> expected type per section; "ofloat" marks an optional float.
_SCHEMA = {
    "model": {
        "kind": str, "input_dim": int, "hidden_dim": int, "hidden_layers": int,
        "activation": str, "num_classes": int, "output_dim": int, "bias": bool,
        "dtype": str, "dim": int, "identity": bool,
    },
    "data": {
        "kind": str, "num_samples": int, "noise": float, "spread": float,
        "holdout_fraction": float,
    },
    "optimizer": {
        "kind": str, "lr": float, "momentum": "ofloat", "s": int, "k": int,
        "signum": bool, "merge_rule": str, "weight_decay": float,
        "beta1": float, "beta2": float, "eps": float,
    },
    "transport": {
        "kind": str, "host": str, "base_port": int, "timeout_s": float,
    },
    "run": {
        "workers": int, "steps": int, "batch_size": int, "seed": int,
        "out_dir": str,
    },
}


def _parse_value(raw: str, line: int):
    raw = raw.strip()
    if raw.startswith(('"', "'")):
        quote = raw[0]
        end = raw.find(quote, 1)
        if end < 0:
            raise ConfigError(f"unterminated string: {raw}", line=line)
        rest = raw[end + 1:].strip()
        if rest and not rest.startswith("#"):
            raise ConfigError(f"trailing text after string: {rest}", line=line)
        return raw[1:end]
    cut = raw.find("#")
    if cut >= 0:
        raw = raw[:cut].strip()
    if not raw:
        raise ConfigError("empty value", line=line)
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _coerce(value, expected, section: str, key: str, line: int):
    if expected == "ofloat":
        expected = float
    if expected is bool:
        if type(value) is bool:
            return value
        raise ConfigError(
            f"{section}.{key} expects true/false, got {value!r}", line=line)
    if expected is int:
        if type(value) is int:
            return value
        raise ConfigError(
            f"{section}.{key} expects an integer, got {value!r}", line=line)
    if expected is float:
        if type(value) in (int, float):
            return float(value)
        raise ConfigError(
            f"{section}.{key} expects a number, got {value!r}", line=line)
    if type(value) is not str:
        raise ConfigError(
            f"{section}.{key} expects a string, got {value!r}", line=line)
    return value


def parse_config(text: str) -> RunConfig:
    """Parse config text; raises ConfigError with a line number on any problem."""
    cfg = RunConfig()
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header: {line}", line=lineno)
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got: {line}", line=lineno)
        if section is None:
            raise ConfigError("key outside any [section]", line=lineno)
        key, _, raw_value = line.partition("=")
        key = key.strip()
        schema = _SCHEMA[section]
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line=lineno)
        value = _coerce(_parse_value(raw_value, lineno), schema[key],
                        section, key, lineno)
        setattr(getattr(cfg, section), key, value)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def apply_override(cfg: RunConfig, spec: str) -> None:
    """Apply one `section.key=value` override in place."""
    head, eq, raw_value = spec.partition("=")
    if not eq:
        raise ConfigError(f"override must look like section.key=value: {spec}")
    section, dot, key = head.strip().partition(".")
    if not dot or section not in _SCHEMA:
        raise ConfigError(f"override names unknown section: {spec}")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown key {key!r} in [{section}]: {spec}")
    value = _coerce(_parse_value(raw_value, 0), _SCHEMA[section][key],
                    section, key, 0)
    setattr(getattr(cfg, section), key, value)


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def validate_config(cfg: RunConfig) -> RunConfig:
    """Semantic validation beyond per-key types; returns cfg for chaining."""
    m, d, o, t, r = cfg.model, cfg.data, cfg.optimizer, cfg.transport, cfg.run
    _check(m.kind in MODEL_KINDS, f"model.kind must be one of {MODEL_KINDS}")
    _check(d.kind in DATA_KINDS, f"data.kind must be one of {DATA_KINDS}")
    _check(o.kind in OPTIMIZER_KINDS,
           f"optimizer.kind must be one of {OPTIMIZER_KINDS}")
    _check(t.kind in TRANSPORT_KINDS,
           f"transport.kind must be one of {TRANSPORT_KINDS}")
    _check(m.dtype in ("float32", "float64"),
           "model.dtype must be float32 or float64")
    _check(m.hidden_layers in (1, 2), "model.hidden_layers must be 1 or 2")
    _check(m.activation in ("tanh", "relu"),
           "model.activation must be tanh or relu")
    for name in ("input_dim", "hidden_dim", "num_classes", "output_dim", "dim"):
        _check(getattr(m, name) >= 1, f"model.{name} must be >= 1")

    expected_data = {"quadratic": "none", "linreg": "linear",
                     "logreg": "blobs", "mlp": "blobs"}[m.kind]
    _check(d.kind == expected_data,
           f"model.kind={m.kind} requires data.kind={expected_data}, "
           f"got {d.kind}")
    _check(0.0 <= d.holdout_fraction < 1.0,
           "data.holdout_fraction must be in [0, 1)")
    _check(d.noise >= 0.0, "data.noise must be >= 0")

    _check(o.lr > 0.0, "optimizer.lr must be > 0")
    if o.momentum is not None:
        _check(0.0 <= o.momentum < 1.0, "optimizer.momentum must be in [0, 1)")
    if o.kind == "demo":
        _check(o.resolved_momentum() > 0.0,
               "optimizer.momentum must be in (0, 1) for kind=demo")
    _check(o.s >= 1, "optimizer.s must be >= 1")
    _check(o.k >= 1, "optimizer.k must be >= 1")
    _check(o.merge_rule in MERGE_RULES,
           f"optimizer.merge_rule must be one of {MERGE_RULES}")
    _check(o.weight_decay >= 0.0, "optimizer.weight_decay must be >= 0")
    _check(0.0 <= o.beta1 < 1.0, "optimizer.beta1 must be in [0, 1)")
    _check(0.0 <= o.beta2 < 1.0, "optimizer.beta2 must be in [0, 1)")
    _check(o.eps > 0.0, "optimizer.eps must be > 0")

    _check(t.timeout_s > 0.0, "transport.timeout_s must be > 0")
    _check(0 <= t.base_port <= 65535, "transport.base_port must be a port")

    _check(r.workers >= 1, "run.workers must be >= 1")
    _check(r.steps >= 0, "run.steps must be >= 0")
    _check(r.batch_size >= 1, "run.batch_size must be >= 1")
    if d.kind != "none":
        _check(d.num_samples >= r.workers,
               "data.num_samples must cover run.workers shards")
    return cfg
