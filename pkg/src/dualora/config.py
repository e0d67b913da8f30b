"""Run configuration: plain ``key=value`` files plus command-line overrides."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from dualora.adapters import Activation, Variant, default_alpha
from dualora.binarize import SignScheme
from dualora.optim import OptimizerKind


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # adapter
    adapter: str = "dual"
    d: int = 32
    k: int = 32
    r: int = 16
    r1: int = 8
    r2: int = 8
    alpha: float | None = None
    init_std: float = 0.02
    warmup_steps: int = 100
    sign_scheme: str = "ste"
    magnitude_activation: str = "relu"
    variant: str = "full"
    ste_gate_on_input: bool = False
    # optimizer
    optimizer: str = "adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    # task
    steps: int = 2000
    batch_size: int = 32
    sparsity: float = 0.9
    magnitude_std: float = 0.1
    noise_std: float = 0.0
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    # sweep / rank / grad-check
    r1_values: tuple[int, ...] = ()
    rel_tol: float = 2.220446049250313e-16
    when: str = "init"
    check_d: int = 8
    check_k: int = 8
    check_r1: int = 2
    check_r2: int = 2
    check_std: float = 0.5
    checkpoint: str = ""
    resume: str = ""
    debug_corrupt_backward: bool = False

    def __post_init__(self):
        try:
            self._validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def _validate(self) -> None:
        if self.adapter not in ("dual", "lora"):
            raise ValueError(f"adapter: expected 'dual' or 'lora', got {self.adapter!r}")
        for key in ("d", "k", "r", "r1", "r2", "batch_size", "steps",
                    "check_d", "check_k", "check_r1", "check_r2"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key}: must be a positive integer, got {getattr(self, key)}")
        for key in ("r", "r1", "r2") if self.adapter == "lora" else ("r1", "r2"):
            if getattr(self, key) > min(self.d, self.k):
                raise ValueError(f"{key}: {getattr(self, key)} exceeds min(d, k) = {min(self.d, self.k)}")
        for key in ("check_r1", "check_r2"):
            if getattr(self, key) > min(self.check_d, self.check_k):
                raise ValueError(f"{key}: exceeds min(check_d, check_k)")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha: must be positive, got {self.alpha}")
        if not self.init_std > 0:
            raise ValueError(f"init_std: must be positive, got {self.init_std}")
        if not self.check_std > 0:
            raise ValueError(f"check_std: must be positive, got {self.check_std}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps: must be non-negative, got {self.warmup_steps}")
        SignScheme.parse(self.sign_scheme)
        Activation(self.magnitude_activation)
        Variant(self.variant)
        OptimizerKind(self.optimizer)
        if not self.lr >= 0:
            raise ValueError(f"lr: must be non-negative, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"beta1/beta2: must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not 0 <= self.sparsity <= 1:
            raise ValueError(f"sparsity: must lie in [0, 1], got {self.sparsity}")
        if self.noise_std < 0 or not self.magnitude_std > 0:
            raise ValueError("noise_std must be >= 0 and magnitude_std > 0")
        if not self.seeds:
            raise ValueError("seeds: at least one seed is required")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol: must be positive, got {self.rel_tol}")
        if self.when not in ("init", "final"):
            raise ValueError(f"when: expected 'init' or 'final', got {self.when!r}")

    @property
    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        if self.adapter == "lora":
            return 2.0 * self.r
        return default_alpha(self.r1, self.r2)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key in ("seeds", "r1_values"):
            out[key] = list(out[key])
        return out

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name}={format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        parsed = {}
        for key, raw in values.items():
            try:
                parsed[key] = coerce(known[key].type, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
        return cls(**parsed)


def format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def coerce(type_name: str, raw: Any) -> Any:
    """Convert ``raw`` (a string from a file or flag, or a JSON value) to the field type."""
    if isinstance(raw, str):
        raw = raw.strip()
    if type_name == "bool":
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("true", "1", "yes", "on"):
            return True
        if str(raw).lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if type_name == "int":
        if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
            raise ValueError("expected an integer")
        return int(raw)
    if type_name == "float":
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError("expected a finite number")
        return value
    if type_name == "float | None":
        if raw is None or (isinstance(raw, str) and raw.lower() in ("", "none", "null")):
            return None
        return coerce("float", raw)
    if type_name == "tuple[int, ...]":
        if isinstance(raw, (list, tuple)):
            return tuple(coerce("int", v) for v in raw)
        return tuple(int(v) for v in str(raw).split(",") if v.strip())
    if type_name == "str":
        return str(raw)
    raise TypeError(f"unsupported field type {type_name}")


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """File values first, then ``overrides`` (command-line flags win)."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_config_text(text))
    values.update(overrides or {})
    return RunConfig.from_dict(values)


def config_from_json(text: str) -> RunConfig:
    return RunConfig.from_dict(json.loads(text))
