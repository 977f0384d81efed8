"""Run configuration: flat TOML file plus ``key=value`` overrides, validated up front."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .train import TrainConfig
from .editing import VARIANTS


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    # synthetic generator
    K: int = 8
    F: int = 8
    T_max: int = 4
    a: float = 1.5
    b: float = 2.0
    rotate: bool = True
    # training
    n_latents: int = 500
    D: int = 8
    variant: str = "nonlinear"
    view_strategy: str = "perturbation"
    sigma: float = 0.1
    epochs: int = 100
    batch_size: int = 0  # 0 selects the automatic rule
    lr: float = 1e-3
    optimizer: str = "adam"
    c1: float = 2.0
    c2: float = 1.0
    c3: float = 1.0
    negatives: int = 1
    # evaluation
    gammas: list[int] = field(default_factory=lambda: [2, 3, 4])
    taus: list[float] = field(default_factory=lambda: [0.0, 0.2])
    top_ks: list[int] = field(default_factory=lambda: [1, 2, 3])
    M: int = 100
    bins: int = 20
    trials: int = 2000
    output_dir: str = "out"

    def validate(self) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        for f in fields(self):
            v = getattr(self, f.name)
            t = types[f.name]
            if t == "int" and (isinstance(v, bool) or not isinstance(v, int)):
                raise ConfigError(f"{f.name} must be an integer")
            if t == "float" and (isinstance(v, bool) or not isinstance(v, (int, float))):
                raise ConfigError(f"{f.name} must be a number")
            if t == "bool" and not isinstance(v, bool):
                raise ConfigError(f"{f.name} must be true or false")
            if t == "str" and not isinstance(v, str):
                raise ConfigError(f"{f.name} must be a string")
            if t.startswith("list") and not isinstance(v, list):
                raise ConfigError(f"{f.name} must be a list")
        if not 1 <= self.F <= self.K:
            raise ConfigError("need 1 <= F <= K")
        if self.T_max < 1 or self.a <= 0:
            raise ConfigError("T_max must be >= 1 and a > 0")
        if self.n_latents < 0 or self.M < 1:
            raise ConfigError("n_latents must be >= 0 and M >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if any(not isinstance(g, int) or g < 1 for g in self.gammas):
            raise ConfigError("gammas must be positive integers")
        if any(not 0 <= t <= 1 for t in self.taus):
            raise ConfigError("taus must lie in [0, 1]")
        if any(not isinstance(k, int) or not 1 <= k for k in self.top_ks):
            raise ConfigError("top_ks must be positive integers")
        if self.bins < 2 or self.trials < 10:
            raise ConfigError("bins must be >= 2 and trials >= 10")
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0")
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_directions=self.D, variant=self.variant, view_strategy=self.view_strategy,
            sigma=float(self.sigma), n_latents=self.n_latents, epochs=self.epochs,
            batch_size=self.batch_size or None, lr=float(self.lr), optimizer=self.optimizer,
            c1=float(self.c1), c2=float(self.c2), c3=float(self.c3),
            negatives=self.negatives, seed=self.seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()  # bare strings need no quotes on the command line
    return key, value


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    values: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                values = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for text in overrides or []:
        k, v = _parse_override(text)
        values[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in values.items():
        if isinstance(v, dict):
            raise ConfigError(f"{k}: nested tables are not allowed")
        ftype = RunConfig.__dataclass_fields__[k].type
        if ftype == "float" and isinstance(v, int) and not isinstance(v, bool):
            values[k] = float(v)
        if k == "taus" and isinstance(v, list):
            values[k] = [float(t) if isinstance(t, int) and not isinstance(t, bool) else t for t in v]
    return RunConfig(**values).validate()
