"""Run configuration: validation, canonical JSON and fingerprinting."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .core import PhysicalParams, build_grid
from .errors import ConfigurationError
from .predictor import fingerprint
from .propagator import Absorber, Settings
from .protocols import Protocol, protocol_from_dict

WORKERS_ENV = "CONVEYOR_WORKERS"

_TOP_KEYS = {"params", "grid", "dt", "absorber", "sample_stride", "protocol", "workers", "out", "options"}


@dataclass
class RunConfig:
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    dt: float = 0.01
    absorber: dict = field(default_factory=dict)
    sample_stride: int = 50
    protocol: dict | None = None
    workers: int = 1
    out: str | None = None
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = sorted(set(data) - _TOP_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {unknown}")
        cfg = cls(**{k: data[k] for k in data})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        self.settings()
        if self.protocol is not None:
            self.build_protocol()
        if int(self.workers) < 1:
            raise ConfigurationError("workers must be >= 1")

    def settings(self) -> Settings:
        try:
            params = PhysicalParams(**self.params)
            grid = build_grid(**self.grid)
            absorber = Absorber(**self.absorber)
            return Settings(params=params, grid=grid, dt=float(self.dt), absorber=absorber,
                            sample_stride=int(self.sample_stride))
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def build_protocol(self) -> Protocol:
        if self.protocol is None:
            raise ConfigurationError("no protocol configured")
        return protocol_from_dict(self.protocol)

    def resolved_workers(self, flag: int | None = None) -> int:
        """--workers flag, then $CONVEYOR_WORKERS, then the config value."""
        if flag is not None:
            return max(1, int(flag))
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError as exc:
                raise ConfigurationError(f"{WORKERS_ENV} must be an integer") from exc
        return max(1, int(self.workers))

    def to_dict(self) -> dict:
        return {"params": self.params, "grid": self.grid, "dt": self.dt, "absorber": self.absorber,
                "sample_stride": self.sample_stride, "protocol": self.protocol, "workers": self.workers,
                "out": self.out, "options": self.options}

    def canonical(self) -> str:
        """Canonical JSON with every default filled in."""
        s = self.settings().to_dict()
        body = dict(s, protocol=self.protocol, workers=self.workers, out=self.out, options=self.options)
        return json.dumps(body, sort_keys=True, indent=2) + "\n"

    def fingerprint(self) -> str:
        """Hash of the numeric content; output paths and worker count do not affect results."""
        body = self.settings().to_dict()
        body.update(protocol=self.protocol, options=self.options)
        return fingerprint(body)
