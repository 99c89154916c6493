"""Experiment configuration: a YAML file mapped onto dataclasses.

Unknown keys are errors and are reported with their line number.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .process import (
    ExponentialLength,
    FiberModel,
    FixedLength,
    GaussianTwist,
    TwoPointTwist,
    UniformLength,
    UniformTwist,
)
from .propagation import SpectralDensity

__all__ = ["ConfigError", "LawConfig", "SpectrumConfig", "ExperimentConfig", "EXPERIMENTS", "load_config"]

EXPERIMENTS = ("simulate", "compare-h", "p2", "haar", "independence")

TWIST_LAWS = {"two_point": TwoPointTwist, "uniform": UniformTwist, "gaussian": GaussianTwist}
LENGTH_LAWS = {"exponential": ExponentialLength, "fixed": FixedLength, "uniform": UniformLength}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class LawConfig:
    """A distribution family name plus its keyword parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def build(self, table: dict):
        if self.kind not in table:
            raise ConfigError(f"unknown law {self.kind!r}; choose from {sorted(table)}")
        try:
            return table[self.kind](**self.params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {self.kind!r}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{self.kind!r}: {exc}") from None

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class SpectrumConfig:
    """``flat`` (low, high, points), ``line`` (beta) or ``csv`` (path)."""

    kind: str
    low: Optional[float] = None
    high: Optional[float] = None
    points: Optional[int] = None
    beta: Optional[float] = None
    path: Optional[str] = None

    def build(self, base: Path = Path(".")) -> SpectralDensity:
        try:
            if self.kind == "flat":
                return SpectralDensity.flat(float(self.low), float(self.high), int(self.points))
            if self.kind == "line":
                return SpectralDensity.line(float(self.beta))
            if self.kind == "csv":
                p = Path(self.path)
                return SpectralDensity.from_csv(p if p.is_absolute() else base / p)
        except (TypeError, ValueError, OSError) as exc:
            raise ConfigError(f"spectrum: {exc}") from None
        raise ConfigError(f"unknown spectrum kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


# unit notes written next to physical quantities when a config is saved
_UNITS = {
    "twist": "twist rates in rad/length",
    "length": "lengths in length units",
    "beta": "rad/length",
    "beta2": "rad/length",
    "betas": "rad/length",
    "spectrum": "beta in rad/length",
    "z": "length",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    twist: LawConfig
    length: LawConfig
    seed: int = 0
    samples: int = 10_000
    beta: float = 1.0
    beta2: Optional[float] = None
    betas: Optional[list] = None
    ns: list = field(default_factory=lambda: [0])
    z: Optional[float] = None
    spectrum: Optional[SpectrumConfig] = None
    output: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not (isinstance(self.samples, int) and self.samples >= 2):
            raise ConfigError("samples must be an integer >= 2")
        if any((not isinstance(n, int)) or n < 0 for n in self.ns) or not self.ns:
            raise ConfigError("ns must be a non-empty list of non-negative integers")
        if self.experiment == "p2" and self.spectrum is None:
            raise ConfigError("experiment 'p2' needs a spectrum")
        if self.experiment == "independence" and self.beta2 is None:
            raise ConfigError("experiment 'independence' needs beta2")

    # -- construction --------------------------------------------------------

    def model(self) -> FiberModel:
        return FiberModel(self.twist.build(TWIST_LAWS), self.length.build(LENGTH_LAWS), seed=self.seed)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else v
        return out

    @classmethod
    def from_dict(cls, d: dict, lines: Optional[dict] = None, source: Optional[str] = None) -> "ExperimentConfig":
        lines = lines or {}
        if not isinstance(d, dict):
            raise ConfigError("top level must be a mapping", source=source)
        names = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in names:
                raise ConfigError(f"unknown key {key!r}", lines.get(key), source)
        d = dict(d)
        try:
            for key, table in (("twist", TWIST_LAWS), ("length", LENGTH_LAWS)):
                if key not in d:
                    raise ConfigError(f"missing required key {key!r}", None, source)
                law = d[key]
                if not isinstance(law, dict) or "kind" not in law:
                    raise ConfigError(f"{key} needs a 'kind'", lines.get(key), source)
                law = dict(law)
                cfg = LawConfig(law.pop("kind"), law)
                try:
                    cfg.build(table)  # validate here so the line number is known
                except ConfigError as exc:
                    raise ConfigError(str(exc), lines.get(key), source) from None
                d[key] = cfg
            if "spectrum" in d:
                spec = d["spectrum"]
                allowed = {f.name for f in dataclasses.fields(SpectrumConfig)}
                if not isinstance(spec, dict) or set(spec) - allowed or "kind" not in spec:
                    raise ConfigError(
                        f"spectrum must be a mapping with 'kind' and keys among {sorted(allowed)}",
                        lines.get("spectrum"), source)
                d["spectrum"] = SpectrumConfig(**spec)
            if isinstance(d.get("ns"), dict):
                r = d["ns"]
                if set(r) - {"start", "stop", "step"}:
                    raise ConfigError("ns range takes start, stop, step", lines.get("ns"), source)
                d["ns"] = list(range(r.get("start", 0), r["stop"] + 1, r.get("step", 1)))
            for key in ("beta", "beta2", "z"):
                if d.get(key) is not None:
                    d[key] = float(d[key])
            if d.get("betas") is not None:
                d["betas"] = [float(b) for b in d["betas"]]
            return cls(**d)
        except ConfigError as exc:
            if source is None or exc.line is not None or str(exc).startswith(source):
                raise
            raise ConfigError(str(exc), None, source) from None
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc), None, source) from None

    def dumps(self) -> str:
        """YAML text with unit comments; ``loads(dumps())`` is lossless."""
        rows = []
        for key, value in self.to_dict().items():
            text = yaml.safe_dump(value, default_flow_style=True, width=math.inf, sort_keys=False).strip()
            if text.endswith("\n..."):
                text = text[:-4]
            elif text.endswith("..."):
                text = text[:-3].strip()
            note = _UNITS.get(key)
            rows.append(f"{key}: {text}" + (f"  # {note}" if note else ""))
        return "\n".join(rows) + "\n"

    @classmethod
    def loads(cls, text: str, source: Optional[str] = None) -> "ExperimentConfig":
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", line, source) from None
        lines = {}
        if isinstance(node, yaml.MappingNode):
            lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
        return cls.from_dict(data if data is not None else {}, lines, source)

    def digest(self) -> str:
        """Hash of everything that determines the numbers (not the output path)."""
        d = self.to_dict()
        d.pop("output", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return ExperimentConfig.loads(text, source=str(path))
