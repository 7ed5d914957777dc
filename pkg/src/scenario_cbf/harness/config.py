"""Experiment configuration: one JSON document plus flat ``--key value`` overrides."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..quadcopter import QuadParams, QuadState

OUT_ENV = "SCENARIO_CBF_OUT"

TOP_LEVEL = ("start", "sweep", "seeds", "output_dir", "bound_formula", "workers")


class ConfigError(ValueError):
    """Configuration could not be read or validated."""


def default_output_dir() -> str:
    return os.environ.get(OUT_ENV, "scenario_cbf_out")


@dataclass
class ExperimentConfig:
    quad: QuadParams = field(default_factory=QuadParams)
    start: list = field(default_factory=lambda: [0.5, 0.5])
    sweep: Optional[list] = None
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = field(default_factory=default_output_dir)
    bound_formula: str = "campi"
    workers: int = 1

    def __post_init__(self):
        if self.sweep is not None:
            if not self.sweep:
                raise ConfigError("sweep: must be a non-empty list or omitted")
            for eps in self.sweep:
                if not isinstance(eps, (int, float)) or not 0.0 < eps < 1.0:
                    raise ConfigError(f"sweep: value {eps!r} not in (0, 1)")
        if not self.seeds or not all(isinstance(s, int) and not isinstance(s, bool)
                                     for s in self.seeds):
            raise ConfigError("seeds: must be a non-empty list of integers")
        if self.bound_formula not in ("campi", "eq8"):
            raise ConfigError(f"bound_formula: unknown formula {self.bound_formula!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers: must be a positive integer")
        if len(self.start) != self.quad.dim:
            raise ConfigError(f"start: expected {self.quad.dim} coordinates")
        if self.quad.bound_formula != self.bound_formula:
            self.quad = replace(self.quad, bound_formula=self.bound_formula)

    @property
    def epsilons(self) -> list:
        return list(self.sweep) if self.sweep is not None else [self.quad.risk.epsilon]

    def start_state(self) -> QuadState:
        return QuadState.at_rest(self.start)

    def to_dict(self) -> dict:
        return {
            "quad": self.quad.to_dict(),
            "start": list(self.start),
            "sweep": None if self.sweep is None else list(self.sweep),
            "seeds": list(self.seeds),
            "output_dir": str(self.output_dir),
            "bound_formula": self.bound_formula,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("top level: expected a JSON object")
        unknown = set(data) - set(TOP_LEVEL) - {"quad"}
        if unknown:
            raise ConfigError(f"top level: unknown field(s) {sorted(unknown)}")
        quad_data = data.get("quad", {})
        if not isinstance(quad_data, dict):
            raise ConfigError("quad: expected a JSON object")
        quad_data = dict(quad_data)
        formula = data.get("bound_formula", quad_data.get("bound_formula", "campi"))
        quad_data["bound_formula"] = formula
        try:
            quad = QuadParams.from_dict(quad_data)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"quad: {exc}") from None
        kw = {k: data[k] for k in TOP_LEVEL if k in data and data[k] is not None}
        if "sweep" in data:
            kw["sweep"] = data["sweep"]
        kw["bound_formula"] = formula
        try:
            return cls(quad=quad, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8", newline="\n")


def parse_value(text: str):
    """JSON literal if it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: dict) -> dict:
    """Flat overrides: top-level keys replace top-level fields, anything else
    is a quad parameter."""
    data = json.loads(json.dumps(data))
    quad = data.setdefault("quad", {})
    for key, value in overrides.items():
        key = key.replace("-", "_")
        if key in TOP_LEVEL:
            data[key] = value
        else:
            quad[key] = value
    return data


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    if overrides:
        data = apply_overrides(data, overrides)
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        where = f"{path}: " if path else ""
        raise ConfigError(f"{where}{exc}") from None
