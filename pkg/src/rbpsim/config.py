"""JSON configuration files: schema, presets and conversion to run objects."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .engine import DEFAULT_MEMORY_CAP, StopRule
from .fitness import FitnessDistribution
from .malthus import ModelParams
from .mc import DEFAULT_BOX, ExperimentConfig

PRESETS = ("fig1", "house_of_cards", "bianconi_barabasi", "polya")

_NUMBER_OR_INF = {"oneOf": [
    {"type": "number"},
    {"type": "string", "enum": ["inf", "-inf"]},
]}

_FITNESS = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["power_tail", "beta", "discrete", "piecewise_density"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number", "exclusiveMinimum": 0},
        "b": {"type": "number", "exclusiveMinimum": 0},
        "atoms": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 2, "maxItems": 2,
                      "items": {"type": "number"}},
        },
        "breakpoints": {"type": "array", "minItems": 2, "items": {"type": "number"}},
        "coefficients": {
            "type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "power_tail"}}},
         "then": {"required": ["alpha"]}},
        {"if": {"properties": {"kind": {"const": "beta"}}},
         "then": {"required": ["a", "b"]}},
        {"if": {"properties": {"kind": {"const": "discrete"}}},
         "then": {"required": ["atoms"]}},
        {"if": {"properties": {"kind": {"const": "piecewise_density"}}},
         "then": {"required": ["breakpoints", "coefficients"]}},
    ],
    "additionalProperties": False,
}

_PROB = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

_MODEL = {
    "type": "object",
    "properties": {
        "preset": {"enum": list(PRESETS)},
        "beta": _PROB,
        "gamma": _PROB,
        "fitness": _FITNESS,
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rbpsim configuration",
    "type": "object",
    "required": ["model"],
    "properties": {
        "model": _MODEL,
        "seed": {"type": "integer", "minimum": 0},
        "stop": {
            "type": "object",
            "properties": {
                "max_time": {"type": "number", "minimum": 0},
                "max_events": {"type": "integer", "minimum": 0},
                "max_families": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "analysis_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "replicas": {"type": "integer", "minimum": 1},
        "threads": {"type": "integer", "minimum": 1},
        "memory_cap": {"type": "integer", "minimum": 1},
        "outputs": {
            "type": "object",
            "properties": {k: {"type": "boolean"} for k in
                           ("fitness_hist", "gamma_points", "largest", "wave")},
            "additionalProperties": False,
        },
        "box": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _NUMBER_OR_INF},
        },
        "n_bins": {"type": "integer", "minimum": 1},
        "wave": {
            "type": "object",
            "properties": {
                "time": {"type": "number", "exclusiveMinimum": 0},
                "x_grid": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "minimum": 0}},
            },
            "additionalProperties": False,
        },
        "bubbles": {
            "type": "object",
            "properties": {
                "time": {"type": "number", "exclusiveMinimum": 0},
                "size_floor": {"type": "integer", "minimum": 1},
                "svg": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

SUMMARY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rbpsim simulate summary",
    "type": "object",
    "required": ["seed", "params", "stop", "N", "M", "clock", "T_values", "tallies"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "params": {
            "type": "object",
            "required": ["beta", "gamma", "fitness"],
            "properties": {"beta": _PROB, "gamma": _PROB, "fitness": _FITNESS},
            "additionalProperties": False,
        },
        "stop": CONFIG_SCHEMA["properties"]["stop"],
        "N": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "clock": {"type": "number", "minimum": 0},
        "events": {"type": "integer", "minimum": 0},
        "T_values": {"type": "object", "additionalProperties": {"type": ["number", "null"]}},
        "tallies": {
            "type": "object",
            "required": ["both", "new_family_only", "reinforce_only"],
            "additionalProperties": {"type": "integer", "minimum": 0},
        },
        "status": {"enum": ["ok", "memory_abort"]},
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


def _validate(obj, schema, what):
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{what}: {where}: {e.message}") from None


def validate_summary(obj: dict) -> None:
    _validate(obj, SUMMARY_SCHEMA, "summary")


def model_from_json(obj: dict) -> ModelParams:
    """Build model parameters from explicit values or one of :data:`PRESETS`.

    ``fig1`` fixes everything; ``bianconi_barabasi`` fixes ``beta = gamma = 1``;
    ``house_of_cards`` sets ``gamma = 1 - beta``; ``polya`` takes both.
    """
    preset = obj.get("preset")
    fit = obj.get("fitness")
    beta, gamma = obj.get("beta"), obj.get("gamma")
    if preset == "fig1":
        if fit is not None or beta is not None or gamma is not None:
            raise ConfigError("model: preset fig1 takes no further fields")
        return ModelParams(1.0, 1.0, FitnessDistribution.power_tail(3.0))
    if fit is None:
        raise ConfigError("model: fitness is required")
    dist = FitnessDistribution.from_json(fit)
    if preset == "bianconi_barabasi":
        if beta is not None or gamma is not None:
            raise ConfigError("model: preset bianconi_barabasi fixes beta = gamma = 1")
        return ModelParams(1.0, 1.0, dist)
    if preset == "house_of_cards":
        if beta is None or gamma is not None:
            raise ConfigError("model: preset house_of_cards takes beta only (gamma = 1 - beta)")
        return ModelParams(beta, 1.0 - beta, dist)
    if beta is None or gamma is None:
        raise ConfigError("model: beta and gamma are required")
    return ModelParams(beta, gamma, dist)


@dataclass
class RunConfig:
    params: ModelParams
    seed: int = 0
    stop: StopRule | None = None
    analysis_times: list = field(default_factory=list)
    replicas: int = 1
    threads: int = 1
    memory_cap: int = DEFAULT_MEMORY_CAP
    outputs: dict = field(default_factory=dict)
    box: tuple = DEFAULT_BOX
    n_bins: int = 200
    wave_time: float | None = None
    wave_grid: tuple = tuple(np.linspace(0.0, 12.0, 49))
    bubble_time: float | None = None
    size_floor: int = 2
    svg: bool = True

    def stop_rule(self) -> StopRule:
        """The configured stop, else the last analysis time."""
        if self.stop is not None:
            return self.stop
        if self.analysis_times:
            return StopRule(max_time=self.analysis_times[-1])
        raise ConfigError("stop: give a stop rule or at least one analysis time")

    def experiment(self, times=None, outputs=None) -> ExperimentConfig:
        times = self.analysis_times if times is None else times
        if not times:
            raise ConfigError("analysis_times: at least one time is required")
        out = {"fitness_hist": True, "gamma_points": True, "largest": True, "wave": False}
        out.update(self.outputs)
        out.update(outputs or {})
        return ExperimentConfig(
            self.params, list(times), self.replicas, self.seed, out, self.memory_cap,
            self.threads, self.box, self.n_bins, self.wave_grid)


def from_json(obj: dict) -> RunConfig:
    """Validate ``obj`` against :data:`CONFIG_SCHEMA` and convert it."""
    _validate(obj, CONFIG_SCHEMA, "config")
    try:
        params = model_from_json(obj["model"])
        stop = StopRule(**obj["stop"]) if obj.get("stop") else None
        times = [float(t) for t in obj.get("analysis_times", [])]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("analysis_times: must be strictly increasing")
        box = tuple((float(a), float(b)) for a, b in obj.get("box", DEFAULT_BOX))
        if any(not a < b for a, b in box):
            raise ConfigError("box: each interval needs lo < hi")
        wave = obj.get("wave", {})
        bub = obj.get("bubbles", {})
        return RunConfig(
            params=params,
            seed=int(obj.get("seed", 0)),
            stop=stop,
            analysis_times=times,
            replicas=int(obj.get("replicas", 1)),
            threads=int(obj.get("threads", os.cpu_count() or 1)),
            memory_cap=int(obj.get("memory_cap", DEFAULT_MEMORY_CAP)),
            outputs=dict(obj.get("outputs", {})),
            box=box,
            n_bins=int(obj.get("n_bins", 200)),
            wave_time=wave.get("time"),
            wave_grid=tuple(float(x) for x in wave.get("x_grid", np.linspace(0.0, 12.0, 49))),
            bubble_time=bub.get("time"),
            size_floor=int(bub.get("size_floor", 2)),
            svg=bool(bub.get("svg", True)),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(str(e)) from None


def load(path) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    return from_json(obj)
