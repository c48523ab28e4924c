"""Experiment configuration: JSON schema validation and typed defaults."""
from __future__ import annotations

import difflib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .geometry import Domain
from .potential import Constant, Potential


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


def load_schema() -> dict[str, Any]:
    return json.loads(resources.files("stablegauge").joinpath("config.schema.json").read_text())


@dataclass(frozen=True)
class MCBudget:
    paths: int = 1_000_000
    dt: float = 2e-3
    t_max: float = 3.0
    selftest_draws: int = 1_000_000
    gauge_paths: int = 100_000


@dataclass(frozen=True)
class ExperimentConfig:
    domain: dict[str, Any]
    alpha: float
    potential: dict[str, Any] | None = None
    h: float | None = None
    cells: int = 32
    local_correction: bool | None = None
    mc: MCBudget = field(default_factory=MCBudget)
    seed: int = 0
    checks: tuple[str, ...] = ()
    output_dir: str = "out"

    def domain_object(self) -> Domain:
        return Domain.from_dict(self.domain)

    def potential_object(self) -> Potential:
        return Potential.from_dict(self.potential) if self.potential else Constant(0.0)

    def spacing(self) -> float:
        if self.h is not None:
            return float(self.h)
        lo, hi = self.domain_object().bounding_box
        return float(max(hi - lo)) / self.cells

    def echo(self) -> dict[str, Any]:
        d = asdict(self)
        d["checks"] = list(self.checks)
        return d


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(raw: dict[str, Any], registered: list[str] | None = None) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config field '{_path(e)}': {e.message}")
    try:
        domain = Domain.from_dict(raw["domain"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"config field 'domain': {exc}") from exc
    if raw.get("potential"):
        try:
            Potential.from_dict(raw["potential"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config field 'potential': {exc}") from exc
    checks = tuple(raw.get("checks", ()))
    if registered is not None:
        for k, name in enumerate(checks):
            if name not in registered:
                near = difflib.get_close_matches(name, registered, n=1, cutoff=0.0)
                hint = f"; did you mean '{near[0]}'?" if near else ""
                raise ConfigError(f"config field 'checks/{k}': unknown check '{name}'{hint}")
    grid = raw.get("grid", {})
    mc = MCBudget(**raw.get("mc", {}))
    cfg = ExperimentConfig(
        domain=domain.to_dict(),
        alpha=float(raw["alpha"]),
        potential=raw.get("potential"),
        h=grid.get("h"),
        cells=int(grid.get("cells", 32)),
        local_correction=grid.get("local_correction"),
        mc=mc,
        seed=int(raw.get("seed", 0)),
        checks=checks,
        output_dir=str(raw.get("output_dir", "out")),
    )
    return cfg


def load_config(path: str | Path, registered: list[str] | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(raw, registered)
