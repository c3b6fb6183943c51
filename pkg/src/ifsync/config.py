"""Experiment configuration: a YAML file validated with line-anchored errors.

Example::

    system:
      maps: ["cubic:1.0,-1.5", "cubic:0.5,-1.5", "moebius:2.0", "moebius:0.5"]
      probs: [0.3, 0.3, 0.2, 0.2]
    seed: 42
    output: results/d4
    experiments:
      - kind: assumptions
      - kind: sync
        replicas: 10000
"""

from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .demos import NAMED
from .diffeo import parse_diffeo


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSpec(_Strict):
    maps: list[str] | None = None
    probs: list[float] | None = None
    preset: Literal["d4", "single_map", "symmetric_pair"] | None = None
    grid_size: int = Field(1000, ge=100)

    @field_validator("maps")
    @classmethod
    def _maps_parse(cls, maps):
        if maps is not None:
            for text in maps:
                parse_diffeo(text)
        return maps

    @field_validator("probs")
    @classmethod
    def _probs_valid(cls, probs):
        if probs is None:
            return probs
        if any(p <= 0 for p in probs):
            raise ValueError(f"probabilities must be positive, got {probs}")
        total = sum(probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got sum {total!r}")
        return probs

    @model_validator(mode="after")
    def _complete(self):
        if self.preset is None:
            if self.maps is None or self.probs is None:
                raise ValueError("give either a preset or both maps and probs")
            if len(self.maps) != len(self.probs):
                raise ValueError(f"{len(self.maps)} maps but {len(self.probs)} probabilities")
        elif self.maps is not None or self.probs is not None:
            raise ValueError("preset excludes maps/probs")
        return self

    def build(self):
        from .system import IfsSystem

        if self.preset is not None:
            base = NAMED[self.preset]()
            return IfsSystem(base.maps, base.probs)
        return IfsSystem.from_strings(self.maps, self.probs)


class _Experiment(_Strict):
    name: str | None = None

    @property
    def label(self):
        return self.name or self.kind


class AssumptionsExp(_Experiment):
    kind: Literal["assumptions"]
    grid_size: int = Field(1000, ge=100)
    expect_hold: bool = True


class StationaryExp(_Experiment):
    kind: Literal["stationary"]
    cells: int = Field(2048, ge=1)
    n_steps: int = Field(100_000, ge=1)
    replicas: int = Field(1000, ge=2)
    burn_in: int = Field(1000, ge=0)
    bins: int = Field(4096, ge=8)
    per_decade: int = Field(40, ge=1)
    a: float = Field(0.05, gt=0, lt=0.5)
    ks_tolerance: float = 0.01
    tail_window: tuple[int, int] = (4, 16)
    tail_factor: float = 0.9
    dump_matrix: bool = False


class LyapunovExp(_Experiment):
    kind: Literal["lyapunov"]
    n: int = Field(10_000, ge=1)
    replicas: int = Field(1000, ge=2)
    burn_in: int = Field(1000, ge=0)
    min_z: float = 5.0
    max_sigma: float = 3.0


class SyncExp(_Experiment):
    kind: Literal["sync"]
    x: float = Field(0.2, gt=0, lt=1)
    y: float = Field(0.8, gt=0, lt=1)
    n_max: int = Field(200, ge=5)
    replicas: int = Field(10_000, ge=2)
    floor: float = Field(1e-12, ge=0)
    beta: float = Field(1.0, gt=0, le=1)
    min_r2: float = 0.98
    sync_pairs: list[tuple[float, float]] = [(0.1, 0.9)]
    sync_n: int = Field(1000, ge=1)
    sync_fraction: float = 0.99


class CouplingExp(_Experiment):
    kind: Literal["coupling"]
    x: float = Field(0.001, gt=0, lt=1)
    y: float = Field(0.999, gt=0, lt=1)
    a: float = Field(0.05, gt=0, lt=0.5)
    horizon: int = Field(10_000, ge=1)
    replicas: int = Field(10_000, ge=2)
    min_r2: float = 0.95
    expansion_pair: tuple[float, float] = (0.01, 0.0105)
    beta: float = Field(0.1, ge=0, le=1)
    expansion_n: int = Field(1000, ge=0)
    eta: float = Field(1.0, gt=0)
    delta: float = Field(1e-3, gt=0)


class OccupationExp(_Experiment):
    kind: Literal["occupation"]
    x: float = Field(0.5, gt=0, lt=1)
    a: float = Field(0.02, gt=0, lt=0.5)
    n_max: int = Field(500, ge=5)
    replicas: int = Field(1_000_000, ge=2)
    max_probability: float = 0.05
    min_r2: float = 0.9
    escape_x: float = Field(0.025, gt=0, lt=0.5)
    escape_a: float = Field(0.05, gt=0, lt=0.5)
    escape_n_max: int = Field(100, ge=5)


class CorrelationsExp(_Experiment):
    kind: Literal["correlations"]
    phi: str = "identity"
    psi: str = "cos_pi"
    n_max: int = Field(100, ge=5)
    replicas: int = Field(100_000, ge=2)
    min_r2: float = 0.95
    control_sigma: float = 4.0
    n_steps: int = Field(100_000, ge=1)  # stationary histogram if none was computed
    stationary_replicas: int = Field(1000, ge=2)


Experiment = Annotated[
    Union[AssumptionsExp, StationaryExp, LyapunovExp, SyncExp, CouplingExp, OccupationExp,
          CorrelationsExp],
    Field(discriminator="kind"),
]

KINDS = {
    "assumptions": AssumptionsExp,
    "stationary": StationaryExp,
    "lyapunov": LyapunovExp,
    "sync": SyncExp,
    "coupling": CouplingExp,
    "occupation": OccupationExp,
    "correlations": CorrelationsExp,
}


class ExperimentConfig(_Strict):
    system: SystemSpec
    seed: int = Field(0, ge=0, lt=2**64)
    output: str = "results"
    experiments: list[Experiment]

    @model_validator(mode="after")
    def _unique_names(self):
        labels = [e.label for e in self.experiments]
        dupes = sorted({x for x in labels if labels.count(x) > 1})
        if dupes:
            raise ValueError(f"duplicate experiment names {dupes}; set distinct 'name' keys")
        return self


def _node_lines(node, path=(), out=None):
    """Map key paths to 1-based line numbers of a composed YAML node tree."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            out[path + (key.value,)] = key.start_mark.line + 1
            _node_lines(value, path + (key.value,), out)
            out[path + (key.value,)] = key.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _node_lines(item, path + (i,), out)
    return out


def _line_for(lines, loc):
    # discriminated-union errors insert the tag name into loc; skip non-keys
    loc = tuple(loc)
    while loc:
        if loc in lines:
            return lines[loc]
        trimmed = tuple(p for p in loc if not (isinstance(p, str) and p in KINDS))
        if trimmed != loc and trimmed in lines:
            return lines[trimmed]
        loc = loc[:-1]
    return lines.get((), 1)


def parse_config(text, source="<config>", overrides=()):
    """Parse and validate configuration text; raise ``ConfigError`` with the
    offending line on failure."""
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(f"{where}: YAML syntax error: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}:1: expected a mapping at top level")
    lines = _node_lines(node) if node is not None else {}
    for item in overrides:
        _apply_override(data, item)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            line = _line_for(lines, err["loc"])
            key = ".".join(str(p) for p in err["loc"])
            msgs.append(f"{source}:{line}: {key}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from None


def load_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), overrides)


def _apply_override(data, item):
    """``a.b.c=value`` with YAML-typed values; list entries of
    ``experiments`` are addressed by name or kind, and the ``experiments.``
    prefix may be dropped."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    value = yaml.safe_load(raw)
    parts = key.strip().split(".")
    if parts[0] in KINDS or (parts[0] not in ExperimentConfig.model_fields and len(parts) > 1):
        # shorthand: sync.replicas=... means experiments.sync.replicas=...
        parts = ["experiments"] + parts
    target = data
    for part in parts[:-1]:
        if isinstance(target, list):
            match = [e for e in target if isinstance(e, dict)
                     and part in (e.get("name"), e.get("kind"))]
            if not match:
                raise ConfigError(f"override {item!r}: no experiment named {part!r}")
            target = match[0]
        else:
            target = target.setdefault(part, {})
    if isinstance(target, list):
        raise ConfigError(f"override {item!r} must address a field, not a list")
    target[parts[-1]] = value
