"""Experiment config files: YAML (or JSON) with a ``kind`` discriminator.

Every key is checked against the experiment's schema before any work runs,
and errors point at the offending line.
"""
import dataclasses
import hashlib
import json
from importlib import resources
from pathlib import Path

import yaml

from .atomic import AtomicConstants
from .budget import BudgetInput
from .errors import DomainError
from .repump import RepumpConfig
from .rb import RBConfig


class ConfigError(DomainError):
    def __init__(self, message, source="<config>", line=None):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.line = line


def _field_names(cls, exclude=("seed",)):
    return {f.name for f in dataclasses.fields(cls)} - set(exclude)


_FIT_PARAMS = {"r_to0", "r_stay", "r_to1", "scale_A", "offset_B"}

# kind -> {block: allowed keys (None means scalar value)}
SCHEMAS = {
    "repump": {
        "repump": _field_names(RepumpConfig),
        "constants": _field_names(AtomicConstants, exclude=("branch_to_D",)),
        "branching_table": None,
    },
    "fit": {
        "data": None,
        "synthetic": {"params", "shots", "n_max"},
        "initial_state": None,
        "initial_guess": _FIT_PARAMS,
    },
    "irb": {
        "rb": _field_names(RBConfig),
        "bootstrap": {"resamples", "confidence"},
    },
    "population_decay": {
        "decay": {"rate", "cycles", "shots"},
        "data": None,
    },
    "budget": {"budget": _field_names(BudgetInput)},
    "pulse_scan": {
        "pulse": {"tau_pi", "edge_times", "detuning_hz", "step_tolerance"},
        "constants": _field_names(AtomicConstants, exclude=("branch_to_D",)),
    },
}
COMMON_KEYS = {"kind", "seed"}
SUBCOMMAND_KINDS = {
    "simulate": ("repump",),
    "fit": ("fit",),
    "rb": ("irb", "population_decay"),
    "budget": ("budget",),
    "pulse": ("pulse_scan",),
}
DEFAULT_PRESETS = {
    "simulate": "fig2",
    "fit": "fig2_fit",
    "rb": "fig3",
    "budget": "budget_n7",
    "pulse": "pulse_edges",
}


def _construct(node, path, lines):
    """Plain Python value from a YAML node, recording 1-based key lines by path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k))
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", line=k.start_mark.line + 1)
            lines[path + (key,)] = k.start_mark.line + 1
            out[key] = _construct(v, path + (key,), lines)
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


@dataclasses.dataclass
class ExperimentConfig:
    kind: str
    blocks: dict
    seed: int = 0
    source: str = "<config>"
    lines: dict = dataclasses.field(default_factory=dict, repr=False)

    def block(self, name):
        return dict(self.blocks.get(name) or {})

    def line(self, *path):
        return self.lines.get(tuple(path))

    def error(self, message, *path):
        return ConfigError(message, self.source, self.line(*path))

    def resolved(self):
        return {"kind": self.kind, "seed": self.seed, **self.blocks}

    def digest(self):
        canon = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def build(self, cls, block, **extra):
        """Instantiate dataclass ``cls`` from ``block``, anchoring failures to its line."""
        try:
            return cls(**self.block(block), **extra)
        except (TypeError, ValueError) as exc:
            raise self.error(f"invalid '{block}' block: {exc}", block) from None


def parse_config(text, source="<config>"):
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed config: {getattr(exc, 'problem', exc)}", source,
                          mark.line + 1 if mark else None) from None
    lines = {}
    if root is None or not isinstance(root, yaml.MappingNode):
        raise ConfigError("config must be a mapping", source, 1)
    data = _construct(root, (), lines)
    kind = data.get("kind")
    if kind not in SCHEMAS:
        raise ConfigError(f"'kind' must be one of {sorted(SCHEMAS)}, got {kind!r}", source,
                          lines.get(("kind",), 1))
    schema = SCHEMAS[kind]
    for key, value in data.items():
        if key in COMMON_KEYS:
            continue
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for kind {kind!r}", source, lines[(key,)])
        allowed = schema[key]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"'{key}' must be a mapping", source, lines[(key,)])
        for sub in value:
            if sub not in allowed:
                raise ConfigError(
                    f"unknown key {sub!r} in '{key}' (allowed: {', '.join(sorted(allowed))})",
                    source, lines[(key, sub)],
                )
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", source, lines.get(("seed",)))
    blocks = {k: v for k, v in data.items() if k not in COMMON_KEYS}
    return ExperimentConfig(kind, blocks, seed, source, lines)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def preset_names():
    files = resources.files("leakrepump").joinpath("presets").iterdir()
    return sorted(f.name[: -len(".yaml")] for f in files if f.name.endswith(".yaml"))


def load_preset(name):
    res = resources.files("leakrepump").joinpath(f"presets/{name}.yaml")
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_config(res.read_text(), f"preset:{name}")
