"""Run configuration: a JSON file of named sections with strict key checking."""
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .envs import EnvSpec
from .errors import ConfigError
from .generator import GeneratorHyper
from .irl import IRLHyper
from .policy import PolicyHyper
from .scans import ScanConfig


@dataclass
class CollectSection:
    episodes: int = 64


@dataclass
class IRLSection(IRLHyper):
    features: str = "one_hot"
    height: int = 4
    width: int = 4


@dataclass
class EvalSection:
    episodes: int = 1000
    max_steps: int = None
    policy_mode: str = "greedy"
    generator_greedy: bool = True


@dataclass
class RunConfig:
    env: EnvSpec = field(default_factory=EnvSpec)
    scan: ScanConfig = field(default_factory=ScanConfig)
    collect: CollectSection = field(default_factory=CollectSection)
    generator: GeneratorHyper = field(default_factory=GeneratorHyper)
    policy: PolicyHyper = field(default_factory=PolicyHyper)
    irl: IRLSection = field(default_factory=IRLSection)
    eval: EvalSection = field(default_factory=EvalSection)
    seed: int = 0
    output_dir: str = "runs/default"

    def to_dict(self):
        d = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (EnvSpec, ScanConfig)):
                d[f.name] = value.to_dict()
            elif hasattr(value, "__dataclass_fields__"):
                d[f.name] = asdict(value)
            else:
                d[f.name] = value
        return d


SECTIONS = {
    "env": EnvSpec,
    "scan": ScanConfig,
    "collect": CollectSection,
    "generator": GeneratorHyper,
    "policy": PolicyHyper,
    "irl": IRLSection,
    "eval": EvalSection,
}


def _section(name, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {unknown}")
    if cls is EnvSpec:
        return EnvSpec.from_dict(values)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad values in section {name!r}: {exc}") from None


def config_from_dict(d):
    unknown = sorted(set(d) - set(SECTIONS) - {"seed", "output_dir"})
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {unknown}")
    cfg = RunConfig()
    for name, cls in SECTIONS.items():
        if name in d:
            setattr(cfg, name, _section(name, cls, d[name]))
    if "seed" in d:
        if not isinstance(d["seed"], int) or not 0 <= d["seed"] < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        cfg.seed = d["seed"]
    if "output_dir" in d:
        cfg.output_dir = str(d["output_dir"])
    return cfg


def load_config(path=None):
    if path is None:
        return RunConfig()
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(d)
