import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from config.settings import (
    DEFAULT_ENGINE,
    DEFAULT_PARALLELISM,
    DEFAULT_RUN_DIR,
    DEFAULT_TIMEOUT,
    DR_MEMORY_LIMIT,
    ENUMERATION_LIMIT,
    RUN_CONFIG,
)
from planner.cost_model import CostMode, CostModel
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

INTERNAL_ENGINE = "internal"
CONFIG_STYLES = ("none", "rdfizer", "morph")

_default_config: str | None = RUN_CONFIG


@dataclass(frozen=True)
class EngineProfile:
    """An external [R2]RML engine: how to call it on one group mapping file."""

    name: str
    command_template: str
    # None inherits the run timeout
    timeout_seconds: int | None = None
    config_style: str = "none"

    @property
    def uses_config_file(self) -> bool:
        return "{config_file}" in self.command_template

    def validate(self) -> None:
        if not self.uses_config_file:
            for placeholder in ("{mapping_file}", "{output_file}"):
                if placeholder not in self.command_template:
                    raise ConfigError(f"Engine {self.name}: command_template lacks {placeholder}")
        elif self.config_style == "none":
            raise ConfigError(f"Engine {self.name} uses {{config_file}} but declares no config_style")
        if self.config_style not in CONFIG_STYLES:
            raise ConfigError(f"Engine {self.name}: config_style must be one of {', '.join(CONFIG_STYLES)}")
        if self.timeout_seconds is not None and self.timeout_seconds <= 0:
            raise ConfigError(f"Engine {self.name}: timeout_seconds must be positive")


BUILTIN_ENGINES = {
    "rmlmapper": EngineProfile(
        "rmlmapper", "java -jar rmlmapper.jar -m {mapping_file} -o {output_file} -s nquads"
    ),
    "rocketrml": EngineProfile("rocketrml", "node rocketrml.js {mapping_file} {output_file}"),
    "morph-kgc": EngineProfile("morph-kgc", "python3 -m morph_kgc {config_file}", config_style="morph"),
    "sdm-rdfizer": EngineProfile("sdm-rdfizer", "python3 -m rdfizer -c {config_file}", config_style="rdfizer"),
}


@dataclass(frozen=True)
class RunConfig:
    mapping_paths: tuple[str, ...] = ()
    source_root: str | None = None
    engine: str = DEFAULT_ENGINE
    output: str | None = None
    run_dir: str = DEFAULT_RUN_DIR
    timeout_seconds: int = DEFAULT_TIMEOUT
    # None means min(#leaves, logical CPUs)
    parallelism: int | None = DEFAULT_PARALLELISM or None
    compress: bool = False
    cost_mode: CostMode = CostMode.ABSTRACT
    seed: int = 0
    no_partition: bool = False
    row_cost: float = 1.0
    join_cost: float = 1.0
    dedup_cost: float = 1.0
    concat_cost: float | None = None
    measurements: Mapping[str, float] = field(default_factory=dict)
    dr_memory_limit: int = DR_MEMORY_LIMIT
    enumeration_limit: int = ENUMERATION_LIMIT
    leaf_timeouts: Mapping[str, float] = field(default_factory=dict)
    engines: Mapping[str, EngineProfile] = field(default_factory=lambda: dict(BUILTIN_ENGINES))

    def __post_init__(self):
        if self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be positive")
        if self.parallelism is not None and self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        for name in ("row_cost", "join_cost", "dedup_cost", "concat_cost"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.dr_memory_limit < 1:
            raise ConfigError("dr_memory_limit must be at least 1")
        if self.enumeration_limit < 1:
            raise ConfigError("enumeration_limit must be at least 1")
        for profile in self.engines.values():
            profile.validate()

    @property
    def output_path(self) -> str:
        return self.output or str(Path(self.run_dir) / "kg.nt")

    @property
    def internal(self) -> bool:
        return self.engine == INTERNAL_ENGINE

    def engine_profile(self, name: str | None = None) -> EngineProfile:
        name = name or self.engine
        profile = self.engines.get(name)
        if profile is None:
            known = ", ".join(sorted(self.engines))
            raise ConfigError(f"Unknown engine profile {name!r}; known profiles: {known}")
        if profile.timeout_seconds is None:
            profile = replace(profile, timeout_seconds=self.timeout_seconds)
        return profile

    def cost_model(self) -> CostModel:
        if self.cost_mode is CostMode.ABSTRACT:
            model = CostModel.abstract_ops(row_cost=self.row_cost, join_cost=self.join_cost, dedup_cost=self.dedup_cost)
            return model if self.concat_cost is None else replace(model, concat_cost=self.concat_cost)
        return CostModel(
            mode=CostMode.MEASURED,
            dedup_cost=self.dedup_cost,
            concat_cost=1.0 if self.concat_cost is None else self.concat_cost,
            measurements=dict(self.measurements),
        )


_RUN_KEYS = {
    "mapping_paths", "source_root", "engine", "output", "run_dir", "timeout_seconds",
    "parallelism", "compress", "seed", "no_partition", "dr_memory_limit", "enumeration_limit",
    "leaf_timeouts",
}
_COST_KEYS = {"mode", "row_cost", "join_cost", "dedup_cost", "concat_cost", "measurements"}
_ENGINE_KEYS = {"command_template", "timeout_seconds", "config_style"}
_PATH_KEYS = ("source_root", "output", "run_dir")


def _check_keys(section: str, table: Mapping[str, Any], allowed: set[str]) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def load_measurements(path: str | Path) -> dict[str, float]:
    """Group wall times from a prior run's report.json (or a plain {group: seconds} object)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read measurements {path}: {exc}") from exc
    if isinstance(data, dict) and "leaf_seconds" in data:
        data = data["leaf_seconds"]
    if not isinstance(data, dict):
        raise ConfigError(f"Measurements {path} must map group ids to seconds")
    return {str(k): float(v) for k, v in data.items()}


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flatten a TOML run configuration into RunConfig keyword arguments."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            document = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"Invalid TOML in {path}: {exc}") from exc

    unknown = set(document) - {"run", "cost", "engine"}
    if unknown:
        raise ConfigError(f"Unknown section(s) in {path}: {', '.join(sorted(unknown))}")
    base = path.resolve().parent
    values: dict[str, Any] = {}

    run = document.get("run", {})
    _check_keys("run", run, _RUN_KEYS)
    values.update(run)
    if "mapping_paths" in values:
        paths = values["mapping_paths"]
        values["mapping_paths"] = tuple(str(base / p) for p in ([paths] if isinstance(paths, str) else paths))
    for key in _PATH_KEYS:
        if values.get(key) is not None:
            values[key] = str(base / values[key])

    cost = dict(document.get("cost", {}))
    _check_keys("cost", cost, _COST_KEYS)
    if "mode" in cost:
        values["cost_mode"] = CostMode.parse(cost.pop("mode"))
    if "measurements" in cost:
        values["measurements"] = load_measurements(base / cost.pop("measurements"))
    values.update(cost)

    engines = dict(BUILTIN_ENGINES)
    for name, table in document.get("engine", {}).items():
        _check_keys(f"engine.{name}", table, _ENGINE_KEYS)
        inherited = engines.get(name)
        if inherited is None and "command_template" not in table:
            raise ConfigError(f"[engine.{name}] needs a command_template")
        engines[name] = replace(inherited, **table) if inherited else EngineProfile(name, **table)
    values["engines"] = engines
    return values


def build_run_config(config_path: str | Path | None = None, **overrides) -> RunConfig:
    """File values override environment defaults; non-None overrides (CLI flags) override both."""
    config_path = config_path or _default_config
    values = read_config_file(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "cost_mode" in values and not isinstance(values["cost_mode"], CostMode):
        values["cost_mode"] = CostMode.parse(values["cost_mode"])
    if "mapping_paths" in values:
        values["mapping_paths"] = tuple(values["mapping_paths"])
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"Unknown run option(s): {', '.join(sorted(unknown))}")
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if not config.internal:
        config.engine_profile()
    logger.debug("run config: engine=%s run_dir=%s", config.engine, config.run_dir)
    return config


def use_default_config(path: str | Path) -> RunConfig:
    """Make `path` the configuration of every later build without an explicit file."""
    global _default_config
    config = build_run_config(path)
    _default_config = str(Path(path).resolve())
    return config
