"""
Run configuration: every section, resolved from defaults, a config file and
command-line overrides (in increasing precedence).
"""

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Type, Union

from .backends.adapter import AdapterEndpoint
from .controller.feedback import ControllerConfig
from .core.section import ConfigSection
from .core.var import ConfigVar
from .errors import ConfigError, IoError
from .grounding.score import GroundingConfig
from .pipeline.frame import LoopConfig, PipelineConfig
from .simworld.config import SimWorldConfig
from .utils.config_file import read_config_file, render_config_text

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "config.snapshot"


class BackendKind(str, enum.Enum):
    SIM = "sim"
    ADAPTER = "adapter"


class World(str, enum.Enum):
    DEFAULT = "default"
    CALIBRATED = "calibrated"


class RunConfig(ConfigSection):
    frames: int = ConfigVar(default=2000, help="frames per run")
    repetitions: int = ConfigVar(default=3, help="seeded runs per configuration")
    backend: BackendKind = ConfigVar(default=BackendKind.SIM, help="sim | adapter")
    world: World = ConfigVar(default=World.CALIBRATED, help="simulator base world: default | calibrated")
    log_level: str = ConfigVar(default="WARNING", help="root logger level")
    tau_grid: Tuple[float, ...] = ConfigVar(default=(0.3, 0.4, 0.5, 0.6, 0.7), help="thresholds of the sensitivity sweep")

    def validate(self) -> None:
        if self.frames < 0:
            raise ConfigError(self.key_of("frames"), f"must not be negative, got {self.frames}")
        if self.repetitions < 1:
            raise ConfigError(self.key_of("repetitions"), f"must be at least 1, got {self.repetitions}")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(self.key_of("log_level"), f"unknown level {self.log_level!r}")
        if len(self.tau_grid) < 3 or any(b <= a for a, b in zip(self.tau_grid, self.tau_grid[1:])):
            raise ConfigError(self.key_of("tau_grid"), f"need at least 3 ascending thresholds, got {self.tau_grid}")
        if self.tau_grid[0] <= 0.0 or self.tau_grid[-1] >= 1.0:
            raise ConfigError(self.key_of("tau_grid"), f"thresholds must lie strictly inside (0, 1), got {self.tau_grid}")


SECTIONS: Tuple[Type[ConfigSection], ...] = (
    RunConfig,
    ControllerConfig,
    GroundingConfig,
    PipelineConfig,
    SimWorldConfig,
    AdapterEndpoint,
)


@dataclass(frozen=True)
class Settings:
    run: RunConfig = field(default_factory=RunConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sim: SimWorldConfig = field(default_factory=SimWorldConfig.calibrated)
    adapter: AdapterEndpoint = field(default_factory=AdapterEndpoint)

    def sections(self) -> Tuple[ConfigSection, ...]:
        return (self.run, self.controller, self.grounding, self.pipeline, self.sim, self.adapter)

    def loop_config(self) -> LoopConfig:
        return LoopConfig(pipeline=self.pipeline, grounding=self.grounding, controller=self.controller)

    def with_seed(self, seed: int) -> "Settings":
        return Settings(self.run, self.controller, self.grounding, self.pipeline, self.sim.replace(seed=seed), self.adapter)

    def dump_text(self) -> Dict[str, str]:
        values = {}
        for section in self.sections():
            values.update(section.dump_text())
        return values


def known_keys() -> Dict[str, Type[ConfigSection]]:
    """Flat key -> owning section, over every section."""

    owners = {}
    for section in SECTIONS:
        for key in section.keys():
            owners[key] = section
    return owners


def load_run_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, str]] = None,
) -> Settings:
    """
    Resolves the settings of a run.

    :param config_path: (Optional) ``key = value`` file.
    :param overrides: (Optional) Flat key -> text values from the command line; they win over the file.
    :raises ConfigError: On unknown keys or invalid values, naming the key.
    """

    raw: Dict[str, str] = {}
    if config_path is not None:
        raw.update(read_config_file(config_path))
    raw.update(overrides or {})

    owners = known_keys()
    for key in raw:
        if key not in owners:
            raise ConfigError(key, "unknown configuration key")

    run = RunConfig.from_text(raw)
    world = SimWorldConfig.calibrated() if run.world is World.CALIBRATED else SimWorldConfig()

    settings = Settings(
        run=run,
        controller=ControllerConfig.from_text(raw),
        grounding=GroundingConfig.from_text(raw),
        pipeline=PipelineConfig.from_text(raw),
        sim=SimWorldConfig.from_text(raw, base=world),
        adapter=AdapterEndpoint.from_text(raw),
    )

    logger.debug(f"Resolved {len(raw)} explicit key(s) from {config_path or 'defaults'}")
    return settings


def write_snapshot(settings: Settings, directory: Union[str, Path]) -> Path:
    """Writes every resolved key next to a run's outputs; loading it reproduces the run."""

    path = Path(directory) / SNAPSHOT_NAME
    text = render_config_text(settings.dump_text(), header="Resolved groundloop configuration")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(path, e)

    return path
